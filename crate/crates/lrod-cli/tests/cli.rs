//! End-to-end tests of the `lrod` binary: pipeline happy paths, exit codes,
//! artifact shapes, and byte-level reproducibility.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn lrod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lrod"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Small book with all three archetypes; seeds S2 and S3 with enough accounts
/// for every fit to converge.
const GEN_CFG: &str = "n_accounts = 150\nterm = 120\nwindow_min = 24\nwindow_max = 72\n";

fn write_cfg(dir: &Path, text: &str) -> String {
    let path = dir.join("gen.cfg");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn generate(dir: &Path, cfg: &str, seed: u64) -> String {
    let cfg_path = write_cfg(dir, cfg);
    let out = lrod(&[
        "generate",
        "--config",
        &cfg_path,
        "--seed",
        &seed.to_string(),
        "--out-dir",
        &dir.display().to_string(),
    ]);
    assert_exit(&out, 0);
    dir.join("portfolio.csv").display().to_string()
}

#[test]
fn generate_writes_portfolio_and_manifest() {
    let dir = TempDir::new().unwrap();
    let csv = generate(dir.path(), GEN_CFG, 7);
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("account_id,period,instalment,receipt,balance,annual_rate"));
    let ids: std::collections::HashSet<&str> =
        text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ids.len(), 150);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("generate_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "generate");
    assert_eq!(manifest["seed"], 7);
    let outputs: Vec<&str> =
        manifest["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(outputs.contains(&"portfolio.csv"));
    assert!(outputs.contains(&"generate_manifest.json"));
    assert!(manifest["input_digest"].as_str().unwrap().len() == 64);
}

#[test]
fn generate_is_deterministic_in_seed() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let c = TempDir::new().unwrap();
    let csv_a = fs::read(generate(a.path(), GEN_CFG, 7)).unwrap();
    let csv_b = fs::read(generate(b.path(), GEN_CFG, 7)).unwrap();
    let csv_c = fs::read(generate(c.path(), GEN_CFG, 8)).unwrap();
    assert_eq!(csv_a, csv_b);
    assert_ne!(csv_a, csv_c);
}

#[test]
fn calibrate_then_optimise_covers_the_grid() {
    let dir = TempDir::new().unwrap();
    let csv = generate(dir.path(), GEN_CFG, 7);
    let fits = dir.path().join("fits");
    let out = lrod(&[
        "calibrate",
        "--input",
        &csv,
        "--term",
        "120",
        "--out-dir",
        &fits.display().to_string(),
    ]);
    assert_exit(&out, 0);
    for name in [
        "params_random_s1.json",
        "params_random_s2.json",
        "params_random_s3.json",
        "params_markov_s2.json",
        "params_markov_s3.json",
        "maxima_s1.txt",
        "maxima_s2.txt",
        "maxima_s3.txt",
    ] {
        assert!(fits.join(name).exists(), "missing {name}");
    }
    // The full book carries no chain fit of its own.
    assert!(!fits.join("params_markov_s1.json").exists());

    let sweep = dir.path().join("sweep");
    let out = lrod(&[
        "optimise",
        "--input",
        &csv,
        "--term",
        "120",
        "--grid",
        "1..25",
        "--seed",
        "11",
        "--out-dir",
        &sweep.display().to_string(),
    ]);
    assert_exit(&out, 0);
    for tech in ["random", "markov"] {
        let optima = fs::read_to_string(sweep.join(format!("optima_{tech}.csv"))).unwrap();
        assert_eq!(optima.lines().count(), 10, "header plus nine cells");
        let grid: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(sweep.join(format!("grid_{tech}.json"))).unwrap())
                .unwrap();
        let cells = grid.as_array().unwrap();
        assert_eq!(cells.len(), 9);
        for cell in cells {
            assert_eq!(cell["status"], "ok");
            let d = cell["optimal_threshold"].as_u64().unwrap();
            assert!((1..=25).contains(&d));
        }
        for i in 1..=3 {
            for j in 1..=3 {
                assert!(sweep.join(format!("curve_{tech}_s{i}{j}.csv")).exists());
                assert!(sweep.join(format!("curve_{tech}_s{i}{j}.json")).exists());
            }
        }
    }
}

#[test]
fn curve_rate_column_is_loss_over_denominator() {
    let dir = TempDir::new().unwrap();
    let csv = generate(dir.path(), GEN_CFG, 7);
    let sweep = dir.path().join("sweep");
    let out = lrod(&[
        "optimise",
        "--input",
        &csv,
        "--term",
        "120",
        "--technique",
        "random",
        "--scenario",
        "1,1",
        "--grid",
        "1..10",
        "--seed",
        "11",
        "--out-dir",
        &sweep.display().to_string(),
    ]);
    assert_exit(&out, 0);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(sweep.join("curve_random_s11.json")).unwrap())
            .unwrap();
    let denominator = json["denominator"].as_f64().unwrap();
    assert!(denominator > 0.0);
    let text = fs::read_to_string(sweep.join("curve_random_s11.csv")).unwrap();
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let mut fields = line.split(',');
        let _d: u32 = fields.next().unwrap().parse().unwrap();
        let loss: f64 = fields.next().unwrap().parse().unwrap();
        let rate: f64 = fields.next().unwrap().parse().unwrap();
        // Shortest-round-trip printing: the quotient must survive the CSV exactly.
        assert_eq!(rate, loss / denominator);
        rows += 1;
    }
    assert_eq!(rows, 10);
}

#[test]
fn optimise_accepts_pretrained_params() {
    let dir = TempDir::new().unwrap();
    let csv = generate(dir.path(), GEN_CFG, 7);
    let fits = dir.path().join("fits");
    assert_exit(
        &lrod(&["calibrate", "--input", &csv, "--term", "120", "--out-dir", &fits.display().to_string()]),
        0,
    );
    let params = fits.join("params_markov_s2.json").display().to_string();
    let sweep = dir.path().join("sweep");
    let out = lrod(&[
        "optimise",
        "--input",
        &csv,
        "--term",
        "120",
        "--technique",
        "markov",
        "--params",
        &params,
        "--scenario",
        "1,1",
        "--grid",
        "1..15",
        "--seed",
        "11",
        "--out-dir",
        &sweep.display().to_string(),
    ]);
    assert_exit(&out, 0);
    assert!(sweep.join("curve_markov_sx1.csv").exists());

    // The same file cannot drive both techniques, nor the other one.
    let both = lrod(&[
        "optimise", "--input", &csv, "--term", "120", "--params", &params,
        "--grid", "1..15", "--out-dir", &sweep.display().to_string(),
    ]);
    assert_exit(&both, 2);
    let mismatch = lrod(&[
        "optimise", "--input", &csv, "--term", "120", "--technique", "random",
        "--params", &params, "--grid", "1..15", "--out-dir", &sweep.display().to_string(),
    ]);
    assert_exit(&mismatch, 2);
}

#[test]
fn montecarlo_certain_payer_has_zero_width_bands() {
    let dir = TempDir::new().unwrap();
    let csv = generate(dir.path(), GEN_CFG, 7);
    let params = dir.path().join("certain.json");
    fs::write(&params, "{\"technique\":\"random\",\"b\":1.0,\"dist\":null}\n").unwrap();
    let mc = dir.path().join("mc");
    let out = lrod(&[
        "montecarlo",
        "--input",
        &csv,
        "--term",
        "120",
        "--params",
        &params.display().to_string(),
        "--trials",
        "8",
        "--grid",
        "1..12",
        "--seed",
        "3",
        "--out-dir",
        &mc.display().to_string(),
    ]);
    assert_exit(&out, 0);
    let text = fs::read_to_string(mc.join("mc_random.csv")).unwrap();
    assert!(text.starts_with("d,loss,loss_rate,mean,var,ci_low,ci_high"));
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        // A sure payer makes every trial identical: no variance, collapsed bands.
        assert_eq!(fields[4], "0", "var in {line}");
        assert_eq!(fields[3], fields[5], "ci_low in {line}");
        assert_eq!(fields[3], fields[6], "ci_high in {line}");
        assert_eq!(fields[2], fields[3], "rate equals mean in {line}");
        rows += 1;
    }
    assert_eq!(rows, 12);
}

#[test]
fn montecarlo_needs_at_least_two_trials() {
    let dir = TempDir::new().unwrap();
    let csv = generate(dir.path(), GEN_CFG, 7);
    let params = dir.path().join("certain.json");
    fs::write(&params, "{\"technique\":\"random\",\"b\":1.0,\"dist\":null}\n").unwrap();
    let out = lrod(&[
        "montecarlo", "--input", &csv, "--term", "120",
        "--params", &params.display().to_string(), "--trials", "1",
        "--out-dir", &dir.path().join("mc").display().to_string(),
    ]);
    assert_exit(&out, 2);
}

#[test]
fn malformed_flags_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    let csv = generate(dir.path(), GEN_CFG, 7);
    let out_dir = dir.path().join("o").display().to_string();
    for args in [
        vec!["optimise", "--input", &csv, "--term", "120", "--grid", "5..2", "--out-dir", &out_dir],
        vec!["optimise", "--input", &csv, "--term", "120", "--grid", "abc", "--out-dir", &out_dir],
        vec!["optimise", "--input", &csv, "--term", "120", "--scenario", "4,1", "--out-dir", &out_dir],
        vec!["optimise", "--input", &csv, "--term", "120", "--scenario", "1", "--out-dir", &out_dir],
        vec!["appendix-static", "--input", &csv, "--term", "120", "--rates", "1.5", "--out-dir", &out_dir],
        vec!["appendix-static", "--input", &csv, "--term", "120", "--rates", "abc", "--out-dir", &out_dir],
    ] {
        let out = lrod(&args);
        assert_exit(&out, 2);
    }
}

#[test]
fn missing_and_malformed_inputs_split_exit_codes() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("o").display().to_string();
    // Unreadable path: runtime failure.
    let missing = lrod(&[
        "calibrate", "--input", "/nonexistent/book.csv", "--out-dir", &out_dir,
    ]);
    assert_exit(&missing, 1);
    // Readable but not the expected schema: the caller's input is wrong.
    let junk = dir.path().join("junk.csv");
    fs::write(&junk, "who,what\n1,2\n").unwrap();
    let malformed = lrod(&[
        "calibrate", "--input", &junk.display().to_string(), "--out-dir", &out_dir,
    ]);
    assert_exit(&malformed, 2);
}

#[test]
fn steady_only_book_skips_and_fails_delinquent_cells() {
    let dir = TempDir::new().unwrap();
    let cfg = "n_accounts = 40\nterm = 60\nwindow_min = 24\nwindow_max = 48\n\
               steady_weight = 1.0\nintermittent_weight = 0.0\ndeteriorating_weight = 0.0\n\
               writeoff_propensity = 0.0\n";
    let csv = generate(dir.path(), cfg, 5);

    let fits = dir.path().join("fits");
    let out = lrod(&[
        "calibrate", "--input", &csv, "--term", "60", "--out-dir", &fits.display().to_string(),
    ]);
    // Nothing to fit on the empty samples is a warning, not a failure.
    assert_exit(&out, 0);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("S2"), "stderr: {stderr}");
    assert!(stderr.contains("S3"), "stderr: {stderr}");
    assert!(fits.join("params_random_s1.json").exists());
    assert!(!fits.join("params_random_s2.json").exists());

    // A sweep that asks for those cells reports them and exits nonzero.
    let sweep = dir.path().join("sweep");
    let out = lrod(&[
        "optimise", "--input", &csv, "--term", "60", "--technique", "random",
        "--grid", "1..10", "--out-dir", &sweep.display().to_string(),
    ]);
    assert_exit(&out, 1);
    let grid: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(sweep.join("grid_random.json")).unwrap()).unwrap();
    let cells = grid.as_array().unwrap();
    assert_eq!(cells.len(), 9);
    let ok = cells.iter().filter(|c| c["status"] == "ok").count();
    // Only the cell that trains and optimises on the full book can succeed.
    assert_eq!(ok, 1);
    assert!(sweep.join("curve_random_s11.csv").exists());

    // A selection that avoids the empty samples still succeeds outright.
    let out = lrod(&[
        "optimise", "--input", &csv, "--term", "60", "--technique", "random",
        "--scenario", "1,1", "--grid", "1..10",
        "--out-dir", &dir.path().join("s11").display().to_string(),
    ]);
    assert_exit(&out, 0);
}

#[test]
fn appendix_static_writes_one_curve_per_rate() {
    let dir = TempDir::new().unwrap();
    let csv = generate(dir.path(), GEN_CFG, 7);
    let out_dir = dir.path().join("static");
    let out = lrod(&[
        "appendix-static", "--input", &csv, "--term", "120",
        "--grid", "1..20", "--out-dir", &out_dir.display().to_string(),
    ]);
    assert_exit(&out, 0);
    for name in ["static_0p50.csv", "static_0p75.csv", "static_1p00.csv"] {
        let text = fs::read_to_string(out_dir.join(name)).unwrap();
        assert_eq!(text.lines().count(), 21, "{name}");
    }
}

#[test]
fn validate_writes_a_parseable_report() {
    let dir = TempDir::new().unwrap();
    let csv = generate(dir.path(), GEN_CFG, 7);
    let out_dir = dir.path().join("val");
    let out = lrod(&[
        "validate", "--input", &csv, "--term", "120", "--technique", "random",
        "--folds", "4", "--seed", "5", "--out-dir", &out_dir.display().to_string(),
    ]);
    assert_exit(&out, 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("validation_random.json")).unwrap())
            .unwrap();
    assert_eq!(report["technique"], "random");
    assert!(report["par_forecast"].as_f64().unwrap().is_finite());
    assert!(report["par_actual"].as_f64().unwrap().is_finite());
    assert_eq!(report["folds"], 4);
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("PAR (forecast)"), "stdout: {table}");
}

#[test]
fn artifacts_do_not_depend_on_thread_count() {
    let dir = TempDir::new().unwrap();
    let csv = generate(dir.path(), GEN_CFG, 7);
    let mut curves = Vec::new();
    for threads in ["1", "4"] {
        let sweep = dir.path().join(format!("sweep_{threads}"));
        let out = lrod(&[
            "optimise", "--input", &csv, "--term", "120", "--technique", "markov",
            "--grid", "1..20", "--seed", "11", "--threads", threads,
            "--out-dir", &sweep.display().to_string(),
        ]);
        assert_exit(&out, 0);
        curves.push(fs::read(sweep.join("curve_markov_s22.csv")).unwrap());
    }
    assert_eq!(curves[0], curves[1]);
}
