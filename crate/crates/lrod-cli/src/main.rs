//! Command-line driver: generate or ingest a portfolio, calibrate the forecasting
//! techniques, sweep recovery thresholds, and emit plot-ready CSV/JSON artifacts.
//! Every run writes a manifest naming its inputs, digest, seed, and outputs, and is
//! bit-reproducible given the same inputs, seed, and tool version, regardless of
//! thread count.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use lrod::complete::Forecaster;
use lrod::delinquency::DEFAULT_PAYMENT_THRESHOLD;
use lrod::error::Error;
use lrod::loss::{
    monte_carlo_optimise, run_scenario_matrix, static_rate_loss_curve, train_forecaster,
    LossConfig, LossCurve, Technique,
};
use lrod::params::{load_params, save_params};
use lrod::portfolio::{
    generate_synthetic_portfolio, load_portfolio, partition_samples, write_portfolio, CsvSchema,
    GeneratorConfig, Portfolio,
};
use lrod::random_defaults::delinquency_maxima;
use lrod::validate::cross_validate;

#[derive(Parser)]
#[command(name = "lrod", version, about = "Recovery-threshold optimisation for censored loan portfolios")]
struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic portfolio CSV from a key=value config.
    Generate(GenerateArgs),
    /// Partition a portfolio and train both techniques per sample.
    Calibrate(CalibrateArgs),
    /// Sweep loss over thresholds for train/optimise scenario cells.
    Optimise(OptimiseArgs),
    /// Repeat the sweep over many seeded trials and report CI bands.
    Montecarlo(MontecarloArgs),
    /// Static-rate sweep of the untreated (censored) portfolio.
    AppendixStatic(AppendixStaticArgs),
    /// k-fold cross-validation of forecast quality.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Key=value generator config; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Portfolio CSV.
    #[arg(long)]
    input: PathBuf,
    /// Contractual term backing the CSV schema.
    #[arg(long, default_value_t = 240)]
    term: u32,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct OptimiseArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 240)]
    term: u32,
    #[arg(long, value_enum, default_value_t = TechniqueArg::Both)]
    technique: TechniqueArg,
    /// Cell selection: "i,j" trains on sample i and optimises sample j; "all" runs
    /// the full 3x3 grid.
    #[arg(long, default_value = "all")]
    scenario: String,
    /// Inclusive threshold range, e.g. 1..60.
    #[arg(long, default_value = "1..60")]
    grid: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Pre-trained parameter JSON; skips training and applies to every requested
    /// cell (cells are labelled sxJ). Requires a single --technique matching the
    /// file; with --scenario i,j only j is used.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct MontecarloArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 240)]
    term: u32,
    /// Pre-trained parameter JSON (from calibrate).
    #[arg(long)]
    params: PathBuf,
    #[arg(long, default_value_t = 500)]
    trials: u64,
    #[arg(long, default_value = "1..60")]
    grid: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct AppendixStaticArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 240)]
    term: u32,
    /// Comma-separated flat loss rates in [0, 1].
    #[arg(long, default_value = "0.5,0.75,1.0")]
    rates: String,
    #[arg(long, default_value = "1..60")]
    grid: String,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 240)]
    term: u32,
    #[arg(long, value_enum, default_value_t = TechniqueArg::Both)]
    technique: TechniqueArg,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TechniqueArg {
    Random,
    Markov,
    Both,
}

impl TechniqueArg {
    fn list(self) -> Vec<Technique> {
        match self {
            TechniqueArg::Random => vec![Technique::Random],
            TechniqueArg::Markov => vec![Technique::Markov],
            TechniqueArg::Both => vec![Technique::Random, Technique::Markov],
        }
    }
}

/// Failure carrying its exit code: 2 for usage/config problems, 1 for runtime ones.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        match e {
            // Bad configs and malformed input files are the caller's to fix.
            Error::Config(_) | Error::Schema(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot size thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Optimise(args) => cmd_optimise(args),
        Command::Montecarlo(args) => cmd_montecarlo(args),
        Command::AppendixStatic(args) => cmd_appendix_static(args),
        Command::Validate(args) => cmd_validate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    config: Option<String>,
    seed: Option<u64>,
    input_digest: Option<String>,
    outputs: Vec<String>,
    tool_version: String,
    wall_clock_ms: u128,
}

/// Collects output paths as they are written and renders the manifest.
struct Run {
    command: &'static str,
    out_dir: PathBuf,
    started: Instant,
    outputs: Vec<String>,
}

impl Run {
    fn new(command: &'static str, out_dir: &Path) -> Result<Run, Failure> {
        fs::create_dir_all(out_dir)
            .map_err(|e| Failure::Runtime(format!("{}: {e}", out_dir.display())))?;
        Ok(Run {
            command,
            out_dir: out_dir.to_path_buf(),
            started: Instant::now(),
            outputs: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf, Failure> {
        let path = self.out_dir.join(name);
        fs::write(&path, contents)
            .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
        self.outputs.push(name.to_string());
        Ok(path)
    }

    fn track(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    fn finish(
        mut self,
        config: Option<String>,
        seed: Option<u64>,
        input_digest: Option<String>,
    ) -> CmdResult {
        let manifest_name = format!("{}_manifest.json", self.command);
        self.outputs.push(manifest_name.clone());
        let manifest = RunManifest {
            command: self.command.to_string(),
            config,
            seed,
            input_digest,
            outputs: self.outputs,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_ms: self.started.elapsed().as_millis(),
        };
        let mut json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Failure::Runtime(format!("manifest: {e}")))?;
        json.push('\n');
        let path = self.out_dir.join(manifest_name);
        fs::write(&path, json).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        let _ = write!(hex, "{b:02x}");
    }
    hex
}

fn read_input(path: &Path, term: u32) -> Result<(Portfolio, String), Failure> {
    let bytes =
        fs::read(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    let digest = sha256_hex(&bytes);
    let schema = CsvSchema::with_term(term);
    let portfolio = load_portfolio(path, &schema)?;
    Ok((portfolio, digest))
}

/// Parse "lo..hi" as an inclusive threshold range.
fn parse_grid(spec: &str) -> Result<Vec<u32>, Failure> {
    let err = || Failure::Usage(format!("--grid expects lo..hi with 1 <= lo <= hi, got \"{spec}\""));
    let (lo, hi) = spec.split_once("..").ok_or_else(err)?;
    let lo: u32 = lo.trim().parse().map_err(|_| err())?;
    let hi: u32 = hi.trim().parse().map_err(|_| err())?;
    if lo < 1 || hi < lo {
        return Err(err());
    }
    Ok((lo..=hi).collect())
}

/// Parse "i,j" (1-based samples) or "all".
fn parse_scenario(spec: &str) -> Result<Option<(usize, usize)>, Failure> {
    if spec == "all" {
        return Ok(None);
    }
    let err = || Failure::Usage(format!("--scenario expects \"i,j\" with i,j in 1..=3 or \"all\", got \"{spec}\""));
    let (i, j) = spec.split_once(',').ok_or_else(err)?;
    let i: usize = i.trim().parse().map_err(|_| err())?;
    let j: usize = j.trim().parse().map_err(|_| err())?;
    if !(1..=3).contains(&i) || !(1..=3).contains(&j) {
        return Err(err());
    }
    Ok(Some((i, j)))
}

fn parse_rates(spec: &str) -> Result<Vec<f64>, Failure> {
    let mut rates = Vec::new();
    for part in spec.split(',') {
        let rate: f64 = part
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("--rates: \"{part}\" is not a number")))?;
        if !(0.0..=1.0).contains(&rate) {
            return Err(Failure::Usage(format!("--rates: {rate} outside [0, 1]")));
        }
        rates.push(rate);
    }
    if rates.is_empty() {
        return Err(Failure::Usage("--rates: empty list".into()));
    }
    Ok(rates)
}

fn curve_json(curve: &LossCurve) -> Result<String, Failure> {
    let mut json = serde_json::to_string_pretty(curve)
        .map_err(|e| Failure::Runtime(format!("serialize curve: {e}")))?;
    json.push('\n');
    Ok(json)
}

fn cmd_generate(args: GenerateArgs) -> CmdResult {
    let config_text = match &args.config {
        Some(path) => fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?,
        None => String::new(),
    };
    let cfg = GeneratorConfig::parse(&config_text)?;
    let portfolio = generate_synthetic_portfolio(&cfg, args.seed)?;
    let mut run = Run::new("generate", &args.out_dir)?;
    write_portfolio(&portfolio, &run.out_dir.join("portfolio.csv"))?;
    run.track("portfolio.csv");
    eprintln!("generated {} accounts -> portfolio.csv", portfolio.len());
    run.finish(
        args.config.map(|p| p.display().to_string()),
        Some(args.seed),
        Some(sha256_hex(config_text.as_bytes())),
    )
}

fn cmd_calibrate(args: CalibrateArgs) -> CmdResult {
    let (portfolio, digest) = read_input(&args.input, args.term)?;
    let partition = partition_samples(&portfolio)?;
    let mut run = Run::new("calibrate", &args.out_dir)?;
    let mut failures = Vec::new();

    for i in 1..=3usize {
        let sample = partition.sample(i).expect("index in 1..=3");
        if sample.is_empty() {
            // Only the delinquent samples can be empty; S1 is the whole book.
            eprintln!("warning: sample S{i} is empty, skipping its fits");
            continue;
        }
        // The chain technique is calibrated on the delinquent and write-off
        // samples; the full book adds no transition structure beyond theirs.
        let mut wanted = vec![Technique::Random];
        if i >= 2 {
            wanted.push(Technique::Markov);
        }
        for technique in wanted {
            match train_forecaster(technique, sample, i, DEFAULT_PAYMENT_THRESHOLD) {
                Ok(f) => {
                    let name = format!("params_{}_s{i}.json", technique.name());
                    save_params(&run.out_dir.join(&name), &f)?;
                    run.track(&name);
                }
                Err(e) => {
                    eprintln!("warning: {} fit on S{i} failed: {e}", technique.name());
                    failures.push(format!("{} S{i}: {e}", technique.name()));
                }
            }
        }

        let maxima = delinquency_maxima(sample, DEFAULT_PAYMENT_THRESHOLD)?;
        let mut text = String::new();
        for m in &maxima {
            let _ = writeln!(text, "{m}");
        }
        run.write(&format!("maxima_s{i}.txt"), &text)?;
    }
    run.finish(None, None, Some(digest))?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(format!("{} fit(s) failed: {}", failures.len(), failures.join("; "))))
    }
}

#[derive(Serialize)]
struct CellRecord {
    train: String,
    optimise: usize,
    file: Option<String>,
    status: String,
    optimal_threshold: Option<u32>,
    minimum_loss: Option<f64>,
    minimum_rate: Option<f64>,
}

fn cmd_optimise(args: OptimiseArgs) -> CmdResult {
    let grid = parse_grid(&args.grid)?;
    let selection = parse_scenario(&args.scenario)?;
    let techniques = args.technique.list();
    if args.params.is_some() && techniques.len() != 1 {
        return Err(Failure::Usage(
            "--params holds one technique's parameters; pass --technique random or markov".into(),
        ));
    }
    let (portfolio, digest) = read_input(&args.input, args.term)?;
    let partition = partition_samples(&portfolio)?;
    let cfg = LossConfig::with_grid(grid);
    let mut run = Run::new("optimise", &args.out_dir)?;
    let mut failures = Vec::new();

    for technique in techniques {
        let mut records = Vec::new();
        let mut optima = String::from("cell,d_star,min_loss,min_rate\n");

        let loaded: Option<Forecaster> = match &args.params {
            Some(path) => {
                let f = load_params(path)?;
                if f.name() != technique.name() {
                    return Err(Failure::Usage(format!(
                        "{} holds {} parameters but --technique is {}",
                        path.display(),
                        f.name(),
                        technique.name()
                    )));
                }
                Some(f)
            }
            None => None,
        };

        // With pre-trained parameters the training index is fixed by the file and
        // cells degenerate to (params, optimise-sample).
        let cells: Vec<(String, usize, Result<LossCurve, Error>)> = match &loaded {
            Some(f) => {
                let js: Vec<usize> = match selection {
                    Some((_, j)) => vec![j],
                    None => vec![1, 2, 3],
                };
                js.into_iter()
                    .map(|j| {
                        let sample = partition.sample(j).expect("index in 1..=3");
                        let outcome = if sample.is_empty() {
                            Err(Error::Scenario(format!("optimisation sample S{j} is empty")))
                        } else {
                            lrod::complete::complete_portfolio(
                                sample,
                                f,
                                cfg.payment_threshold,
                                args.seed,
                                0,
                            )
                            .and_then(|c| lrod::loss::optimise_thresholds(&c, &cfg))
                        };
                        // "x" marks training replaced by the external file.
                        ("x".to_string(), j, outcome)
                    })
                    .collect()
            }
            None => {
                let grid_run = run_scenario_matrix(&partition, technique, &cfg, args.seed)?;
                grid_run
                    .cells
                    .into_iter()
                    .filter(|c| match selection {
                        Some((i, j)) => c.train == i && c.optimise == j,
                        None => true,
                    })
                    .map(|c| (format!("{}", c.train), c.optimise, c.outcome))
                    .collect()
            }
        };

        for (train, optimise, outcome) in cells {
            let cell = format!("s{train}{optimise}");
            match outcome {
                Ok(curve) => {
                    let base = format!("curve_{}_{cell}", technique.name());
                    run.write(&format!("{base}.csv"), &curve.to_csv())?;
                    run.write(&format!("{base}.json"), &curve_json(&curve)?)?;
                    let _ = writeln!(
                        optima,
                        "{cell},{},{},{}",
                        curve.optimal_threshold,
                        curve.minimum_loss,
                        curve.minimum_rate()
                    );
                    records.push(CellRecord {
                        train,
                        optimise,
                        file: Some(format!("{base}.csv")),
                        status: "ok".into(),
                        optimal_threshold: Some(curve.optimal_threshold),
                        minimum_loss: Some(curve.minimum_loss),
                        minimum_rate: Some(curve.minimum_rate()),
                    });
                }
                Err(e) => {
                    eprintln!("warning: cell {cell} ({}): {e}", technique.name());
                    failures.push(format!("{} {cell}: {e}", technique.name()));
                    records.push(CellRecord {
                        train,
                        optimise,
                        file: None,
                        status: e.to_string(),
                        optimal_threshold: None,
                        minimum_loss: None,
                        minimum_rate: None,
                    });
                }
            }
        }

        run.write(&format!("optima_{}.csv", technique.name()), &optima)?;
        let mut index = serde_json::to_string_pretty(&records)
            .map_err(|e| Failure::Runtime(format!("serialize index: {e}")))?;
        index.push('\n');
        run.write(&format!("grid_{}.json", technique.name()), &index)?;
    }

    run.finish(None, Some(args.seed), Some(digest))?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(format!("{} cell(s) failed: {}", failures.len(), failures.join("; "))))
    }
}

fn cmd_montecarlo(args: MontecarloArgs) -> CmdResult {
    if args.trials < 2 {
        return Err(Failure::Usage(format!("--trials must be at least 2, got {}", args.trials)));
    }
    let grid = parse_grid(&args.grid)?;
    let (portfolio, digest) = read_input(&args.input, args.term)?;
    let forecaster = load_params(&args.params)?;
    let cfg = LossConfig::with_grid(grid);
    let summary = monte_carlo_optimise(&portfolio, &forecaster, &cfg, args.trials, args.seed)?;

    let mut run = Run::new("montecarlo", &args.out_dir)?;
    let base = format!("mc_{}", forecaster.name());
    run.write(&format!("{base}.csv"), &summary.to_csv())?;
    let mut json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Failure::Runtime(format!("serialize summary: {e}")))?;
    json.push('\n');
    run.write(&format!("{base}.json"), &json)?;
    eprintln!(
        "mean-curve optimum: d* = {} at rate {:.6}",
        summary.optimal_threshold,
        summary.mean_minimum_rate()
    );
    run.finish(None, Some(args.seed), Some(digest))
}

fn cmd_appendix_static(args: AppendixStaticArgs) -> CmdResult {
    let grid = parse_grid(&args.grid)?;
    let rates = parse_rates(&args.rates)?;
    let (portfolio, digest) = read_input(&args.input, args.term)?;
    let cfg = LossConfig::with_grid(grid);
    let curves = static_rate_loss_curve(&portfolio, &rates, &cfg)?;

    let mut run = Run::new("appendix_static", &args.out_dir)?;
    for (rate, curve) in &curves {
        // 0.50 -> "0p50": keeps one dot per file name.
        let label = format!("{rate:.2}").replace('.', "p");
        run.write(&format!("static_{label}.csv"), &curve.to_csv())?;
    }
    run.finish(None, None, Some(digest))
}

fn cmd_validate(args: ValidateArgs) -> CmdResult {
    let (portfolio, digest) = read_input(&args.input, args.term)?;
    let mut run = Run::new("validate", &args.out_dir)?;
    for technique in args.technique.list() {
        let report = cross_validate(&portfolio, technique, args.folds, args.seed)?;
        let mut json = report.to_json();
        json.push('\n');
        run.write(&format!("validation_{}.json", technique.name()), &json)?;
        print!("{}", report.render());
    }
    run.finish(None, Some(args.seed), Some(digest))
}
