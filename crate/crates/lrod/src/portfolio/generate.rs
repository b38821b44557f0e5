//! Synthetic loan book generator.
//!
//! Accounts are drawn from three payer archetypes: steady payers who never miss,
//! intermittent payers who slip into arrears and catch up, and deteriorating payers
//! whose payment propensity decays after a healthy spell. A configurable share of the
//! deteriorating accounts is destined for write-off: they stop paying almost entirely
//! and are written off with a partial recovery when they reach a drawn depth.
//!
//! Generation is deterministic in (config, seed): every account gets its own RNG
//! substream keyed by its id, so the first k accounts of an n-account book equal the
//! first k accounts of a larger book under the same seed.

use rand::Rng;

use crate::amort;
use crate::delinquency::{self, DEFAULT_PAYMENT_THRESHOLD};
use crate::error::{Error, Result};
use crate::portfolio::csv::round2;
use crate::portfolio::{Closure, LoanHistory, MonthlyRecord, Portfolio};
use crate::rng::substream;

/// Knobs for the synthetic book, read from a `key = value` file.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub n_accounts: u32,
    /// Contractual term t_c shared by every generated account.
    pub term: u32,
    pub principal_min: f64,
    pub principal_max: f64,
    /// Nominal annual client rates.
    pub rate_min: f64,
    pub rate_max: f64,
    /// Relative archetype weights; normalised internally.
    pub steady_weight: f64,
    pub intermittent_weight: f64,
    pub deteriorating_weight: f64,
    /// Target unconditional share of accounts that end written off. Realised as a
    /// conditional probability on the deteriorating archetype, capped at 1.
    pub writeoff_propensity: f64,
    /// Share of steady/intermittent accounts censored inside the observation window
    /// (the rest run to term).
    pub censor_fraction: f64,
    /// Observation-window bounds for censored accounts, in months.
    pub window_min: u32,
    pub window_max: u32,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_accounts: 500,
            term: 240,
            principal_min: 100_000.0,
            principal_max: 1_000_000.0,
            rate_min: 0.06,
            rate_max: 0.12,
            steady_weight: 0.55,
            intermittent_weight: 0.30,
            deteriorating_weight: 0.15,
            writeoff_propensity: 0.10,
            censor_fraction: 0.85,
            window_min: 12,
            window_max: 48,
        }
    }
}

impl GeneratorConfig {
    /// Parse a `key = value` file; `#` starts a comment. Unknown keys are rejected by
    /// name so typos fail loudly rather than silently falling back to a default.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = GeneratorConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got {raw:?}", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let as_u32 = || -> Result<u32> {
                value.parse().map_err(|_| {
                    Error::Config(format!("line {}: {key} must be a non-negative integer", lineno + 1))
                })
            };
            let as_f64 = || -> Result<f64> {
                value.parse().map_err(|_| {
                    Error::Config(format!("line {}: {key} must be a number", lineno + 1))
                })
            };
            match key {
                "n_accounts" => cfg.n_accounts = as_u32()?,
                "term" => cfg.term = as_u32()?,
                "principal_min" => cfg.principal_min = as_f64()?,
                "principal_max" => cfg.principal_max = as_f64()?,
                "rate_min" => cfg.rate_min = as_f64()?,
                "rate_max" => cfg.rate_max = as_f64()?,
                "steady_weight" => cfg.steady_weight = as_f64()?,
                "intermittent_weight" => cfg.intermittent_weight = as_f64()?,
                "deteriorating_weight" => cfg.deteriorating_weight = as_f64()?,
                "writeoff_propensity" => cfg.writeoff_propensity = as_f64()?,
                "censor_fraction" => cfg.censor_fraction = as_f64()?,
                "window_min" => cfg.window_min = as_u32()?,
                "window_max" => cfg.window_max = as_u32()?,
                other => {
                    return Err(Error::Config(format!(
                        "line {}: unknown generator key {other:?}",
                        lineno + 1
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_accounts == 0 {
            return Err(Error::Config("n_accounts must be positive".into()));
        }
        if self.term < 2 {
            return Err(Error::Config("term must be at least 2 months".into()));
        }
        if self.principal_min <= 0.0 || self.principal_min > self.principal_max {
            return Err(Error::Config(format!(
                "principal range [{}, {}] is invalid",
                self.principal_min, self.principal_max
            )));
        }
        if self.rate_min < 0.0 || self.rate_min > self.rate_max {
            return Err(Error::Config(format!(
                "rate range [{}, {}] is invalid",
                self.rate_min, self.rate_max
            )));
        }
        let weights = [self.steady_weight, self.intermittent_weight, self.deteriorating_weight];
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::Config("archetype weights must be non-negative".into()));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config("archetype weights must not all be zero".into()));
        }
        if !(0.0..=1.0).contains(&self.writeoff_propensity) {
            return Err(Error::Config(format!(
                "writeoff_propensity {} outside [0, 1]",
                self.writeoff_propensity
            )));
        }
        if !(0.0..=1.0).contains(&self.censor_fraction) {
            return Err(Error::Config(format!(
                "censor_fraction {} outside [0, 1]",
                self.censor_fraction
            )));
        }
        if self.window_min < 2 || self.window_min > self.window_max || self.window_max > self.term {
            return Err(Error::Config(format!(
                "window [{}, {}] must sit inside 2..=term ({})",
                self.window_min, self.window_max, self.term
            )));
        }
        Ok(())
    }
}

enum Plan {
    Steady,
    Intermittent,
    Deteriorating { healthy: u32 },
    Destined { healthy: u32, depth: u32, recovery_frac: f64 },
}

/// Build a synthetic portfolio; deterministic in (config, seed).
pub fn generate_synthetic_portfolio(cfg: &GeneratorConfig, seed: u64) -> Result<Portfolio> {
    cfg.validate()?;
    let mut accounts = Vec::with_capacity(cfg.n_accounts as usize);
    for i in 0..cfg.n_accounts {
        let id = format!("A{:06}", i + 1);
        accounts.push(simulate_account(cfg, seed, id)?);
    }
    Portfolio::new(accounts, format!("synthetic-{seed}"))
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + rng.random::<f64>() * (hi - lo)
}

fn simulate_account(cfg: &GeneratorConfig, seed: u64, id: String) -> Result<LoanHistory> {
    let mut rng = substream(seed, "gen", &id, 0);

    let principal = round2(uniform(&mut rng, cfg.principal_min, cfg.principal_max));
    let rate = (uniform(&mut rng, cfg.rate_min, cfg.rate_max) * 1e6).round() / 1e6;
    let instalment = round2(amort::level_instalment(principal, rate, cfg.term)?);

    let total_w = cfg.steady_weight + cfg.intermittent_weight + cfg.deteriorating_weight;
    let det_share = cfg.deteriorating_weight / total_w;
    let u = rng.random::<f64>() * total_w;
    let plan = if u < cfg.steady_weight {
        Plan::Steady
    } else if u < cfg.steady_weight + cfg.intermittent_weight {
        Plan::Intermittent
    } else {
        // Hit the unconditional write-off share by conditioning on this archetype.
        let p_destined = (cfg.writeoff_propensity / det_share).min(1.0);
        if rng.random::<f64>() < p_destined {
            Plan::Destined {
                healthy: rng.random_range(4..=12).min(cfg.term - 1),
                depth: rng.random_range(7..=14),
                recovery_frac: uniform(&mut rng, 0.25, 0.60),
            }
        } else {
            Plan::Deteriorating { healthy: rng.random_range(6..=18).min(cfg.term - 1) }
        }
    };

    // Months observed before censoring; write-offs break out of the loop early.
    let horizon = match plan {
        Plan::Steady | Plan::Intermittent => {
            if rng.random::<f64>() < cfg.censor_fraction {
                rng.random_range(cfg.window_min..=cfg.window_max)
            } else {
                cfg.term
            }
        }
        Plan::Deteriorating { healthy } => (healthy + rng.random_range(3..=10)).min(cfg.term),
        Plan::Destined { .. } => cfg.term,
    };

    let monthly_rate = rate / 12.0;
    let mut balance = principal;
    let mut g: u32 = 0;
    let mut records = Vec::new();
    let mut closure = Closure::Open;

    for t in 1..=horizon {
        let accrued = balance * (1.0 + monthly_rate);
        // Cash leaves the client in whole cents; the instalment is already rounded,
        // multiples of it are not.
        let planned = round2(match &plan {
            Plan::Steady => {
                // Occasional double payment; keeps realised cash slightly ahead of
                // schedule on the cleanest accounts.
                if rng.random::<f64>() < 0.03 {
                    2.0 * instalment
                } else {
                    instalment
                }
            }
            Plan::Intermittent => {
                if g >= 1 && rng.random::<f64>() < 0.40 {
                    f64::from(g + 1) * instalment
                } else if rng.random::<f64>() < 0.25 {
                    0.0
                } else {
                    instalment
                }
            }
            Plan::Deteriorating { healthy } => {
                if t <= *healthy {
                    instalment
                } else if g >= 1 && rng.random::<f64>() < 0.05 {
                    2.0 * instalment
                } else {
                    let k = f64::from(t - healthy);
                    if rng.random::<f64>() < (0.70 - 0.04 * k).max(0.05) {
                        instalment
                    } else {
                        0.0
                    }
                }
            }
            Plan::Destined { healthy, .. } => {
                if t <= *healthy || rng.random::<f64>() < 0.10 {
                    instalment
                } else {
                    0.0
                }
            }
        });

        let g_next = delinquency::step_level(g, instalment, planned, DEFAULT_PAYMENT_THRESHOLD)?;

        if let Plan::Destined { depth, recovery_frac, .. } = &plan {
            let forced = t == cfg.term && g_next < *depth;
            if g_next >= *depth || forced {
                // Write-off month: no client payment, partial recovery on the
                // accrued debt, ledger balance extinguished.
                records.push(MonthlyRecord {
                    period: t,
                    instalment,
                    receipt: 0.0,
                    balance: 0.0,
                });
                closure = Closure::WrittenOff {
                    period: t,
                    recovery: round2(recovery_frac * accrued),
                };
                break;
            }
        }

        if planned + 0.005 >= accrued {
            // Paid off: final bill is the remaining debt (or the level instalment if
            // that is smaller, so overpayments never read as underpayments).
            let payoff = round2(accrued);
            records.push(MonthlyRecord {
                period: t,
                instalment: instalment.min(payoff),
                receipt: payoff,
                balance: 0.0,
            });
            closure = Closure::Settled { period: t };
            break;
        }

        balance = round2(accrued - planned);
        records.push(MonthlyRecord { period: t, instalment, receipt: planned, balance });
        g = g_next;
    }

    LoanHistory::new(id, cfg.term, principal, rate, records, closure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::portfolio::partition_samples;

    #[test]
    fn parses_a_config_file() {
        let text = "\
# synthetic book
n_accounts = 40
term = 60        # five-year loans
steady_weight = 1.0
intermittent_weight = 0.0
deteriorating_weight = 0.0
";
        let cfg = GeneratorConfig::parse(text).unwrap();
        assert_eq!(cfg.n_accounts, 40);
        assert_eq!(cfg.term, 60);
        assert_eq!(cfg.steady_weight, 1.0);
        assert_eq!(cfg.intermittent_weight, 0.0);
        // Untouched keys keep their defaults.
        assert_eq!(cfg.window_min, 12);
    }

    #[test]
    fn unknown_key_is_named_in_the_error() {
        let err = GeneratorConfig::parse("n_acounts = 40\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("n_acounts"), "error should name the bad key: {msg}");
    }

    #[test]
    fn inverted_ranges_are_rejected() {
        assert!(GeneratorConfig::parse("principal_min = 10\nprincipal_max = 5\n").is_err());
        assert!(GeneratorConfig::parse("window_min = 40\nwindow_max = 20\n").is_err());
        assert!(GeneratorConfig::parse("rate_min = 0.2\nrate_max = 0.1\n").is_err());
        assert!(GeneratorConfig::parse("censor_fraction = 1.5\n").is_err());
    }

    #[test]
    fn generation_is_deterministic_and_prefix_stable() {
        let cfg = GeneratorConfig { n_accounts: 30, term: 60, window_max: 48, ..Default::default() };
        let a = generate_synthetic_portfolio(&cfg, 7).unwrap();
        let b = generate_synthetic_portfolio(&cfg, 7).unwrap();
        assert_eq!(a.accounts, b.accounts);

        let bigger = GeneratorConfig { n_accounts: 60, ..cfg.clone() };
        let c = generate_synthetic_portfolio(&bigger, 7).unwrap();
        assert_eq!(&c.accounts[..30], &a.accounts[..]);

        let other_seed = generate_synthetic_portfolio(&cfg, 8).unwrap();
        assert_ne!(a.accounts, other_seed.accounts);
    }

    #[test]
    fn all_steady_book_has_no_delinquents() {
        let cfg = GeneratorConfig {
            n_accounts: 60,
            term: 60,
            window_max: 48,
            steady_weight: 1.0,
            intermittent_weight: 0.0,
            deteriorating_weight: 0.0,
            ..Default::default()
        };
        let p = generate_synthetic_portfolio(&cfg, 42).unwrap();
        let part = partition_samples(&p).unwrap();
        assert!(part.s2.is_empty(), "steady payers must never show arrears");
        assert!(part.s3.is_empty());
    }

    #[test]
    fn writeoff_share_tracks_the_propensity() {
        let cfg = GeneratorConfig { n_accounts: 400, term: 120, window_max: 48, ..Default::default() };
        let p = generate_synthetic_portfolio(&cfg, 42).unwrap();
        let part = partition_samples(&p).unwrap();
        let share = part.s3.len() as f64 / p.len() as f64;
        assert!(
            (0.05..=0.20).contains(&share),
            "write-off share {share} strays too far from the 0.10 target"
        );
        assert!(part.s2.len() > part.s3.len(), "some delinquents should survive write-off");
    }

    #[test]
    fn generated_books_satisfy_history_invariants() {
        let cfg = GeneratorConfig { n_accounts: 80, term: 48, window_max: 40, ..Default::default() };
        let p = generate_synthetic_portfolio(&cfg, 9).unwrap();
        for a in &p.accounts {
            assert!(a.t0() >= 1 && a.t0() <= a.contractual_term, "{}", a.account_id);
            match &a.closure {
                Closure::WrittenOff { period, recovery } => {
                    assert_eq!(*period, a.t0());
                    assert!(*recovery >= 0.0);
                    assert_eq!(a.records.last().unwrap().balance, 0.0);
                }
                Closure::Settled { period } => {
                    assert_eq!(*period, a.t0());
                    assert_eq!(a.records.last().unwrap().balance, 0.0);
                }
                Closure::Open => assert!(a.last_balance() > 0.0, "{}", a.account_id),
            }
        }
    }

    #[test]
    fn csv_round_trip_preserves_generated_amounts() {
        let cfg = GeneratorConfig { n_accounts: 25, term: 60, window_max: 48, ..Default::default() };
        let p = generate_synthetic_portfolio(&cfg, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("book.csv");
        crate::portfolio::write_portfolio(&p, &path).unwrap();
        let schema = crate::portfolio::CsvSchema::with_term(cfg.term);
        let q = crate::portfolio::load_portfolio(&path, &schema).unwrap();
        assert_eq!(p.len(), q.len());
        for (a, b) in p.accounts.iter().zip(&q.accounts) {
            assert_eq!(a.account_id, b.account_id);
            assert_eq!(a.records, b.records);
            assert_eq!(a.closure, b.closure);
            assert_eq!(a.annual_interest_rate, b.annual_interest_rate);
            // Reconstructed principal may differ from the drawn one by float-rounding
            // of the first row, never by more than a cent.
            assert!(
                (a.principal - b.principal).abs() <= 0.01 + 1e-9,
                "{}: {} vs {}",
                a.account_id,
                a.principal,
                b.principal
            );
        }
    }
}
