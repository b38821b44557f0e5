//! Loss at the point of reaction, swept over write-off thresholds.
//!
//! For a threshold d, accounts split into those whose completed delinquency profile
//! ever reaches d (charged at the first breach) and those that never do (charged at
//! term). The per-account charge at period t is
//!
//!   l(t) = v^(t-1) * (0.40 * expected_balance(t) + 0.70 * arrears(t))
//!
//! discounted at the risk-free rate. Sweeping d over a grid gives a loss curve whose
//! minimiser is the optimal write-off threshold.

use rayon::prelude::*;
use serde::Serialize;

use crate::amort;
use crate::complete::{complete_portfolio, CompletedAccount, CompletedPortfolio, Forecaster};
use crate::delinquency::{self, DEFAULT_PAYMENT_THRESHOLD};
use crate::error::{Error, Result};
use crate::markov_defaults;
use crate::portfolio::{Portfolio, SamplePartition};
use crate::random_defaults::{self, FamilyChoice};

/// Weight on the expected balance in the loss function.
pub const DEFAULT_BALANCE_WEIGHT: f64 = 0.40;
/// Weight on arrears in the loss function.
pub const DEFAULT_ARREARS_WEIGHT: f64 = 0.70;
/// Annual risk-free rate used for discounting.
pub const DEFAULT_RISK_FREE_RATE: f64 = 0.07;
/// Normal quantile for the 99% two-sided confidence interval.
const CI_Z: f64 = 2.58;

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub balance_weight: f64,
    pub arrears_weight: f64,
    pub risk_free_rate: f64,
    /// Candidate thresholds, strictly increasing, all >= 1.
    pub grid: Vec<u32>,
    /// Paid/unpaid boundary for the delinquency measure.
    pub payment_threshold: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            balance_weight: DEFAULT_BALANCE_WEIGHT,
            arrears_weight: DEFAULT_ARREARS_WEIGHT,
            risk_free_rate: DEFAULT_RISK_FREE_RATE,
            grid: (1..=60).collect(),
            payment_threshold: DEFAULT_PAYMENT_THRESHOLD,
        }
    }
}

impl LossConfig {
    pub fn with_grid(grid: Vec<u32>) -> Self {
        LossConfig { grid, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("balance weight", self.balance_weight), ("arrears weight", self.arrears_weight)] {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::Domain(format!("{name} {w} outside [0, 1]")));
            }
        }
        if !(self.risk_free_rate >= 0.0) {
            return Err(Error::Domain(format!("risk-free rate {} is negative", self.risk_free_rate)));
        }
        if self.grid.is_empty() {
            return Err(Error::Domain("threshold grid is empty".into()));
        }
        if self.grid[0] < 1 {
            return Err(Error::Domain("thresholds start at 1".into()));
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("threshold grid must be strictly increasing".into()));
        }
        if !(self.payment_threshold > 0.0 && self.payment_threshold <= 1.0) {
            return Err(Error::Domain(format!(
                "payment threshold {} outside (0, 1]",
                self.payment_threshold
            )));
        }
        Ok(())
    }
}

/// Portfolio loss per threshold, with the curve minimum attached.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossCurve {
    pub thresholds: Vec<u32>,
    /// Loss in currency at each threshold.
    pub losses: Vec<f64>,
    /// Losses divided by `denominator`.
    pub loss_rates: Vec<f64>,
    pub minimum_loss: f64,
    /// Smallest threshold attaining the minimum.
    pub optimal_threshold: u32,
    /// Gross advances of the portfolio the curve was computed on.
    pub denominator: f64,
}

impl LossCurve {
    fn from_losses(thresholds: Vec<u32>, losses: Vec<f64>, denominator: f64) -> Result<LossCurve> {
        if denominator <= 0.0 {
            return Err(Error::Domain(format!("gross advances {denominator} must be positive")));
        }
        let mut best = 0usize;
        for (i, &l) in losses.iter().enumerate() {
            // Strict comparison keeps the smallest threshold on ties.
            if l < losses[best] {
                best = i;
            }
        }
        let loss_rates = losses.iter().map(|l| l / denominator).collect();
        Ok(LossCurve {
            minimum_loss: losses[best],
            optimal_threshold: thresholds[best],
            thresholds,
            losses,
            loss_rates,
            denominator,
        })
    }

    pub fn minimum_rate(&self) -> f64 {
        self.minimum_loss / self.denominator
    }

    /// Plot-ready rows. Floats print in shortest round-trip form, so a parsed
    /// loss_rate column divides back out of the loss column exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("d,loss,loss_rate\n");
        for ((d, l), r) in self.thresholds.iter().zip(&self.losses).zip(&self.loss_rates) {
            out.push_str(&format!("{d},{l},{r}\n"));
        }
        out
    }
}

/// Discounted loss charged to one completed account at 1-based period `t`.
pub fn account_loss(account: &CompletedAccount, t: u32, cfg: &LossConfig) -> Result<f64> {
    if t < 1 || t > account.term {
        return Err(Error::Domain(format!(
            "loss period {t} outside 1..={} for account {}",
            account.term, account.account_id
        )));
    }
    let v = amort::discount_factor(t, cfg.risk_free_rate)?;
    Ok(v * (cfg.balance_weight * account.expected_balance(t)
        + cfg.arrears_weight * account.arrears_at(t)))
}

/// First 1-based period at which the account's completed profile reaches `d`.
pub fn default_time(account: &CompletedAccount, d: u32) -> Option<u32> {
    delinquency::default_time(&account.profile, d).map(|t| t as u32)
}

/// Total portfolio loss at a single threshold: breaching accounts charged at their
/// first breach, the rest at term. Accounts are summed in id order so the total is
/// reproducible bit for bit.
pub fn portfolio_loss(portfolio: &CompletedPortfolio, d: u32, cfg: &LossConfig) -> Result<f64> {
    if d < 1 {
        return Err(Error::Domain("threshold must be at least 1".into()));
    }
    let mut total = 0.0;
    for account in &portfolio.accounts {
        let t = default_time(account, d).unwrap_or(account.term);
        total += account_loss(account, t, cfg)?;
    }
    Ok(total)
}

/// Sweep the threshold grid over a completed portfolio.
pub fn optimise_thresholds(portfolio: &CompletedPortfolio, cfg: &LossConfig) -> Result<LossCurve> {
    cfg.validate()?;
    if portfolio.accounts.is_empty() {
        return Err(Error::Precondition("cannot optimise an empty portfolio".into()));
    }
    // Charges only ever land on a first breach or at term, so precompute each
    // account's charge at every candidate period once and reuse it across the grid.
    let mut losses = vec![0.0; cfg.grid.len()];
    for account in &portfolio.accounts {
        let at_term = account_loss(account, account.term, cfg)?;
        for (i, &d) in cfg.grid.iter().enumerate() {
            losses[i] += match default_time(account, d) {
                Some(t) => account_loss(account, t, cfg)?,
                None => at_term,
            };
        }
    }
    LossCurve::from_losses(cfg.grid.clone(), losses, portfolio.gross_advances())
}

/// Forecasting technique identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Technique {
    Random,
    Markov,
}

impl Technique {
    pub fn name(self) -> &'static str {
        match self {
            Technique::Random => "random",
            Technique::Markov => "markov",
        }
    }
}

/// One train/optimise pairing of the scenario matrix.
#[derive(Debug)]
pub struct ScenarioCell {
    /// 1-based index of the sample the forecaster was trained on.
    pub train: usize,
    /// 1-based index of the sample whose accounts were completed and swept.
    pub optimise: usize,
    pub outcome: Result<LossCurve>,
}

/// All nine train/optimise pairings for one technique.
#[derive(Debug)]
pub struct ScenarioGrid {
    pub technique: Technique,
    pub cells: Vec<ScenarioCell>,
}

impl ScenarioGrid {
    pub fn cell(&self, train: usize, optimise: usize) -> &ScenarioCell {
        &self.cells[(train - 1) * 3 + (optimise - 1)]
    }
}

/// Train a forecaster of the given technique on one partition sample.
///
/// Random-defaults training fits an exponential truncation law on samples 1 and 2
/// and a Weibull on sample 3, whose write-off histories produce the longer, fatter
/// delinquency spells the Weibull is there to capture.
pub fn train_forecaster(
    technique: Technique,
    sample: &Portfolio,
    sample_index: usize,
    p: f64,
) -> Result<Forecaster> {
    if sample.is_empty() {
        return Err(Error::Scenario(format!("training sample S{sample_index} is empty")));
    }
    match technique {
        Technique::Random => {
            let family =
                if sample_index == 3 { FamilyChoice::Weibull } else { FamilyChoice::Exponential };
            let trained = random_defaults::train(sample, family, p)?;
            Ok(Forecaster::Random(trained.params))
        }
        Technique::Markov => {
            Ok(Forecaster::Markov(markov_defaults::estimate_transition_matrix(sample, p)?))
        }
    }
}

/// Run the full 3x3 scenario matrix for one technique: train on S_i, complete and
/// sweep S_j, for every pairing. A failure in one cell (an empty sample, a fit that
/// does not converge) is recorded in that cell and leaves the others intact.
pub fn run_scenario_matrix(
    partition: &SamplePartition,
    technique: Technique,
    cfg: &LossConfig,
    seed: u64,
) -> Result<ScenarioGrid> {
    cfg.validate()?;
    let mut cells = Vec::with_capacity(9);
    for train in 1..=3 {
        let sample = partition.sample(train).expect("sample index in 1..=3");
        let forecaster = train_forecaster(technique, sample, train, cfg.payment_threshold);
        for optimise in 1..=3 {
            let target = partition.sample(optimise).expect("sample index in 1..=3");
            let outcome = match &forecaster {
                Err(e) => Err(clone_error(e)),
                Ok(f) => scenario_cell(target, optimise, f, cfg, seed),
            };
            cells.push(ScenarioCell { train, optimise, outcome });
        }
    }
    Ok(ScenarioGrid { technique, cells })
}

fn scenario_cell(
    sample: &Portfolio,
    index: usize,
    forecaster: &Forecaster,
    cfg: &LossConfig,
    seed: u64,
) -> Result<LossCurve> {
    if sample.is_empty() {
        return Err(Error::Scenario(format!("optimisation sample S{index} is empty")));
    }
    let completed = complete_portfolio(sample, forecaster, cfg.payment_threshold, seed, 0)?;
    optimise_thresholds(&completed, cfg)
}

// Error is not Clone (it can wrap io::Error); scenario cells that share a failed
// training step re-render the message instead.
fn clone_error(e: &Error) -> Error {
    match e {
        Error::Scenario(m) => Error::Scenario(m.clone()),
        other => Error::Scenario(other.to_string()),
    }
}

/// Monte Carlo repetition of the threshold sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub n_trials: u64,
    pub thresholds: Vec<u32>,
    /// Mean loss per threshold, in currency.
    pub mean_losses: Vec<f64>,
    /// Mean loss rate per threshold.
    pub mean_rates: Vec<f64>,
    /// Sample variance of the loss rate per threshold.
    pub variances: Vec<f64>,
    /// 99% confidence bounds on the mean loss rate.
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub denominator: f64,
    /// Minimum of the mean curve and the smallest threshold attaining it.
    pub mean_minimum_loss: f64,
    pub optimal_threshold: u32,
}

impl McSummary {
    pub fn mean_minimum_rate(&self) -> f64 {
        self.mean_minimum_loss / self.denominator
    }

    /// Loss-curve rows extended with the trial statistics; the statistics columns
    /// (mean, var, ci bounds) are all on the loss-rate scale.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("d,loss,loss_rate,mean,var,ci_low,ci_high\n");
        for (i, &d) in self.thresholds.iter().enumerate() {
            out.push_str(&format!(
                "{d},{},{},{},{},{},{}\n",
                self.mean_losses[i],
                self.mean_rates[i],
                self.mean_rates[i],
                self.variances[i],
                self.ci_low[i],
                self.ci_high[i],
            ));
        }
        out
    }
}

/// Repeat completion and sweep over `n` independent trials and summarise the curve
/// distribution. Trials run in parallel, but each draws from its own substream and
/// the aggregation walks trials in index order, so the summary is identical for any
/// thread count.
pub fn monte_carlo_optimise(
    portfolio: &Portfolio,
    forecaster: &Forecaster,
    cfg: &LossConfig,
    n: u64,
    seed: u64,
) -> Result<McSummary> {
    if n < 2 {
        return Err(Error::Domain(format!("need at least 2 trials, got {n}")));
    }
    cfg.validate()?;
    let trial_losses: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|trial| -> Result<Vec<f64>> {
            let completed = complete_portfolio(portfolio, forecaster, cfg.payment_threshold, seed, trial)?;
            Ok(optimise_thresholds(&completed, cfg)?.losses)
        })
        .collect::<Result<_>>()?;

    let denominator = portfolio.gross_advances();
    let m = cfg.grid.len();
    let nf = n as f64;
    // Moments are taken on deviations from trial 0 so that identical trials give a
    // variance of exactly zero instead of summation dust.
    let mut mean_losses = vec![0.0; m];
    let mut variances = vec![0.0; m];
    for i in 0..m {
        let base = trial_losses[0][i];
        let mut sum_dev = 0.0;
        let mut sum_dev_sq = 0.0;
        for trial in &trial_losses {
            let dev = (trial[i] - base) / denominator;
            sum_dev += dev;
            sum_dev_sq += dev * dev;
        }
        mean_losses[i] = base + sum_dev / nf * denominator;
        variances[i] = ((sum_dev_sq - sum_dev * sum_dev / nf) / (nf - 1.0)).max(0.0);
    }
    let mean_rates: Vec<f64> = mean_losses.iter().map(|l| l / denominator).collect();
    let half_widths: Vec<f64> = variances.iter().map(|v| CI_Z * (v / nf).sqrt()).collect();
    let ci_low: Vec<f64> = mean_rates.iter().zip(&half_widths).map(|(m, h)| m - h).collect();
    let ci_high: Vec<f64> = mean_rates.iter().zip(&half_widths).map(|(m, h)| m + h).collect();

    let mut best = 0usize;
    for (i, &l) in mean_losses.iter().enumerate() {
        if l < mean_losses[best] {
            best = i;
        }
    }
    Ok(McSummary {
        n_trials: n,
        thresholds: cfg.grid.clone(),
        mean_minimum_loss: mean_losses[best],
        optimal_threshold: cfg.grid[best],
        mean_losses,
        mean_rates,
        variances,
        ci_low,
        ci_high,
        denominator,
    })
}

/// Threshold sweep on an untreated portfolio under flat loss rates.
///
/// No forecasting happens here: each account is judged on its observed profile
/// alone. An account that breaches d inside its observed window is charged the
/// discounted book balance at the breach month scaled by `rate`; one that never
/// does is charged its discounted last observed balance. Closed accounts carry a
/// zero closing balance, so they only contribute through an in-window breach.
pub fn static_rate_loss_curve(
    portfolio: &Portfolio,
    rates: &[f64],
    cfg: &LossConfig,
) -> Result<Vec<(f64, LossCurve)>> {
    cfg.validate()?;
    if portfolio.is_empty() {
        return Err(Error::Precondition("cannot sweep an empty portfolio".into()));
    }
    for &rate in rates {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::Domain(format!("static loss rate {rate} outside [0, 1]")));
        }
    }

    struct Charge {
        // Discounted balance at the first breach per grid entry, or at t0.
        per_threshold: Vec<f64>,
    }
    let mut charges = Vec::with_capacity(portfolio.len());
    for account in &portfolio.accounts {
        let profile = account.observed_profile(cfg.payment_threshold)?;
        let discounted = |t: u32| -> Result<f64> {
            Ok(amort::discount_factor(t, cfg.risk_free_rate)?
                * account.records[t as usize - 1].balance)
        };
        let at_t0 = discounted(account.t0())?;
        let mut per_threshold = Vec::with_capacity(cfg.grid.len());
        for &d in &cfg.grid {
            per_threshold.push(match delinquency::default_time(&profile, d) {
                Some(t) => discounted(t as u32)?,
                None => at_t0,
            });
        }
        charges.push(Charge { per_threshold });
    }

    let denominator = portfolio.gross_advances();
    let mut curves = Vec::with_capacity(rates.len());
    for &rate in rates {
        let losses: Vec<f64> = (0..cfg.grid.len())
            .map(|i| charges.iter().map(|c| rate * c.per_threshold[i]).sum())
            .collect();
        curves.push((rate, LossCurve::from_losses(cfg.grid.clone(), losses, denominator)?));
    }
    Ok(curves)
}
