//! Forecast-quality diagnostics: the portfolio-at-risk metric, k-fold
//! cross-validation, and parameter stability.
//!
//! Cross-validation deliberately replaces each held-out account's entire observed
//! window with forecasts, starting every account from a clean slate. That exposes
//! the forecast to the same censoring bias the historical data carries, but it is
//! the only window where forecasts can be scored against actual cash.

use rayon::prelude::*;
use serde::Serialize;

use crate::amort;
use crate::complete::Forecaster;
use crate::delinquency::DEFAULT_PAYMENT_THRESHOLD;
use crate::error::{Error, Result};
use crate::loss::{Technique, DEFAULT_RISK_FREE_RATE};
use crate::markov_defaults::{self, state_of, ReceiptRule, TransitionMatrix};
use crate::portfolio::{LoanHistory, Portfolio};
use crate::random_defaults::{self, FamilyChoice, RandomDefaultsParams};
use crate::rng::substream;

use rand::seq::SliceRandom;
use rand::Rng;

/// Fold-averaged cross-validation outcome for one technique.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub technique: String,
    /// Fold-averaged portfolio-at-risk of the forecast receipts.
    pub par_forecast: f64,
    /// Fold-averaged portfolio-at-risk of the actual receipts.
    pub par_actual: f64,
    /// Mean %-difference of fold parameters against full-data parameters.
    pub mean_param_pct_diff: f64,
    pub folds: usize,
}

impl ValidationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Three-row table of the report's measures.
    pub fn render(&self) -> String {
        format!(
            "measure                         {}\n\
             PAR (forecast)                  {:.4}%\n\
             PAR (actual)                    {:.4}%\n\
             mean parameter %-difference     {:.6}%\n",
            self.technique,
            self.par_forecast * 100.0,
            self.par_actual * 100.0,
            self.mean_param_pct_diff * 100.0,
        )
    }
}

/// Portfolio-at-risk: discounted shortfalls between instalments and receipts as a
/// fraction of gross advances. Negative under net overpayment.
pub fn par_metric(
    instalments: &[Vec<f64>],
    receipts: &[Vec<f64>],
    rate: f64,
    gross_advances: f64,
) -> Result<f64> {
    if !(gross_advances > 0.0) {
        return Err(Error::Domain(format!("gross advances {gross_advances} must be positive")));
    }
    if instalments.len() != receipts.len() {
        return Err(Error::Domain(format!(
            "{} instalment series vs {} receipt series",
            instalments.len(),
            receipts.len()
        )));
    }
    let mut shortfall = 0.0;
    for (i_series, r_series) in instalments.iter().zip(receipts) {
        if i_series.len() != r_series.len() {
            return Err(Error::Domain(format!(
                "series length mismatch: {} instalments vs {} receipts",
                i_series.len(),
                r_series.len()
            )));
        }
        for (t, (i, r)) in i_series.iter().zip(r_series).enumerate() {
            shortfall += amort::discount_factor(t as u32 + 1, rate)? * (i - r);
        }
    }
    Ok(shortfall / gross_advances)
}

/// Assign accounts to k folds by seeded shuffle; sizes differ by at most one.
fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = substream(seed, "cv", "folds", 0);
    order.shuffle(&mut rng);
    let mut fold = vec![0usize; n];
    for (position, &account) in order.iter().enumerate() {
        fold[account] = position % k;
    }
    fold
}

/// Forecast one account's observed window from scratch under the random-defaults
/// technique: every month pays the origination instalment with probability b,
/// truncated once the delinquency level would reach the drawn cutoff.
fn window_forecast_random(
    account: &LoanHistory,
    params: &RandomDefaultsParams,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let t0 = account.t0() as usize;
    let instalment =
        amort::level_instalment(account.principal, account.annual_interest_rate, account.contractual_term)?;
    let k = match &params.truncation {
        Some(dist) => random_defaults::draw_truncation(dist, rng),
        None => f64::INFINITY,
    };
    let receipts: Vec<f64> =
        (0..t0).map(|_| if rng.random::<f64>() < params.b { instalment } else { 0.0 }).collect();
    let instalments = vec![instalment; t0];
    // The whole window is forecast, so the truncation search covers it all.
    let (truncated, _) =
        random_defaults::apply_truncation(&instalments, &receipts, 1, k, DEFAULT_PAYMENT_THRESHOLD)?;
    Ok(truncated)
}

/// Forecast one account's observed window from scratch under the chain technique,
/// starting in the clean state.
fn window_forecast_markov(
    account: &LoanHistory,
    matrix: &TransitionMatrix,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let t0 = account.t0() as usize;
    let instalment =
        amort::level_instalment(account.principal, account.annual_interest_rate, account.contractual_term)?;
    let mut state = state_of(0, false);
    let mut rule = ReceiptRule::new(state)?;
    let mut receipts = Vec::with_capacity(t0);
    for _ in 0..t0 {
        state = matrix.sample_next(state, rng.random::<f64>());
        match rule.step(state, instalment) {
            Some(r) => receipts.push(r),
            None => break,
        }
    }
    receipts.resize(t0, 0.0);
    Ok(receipts)
}

/// Flatten a trained forecaster into a plain parameter vector for stability
/// comparisons. Chain parameters are the 64 transition probabilities; random
/// parameters are b followed by the truncation distribution's parameters.
fn parameter_vector(f: &Forecaster) -> Vec<f64> {
    match f {
        Forecaster::Random(params) => {
            let mut v = vec![params.b];
            match &params.truncation {
                Some(random_defaults::TruncationDist::Exponential { rate }) => v.push(*rate),
                Some(random_defaults::TruncationDist::Weibull { scale, shape }) => {
                    v.push(*scale);
                    v.push(*shape);
                }
                None => {}
            }
            v
        }
        Forecaster::Markov(m) => {
            m.p().iter().flat_map(|row| row.iter().copied()).collect()
        }
    }
}

/// Mean relative difference of fold parameter estimates against the full-data
/// estimates, pooled over folds and parameters. Parameters that are zero on the
/// full data carry no information and would divide by zero, so they are excluded.
pub fn parameter_stability(full: &[f64], folds: &[Vec<f64>]) -> Result<f64> {
    for fold in folds {
        if fold.len() != full.len() {
            return Err(Error::Domain(format!(
                "fold has {} parameters, full fit has {}",
                fold.len(),
                full.len()
            )));
        }
    }
    if full.iter().all(|&p| p == 0.0) {
        return Err(Error::Degenerate(
            "all full-data parameters are zero; stability is undefined".into(),
        ));
    }
    let mut sum = 0.0;
    let mut count = 0u64;
    for fold in folds {
        for (&f, &p) in fold.iter().zip(full) {
            if p != 0.0 {
                sum += (f - p) / p;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::Degenerate(
            "no comparable nonzero parameters; stability is undefined".into(),
        ));
    }
    Ok(sum / count as f64)
}

fn train(technique: Technique, sample: &Portfolio) -> Result<Forecaster> {
    match technique {
        // Cross-validation keeps the truncation family fixed so folds estimate the
        // same parameters as the full fit.
        Technique::Random => {
            let t = random_defaults::train(sample, FamilyChoice::Exponential, DEFAULT_PAYMENT_THRESHOLD)?;
            Ok(Forecaster::Random(t.params))
        }
        Technique::Markov => Ok(Forecaster::Markov(markov_defaults::estimate_transition_matrix(
            sample,
            DEFAULT_PAYMENT_THRESHOLD,
        )?)),
    }
}

/// k-fold cross-validation of one forecasting technique.
///
/// Accounts are shuffled into k folds. For each fold, the technique is trained on
/// the other k-1 folds and the held-out accounts' observed windows are re-forecast
/// from their first month; the forecast and actual PAR are computed per fold and
/// averaged. Fold parameter estimates are compared against the full-data fit.
pub fn cross_validate(
    portfolio: &Portfolio,
    technique: Technique,
    k: usize,
    seed: u64,
) -> Result<ValidationReport> {
    if k < 2 {
        return Err(Error::Domain(format!("need at least 2 folds, got {k}")));
    }
    if portfolio.len() < k {
        return Err(Error::Domain(format!(
            "cannot split {} accounts into {k} folds",
            portfolio.len()
        )));
    }
    let assignment = fold_assignment(portfolio.len(), k, seed);
    let full = train(technique, portfolio)?;
    let full_params = parameter_vector(&full);

    struct FoldOutcome {
        par_forecast: f64,
        par_actual: f64,
        params: Vec<f64>,
    }
    let outcomes: Vec<FoldOutcome> = (0..k)
        .into_par_iter()
        .map(|fold| -> Result<FoldOutcome> {
            let mut held_out = Vec::new();
            let mut training = Vec::new();
            for (i, account) in portfolio.accounts.iter().enumerate() {
                if assignment[i] == fold {
                    held_out.push(account);
                } else {
                    training.push(account.clone());
                }
            }
            let training = Portfolio::new(training, format!("fold-{fold}-train"))?;
            let trained = train(technique, &training)?;

            let mut instalments = Vec::with_capacity(held_out.len());
            let mut forecast = Vec::with_capacity(held_out.len());
            let mut actual = Vec::with_capacity(held_out.len());
            let mut advances = 0.0;
            for account in held_out {
                let mut rng = substream(seed, "cv", &account.account_id, fold as u64);
                let receipts = match &trained {
                    Forecaster::Random(params) => window_forecast_random(account, params, &mut rng)?,
                    Forecaster::Markov(m) => window_forecast_markov(account, m, &mut rng)?,
                };
                instalments.push(account.instalments());
                forecast.push(receipts);
                actual.push(account.effective_receipts());
                advances += account.principal;
            }
            Ok(FoldOutcome {
                par_forecast: par_metric(&instalments, &forecast, DEFAULT_RISK_FREE_RATE, advances)?,
                par_actual: par_metric(&instalments, &actual, DEFAULT_RISK_FREE_RATE, advances)?,
                params: parameter_vector(&trained),
            })
        })
        .collect::<Result<_>>()?;

    let kf = k as f64;
    let par_forecast = outcomes.iter().map(|o| o.par_forecast).sum::<f64>() / kf;
    let par_actual = outcomes.iter().map(|o| o.par_actual).sum::<f64>() / kf;

    // Folds that saw no delinquent account fit no truncation law; compare over the
    // parameters every fit produced.
    let shared = outcomes.iter().map(|o| o.params.len()).min().unwrap_or(0).min(full_params.len());
    let fold_params: Vec<Vec<f64>> = outcomes.iter().map(|o| o.params[..shared].to_vec()).collect();
    let mean_param_pct_diff = parameter_stability(&full_params[..shared], &fold_params)?;

    Ok(ValidationReport {
        technique: technique.name().to_string(),
        par_forecast,
        par_actual,
        mean_param_pct_diff,
        folds: k,
    })
}
