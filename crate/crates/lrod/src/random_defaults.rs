//! Random-defaults forecasting: Bernoulli receipts with distribution-truncated cures.
//!
//! The technique has three estimated ingredients. A payment probability b is the mean
//! of per-account payment frequencies. A truncation level k is drawn per account from
//! a distribution fitted to the delinquency maxima of previously delinquent accounts.
//! Forecast receipts are then all-or-nothing draws of the level instalment, cut to
//! zero permanently once the delinquency path reaches k.

use rand::Rng;

use crate::amort;
use crate::delinquency::{self, DEFAULT_PAYMENT_THRESHOLD};
use crate::error::{Error, Result};
use crate::portfolio::{LoanHistory, Portfolio};

/// Truncation-level distribution, parameterised as fitted.
#[derive(Debug, Clone, PartialEq)]
pub enum TruncationDist {
    Exponential { rate: f64 },
    Weibull { scale: f64, shape: f64 },
}

impl TruncationDist {
    /// Inverse CDF at `u` in [0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            TruncationDist::Exponential { rate } => -(1.0 - u).ln() / rate,
            TruncationDist::Weibull { scale, shape } => scale * (-(1.0 - u).ln()).powf(1.0 / shape),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            TruncationDist::Exponential { rate } => *rate > 0.0,
            TruncationDist::Weibull { scale, shape } => *scale > 0.0 && *shape > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("non-positive distribution parameter in {self:?}")))
        }
    }
}

/// Everything the random-defaults forecaster needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomDefaultsParams {
    /// Payment probability, in [0, 1].
    pub b: f64,
    /// Truncation-level distribution; `None` disables truncation.
    pub truncation: Option<TruncationDist>,
}

impl RandomDefaultsParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::Domain(format!("payment probability {} outside [0, 1]", self.b)));
        }
        if let Some(d) = &self.truncation {
            d.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistFamily {
    Exponential,
    Weibull,
}

impl std::fmt::Display for DistFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DistFamily::Exponential => write!(f, "exponential"),
            DistFamily::Weibull => write!(f, "weibull"),
        }
    }
}

/// A fitted candidate distribution with its goodness-of-fit diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedDistribution {
    pub family: DistFamily,
    /// `[rate]` for exponential, `[scale, shape]` for Weibull.
    pub params: Vec<f64>,
    pub log_likelihood: f64,
    /// Always 2 * param count - 2 * log_likelihood.
    pub aic: f64,
    /// Kolmogorov-Smirnov distance between the sample and the fitted CDF.
    pub ks_statistic: f64,
}

impl FittedDistribution {
    pub fn dist(&self) -> TruncationDist {
        match self.family {
            DistFamily::Exponential => TruncationDist::Exponential { rate: self.params[0] },
            DistFamily::Weibull => {
                TruncationDist::Weibull { scale: self.params[0], shape: self.params[1] }
            }
        }
    }
}

/// Mean of per-account payment frequencies: each account contributes the fraction of
/// its observed months with R_t >= I_t, and accounts are weighted equally. The
/// indicator deliberately uses full-instalment cover, not the measurement threshold.
pub fn estimate_payment_probability(sample: &Portfolio) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::Domain("cannot estimate payment probability on an empty portfolio".into()));
    }
    let mut total = 0.0;
    for a in &sample.accounts {
        let receipts = a.effective_receipts();
        let paid = a
            .records
            .iter()
            .zip(&receipts)
            .filter(|(rec, r)| **r >= rec.instalment)
            .count();
        total += paid as f64 / a.t0() as f64;
    }
    Ok(total / sample.len() as f64)
}

/// Strictly positive delinquency maxima of the sample's ever-delinquent accounts;
/// the raw material for truncation fitting. Clean accounts contribute nothing (their
/// maximum of zero is outside every candidate's support).
pub fn delinquency_maxima(sample: &Portfolio, p: f64) -> Result<Vec<f64>> {
    let mut maxima = Vec::new();
    for a in &sample.accounts {
        let profile = a.observed_profile(p)?;
        if profile.max_level >= 1 {
            maxima.push(f64::from(profile.max_level));
        }
    }
    Ok(maxima)
}

fn check_positive(samples: &[f64]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Degenerate("empty sample".into()));
    }
    if let Some(bad) = samples.iter().find(|x| **x <= 0.0 || !x.is_finite()) {
        return Err(Error::Domain(format!("sample value {bad} outside (0, inf)")));
    }
    Ok(())
}

fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in sorted.iter().enumerate() {
        let f = cdf(*x);
        d = d.max(((i + 1) as f64 / n - f).abs());
        d = d.max((f - i as f64 / n).abs());
    }
    d
}

/// Exponential MLE: rate = 1 / mean.
pub fn fit_exponential(samples: &[f64]) -> Result<FittedDistribution> {
    check_positive(samples)?;
    let n = samples.len() as f64;
    let sum: f64 = samples.iter().sum();
    // Literally the reciprocal mean, so callers comparing against 1/mean get bitwise
    // equality rather than a one-ulp n/sum discrepancy.
    let rate = 1.0 / (sum / n);
    let log_likelihood = n * rate.ln() - rate * sum;
    Ok(FittedDistribution {
        family: DistFamily::Exponential,
        params: vec![rate],
        log_likelihood,
        aic: 2.0 - 2.0 * log_likelihood,
        ks_statistic: ks_distance(samples, |x| 1.0 - (-rate * x).exp()),
    })
}

/// Weibull MLE by Newton iteration on the profile equation for the shape
///
///   sum(x^phi ln x) / sum(x^phi) - 1/phi - mean(ln x) = 0
///
/// started from the moment estimate on log scale, converged to |step| < 1e-8 within
/// 200 iterations; the scale then follows in closed form.
pub fn fit_weibull(samples: &[f64]) -> Result<FittedDistribution> {
    check_positive(samples)?;
    let n = samples.len() as f64;
    let logs: Vec<f64> = samples.iter().map(|x| x.ln()).collect();
    let mean_log = logs.iter().sum::<f64>() / n;
    let var_log = logs.iter().map(|l| (l - mean_log).powi(2)).sum::<f64>() / n;
    if var_log == 0.0 {
        return Err(Error::Degenerate("all sample values equal; Weibull shape is unidentified".into()));
    }

    // ln X has standard deviation pi / (shape * sqrt(6)) under a Weibull model.
    let mut shape = std::f64::consts::PI / (6.0f64.sqrt() * var_log.sqrt());
    let mut converged = false;
    for _ in 0..200 {
        let mut b = 0.0; // sum x^phi
        let mut a = 0.0; // sum x^phi ln x
        let mut c = 0.0; // sum x^phi (ln x)^2
        for (x, l) in samples.iter().zip(&logs) {
            let xp = x.powf(shape);
            b += xp;
            a += xp * l;
            c += xp * l * l;
        }
        let f = a / b - 1.0 / shape - mean_log;
        let fp = (c * b - a * a) / (b * b) + 1.0 / (shape * shape);
        let mut next = shape - f / fp;
        if next <= 0.0 || !next.is_finite() {
            // Newton overshot the positive half-line; fall back to halving.
            next = shape / 2.0;
        }
        let step = (next - shape).abs();
        shape = next;
        if step < 1e-8 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence { what: "Weibull shape iteration".into(), last: shape });
    }

    let scale = (samples.iter().map(|x| x.powf(shape)).sum::<f64>() / n).powf(1.0 / shape);
    let log_likelihood = n * shape.ln() - n * shape * scale.ln()
        + (shape - 1.0) * logs.iter().sum::<f64>()
        - samples.iter().map(|x| (x / scale).powf(shape)).sum::<f64>();
    Ok(FittedDistribution {
        family: DistFamily::Weibull,
        params: vec![scale, shape],
        log_likelihood,
        aic: 4.0 - 2.0 * log_likelihood,
        ks_statistic: ks_distance(samples, |x| 1.0 - (-(x / scale).powf(shape)).exp()),
    })
}

/// Lowest AIC wins; ties go to the earliest candidate.
pub fn select_distribution(candidates: &[FittedDistribution]) -> Result<FittedDistribution> {
    let mut best: Option<&FittedDistribution> = None;
    for c in candidates {
        if best.map_or(true, |b| c.aic < b.aic) {
            best = Some(c);
        }
    }
    best.cloned()
        .ok_or_else(|| Error::Precondition("distribution selection needs at least one candidate".into()))
}

/// Which truncation family to fit when training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyChoice {
    Exponential,
    Weibull,
    /// Fit both and keep the lower AIC (Weibull silently dropped when unfittable).
    BestAic,
}

/// Trained parameters plus the fitting diagnostics behind them.
#[derive(Debug, Clone)]
pub struct TrainedRandom {
    pub params: RandomDefaultsParams,
    /// Every candidate that was fitted, in selection order.
    pub fits: Vec<FittedDistribution>,
}

/// Estimate payment probability and truncation distribution from a sample.
///
/// A sample with no delinquent accounts has no maxima to fit; truncation is then
/// disabled rather than failing, since forecasts remain well-defined without it.
pub fn train(sample: &Portfolio, family: FamilyChoice, p: f64) -> Result<TrainedRandom> {
    let b = estimate_payment_probability(sample)?;
    let maxima = delinquency_maxima(sample, p)?;
    if maxima.is_empty() {
        return Ok(TrainedRandom {
            params: RandomDefaultsParams { b, truncation: None },
            fits: Vec::new(),
        });
    }
    let fits = match family {
        FamilyChoice::Exponential => vec![fit_exponential(&maxima)?],
        FamilyChoice::Weibull => vec![fit_weibull(&maxima)?],
        FamilyChoice::BestAic => {
            let mut fits = vec![fit_exponential(&maxima)?];
            match fit_weibull(&maxima) {
                Ok(w) => fits.push(w),
                // A degenerate or non-converging Weibull just drops out of the race.
                Err(Error::Degenerate(_)) | Err(Error::NonConvergence { .. }) => {}
                Err(e) => return Err(e),
            }
            fits
        }
    };
    let chosen = select_distribution(&fits)?;
    Ok(TrainedRandom {
        params: RandomDefaultsParams { b, truncation: Some(chosen.dist()) },
        fits,
    })
}

/// Draw a truncation level by inverse CDF.
pub fn draw_truncation(dist: &TruncationDist, rng: &mut impl Rng) -> f64 {
    dist.quantile(rng.random::<f64>())
}

/// Zero all receipts strictly after the first period at or past `t0` where the
/// delinquency level reaches `k`. Returns the truncated series and that period
/// (1-based) if the level was reached.
///
/// The search starts at t0 itself, so an account censored at or beyond level k is cut
/// immediately; and it runs over the concatenated history+forecast measure, so
/// history shapes the level path even though historical receipts are never modified.
pub fn apply_truncation(
    instalments: &[f64],
    receipts: &[f64],
    t0: usize,
    k: f64,
    p: f64,
) -> Result<(Vec<f64>, Option<usize>)> {
    if instalments.len() != receipts.len() {
        return Err(Error::Domain(format!(
            "series length mismatch: {} instalments vs {} receipts",
            instalments.len(),
            receipts.len()
        )));
    }
    if t0 < 1 || t0 > instalments.len() {
        return Err(Error::Domain(format!(
            "censoring point {t0} outside 1..={}",
            instalments.len()
        )));
    }
    let profile = delinquency::measure_g1(instalments, receipts, p)?;
    let t_k = (t0..=instalments.len()).find(|j| f64::from(profile.levels[j - 1]) >= k);
    let mut out = receipts.to_vec();
    if let Some(t_k) = t_k {
        for r in out.iter_mut().skip(t_k) {
            *r = 0.0;
        }
    }
    Ok((out, t_k))
}

/// A completed receipt series for one open account.
#[derive(Debug, Clone)]
pub struct RandomForecast {
    /// Receipts for t = 1..=t_c; history (with recoveries folded in) up to t0,
    /// simulated draws after.
    pub receipts: Vec<f64>,
    /// Level instalment I_c charged over the forecast region.
    pub instalment: f64,
    /// Truncation period, when the drawn level was reached.
    pub truncation_time: Option<usize>,
}

/// Forecast an open account to its contractual term.
///
/// Each future month pays the level instalment I_c with probability b and nothing
/// otherwise; I_c re-amortises the last observed balance over the remaining term.
/// The (k, g1)-truncation then kills all receipts strictly after the delinquency
/// path first reaches `k_draw`. Pass `f64::INFINITY` to disable truncation.
pub fn forecast_random(
    account: &LoanHistory,
    params: &RandomDefaultsParams,
    k_draw: f64,
    rng: &mut impl Rng,
) -> Result<RandomForecast> {
    params.validate()?;
    if !account.is_open() {
        return Err(Error::Precondition(format!(
            "account {} is closed and cannot be forecast",
            account.account_id
        )));
    }
    let t0 = account.t0() as usize;
    let tc = account.contractual_term as usize;
    if t0 >= tc {
        return Err(Error::Precondition(format!(
            "account {}: nothing to forecast (t0 = {t0}, term = {tc})",
            account.account_id
        )));
    }

    let balance = account.last_balance();
    let instalment = if balance > 0.0 {
        amort::level_instalment(balance, account.annual_interest_rate, (tc - t0) as u32)?
    } else {
        0.0
    };

    let mut instalments = account.instalments();
    let mut receipts = account.effective_receipts();
    for _ in t0 + 1..=tc {
        instalments.push(instalment);
        let paid = rng.random::<f64>() < params.b;
        receipts.push(if paid { instalment } else { 0.0 });
    }

    let (receipts, truncation_time) =
        apply_truncation(&instalments, &receipts, t0, k_draw, DEFAULT_PAYMENT_THRESHOLD)?;
    Ok(RandomForecast { receipts, instalment, truncation_time })
}
