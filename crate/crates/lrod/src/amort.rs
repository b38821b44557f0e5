//! Level-instalment amortization, contractual balance schedules, arrears, discounting.
//!
//! Conventions: client amortization uses a nominal-annual/12 monthly rate (standard
//! mortgage quoting); risk-free discounting uses an effective-annual rate converted to
//! monthly, so twelve months of discounting at 7% compound to exactly 1/1.07. The
//! valuation epoch is t = 1 and currency comparisons use absolute tolerance 0.01.

use crate::error::{Error, Result};

/// Absolute tolerance for currency comparisons.
pub const CURRENCY_TOL: f64 = 0.01;

/// Amortization anchor for forecasting: the schedule that retires the balance observed
/// at the censoring point over the remaining contractual months.
#[derive(Debug, Clone, PartialEq)]
pub struct AmortContext {
    /// Outstanding balance at the last observed period t0.
    pub balance_at_t0: f64,
    /// Nominal annual rate / 12.
    pub monthly_rate: f64,
    /// Remaining months n = t_c - t0.
    pub remaining_term: u32,
    /// Level instalment retiring `balance_at_t0` over `remaining_term` months.
    pub level_instalment: f64,
}

impl AmortContext {
    /// Build the anchor and verify that the instalment actually closes the schedule:
    /// the recomputed balance at `remaining_term` must be 0 within [`CURRENCY_TOL`].
    pub fn new(balance_at_t0: f64, annual_rate: f64, remaining_term: u32) -> Result<Self> {
        let instalment = level_instalment(balance_at_t0, annual_rate, remaining_term)?;
        let closing = expected_balance(balance_at_t0, annual_rate, instalment, remaining_term);
        if closing.abs() > CURRENCY_TOL {
            return Err(Error::Domain(format!(
                "schedule does not close: residual {closing:.4} after {remaining_term} months"
            )));
        }
        Ok(AmortContext {
            balance_at_t0,
            monthly_rate: annual_rate / 12.0,
            remaining_term,
            level_instalment: instalment,
        })
    }
}

/// Level annuity payment that amortizes `balance` to zero over `n` months.
///
/// With r = annual_rate/12: `balance * r / (1 - (1+r)^-n)`, or `balance / n` at r = 0.
pub fn level_instalment(balance: f64, annual_rate: f64, n: u32) -> Result<f64> {
    if balance < 0.0 {
        return Err(Error::Domain(format!("negative balance {balance}")));
    }
    if n == 0 {
        if balance > 0.0 {
            return Err(Error::Domain(
                "cannot amortize a positive balance over zero months".into(),
            ));
        }
        return Ok(0.0);
    }
    let r = annual_rate / 12.0;
    if r == 0.0 {
        return Ok(balance / n as f64);
    }
    Ok(balance * r / (1.0 - (1.0 + r).powi(-(n as i32))))
}

/// Contractual balance after `t` months of paying `instalment` against `balance0`.
///
/// Closed annuity form `B_t = balance0*(1+r)^t - instalment*((1+r)^t - 1)/r`
/// (limit `balance0 - t*instalment` at r = 0), floored at zero.
pub fn expected_balance(balance0: f64, annual_rate: f64, instalment: f64, t: u32) -> f64 {
    let r = annual_rate / 12.0;
    let b = if r == 0.0 {
        balance0 - t as f64 * instalment
    } else {
        let growth = (1.0 + r).powi(t as i32);
        balance0 * growth - instalment * (growth - 1.0) / r
    };
    b.max(0.0)
}

/// Accumulated arrears A_t = max(0, A_{t-1} + I_t - R_t), A_0 = 0.
///
/// Overpayments reduce arrears but never push them negative.
pub fn arrears(instalments: &[f64], receipts: &[f64], t: usize) -> Result<f64> {
    if instalments.len() != receipts.len() {
        return Err(Error::Domain(format!(
            "series length mismatch: {} instalments vs {} receipts",
            instalments.len(),
            receipts.len()
        )));
    }
    if t == 0 || t > instalments.len() {
        return Err(Error::Domain(format!(
            "period {t} outside series of length {}",
            instalments.len()
        )));
    }
    let mut a = 0.0f64;
    for k in 0..t {
        a = (a + instalments[k] - receipts[k]).max(0.0);
    }
    Ok(a)
}

/// Full arrears path A_1..A_T for one pass over the series.
pub fn arrears_series(instalments: &[f64], receipts: &[f64]) -> Result<Vec<f64>> {
    if instalments.len() != receipts.len() {
        return Err(Error::Domain(format!(
            "series length mismatch: {} instalments vs {} receipts",
            instalments.len(),
            receipts.len()
        )));
    }
    let mut a = 0.0f64;
    let mut out = Vec::with_capacity(instalments.len());
    for (i, r) in instalments.iter().zip(receipts) {
        a = (a + i - r).max(0.0);
        out.push(a);
    }
    Ok(out)
}

/// Discount factor to the valuation epoch t = 1: `v^(t-1)` with
/// `v = (1 + annual_rate)^(-1/12)` (effective-annual convention).
pub fn discount_factor(t: u32, annual_rate: f64) -> Result<f64> {
    if t < 1 {
        return Err(Error::Domain("discounting starts at period 1".into()));
    }
    let v = (1.0 + annual_rate).powf(-1.0 / 12.0);
    Ok(v.powi(t as i32 - 1))
}
