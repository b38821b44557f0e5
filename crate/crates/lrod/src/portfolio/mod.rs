//! Loan performance data model, CSV ingestion, sample partitioning, synthetic data.
//!
//! Time is account-local: period 1 is origination, records run contiguously to the
//! censoring point t0 <= t_c. Every observed month carries the billed instalment, the
//! cash receipt, and the month-end ledger balance. Write-off and settlement close an
//! account; closed histories are retained (they still inform estimation and loss
//! sweeps) but are never forecast.

pub mod csv;
pub mod generate;

pub use self::csv::{load_portfolio, read_portfolio, write_portfolio, CsvSchema};
pub use self::generate::{generate_synthetic_portfolio, GeneratorConfig};

use crate::delinquency::{self, DelinquencyProfile};
use crate::error::{Error, Result};

/// Terminal status of a loan account.
#[derive(Debug, Clone, PartialEq)]
pub enum Closure {
    /// Still on book at the censoring point; the only status eligible for forecasting.
    Open,
    /// Debt written off; `recovery` is the asset-sale amount recognised at `period`.
    WrittenOff { period: u32, recovery: f64 },
    /// Paid down to zero at `period`.
    Settled { period: u32 },
}

/// One observed account-month.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthlyRecord {
    /// 1-based month index.
    pub period: u32,
    /// Instalment billed, I_t >= 0.
    pub instalment: f64,
    /// Cash received, R_t >= 0 (asset-sale recoveries are carried on the closure, not here).
    pub receipt: f64,
    /// Month-end ledger balance, B_t >= 0.
    pub balance: f64,
}

/// One account's observed history plus origination metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct LoanHistory {
    pub account_id: String,
    /// Account-local origination month; always 1 under the CSV conventions.
    pub origination_period: u32,
    /// Contractual term t_c in months.
    pub contractual_term: u32,
    /// Original advance, > 0.
    pub principal: f64,
    /// Latest observed client rate, nominal annual.
    pub annual_interest_rate: f64,
    /// Observed months t = 1..=t0.
    pub records: Vec<MonthlyRecord>,
    pub closure: Closure,
}

impl LoanHistory {
    /// Validate the structural invariants and build the history.
    pub fn new(
        account_id: impl Into<String>,
        contractual_term: u32,
        principal: f64,
        annual_interest_rate: f64,
        records: Vec<MonthlyRecord>,
        closure: Closure,
    ) -> Result<Self> {
        let account_id = account_id.into();
        if principal <= 0.0 {
            return Err(Error::Data(format!(
                "account {account_id}: principal {principal} must be positive"
            )));
        }
        if contractual_term == 0 {
            return Err(Error::Data(format!(
                "account {account_id}: contractual term must be positive"
            )));
        }
        if records.is_empty() {
            return Err(Error::Data(format!("account {account_id}: no observed months")));
        }
        for (idx, rec) in records.iter().enumerate() {
            if rec.period != idx as u32 + 1 {
                return Err(Error::Data(format!(
                    "account {account_id}: periods not contiguous from 1 (found {} at row {})",
                    rec.period,
                    idx + 1
                )));
            }
            if rec.instalment < 0.0 || rec.receipt < 0.0 || rec.balance < 0.0 {
                return Err(Error::Data(format!(
                    "account {account_id}: negative amount in period {}",
                    rec.period
                )));
            }
        }
        let t0 = records.len() as u32;
        if t0 > contractual_term {
            return Err(Error::Data(format!(
                "account {account_id}: {t0} observed months exceed term {contractual_term}"
            )));
        }
        match &closure {
            Closure::Open => {}
            Closure::WrittenOff { period, recovery } => {
                if *period == 0 || *period > t0 {
                    return Err(Error::Data(format!(
                        "account {account_id}: write-off period {period} outside 1..={t0}"
                    )));
                }
                if *recovery < 0.0 {
                    return Err(Error::Data(format!(
                        "account {account_id}: negative recovery {recovery}"
                    )));
                }
            }
            Closure::Settled { period } => {
                if *period == 0 || *period > t0 {
                    return Err(Error::Data(format!(
                        "account {account_id}: settlement period {period} outside 1..={t0}"
                    )));
                }
            }
        }
        Ok(LoanHistory {
            account_id,
            origination_period: 1,
            contractual_term,
            principal,
            annual_interest_rate,
            records,
            closure,
        })
    }

    /// Number of observed months t0.
    pub fn t0(&self) -> u32 {
        self.records.len() as u32
    }

    /// True when the account is still on book and eligible for forecasting.
    pub fn is_open(&self) -> bool {
        matches!(self.closure, Closure::Open)
    }

    /// Billed instalments I_1..I_t0.
    pub fn instalments(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.instalment).collect()
    }

    /// Receipt vector with any write-off recovery folded in at the write-off period.
    ///
    /// Recoveries are recognised only at write-off, so measurement and loss models see
    /// them as one (typically large, curing) receipt.
    pub fn effective_receipts(&self) -> Vec<f64> {
        let mut receipts: Vec<f64> = self.records.iter().map(|r| r.receipt).collect();
        if let Closure::WrittenOff { period, recovery } = &self.closure {
            receipts[*period as usize - 1] += recovery;
        }
        receipts
    }

    /// Month-end balance at the censoring point.
    pub fn last_balance(&self) -> f64 {
        self.records.last().map(|r| r.balance).unwrap_or(0.0)
    }

    /// g1 profile over the observed window.
    pub fn observed_profile(&self, p: f64) -> Result<DelinquencyProfile> {
        delinquency::measure_g1(&self.instalments(), &self.effective_receipts(), p)
    }
}

/// A set of loan histories with unique account ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    pub accounts: Vec<LoanHistory>,
    pub label: String,
}

impl Portfolio {
    /// Build a portfolio, rejecting duplicate account ids.
    pub fn new(accounts: Vec<LoanHistory>, label: impl Into<String>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for a in &accounts {
            if !seen.insert(a.account_id.as_str()) {
                return Err(Error::Data(format!("duplicate account id {}", a.account_id)));
            }
        }
        Ok(Portfolio { accounts, label: label.into() })
    }

    pub fn len(&self) -> usize {
        self.accounts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accounts.is_empty()
    }

    /// Sum of original advances; the loss-rate and PAR denominator.
    pub fn gross_advances(&self) -> f64 {
        self.accounts.iter().map(|a| a.principal).sum()
    }
}

/// Nested samples extracted from one portfolio: everything / delinquents / write-offs.
#[derive(Debug, Clone)]
pub struct SamplePartition {
    /// The full sample.
    pub s1: Portfolio,
    /// Accounts ever delinquent (max observed g1 >= 1) or written off.
    pub s2: Portfolio,
    /// Written-off accounts only.
    pub s3: Portfolio,
}

impl SamplePartition {
    /// Sample by 1-based index (1, 2, 3).
    pub fn sample(&self, i: usize) -> Option<&Portfolio> {
        match i {
            1 => Some(&self.s1),
            2 => Some(&self.s2),
            3 => Some(&self.s3),
            _ => None,
        }
    }
}

/// Split a portfolio into the nested S1 (all) / S2 (delinquents) / S3 (write-offs)
/// samples. Membership is decided on observed history only, never on forecasts, using
/// the default payment threshold.
pub fn partition_samples(p: &Portfolio) -> Result<SamplePartition> {
    let mut s2 = Vec::new();
    let mut s3 = Vec::new();
    for a in &p.accounts {
        let written_off = matches!(a.closure, Closure::WrittenOff { .. });
        let profile = a.observed_profile(delinquency::DEFAULT_PAYMENT_THRESHOLD)?;
        if written_off || profile.max_level >= 1 {
            s2.push(a.clone());
        }
        if written_off {
            s3.push(a.clone());
        }
    }
    Ok(SamplePartition {
        s1: Portfolio::new(p.accounts.clone(), "S1")?,
        s2: Portfolio::new(s2, "S2")?,
        s3: Portfolio::new(s3, "S3")?,
    })
}
