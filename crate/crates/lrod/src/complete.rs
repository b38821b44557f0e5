//! Forecast completion: extend every account to its contractual term.
//!
//! Open accounts get a technique-specific forecast of the months between censoring
//! and term; closed accounts (written off or settled) are padded with zero billing
//! and zero cash, since their contractual relationship has ended. The completed
//! series carry everything the loss engine needs: the full delinquency profile, the
//! arrears path, and a two-piece expected-balance schedule anchored at origination
//! for the observed era and re-anchored at the last observed balance for the
//! forecast era.

use crate::amort;
use crate::delinquency::DelinquencyProfile;
use crate::error::{Error, Result};
use crate::markov_defaults::{self, TransitionMatrix};
use crate::portfolio::{LoanHistory, Portfolio};
use crate::random_defaults::{self, RandomDefaultsParams};
use crate::rng::substream;

/// A trained forecasting technique.
#[derive(Debug, Clone)]
pub enum Forecaster {
    Random(RandomDefaultsParams),
    Markov(TransitionMatrix),
}

impl Forecaster {
    pub fn name(&self) -> &'static str {
        match self {
            Forecaster::Random(_) => "random",
            Forecaster::Markov(_) => "markov",
        }
    }
}

/// The schedule the forecast era amortises on: the last observed balance repaid by
/// level instalments over the remaining term.
#[derive(Debug, Clone, PartialEq)]
struct ForecastAnchor {
    balance: f64,
    instalment: f64,
}

/// One account extended to its contractual term.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletedAccount {
    pub account_id: String,
    pub principal: f64,
    pub annual_rate: f64,
    /// Months that were observed rather than forecast.
    pub t0: u32,
    /// Contractual term; instalments, receipts, arrears and profile all have this length.
    pub term: u32,
    pub instalments: Vec<f64>,
    pub receipts: Vec<f64>,
    /// Delinquency profile over the full completed series.
    pub profile: DelinquencyProfile,
    /// Arrears path A_t = max(0, A_{t-1} + I_t - R_t).
    arrears: Vec<f64>,
    /// Theoretical level instalment of the origination schedule.
    origination_instalment: f64,
    /// Present only when the account was forecast.
    anchor: Option<ForecastAnchor>,
}

impl CompletedAccount {
    /// Contractual (expected) balance at 1-based period `t`.
    ///
    /// Up to the censoring point this is the origination schedule: the principal
    /// amortised by the theoretical level instalment over the full term. Past it,
    /// forecast accounts switch to the schedule their forecast charges: the last
    /// observed balance amortised by I_c over the remaining months. Accounts that
    /// were never forecast stay on the origination schedule throughout; both
    /// schedules reach zero at term.
    pub fn expected_balance(&self, t: u32) -> f64 {
        match &self.anchor {
            Some(a) if t > self.t0 => {
                amort::expected_balance(a.balance, self.annual_rate, a.instalment, t - self.t0)
            }
            _ => amort::expected_balance(
                self.principal,
                self.annual_rate,
                self.origination_instalment,
                t,
            ),
        }
    }

    /// Arrears at 1-based period `t`.
    pub fn arrears_at(&self, t: u32) -> f64 {
        self.arrears[t as usize - 1]
    }
}

/// A portfolio in which every account runs to its contractual term.
#[derive(Debug, Clone)]
pub struct CompletedPortfolio {
    /// Sorted by account id so that sums have one canonical order.
    pub accounts: Vec<CompletedAccount>,
    pub label: String,
}

impl CompletedPortfolio {
    pub fn gross_advances(&self) -> f64 {
        self.accounts.iter().map(|a| a.principal).sum()
    }
}

/// Complete a single account, either from a forecast `(receipts to term, I_c)` or by
/// dead padding (zero bills, zero cash) for closed and fully-observed histories.
pub fn complete_account(
    account: &LoanHistory,
    forecast: Option<(Vec<f64>, f64)>,
    p: f64,
) -> Result<CompletedAccount> {
    let t0 = account.t0();
    let tc = account.contractual_term;
    let mut instalments = account.instalments();
    let (receipts, anchor) = match forecast {
        Some((receipts, instalment)) => {
            if receipts.len() != tc as usize {
                return Err(Error::Precondition(format!(
                    "account {}: forecast has {} periods, term is {tc}",
                    account.account_id,
                    receipts.len()
                )));
            }
            instalments.resize(tc as usize, instalment);
            (receipts, Some(ForecastAnchor { balance: account.last_balance(), instalment }))
        }
        None => {
            let mut receipts = account.effective_receipts();
            instalments.resize(tc as usize, 0.0);
            receipts.resize(tc as usize, 0.0);
            (receipts, None)
        }
    };

    let profile = crate::delinquency::measure_g1(&instalments, &receipts, p)?;
    let arrears = amort::arrears_series(&instalments, &receipts)?;
    let origination_instalment =
        amort::level_instalment(account.principal, account.annual_interest_rate, tc)?;
    Ok(CompletedAccount {
        account_id: account.account_id.clone(),
        principal: account.principal,
        annual_rate: account.annual_interest_rate,
        t0,
        term: tc,
        instalments,
        receipts,
        profile,
        arrears,
        origination_instalment,
        anchor,
    })
}

/// Complete every account of a portfolio under one forecaster.
///
/// Each open, unfinished account is forecast on its own RNG substream keyed by
/// (seed, account id, trial), so the result does not depend on iteration order or
/// thread count, and distinct trials give independent draws.
pub fn complete_portfolio(
    portfolio: &Portfolio,
    forecaster: &Forecaster,
    p: f64,
    seed: u64,
    trial: u64,
) -> Result<CompletedPortfolio> {
    let mut accounts = Vec::with_capacity(portfolio.len());
    for account in &portfolio.accounts {
        let needs_forecast = account.is_open() && account.t0() < account.contractual_term;
        let forecast = if needs_forecast {
            let mut rng = substream(seed, "forecast", &account.account_id, trial);
            match forecaster {
                Forecaster::Random(params) => {
                    // The truncation level is the first draw of the account's stream.
                    let k = match &params.truncation {
                        Some(dist) => random_defaults::draw_truncation(dist, &mut rng),
                        None => f64::INFINITY,
                    };
                    let f = random_defaults::forecast_random(account, params, k, &mut rng)?;
                    Some((f.receipts, f.instalment))
                }
                Forecaster::Markov(m) => {
                    let f = markov_defaults::forecast_markov(account, m, &mut rng)?;
                    Some((f.receipts, f.instalment))
                }
            }
        } else {
            None
        };
        accounts.push(complete_account(account, forecast, p)?);
    }
    accounts.sort_by(|a, b| a.account_id.cmp(&b.account_id));
    Ok(CompletedPortfolio { accounts, label: portfolio.label.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delinquency::DEFAULT_PAYMENT_THRESHOLD;
    use crate::portfolio::{Closure, MonthlyRecord};

    fn open_account(id: &str, months: u32, term: u32) -> LoanHistory {
        let records: Vec<MonthlyRecord> = (1..=months)
            .map(|t| MonthlyRecord { period: t, instalment: 100.0, receipt: 100.0, balance: 1000.0 })
            .collect();
        LoanHistory::new(id, term, 1200.0, 0.12, records, Closure::Open).unwrap()
    }

    #[test]
    fn closed_accounts_are_padded_dead() {
        let records = vec![
            MonthlyRecord { period: 1, instalment: 100.0, receipt: 0.0, balance: 1010.0 },
            MonthlyRecord { period: 2, instalment: 100.0, receipt: 0.0, balance: 0.0 },
        ];
        let a = LoanHistory::new(
            "A1",
            6,
            1000.0,
            0.12,
            records,
            Closure::WrittenOff { period: 2, recovery: 50.0 },
        )
        .unwrap();
        let c = complete_account(&a, None, DEFAULT_PAYMENT_THRESHOLD).unwrap();
        assert_eq!(c.instalments, vec![100.0, 100.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(c.receipts, vec![0.0, 50.0, 0.0, 0.0, 0.0, 0.0]);
        // Arrears freeze once billing stops.
        assert_eq!(c.arrears_at(2), c.arrears_at(6));
        assert!((c.arrears_at(2) - 150.0).abs() < 1e-9);
        // Zero-instalment months hold the delinquency level.
        assert_eq!(c.profile.levels[1], c.profile.levels[5]);
    }

    #[test]
    fn forecast_length_is_enforced() {
        let a = open_account("A1", 2, 6);
        let err = complete_account(&a, Some((vec![100.0; 5], 100.0)), 0.9);
        assert!(matches!(err, Err(Error::Precondition(_))));
    }

    #[test]
    fn expected_balance_switches_schedules_at_the_censoring_point() {
        let a = open_account("A1", 2, 12);
        let params = RandomDefaultsParams { b: 1.0, truncation: None };
        let c = complete_portfolio(
            &Portfolio::new(vec![a], "t").unwrap(),
            &Forecaster::Random(params),
            0.9,
            1,
            0,
        )
        .unwrap();
        let acct = &c.accounts[0];

        // Observed era follows the origination schedule.
        let i_orig = amort::level_instalment(1200.0, 0.12, 12).unwrap();
        let eb1 = amort::expected_balance(1200.0, 0.12, i_orig, 1);
        assert!((acct.expected_balance(1) - eb1).abs() < 1e-9);

        // Forecast era re-amortises the last observed balance (1000) over 10 months.
        let ic = amort::level_instalment(1000.0, 0.12, 10).unwrap();
        let eb3 = amort::expected_balance(1000.0, 0.12, ic, 1);
        assert!((acct.expected_balance(3) - eb3).abs() < 1e-9);

        // Both schedules close at term.
        assert!(acct.expected_balance(12).abs() < 0.01);
    }

    #[test]
    fn fully_observed_open_account_needs_no_forecast() {
        let a = open_account("A1", 6, 6);
        let p = Portfolio::new(vec![a], "t").unwrap();
        let params = RandomDefaultsParams { b: 0.0, truncation: None };
        let c = complete_portfolio(&p, &Forecaster::Random(params), 0.9, 1, 0).unwrap();
        assert_eq!(c.accounts[0].receipts, vec![100.0; 6]);
    }

    #[test]
    fn completion_is_deterministic_per_trial() {
        let p = Portfolio::new(vec![open_account("A1", 2, 24)], "t").unwrap();
        let f = Forecaster::Random(RandomDefaultsParams { b: 0.5, truncation: None });
        let a = complete_portfolio(&p, &f, 0.9, 9, 0).unwrap();
        let b = complete_portfolio(&p, &f, 0.9, 9, 0).unwrap();
        assert_eq!(a.accounts[0].receipts, b.accounts[0].receipts);
        let c = complete_portfolio(&p, &f, 0.9, 9, 1).unwrap();
        assert_ne!(a.accounts[0].receipts, c.accounts[0].receipts);
    }

    #[test]
    fn accounts_come_out_sorted_by_id() {
        let mut one = open_account("B2", 2, 6);
        one.account_id = "B2".into();
        let two = open_account("A1", 2, 6);
        let p = Portfolio::new(vec![one, two], "t").unwrap();
        let f = Forecaster::Random(RandomDefaultsParams { b: 1.0, truncation: None });
        let c = complete_portfolio(&p, &f, 0.9, 1, 0).unwrap();
        assert_eq!(c.accounts[0].account_id, "A1");
        assert_eq!(c.accounts[1].account_id, "B2");
    }
}
