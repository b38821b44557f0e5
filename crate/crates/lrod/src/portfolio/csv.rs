//! CSV ingestion and canonical output for loan performance data.
//!
//! Expected header:
//! `account_id,period,instalment,receipt,balance,annual_rate,writeoff_flag,writeoff_recovery,settle_flag`
//!
//! Monetary amounts carry two decimals, rates six; `period` is 1-based and contiguous
//! per account; flags are 0/1 and may be set on at most one row per account (the
//! closure row, which is also the account's last row). The three closure columns are
//! optional as a group: a file without them is an all-open book.
//!
//! The file does not carry origination metadata, so two conventions close the gap:
//! the contractual term comes from [`CsvSchema`] (one book per file), and the original
//! advance is reconstructed from the first row by reversing one month of accrual,
//! `principal = round2((balance_1 + receipt_1) / (1 + rate/12))`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::portfolio::{Closure, LoanHistory, MonthlyRecord, Portfolio};

/// Loader settings: the contractual term shared by every account in the file.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    /// Contractual term t_c applied to every account, in months.
    pub contractual_term: u32,
}

impl CsvSchema {
    pub fn with_term(contractual_term: u32) -> Self {
        CsvSchema { contractual_term }
    }
}

impl Default for CsvSchema {
    /// 240 months: a standard long-dated mortgage book.
    fn default() -> Self {
        CsvSchema { contractual_term: 240 }
    }
}

const REQUIRED_COLUMNS: [&str; 6] =
    ["account_id", "period", "instalment", "receipt", "balance", "annual_rate"];

struct RawRow {
    period: u32,
    instalment: f64,
    receipt: f64,
    balance: f64,
    annual_rate: f64,
    writeoff: bool,
    recovery: f64,
    settle: bool,
}

fn parse_amount(field: &str, what: &str, line: u64) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| {
        Error::Data(format!("line {line}: {what} {field:?} is not a number"))
    })?;
    if !v.is_finite() {
        return Err(Error::Data(format!("line {line}: {what} {field:?} is not finite")));
    }
    Ok(v)
}

fn parse_flag(field: &str, what: &str, line: u64) -> Result<bool> {
    match field.trim() {
        "0" | "" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::Data(format!("line {line}: {what} must be 0 or 1, got {other:?}"))),
    }
}

/// Load a portfolio from `path`. Row order within an account may be arbitrary; rows
/// are grouped by id, sorted by period, and validated per account.
pub fn load_portfolio(path: &Path, schema: &CsvSchema) -> Result<Portfolio> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "portfolio".to_string());
    read_portfolio(file, &label, schema)
}

/// Load a portfolio from any reader; `source` labels the portfolio and error messages.
pub fn read_portfolio(r: impl std::io::Read, source: &str, schema: &CsvSchema) -> Result<Portfolio> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r);

    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("{source}: cannot read header: {e}")))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = std::collections::HashMap::new();
    for name in REQUIRED_COLUMNS {
        match col(name) {
            Some(i) => {
                idx.insert(name, i);
            }
            None => {
                return Err(Error::Schema(format!(
                    "{source}: missing required column {name:?}"
                )))
            }
        }
    }
    let wo_col = col("writeoff_flag");
    let rec_col = col("writeoff_recovery");
    let settle_col = col("settle_flag");
    // The closure columns travel together.
    let closure_cols = [wo_col, rec_col, settle_col];
    if closure_cols.iter().any(Option::is_some) && closure_cols.iter().any(Option::is_none) {
        return Err(Error::Schema(format!(
            "{source}: closure columns writeoff_flag/writeoff_recovery/settle_flag must appear together"
        )));
    }

    let mut by_account: BTreeMap<String, Vec<RawRow>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Data(format!("{source}: {e}")))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("");

        let id = field(idx["account_id"]).to_string();
        if id.is_empty() {
            return Err(Error::Data(format!("line {line}: empty account_id")));
        }
        let period: u32 = field(idx["period"]).parse().map_err(|_| {
            Error::Data(format!("line {line}: period {:?} is not a positive integer", field(idx["period"])))
        })?;
        let row = RawRow {
            period,
            instalment: parse_amount(field(idx["instalment"]), "instalment", line)?,
            receipt: parse_amount(field(idx["receipt"]), "receipt", line)?,
            balance: parse_amount(field(idx["balance"]), "balance", line)?,
            annual_rate: parse_amount(field(idx["annual_rate"]), "annual_rate", line)?,
            writeoff: match wo_col {
                Some(i) => parse_flag(field(i), "writeoff_flag", line)?,
                None => false,
            },
            recovery: match rec_col {
                Some(i) => {
                    let raw = field(i);
                    if raw.is_empty() { 0.0 } else { parse_amount(raw, "writeoff_recovery", line)? }
                }
                None => 0.0,
            },
            settle: match settle_col {
                Some(i) => parse_flag(field(i), "settle_flag", line)?,
                None => false,
            },
        };
        by_account.entry(id).or_default().push(row);
    }

    if by_account.is_empty() {
        return Err(Error::Data(format!("{source}: no data rows")));
    }

    let mut accounts = Vec::with_capacity(by_account.len());
    for (id, mut rows) in by_account {
        rows.sort_by_key(|r| r.period);
        for w in rows.windows(2) {
            if w[0].period == w[1].period {
                return Err(Error::Data(format!("account {id}: duplicate period {}", w[0].period)));
            }
        }

        let mut closure = Closure::Open;
        for r in &rows {
            if r.writeoff && r.settle {
                return Err(Error::Data(format!(
                    "account {id}: period {} flags both write-off and settlement",
                    r.period
                )));
            }
            if r.recovery != 0.0 && !r.writeoff {
                return Err(Error::Data(format!(
                    "account {id}: recovery on period {} without writeoff_flag",
                    r.period
                )));
            }
            if r.writeoff || r.settle {
                if !matches!(closure, Closure::Open) {
                    return Err(Error::Data(format!("account {id}: multiple closure rows")));
                }
                if r.period != rows.last().map(|x| x.period).unwrap_or(0) {
                    return Err(Error::Data(format!(
                        "account {id}: closure at period {} is not the last observed row",
                        r.period
                    )));
                }
                closure = if r.writeoff {
                    Closure::WrittenOff { period: r.period, recovery: r.recovery }
                } else {
                    Closure::Settled { period: r.period }
                };
            }
        }

        let annual_rate = rows.last().map(|r| r.annual_rate).unwrap_or(0.0);
        if annual_rate < 0.0 {
            return Err(Error::Data(format!("account {id}: negative annual_rate {annual_rate}")));
        }
        let first = &rows[0];
        let principal =
            round2((first.balance + first.receipt) / (1.0 + first.annual_rate / 12.0));
        if principal <= 0.0 {
            return Err(Error::Data(format!(
                "account {id}: cannot reconstruct a positive principal from the first row"
            )));
        }

        let records = rows
            .iter()
            .map(|r| MonthlyRecord {
                period: r.period,
                instalment: r.instalment,
                receipt: r.receipt,
                balance: r.balance,
            })
            .collect();
        accounts.push(LoanHistory::new(
            id,
            schema.contractual_term,
            principal,
            annual_rate,
            records,
            closure,
        )?);
    }

    Portfolio::new(accounts, source)
}

/// Write a portfolio in the canonical format: amounts with two decimals, rates with
/// six, flag columns always present. Loading the output and writing it again
/// reproduces the file byte for byte.
pub fn write_portfolio(p: &Portfolio, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    w.write_record([
        "account_id",
        "period",
        "instalment",
        "receipt",
        "balance",
        "annual_rate",
        "writeoff_flag",
        "writeoff_recovery",
        "settle_flag",
    ])?;
    for a in &p.accounts {
        for r in &a.records {
            let (wo, recovery, settle) = match &a.closure {
                Closure::WrittenOff { period, recovery } if *period == r.period => {
                    (1, *recovery, 0)
                }
                Closure::Settled { period } if *period == r.period => (0, 0.0, 1),
                _ => (0, 0.0, 0),
            };
            w.write_record([
                a.account_id.as_str(),
                &r.period.to_string(),
                &format!("{:.2}", r.instalment),
                &format!("{:.2}", r.receipt),
                &format!("{:.2}", r.balance),
                &format!("{:.6}", a.annual_interest_rate),
                &wo.to_string(),
                &format!("{:.2}", recovery),
                &settle.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(())
}

pub(crate) fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}
