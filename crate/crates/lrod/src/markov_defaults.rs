//! Markovian defaults forecasting: an eight-state delinquency chain.
//!
//! States x0..x5 carry delinquency levels 0..5, x6 is the semi-absorbing bucket for
//! levels of six and deeper, x7 is write-off and fully absorbing. Each account's
//! observed months form one realisation of the chain, so transition probabilities are
//! estimated by pooled count ratios. Forecast receipts fall out of the level
//! differences along a simulated path: hold pays one instalment, each level cured
//! pays one extra, any worsening pays nothing.

use rand::Rng;

use crate::amort;
use crate::delinquency::DEFAULT_PAYMENT_THRESHOLD;
use crate::error::{Error, Result};
use crate::portfolio::{Closure, LoanHistory, Portfolio};

pub const STATE_COUNT: usize = 8;

/// Index of the write-off state.
pub const WRITE_OFF: DelinquencyState = DelinquencyState(7);
/// Index of the deep-delinquency bucket.
pub const DEEP_BUCKET: DelinquencyState = DelinquencyState(6);

/// One of the eight chain states x0..x7.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DelinquencyState(u8);

impl DelinquencyState {
    pub fn new(index: usize) -> Result<Self> {
        if index < STATE_COUNT {
            Ok(DelinquencyState(index as u8))
        } else {
            Err(Error::Domain(format!("state index {index} outside 0..8")))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// The delinquency level this state stands for. The deep bucket x6 is pinned to
    /// its boundary level 6; write-off has no level.
    pub fn effective_level(self) -> Option<i64> {
        match self.0 {
            7 => None,
            i => Some(i64::from(i.min(6))),
        }
    }
}

impl std::fmt::Display for DelinquencyState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "x{}", self.0)
    }
}

/// Map an observed delinquency level and write-off flag to a chain state.
pub fn state_of(g1_level: u32, written_off: bool) -> DelinquencyState {
    if written_off {
        WRITE_OFF
    } else if g1_level >= 6 {
        DEEP_BUCKET
    } else {
        DelinquencyState(g1_level as u8)
    }
}

/// Row-stochastic 8x8 transition matrix plus the counts that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    p: [[f64; STATE_COUNT]; STATE_COUNT],
    counts: [[u64; STATE_COUNT]; STATE_COUNT],
    /// Per-row cumulative sums, precomputed for inverse-CDF sampling.
    cumulative: [[f64; STATE_COUNT]; STATE_COUNT],
}

impl TransitionMatrix {
    /// Validate and build. Rows must sum to one within 1e-9; states x0..x5 may not
    /// jump more than one level up except straight to write-off; x7 must be absorbing.
    pub fn new(p: [[f64; STATE_COUNT]; STATE_COUNT], counts: [[u64; STATE_COUNT]; STATE_COUNT]) -> Result<Self> {
        for (i, row) in p.iter().enumerate() {
            let mut sum = 0.0;
            for (j, v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(v) || !v.is_finite() {
                    return Err(Error::Domain(format!("p[{i}][{j}] = {v} is not a probability")));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Domain(format!("row {i} sums to {sum}, not 1 within 1e-9")));
            }
            if i <= 5 {
                for (j, v) in row.iter().enumerate().take(7).skip(i + 2) {
                    if *v != 0.0 {
                        return Err(Error::Domain(format!(
                            "p[{i}][{j}] = {v} violates the single-step-up structure"
                        )));
                    }
                }
            }
        }
        for (j, v) in p[7].iter().enumerate() {
            let expected = if j == 7 { 1.0 } else { 0.0 };
            if *v != expected {
                return Err(Error::Domain(format!("write-off row must be absorbing, p[7][{j}] = {v}")));
            }
        }

        let mut cumulative = [[0.0; STATE_COUNT]; STATE_COUNT];
        for i in 0..STATE_COUNT {
            let mut acc = 0.0;
            for j in 0..STATE_COUNT {
                acc += p[i][j];
                cumulative[i][j] = acc;
            }
        }
        Ok(TransitionMatrix { p, counts, cumulative })
    }

    pub fn p(&self) -> &[[f64; STATE_COUNT]; STATE_COUNT] {
        &self.p
    }

    pub fn counts(&self) -> &[[u64; STATE_COUNT]; STATE_COUNT] {
        &self.counts
    }

    /// Inverse-CDF draw from row `from` at uniform `u`: the lowest positive-probability
    /// state whose cumulative reaches u, falling back to the last positive entry when
    /// u lands in the residual rounding gap above the final cumulative.
    pub fn sample_next(&self, from: DelinquencyState, u: f64) -> DelinquencyState {
        let i = from.index();
        for j in 0..STATE_COUNT {
            if self.p[i][j] > 0.0 && self.cumulative[i][j] >= u {
                return DelinquencyState(j as u8);
            }
        }
        let last = (0..STATE_COUNT).rfind(|j| self.p[i][*j] > 0.0);
        DelinquencyState(last.expect("stochastic row has a positive entry") as u8)
    }

    /// Four-decimal table of the matrix. Each printed row is rounded by largest
    /// remainder so it sums to exactly 1.0000, which plain rounding does not
    /// guarantee; structural zeros always print as 0.0000.
    pub fn render(&self) -> String {
        let mut out = String::from("      ");
        for j in 0..STATE_COUNT {
            out.push_str(&format!("     x{j}"));
        }
        out.push('\n');
        for (i, row) in self.p.iter().enumerate() {
            out.push_str(&format!("x{i}    "));
            for v in round_row_to_basis_points(row) {
                out.push_str(&format!(" {:.4}", v as f64 / 10_000.0));
            }
            out.push('\n');
        }
        out
    }
}

/// Round a stochastic row to integer basis points summing to exactly 10,000: floor
/// everything, then hand the shortfall to the largest fractional remainders (lowest
/// index on ties). Zero entries have no remainder and are never bumped.
fn round_row_to_basis_points(row: &[f64; STATE_COUNT]) -> [u64; STATE_COUNT] {
    let mut floors = [0u64; STATE_COUNT];
    let mut remainders = [(0usize, 0.0f64); STATE_COUNT];
    let mut total = 0u64;
    for (j, v) in row.iter().enumerate() {
        let scaled = v * 10_000.0;
        let fl = scaled.floor();
        floors[j] = fl as u64;
        remainders[j] = (j, scaled - fl);
        total += floors[j];
    }
    let deficit = 10_000u64.saturating_sub(total);
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for k in 0..deficit as usize {
        floors[remainders[k].0] += 1;
    }
    floors
}

/// The state path an observed history traces: the implicit clean start, one state per
/// observed month (from the delinquency profile), and x7 from the write-off period on.
pub fn state_sequence(account: &LoanHistory, p: f64) -> Result<Vec<DelinquencyState>> {
    let profile = account.observed_profile(p)?;
    let writeoff_period = match &account.closure {
        Closure::WrittenOff { period, .. } => Some(*period),
        _ => None,
    };
    let mut seq = Vec::with_capacity(profile.levels.len() + 1);
    seq.push(state_of(0, false));
    for (idx, level) in profile.levels.iter().enumerate() {
        let t = idx as u32 + 1;
        let written_off = writeoff_period.map(|w| t >= w).unwrap_or(false);
        seq.push(state_of(*level, written_off));
    }
    Ok(seq)
}

/// Pooled maximum-likelihood estimate p_ij = n_ij / n_i* across every account and
/// period, treating each history as a repeated observation of one stationary chain.
/// Rows never observed leaving get a self-loop: absent evidence a state neither cures
/// nor worsens, and the absorbing write-off row is the same rule applied to x7.
pub fn estimate_transition_matrix(sample: &Portfolio, p_threshold: f64) -> Result<TransitionMatrix> {
    if sample.is_empty() {
        return Err(Error::Domain("cannot estimate transitions on an empty portfolio".into()));
    }
    let mut counts = [[0u64; STATE_COUNT]; STATE_COUNT];
    for account in &sample.accounts {
        let seq = state_sequence(account, p_threshold)?;
        for w in seq.windows(2) {
            counts[w[0].index()][w[1].index()] += 1;
        }
    }
    let mut p = [[0.0; STATE_COUNT]; STATE_COUNT];
    for i in 0..STATE_COUNT {
        let n_i: u64 = counts[i].iter().sum();
        if n_i == 0 {
            p[i][i] = 1.0;
        } else {
            for j in 0..STATE_COUNT {
                p[i][j] = counts[i][j] as f64 / n_i as f64;
            }
        }
    }
    TransitionMatrix::new(p, counts)
}

/// Simulate `n` steps from `start`; deterministic given the stream.
pub fn simulate_state_path(
    start: DelinquencyState,
    m: &TransitionMatrix,
    n: usize,
    rng: &mut impl Rng,
) -> Vec<DelinquencyState> {
    let mut path = Vec::with_capacity(n);
    let mut state = start;
    for _ in 0..n {
        state = m.sample_next(state, rng.random::<f64>());
        path.push(state);
    }
    path
}

/// Converts a state path into monthly receipts, one transition at a time.
///
/// A level drop of delta months repays the skipped instalments plus the current
/// one, holding the level repays exactly one, and a rise pays nothing. The deep
/// bucket is treated prudently: while in it nothing is received and the level
/// stays pinned at its boundary, so a later cure to x_j repays relative to that
/// boundary rather than the true (unobservable) depth.
#[derive(Debug, Clone)]
pub struct ReceiptRule {
    level: i64,
}

impl ReceiptRule {
    /// Start from a live state; a written-off account has no receipts to derive.
    pub fn new(start: DelinquencyState) -> Result<Self> {
        match start.effective_level() {
            Some(level) => Ok(ReceiptRule { level }),
            None => Err(Error::Precondition("receipt rule cannot start from a write-off".into())),
        }
    }

    /// Receipt for the transition into `next`, or None on write-off.
    pub fn step(&mut self, next: DelinquencyState, instalment: f64) -> Option<f64> {
        match next.effective_level() {
            None => None,
            Some(6) => {
                self.level = 6;
                Some(0.0)
            }
            Some(level) => {
                let delta = level - self.level;
                self.level = level;
                Some(if delta < 0 {
                    -instalment * (delta - 1) as f64
                } else if delta == 0 {
                    instalment
                } else {
                    0.0
                })
            }
        }
    }
}

/// A completed receipt series for one open account under the chain model.
#[derive(Debug, Clone)]
pub struct MarkovForecast {
    /// Receipts for t = 1..=t_c; history up to t0, reconstructed from the simulated
    /// path after.
    pub receipts: Vec<f64>,
    /// Level instalment I_c charged over the forecast region.
    pub instalment: f64,
    /// Simulated states for t = t0+1..=t_c.
    pub states: Vec<DelinquencyState>,
    /// First period at or after t0+1 in write-off, if the path gets there.
    pub writeoff_time: Option<usize>,
}

/// Forecast an open account to term by simulating the chain from its last observed
/// state and translating level changes into receipts.
///
/// With d_t the level change this month: a drop pays the instalment plus one per
/// level cured (-I_c(d-1)), holding pays exactly I_c, and any rise pays nothing.
/// Months inside the deep bucket pay nothing (its internal level is unobservable, so
/// the prudent worsening reading is taken); a cure out of the bucket is measured from
/// level 6. Write-off zeroes everything from entry onward.
pub fn forecast_markov(
    account: &LoanHistory,
    m: &TransitionMatrix,
    rng: &mut impl Rng,
) -> Result<MarkovForecast> {
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

    let profile = account.observed_profile(DEFAULT_PAYMENT_THRESHOLD)?;
    let start = state_of(profile.levels[t0 - 1], false);

    let mut receipts = account.effective_receipts();
    let mut states = Vec::with_capacity(tc - t0);
    let mut rule = ReceiptRule::new(start)?;
    let mut writeoff_time = None;
    let mut state = start;
    for t in t0 + 1..=tc {
        state = m.sample_next(state, rng.random::<f64>());
        states.push(state);
        match rule.step(state, instalment) {
            Some(r) => receipts.push(r),
            None => {
                // Write-off: zero now and forever after.
                writeoff_time = Some(t);
                break;
            }
        }
    }
    while receipts.len() < tc {
        receipts.push(0.0);
    }
    while states.len() < tc - t0 {
        states.push(WRITE_OFF);
    }
    Ok(MarkovForecast { receipts, instalment, states, writeoff_time })
}
