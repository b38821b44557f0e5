//! Contractual delinquency measurement.
//!
//! The measure g1 counts monthly payments in arrears as an integer level. Per period
//! the repayment ratio h_t = R_t/I_t decides the move: a ratio below the payment
//! threshold p raises the level by one; otherwise the level drops by one per whole
//! extra instalment paid (paying exactly one instalment holds it). The level never
//! goes below zero and can only ever rise by one per period, which is what lets the
//! eight-state chain in [`crate::markov_defaults`] mirror this measure exactly.

use crate::error::{Error, Result};

/// Default payment threshold: a receipt under 90% of the instalment counts as missed.
pub const DEFAULT_PAYMENT_THRESHOLD: f64 = 0.9;

/// Slack added before flooring the whole-instalment count. Receipts that are exact
/// multiples of the instalment would otherwise floor one level short whenever the
/// division rounds down by one ulp; payment amounts carry two decimals, so 1e-9 can
/// never absorb a genuine underpayment.
const RATIO_FLOOR_SLACK: f64 = 1e-9;

/// Per-period delinquency levels for one account.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelinquencyProfile {
    /// g1(t) for t = 1..=T.
    pub levels: Vec<u32>,
    /// max over levels.
    pub max_level: u32,
}

impl DelinquencyProfile {
    /// Level at 1-based period `t`.
    pub fn level_at(&self, t: usize) -> Option<u32> {
        if t >= 1 {
            self.levels.get(t - 1).copied()
        } else {
            None
        }
    }
}

/// Repayment ratio h_t = R_t / I_t; a zero instalment counts as fully paid (h = 1).
pub fn repayment_ratio(receipt: f64, instalment: f64) -> Result<f64> {
    if receipt < 0.0 || instalment < 0.0 {
        return Err(Error::Domain(format!(
            "negative cash amount: receipt {receipt}, instalment {instalment}"
        )));
    }
    if instalment == 0.0 {
        return Ok(1.0);
    }
    Ok(receipt / instalment)
}

/// One step of the level recursion: the level after a month with the given
/// instalment and receipt, starting from level `g`.
///
/// If h_t < p the level rises by one, else it becomes
/// `max(0, g - (floor(R_t/I_t) - 1))` - hold at one whole instalment, cure one level
/// per whole extra instalment. Zero-instalment months hold the level.
pub fn step_level(g: u32, instalment: f64, receipt: f64, p: f64) -> Result<u32> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain(format!("payment threshold {p} outside (0, 1]")));
    }
    let h = repayment_ratio(receipt, instalment)?;
    if h < p {
        Ok(g + 1)
    } else {
        // Whole instalments paid; 1 when nothing was owed this month.
        let whole = if instalment == 0.0 {
            1i64
        } else {
            (receipt / instalment + RATIO_FLOOR_SLACK).floor() as i64
        };
        Ok((g as i64 - (whole - 1)).max(0) as u32)
    }
}

/// Measure g1 over a receipt/instalment series: g1(0) = 0, then one
/// [`step_level`] per observed month.
pub fn measure_g1(instalments: &[f64], receipts: &[f64], p: f64) -> Result<DelinquencyProfile> {
    if instalments.len() != receipts.len() {
        return Err(Error::Domain(format!(
            "series length mismatch: {} instalments vs {} receipts",
            instalments.len(),
            receipts.len()
        )));
    }
    if instalments.is_empty() {
        return Err(Error::Domain("empty payment series".into()));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain(format!("payment threshold {p} outside (0, 1]")));
    }
    let mut g: u32 = 0;
    let mut levels = Vec::with_capacity(instalments.len());
    let mut max_level = 0u32;
    for (i_t, r_t) in instalments.iter().zip(receipts) {
        g = step_level(g, *i_t, *r_t, p)?;
        max_level = max_level.max(g);
        levels.push(g);
    }
    Ok(DelinquencyProfile { levels, max_level })
}

/// Earliest 1-based period with g1(t) >= d, or `None` if the threshold is never breached.
pub fn default_time(profile: &DelinquencyProfile, d: u32) -> Option<usize> {
    debug_assert!(d >= 1, "threshold grid starts at 1");
    profile.levels.iter().position(|&g| g >= d).map(|i| i + 1)
}

/// Maximum delinquency level attained over the profile.
pub fn max_delinquency(profile: &DelinquencyProfile) -> Result<u32> {
    if profile.levels.is_empty() {
        return Err(Error::Domain("empty delinquency profile".into()));
    }
    Ok(profile.max_level)
}

/// One-period differences delta_t = g1(t) - g1(t-1), with g1(0) = 0.
pub fn delta_series(profile: &DelinquencyProfile) -> Vec<i64> {
    let mut prev = 0i64;
    profile
        .levels
        .iter()
        .map(|&g| {
            let d = g as i64 - prev;
            prev = g as i64;
            d
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn levels(i: &[f64], r: &[f64]) -> Vec<u32> {
        measure_g1(i, r, DEFAULT_PAYMENT_THRESHOLD).unwrap().levels
    }

    #[test]
    fn ratio_full_payment() {
        assert_eq!(repayment_ratio(100.0, 100.0).unwrap(), 1.0);
    }

    #[test]
    fn ratio_direct_division() {
        assert_eq!(repayment_ratio(45.0, 50.0).unwrap(), 0.9);
    }

    #[test]
    fn ratio_zero_instalment_counts_as_paid() {
        assert_eq!(repayment_ratio(0.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn ratio_rejects_negative() {
        assert!(repayment_ratio(-1.0, 100.0).is_err());
        assert!(repayment_ratio(1.0, -100.0).is_err());
    }

    #[test]
    fn hand_trace_with_triple_payment_cure() {
        // Month 4 pays 3 instalments: cures floor(3) - 1 = 2 levels.
        let i = [100.0; 5];
        let r = [100.0, 0.0, 0.0, 300.0, 100.0];
        assert_eq!(levels(&i, &r), vec![0, 1, 2, 0, 0]);
    }

    #[test]
    fn constant_full_payment_stays_clean() {
        let i = [250.0; 8];
        let r = [250.0; 8];
        assert_eq!(levels(&i, &r), vec![0; 8]);
    }

    #[test]
    fn monotone_increment_without_payment() {
        let i = [100.0; 5];
        let r = [0.0; 5];
        assert_eq!(levels(&i, &r), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn exact_multiple_receipts_survive_float_rounding() {
        // 7 instalments of an awkward amount, then one receipt of exactly 3x: the
        // ratio must floor to 3, not 2, despite f64 rounding in the product.
        let ic = 1234.5678 / 7.0;
        let i = [ic; 4];
        let r = [ic, 0.0, 0.0, 3.0 * ic];
        assert_eq!(levels(&i, &r), vec![0, 1, 2, 0]);
    }

    #[test]
    fn zero_instalment_month_holds_level() {
        let i = [100.0, 100.0, 0.0, 100.0];
        let r = [0.0, 0.0, 0.0, 100.0];
        assert_eq!(levels(&i, &r), vec![1, 2, 2, 2]);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(measure_g1(&[1.0], &[1.0, 2.0], 0.9).is_err());
    }

    #[test]
    fn threshold_outside_unit_interval_rejected() {
        assert!(measure_g1(&[1.0], &[1.0], 0.0).is_err());
        assert!(measure_g1(&[1.0], &[1.0], 1.1).is_err());
    }

    #[test]
    fn default_time_first_breach() {
        let p = DelinquencyProfile { levels: vec![0, 1, 2, 3], max_level: 3 };
        assert_eq!(default_time(&p, 2), Some(3));
    }

    #[test]
    fn default_time_absent_when_clean() {
        let p = DelinquencyProfile { levels: vec![0, 0, 0], max_level: 0 };
        assert_eq!(default_time(&p, 1), None);
    }

    #[test]
    fn default_time_earliest_despite_later_cure() {
        let p = DelinquencyProfile { levels: vec![0, 1, 0, 1, 2], max_level: 2 };
        assert_eq!(default_time(&p, 1), Some(2));
    }

    #[test]
    fn max_delinquency_direct() {
        let p = DelinquencyProfile { levels: vec![0, 1, 2, 0], max_level: 2 };
        assert_eq!(max_delinquency(&p).unwrap(), 2);
        let q = DelinquencyProfile { levels: vec![0, 0], max_level: 0 };
        assert_eq!(max_delinquency(&q).unwrap(), 0);
    }

    #[test]
    fn max_delinquency_of_hand_trace() {
        let i = [100.0; 5];
        let r = [100.0, 0.0, 0.0, 300.0, 100.0];
        let p = measure_g1(&i, &r, DEFAULT_PAYMENT_THRESHOLD).unwrap();
        assert_eq!(max_delinquency(&p).unwrap(), 2);
    }

    #[test]
    fn delta_series_pairwise_difference() {
        let p = DelinquencyProfile { levels: vec![1, 2, 0], max_level: 2 };
        assert_eq!(delta_series(&p), vec![1, 1, -2]);
    }

    #[test]
    fn delta_series_constant_clean_profile_is_zero() {
        let p = DelinquencyProfile { levels: vec![0, 0, 0], max_level: 0 };
        assert_eq!(delta_series(&p), vec![0, 0, 0]);
    }

    #[test]
    fn delta_series_first_difference_uses_zero_origin() {
        // Hand-built profile; the first delta is measured against g1(0) = 0.
        let p = DelinquencyProfile { levels: vec![2, 2, 2], max_level: 2 };
        assert_eq!(delta_series(&p), vec![2, 0, 0]);
    }

    proptest! {
        // Single-step increase invariant for arbitrary cash series.
        #[test]
        fn single_step_increase(
            pairs in proptest::collection::vec((0.0f64..500.0, 0.0f64..1500.0), 1..60)
        ) {
            let (i, r): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let prof = measure_g1(&i, &r, DEFAULT_PAYMENT_THRESHOLD).unwrap();
            for d in delta_series(&prof) {
                prop_assert!(d <= 1);
            }
            prop_assert_eq!(prof.max_level, *prof.levels.iter().max().unwrap());
        }

        // Pointwise-smaller receipts never lower any delinquency level.
        #[test]
        fn monotone_response_to_receipts(
            rows in proptest::collection::vec((1.0f64..500.0, 0.0f64..1500.0, 0.0f64..1.0), 1..40)
        ) {
            let i: Vec<f64> = rows.iter().map(|(a, _, _)| *a).collect();
            let r: Vec<f64> = rows.iter().map(|(_, b, _)| *b).collect();
            let cut: Vec<f64> = rows.iter().map(|(_, b, f)| b * f).collect();
            let full = measure_g1(&i, &r, DEFAULT_PAYMENT_THRESHOLD).unwrap();
            let reduced = measure_g1(&i, &cut, DEFAULT_PAYMENT_THRESHOLD).unwrap();
            for (a, b) in full.levels.iter().zip(&reduced.levels) {
                prop_assert!(b >= a);
            }
        }
    }
}
