//! Residual construction and the nonparametric CUSUM anomaly detector.
//!
//! The residual is the norm of the gap between the measured output and the
//! self-generated reference trajectory. The CUSUM statistic accumulates
//! whatever part of the residual exceeds the drift and declares an attack
//! once the accumulated mass crosses the threshold, after which the statistic
//! restarts at zero.

use nalgebra::DVector;

use crate::dynamics::State;
use crate::{Error, Result};

/// Vector norm used for residuals and proximity checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    Euclidean,
    Infinity,
}

impl Norm {
    pub fn eval(&self, v: &DVector<f64>) -> f64 {
        match self {
            Norm::Euclidean => v.norm(),
            Norm::Infinity => v.amax(),
        }
    }
}

/// One residual sample: nonnegative magnitude plus the step it was measured at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub value: f64,
    pub step: u64,
}

/// CUSUM statistic with drift, threshold, and alarm bookkeeping.
///
/// `alarm_step` is the time index of the statistic value that crossed the
/// threshold: the update consuming the residual of step `k` produces the
/// statistic indexed `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CusumState {
    pub statistic: f64,
    pub drift: f64,
    pub threshold: f64,
    pub alarmed: bool,
    pub alarm_step: Option<u64>,
}

impl CusumState {
    pub fn new(drift: f64, threshold: f64) -> Result<Self> {
        if !(drift > 0.0 && drift.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "detector.delta must be positive and finite, got {drift}"
            )));
        }
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "detector.gamma must be positive and finite, got {threshold}"
            )));
        }
        Ok(CusumState {
            statistic: 0.0,
            drift,
            threshold,
            alarmed: false,
            alarm_step: None,
        })
    }

    /// Advance the statistic by one residual sample.
    ///
    /// Returns the updated state together with the raw statistic value before
    /// the restart-on-alarm reset; callers log the raw value so threshold
    /// crossings stay visible in the record.
    pub fn update(&self, r: &Residual) -> (CusumState, f64) {
        let raw = (self.statistic + r.value - self.drift).max(0.0);
        let mut next = self.clone();
        if raw > self.threshold {
            next.statistic = 0.0;
            next.alarmed = true;
            if next.alarm_step.is_none() {
                next.alarm_step = Some(r.step + 1);
            }
        } else {
            next.statistic = raw;
        }
        (next, raw)
    }
}

/// Residual between a measured output and its reference point.
pub fn residual(y: &State, ytilde: &State, norm: Norm, step: u64) -> Result<Residual> {
    if y.dim() != ytilde.dim() {
        return Err(Error::DimensionMismatch {
            what: "residual operands",
            expected: y.dim(),
            got: ytilde.dim(),
        });
    }
    Ok(Residual {
        value: norm.eval(&(&y.0 - &ytilde.0)),
        step,
    })
}

/// Memoryless per-sample test: alarm iff the residual strictly exceeds the
/// threshold. Kept for baseline comparison against the stateful CUSUM.
pub fn stateless_check(r: &Residual, gamma: f64) -> bool {
    r.value > gamma
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn run_updates(mut s: CusumState, residuals: &[f64]) -> (CusumState, Vec<f64>) {
        let mut raws = Vec::new();
        for (k, &value) in residuals.iter().enumerate() {
            let (next, raw) = s.update(&Residual {
                value,
                step: k as u64,
            });
            raws.push(raw);
            s = next;
        }
        (s, raws)
    }

    #[test]
    fn residual_examples() {
        let a = State::from_slice(&[0.5, 0.5]);
        assert_eq!(residual(&a, &a, Norm::Euclidean, 0).unwrap().value, 0.0);

        let r = residual(
            &State::from_slice(&[0.51, 0.5]),
            &State::from_slice(&[0.5, 0.5]),
            Norm::Euclidean,
            1,
        )
        .unwrap();
        assert_abs_diff_eq!(r.value, 0.01, epsilon = 1e-15);

        let r = residual(
            &State::from_slice(&[0.51, 0.49]),
            &State::from_slice(&[0.5, 0.5]),
            Norm::Infinity,
            2,
        )
        .unwrap();
        assert_abs_diff_eq!(r.value, 0.01, epsilon = 1e-15);

        assert!(residual(&a, &State::from_slice(&[0.5]), Norm::Euclidean, 0).is_err());
    }

    #[test]
    fn small_residual_keeps_statistic_at_zero() {
        let s = CusumState::new(0.01, 0.1).unwrap();
        let (next, raw) = s.update(&Residual { value: 0.005, step: 0 });
        assert_eq!(next.statistic, 0.0);
        assert_eq!(raw, 0.0);
        assert!(!next.alarmed);
    }

    #[test]
    fn accumulation_without_alarm() {
        let mut s = CusumState::new(0.01, 0.1).unwrap();
        s.statistic = 0.02;
        let (next, raw) = s.update(&Residual { value: 0.05, step: 3 });
        assert_abs_diff_eq!(next.statistic, 0.06, epsilon = 1e-15);
        assert_abs_diff_eq!(raw, 0.06, epsilon = 1e-15);
        assert!(!next.alarmed);
    }

    #[test]
    fn constant_excess_alarms_on_sixth_update_and_restarts() {
        // Gains 0.02 per update; the fifth reaches 0.10 (not strictly above),
        // the sixth reaches 0.12 > 0.1.
        let s = CusumState::new(0.01, 0.1).unwrap();
        let (end, raws) = run_updates(s, &[0.03; 6]);
        assert!(!raws[..5].iter().any(|&r| r > 0.1));
        assert!(raws[5] > 0.1);
        assert!(end.alarmed);
        assert_eq!(end.alarm_step, Some(6));
        assert_eq!(end.statistic, 0.0);
    }

    #[test]
    fn stateless_check_is_strict() {
        assert!(stateless_check(&Residual { value: 0.5, step: 0 }, 0.1));
        assert!(!stateless_check(&Residual { value: 0.1, step: 0 }, 0.1));
        assert!(!stateless_check(&Residual { value: 0.0, step: 0 }, 0.7));
    }

    /// Straight-line re-implementation of the recursion used as the oracle.
    fn oracle(residuals: &[f64], delta: f64, gamma: f64) -> (Vec<f64>, Vec<u64>) {
        let mut s = 0.0f64;
        let mut raws = Vec::with_capacity(residuals.len());
        let mut alarms = Vec::new();
        for (k, &r) in residuals.iter().enumerate() {
            let raw = (s + r - delta).max(0.0);
            raws.push(raw);
            if raw > gamma {
                alarms.push(k as u64 + 1);
                s = 0.0;
            } else {
                s = raw;
            }
        }
        (raws, alarms)
    }

    #[test]
    fn matches_straight_line_oracle_bit_for_bit() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let n = rng.random_range(1..=1000);
            let residuals: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.08)).collect();
            let (oracle_raws, oracle_alarms) = oracle(&residuals, 0.01, 0.1);

            let mut s = CusumState::new(0.01, 0.1).unwrap();
            let mut raws = Vec::new();
            let mut alarms = Vec::new();
            for (k, &value) in residuals.iter().enumerate() {
                let (next, raw) = s.update(&Residual { value, step: k as u64 });
                raws.push(raw);
                if raw > s.threshold {
                    alarms.push(k as u64 + 1);
                }
                s = next;
            }
            assert_eq!(raws, oracle_raws, "statistic sequences must be bit-equal");
            assert_eq!(alarms, oracle_alarms);
        }
    }

    proptest! {
        /// Residuals at or below the drift never grow the statistic.
        #[test]
        fn quiescence(values in proptest::collection::vec(0.0f64..=0.01, 1..200)) {
            let s = CusumState::new(0.01, 0.1).unwrap();
            let (end, raws) = run_updates(s, &values);
            prop_assert!(raws.iter().all(|&r| r == 0.0));
            prop_assert!(!end.alarmed);
            prop_assert_eq!(end.statistic, 0.0);
        }

        /// Pointwise-larger residuals never alarm later.
        #[test]
        fn monotone_response(
            base in proptest::collection::vec(0.0f64..0.05, 1..300),
            bumps in proptest::collection::vec(0.0f64..0.05, 1..300),
        ) {
            let n = base.len().min(bumps.len());
            let lo = &base[..n];
            let hi: Vec<f64> = lo.iter().zip(&bumps[..n]).map(|(a, b)| a + b).collect();
            let s = CusumState::new(0.01, 0.1).unwrap();
            let (end_lo, _) = run_updates(s.clone(), lo);
            let (end_hi, _) = run_updates(s, &hi);
            if let Some(step_lo) = end_lo.alarm_step {
                let step_hi = end_hi.alarm_step.expect("larger residuals must also alarm");
                prop_assert!(step_hi <= step_lo);
            }
        }

        /// The statistic is nonnegative after every update.
        #[test]
        fn statistic_nonnegative(values in proptest::collection::vec(0.0f64..1.0, 1..200)) {
            let s = CusumState::new(0.01, 0.1).unwrap();
            let (_, raws) = run_updates(s, &values);
            prop_assert!(raws.iter().all(|&r| r >= 0.0));
        }
    }
}
