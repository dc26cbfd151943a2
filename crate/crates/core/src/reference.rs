//! Self-generated reference trajectory.
//!
//! The buffer is seeded once from the plain (no-proximity) solve at startup
//! and then extended every step with the controller's N-step-ahead
//! prediction: the value published at step k is the last entry of the step-k
//! plan. The entry for the current step feeds the detector before the solve;
//! entries one past the detector's cursor are evicted lazily.
//!
//! Timing at step k, with horizon N:
//! - the detector reads entry k;
//! - the solve uses entries k+1 .. k+N-1 as proximity centers (the entry for
//!   stage N does not exist yet -- it is this solve's own output);
//! - the solve's last predicted output is pushed as entry k+N, and entries
//!   older than k are dropped.
//!
//! Out-of-window access and non-contiguous pushes are programming bugs, not
//! runtime conditions, and panic.

use std::collections::VecDeque;

use crate::dynamics::{PlantModel, State};
use crate::nmpc::{self, MpcConfig, SolveStatus};
use crate::{Error, Result};

/// Time-indexed ring buffer over the reference trajectory.
#[derive(Debug, Clone)]
pub struct ReferenceBuffer {
    horizon: usize,
    /// Absolute time index of `entries[0]`.
    base: u64,
    entries: VecDeque<State>,
}

impl ReferenceBuffer {
    /// Seed the buffer from `y0`: entry 0 is `y0` itself and entries
    /// 1..N-1 come from the plain solve without the proximity constraint.
    /// The seeding solve is returned too so the first closed-loop step can
    /// warm-start from it instead of from scratch.
    ///
    /// Fails when the seeding solve ends `infeasible_relaxed`; that is a
    /// configuration problem (for example a terminal ball the initial state
    /// cannot reach), not something the closed loop can recover from.
    pub fn init(
        model: &dyn PlantModel,
        cfg: &MpcConfig,
        y0: &State,
    ) -> Result<(Self, nmpc::SolveResult)> {
        let mut seed_cfg = cfg.clone();
        seed_cfg.proximity = None;
        let seed = nmpc::solve(&seed_cfg, model, y0, None, None)?;
        if seed.status == SolveStatus::InfeasibleRelaxed {
            return Err(Error::Seeding(format!(
                "initial reference solve is infeasible (violation {:.3e}); \
                 check the terminal radius and state box against the initial state",
                seed.constraint_violation
            )));
        }
        let mut entries = VecDeque::with_capacity(cfg.horizon + 3);
        entries.push_back(y0.clone());
        for state in seed.predicted_outputs.iter().take(cfg.horizon.saturating_sub(1)) {
            entries.push_back(state.clone());
        }
        let buffer = ReferenceBuffer { horizon: cfg.horizon, base: 0, entries };
        Ok((buffer, seed))
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Inclusive range of time indices currently stored.
    pub fn span(&self) -> (u64, u64) {
        (self.base, self.base + self.entries.len() as u64 - 1)
    }

    pub fn contains(&self, k: u64) -> bool {
        let (lo, hi) = self.span();
        k >= lo && k <= hi
    }

    /// Reference point for step `k`. Panics outside the stored window.
    pub fn get(&self, k: u64) -> &State {
        assert!(
            self.contains(k),
            "reference index {k} outside stored window {:?}",
            self.span()
        );
        &self.entries[(k - self.base) as usize]
    }

    /// Proximity centers for the step-`k` solve: entries k+1 .. k+N-1
    /// (empty for horizon 1). Panics if the window is not available.
    pub fn window(&self, k: u64) -> Vec<State> {
        (k + 1..k + self.horizon as u64).map(|i| self.get(i).clone()).collect()
    }

    /// Publish the step-`k` solve's N-step-ahead prediction as entry k+N and
    /// drop entries older than `k` (the step-k detector has already read
    /// entry k; entry k-1 is stale by one step).
    pub fn push(&mut self, k: u64, y_star: State) {
        let (_, hi) = self.span();
        let expected = k + self.horizon as u64;
        assert!(
            hi + 1 == expected,
            "non-contiguous reference push: window ends at {hi}, push would store index {expected}"
        );
        self.entries.push_back(y_star);
        while self.base < k {
            self.entries.pop_front();
            self.base += 1;
        }
        debug_assert!(self.entries.len() <= self.horizon + 2);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{CoupledTanks, TankParams};
    use nalgebra::{dmatrix, DMatrix};

    fn setup(horizon: usize) -> (CoupledTanks, MpcConfig) {
        let model = CoupledTanks::new(TankParams::default()).unwrap();
        let q = DMatrix::identity(2, 2);
        let r = dmatrix![0.01];
        let setpoint = State::from_slice(&[0.8, 0.8]);
        let p = nmpc::terminal_weight_for(&model, &setpoint, &model.equilibrium_input(0.8), &q, &r)
            .unwrap();
        let cfg = MpcConfig::new(
            horizon,
            q,
            r,
            p,
            setpoint,
            model.state_box().clone(),
            model.input_box().clone(),
        );
        (model, cfg)
    }

    #[test]
    fn init_from_the_setpoint_stays_at_the_setpoint() {
        let (model, cfg) = setup(10);
        let y0 = State::from_slice(&[0.8, 0.8]);
        let (buf, _) = ReferenceBuffer::init(&model, &cfg, &y0).unwrap();
        assert_eq!(buf.span(), (0, 9));
        for k in 0..=9 {
            let e = buf.get(k);
            assert!((e.0[0] - 0.8).abs() < 1e-3 && (e.0[1] - 0.8).abs() < 1e-3);
        }
    }

    #[test]
    fn init_from_empty_tanks_fills_monotonically() {
        let (model, cfg) = setup(10);
        let (buf, _) = ReferenceBuffer::init(&model, &cfg, &State::from_slice(&[0.0, 0.0])).unwrap();
        let mut prev = -1.0;
        for k in 0..=9 {
            let h2 = buf.get(k).0[1];
            assert!(h2 >= prev, "h2 must not decrease while filling");
            prev = h2;
        }
    }

    #[test]
    fn init_fails_when_the_terminal_ball_is_unreachable() {
        let (model, mut cfg) = setup(10);
        cfg.terminal_set_radius = 0.05;
        let err = ReferenceBuffer::init(&model, &cfg, &State::from_slice(&[0.0, 0.0]));
        assert!(matches!(err, Err(Error::Seeding(_))));
    }

    #[test]
    fn push_extends_and_evicts_with_one_step_lag() {
        let (model, cfg) = setup(5);
        let y0 = State::from_slice(&[0.8, 0.8]);
        let (mut buf, _) = ReferenceBuffer::init(&model, &cfg, &y0).unwrap();
        assert_eq!(buf.span(), (0, 4));

        buf.push(0, y0.clone());
        // extended to index 5, nothing evicted yet at k = 0
        assert_eq!(buf.span(), (0, 5));

        buf.push(1, y0.clone());
        // entry 0 dropped: the step-1 detector has moved past it
        assert_eq!(buf.span(), (1, 6));

        buf.push(2, y0.clone());
        assert_eq!(buf.span(), (2, 7));

        for k in 3..40u64 {
            buf.push(k, y0.clone());
            assert!(buf.contains(k));
            assert!(buf.contains(k + cfg.horizon as u64));
            assert!(!buf.contains(k - 1));
        }
    }

    #[test]
    fn window_returns_the_proximity_centers() {
        let (model, cfg) = setup(5);
        let y0 = State::from_slice(&[0.8, 0.8]);
        let (mut buf, _) = ReferenceBuffer::init(&model, &cfg, &y0).unwrap();
        let w0 = buf.window(0);
        assert_eq!(w0.len(), 4);
        for e in &w0 {
            assert!((e.0[0] - 0.8).abs() < 1e-3);
            assert!(cfg.state_box.contains(&e.0));
        }
        buf.push(0, y0.clone());
        let w1 = buf.window(1);
        // consecutive windows overlap in all but one entry
        assert_eq!(&w0[1..], &w1[..3]);
    }

    #[test]
    #[should_panic(expected = "non-contiguous reference push")]
    fn non_contiguous_push_panics() {
        let (model, cfg) = setup(5);
        let y0 = State::from_slice(&[0.8, 0.8]);
        let (mut buf, _) = ReferenceBuffer::init(&model, &cfg, &y0).unwrap();
        buf.push(3, y0);
    }

    #[test]
    #[should_panic(expected = "outside stored window")]
    fn out_of_window_get_panics() {
        let (model, cfg) = setup(5);
        let (buf, _) = ReferenceBuffer::init(&model, &cfg, &State::from_slice(&[0.8, 0.8])).unwrap();
        let _ = buf.get(99);
    }

    #[test]
    fn pushed_entries_come_from_consistent_plans() {
        // every stored entry equals the rollout of the solve that produced it
        let (model, cfg) = setup(6);
        let y0 = State::from_slice(&[0.8, 0.8]);
        let (mut buf, _) = ReferenceBuffer::init(&model, &cfg, &y0).unwrap();
        let mut x = y0.clone();
        let mut warm: Option<nmpc::SolveResult> = None;
        for k in 0..10u64 {
            let sol = nmpc::solve(&cfg, &model, &x, None, warm.as_ref()).unwrap();
            let replay = nmpc::rollout(&model, &x, &sol.controls).unwrap();
            assert_eq!(sol.predicted_outputs, replay);
            buf.push(k, sol.predicted_outputs.last().unwrap().clone());
            x = model.step(&x, &sol.controls[0]).unwrap();
            warm = Some(sol);
        }
    }
}
