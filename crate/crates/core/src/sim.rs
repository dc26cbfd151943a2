//! Closed-loop orchestration: plant, attacks, measurement noise, controller,
//! reference buffer and detector, producing a complete per-step run log.
//!
//! Each step k:
//! 1. measure `y_k = x_k + y^a_k + noise` (the true state is never altered
//!    by sensor attacks);
//! 2. update the detector with `||y_k - ytilde_k||`; on a fresh alarm with
//!    halting enabled, record the step and stop before solving;
//! 3. solve the proximity-constrained problem from the measurement (clamped
//!    into the state box for solver well-posedness; the raw value is what
//!    the detector saw and what the log keeps);
//! 4. publish the plan's last predicted output as the reference entry k+N;
//! 5. apply the first planned control through the attacked, saturating
//!    actuator and advance the true plant.
//!
//! A run is strictly sequential; independent runs are independent values and
//! may execute in parallel.

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

use crate::attack::{AttackChannel, AttackSchedule};
use crate::detector::{residual, CusumState, Norm};
use crate::dynamics::{ControlInput, CoupledTanks, PlantModel, State, TankParams};
use crate::nmpc::{self, MpcConfig, SolveStatus};
use crate::reference::ReferenceBuffer;
use crate::{Error, Result};

/// Measurement-noise model. Sampling uses a seeded counter-based generator,
/// so a run is a pure function of its scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub std_dev: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    None,
    Gaussian,
}

impl NoiseModel {
    pub fn none() -> Self {
        NoiseModel { kind: NoiseKind::None, std_dev: 0.0, seed: 0 }
    }

    pub fn gaussian(std_dev: f64, seed: u64) -> Self {
        NoiseModel { kind: NoiseKind::Gaussian, std_dev, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.std_dev >= 0.0 && self.std_dev.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise.std_dev must be nonnegative and finite, got {}",
                self.std_dev
            )));
        }
        Ok(())
    }
}

/// Detector wiring for a run.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub enabled: bool,
    /// Per-step drift subtracted from the residual (delta).
    pub drift: f64,
    /// Alarm threshold on the accumulated statistic (gamma).
    pub threshold: f64,
    pub norm: Norm,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig { enabled: true, drift: 0.01, threshold: 0.1, norm: Norm::Euclidean }
    }
}

/// Everything a closed-loop experiment needs.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub plant: TankParams,
    pub x0: State,
    pub mpc: MpcConfig,
    pub detector: DetectorConfig,
    pub attack: AttackSchedule,
    pub noise: NoiseModel,
    pub total_steps: u64,
    pub halt_on_alarm: bool,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.mpc.validate(2, 1)?;
        if self.total_steps == 0 {
            return Err(Error::InvalidConfig("sim.total_steps must be at least 1".into()));
        }
        if self.x0.dim() != 2 {
            return Err(Error::DimensionMismatch { what: "sim.x0", expected: 2, got: self.x0.dim() });
        }
        if !self.x0.is_finite() {
            return Err(Error::NonFinite("sim.x0"));
        }
        if !self.mpc.state_box.contains(&self.x0.0) {
            return Err(Error::InvalidConfig(format!(
                "sim.x0 {:?} lies outside the state box",
                self.x0.0.as_slice()
            )));
        }
        let report = self.attack.validate()?;
        if !report.is_ok() {
            return Err(Error::InvalidConfig(format!("attack schedule invalid: {report}")));
        }
        if let Some(idx) = self.attack.max_target_index(AttackChannel::Output) {
            if idx >= 2 {
                return Err(Error::InvalidConfig(format!(
                    "attack segment targets output component {idx}, plant has 2"
                )));
            }
        }
        if let Some(idx) = self.attack.max_target_index(AttackChannel::Input) {
            if idx >= 1 {
                return Err(Error::InvalidConfig(format!(
                    "attack segment targets input component {idx}, plant has 1"
                )));
            }
        }
        self.noise.validate()?;
        CusumState::new(self.detector.drift, self.detector.threshold)?;
        Ok(())
    }
}

/// One logged step of the closed loop.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: u64,
    /// Wall time of the step, `k * sample_time`.
    pub t: f64,
    pub x_true: State,
    /// Raw measurement as the detector saw it (attacked, noisy, unclamped).
    pub y_measured: State,
    pub reference: State,
    /// Input physically applied to the plant: `clamp(u* + u^a)`. Zero on a
    /// halt row, where no control was computed.
    pub u_applied: ControlInput,
    pub u_attack: f64,
    pub y_attack: Vec<f64>,
    pub residual: f64,
    /// CUSUM statistic produced by this step's update, before the
    /// restart-on-alarm reset (so crossings stay visible).
    pub cusum: f64,
    /// Whether any alarm has fired up to and including this step.
    pub alarmed: bool,
    /// None on a halt row (the loop stopped before solving).
    pub solver_status: Option<SolveStatus>,
    pub solver_cost: f64,
    pub constraint_violation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HaltReason {
    Completed,
    Alarm,
}

/// End-of-run verdict relating the first alarm to the attack onset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionVerdict {
    /// No alarm fired.
    NoAlarm,
    /// First alarm at or after the attack onset; delay in steps.
    Detected { alarm_step: u64, delay: u64 },
    /// Alarm before any attack was active.
    FalseAlarm { alarm_step: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: u64,
    pub halted: HaltReason,
    pub alarm_step: Option<u64>,
    pub attack_onset: Option<u64>,
    pub verdict: DetectionVerdict,
    /// Componentwise maximum of the true state over the run.
    pub max_state: Vec<f64>,
    pub final_state: State,
}

/// Complete record of one closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub records: Vec<StepRecord>,
    pub summary: RunSummary,
}

impl RunLog {
    /// Steps from attack onset to the first alarm. `None` without an alarm;
    /// negative when the alarm predates the attack (a false positive).
    pub fn detection_delay(&self, attack_start: u64) -> Option<i64> {
        self.summary
            .alarm_step
            .map(|alarm| alarm as i64 - attack_start as i64)
    }
}

/// Run one scenario to completion (or to its first alarm).
pub fn run(scenario: &ScenarioConfig) -> Result<RunLog> {
    scenario.validate()?;
    let model = CoupledTanks::with_boxes(
        scenario.plant.clone(),
        scenario.mpc.state_box.clone(),
        scenario.mpc.input_box.clone(),
    )?;
    let n = 2;
    let horizon = scenario.mpc.horizon;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(scenario.noise.seed);
    let normal = match scenario.noise.kind {
        NoiseKind::Gaussian if scenario.noise.std_dev > 0.0 => Some(
            Normal::new(0.0, scenario.noise.std_dev)
                .map_err(|e| Error::InvalidConfig(format!("noise model: {e}")))?,
        ),
        _ => None,
    };
    let mut measure = |x: &State, k: u64| -> State {
        let mut y = scenario.attack.corrupt_measurement(x, k);
        if let Some(dist) = &normal {
            for i in 0..n {
                y.0[i] += dist.sample(&mut rng);
            }
        }
        y
    };

    let mut x_true = scenario.x0.clone();
    let mut cusum = CusumState::new(scenario.detector.drift, scenario.detector.threshold)?;
    let mut records: Vec<StepRecord> = Vec::with_capacity(scenario.total_steps as usize);
    let mut halted = HaltReason::Completed;

    // The k = 0 measurement seeds the reference, then feeds the first loop
    // iteration; it is drawn exactly once.
    let y0_raw = measure(&x_true, 0);
    let y0_clamped = State(scenario.mpc.state_box.project(&y0_raw.0));
    let (mut reference, seed) = ReferenceBuffer::init(&model, &scenario.mpc, &y0_clamped)?;
    let mut warm: Option<nmpc::SolveResult> = Some(seed);
    let mut pending_first = Some(y0_raw);

    for k in 0..scenario.total_steps {
        let y_raw = match pending_first.take() {
            Some(y) => y,
            None => measure(&x_true, k),
        };
        let ytilde = reference.get(k).clone();
        let r = residual(&y_raw, &ytilde, scenario.detector.norm, k)?;

        let (cusum_logged, fresh_alarm) = if scenario.detector.enabled {
            let (next, raw) = cusum.update(&r);
            let fresh = raw > cusum.threshold;
            cusum = next;
            (raw, fresh)
        } else {
            (0.0, false)
        };

        let u_attack = scenario.attack.signal_at(k, AttackChannel::Input, 1)[0];
        let y_attack = scenario.attack.signal_at(k, AttackChannel::Output, n);

        if fresh_alarm && scenario.halt_on_alarm {
            records.push(StepRecord {
                k,
                t: k as f64 * scenario.plant.sample_time,
                x_true: x_true.clone(),
                y_measured: y_raw,
                reference: ytilde,
                u_applied: ControlInput::scalar(0.0),
                u_attack,
                y_attack: y_attack.as_slice().to_vec(),
                residual: r.value,
                cusum: cusum_logged,
                alarmed: true,
                solver_status: None,
                solver_cost: 0.0,
                constraint_violation: 0.0,
            });
            halted = HaltReason::Alarm;
            break;
        }

        let x_solve = State(scenario.mpc.state_box.project(&y_raw.0));
        let window;
        let reference_arg = if scenario.mpc.proximity.is_some() {
            window = reference.window(k);
            Some(window.as_slice())
        } else {
            None
        };
        let sol = nmpc::solve(&scenario.mpc, &model, &x_solve, reference_arg, warm.as_ref())?;
        reference.push(k, sol.predicted_outputs[horizon - 1].clone());

        let u_applied = scenario
            .attack
            .corrupt_input(&sol.controls[0], k, &scenario.mpc.input_box);

        records.push(StepRecord {
            k,
            t: k as f64 * scenario.plant.sample_time,
            x_true: x_true.clone(),
            y_measured: y_raw,
            reference: ytilde,
            u_applied: u_applied.clone(),
            u_attack,
            y_attack: y_attack.as_slice().to_vec(),
            residual: r.value,
            cusum: cusum_logged,
            alarmed: cusum.alarmed,
            solver_status: Some(sol.status),
            solver_cost: sol.cost,
            constraint_violation: sol.constraint_violation,
        });

        x_true = model.step(&x_true, &u_applied)?;
        warm = Some(sol);
    }

    let attack_onset = scenario.attack.first_onset();
    let alarm_step = cusum.alarm_step;
    let verdict = match (alarm_step, attack_onset) {
        (None, _) => DetectionVerdict::NoAlarm,
        (Some(alarm), Some(onset)) if alarm >= onset => {
            DetectionVerdict::Detected { alarm_step: alarm, delay: alarm - onset }
        }
        (Some(alarm), _) => DetectionVerdict::FalseAlarm { alarm_step: alarm },
    };
    let mut max_state = vec![f64::NEG_INFINITY; n];
    for rec in &records {
        for i in 0..n {
            max_state[i] = max_state[i].max(rec.x_true.0[i]);
        }
    }
    let final_state = records
        .last()
        .map(|r| r.x_true.clone())
        .unwrap_or_else(|| scenario.x0.clone());
    let summary = RunSummary {
        steps: records.len() as u64,
        halted,
        alarm_step,
        attack_onset,
        verdict,
        max_state,
        final_state,
    };
    Ok(RunLog { records, summary })
}
