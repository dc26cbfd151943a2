//! Constrained nonlinear MPC by single shooting.
//!
//! The decision variable is the stacked control sequence. Input bounds are
//! hard (enforced by projection); the state box, the proximity tube around
//! the reference trajectory, and the terminal ball are soft constraints
//! handled by an augmented-Lagrangian outer loop around a projected-gradient
//! inner solver with Armijo backtracking. Gradients are exact, computed by a
//! backward (adjoint) pass through the plant Jacobians.
//!
//! The solver never aborts on a hard problem: when the constraint set is
//! unattainable (an attacker can force that), it returns its best iterate
//! with an honest status so the closed loop keeps running.

use nalgebra::{DMatrix, DVector};

use crate::detector::Norm;
use crate::dynamics::{BoxSet, ControlInput, PlantModel, State};
use crate::{Error, Result};

/// Terminal-ball radius to use when regulating near the setpoint. Seeding a
/// reference from far away (for example empty tanks) needs the ball disabled,
/// so 0 is the scenario-schema default and this is opt-in.
pub const SUGGESTED_TERMINAL_RADIUS: f64 = 0.05;

const ARMIJO_C1: f64 = 1e-4;
const ARMIJO_BACKTRACK: f64 = 0.5;
const ARMIJO_INITIAL_STEP: f64 = 1.0;
const PENALTY_INITIAL: f64 = 10.0;
const PENALTY_GROWTH: f64 = 10.0;
const PENALTY_MAX: f64 = 1e8;
/// Outer progress ratio below which the penalty is raised.
const PENALTY_PROGRESS: f64 = 0.25;
/// Consecutive stagnant outer iterations (penalty at cap) before giving up.
const STALL_LIMIT: usize = 3;

/// Fixed-radius neighborhood each predicted output must share with the
/// reference trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximityBall {
    pub radius: f64,
    pub norm: Norm,
}

impl ProximityBall {
    pub fn new(radius: f64, norm: Norm) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "proximity radius must be positive and finite, got {radius}"
            )));
        }
        Ok(ProximityBall { radius, norm })
    }
}

/// Weights, setpoint, constraint sets and solver tolerances for one problem.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig {
    pub horizon: usize,
    pub state_weight: DMatrix<f64>,
    pub input_weight: DMatrix<f64>,
    pub terminal_weight: DMatrix<f64>,
    pub setpoint: State,
    /// Radius of the terminal ball around the setpoint; 0 disables it.
    pub terminal_set_radius: f64,
    pub proximity: Option<ProximityBall>,
    pub state_box: BoxSet,
    pub input_box: BoxSet,
    /// Inner stop: norm of the unit-step projected-gradient displacement.
    pub tol_stationarity: f64,
    /// Outer stop: largest soft-constraint violation, in original units.
    pub tol_feasibility: f64,
    pub max_outer_iterations: usize,
    pub max_inner_iterations: usize,
}

impl MpcConfig {
    pub fn new(
        horizon: usize,
        state_weight: DMatrix<f64>,
        input_weight: DMatrix<f64>,
        terminal_weight: DMatrix<f64>,
        setpoint: State,
        state_box: BoxSet,
        input_box: BoxSet,
    ) -> Self {
        MpcConfig {
            horizon,
            state_weight,
            input_weight,
            terminal_weight,
            setpoint,
            terminal_set_radius: 0.0,
            proximity: None,
            state_box,
            input_box,
            tol_stationarity: 1e-8,
            tol_feasibility: 1e-6,
            max_outer_iterations: 30,
            max_inner_iterations: 500,
        }
    }

    pub fn validate(&self, state_dim: usize, input_dim: usize) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("mpc.horizon must be at least 1".into()));
        }
        check_weight(&self.state_weight, state_dim, "mpc.q_diag", false)?;
        check_weight(&self.input_weight, input_dim, "mpc.r_diag", true)?;
        check_weight(&self.terminal_weight, state_dim, "mpc terminal weight", false)?;
        if self.setpoint.dim() != state_dim {
            return Err(Error::DimensionMismatch {
                what: "mpc.setpoint",
                expected: state_dim,
                got: self.setpoint.dim(),
            });
        }
        if !self.setpoint.is_finite() {
            return Err(Error::NonFinite("mpc.setpoint"));
        }
        if self.state_box.dim() != state_dim || self.input_box.dim() != input_dim {
            return Err(Error::InvalidConfig(
                "mpc boxes must match the plant dimensions".into(),
            ));
        }
        if !self.state_box.contains(&self.setpoint.0) {
            return Err(Error::InvalidConfig(
                "mpc.setpoint must lie inside the state box".into(),
            ));
        }
        if !(self.terminal_set_radius >= 0.0 && self.terminal_set_radius.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "mpc.terminal_radius must be nonnegative and finite, got {}",
                self.terminal_set_radius
            )));
        }
        if let Some(ball) = &self.proximity {
            ProximityBall::new(ball.radius, ball.norm)?;
        }
        if !(self.tol_stationarity > 0.0 && self.tol_feasibility > 0.0) {
            return Err(Error::InvalidConfig("solver tolerances must be positive".into()));
        }
        if self.max_outer_iterations == 0 || self.max_inner_iterations == 0 {
            return Err(Error::InvalidConfig("solver iteration budgets must be positive".into()));
        }
        Ok(())
    }
}

/// Symmetry plus positive (semi)definiteness check.
fn check_weight(w: &DMatrix<f64>, dim: usize, what: &str, strict: bool) -> Result<()> {
    if w.nrows() != dim || w.ncols() != dim {
        return Err(Error::InvalidConfig(format!(
            "{what} must be {dim}x{dim}, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("weight matrix"));
    }
    let scale = w.amax().max(1.0);
    if (w - w.transpose()).amax() > 1e-12 * scale {
        return Err(Error::InvalidConfig(format!("{what} must be symmetric")));
    }
    if strict {
        if nalgebra::Cholesky::new(w.clone()).is_none() {
            return Err(Error::InvalidConfig(format!("{what} must be positive definite")));
        }
    } else {
        let eigen = w.clone().symmetric_eigenvalues();
        if eigen.iter().any(|&v| v < -1e-10 * scale) {
            return Err(Error::InvalidConfig(format!("{what} must be positive semidefinite")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    InfeasibleRelaxed,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max_iterations",
            SolveStatus::InfeasibleRelaxed => "infeasible_relaxed",
        };
        write!(f, "{s}")
    }
}

/// Optimizer output: the control sequence, its forward rollout, the tracking
/// cost at the returned point, and feasibility diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub controls: Vec<ControlInput>,
    pub predicted_outputs: Vec<State>,
    pub cost: f64,
    pub status: SolveStatus,
    /// Largest soft-constraint residual at the returned point, in the
    /// constraint's original units.
    pub constraint_violation: f64,
    /// Violation after each augmented-Lagrangian outer iteration.
    pub outer_violations: Vec<f64>,
}

/// Forward simulation of a control sequence: states x_1..x_N from x_0.
pub fn rollout(model: &dyn PlantModel, x0: &State, controls: &[ControlInput]) -> Result<Vec<State>> {
    if controls.is_empty() {
        return Err(Error::InvalidArgument("rollout needs at least one control".into()));
    }
    let mut states = Vec::with_capacity(controls.len());
    let mut x = x0.clone();
    for u in controls {
        x = model.step(&x, u)?;
        states.push(x.clone());
    }
    Ok(states)
}

fn quad(w: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..v.len() {
        for j in 0..v.len() {
            acc += v[i] * w[(i, j)] * v[j];
        }
    }
    acc
}

/// Tracking cost of a predicted trajectory `y_1..y_N` under controls
/// `u_0..u_{N-1}`: quadratic state error at every predicted stage, quadratic
/// input effort, and the terminal weight on the last stage. The measured
/// stage-0 output is a constant for the optimizer; [`solve`] adds it to the
/// reported cost.
pub fn evaluate_cost(cfg: &MpcConfig, predicted: &[State], controls: &[ControlInput]) -> Result<f64> {
    if predicted.len() != controls.len() || predicted.is_empty() {
        return Err(Error::DimensionMismatch {
            what: "predicted trajectory",
            expected: controls.len().max(1),
            got: predicted.len(),
        });
    }
    let n = cfg.setpoint.dim();
    let m = cfg.input_weight.nrows();
    let mut cost = 0.0;
    for (j, (y, u)) in predicted.iter().zip(controls).enumerate() {
        if y.dim() != n {
            return Err(Error::DimensionMismatch { what: "predicted state", expected: n, got: y.dim() });
        }
        if u.dim() != m {
            return Err(Error::DimensionMismatch { what: "control", expected: m, got: u.dim() });
        }
        let diff = &y.0 - &cfg.setpoint.0;
        cost += quad(&cfg.state_weight, &diff) + quad(&cfg.input_weight, &u.0);
        if j + 1 == predicted.len() {
            cost += quad(&cfg.terminal_weight, &diff);
        }
    }
    Ok(cost)
}

/// Soft constraint on one predicted stage. `g(x) <= 0` is feasible.
#[derive(Debug, Clone)]
enum ConstraintKind {
    /// x[dim] - upper <= 0
    StateUpper { dim: usize, bound: f64 },
    /// lower - x[dim] <= 0
    StateLower { dim: usize, bound: f64 },
    /// ||x - center||^2 - radius^2 <= 0 (smooth form of a Euclidean ball)
    BallSq { center: DVector<f64>, radius: f64 },
    /// (x[dim] - center) - radius <= 0 (infinity-norm tube face)
    FaceUpper { dim: usize, center: f64, radius: f64 },
    /// (center - x[dim]) - radius <= 0
    FaceLower { dim: usize, center: f64, radius: f64 },
}

#[derive(Debug, Clone)]
struct SoftConstraint {
    /// Predicted stage 1..=N the constraint applies to.
    stage: usize,
    kind: ConstraintKind,
    lambda: f64,
}

impl SoftConstraint {
    fn g(&self, x: &DVector<f64>) -> f64 {
        match &self.kind {
            ConstraintKind::StateUpper { dim, bound } => x[*dim] - bound,
            ConstraintKind::StateLower { dim, bound } => bound - x[*dim],
            ConstraintKind::BallSq { center, radius } => {
                let mut acc = 0.0;
                for i in 0..x.len() {
                    let d = x[i] - center[i];
                    acc += d * d;
                }
                acc - radius * radius
            }
            ConstraintKind::FaceUpper { dim, center, radius } => (x[*dim] - center) - radius,
            ConstraintKind::FaceLower { dim, center, radius } => (center - x[*dim]) - radius,
        }
    }

    /// Constraint residual in original (norm) units, 0 when satisfied.
    fn violation(&self, x: &DVector<f64>) -> f64 {
        match &self.kind {
            ConstraintKind::BallSq { center, radius } => {
                let mut acc = 0.0;
                for i in 0..x.len() {
                    let d = x[i] - center[i];
                    acc += d * d;
                }
                (acc.sqrt() - radius).max(0.0)
            }
            _ => self.g(x).max(0.0),
        }
    }

    /// Add `coef * dg/dx` into the stage seed.
    fn add_scaled_gradient(&self, x: &DVector<f64>, coef: f64, seed: &mut DVector<f64>) {
        if coef == 0.0 {
            return;
        }
        match &self.kind {
            ConstraintKind::StateUpper { dim, .. } => seed[*dim] += coef,
            ConstraintKind::StateLower { dim, .. } => seed[*dim] -= coef,
            ConstraintKind::BallSq { center, .. } => {
                for i in 0..x.len() {
                    seed[i] += coef * 2.0 * (x[i] - center[i]);
                }
            }
            ConstraintKind::FaceUpper { dim, .. } => seed[*dim] += coef,
            ConstraintKind::FaceLower { dim, .. } => seed[*dim] -= coef,
        }
    }
}

struct Problem<'a> {
    cfg: &'a MpcConfig,
    model: &'a dyn PlantModel,
    x0: &'a State,
    constraints: Vec<SoftConstraint>,
    mu: f64,
    input_dim: usize,
}

impl Problem<'_> {
    fn stages(&self) -> usize {
        self.cfg.horizon
    }

    fn control_at<'z>(&self, z: &'z DVector<f64>, j: usize) -> ControlInput {
        let m = self.input_dim;
        ControlInput(DVector::from_column_slice(&z.as_slice()[j * m..(j + 1) * m]))
    }

    fn rollout_z(&self, z: &DVector<f64>) -> Result<Vec<State>> {
        let mut states = Vec::with_capacity(self.stages());
        let mut x = self.x0.clone();
        for j in 0..self.stages() {
            x = self.model.step(&x, &self.control_at(z, j))?;
            states.push(x.clone());
        }
        Ok(states)
    }

    /// Augmented-Lagrangian value at z (objective plus penalty terms).
    fn value(&self, z: &DVector<f64>) -> Result<(f64, Vec<State>)> {
        let states = self.rollout_z(z)?;
        let mut f = 0.0;
        for j in 1..=self.stages() {
            let diff = &states[j - 1].0 - &self.cfg.setpoint.0;
            f += quad(&self.cfg.state_weight, &diff);
            if j == self.stages() {
                f += quad(&self.cfg.terminal_weight, &diff);
            }
            let u = self.control_at(z, j - 1);
            f += quad(&self.cfg.input_weight, &u.0);
        }
        for c in &self.constraints {
            let g = c.g(&states[c.stage - 1].0);
            let active = (c.lambda + self.mu * g).max(0.0);
            f += (active * active - c.lambda * c.lambda) / (2.0 * self.mu);
        }
        Ok((f, states))
    }

    /// Gradient of the augmented Lagrangian with respect to the stacked
    /// controls, via one backward pass through the plant Jacobians.
    fn gradient(&self, z: &DVector<f64>, states: &[State]) -> DVector<f64> {
        let n_stages = self.stages();
        let m = self.input_dim;

        let mut seeds: Vec<DVector<f64>> = Vec::with_capacity(n_stages);
        for j in 1..=n_stages {
            let diff = &states[j - 1].0 - &self.cfg.setpoint.0;
            let mut seed = 2.0 * &self.cfg.state_weight * &diff;
            if j == n_stages {
                seed += 2.0 * &self.cfg.terminal_weight * &diff;
            }
            seeds.push(seed);
        }
        for c in &self.constraints {
            let x = &states[c.stage - 1].0;
            let coef = (c.lambda + self.mu * c.g(x)).max(0.0);
            c.add_scaled_gradient(x, coef, &mut seeds[c.stage - 1]);
        }

        let mut grad = DVector::zeros(n_stages * m);
        // lam holds the adjoint for stage j+1 while processing stage j.
        let mut lam = seeds[n_stages - 1].clone();
        for j in (0..n_stages).rev() {
            let x_j = if j == 0 { self.x0 } else { &states[j - 1] };
            let u_j = self.control_at(z, j);
            let (a_j, b_j) = self.model.jacobians(x_j, &u_j);
            let g_u = 2.0 * &self.cfg.input_weight * &u_j.0 + b_j.transpose() * &lam;
            grad.rows_mut(j * m, m).copy_from(&g_u);
            if j >= 1 {
                lam = &seeds[j - 1] + a_j.transpose() * lam;
            }
        }
        grad
    }

    fn project(&self, z: &DVector<f64>) -> DVector<f64> {
        let m = self.input_dim;
        DVector::from_fn(z.len(), |i, _| {
            let d = i % m;
            z[i].clamp(self.cfg.input_box.lower[d], self.cfg.input_box.upper[d])
        })
    }

    fn max_violation(&self, states: &[State]) -> f64 {
        self.constraints
            .iter()
            .fold(0.0f64, |acc, c| acc.max(c.violation(&states[c.stage - 1].0)))
    }

    /// Projected gradient with Armijo backtracking. Returns whether the
    /// stationarity tolerance was reached, plus the states at the final z.
    fn minimize(&self, z: &mut DVector<f64>) -> Result<(bool, Vec<State>)> {
        let (mut f, mut states) = self.value(z)?;
        let mut no_progress = 0usize;
        for _ in 0..self.cfg.max_inner_iterations {
            let grad = self.gradient(z, &states);
            let unit = self.project(&(&*z - &grad));
            if (&*z - &unit).norm() <= self.cfg.tol_stationarity {
                return Ok((true, states));
            }
            let mut t = ARMIJO_INITIAL_STEP;
            let mut accepted = false;
            while t > 1e-20 {
                let trial = self.project(&(&*z - t * &grad));
                let (f_trial, states_trial) = self.value(&trial)?;
                let decrease = grad.dot(&(&trial - &*z));
                if f_trial <= f + ARMIJO_C1 * decrease {
                    if f - f_trial <= 1e-16 * (1.0 + f.abs()) {
                        no_progress += 1;
                    } else {
                        no_progress = 0;
                    }
                    *z = trial;
                    f = f_trial;
                    states = states_trial;
                    accepted = true;
                    break;
                }
                t *= ARMIJO_BACKTRACK;
            }
            if !accepted || no_progress >= 5 {
                return Ok((false, states));
            }
        }
        Ok((false, states))
    }
}

/// Solve the receding-horizon problem from `x0`.
///
/// With `reference` present, each of its entries is the proximity-tube
/// center for the matching predicted stage (entry `j-1` constrains stage
/// `j`); the slice may be shorter than the horizon, in which case trailing
/// stages carry no proximity constraint. With `reference` absent (or no
/// proximity ball configured) the plain problem with box and terminal
/// constraints is solved.
///
/// `warm_start` should be the previous step's result; its controls are
/// shifted by one stage with the last entry repeated.
pub fn solve(
    cfg: &MpcConfig,
    model: &dyn PlantModel,
    x0: &State,
    reference: Option<&[State]>,
    warm_start: Option<&SolveResult>,
) -> Result<SolveResult> {
    let n = model.state_dim();
    let m = model.input_dim();
    cfg.validate(n, m)?;
    if x0.dim() != n {
        return Err(Error::DimensionMismatch { what: "initial state", expected: n, got: x0.dim() });
    }
    if !x0.is_finite() {
        return Err(Error::NonFinite("initial state"));
    }
    if !cfg.state_box.contains(&x0.0) {
        return Err(Error::InvalidArgument(format!(
            "initial state {:?} outside the state box",
            x0.0.as_slice()
        )));
    }
    let horizon = cfg.horizon;
    if let Some(refs) = reference {
        if refs.len() > horizon {
            return Err(Error::DimensionMismatch {
                what: "reference window",
                expected: horizon,
                got: refs.len(),
            });
        }
        for r in refs {
            if r.dim() != n {
                return Err(Error::DimensionMismatch { what: "reference entry", expected: n, got: r.dim() });
            }
            if !r.is_finite() {
                return Err(Error::NonFinite("reference entry"));
            }
        }
    }

    let mut constraints = Vec::new();
    for stage in 1..=horizon {
        for dim in 0..n {
            constraints.push(SoftConstraint {
                stage,
                kind: ConstraintKind::StateUpper { dim, bound: cfg.state_box.upper[dim] },
                lambda: 0.0,
            });
            constraints.push(SoftConstraint {
                stage,
                kind: ConstraintKind::StateLower { dim, bound: cfg.state_box.lower[dim] },
                lambda: 0.0,
            });
        }
    }
    if let (Some(ball), Some(refs)) = (&cfg.proximity, reference) {
        for (idx, center) in refs.iter().enumerate() {
            let stage = idx + 1;
            match ball.norm {
                Norm::Euclidean => constraints.push(SoftConstraint {
                    stage,
                    kind: ConstraintKind::BallSq { center: center.0.clone(), radius: ball.radius },
                    lambda: 0.0,
                }),
                Norm::Infinity => {
                    for dim in 0..n {
                        constraints.push(SoftConstraint {
                            stage,
                            kind: ConstraintKind::FaceUpper { dim, center: center.0[dim], radius: ball.radius },
                            lambda: 0.0,
                        });
                        constraints.push(SoftConstraint {
                            stage,
                            kind: ConstraintKind::FaceLower { dim, center: center.0[dim], radius: ball.radius },
                            lambda: 0.0,
                        });
                    }
                }
            }
        }
    }
    if cfg.terminal_set_radius > 0.0 {
        constraints.push(SoftConstraint {
            stage: horizon,
            kind: ConstraintKind::BallSq {
                center: cfg.setpoint.0.clone(),
                radius: cfg.terminal_set_radius,
            },
            lambda: 0.0,
        });
    }

    let mut problem = Problem { cfg, model, x0, constraints, mu: PENALTY_INITIAL, input_dim: m };

    // Initial iterate: shifted warm start when shapes match, else mid-box.
    let mut z = match warm_start {
        Some(prev)
            if prev.controls.len() == horizon && prev.controls.iter().all(|u| u.dim() == m) =>
        {
            let mut z = DVector::zeros(horizon * m);
            for j in 0..horizon {
                let src = &prev.controls[(j + 1).min(horizon - 1)];
                z.rows_mut(j * m, m).copy_from(&src.0);
            }
            z
        }
        _ => {
            let mut z = DVector::zeros(horizon * m);
            for j in 0..horizon {
                for d in 0..m {
                    z[j * m + d] = 0.5 * (cfg.input_box.lower[d] + cfg.input_box.upper[d]);
                }
            }
            z
        }
    };
    z = problem.project(&z);

    let mut outer_violations = Vec::new();
    let mut prev_viol = f64::INFINITY;
    let mut stall = 0usize;
    let mut status = None;
    let mut last_states = problem.rollout_z(&z)?;
    let mut last_inner_ok = false;

    for _ in 0..cfg.max_outer_iterations {
        let (inner_ok, states) = problem.minimize(&mut z)?;
        let viol = problem.max_violation(&states);
        outer_violations.push(viol);
        last_states = states;
        last_inner_ok = inner_ok;

        if viol <= cfg.tol_feasibility && inner_ok {
            status = Some(SolveStatus::Converged);
            break;
        }
        for c in &mut problem.constraints {
            let g = c.g(&last_states[c.stage - 1].0);
            c.lambda = (c.lambda + problem.mu * g).max(0.0);
        }
        if viol > PENALTY_PROGRESS * prev_viol {
            problem.mu = (problem.mu * PENALTY_GROWTH).min(PENALTY_MAX);
        }
        if viol > cfg.tol_feasibility && problem.mu >= PENALTY_MAX && viol >= 0.999 * prev_viol {
            stall += 1;
        } else {
            stall = 0;
        }
        if stall >= STALL_LIMIT {
            status = Some(SolveStatus::InfeasibleRelaxed);
            break;
        }
        prev_viol = viol;
    }

    let final_viol = problem.max_violation(&last_states);
    let status = status.unwrap_or({
        if final_viol > cfg.tol_feasibility && problem.mu >= PENALTY_MAX {
            SolveStatus::InfeasibleRelaxed
        } else if final_viol <= cfg.tol_feasibility && last_inner_ok {
            SolveStatus::Converged
        } else {
            SolveStatus::MaxIterations
        }
    });

    let controls: Vec<ControlInput> = (0..horizon).map(|j| problem.control_at(&z, j)).collect();
    let predicted_outputs = rollout(model, x0, &controls)?;
    let stage0 = {
        let diff = &x0.0 - &cfg.setpoint.0;
        quad(&cfg.state_weight, &diff)
    };
    let cost = evaluate_cost(cfg, &predicted_outputs, &controls)? + stage0;

    Ok(SolveResult {
        controls,
        predicted_outputs,
        cost,
        status,
        constraint_violation: final_viol,
        outer_violations,
    })
}

/// Gradient of `evaluate_cost(rollout(x0, controls), controls)` with respect
/// to the stacked control sequence, by the adjoint pass. Finite differences
/// of the same composition are the reference oracle in the tests.
pub fn cost_gradient(
    cfg: &MpcConfig,
    model: &dyn PlantModel,
    x0: &State,
    controls: &[ControlInput],
) -> Result<DVector<f64>> {
    let m = model.input_dim();
    if controls.is_empty() {
        return Err(Error::InvalidArgument("cost_gradient needs at least one control".into()));
    }
    let mut z = DVector::zeros(controls.len() * m);
    for (j, u) in controls.iter().enumerate() {
        if u.dim() != m {
            return Err(Error::DimensionMismatch { what: "control", expected: m, got: u.dim() });
        }
        z.rows_mut(j * m, m).copy_from(&u.0);
    }
    let mut cfg_for_grad = cfg.clone();
    cfg_for_grad.horizon = controls.len();
    let problem = Problem {
        cfg: &cfg_for_grad,
        model,
        x0,
        constraints: Vec::new(),
        mu: PENALTY_INITIAL,
        input_dim: m,
    };
    let states = problem.rollout_z(&z)?;
    Ok(problem.gradient(&z, &states))
}

/// Membership test for the proximity tube: residual in the ball's norm and
/// whether it is strictly inside the radius.
pub fn check_proximity(y: &State, ytilde: &State, ball: &ProximityBall) -> Result<(bool, f64)> {
    if y.dim() != ytilde.dim() {
        return Err(Error::DimensionMismatch {
            what: "proximity operands",
            expected: y.dim(),
            got: ytilde.dim(),
        });
    }
    let residual = ball.norm.eval(&(&y.0 - &ytilde.0));
    Ok((residual < ball.radius, residual))
}

/// Fixed-point iteration for the discrete algebraic Riccati equation.
pub fn dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let mut p = q.clone();
    for _ in 0..20_000 {
        let btp = b.transpose() * &p;
        let s = r + &btp * b;
        let s_inv = s
            .try_inverse()
            .ok_or_else(|| Error::InvalidConfig("Riccati iteration hit a singular input-cost term".into()))?;
        let atp = a.transpose() * &p;
        let mut next = &atp * a - &atp * b * s_inv * &btp * a + q;
        // keep the iterate symmetric against rounding drift
        next = 0.5 * (&next + next.transpose());
        let delta = (&next - &p).amax();
        p = next;
        if delta < 1e-12 {
            return Ok(p);
        }
    }
    Err(Error::InvalidConfig("Riccati iteration did not converge".into()))
}

/// Terminal weight from the Riccati equation of the plant linearized at an
/// equilibrium point.
pub fn terminal_weight_for(
    model: &dyn PlantModel,
    setpoint: &State,
    equilibrium_input: &ControlInput,
    state_weight: &DMatrix<f64>,
    input_weight: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let (a, b) = model.jacobians(setpoint, equilibrium_input);
    dare(&a, &b, state_weight, input_weight)
}
