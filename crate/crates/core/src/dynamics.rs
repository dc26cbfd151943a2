//! Plant-model abstraction and the coupled-tanks instance.
//!
//! The discrete model is the forward-Euler discretization of the two-tank
//! mass balance: the pump fills tank 1, tank 1 drains into tank 2 through a
//! bottom opening, and tank 2 drains back into the reservoir. Levels are
//! normalized heights, so the physically meaningful range is `[0, 1]` with
//! values above 1 meaning overflow.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Square-root arguments below this are regularized when differentiating, so
/// Jacobians stay finite at an empty tank.
const SQRT_REG: f64 = 1e-9;

/// Plant state vector (tank levels for the shipped model).
#[derive(Debug, Clone, PartialEq)]
pub struct State(pub DVector<f64>);

impl State {
    pub fn from_slice(values: &[f64]) -> Self {
        State(DVector::from_column_slice(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Actuator command vector (pump rate fraction for the shipped model).
#[derive(Debug, Clone, PartialEq)]
pub struct ControlInput(pub DVector<f64>);

impl ControlInput {
    pub fn from_slice(values: &[f64]) -> Self {
        ControlInput(DVector::from_column_slice(values))
    }

    pub fn scalar(value: f64) -> Self {
        ControlInput(DVector::from_element(1, value))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Coupled-tanks parameters: pump gain, drain coefficient, sample time.
#[derive(Debug, Clone, PartialEq)]
pub struct TankParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub sample_time: f64,
}

impl Default for TankParams {
    fn default() -> Self {
        TankParams {
            alpha1: 1.75,
            alpha2: 0.1544,
            sample_time: 0.1,
        }
    }
}

impl TankParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha1 > 0.0 && self.alpha1.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "plant.alpha1 must be positive and finite, got {}",
                self.alpha1
            )));
        }
        if !(self.alpha2 > 0.0 && self.alpha2.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "plant.alpha2 must be positive and finite, got {}",
                self.alpha2
            )));
        }
        if !(self.sample_time > 0.0 && self.sample_time.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "plant.sample_time must be positive and finite, got {}",
                self.sample_time
            )));
        }
        Ok(())
    }
}

/// Axis-aligned box `{ v : lower <= v <= upper }`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl BoxSet {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                what: "box bounds",
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for i in 0..lower.len() {
            if !lower[i].is_finite() || !upper[i].is_finite() {
                return Err(Error::NonFinite("box bounds"));
            }
            if lower[i] > upper[i] {
                return Err(Error::InvalidConfig(format!(
                    "box lower bound {} exceeds upper bound {} at component {}",
                    lower[i], upper[i], i
                )));
            }
        }
        Ok(BoxSet { lower, upper })
    }

    pub fn from_slices(lower: &[f64], upper: &[f64]) -> Result<Self> {
        Self::new(
            DVector::from_column_slice(lower),
            DVector::from_column_slice(upper),
        )
    }

    /// Unit box `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Self {
        BoxSet {
            lower: DVector::zeros(dim),
            upper: DVector::from_element(dim, 1.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, v: &DVector<f64>) -> bool {
        (0..v.len()).all(|i| v[i] >= self.lower[i] && v[i] <= self.upper[i])
    }

    /// Componentwise clamp onto the box.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(v.len(), |i, _| v[i].clamp(self.lower[i], self.upper[i]))
    }

    /// Largest componentwise distance outside the box (0 when inside).
    pub fn violation(&self, v: &DVector<f64>) -> f64 {
        (0..v.len()).fold(0.0, |acc: f64, i| {
            acc.max(self.lower[i] - v[i]).max(v[i] - self.upper[i])
        })
    }
}

/// Discrete-time plant exposed to the controller: successor map, Jacobians,
/// dimensions, and the operating boxes for outputs and inputs.
pub trait PlantModel: Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn step(&self, x: &State, u: &ControlInput) -> Result<State>;
    /// `(A, B)` with `A = d step/dx`, `B = d step/du`, square-root slope
    /// regularized near zero so both stay finite on the box boundary.
    fn jacobians(&self, x: &State, u: &ControlInput) -> (DMatrix<f64>, DMatrix<f64>);
    fn state_box(&self) -> &BoxSet;
    fn input_box(&self) -> &BoxSet;
}

/// Two coupled tanks under forward-Euler discretization.
///
/// ```text
/// h1' = h1 + T (alpha1 u - alpha2 sqrt(h1))
/// h2' = h2 + T alpha2 (sqrt(h1) - sqrt(h2))
/// ```
///
/// Square-root arguments are clamped at zero (Euler can overshoot below) and
/// successor levels are clamped to be nonnegative.
#[derive(Debug, Clone)]
pub struct CoupledTanks {
    pub params: TankParams,
    state_box: BoxSet,
    input_box: BoxSet,
}

impl CoupledTanks {
    /// Tanks with the physical unit boxes (levels and pump rate in `[0, 1]`).
    pub fn new(params: TankParams) -> Result<Self> {
        Self::with_boxes(params, BoxSet::unit(2), BoxSet::unit(1))
    }

    pub fn with_boxes(params: TankParams, state_box: BoxSet, input_box: BoxSet) -> Result<Self> {
        params.validate()?;
        if state_box.dim() != 2 {
            return Err(Error::DimensionMismatch {
                what: "tanks state box",
                expected: 2,
                got: state_box.dim(),
            });
        }
        if input_box.dim() != 1 {
            return Err(Error::DimensionMismatch {
                what: "tanks input box",
                expected: 1,
                got: input_box.dim(),
            });
        }
        Ok(CoupledTanks {
            params,
            state_box,
            input_box,
        })
    }

    /// Continuous-time right-hand side in the alpha parameterization, so that
    /// `step(x, u) = x + T * continuous_rhs(x, u)` away from the clamps.
    pub fn continuous_rhs(&self, x: &State, u: &ControlInput) -> Result<State> {
        self.check_args(x, u)?;
        let s1 = x.0[0].max(0.0).sqrt();
        let s2 = x.0[1].max(0.0).sqrt();
        let p = &self.params;
        Ok(State::from_slice(&[
            p.alpha1 * u.0[0] - p.alpha2 * s1,
            p.alpha2 * (s1 - s2),
        ]))
    }

    /// Pump rate holding level `h` in both tanks: `u = (alpha2/alpha1) sqrt(h)`.
    pub fn equilibrium_input(&self, level: f64) -> ControlInput {
        ControlInput::scalar(self.params.alpha2 / self.params.alpha1 * level.max(0.0).sqrt())
    }

    fn check_args(&self, x: &State, u: &ControlInput) -> Result<()> {
        if x.dim() != 2 {
            return Err(Error::DimensionMismatch {
                what: "tanks state",
                expected: 2,
                got: x.dim(),
            });
        }
        if u.dim() != 1 {
            return Err(Error::DimensionMismatch {
                what: "tanks input",
                expected: 1,
                got: u.dim(),
            });
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("state"));
        }
        if !u.is_finite() {
            return Err(Error::NonFinite("control input"));
        }
        Ok(())
    }
}

impl PlantModel for CoupledTanks {
    fn state_dim(&self) -> usize {
        2
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn step(&self, x: &State, u: &ControlInput) -> Result<State> {
        self.check_args(x, u)?;
        let p = &self.params;
        let s1 = x.0[0].max(0.0).sqrt();
        let s2 = x.0[1].max(0.0).sqrt();
        let h1 = x.0[0] + p.sample_time * (p.alpha1 * u.0[0] - p.alpha2 * s1);
        let h2 = x.0[1] + p.sample_time * (p.alpha2 * (s1 - s2));
        Ok(State::from_slice(&[h1.max(0.0), h2.max(0.0)]))
    }

    fn jacobians(&self, x: &State, u: &ControlInput) -> (DMatrix<f64>, DMatrix<f64>) {
        let _ = u;
        let p = &self.params;
        // d sqrt(h)/dh with the slope capped at h = SQRT_REG.
        let ds1 = 0.5 / x.0[0].max(SQRT_REG).sqrt();
        let ds2 = 0.5 / x.0[1].max(SQRT_REG).sqrt();
        let t = p.sample_time;
        let a = DMatrix::from_row_slice(
            2,
            2,
            &[
                1.0 - t * p.alpha2 * ds1,
                0.0,
                t * p.alpha2 * ds1,
                1.0 - t * p.alpha2 * ds2,
            ],
        );
        let b = DMatrix::from_row_slice(2, 1, &[t * p.alpha1, 0.0]);
        (a, b)
    }

    fn state_box(&self) -> &BoxSet {
        &self.state_box
    }

    fn input_box(&self) -> &BoxSet {
        &self.input_box
    }
}
