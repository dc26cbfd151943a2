//! False-data-injection attack signals on the actuator and sensor channels.
//!
//! A schedule is a list of segments, each adding a step, ramp, or arbitrary
//! stored signal to one component of one channel over a step interval. A
//! schedule is valid only when no time step has both channels under attack at
//! once: an adversary with simultaneous access to both sides could cancel its
//! own footprint and stay covert, so that class is excluded up front.

use nalgebra::DVector;

use crate::dynamics::{BoxSet, ControlInput, State};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackChannel {
    Input,
    Output,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttackShape {
    /// Constant `magnitude` over the active interval.
    Step,
    /// Linear from 0 at `start_step` to `magnitude` at `end_step`.
    Ramp,
    /// One stored value per step of the active interval.
    Custom,
}

/// One attack segment on a single vector component of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSegment {
    pub channel: AttackChannel,
    pub target_index: usize,
    pub start_step: u64,
    pub end_step: u64,
    pub shape: AttackShape,
    pub magnitude: f64,
    pub custom_values: Option<Vec<f64>>,
}

impl AttackSegment {
    fn active_at(&self, k: u64) -> bool {
        k >= self.start_step && k <= self.end_step
    }

    fn value_at(&self, k: u64) -> f64 {
        if !self.active_at(k) {
            return 0.0;
        }
        match self.shape {
            AttackShape::Step => self.magnitude,
            AttackShape::Ramp => {
                let span = (self.end_step - self.start_step) as f64;
                self.magnitude * (k - self.start_step) as f64 / span
            }
            AttackShape::Custom => {
                let values = self.custom_values.as_ref().expect("validated custom segment");
                values[(k - self.start_step) as usize]
            }
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        if self.start_step > self.end_step {
            return Err(Error::InvalidConfig(format!(
                "attack segment {index}: start {} after end {}",
                self.start_step, self.end_step
            )));
        }
        if !self.magnitude.is_finite() {
            return Err(Error::NonFinite("attack magnitude"));
        }
        match self.shape {
            AttackShape::Ramp => {
                if self.start_step == self.end_step {
                    return Err(Error::InvalidConfig(format!(
                        "attack segment {index}: a ramp needs end > start"
                    )));
                }
            }
            AttackShape::Custom => {
                let expected = (self.end_step - self.start_step + 1) as usize;
                match &self.custom_values {
                    Some(values) if values.len() == expected => {
                        if values.iter().any(|v| !v.is_finite()) {
                            return Err(Error::NonFinite("attack custom values"));
                        }
                    }
                    Some(values) => {
                        return Err(Error::DimensionMismatch {
                            what: "attack custom values",
                            expected,
                            got: values.len(),
                        })
                    }
                    None => {
                        return Err(Error::InvalidConfig(format!(
                            "attack segment {index}: custom shape requires values"
                        )))
                    }
                }
            }
            AttackShape::Step => {}
        }
        Ok(())
    }
}

/// Inclusive step ranges where both channels are active at once.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ViolationReport {
    pub overlaps: Vec<(u64, u64)>,
}

impl ViolationReport {
    pub fn is_ok(&self) -> bool {
        self.overlaps.is_empty()
    }
}

impl std::fmt::Display for ViolationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        let spans: Vec<String> = self
            .overlaps
            .iter()
            .map(|(a, b)| if a == b { format!("{a}") } else { format!("{a}..{b}") })
            .collect();
        write!(
            f,
            "input and output channels attacked simultaneously at steps {}",
            spans.join(", ")
        )
    }
}

/// Full attack plan for a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttackSchedule {
    pub segments: Vec<AttackSegment>,
}

impl AttackSchedule {
    pub fn none() -> Self {
        AttackSchedule::default()
    }

    /// Check per-segment shape rules plus the no-simultaneous-channels rule.
    /// Channel overlap is reported, not thrown; malformed segments are errors.
    pub fn validate(&self) -> Result<ViolationReport> {
        for (i, seg) in self.segments.iter().enumerate() {
            seg.validate(i)?;
        }
        let mut overlaps = Vec::new();
        for a in self.segments.iter().filter(|s| s.channel == AttackChannel::Input) {
            for b in self.segments.iter().filter(|s| s.channel == AttackChannel::Output) {
                let lo = a.start_step.max(b.start_step);
                let hi = a.end_step.min(b.end_step);
                if lo <= hi {
                    overlaps.push((lo, hi));
                }
            }
        }
        overlaps.sort_unstable();
        overlaps.dedup();
        Ok(ViolationReport { overlaps })
    }

    /// Earliest step any segment activates, if the schedule is nonempty.
    pub fn first_onset(&self) -> Option<u64> {
        self.segments.iter().map(|s| s.start_step).min()
    }

    /// Attack contribution on `channel` at step `k`, as a vector of dimension
    /// `dim`. Zero outside active segments; overlapping same-channel segments
    /// add up.
    pub fn signal_at(&self, k: u64, channel: AttackChannel, dim: usize) -> DVector<f64> {
        let mut out = DVector::zeros(dim);
        for seg in self.segments.iter().filter(|s| s.channel == channel) {
            if seg.target_index < dim {
                out[seg.target_index] += seg.value_at(k);
            }
        }
        out
    }

    /// Measured output under attack: `y = x + y^a`. Measurements are not
    /// clamped; the attacker controls the reported number.
    pub fn corrupt_measurement(&self, y_true: &State, k: u64) -> State {
        State(&y_true.0 + self.signal_at(k, AttackChannel::Output, y_true.dim()))
    }

    /// Input as received by the actuator: `u + u^a`, clamped to the physical
    /// actuator range (the valve still saturates whatever arrives on the wire).
    pub fn corrupt_input(&self, u: &ControlInput, k: u64, actuator_range: &BoxSet) -> ControlInput {
        let raw = &u.0 + self.signal_at(k, AttackChannel::Input, u.dim());
        ControlInput(actuator_range.project(&raw))
    }

    /// Largest component index referenced per channel, for dimension checks.
    pub fn max_target_index(&self, channel: AttackChannel) -> Option<usize> {
        self.segments
            .iter()
            .filter(|s| s.channel == channel)
            .map(|s| s.target_index)
            .max()
    }
}
