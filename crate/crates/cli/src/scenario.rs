//! Scenario file schema, defaults, and dot-path overrides.
//!
//! Every key is optional; the defaults reproduce the attack-free fill
//! experiment (empty tanks, setpoint 0.8, ten-step horizon, proximity tube
//! of radius 0.01 and a CUSUM with drift 0.01 / threshold 0.1).

use std::path::Path;

use levelguard::attack::{AttackChannel, AttackSchedule, AttackSegment, AttackShape};
use levelguard::detector::Norm;
use levelguard::dynamics::{CoupledTanks, PlantModel, State, TankParams};
use levelguard::nmpc::{self, MpcConfig, ProximityBall};
use levelguard::sim::{DetectorConfig, NoiseKind, NoiseModel, ScenarioConfig};
use levelguard::nalgebra::{DMatrix, DVector};
use serde::Deserialize;

pub const DEFAULT_ALPHA1: f64 = 1.75;
pub const DEFAULT_ALPHA2: f64 = 0.1544;
pub const DEFAULT_SAMPLE_TIME: f64 = 0.1;
pub const DEFAULT_HORIZON: usize = 10;
pub const DEFAULT_Q_DIAG: [f64; 2] = [20.0, 1.0];
pub const DEFAULT_R_DIAG: [f64; 1] = [0.001];
/// The terminal ball is disabled by default: a seeding solve far from the
/// setpoint (for example from empty tanks) cannot reach any small terminal
/// ball, and the Riccati terminal cost already provides the pull.
pub const DEFAULT_TERMINAL_RADIUS: f64 = 0.0;
pub const DEFAULT_SETPOINT: [f64; 2] = [0.8, 0.8];
pub const DEFAULT_PROXIMITY_RADIUS: f64 = 0.01;
pub const DEFAULT_DELTA: f64 = 0.01;
pub const DEFAULT_GAMMA: f64 = 0.1;
pub const DEFAULT_X0: [f64; 2] = [0.0, 0.0];
pub const DEFAULT_TOTAL_STEPS: u64 = 1000;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub plant: PlantSection,
    #[serde(default)]
    pub mpc: MpcSection,
    #[serde(default)]
    pub detector: DetectorSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub attack: AttackSection,
    #[serde(default)]
    pub sim: SimSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub sample_time: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcSection {
    pub horizon: Option<usize>,
    pub q_diag: Option<Vec<f64>>,
    pub r_diag: Option<Vec<f64>>,
    pub terminal_radius: Option<f64>,
    pub setpoint: Option<Vec<f64>>,
    pub proximity_radius: Option<f64>,
    pub proximity_norm: Option<String>,
    pub proximity_enabled: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub enabled: Option<bool>,
    pub delta: Option<f64>,
    pub gamma: Option<f64>,
    pub norm: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub kind: Option<String>,
    pub std_dev: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    #[serde(default)]
    pub segments: Vec<SegmentEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentEntry {
    pub channel: String,
    #[serde(default)]
    pub index: usize,
    pub start: u64,
    pub end: u64,
    pub shape: String,
    #[serde(default)]
    pub magnitude: f64,
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub x0: Option<Vec<f64>>,
    pub total_steps: Option<u64>,
    pub halt_on_alarm: Option<bool>,
}

fn parse_norm(value: Option<&str>, key: &str) -> Result<Norm, String> {
    match value.unwrap_or("euclidean") {
        "euclidean" => Ok(Norm::Euclidean),
        "infinity" => Ok(Norm::Infinity),
        other => Err(format!("{key}: expected \"euclidean\" or \"infinity\", got \"{other}\"")),
    }
}

impl ScenarioFile {
    /// Parse scenario text, apply `key=value` dot-path overrides, and
    /// deserialize. Parse failures carry the TOML line/column.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, String> {
        let mut doc: toml::Value =
            toml::from_str(text).map_err(|e| format!("scenario parse error: {e}"))?;
        apply_overrides(&mut doc, overrides)?;
        let merged = toml::to_string(&doc).map_err(|e| format!("override merge failed: {e}"))?;
        toml::from_str(&merged).map_err(|e| format!("scenario error: {e}"))
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::parse(&text, overrides)
    }

    /// Resolve defaults and build the validated runtime configuration.
    pub fn build(&self) -> Result<ScenarioConfig, String> {
        let plant = TankParams {
            alpha1: self.plant.alpha1.unwrap_or(DEFAULT_ALPHA1),
            alpha2: self.plant.alpha2.unwrap_or(DEFAULT_ALPHA2),
            sample_time: self.plant.sample_time.unwrap_or(DEFAULT_SAMPLE_TIME),
        };
        let model = CoupledTanks::new(plant.clone()).map_err(|e| e.to_string())?;

        let q_diag = self.mpc.q_diag.clone().unwrap_or_else(|| DEFAULT_Q_DIAG.to_vec());
        if q_diag.len() != 2 {
            return Err(format!("mpc.q_diag: expected 2 entries, got {}", q_diag.len()));
        }
        let r_diag = self.mpc.r_diag.clone().unwrap_or_else(|| DEFAULT_R_DIAG.to_vec());
        if r_diag.len() != 1 {
            return Err(format!("mpc.r_diag: expected 1 entry, got {}", r_diag.len()));
        }
        let setpoint_vals = self.mpc.setpoint.clone().unwrap_or_else(|| DEFAULT_SETPOINT.to_vec());
        if setpoint_vals.len() != 2 {
            return Err(format!("mpc.setpoint: expected 2 entries, got {}", setpoint_vals.len()));
        }
        let q = DMatrix::from_diagonal(&DVector::from_column_slice(&q_diag));
        let r = DMatrix::from_diagonal(&DVector::from_column_slice(&r_diag));
        let setpoint = State::from_slice(&setpoint_vals);
        let u_eq = model.equilibrium_input(setpoint_vals[0]);
        let terminal_weight = nmpc::terminal_weight_for(&model, &setpoint, &u_eq, &q, &r)
            .map_err(|e| format!("terminal weight: {e}"))?;

        let mut mpc = MpcConfig::new(
            self.mpc.horizon.unwrap_or(DEFAULT_HORIZON),
            q,
            r,
            terminal_weight,
            setpoint,
            model.state_box().clone(),
            model.input_box().clone(),
        );
        mpc.terminal_set_radius = self.mpc.terminal_radius.unwrap_or(DEFAULT_TERMINAL_RADIUS);
        if self.mpc.proximity_enabled.unwrap_or(true) {
            let radius = self.mpc.proximity_radius.unwrap_or(DEFAULT_PROXIMITY_RADIUS);
            let norm = parse_norm(self.mpc.proximity_norm.as_deref(), "mpc.proximity_norm")?;
            mpc.proximity = Some(ProximityBall::new(radius, norm).map_err(|e| e.to_string())?);
        }

        let detector = DetectorConfig {
            enabled: self.detector.enabled.unwrap_or(true),
            drift: self.detector.delta.unwrap_or(DEFAULT_DELTA),
            threshold: self.detector.gamma.unwrap_or(DEFAULT_GAMMA),
            norm: parse_norm(self.detector.norm.as_deref(), "detector.norm")?,
        };

        let noise = NoiseModel {
            kind: match self.noise.kind.as_deref().unwrap_or("none") {
                "none" => NoiseKind::None,
                "gaussian" => NoiseKind::Gaussian,
                other => {
                    return Err(format!(
                        "noise.kind: expected \"none\" or \"gaussian\", got \"{other}\""
                    ))
                }
            },
            std_dev: self.noise.std_dev.unwrap_or(0.0),
            seed: self.noise.seed.unwrap_or(0),
        };

        let mut segments = Vec::with_capacity(self.attack.segments.len());
        for (i, seg) in self.attack.segments.iter().enumerate() {
            let channel = match seg.channel.as_str() {
                "input" => AttackChannel::Input,
                "output" => AttackChannel::Output,
                other => {
                    return Err(format!(
                        "attack.segments[{i}].channel: expected \"input\" or \"output\", got \"{other}\""
                    ))
                }
            };
            let shape = match seg.shape.as_str() {
                "step" => AttackShape::Step,
                "ramp" => AttackShape::Ramp,
                "custom" => AttackShape::Custom,
                other => {
                    return Err(format!(
                        "attack.segments[{i}].shape: expected \"step\", \"ramp\" or \"custom\", got \"{other}\""
                    ))
                }
            };
            segments.push(AttackSegment {
                channel,
                target_index: seg.index,
                start_step: seg.start,
                end_step: seg.end,
                shape,
                magnitude: seg.magnitude,
                custom_values: seg.values.clone(),
            });
        }

        let x0_vals = self.sim.x0.clone().unwrap_or_else(|| DEFAULT_X0.to_vec());
        if x0_vals.len() != 2 {
            return Err(format!("sim.x0: expected 2 entries, got {}", x0_vals.len()));
        }

        let config = ScenarioConfig {
            plant,
            x0: State::from_slice(&x0_vals),
            mpc,
            detector,
            attack: AttackSchedule { segments },
            noise,
            total_steps: self.sim.total_steps.unwrap_or(DEFAULT_TOTAL_STEPS),
            halt_on_alarm: self.sim.halt_on_alarm.unwrap_or(true),
        };
        config.validate().map_err(|e| e.to_string())?;
        Ok(config)
    }
}

/// Apply `path.to.key=value` replacements to a parsed TOML document.
/// Numeric path segments index arrays; missing tables are created.
pub fn apply_overrides(doc: &mut toml::Value, overrides: &[String]) -> Result<(), String> {
    for entry in overrides {
        let (path, raw_value) = entry
            .split_once('=')
            .ok_or_else(|| format!("override \"{entry}\" is not of the form key=value"))?;
        let value = parse_override_value(raw_value);
        let segments: Vec<&str> = path.split('.').collect();
        if segments.is_empty() || segments.iter().any(|s| s.is_empty()) {
            return Err(format!("override \"{entry}\" has an empty path segment"));
        }
        let mut cursor = &mut *doc;
        for (pos, segment) in segments.iter().enumerate() {
            let last = pos + 1 == segments.len();
            if let Ok(index) = segment.parse::<usize>() {
                let arr = cursor
                    .as_array_mut()
                    .ok_or_else(|| format!("override \"{entry}\": \"{}\" is not an array", segments[..pos].join(".")))?;
                if index >= arr.len() {
                    return Err(format!(
                        "override \"{entry}\": index {index} out of bounds (len {})",
                        arr.len()
                    ));
                }
                if last {
                    arr[index] = value;
                    break;
                }
                cursor = &mut arr[index];
            } else {
                let table = cursor
                    .as_table_mut()
                    .ok_or_else(|| format!("override \"{entry}\": \"{}\" is not a table", segments[..pos].join(".")))?;
                if last {
                    table.insert(segment.to_string(), value);
                    break;
                }
                cursor = table
                    .entry(segment.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::map::Map::new()));
            }
        }
    }
    Ok(())
}

/// Parse an override value as a TOML literal, falling back to a bare string
/// so `--set mpc.proximity_norm=euclidean` works unquoted.
fn parse_override_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Value>(&wrapped) {
        Ok(toml::Value::Table(mut t)) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        _ => toml::Value::String(raw.to_string()),
    }
}
