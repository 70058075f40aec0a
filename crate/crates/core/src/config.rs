//! Session configuration document: JSON loading, dotted-path overrides and
//! validation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::actuation::ActuatorConfig;
use crate::behaviour::BehaviourSpec;
use crate::error::{ConfigError, Error};
use crate::physics::{HandTarget, PhysicsConfig};
use crate::sensing::{LightModel, SensorConfig};

/// Upper bound on any hand target, just past the range where the coil force
/// is still perceptible.
pub const Z_TARGET_MAX: f64 = 0.12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    pub t: f64,
    pub z_target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Hover at 4 cm, strike down to 5 mm in 150 ms, hold for 1 s, retreat.
    PercussiveStrike,
    /// Hold the magnet just outside sensing range.
    Hover,
}

impl Preset {
    pub fn keyframes(self) -> Vec<Keyframe> {
        let kf = |t, z_target| Keyframe { t, z_target };
        match self {
            Preset::PercussiveStrike => vec![
                kf(0.0, 0.04),
                kf(0.1, 0.04),
                kf(0.25, 0.005),
                kf(1.25, 0.005),
                kf(1.45, 0.04),
            ],
            Preset::Hover => vec![kf(0.0, 0.05)],
        }
    }
}

/// Piecewise-linear scripted hand target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trajectory {
    Preset(Preset),
    Keyframes(Vec<Keyframe>),
}

impl Default for Trajectory {
    fn default() -> Self {
        Trajectory::Preset(Preset::PercussiveStrike)
    }
}

impl Trajectory {
    pub fn resolve(&self) -> Vec<Keyframe> {
        match self {
            Trajectory::Preset(p) => p.keyframes(),
            Trajectory::Keyframes(k) => k.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let frames = self.resolve();
        if frames.is_empty() {
            return Err(ConfigError::invalid("trajectory.keyframes", "needs at least one keyframe"));
        }
        for (i, k) in frames.iter().enumerate() {
            if !(k.t.is_finite() && k.z_target.is_finite() && k.z_target >= 0.0) {
                return Err(ConfigError::invalid(
                    format!("trajectory.keyframes[{i}]"),
                    "t must be finite and z_target finite and non-negative",
                ));
            }
        }
        if let Some(i) = frames.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(ConfigError::invalid(
                format!("trajectory.keyframes[{}].t", i + 1),
                "keyframe times must be strictly increasing",
            ));
        }
        Ok(())
    }
}

/// Keyframes resolved for fast lookup.
#[derive(Debug, Clone)]
pub struct TargetTrack {
    frames: Vec<Keyframe>,
}

impl TargetTrack {
    pub fn new(trajectory: &Trajectory) -> Self {
        Self {
            frames: trajectory.resolve(),
        }
    }

    /// Hand target at time `t`; holds the first/last keyframe outside the
    /// scripted span.
    pub fn at(&self, t: f64) -> HandTarget {
        let first = self.frames[0];
        if t <= first.t || self.frames.len() == 1 {
            return HandTarget::hold(first.z_target);
        }
        let seg = self.frames.partition_point(|k| k.t <= t);
        if seg >= self.frames.len() {
            return HandTarget::hold(self.frames[self.frames.len() - 1].z_target);
        }
        let (a, b) = (self.frames[seg - 1], self.frames[seg]);
        let slope = (b.z_target - a.z_target) / (b.t - a.t);
        HandTarget {
            z_target: a.z_target + slope * (t - a.t),
            v_target: slope,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub duration_s: f64,
    /// Noise seed for the session; replaces `light.seed` when the session starts.
    pub seed: u64,
    /// Perform a full approach sweep before t = 0 to calibrate the sensor,
    /// as a performer does after switching the device on.
    pub calibrate_on_start: bool,
    pub physics: PhysicsConfig,
    pub light: LightModel,
    pub sensor: SensorConfig,
    pub actuator: ActuatorConfig,
    pub behaviour: BehaviourSpec,
    pub trajectory: Trajectory,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            duration_s: 2.0,
            seed: 0,
            calibrate_on_start: true,
            physics: PhysicsConfig::default(),
            light: LightModel::default(),
            sensor: SensorConfig::default(),
            actuator: ActuatorConfig::default(),
            behaviour: BehaviourSpec::default(),
            trajectory: Trajectory::default(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.duration_s.is_finite() && self.duration_s >= 0.0) {
            return Err(ConfigError::invalid("duration_s", "must be finite and non-negative"));
        }
        self.actuator.validate()?;
        self.physics.validate(self.actuator.rate_hz)?;
        self.light.validate()?;
        self.sensor.validate()?;
        self.behaviour.validate(self.actuator.control_rate_hz)?;
        self.trajectory.validate()?;

        let physics_rate = 1.0 / self.physics.dt;
        if (physics_rate - physics_rate.round()).abs() > 1e-6 {
            return Err(ConfigError::invalid("physics.dt", "must be the reciprocal of an integer rate"));
        }
        let physics_rate = self.physics.rate_hz();
        if !physics_rate.is_multiple_of(self.sensor.rate_hz) {
            return Err(ConfigError::invalid("sensor.rate_hz", "must divide the physics rate"));
        }
        if !physics_rate.is_multiple_of(self.actuator.rate_hz) {
            return Err(ConfigError::invalid("actuator.rate_hz", "must divide the physics rate"));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| path_error(e, origin))?;
        Ok(cfg)
    }

    /// Read a config document; an empty path string yields the defaults.
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_json_str(&text, &path.display().to_string())?)
    }

    /// Apply `KEY=VALUE` overrides, where KEY is a dotted path into the
    /// document and VALUE is JSON (bare words are taken as strings).
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self, ConfigError> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut doc = serde_json::to_value(self).expect("config serializes");
        for raw in overrides {
            let raw = raw.as_ref();
            let (key, value) = raw
                .split_once('=')
                .filter(|(k, _)| !k.is_empty())
                .ok_or_else(|| ConfigError::Override(raw.to_string()))?;
            let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
            set_dotted(&mut doc, key, value).ok_or_else(|| ConfigError::Override(raw.to_string()))?;
        }
        let cfg: Self = serde_path_to_error::deserialize(doc).map_err(|e| path_error(e, "--set"))?;
        Ok(cfg)
    }
}

fn path_error<E: std::fmt::Display>(e: serde_path_to_error::Error<E>, origin: &str) -> ConfigError {
    let field = e.path().to_string();
    if field.is_empty() || field == "." {
        ConfigError::Parse {
            path: origin.to_string(),
            message: e.inner().to_string(),
        }
    } else {
        ConfigError::invalid(field, e.inner().to_string())
    }
}

fn set_dotted(doc: &mut Value, key: &str, value: Value) -> Option<()> {
    let mut parts = key.split('.').peekable();
    let mut cur = doc;
    while let Some(part) = parts.next() {
        let obj = cur.as_object_mut()?;
        if parts.peek().is_none() {
            obj.insert(part.to_string(), value);
            return Some(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    None
}
