//! Light-occlusion proximity sensing.
//!
//! The magnet shades a light sensor as it approaches. Light is quantized to
//! 7-bit codes at 100 Hz, mapped to proximity through a running min/max
//! calibration, and gated by a detection threshold so that slow ambient
//! changes are not mistaken for an approaching magnet. A second, slower input
//! integrates light over one mains period to null 50 Hz lamp flicker.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Number of codes of a 7-bit converter, minus one.
pub const FULL_SCALE: f64 = 127.0;
/// Smallest min/max span (codes) accepted as a usable calibration.
pub const MIN_CALIBRATED_SPAN: u8 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LightModel {
    /// Unoccluded light level, normalized.
    pub ambient: f64,
    /// Fraction of light still reaching the sensor with the magnet touching it.
    pub floor_frac: f64,
    /// Fractional depth of mains flicker.
    pub flicker_amp: f64,
    pub flicker_hz: f64,
    /// Phase of the flicker at t = 0 (rad).
    pub flicker_phase: f64,
    /// Half-width of the uniform dither, in codes.
    pub noise_amp: f64,
    pub seed: u64,
}

impl Default for LightModel {
    fn default() -> Self {
        Self {
            ambient: 0.92,
            floor_frac: 0.06,
            flicker_amp: 0.0,
            flicker_hz: 50.0,
            flicker_phase: PI / 2.0,
            noise_amp: 0.3,
            seed: 0,
        }
    }
}

impl LightModel {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.ambient > 0.0 && self.ambient <= 1.0) {
            return Err(ConfigError::invalid("light.ambient", "must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.floor_frac) {
            return Err(ConfigError::invalid("light.floor_frac", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.flicker_amp) {
            return Err(ConfigError::invalid("light.flicker_amp", "must lie in [0, 1)"));
        }
        if !(self.flicker_hz.is_finite() && self.flicker_hz > 0.0) {
            return Err(ConfigError::invalid("light.flicker_hz", "must be positive"));
        }
        if !self.flicker_phase.is_finite() {
            return Err(ConfigError::invalid("light.flicker_phase", "must be finite"));
        }
        if !(self.noise_amp.is_finite() && self.noise_amp >= 0.0) {
            return Err(ConfigError::invalid("light.noise_amp", "must be non-negative"));
        }
        Ok(())
    }

    /// Same lighting with flicker and dither removed.
    pub fn steady(&self) -> Self {
        Self {
            flicker_amp: 0.0,
            noise_amp: 0.0,
            ..*self
        }
    }

    fn ambient_at(&self, t: f64) -> f64 {
        let w = 2.0 * PI * self.flicker_hz;
        self.ambient * (1.0 + self.flicker_amp * (w * t + self.flicker_phase).sin())
    }

    /// Mean of `ambient_at` over `[t - window, t]`, in closed form.
    fn ambient_mean(&self, t: f64, window: f64) -> f64 {
        if self.flicker_amp == 0.0 {
            return self.ambient;
        }
        let w = 2.0 * PI * self.flicker_hz;
        let integral_sin =
            ((w * (t - window) + self.flicker_phase).cos() - (w * t + self.flicker_phase).cos()) / w;
        self.ambient * (1.0 + self.flicker_amp * integral_sin / window)
    }

    /// Dither (codes) for sample `index`. A pure function of seed and index,
    /// so the main and backup paths see the same value for the same frame.
    pub fn noise(&self, index: u64) -> f64 {
        if self.noise_amp == 0.0 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_word_pos(u128::from(index) * 2);
        let unit: f64 = rng.random();
        (2.0 * unit - 1.0) * self.noise_amp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub bits: u32,
    pub rate_hz: u32,
    /// Detection threshold as a fraction of the calibrated span.
    pub threshold: f64,
    /// Distance at which the magnet stops shading the sensor (m).
    pub z_max: f64,
    pub backup_window_s: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            bits: 7,
            rate_hz: 100,
            threshold: 0.05,
            z_max: 0.04,
            backup_window_s: 0.020,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.bits != 7 {
            return Err(ConfigError::invalid("sensor.bits", "the converter is 7-bit"));
        }
        if self.rate_hz == 0 {
            return Err(ConfigError::invalid("sensor.rate_hz", "must be positive"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(ConfigError::invalid("sensor.threshold", "must lie in (0, 1)"));
        }
        if !(self.z_max.is_finite() && self.z_max > 0.0) {
            return Err(ConfigError::invalid("sensor.z_max", "must be positive"));
        }
        if !(self.backup_window_s.is_finite() && self.backup_window_s > 0.0) {
            return Err(ConfigError::invalid("sensor.backup_window_s", "must be positive"));
        }
        Ok(())
    }

    fn frame_index(&self, t: f64) -> u64 {
        (t * f64::from(self.rate_hz)).round().max(0.0) as u64
    }
}

/// Running extrema of every code seen since power-on (or the last reset).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationState {
    pub min_code: u8,
    pub max_code: u8,
    pub sample_count: u64,
}

impl Default for CalibrationState {
    fn default() -> Self {
        Self {
            min_code: 127,
            max_code: 0,
            sample_count: 0,
        }
    }
}

impl CalibrationState {
    pub fn span(&self) -> u8 {
        self.max_code.saturating_sub(self.min_code)
    }

    pub fn is_calibrated(&self) -> bool {
        self.sample_count > 0 && self.span() >= MIN_CALIBRATED_SPAN
    }
}

/// One main-path sensor sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub t: f64,
    pub raw_code: u8,
    /// 1 = touching, 0 = out of range or below threshold.
    pub proximity: f64,
    pub detected: bool,
    pub calibrated: bool,
}

/// Light reaching the sensor with the magnet at height `z`.
pub fn light_at_sensor(model: &LightModel, z: f64, t: f64, cfg: &SensorConfig) -> f64 {
    model.ambient_at(t) * occlusion(model, z, cfg)
}

fn occlusion(model: &LightModel, z: f64, cfg: &SensorConfig) -> f64 {
    let open = (z / cfg.z_max).clamp(0.0, 1.0);
    model.floor_frac + (1.0 - model.floor_frac) * open
}

/// Round-half-up 7-bit quantizer with additive dither in code units.
pub fn quantize7(x: f64, noise: f64) -> u8 {
    let v = (FULL_SCALE * x + noise + 0.5).floor();
    if v.is_nan() {
        return 0;
    }
    v.clamp(0.0, FULL_SCALE) as u8
}

pub fn calibrate_update(cal: CalibrationState, raw_code: u8) -> CalibrationState {
    CalibrationState {
        min_code: cal.min_code.min(raw_code),
        max_code: cal.max_code.max(raw_code),
        sample_count: cal.sample_count + 1,
    }
}

/// Map a code to `(proximity, detected)` using the calibrated span.
///
/// More light means farther away, so the calibrated maximum is proximity 0.
/// Values below the threshold are reported as exactly 0.
pub fn proximity_of(cal: &CalibrationState, raw_code: u8, cfg: &SensorConfig) -> (f64, bool) {
    if !cal.is_calibrated() {
        return (0.0, false);
    }
    let span = f64::from(cal.span());
    let p_raw = ((f64::from(cal.max_code) - f64::from(raw_code)) / span).clamp(0.0, 1.0);
    if p_raw >= cfg.threshold {
        (p_raw, true)
    } else {
        (0.0, false)
    }
}

/// Take one main-path sample and fold it into the calibration.
pub fn sample_main(
    model: &LightModel,
    z: f64,
    t: f64,
    cal: &mut CalibrationState,
    cfg: &SensorConfig,
) -> SensorFrame {
    let raw_code = quantize7(light_at_sensor(model, z, t, cfg), model.noise(cfg.frame_index(t)));
    *cal = calibrate_update(*cal, raw_code);
    let (proximity, detected) = proximity_of(cal, raw_code, cfg);
    SensorFrame {
        t,
        raw_code,
        proximity,
        detected,
        calibrated: cal.is_calibrated(),
    }
}

/// Low-sensitivity input: light averaged over `[t - backup_window_s, t]`
/// before quantization. A 20 ms window spans one 50 Hz period exactly.
pub fn sample_backup(model: &LightModel, z: f64, t: f64, cfg: &SensorConfig) -> u8 {
    let x = model.ambient_mean(t, cfg.backup_window_s) * occlusion(model, z, cfg);
    quantize7(x, model.noise(cfg.frame_index(t)))
}

/// Sweep from `z_max` down to contact, returning the resulting calibration.
/// This is the "full movement towards the sensor" done after power-on.
pub fn calibration_sweep(model: &LightModel, cfg: &SensorConfig, steps: usize) -> CalibrationState {
    let mut cal = CalibrationState::default();
    for k in 0..=steps {
        let z = cfg.z_max * (1.0 - k as f64 / steps as f64);
        let code = quantize7(light_at_sensor(model, z, 0.0, cfg), 0.0);
        cal = calibrate_update(cal, code);
    }
    cal
}

/// Distinct detected proximity values over a 0.01 mm sweep of the sensing
/// range, after a calibration sweep, under steady (noise- and flicker-free)
/// lighting.
pub fn effective_steps(model: &LightModel, cfg: &SensorConfig) -> usize {
    let steady = model.steady();
    let resolution = 1e-5;
    let n = (cfg.z_max / resolution).round() as usize;
    let cal = calibration_sweep(&steady, cfg, n);
    let mut seen = [false; 128];
    for k in 0..=n {
        let z = k as f64 * resolution;
        let code = quantize7(light_at_sensor(&steady, z, 0.0, cfg), 0.0);
        if proximity_of(&cal, code, cfg).1 {
            seen[usize::from(code)] = true;
        }
    }
    seen.iter().filter(|s| **s).count()
}
