//! Coil output path: instantaneous sample-and-hold of a control-rate drive
//! signal down to the 200 Hz output rate, then 26-level quantization.
//!
//! Nothing filters or averages the drive before it is sampled, so square
//! pulses come out square and anything between two frame instants is
//! simply not seen.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::physics::drive_to_current;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuatorConfig {
    pub levels: u32,
    pub rate_hz: u32,
    /// Rate at which the drive signal is evaluated.
    pub control_rate_hz: u32,
    pub i_max: f64,
}

impl Default for ActuatorConfig {
    fn default() -> Self {
        Self {
            levels: 26,
            rate_hz: 200,
            control_rate_hz: 4000,
            i_max: 2.0,
        }
    }
}

impl ActuatorConfig {
    /// Structural checks only. A level count other than 26 is accepted here
    /// so that `check` can report it as a failed census rather than a
    /// configuration error.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.levels < 2 || self.levels > 256 {
            return Err(ConfigError::invalid("actuator.levels", "must lie in [2, 256]"));
        }
        if self.rate_hz == 0 {
            return Err(ConfigError::invalid("actuator.rate_hz", "must be positive"));
        }
        if self.control_rate_hz == 0 || !self.control_rate_hz.is_multiple_of(self.rate_hz) {
            return Err(ConfigError::invalid(
                "actuator.control_rate_hz",
                "must be a positive integer multiple of actuator.rate_hz",
            ));
        }
        if !(self.i_max.is_finite() && self.i_max > 0.0) {
            return Err(ConfigError::invalid("actuator.i_max", "must be positive"));
        }
        Ok(())
    }

    /// Control-rate samples per output frame.
    pub fn hold_ratio(&self) -> u64 {
        u64::from(self.control_rate_hz / self.rate_hz)
    }

    fn top_level(&self) -> f64 {
        f64::from(self.levels - 1)
    }
}

/// A drive signal indexed by control-rate sample number.
pub trait DriveSource {
    fn at(&self, control_index: u64) -> f64;
}

impl DriveSource for [f64] {
    fn at(&self, control_index: u64) -> f64 {
        usize::try_from(control_index)
            .ok()
            .and_then(|i| self.get(i))
            .copied()
            .unwrap_or(0.0)
    }
}

impl DriveSource for Vec<f64> {
    fn at(&self, control_index: u64) -> f64 {
        self.as_slice().at(control_index)
    }
}

/// Wraps a closure `f(control_index) -> u`.
pub struct DriveFn<F>(pub F);

impl<F: Fn(u64) -> f64> DriveSource for DriveFn<F> {
    fn at(&self, control_index: u64) -> f64 {
        (self.0)(control_index)
    }
}

/// One coil output sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorFrame {
    pub t: f64,
    pub level: u8,
    pub u_q: f64,
    pub current: f64,
}

/// Drive value at the instant of output frame `frame_index`. No averaging,
/// no interpolation.
pub fn downsample_hold<D: DriveSource + ?Sized>(drive: &D, frame_index: u64, cfg: &ActuatorConfig) -> f64 {
    drive.at(frame_index * cfg.hold_ratio())
}

/// Quantize a drive to one of `levels` evenly spaced values, rounding half
/// up (towards rejection).
pub fn quantize_levels(u: f64, cfg: &ActuatorConfig) -> (u8, f64) {
    let top = cfg.top_level();
    let u = if u.is_nan() { 0.0 } else { u.clamp(-1.0, 1.0) };
    let level = ((u + 1.0) * top / 2.0 + 0.5).floor().clamp(0.0, top);
    (level as u8, level_to_drive(level as u8, cfg))
}

/// The 26-level quantizer of the default output path.
pub fn quantize26(u: f64) -> (u8, f64) {
    quantize_levels(u, &ActuatorConfig::default())
}

pub fn level_to_drive(level: u8, cfg: &ActuatorConfig) -> f64 {
    -1.0 + 2.0 * f64::from(level) / cfg.top_level()
}

pub fn emit_frame<D: DriveSource + ?Sized>(drive: &D, frame_index: u64, cfg: &ActuatorConfig) -> ActuatorFrame {
    let u = downsample_hold(drive, frame_index, cfg);
    let (level, u_q) = quantize_levels(u, cfg);
    ActuatorFrame {
        t: frame_index as f64 / f64::from(cfg.rate_hz),
        level,
        u_q,
        current: drive_to_current(u_q, cfg.i_max),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn quantizer_examples() {
        assert_eq!(quantize26(1.0), (25, 1.0));
        assert_eq!(quantize26(-1.0), (0, -1.0));
        let (level, u_q) = quantize26(0.0);
        assert_eq!(level, 13);
        assert_abs_diff_eq!(u_q, 0.04, epsilon = 1e-15);
        assert_eq!(quantize26(f64::NAN).0, 13);
        assert_eq!(quantize26(9.0).0, 25);
    }

    #[test]
    fn hold_is_instantaneous() {
        let cfg = ActuatorConfig::default();
        let constant = vec![0.7; 4000];
        for j in 0..200 {
            assert_eq!(downsample_hold(&constant, j, &cfg), 0.7);
        }

        // 100 Hz square wave: flips every 5 ms, i.e. every output frame
        let ratio = cfg.hold_ratio();
        let square = DriveFn(|i: u64| if (i / ratio).is_multiple_of(2) { 1.0 } else { -1.0 });
        for j in 0..200 {
            let f = emit_frame(&square, j, &cfg);
            assert_eq!(f.level, if j % 2 == 0 { 25 } else { 0 });
        }

        // a one-sample spike between frame instants never reaches the output
        let mut spiky = vec![0.0; 4000];
        spiky[ratio as usize * 10 + 7] = 1.0;
        for j in 0..200 {
            assert_eq!(emit_frame(&spiky, j, &cfg).level, 13);
        }
    }

    #[test]
    fn frame_examples() {
        let cfg = ActuatorConfig::default();
        let idle = emit_frame(&DriveFn(|_| 0.0), 3, &cfg);
        assert_eq!(idle.level, 13);
        assert_abs_diff_eq!(idle.current, 1.04, epsilon = 1e-12);
        assert_eq!(idle.t, 0.015);
        let full = emit_frame(&DriveFn(|_| 1.0), 0, &cfg);
        assert_eq!(full.current, 2.0);
    }

    #[test]
    fn rejects_misaligned_control_rate() {
        let cfg = ActuatorConfig {
            control_rate_hz: 4100,
            ..ActuatorConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #[test]
        fn monotone(a in -1.5f64..1.5, b in -1.5f64..1.5) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(quantize26(lo).0 <= quantize26(hi).0);
        }

        #[test]
        fn idempotent(u in -1.0f64..=1.0) {
            let (level, u_q) = quantize26(u);
            prop_assert_eq!(quantize26(u_q).0, level);
        }

        #[test]
        fn frame_invariants(u in -2.0f64..2.0, j in 0u64..10_000) {
            let cfg = ActuatorConfig::default();
            let f = emit_frame(&DriveFn(|_| u), j, &cfg);
            prop_assert!(f.level <= 25);
            prop_assert_eq!(f.u_q, -1.0 + 2.0 * f64::from(f.level) / 25.0);
            prop_assert!((f.current - 2.0 * f64::from(f.level) / 25.0).abs() < 1e-12);
        }
    }
}
