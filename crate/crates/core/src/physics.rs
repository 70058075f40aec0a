//! Axial plant model: coil force on the hand-held magnet and the hand's
//! spring-damper response, integrated with semi-implicit Euler.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Physical parameters of the coil/magnet/hand plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    /// Force scale at contact (N).
    pub f_ref: f64,
    /// Force decay length (m).
    pub z0: f64,
    /// Effective moving mass of magnet plus fingertips (kg).
    pub m: f64,
    /// Hand stiffness (N/m).
    pub k_hand: f64,
    /// Hand damping (N·s/m).
    pub c_hand: f64,
    /// Coil current at full drive (A).
    pub i_max: f64,
    /// Contact stop above the coil (m).
    pub z_floor: f64,
    /// Integration step (s).
    pub dt: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            f_ref: 4.0,
            z0: 0.02,
            m: 0.02,
            k_hand: 40.0,
            c_hand: 1.2,
            i_max: 2.0,
            z_floor: 0.001,
            dt: 1.0 / 4000.0,
        }
    }
}

impl PhysicsConfig {
    pub fn validate(&self, actuator_rate_hz: u32) -> Result<(), ConfigError> {
        let fields = [
            ("physics.f_ref", self.f_ref),
            ("physics.z0", self.z0),
            ("physics.m", self.m),
            ("physics.k_hand", self.k_hand),
            ("physics.c_hand", self.c_hand),
            ("physics.i_max", self.i_max),
            ("physics.z_floor", self.z_floor),
            ("physics.dt", self.dt),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConfigError::invalid(name, "must be finite and strictly positive"));
            }
        }
        if self.dt > 1.0 / (2.0 * f64::from(actuator_rate_hz)) {
            return Err(ConfigError::invalid(
                "physics.dt",
                "must not exceed half the actuator frame period",
            ));
        }
        Ok(())
    }

    /// Physics tick rate implied by `dt`, rounded to the nearest integer hertz.
    pub fn rate_hz(&self) -> u32 {
        (1.0 / self.dt).round() as u32
    }
}

/// Axial state of the hand-held magnet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagnetState {
    /// Distance above the coil (m).
    pub z: f64,
    /// Axial velocity, positive away from the coil (m/s).
    pub v: f64,
    /// Simulation time (s).
    pub t: f64,
}

impl MagnetState {
    pub fn at_rest(z: f64) -> Self {
        Self { z, v: 0.0, t: 0.0 }
    }
}

/// Where the performer's hand is trying to hold the magnet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandTarget {
    pub z_target: f64,
    pub v_target: f64,
}

impl HandTarget {
    pub fn hold(z_target: f64) -> Self {
        Self {
            z_target: z_target.max(0.0),
            v_target: 0.0,
        }
    }
}

/// Coil current for a normalized drive. The current never reverses: full
/// attraction is zero current, full rejection is `i_max`.
pub fn drive_to_current(u: f64, i_max: f64) -> f64 {
    let u = u.clamp(-1.0, 1.0);
    i_max * (u + 1.0) / 2.0
}

/// Net axial force on the magnet (N, positive = rejection).
///
/// Linear in drive, inverse-quartic in `1 + z/z0`. Negative drive stands for
/// the low-current regime in which the magnet's own field magnetizes the
/// core and pulls it in.
pub fn coil_force(u: f64, z: f64, cfg: &PhysicsConfig) -> f64 {
    let u = u.clamp(-1.0, 1.0);
    let s = 1.0 + z.max(0.0) / cfg.z0;
    let s2 = s * s;
    cfg.f_ref * u / (s2 * s2)
}

/// Advance the plant by one `dt`. Velocity is updated before position; on
/// reaching `z_floor` the magnet stops dead.
pub fn step(state: MagnetState, u: f64, target: HandTarget, cfg: &PhysicsConfig) -> MagnetState {
    let force = coil_force(u, state.z, cfg)
        + cfg.k_hand * (target.z_target - state.z)
        + cfg.c_hand * (target.v_target - state.v);
    let mut v = state.v + cfg.dt * force / cfg.m;
    let mut z = state.z + cfg.dt * v;
    if z <= cfg.z_floor {
        z = cfg.z_floor;
        v = 0.0;
    }
    MagnetState {
        z,
        v,
        t: state.t + cfg.dt,
    }
}
