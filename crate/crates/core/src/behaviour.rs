//! Percussive behaviour: crossing a proximity threshold strikes a low decaying
//! tone and fires a rejection burst whose strength is modulated by a
//! triangular wave that swings between rejection and attraction while its
//! envelope runs down to neutral.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Sample rate of the synthesized percussive sound.
pub const AUDIO_RATE_HZ: u32 = 44_100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehaviourSpec {
    /// Proximity at which a strike is triggered.
    pub p_trig: f64,
    /// How far below `p_trig` proximity must fall before another strike can fire.
    pub rearm_hyst: f64,
    /// Length of the tactile envelope (s).
    pub t_decay: f64,
    /// Triangular modulation frequency (Hz).
    pub f_mod: f64,
    pub f_sound: f64,
    pub tau_sound: f64,
    pub amp_sound: f64,
}

impl Default for BehaviourSpec {
    fn default() -> Self {
        Self {
            p_trig: 0.8,
            rearm_hyst: 0.1,
            t_decay: 0.8,
            f_mod: 30.0,
            f_sound: 80.0,
            tau_sound: 0.25,
            amp_sound: 0.9,
        }
    }
}

impl BehaviourSpec {
    pub fn validate(&self, control_rate_hz: u32) -> Result<(), ConfigError> {
        if !(self.p_trig > 0.0 && self.p_trig < 1.0) {
            return Err(ConfigError::invalid("behaviour.p_trig", "must lie in (0, 1)"));
        }
        if !(self.rearm_hyst.is_finite() && self.rearm_hyst >= 0.0) {
            return Err(ConfigError::invalid("behaviour.rearm_hyst", "must be non-negative"));
        }
        if !(self.t_decay.is_finite() && self.t_decay > 0.0) {
            return Err(ConfigError::invalid("behaviour.t_decay", "must be positive"));
        }
        if !(self.f_mod > 0.0 && self.f_mod < f64::from(control_rate_hz) / 2.0) {
            return Err(ConfigError::invalid(
                "behaviour.f_mod",
                "must be positive and below half the control rate",
            ));
        }
        for (name, value) in [
            ("behaviour.f_sound", self.f_sound),
            ("behaviour.tau_sound", self.tau_sound),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConfigError::invalid(name, "must be positive"));
            }
        }
        if !(self.amp_sound.is_finite() && (0.0..=1.0).contains(&self.amp_sound)) {
            return Err(ConfigError::invalid("behaviour.amp_sound", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviourState {
    pub armed: bool,
    /// Time of the most recent strike, if any.
    pub last_trigger: Option<f64>,
    pub trigger_count: u64,
}

impl Default for BehaviourState {
    fn default() -> Self {
        Self {
            armed: true,
            last_trigger: None,
            trigger_count: 0,
        }
    }
}

impl BehaviourState {
    pub fn t_since_trigger(&self, t_now: f64) -> Option<f64> {
        self.last_trigger.map(|t0| t_now - t0)
    }
}

/// Parameters of one struck tone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoundEvent {
    pub t: f64,
    pub f_sound: f64,
    pub tau_sound: f64,
    pub amp_sound: f64,
}

impl SoundEvent {
    pub fn new(t: f64, spec: &BehaviourSpec) -> Self {
        Self {
            t,
            f_sound: spec.f_sound,
            tau_sound: spec.tau_sound,
            amp_sound: spec.amp_sound,
        }
    }
}

/// Rising-edge trigger with re-arm hysteresis.
pub fn detect_trigger(
    p_prev: f64,
    p_now: f64,
    spec: &BehaviourSpec,
    state: BehaviourState,
) -> (bool, BehaviourState) {
    let mut next = state;
    if state.armed && p_prev < spec.p_trig && p_now >= spec.p_trig {
        next.armed = false;
        return (true, next);
    }
    if !state.armed && p_now <= spec.p_trig - spec.rearm_hyst {
        next.armed = true;
    }
    (false, next)
}

/// Unit triangular wave starting at its +1 peak.
fn triangle(t: f64, freq: f64) -> f64 {
    let phase = (t * freq).fract();
    if phase < 0.5 {
        1.0 - 4.0 * phase
    } else {
        4.0 * phase - 3.0
    }
}

/// Tactile drive `dt_trig` seconds after a strike: a linearly decaying
/// envelope times a triangular wave, zero once the envelope is spent.
pub fn percussive_drive(dt_trig: f64, spec: &BehaviourSpec) -> f64 {
    if !(0.0..spec.t_decay).contains(&dt_trig) {
        return 0.0;
    }
    let envelope = 1.0 - dt_trig / spec.t_decay;
    envelope * triangle(dt_trig, spec.f_mod)
}

/// The struck tone, `dt_trig` seconds after its onset.
pub fn synth_percussive(dt_trig: f64, spec: &BehaviourSpec) -> f64 {
    sound_sample(dt_trig, spec.f_sound, spec.tau_sound, spec.amp_sound)
}

fn sound_sample(dt: f64, f_sound: f64, tau_sound: f64, amp_sound: f64) -> f64 {
    if dt < 0.0 {
        return 0.0;
    }
    amp_sound * (-dt / tau_sound).exp() * (2.0 * PI * f_sound * dt).sin()
}

/// Render a sound event at 44.1 kHz for `duration` seconds.
pub fn render_sound(event: &SoundEvent, duration: f64) -> Vec<f32> {
    let n = (duration * f64::from(AUDIO_RATE_HZ)).round() as usize;
    (0..n)
        .map(|k| {
            let dt = k as f64 / f64::from(AUDIO_RATE_HZ);
            sound_sample(dt, event.f_sound, event.tau_sound, event.amp_sound) as f32
        })
        .collect()
}

/// Drive signal fed to the coil: the percussive burst while one is running,
/// otherwise exactly neutral. A new strike restarts the burst.
pub fn behaviour_drive(state: &BehaviourState, t_now: f64, spec: &BehaviourSpec) -> f64 {
    match state.t_since_trigger(t_now) {
        Some(dt) if dt >= 0.0 => percussive_drive(dt, spec),
        _ => 0.0,
    }
}
