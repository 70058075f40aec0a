//! Fixed-step scheduler closing the loop.
//!
//! One clock at the physics rate drives everything. On a tick that is also a
//! sensor tick the sensor is sampled first and may fire the behaviour; on an
//! actuator tick the drive is sampled and quantized; then the plant is
//! stepped with the most recently emitted drive.

use serde::{Deserialize, Serialize};

use crate::actuation::{emit_frame, ActuatorFrame, DriveFn};
use crate::behaviour::{behaviour_drive, detect_trigger, BehaviourSpec, BehaviourState, SoundEvent};
use crate::config::{SessionConfig, TargetTrack, Z_TARGET_MAX};
use crate::error::ConfigError;
use crate::physics::{coil_force, step, HandTarget, MagnetState};
use crate::sensing::{calibration_sweep, sample_main, CalibrationState, LightModel, SensorFrame};

/// Resolution of the power-on calibration sweep.
const STARTUP_SWEEP_STEPS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorRow {
    pub t: f64,
    pub raw_code: u8,
    pub proximity: f64,
    pub detected: bool,
    pub trigger_fired: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorRow {
    pub t: f64,
    pub level: u8,
    pub u_q: f64,
    pub current: f64,
}

impl From<ActuatorFrame> for ActuatorRow {
    fn from(f: ActuatorFrame) -> Self {
        Self {
            t: f.t,
            level: f.level,
            u_q: f.u_q,
            current: f.current,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsRow {
    pub t: f64,
    pub z: f64,
    pub v: f64,
    pub force: f64,
}

/// Everything a session recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionTrace {
    pub sensor_rows: Vec<SensorRow>,
    pub actuator_rows: Vec<ActuatorRow>,
    pub physics_rows: Vec<PhysicsRow>,
    pub sound_events: Vec<SoundEvent>,
    pub meta: SessionConfig,
}

impl SessionTrace {
    pub fn trigger_count(&self) -> usize {
        self.sensor_rows.iter().filter(|r| r.trigger_fired).count()
    }
}

/// What a single tick produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickOutput {
    pub sensor: Option<(SensorFrame, bool)>,
    pub actuator: Option<ActuatorFrame>,
    pub physics: PhysicsRow,
    pub sound: Option<SoundEvent>,
}

/// A running closed-loop session that can be advanced tick by tick.
#[derive(Debug, Clone)]
pub struct Session {
    cfg: SessionConfig,
    light: LightModel,
    track: TargetTrack,
    tick: u64,
    physics_rate: u64,
    sensor_div: u64,
    actuator_div: u64,
    magnet: MagnetState,
    calibration: CalibrationState,
    behaviour: BehaviourSpec,
    behaviour_state: BehaviourState,
    last_proximity: f64,
    last_sensor: Option<SensorFrame>,
    last_actuator: Option<ActuatorFrame>,
    held_drive: f64,
    target_override: Option<f64>,
}

impl Session {
    pub fn new(cfg: SessionConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let light = LightModel {
            seed: cfg.seed,
            ..cfg.light
        };
        let track = TargetTrack::new(&cfg.trajectory);
        let physics_rate = u64::from(cfg.physics.rate_hz());
        let calibration = if cfg.calibrate_on_start {
            calibration_sweep(&light.steady(), &cfg.sensor, STARTUP_SWEEP_STEPS)
        } else {
            CalibrationState::default()
        };
        let z0 = track.at(0.0).z_target.max(cfg.physics.z_floor);
        Ok(Self {
            light,
            track,
            tick: 0,
            physics_rate,
            sensor_div: physics_rate / u64::from(cfg.sensor.rate_hz),
            actuator_div: physics_rate / u64::from(cfg.actuator.rate_hz),
            magnet: MagnetState::at_rest(z0),
            calibration,
            behaviour: cfg.behaviour,
            behaviour_state: BehaviourState::default(),
            last_proximity: 0.0,
            last_sensor: None,
            last_actuator: None,
            held_drive: 0.0,
            target_override: None,
            cfg,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn tick_index(&self) -> u64 {
        self.tick
    }

    /// Time of the next tick to be executed.
    pub fn time(&self) -> f64 {
        self.tick as f64 / self.physics_rate as f64
    }

    pub fn physics_rate_hz(&self) -> u64 {
        self.physics_rate
    }

    /// Number of ticks covering `duration_s`.
    pub fn total_ticks(&self) -> u64 {
        (self.cfg.duration_s * self.physics_rate as f64).round() as u64
    }

    pub fn magnet(&self) -> MagnetState {
        self.magnet
    }

    pub fn calibration(&self) -> CalibrationState {
        self.calibration
    }

    pub fn behaviour_state(&self) -> BehaviourState {
        self.behaviour_state
    }

    pub fn last_sensor(&self) -> Option<SensorFrame> {
        self.last_sensor
    }

    pub fn last_actuator(&self) -> Option<ActuatorFrame> {
        self.last_actuator
    }

    /// Replace the scripted trajectory with a fixed hand target from now on.
    /// The target is clamped to `[0, Z_TARGET_MAX]`.
    pub fn set_target(&mut self, z_target: f64) {
        let z = if z_target.is_nan() { 0.0 } else { z_target.clamp(0.0, Z_TARGET_MAX) };
        self.target_override = Some(z);
    }

    pub fn load_behaviour(&mut self, spec: BehaviourSpec) -> Result<(), ConfigError> {
        spec.validate(self.cfg.actuator.control_rate_hz)?;
        self.behaviour = spec;
        self.cfg.behaviour = spec;
        Ok(())
    }

    pub fn reset_calibration(&mut self) {
        self.calibration = CalibrationState::default();
    }

    fn target(&self, t: f64) -> HandTarget {
        match self.target_override {
            Some(z) => HandTarget::hold(z),
            None => self.track.at(t),
        }
    }

    /// Run one physics tick.
    pub fn tick(&mut self) -> TickOutput {
        let k = self.tick;
        let t = self.time();
        let mut out_sensor = None;
        let mut sound = None;

        if k.is_multiple_of(self.sensor_div) {
            let j = k / self.sensor_div;
            let t_s = j as f64 / f64::from(self.cfg.sensor.rate_hz);
            let frame = sample_main(&self.light, self.magnet.z, t_s, &mut self.calibration, &self.cfg.sensor);
            let (fired, mut next) =
                detect_trigger(self.last_proximity, frame.proximity, &self.behaviour, self.behaviour_state);
            if fired {
                next.last_trigger = Some(t_s);
                next.trigger_count += 1;
                sound = Some(SoundEvent::new(t_s, &self.behaviour));
            }
            self.behaviour_state = next;
            self.last_proximity = frame.proximity;
            self.last_sensor = Some(frame);
            out_sensor = Some((frame, fired));
        }

        let mut out_actuator = None;
        if k.is_multiple_of(self.actuator_div) {
            let j = k / self.actuator_div;
            let control_rate = f64::from(self.cfg.actuator.control_rate_hz);
            let state = self.behaviour_state;
            let spec = self.behaviour;
            let drive = DriveFn(move |i: u64| behaviour_drive(&state, i as f64 / control_rate, &spec));
            let frame = emit_frame(&drive, j, &self.cfg.actuator);
            self.held_drive = frame.u_q;
            self.last_actuator = Some(frame);
            out_actuator = Some(frame);
        }

        let physics = PhysicsRow {
            t,
            z: self.magnet.z,
            v: self.magnet.v,
            force: coil_force(self.held_drive, self.magnet.z, &self.cfg.physics),
        };
        let target = self.target(t);
        self.magnet = step(self.magnet, self.held_drive, target, &self.cfg.physics);
        self.magnet.t = (k + 1) as f64 / self.physics_rate as f64;
        self.tick += 1;

        TickOutput {
            sensor: out_sensor,
            actuator: out_actuator,
            physics,
            sound,
        }
    }
}

#[derive(Default)]
struct Recorder {
    sensor_rows: Vec<SensorRow>,
    actuator_rows: Vec<ActuatorRow>,
    physics_rows: Vec<PhysicsRow>,
    sound_events: Vec<SoundEvent>,
}

impl Recorder {
    fn record(&mut self, out: TickOutput) {
        if let Some((f, fired)) = out.sensor {
            self.sensor_rows.push(SensorRow {
                t: f.t,
                raw_code: f.raw_code,
                proximity: f.proximity,
                detected: f.detected,
                trigger_fired: fired,
            });
        }
        if let Some(a) = out.actuator {
            self.actuator_rows.push(a.into());
        }
        self.physics_rows.push(out.physics);
        if let Some(s) = out.sound {
            self.sound_events.push(s);
        }
    }

    fn finish(self, meta: SessionConfig) -> SessionTrace {
        SessionTrace {
            sensor_rows: self.sensor_rows,
            actuator_rows: self.actuator_rows,
            physics_rows: self.physics_rows,
            sound_events: self.sound_events,
            meta,
        }
    }
}

/// Run a whole session as fast as possible.
pub fn run_session(cfg: &SessionConfig) -> Result<SessionTrace, ConfigError> {
    run_scripted(cfg, &[])
}

/// A hand-target change applied at a given tick index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedTarget {
    pub tick: u64,
    pub z_target: f64,
}

/// Run a session with set-target commands applied just before the given
/// ticks, the way the live service applies control messages.
pub fn run_scripted(cfg: &SessionConfig, script: &[ScriptedTarget]) -> Result<SessionTrace, ConfigError> {
    let mut session = Session::new(cfg.clone())?;
    let total = session.total_ticks();
    let mut rec = Recorder::default();
    let mut pending = script.iter().peekable();
    for k in 0..total {
        while let Some(cmd) = pending.next_if(|c| c.tick <= k) {
            session.set_target(cmd.z_target);
        }
        rec.record(session.tick());
    }
    Ok(rec.finish(cfg.clone()))
}

/// Same configuration with a hand that is effectively rigid, so actuator
/// pulses cannot move the magnet.
pub fn rigid_hand(cfg: &SessionConfig) -> SessionConfig {
    let mut rigid = cfg.clone();
    rigid.physics.k_hand *= 1000.0;
    rigid.physics.c_hand *= 100.0;
    rigid
}

/// Largest lag (s) searched by [`coupling_score`].
pub const COUPLING_MAX_LAG_S: f64 = 0.050;

/// How strongly actuator spikes show up in the sensed proximity.
///
/// Over the envelope window after the first strike, the actuator drive is
/// resampled to the sensor rate and correlated against the first difference
/// of proximity at lags 0..=50 ms; the best normalized correlation is
/// returned. `None` when the trace contains no strike.
pub fn coupling_score(trace: &SessionTrace) -> Option<f64> {
    let t0 = trace.sound_events.first()?.t;
    let t_end = t0 + trace.meta.behaviour.t_decay;
    let sensor_rate = f64::from(trace.meta.sensor.rate_hz);
    let act_rate = f64::from(trace.meta.actuator.rate_hz);

    let prox: Vec<f64> = trace.sensor_rows.iter().map(|r| r.proximity).collect();
    let start = trace.sensor_rows.iter().position(|r| r.t >= t0)?;
    let end = trace
        .sensor_rows
        .iter()
        .position(|r| r.t >= t_end)
        .unwrap_or(prox.len());

    // drive held at each sensor instant
    let drive_at = |n: usize| -> f64 {
        let t = trace.sensor_rows[n].t;
        let j = (t * act_rate + 1e-9).floor() as usize;
        trace.actuator_rows.get(j).map_or(0.0, |r| r.u_q)
    };
    let diff = |n: usize| prox[n] - prox[n - 1];

    let max_lag = (COUPLING_MAX_LAG_S * sensor_rate).round() as usize;
    let mut best: Option<f64> = None;
    for lag in 0..=max_lag {
        let pairs: Vec<(f64, f64)> = (start.max(1)..end)
            .filter(|n| n + lag < prox.len())
            .map(|n| (drive_at(n), diff(n + lag)))
            .collect();
        let r = pearson(&pairs);
        best = Some(best.map_or(r, |b: f64| b.max(r)));
    }
    best
}

/// Pearson correlation; zero when either side has no variance.
pub fn pearson(pairs: &[(f64, f64)]) -> f64 {
    if pairs.len() < 2 {
        return 0.0;
    }
    let n = pairs.len() as f64;
    let (mx, my) = pairs
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= f64::EPSILON * n || syy <= f64::EPSILON * n {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Keyframe, Preset, Trajectory};

    fn short(duration_s: f64) -> SessionConfig {
        SessionConfig {
            duration_s,
            ..SessionConfig::default()
        }
    }

    #[test]
    fn zero_duration_is_empty() {
        let trace = run_session(&short(0.0)).unwrap();
        assert!(trace.sensor_rows.is_empty());
        assert!(trace.actuator_rows.is_empty());
        assert!(trace.physics_rows.is_empty());
        assert_eq!(trace.meta, short(0.0));
    }

    #[test]
    fn row_counts_are_exact() {
        for d in [0.01, 0.5, 1.0, 2.0] {
            let trace = run_session(&short(d)).unwrap();
            assert_eq!(trace.sensor_rows.len(), (d * 100.0).round() as usize);
            assert_eq!(trace.actuator_rows.len(), (d * 200.0).round() as usize);
            assert_eq!(trace.physics_rows.len(), (d * 4000.0).round() as usize);
        }
    }

    #[test]
    fn timestamps_strictly_increase() {
        let trace = run_session(&short(1.0)).unwrap();
        assert!(trace.sensor_rows.windows(2).all(|w| w[1].t > w[0].t));
        assert!(trace.actuator_rows.windows(2).all(|w| w[1].t > w[0].t));
        assert!(trace.physics_rows.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn invalid_config_is_rejected_up_front() {
        let mut cfg = short(1.0);
        cfg.behaviour.p_trig = 1.5;
        let err = run_session(&cfg).unwrap_err();
        assert!(err.to_string().contains("behaviour.p_trig"));
    }

    #[test]
    fn deterministic() {
        let cfg = SessionConfig { seed: 42, ..short(2.0) };
        assert_eq!(run_session(&cfg).unwrap(), run_session(&cfg).unwrap());
    }

    /// Brute-force count of upward crossings of `p_trig` in a recorded
    /// proximity stream, counting a crossing only after proximity has been
    /// at or below `p_trig - rearm_hyst` since the previous one.
    fn crossings(trace: &SessionTrace) -> usize {
        let b = trace.meta.behaviour;
        let p: Vec<f64> = trace.sensor_rows.iter().map(|r| r.proximity).collect();
        let mut count = 0;
        let mut last_edge: Option<usize> = None;
        for i in 1..p.len() {
            if p[i - 1] < b.p_trig && p[i] >= b.p_trig {
                let dipped = last_edge.is_none_or(|e| p[e..i].iter().any(|&x| x <= b.p_trig - b.rearm_hyst));
                if dipped {
                    count += 1;
                    last_edge = Some(i);
                }
            }
        }
        count
    }

    #[test]
    fn percussive_strike_fires_once() {
        let trace = run_session(&SessionConfig::default()).unwrap();
        assert_eq!(trace.trigger_count(), 1);
        assert_eq!(crossings(&trace), 1);
        assert_eq!(trace.sound_events.len(), 1);
    }

    #[test]
    fn nothing_fires_above_sensing_range() {
        let mut cfg = short(3.0);
        cfg.trajectory = Trajectory::Keyframes(vec![
            Keyframe { t: 0.0, z_target: 0.09 },
            Keyframe { t: 1.0, z_target: 0.045 },
            Keyframe { t: 2.0, z_target: 0.08 },
        ]);
        let trace = run_session(&cfg).unwrap();
        assert_eq!(trace.trigger_count(), 0);
        assert!(trace.sensor_rows.iter().all(|r| !r.detected));
    }

    #[test]
    fn hover_preset_is_idle() {
        let mut cfg = short(1.0);
        cfg.trajectory = Trajectory::Preset(Preset::Hover);
        let trace = run_session(&cfg).unwrap();
        assert_eq!(trace.trigger_count(), 0);
        assert!(trace.actuator_rows.iter().all(|r| r.level == 13));
        assert_eq!(coupling_score(&trace), None);
    }

    #[test]
    fn actuator_never_sees_the_future() {
        // two runs that differ only after t = 0.6 s
        let base = SessionConfig::default();
        let mut other = base.clone();
        let mut frames = base.trajectory.resolve();
        frames.retain(|k| k.t <= 0.6);
        frames.push(Keyframe { t: 0.6, z_target: 0.005 });
        frames.push(Keyframe { t: 0.7, z_target: 0.03 });
        other.trajectory = Trajectory::Keyframes(frames);
        let a = run_session(&base).unwrap();
        let b = run_session(&other).unwrap();
        let cut = 0.6;
        let before = |rows: &[ActuatorRow]| rows.iter().filter(|r| r.t <= cut).copied().collect::<Vec<_>>();
        assert_eq!(before(&a.actuator_rows), before(&b.actuator_rows));
        let phys = |rows: &[PhysicsRow]| rows.iter().filter(|r| r.t <= cut).copied().collect::<Vec<_>>();
        assert_eq!(phys(&a.physics_rows), phys(&b.physics_rows));
        assert_ne!(a.physics_rows, b.physics_rows);
    }

    #[test]
    fn scripted_targets_drive_a_strike() {
        let mut cfg = short(2.0);
        cfg.trajectory = Trajectory::Preset(Preset::Hover);
        // sweep 4 cm -> 5 mm in 10 steps of 15 ms
        let script: Vec<ScriptedTarget> = (0..=10)
            .map(|i| ScriptedTarget {
                tick: 400 + 60 * i,
                z_target: 0.04 - 0.0035 * i as f64,
            })
            .collect();
        let trace = run_scripted(&cfg, &script).unwrap();
        assert_eq!(trace.trigger_count(), 1);
    }

    #[test]
    fn constant_regressor_scores_zero() {
        let mut trace = run_session(&SessionConfig::default()).unwrap();
        for r in &mut trace.actuator_rows {
            r.u_q = 0.04;
        }
        assert_eq!(coupling_score(&trace), Some(0.0));
    }

    #[test]
    fn pearson_basics() {
        let line: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        assert!((pearson(&line) - 1.0).abs() < 1e-12);
        let anti: Vec<(f64, f64)> = line.iter().map(|&(x, y)| (x, -y)).collect();
        assert!((pearson(&anti) + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[(1.0, 2.0)]), 0.0);
    }
}
