//! Quantitative self-checks run by `tactile-loop check`.

use std::collections::BTreeSet;
use std::fmt;

use crate::actuation::quantize_levels;
use crate::config::SessionConfig;
use crate::error::ConfigError;
use crate::sensing::effective_steps;
use crate::session::{coupling_score, rigid_hand, run_session};

/// Accepted range for the effective sensor resolution.
pub const EFFECTIVE_STEPS_RANGE: (usize, usize) = (100, 110);
/// Levels the coil output must resolve.
pub const OUTPUT_LEVELS: usize = 26;
/// Closed-loop coupling must beat the rigid-hand baseline by this factor.
pub const COUPLING_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {:<18} {}", self.name, self.detail)
    }
}

pub fn check_effective_steps(cfg: &SessionConfig) -> CheckOutcome {
    let steps = effective_steps(&cfg.light, &cfg.sensor);
    let (lo, hi) = EFFECTIVE_STEPS_RANGE;
    CheckOutcome {
        name: "effective-steps",
        passed: (lo..=hi).contains(&steps),
        detail: format!("{steps} distinct detected steps (accept {lo}..={hi})"),
    }
}

pub fn check_level_census(cfg: &SessionConfig) -> CheckOutcome {
    let mut levels = BTreeSet::new();
    let mut monotone = true;
    let mut idempotent = true;
    let mut prev = 0u8;
    for k in 0..=20_000 {
        let u = -1.0 + k as f64 * 1e-4;
        let (level, u_q) = quantize_levels(u, &cfg.actuator);
        monotone &= level >= prev;
        idempotent &= quantize_levels(u_q, &cfg.actuator).0 == level;
        prev = level;
        levels.insert(level);
    }
    CheckOutcome {
        name: "level-census",
        passed: levels.len() == OUTPUT_LEVELS && monotone && idempotent,
        detail: format!(
            "{} distinct levels (need {OUTPUT_LEVELS}), monotone={monotone}, idempotent={idempotent}",
            levels.len()
        ),
    }
}

/// One second of the configured session: row counts, code range and coil
/// current bounds.
pub fn check_rates(cfg: &SessionConfig) -> Result<CheckOutcome, ConfigError> {
    let one_second = SessionConfig {
        duration_s: 1.0,
        ..cfg.clone()
    };
    let trace = run_session(&one_second)?;
    let want_sensor = cfg.sensor.rate_hz as usize;
    let want_act = cfg.actuator.rate_hz as usize;
    let codes_ok = trace.sensor_rows.iter().all(|r| r.raw_code <= 127);
    let current_ok = trace
        .actuator_rows
        .iter()
        .all(|r| (0.0..=cfg.actuator.i_max).contains(&r.current));
    Ok(CheckOutcome {
        name: "rate-exactness",
        passed: trace.sensor_rows.len() == want_sensor
            && trace.actuator_rows.len() == want_act
            && codes_ok
            && current_ok,
        detail: format!(
            "{} sensor rows (want {want_sensor}), {} actuator rows (want {want_act}), codes in range={codes_ok}, current in range={current_ok}",
            trace.sensor_rows.len(),
            trace.actuator_rows.len(),
        ),
    })
}

pub fn check_coupling(cfg: &SessionConfig) -> Result<CheckOutcome, ConfigError> {
    let closed = run_session(cfg)?;
    let rigid = run_session(&rigid_hand(cfg))?;
    let score = coupling_score(&closed);
    let baseline = coupling_score(&rigid).unwrap_or(0.0).max(0.0);
    let strikes = closed.trigger_count();
    let passed = strikes == 1 && score.is_some_and(|s| s > COUPLING_FACTOR * baseline);
    let shown = score.map_or_else(|| "undefined".to_string(), |s| format!("{s:.3}"));
    Ok(CheckOutcome {
        name: "coupling",
        passed,
        detail: format!("{strikes} strike(s), score {shown} vs rigid-hand baseline {baseline:.3} (need > {COUPLING_FACTOR}x)"),
    })
}

pub fn run_checks(cfg: &SessionConfig) -> Result<Vec<CheckOutcome>, ConfigError> {
    cfg.validate()?;
    Ok(vec![
        check_effective_steps(cfg),
        check_level_census(cfg),
        check_rates(cfg)?,
        check_coupling(cfg)?,
    ])
}
