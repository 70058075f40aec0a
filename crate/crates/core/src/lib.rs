//! Deterministic simulator and behaviour engine for a closed tactile loop:
//! a hand-held permanent magnet sensed by light occlusion and pushed or
//! pulled by an electromagnet underneath it.

pub mod actuation;
pub mod behaviour;
pub mod check;
pub mod config;
pub mod error;
pub mod live;
pub mod physics;
pub mod sensing;
pub mod session;
pub mod trace;

pub use config::SessionConfig;
pub use error::{ConfigError, Error, Result};
pub use session::{coupling_score, run_session, Session, SessionTrace};
pub use trace::{export_trace, import_trace};
