//! Real-time service: advances a session against the wall clock and streams
//! its state to WebSocket clients, taking control messages back.
//!
//! [`LiveCore`] is the synchronous part (message handling, decimation) and
//! is what tests drive directly; [`serve`] adds pacing and the network.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, mpsc, watch};
use tokio::time::Instant;

use crate::behaviour::{BehaviourSpec, SoundEvent};
use crate::config::SessionConfig;
use crate::error::ConfigError;
use crate::session::Session;

/// State messages per second of simulated time.
pub const STREAM_RATE_HZ: f64 = 60.0;
/// Largest wall-clock lag the pacer will try to make up.
pub const MAX_LAG: Duration = Duration::from_millis(250);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatePayload {
    pub z: f64,
    pub proximity: f64,
    pub raw_code: u8,
    pub level: u8,
    pub u_q: f64,
    pub current: f64,
    pub detected: bool,
    pub armed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum StreamBody {
    State(StatePayload),
    Sound(SoundEvent),
    ConfigAck(Box<SessionConfig>),
    Error(ErrorPayload),
}

/// Server-to-client message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMessage {
    pub t: f64,
    #[serde(flatten)]
    pub body: StreamBody,
}

impl StreamMessage {
    pub fn error(t: f64, code: &str, message: impl Into<String>) -> Self {
        Self {
            t,
            body: StreamBody::Error(ErrorPayload {
                code: code.to_string(),
                message: message.into(),
            }),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("stream messages serialize")
    }
}

/// Client-to-server message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum ControlMessage {
    SetTarget { z_target: f64 },
    LoadBehaviour(BehaviourSpec),
    Start,
    Stop,
    ResetCalibration,
}

/// Session plus the bookkeeping the stream needs.
pub struct LiveCore {
    session: Session,
    running: bool,
    next_report: u64,
}

impl LiveCore {
    /// The hand holds at the trajectory's starting height until told
    /// otherwise.
    pub fn new(cfg: SessionConfig) -> Result<Self, ConfigError> {
        let mut session = Session::new(cfg)?;
        let z0 = session.magnet().z;
        session.set_target(z0);
        Ok(Self {
            session,
            running: false,
            next_report: 0,
        })
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn is_running(&self) -> bool {
        self.running
    }

    pub fn time(&self) -> f64 {
        self.session.time()
    }

    /// Apply a control message before the next physics tick. Returns the
    /// messages to send back, if any.
    pub fn apply(&mut self, msg: ControlMessage) -> Vec<StreamMessage> {
        let t = self.time();
        match msg {
            ControlMessage::SetTarget { z_target } => self.session.set_target(z_target),
            ControlMessage::Start => self.running = true,
            ControlMessage::Stop => self.running = false,
            ControlMessage::ResetCalibration => self.session.reset_calibration(),
            ControlMessage::LoadBehaviour(spec) => {
                return match self.session.load_behaviour(spec) {
                    Ok(()) => vec![self.config_ack()],
                    Err(e) => vec![StreamMessage::error(t, "bad_behaviour", e.to_string())],
                };
            }
        }
        Vec::new()
    }

    pub fn config_ack(&self) -> StreamMessage {
        StreamMessage {
            t: self.time(),
            body: StreamBody::ConfigAck(Box::new(self.session.config().clone())),
        }
    }

    /// Advance `ticks` physics ticks. Every sound event is reported; state
    /// is reported once per 1/60 s of simulated time.
    pub fn advance(&mut self, ticks: u64) -> Vec<StreamMessage> {
        let mut out = Vec::new();
        let rate = self.session.physics_rate_hz() as f64;
        for _ in 0..ticks {
            let tick = self.session.tick();
            if let Some(sound) = tick.sound {
                out.push(StreamMessage {
                    t: sound.t,
                    body: StreamBody::Sound(sound),
                });
            }
            let done = self.session.tick_index();
            let reports_due = (done as f64 * STREAM_RATE_HZ / rate).floor() as u64;
            if reports_due > self.next_report {
                self.next_report = reports_due;
                out.push(self.state_message());
            }
        }
        out
    }

    pub fn state_message(&self) -> StreamMessage {
        let s = &self.session;
        let sensor = s.last_sensor();
        let actuator = s.last_actuator();
        StreamMessage {
            t: s.magnet().t,
            body: StreamBody::State(StatePayload {
                z: s.magnet().z,
                proximity: sensor.map_or(0.0, |f| f.proximity),
                raw_code: sensor.map_or(0, |f| f.raw_code),
                level: actuator.map_or(0, |f| f.level),
                u_q: actuator.map_or(0.0, |f| f.u_q),
                current: actuator.map_or(0.0, |f| f.current),
                detected: sensor.is_some_and(|f| f.detected),
                armed: s.behaviour_state().armed,
            }),
        }
    }
}

type ConnId = u64;

enum Inbound {
    Connected(ConnId, mpsc::UnboundedSender<Arc<str>>),
    Disconnected(ConnId),
    Control(ConnId, ControlMessage),
}

#[derive(Clone)]
struct AppState {
    inbound: mpsc::UnboundedSender<Inbound>,
    broadcast: broadcast::Sender<Arc<str>>,
    config: watch::Receiver<SessionConfig>,
    clock: watch::Receiver<f64>,
    next_id: Arc<std::sync::atomic::AtomicU64>,
}

/// Build the HTTP/WebSocket router and spawn the session owner. Must be
/// called inside a Tokio runtime.
pub fn router(cfg: SessionConfig, assets: Option<PathBuf>) -> Result<Router, ConfigError> {
    let core = LiveCore::new(cfg.clone())?;
    let (inbound_tx, inbound_rx) = mpsc::unbounded_channel();
    let (bcast, _) = broadcast::channel(4096);
    let (config_tx, config_rx) = watch::channel(cfg);
    let (clock_tx, clock_rx) = watch::channel(0.0);
    tokio::spawn(run_owner(core, inbound_rx, bcast.clone(), config_tx, clock_tx));

    let state = AppState {
        inbound: inbound_tx,
        broadcast: bcast,
        config: config_rx,
        clock: clock_rx,
        next_id: Arc::new(0.into()),
    };
    let mut app = Router::new()
        .route("/ws", get(ws_handler))
        .route("/config", get(config_handler))
        .with_state(state);
    if let Some(dir) = assets {
        app = app.fallback_service(tower_http::services::ServeDir::new(dir));
    }
    Ok(app)
}

/// Serve until the process is stopped.
pub async fn serve(cfg: SessionConfig, bind: SocketAddr, assets: Option<PathBuf>) -> std::io::Result<()> {
    let app = router(cfg, assets).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e))?;
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await
}

async fn config_handler(State(state): State<AppState>) -> Json<SessionConfig> {
    Json(state.config.borrow().clone())
}

async fn ws_handler(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, state))
}

async fn connection(socket: WebSocket, state: AppState) {
    let id = state.next_id.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    let (direct_tx, mut direct_rx) = mpsc::unbounded_channel::<Arc<str>>();
    let mut stream = state.broadcast.subscribe();
    if state.inbound.send(Inbound::Connected(id, direct_tx)).is_err() {
        return;
    }
    let (mut sink, mut source) = socket.split();

    loop {
        tokio::select! {
            msg = stream.recv() => match msg {
                Ok(text) => {
                    if sink.send(Message::Text(text.as_ref().into())).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    let t = *state.clock.borrow();
                    let err = StreamMessage::error(t, "lagged", format!("{n} messages dropped"));
                    if sink.send(Message::Text(err.to_json().into())).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Closed) => break,
            },
            Some(text) = direct_rx.recv() => {
                if sink.send(Message::Text(text.as_ref().into())).await.is_err() {
                    break;
                }
            }
            incoming = source.next() => match incoming {
                Some(Ok(Message::Text(text))) => {
                    match serde_json::from_str::<ControlMessage>(text.as_str()) {
                        Ok(msg) => {
                            let _ = state.inbound.send(Inbound::Control(id, msg));
                        }
                        Err(e) => {
                            let t = *state.clock.borrow();
                            let err = StreamMessage::error(t, "malformed", e.to_string());
                            if sink.send(Message::Text(err.to_json().into())).await.is_err() {
                                break;
                            }
                        }
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
        }
    }
    let _ = state.inbound.send(Inbound::Disconnected(id));
}

async fn run_owner(
    mut core: LiveCore,
    mut inbound: mpsc::UnboundedReceiver<Inbound>,
    bcast: broadcast::Sender<Arc<str>>,
    config: watch::Sender<SessionConfig>,
    clock: watch::Sender<f64>,
) {
    let rate = core.session().physics_rate_hz();
    let mut clients: HashMap<ConnId, mpsc::UnboundedSender<Arc<str>>> = HashMap::new();
    let mut controller: Option<ConnId> = None;
    // wall-clock instant corresponding to `anchor_tick`
    let mut anchor = Instant::now();
    let mut anchor_tick = core.session().tick_index();
    let mut ticker = tokio::time::interval(Duration::from_millis(5));
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);

    let publish = |msgs: Vec<StreamMessage>| {
        for m in msgs {
            let _ = bcast.send(m.to_json().into());
        }
    };

    loop {
        let was_active = core.is_running() && !clients.is_empty();
        tokio::select! {
            ev = inbound.recv() => {
                let Some(ev) = ev else { return };
                match ev {
                    Inbound::Connected(id, tx) => {
                        let _ = tx.send(core.config_ack().to_json().into());
                        clients.insert(id, tx);
                    }
                    Inbound::Disconnected(id) => {
                        clients.remove(&id);
                        if controller == Some(id) {
                            controller = None;
                        }
                    }
                    Inbound::Control(id, msg) => {
                        let owner = *controller.get_or_insert(id);
                        if owner != id {
                            if let Some(tx) = clients.get(&id) {
                                let err = StreamMessage::error(core.time(), "not_controller",
                                    "another connection is controlling this session");
                                let _ = tx.send(err.to_json().into());
                            }
                        } else {
                            let is_behaviour = matches!(msg, ControlMessage::LoadBehaviour(_));
                            publish(core.apply(msg));
                            if is_behaviour {
                                config.send_replace(core.session().config().clone());
                            }
                        }
                    }
                }
            }
            _ = ticker.tick() => {
                if core.is_running() && !clients.is_empty() {
                    let due = anchor_tick + (anchor.elapsed().as_secs_f64() * rate as f64) as u64;
                    let behind = due.saturating_sub(core.session().tick_index());
                    let max_batch = (MAX_LAG.as_secs_f64() * rate as f64) as u64;
                    if behind > max_batch {
                        let t = core.time();
                        publish(core.advance(max_batch));
                        publish(vec![StreamMessage::error(t, "lag",
                            format!("simulation fell {} ms behind; skipping ahead", behind * 1000 / rate))]);
                        anchor = Instant::now();
                        anchor_tick = core.session().tick_index();
                    } else {
                        publish(core.advance(behind));
                    }
                    clock.send_replace(core.time());
                }
            }
        }
        let active = core.is_running() && !clients.is_empty();
        if active && !was_active {
            // resuming: do not try to make up the paused interval
            anchor = Instant::now();
            anchor_tick = core.session().tick_index();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Preset, Trajectory};
    use crate::session::{run_scripted, ScriptedTarget};

    #[test]
    fn control_message_wire_format() {
        let m: ControlMessage = serde_json::from_str(r#"{"kind":"set_target","payload":{"z_target":0.02}}"#).unwrap();
        assert_eq!(m, ControlMessage::SetTarget { z_target: 0.02 });
        let m: ControlMessage = serde_json::from_str(r#"{"kind":"start"}"#).unwrap();
        assert_eq!(m, ControlMessage::Start);
        let m: ControlMessage = serde_json::from_str(r#"{"kind":"load_behaviour","payload":{"p_trig":0.5}}"#).unwrap();
        assert_eq!(
            m,
            ControlMessage::LoadBehaviour(BehaviourSpec {
                p_trig: 0.5,
                ..BehaviourSpec::default()
            })
        );
        assert!(serde_json::from_str::<ControlMessage>(r#"{"kind":"jump"}"#).is_err());
    }

    #[test]
    fn stream_message_wire_format() {
        let m = StreamMessage::error(1.5, "malformed", "oops");
        let v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(v["kind"], "error");
        assert_eq!(v["t"], 1.5);
        assert_eq!(v["payload"]["code"], "malformed");
        let back: StreamMessage = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn decimated_to_sixty_hz() {
        let mut core = LiveCore::new(SessionConfig::default()).unwrap();
        core.apply(ControlMessage::Start);
        let msgs = core.advance(4000);
        let states: Vec<f64> = msgs
            .iter()
            .filter(|m| matches!(m.body, StreamBody::State(_)))
            .map(|m| m.t)
            .collect();
        assert_eq!(states.len(), 60);
        assert!(states.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn target_clamped() {
        let mut core = LiveCore::new(SessionConfig::default()).unwrap();
        core.apply(ControlMessage::SetTarget { z_target: 3.0 });
        core.advance(8000);
        assert!(core.session().magnet().z < 0.125);
    }

    #[test]
    fn bad_behaviour_reports_error() {
        let mut core = LiveCore::new(SessionConfig::default()).unwrap();
        let out = core.apply(ControlMessage::LoadBehaviour(BehaviourSpec {
            p_trig: 2.0,
            ..BehaviourSpec::default()
        }));
        assert!(matches!(out[0].body, StreamBody::Error(_)));
        let out = core.apply(ControlMessage::LoadBehaviour(BehaviourSpec {
            p_trig: 0.6,
            ..BehaviourSpec::default()
        }));
        assert!(matches!(&out[0].body, StreamBody::ConfigAck(c) if c.behaviour.p_trig == 0.6));
    }

    #[test]
    fn live_matches_offline_replay() {
        let mut cfg = SessionConfig {
            duration_s: 3.0,
            ..SessionConfig::default()
        };
        cfg.trajectory = Trajectory::Preset(Preset::Hover);
        let script: Vec<ScriptedTarget> = [(0u64, 0.05), (800, 0.04), (1000, 0.02), (1200, 0.005), (6000, 0.04), (8000, 0.004)]
            .iter()
            .map(|&(tick, z_target)| ScriptedTarget { tick, z_target })
            .collect();

        // live: advance in uneven batches, applying each target right before its tick
        let mut core = LiveCore::new(cfg.clone()).unwrap();
        core.apply(ControlMessage::Start);
        let mut sounds = 0;
        for cmd in &script {
            let batch = cmd.tick - core.session().tick_index();
            sounds += count_sounds(&core.advance(batch));
            core.apply(ControlMessage::SetTarget { z_target: cmd.z_target });
        }
        let rest = 12_000 - core.session().tick_index();
        sounds += count_sounds(&core.advance(rest));

        let offline = run_scripted(&cfg, &script).unwrap();
        assert_eq!(offline.trigger_count(), 2);
        assert_eq!(sounds, offline.trigger_count());
    }

    fn count_sounds(msgs: &[StreamMessage]) -> usize {
        msgs.iter().filter(|m| matches!(m.body, StreamBody::Sound(_))).count()
    }
}
