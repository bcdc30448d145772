//! Websocket service around a [`SimSession`].
//!
//! One task owns the [`Hub`] and runs the fixed-rate loop; each websocket
//! gets a reader that forwards client text to the loop and a writer fed by a
//! bounded queue. A full queue drops the message for that client only, which
//! shows up as a gap in frame ticks or text `seq`.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use spv_core::Config;
use tokio::sync::{mpsc, watch};
use tower_http::services::ServeDir;

use crate::messages::{ClientMessage, Role, ServerMessage, PROTOCOL_VERSION};
use crate::session::{Output, SimSession};

pub type ConnId = u64;

#[derive(Debug, Clone, PartialEq)]
pub enum Outbound {
    Text(String),
    Binary(Vec<u8>),
}

/// Connection bookkeeping, control token and message routing. Transport
/// agnostic: every call returns the deliveries to make.
pub struct Hub {
    session: SimSession,
    conns: BTreeMap<ConnId, Role>,
    /// Subject holding control.
    token: Option<ConnId>,
    seq: u64,
}

impl Hub {
    pub fn new(session: SimSession) -> Self {
        Self {
            session,
            conns: BTreeMap::new(),
            token: None,
            seq: 0,
        }
    }

    pub fn session(&self) -> &SimSession {
        &self.session
    }

    pub fn clients(&self) -> usize {
        self.conns.len()
    }

    pub fn token_holder(&self) -> Option<ConnId> {
        self.token
    }

    fn text(&mut self, mut msg: ServerMessage) -> Outbound {
        msg.set_seq(self.seq);
        self.seq += 1;
        Outbound::Text(serde_json::to_string(&msg).expect("server messages serialize"))
    }

    fn to_one(&mut self, id: ConnId, msg: ServerMessage) -> Vec<(ConnId, Outbound)> {
        vec![(id, self.text(msg))]
    }

    fn error(&mut self, id: ConnId, message: String) -> Vec<(ConnId, Outbound)> {
        self.to_one(id, ServerMessage::Error { seq: 0, message })
    }

    fn route(&mut self, outputs: Vec<Output>) -> Vec<(ConnId, Outbound)> {
        let subjects = self.conns.values().filter(|r| **r == Role::Subject).count();
        let mut out = Vec::new();
        for o in outputs {
            match o {
                Output::Frame(bytes) => out.extend(self.conns.keys().map(|&id| (id, Outbound::Binary(bytes.clone())))),
                Output::Text(mut msg) => {
                    if let ServerMessage::ExperimenterState { subjects: s, .. } = &mut msg {
                        *s = subjects;
                    }
                    let experimenters: Vec<ConnId> = self
                        .conns
                        .iter()
                        .filter(|(_, r)| **r == Role::Experimenter)
                        .map(|(id, _)| *id)
                        .collect();
                    if experimenters.is_empty() {
                        continue;
                    }
                    let text = self.text(msg);
                    out.extend(experimenters.into_iter().map(|id| (id, text.clone())));
                }
            }
        }
        out
    }

    pub fn connect(&mut self, id: ConnId, role: Role) -> Vec<(ConnId, Outbound)> {
        self.conns.insert(id, role);
        let has_control = role == Role::Subject && self.token.is_none();
        if has_control {
            self.token = Some(id);
        }
        let hello = ServerMessage::Hello {
            seq: 0,
            protocol: PROTOCOL_VERSION,
            role,
            has_control,
            config_hash: self.session.config().hash(),
        };
        self.to_one(id, hello)
    }

    /// Passes the token to the longest-connected waiting subject.
    pub fn disconnect(&mut self, id: ConnId) -> Vec<(ConnId, Outbound)> {
        self.conns.remove(&id);
        if self.token != Some(id) {
            return Vec::new();
        }
        self.session.release_control();
        self.token = self.conns.iter().find(|(_, r)| **r == Role::Subject).map(|(id, _)| *id);
        match self.token {
            Some(next) => self.to_one(next, ServerMessage::ControlToken { seq: 0, granted: true }),
            None => Vec::new(),
        }
    }

    pub fn handle_text(&mut self, id: ConnId, text: &str) -> Vec<(ConnId, Outbound)> {
        let Some(&role) = self.conns.get(&id) else {
            return Vec::new();
        };
        let msg = match ClientMessage::parse(text) {
            Ok(m) => m,
            Err(e) => return self.error(id, format!("malformed message: {e}")),
        };
        if !msg.permitted(role) {
            return self.error(id, format!("{} is not permitted for role {role:?}", msg.kind()));
        }
        let result = match msg {
            ClientMessage::Heartbeat { .. } => Ok(Vec::new()),
            ClientMessage::Control { twist, keys, .. } => {
                if self.token != Some(id) {
                    return self.error(id, "control token is held by another subject".into());
                }
                let w = &self.session.config().world;
                let t = twist.unwrap_or_else(|| keys.unwrap_or_default().to_twist(w.v_max, w.w_max));
                self.session.set_control(t.clamped(w.v_max, w.w_max));
                Ok(Vec::new())
            }
            ClientMessage::StartTrial { condition, .. } => self.session.start_trial(condition),
            ClientMessage::AbortTrial { .. } => self.session.abort_trial(),
            ClientMessage::AnnotateAid { note, .. } => self.session.annotate_aid(&note),
        };
        match result {
            Ok(outputs) => self.route(outputs),
            Err(e) => self.error(id, e.to_string()),
        }
    }

    /// One loop iteration. Idles without clients.
    pub fn tick(&mut self) -> Vec<(ConnId, Outbound)> {
        if self.conns.is_empty() {
            return Vec::new();
        }
        match self.session.step() {
            Ok(outputs) => self.route(outputs),
            Err(e) => {
                tracing::error!("session step failed: {e}");
                Vec::new()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub protocol: u32,
    pub tick: u64,
    pub clients: usize,
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub seed: u64,
    pub subject: String,
    /// Overrides `config.gateway.log_dir`.
    pub log_dir: Option<PathBuf>,
}

enum Command {
    Connect(ConnId, Role, mpsc::Sender<Outbound>),
    Disconnect(ConnId),
    Text(ConnId, String),
    Invalid(ConnId, &'static str),
}

#[derive(Clone)]
struct AppState {
    commands: mpsc::UnboundedSender<Command>,
    health: watch::Receiver<Health>,
    config: Arc<Config>,
    next_id: Arc<AtomicU64>,
}

const CLIENT_QUEUE: usize = 64;

fn open_log(dir: &std::path::Path, seed: u64, subject: &str) -> std::io::Result<(PathBuf, Box<dyn std::io::Write + Send>)> {
    std::fs::create_dir_all(dir)?;
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_millis());
    let path = dir.join(format!("session-{subject}-{seed}-{stamp}.jsonl"));
    let file = std::fs::File::create(&path)?;
    Ok((path, Box::new(std::io::BufWriter::new(file))))
}

pub struct Server {
    pub addr: SocketAddr,
    pub log_path: Option<PathBuf>,
    pub handle: tokio::task::JoinHandle<std::io::Result<()>>,
}

/// Binds `config.gateway.host:port` (port 0 picks a free one) and starts the
/// loop and the HTTP service in the background.
pub async fn start(config: Config, options: ServeOptions) -> anyhow::Result<Server> {
    let listener = tokio::net::TcpListener::bind((config.gateway.host.as_str(), config.gateway.port))
        .await
        .map_err(|e| anyhow::anyhow!("cannot bind {}:{}: {e}", config.gateway.host, config.gateway.port))?;
    let addr = listener.local_addr()?;
    let log_dir = options
        .log_dir
        .clone()
        .or_else(|| (!config.gateway.log_dir.is_empty()).then(|| PathBuf::from(&config.gateway.log_dir)));
    let (log_path, log) = match log_dir {
        Some(dir) => {
            let (p, w) = open_log(&dir, options.seed, &options.subject)?;
            (Some(p), Some(w))
        }
        None => (None, None),
    };
    let session = SimSession::new(config.clone(), options.seed, &options.subject, log)?;
    let (cmd_tx, cmd_rx) = mpsc::unbounded_channel();
    let (health_tx, health_rx) = watch::channel(Health {
        status: "ok".into(),
        protocol: PROTOCOL_VERSION,
        tick: 0,
        clients: 0,
    });
    tokio::spawn(run_loop(Hub::new(session), config.gateway.tick_hz, cmd_rx, health_tx));

    let state = AppState {
        commands: cmd_tx,
        health: health_rx,
        config: Arc::new(config.clone()),
        next_id: Arc::new(AtomicU64::new(1)),
    };
    let mut app = Router::new()
        .route("/subject", get(subject_ws))
        .route("/experimenter", get(experimenter_ws))
        .route("/health", get(health))
        .route("/config", get(config_json))
        .with_state(state);
    if !config.gateway.static_dir.is_empty() {
        app = app.fallback_service(ServeDir::new(&config.gateway.static_dir));
    }
    let handle = tokio::spawn(async move { axum::serve(listener, app).await });
    Ok(Server { addr, log_path, handle })
}

async fn run_loop(mut hub: Hub, tick_hz: f64, mut commands: mpsc::UnboundedReceiver<Command>, health: watch::Sender<Health>) {
    let mut senders: BTreeMap<ConnId, mpsc::Sender<Outbound>> = BTreeMap::new();
    let mut interval = tokio::time::interval(Duration::from_secs_f64(1.0 / tick_hz));
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
    let deliver = |senders: &BTreeMap<ConnId, mpsc::Sender<Outbound>>, out: Vec<(ConnId, Outbound)>| {
        for (id, msg) in out {
            if let Some(tx) = senders.get(&id) {
                let _ = tx.try_send(msg);
            }
        }
    };
    loop {
        tokio::select! {
            cmd = commands.recv() => {
                let Some(cmd) = cmd else { break };
                let out = match cmd {
                    Command::Connect(id, role, tx) => {
                        senders.insert(id, tx);
                        hub.connect(id, role)
                    }
                    Command::Disconnect(id) => {
                        senders.remove(&id);
                        hub.disconnect(id)
                    }
                    Command::Text(id, text) => hub.handle_text(id, &text),
                    Command::Invalid(id, why) => hub.error(id, why.into()),
                };
                deliver(&senders, out);
            }
            _ = interval.tick() => {
                let out = hub.tick();
                deliver(&senders, out);
            }
        }
        health.send_replace(Health {
            status: "ok".into(),
            protocol: PROTOCOL_VERSION,
            tick: hub.session().tick(),
            clients: hub.clients(),
        });
    }
}

async fn subject_ws(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, Role::Subject, state))
}

async fn experimenter_ws(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, Role::Experimenter, state))
}

async fn connection(socket: WebSocket, role: Role, state: AppState) {
    let id = state.next_id.fetch_add(1, Ordering::Relaxed);
    let (tx, mut rx) = mpsc::channel::<Outbound>(CLIENT_QUEUE);
    if state.commands.send(Command::Connect(id, role, tx)).is_err() {
        return;
    }
    let (mut sink, mut stream) = socket.split();
    let writer = tokio::spawn(async move {
        while let Some(msg) = rx.recv().await {
            let m = match msg {
                Outbound::Text(t) => Message::Text(t.into()),
                Outbound::Binary(b) => Message::Binary(b.into()),
            };
            if sink.send(m).await.is_err() {
                break;
            }
        }
    });
    while let Some(Ok(msg)) = stream.next().await {
        let cmd = match msg {
            Message::Text(t) => Command::Text(id, t.to_string()),
            Message::Binary(_) => Command::Invalid(id, "malformed message: binary client messages are not accepted"),
            Message::Close(_) => break,
            Message::Ping(_) | Message::Pong(_) => continue,
        };
        if state.commands.send(cmd).is_err() {
            break;
        }
    }
    let _ = state.commands.send(Command::Disconnect(id));
    writer.abort();
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    Json(state.health.borrow().clone())
}

#[derive(Serialize)]
struct ConfigView<'a> {
    hash: String,
    config: &'a Config,
}

async fn config_json(State(state): State<AppState>) -> impl IntoResponse {
    Json(
        serde_json::to_value(ConfigView {
            hash: state.config.hash(),
            config: &state.config,
        })
        .expect("config serializes"),
    )
}
