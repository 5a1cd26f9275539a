//! Live collection sessions over WebSocket.
//!
//! The simulation runs on the calling thread at a fixed tick rate. An
//! acceptor thread hands each client its own thread, which parses commands
//! and forwards them through a queue, and writes frames from a small
//! bounded queue so a slow client loses frames instead of stalling ticks.
//!
//! With no client attached the scripted human decides, so the log matches
//! a headless collection. Once a client is attached its claim is the human
//! gate. While claimed, each tick executes the next queued teleop command;
//! a claimed tick with none queued holds the robot still.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender, SyncSender, TryRecvError, TrySendError};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use easy_iil_core::dataset::{Episode, SourceCounts, StepRecord};
use easy_iil_core::env::{Action, Env, EnvState, Observation, RegionLabel, SourceLabel};
use easy_iil_core::gating::{beta_schedule, HumanExpert, ScriptedHuman};
use easy_iil_core::geometry::Pose2;
use easy_iil_core::metrics::intervention_rate;
use serde::{Deserialize, Serialize};
use tungstenite::{Message, WebSocket};

use crate::collect::{run_collect, CollectInputs, CollectSpec, Operator};
use crate::config::ExperimentConfig;
use crate::error::Result;

pub const DEFAULT_TICK_HZ: f64 = 20.0;
const FRAME_QUEUE: usize = 64;
const POLL: Duration = Duration::from_millis(2);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMsg {
    Claim,
    Release,
    Teleop { dx: f64, dy: f64, dtheta: f64, grip: f64 },
}

impl ClientMsg {
    /// Parse one text frame; teleop components must lie in `[-1, 1]`.
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let msg: ClientMsg = serde_json::from_str(text).map_err(|e| format!("malformed command: {e}"))?;
        if let ClientMsg::Teleop { dx, dy, dtheta, grip } = msg {
            for (name, v) in [("dx", dx), ("dy", dy), ("dtheta", dtheta), ("grip", grip)] {
                if !(-1.0..=1.0).contains(&v) {
                    return Err(format!("teleop {name} = {v} outside [-1, 1]"));
                }
            }
        }
        Ok(msg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub episode: u32,
    pub beta: Option<f64>,
    pub human: usize,
    pub assistant: usize,
    pub novice: usize,
    pub intervention_rate: Option<f64>,
    pub claimed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    pub tick: u64,
    pub ee: Pose2,
    pub object: Pose2,
    pub goal: Pose2,
    pub held: bool,
    pub region: RegionLabel,
    /// Who acted this tick; `None` while a claimed operator holds still.
    pub source: Option<SourceLabel>,
    pub round: u32,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerFrame {
    State(StateFrame),
    Event {
        event: String,
        tick: u64,
        episode: Option<u32>,
        detail: Option<String>,
    },
    Error {
        message: String,
    },
}

impl ServerFrame {
    fn event(event: &str, tick: u64, episode: Option<u32>, detail: Option<String>) -> Self {
        ServerFrame::Event {
            event: event.into(),
            tick,
            episode,
            detail,
        }
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("frames serialize")
    }
}

enum Inbound {
    Connected(u64, SyncSender<String>),
    Command(u64, ClientMsg),
    Disconnected(u64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SessionOptions {
    /// Ticks per second; zero runs unpaced.
    pub tick_hz: f64,
    /// Hold the first episode until a client connects.
    pub wait_for_client: bool,
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self {
            tick_hz: DEFAULT_TICK_HZ,
            wait_for_client: false,
        }
    }
}

/// The human seat when a UI may be attached.
struct UiOperator {
    scripted: ScriptedHuman,
    env: Env,
    inbound: Receiver<Inbound>,
    clients: BTreeMap<u64, SyncSender<String>>,
    owner: Option<u64>,
    queue: VecDeque<(u64, ClientMsg)>,
    teleop: Option<[f64; 4]>,
    ui_steps: Vec<u64>,
    k: u64,
    tick: u64,
    episode: u32,
    round: u32,
    beta: Option<f64>,
    counts: SourceCounts,
    period: Option<Duration>,
    next_tick: Instant,
    wait_for_client: bool,
}

impl UiOperator {
    fn broadcast(&mut self, frame: &ServerFrame) {
        let text = frame.to_text();
        self.clients.retain(|_, tx| !matches!(tx.try_send(text.clone()), Err(TrySendError::Disconnected(_))));
    }

    fn send_to(&mut self, id: u64, frame: &ServerFrame) {
        if let Some(tx) = self.clients.get(&id) {
            let _ = tx.try_send(frame.to_text());
        }
    }

    fn handle(&mut self, msg: Inbound) {
        match msg {
            Inbound::Connected(id, tx) => {
                self.clients.insert(id, tx);
                let f = ServerFrame::event("connected", self.tick, Some(self.episode), Some(format!("client {id}")));
                self.send_to(id, &f);
            }
            Inbound::Command(id, m) => self.queue.push_back((id, m)),
            Inbound::Disconnected(id) => {
                self.clients.remove(&id);
                self.queue.retain(|(c, _)| *c != id);
                if self.owner == Some(id) {
                    self.owner = None;
                    self.teleop = None;
                    let f = ServerFrame::event("released", self.tick, Some(self.episode), Some("disconnect".into()));
                    self.broadcast(&f);
                }
            }
        }
    }

    fn pump(&mut self) {
        loop {
            match self.inbound.try_recv() {
                Ok(m) => self.handle(m),
                Err(TryRecvError::Empty | TryRecvError::Disconnected) => break,
            }
        }
    }

    /// Apply queued commands in order, stopping once a teleop is taken.
    fn process_queue(&mut self) {
        while self.teleop.is_none() {
            let Some((id, msg)) = self.queue.pop_front() else { break };
            match msg {
                ClientMsg::Claim if self.owner.is_none() => {
                    self.owner = Some(id);
                    let f = ServerFrame::event("claimed", self.tick, Some(self.episode), Some(format!("client {id}")));
                    self.broadcast(&f);
                }
                ClientMsg::Claim if self.owner == Some(id) => {}
                ClientMsg::Claim => self.send_to(id, &error("control is held by another client")),
                ClientMsg::Release if self.owner == Some(id) => {
                    self.owner = None;
                    let f = ServerFrame::event("released", self.tick, Some(self.episode), Some(format!("client {id}")));
                    self.broadcast(&f);
                }
                ClientMsg::Release => self.send_to(id, &error("release without holding control")),
                ClientMsg::Teleop { dx, dy, dtheta, grip } if self.owner == Some(id) => {
                    self.teleop = Some([dx, dy, dtheta, grip]);
                }
                ClientMsg::Teleop { .. } => self.send_to(id, &error("teleop without holding control")),
            }
        }
    }

    fn frame(&self, state: &EnvState, source: Option<SourceLabel>) -> ServerFrame {
        ServerFrame::State(StateFrame {
            tick: self.tick,
            ee: state.ee,
            object: state.object,
            goal: state.goal,
            held: state.held,
            region: self.env.in_bottleneck(state),
            source,
            round: self.round,
            metrics: Metrics {
                episode: self.episode,
                beta: self.beta,
                human: self.counts.human,
                assistant: self.counts.assistant,
                novice: self.counts.novice,
                intervention_rate: intervention_rate(&self.counts).ok(),
                claimed: self.owner.is_some(),
            },
        })
    }

    fn pace(&mut self) {
        self.tick += 1;
        if let Some(p) = self.period {
            self.next_tick += p;
            let now = Instant::now();
            if self.next_tick > now {
                std::thread::sleep(self.next_tick - now);
            } else if now - self.next_tick > p {
                self.next_tick = now;
            }
        }
    }
}

fn error(message: &str) -> ServerFrame {
    ServerFrame::Error {
        message: message.into(),
    }
}

impl HumanExpert for UiOperator {
    fn begin_episode(&mut self, env: &Env, state: &EnvState) {
        self.scripted.begin_episode(env, state);
        self.k = 0;
        if self.wait_for_client {
            self.wait_for_client = false;
            while self.clients.is_empty() {
                match self.inbound.recv() {
                    Ok(m) => self.handle(m),
                    Err(_) => break,
                }
            }
        }
        self.pump();
        self.next_tick = Instant::now();
        let f = ServerFrame::event("episode_start", self.tick, Some(self.episode), None);
        self.broadcast(&f);
    }

    fn wants_control(&mut self, env: &Env, state: &EnvState, obs: &Observation, reference: &[Pose2]) -> bool {
        // Keep the scripted human's own state in step with a headless run.
        let scripted = self.scripted.wants_control(env, state, obs, reference);
        loop {
            self.pump();
            self.process_queue();
            if self.owner.is_some() && self.teleop.is_none() {
                let f = self.frame(state, None);
                self.broadcast(&f);
                self.pace();
                continue;
            }
            break;
        }
        if self.clients.is_empty() {
            scripted
        } else {
            self.owner.is_some()
        }
    }

    fn action(&mut self, env: &Env, state: &EnvState, obs: &Observation) -> Action {
        match self.teleop.take() {
            Some(c) => {
                self.ui_steps.push(self.k);
                Action::from_components(c, SourceLabel::Human)
            }
            None => self.scripted.action(env, state, obs),
        }
    }

    fn after_step(&mut self, record: &StepRecord, next: &EnvState) {
        self.k = record.k + 1;
        self.counts.add(record.action.source);
        let f = self.frame(next, Some(record.action.source));
        self.broadcast(&f);
        self.pace();
    }
}

impl Operator for UiOperator {
    fn take_ui_steps(&mut self) -> Vec<u64> {
        std::mem::take(&mut self.ui_steps)
    }

    fn end_episode(&mut self, episode: &Episode) {
        let detail = if episode.success { "success" } else { "failure" };
        let f = ServerFrame::event("episode_end", self.tick, Some(episode.id), Some(detail.into()));
        self.broadcast(&f);
        self.episode = episode.id + 1;
    }
}

fn client_loop(id: u64, mut ws: WebSocket<TcpStream>, inbound: Sender<Inbound>) {
    let (tx, rx) = mpsc::sync_channel::<String>(FRAME_QUEUE);
    if inbound.send(Inbound::Connected(id, tx)).is_err() {
        return;
    }
    'outer: loop {
        match ws.read() {
            Ok(Message::Text(t)) => match ClientMsg::parse(t.as_str()) {
                Ok(m) => {
                    if inbound.send(Inbound::Command(id, m)).is_err() {
                        break;
                    }
                }
                Err(message) => {
                    if ws.send(Message::text(ServerFrame::Error { message }.to_text())).is_err() {
                        break;
                    }
                }
            },
            Ok(Message::Binary(_)) => {
                let e = error("binary frames are not part of the protocol");
                if ws.send(Message::text(e.to_text())).is_err() {
                    break;
                }
            }
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(_) => break,
        }
        loop {
            match rx.try_recv() {
                Ok(text) => {
                    if ws.send(Message::text(text)).is_err() {
                        break 'outer;
                    }
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => {
                    let _ = ws.close(None);
                    // Let the close handshake go out before dropping.
                    let deadline = Instant::now() + Duration::from_millis(200);
                    while Instant::now() < deadline {
                        match ws.read() {
                            Err(tungstenite::Error::Io(e))
                                if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
                            Err(_) => break,
                            Ok(_) => {}
                        }
                    }
                    break 'outer;
                }
            }
        }
    }
    let _ = inbound.send(Inbound::Disconnected(id));
}

fn acceptor(listener: TcpListener, inbound: Sender<Inbound>, stop: Arc<AtomicBool>) {
    let _ = listener.set_nonblocking(true);
    let mut next_id = 0;
    let mut clients: Vec<JoinHandle<()>> = Vec::new();
    while !stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, _)) => {
                let _ = stream.set_nonblocking(false);
                let _ = stream.set_nodelay(true);
                let Ok(ws) = tungstenite::accept(stream) else { continue };
                let _ = ws.get_ref().set_read_timeout(Some(POLL));
                let tx = inbound.clone();
                let id = next_id;
                next_id += 1;
                clients.push(std::thread::spawn(move || client_loop(id, ws, tx)));
            }
            Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => std::thread::sleep(POLL),
            Err(_) => std::thread::sleep(POLL),
        }
    }
    drop(inbound);
    for c in clients {
        let _ = c.join();
    }
}

/// Run a collection session on `listener`, returning the episodes and the
/// log sink once every episode is done and clients have been closed.
pub fn serve_session<W: Write>(
    cfg: &ExperimentConfig,
    seed: u64,
    spec: &CollectSpec,
    inputs: CollectInputs,
    listener: TcpListener,
    opts: SessionOptions,
    out: W,
) -> Result<(Vec<Episode>, W)> {
    let (tx, rx) = mpsc::channel();
    let stop = Arc::new(AtomicBool::new(false));
    let accept = {
        let stop = stop.clone();
        std::thread::spawn(move || acceptor(listener, tx, stop))
    };
    let mut op = UiOperator {
        scripted: ScriptedHuman::new(cfg.human_hysteresis),
        env: Env::new(cfg.env.clone()),
        inbound: rx,
        clients: BTreeMap::new(),
        owner: None,
        queue: VecDeque::new(),
        teleop: None,
        ui_steps: Vec::new(),
        k: 0,
        tick: 0,
        episode: spec.first_id,
        round: spec.round,
        beta: (spec.round > 0).then(|| beta_schedule(cfg.beta, spec.round)),
        counts: SourceCounts::default(),
        period: (opts.tick_hz > 0.0).then(|| Duration::from_secs_f64(1.0 / opts.tick_hz)),
        next_tick: Instant::now(),
        wait_for_client: opts.wait_for_client,
    };
    let result = run_collect(cfg, seed, spec, inputs, &mut op, out);
    let f = ServerFrame::event("session_end", op.tick, None, None);
    op.pump();
    op.broadcast(&f);
    // Dropping the frame senders lets each client thread close its socket.
    op.clients.clear();
    stop.store(true, Ordering::Relaxed);
    drop(op);
    let _ = accept.join();
    result
}
