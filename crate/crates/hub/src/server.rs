//! The session hub: one actor task owns the session (engine and log) and every
//! connection talks to it through queues.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter};
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use emocmd_core::engine::{EngineSettings, SessionEngine};
use emocmd_core::protocol::{self, kinds, Envelope, Event, Role, Welcome, WorldGeometry, PROTO_VERSION};
use emocmd_core::session::{Clock, Session};
use emocmd_core::{ConfigError, HubConfig};
use futures_util::{SinkExt, StreamExt};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot};
use tokio::task::JoinHandle;
use tokio::time::{interval, Interval, MissedTickBehavior};
use tokio_tungstenite::tungstenite::Message;
use tokio_util::sync::CancellationToken;
use uuid::Uuid;

/// Longest accepted inbound line. Ten seconds of audio is about 430 kB of base64.
pub const MAX_LINE_BYTES: usize = 8 << 20;

/// How the hub advances simulated time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TickMode {
    /// Ticks follow the wall clock at 1/dt Hz.
    Wall,
    /// Ticks happen only when a [`TickDriver`] asks; log timestamps are simulated ms.
    Manual,
}

#[derive(Debug, Error)]
pub enum HubError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: io::Error,
    },
    #[error("session log {}: {source}", path.display())]
    Log {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("hub has stopped")]
    Stopped,
}

impl HubError {
    pub fn code(&self) -> &'static str {
        match self {
            HubError::Config(e) => e.code(),
            HubError::Bind { .. } => "bind_failed",
            HubError::Log { .. } => "log_io",
            HubError::Stopped => "hub_stopped",
        }
    }
}

enum Inbound {
    Open { id: u64, tx: mpsc::UnboundedSender<String> },
    Line { id: u64, bytes: Vec<u8> },
    Closed { id: u64 },
}

enum Control {
    AdvanceTo { tick: u64, reply: oneshot::Sender<u64> },
    Status { reply: oneshot::Sender<(u64, u64)> },
    WaitUtterances { count: u64, reply: oneshot::Sender<()> },
    WaitRecognizer { reply: oneshot::Sender<()> },
    Shutdown { reply: oneshot::Sender<io::Result<()>> },
}

/// Test and fast-mode hook that moves a [`TickMode::Manual`] hub forward.
#[derive(Clone)]
pub struct TickDriver {
    control: mpsc::UnboundedSender<Control>,
    dt: f64,
}

impl TickDriver {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    async fn ask<T>(&self, make: impl FnOnce(oneshot::Sender<T>) -> Control) -> Result<T, HubError> {
        let (reply, rx) = oneshot::channel();
        self.control.send(make(reply)).map_err(|_| HubError::Stopped)?;
        rx.await.map_err(|_| HubError::Stopped)
    }

    /// Runs tick boundaries until the world has taken `tick` ticks. Returns the tick count.
    pub async fn advance_to(&self, tick: u64) -> Result<u64, HubError> {
        self.ask(|reply| Control::AdvanceTo { tick, reply }).await
    }

    pub async fn advance(&self, ticks: u64) -> Result<u64, HubError> {
        let now = self.tick().await?;
        self.advance_to(now + ticks).await
    }

    pub async fn tick(&self) -> Result<u64, HubError> {
        Ok(self.ask(|reply| Control::Status { reply }).await?.0)
    }

    /// Utterances the hub has accepted from recognizers so far.
    pub async fn utterances_received(&self) -> Result<u64, HubError> {
        Ok(self.ask(|reply| Control::Status { reply }).await?.1)
    }

    /// Resolves once at least `count` utterances have been received.
    pub async fn wait_for_utterances(&self, count: u64) -> Result<(), HubError> {
        self.ask(|reply| Control::WaitUtterances { count, reply }).await
    }

    /// Resolves once a recognizer has completed its hello.
    pub async fn wait_for_recognizer(&self) -> Result<(), HubError> {
        self.ask(|reply| Control::WaitRecognizer { reply }).await
    }
}

pub struct Hub {
    tcp_addr: SocketAddr,
    ws_addr: SocketAddr,
    session_id: String,
    mode: TickMode,
    dt: f64,
    control: mpsc::UnboundedSender<Control>,
    cancel: CancellationToken,
    actor: JoinHandle<()>,
}

impl Hub {
    /// Validates the config, binds both ports on `host` and starts the tick loop.
    /// Port 0 picks a free port; see [`Hub::tcp_addr`] and [`Hub::ws_addr`].
    pub async fn start(config: &HubConfig, host: IpAddr, mode: TickMode) -> Result<Hub, HubError> {
        config.validate()?;
        let table = config.load_emoji_table()?;
        let settings = EngineSettings::from_config(config, table);

        let tcp = bind(SocketAddr::new(host, config.tcp_port)).await?;
        let ws = bind(SocketAddr::new(host, config.ws_port)).await?;
        let tcp_addr = tcp.local_addr().map_err(|source| HubError::Bind {
            addr: SocketAddr::new(host, config.tcp_port),
            source,
        })?;
        let ws_addr = ws.local_addr().map_err(|source| HubError::Bind {
            addr: SocketAddr::new(host, config.ws_port),
            source,
        })?;

        let log = match &config.log_path {
            Some(path) => Some(BufWriter::new(File::create(path).map_err(|source| HubError::Log {
                path: path.clone(),
                source,
            })?)),
            None => None,
        };
        let session_id = session_id(config.session_seed);
        let clock = match mode {
            TickMode::Wall => Clock::Wall(Instant::now()),
            TickMode::Manual => Clock::Simulated,
        };
        let dt = settings.world.dt;
        let welcome = Envelope::Welcome(Welcome {
            session: session_id.clone(),
            world: WorldGeometry::from(&settings.world),
        });
        let session = Session::new(SessionEngine::new(settings), session_id.clone(), clock, log).map_err(|source| {
            HubError::Log {
                path: config.log_path.clone().unwrap_or_default(),
                source,
            }
        })?;

        let (in_tx, in_rx) = mpsc::unbounded_channel();
        let (control, control_rx) = mpsc::unbounded_channel();
        let cancel = CancellationToken::new();
        let next_id = Arc::new(AtomicU64::new(1));
        tokio::spawn(accept_loop(
            tcp,
            Transport::Tcp,
            in_tx.clone(),
            next_id.clone(),
            cancel.clone(),
        ));
        tokio::spawn(accept_loop(ws, Transport::WebSocket, in_tx, next_id, cancel.clone()));

        let actor = Actor {
            session,
            conns: BTreeMap::new(),
            recognizer: None,
            received: 0,
            waiters: Vec::new(),
            recognizer_waiters: Vec::new(),
            welcome,
            log_failed: false,
        };
        let actor = tokio::spawn(actor.run(in_rx, control_rx, mode, dt));
        log::info!("hub session {session_id}: tcp {tcp_addr}, websocket {ws_addr}");
        Ok(Hub {
            tcp_addr,
            ws_addr,
            session_id,
            mode,
            dt,
            control,
            cancel,
            actor,
        })
    }

    pub fn tcp_addr(&self) -> SocketAddr {
        self.tcp_addr
    }

    pub fn ws_addr(&self) -> SocketAddr {
        self.ws_addr
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    /// The tick hook; `None` unless the hub runs in [`TickMode::Manual`].
    pub fn driver(&self) -> Option<TickDriver> {
        (self.mode == TickMode::Manual).then(|| TickDriver {
            control: self.control.clone(),
            dt: self.dt,
        })
    }

    /// Stops accepting, closes every connection and flushes the session log.
    pub async fn shutdown(self) -> Result<(), HubError> {
        self.cancel.cancel();
        let (reply, rx) = oneshot::channel();
        self.control
            .send(Control::Shutdown { reply })
            .map_err(|_| HubError::Stopped)?;
        let flushed = rx.await.map_err(|_| HubError::Stopped)?;
        let _ = self.actor.await;
        flushed.map_err(|source| HubError::Log {
            path: PathBuf::new(),
            source,
        })
    }
}

async fn bind(addr: SocketAddr) -> Result<TcpListener, HubError> {
    TcpListener::bind(addr)
        .await
        .map_err(|source| HubError::Bind { addr, source })
}

fn session_id(seed: Option<u64>) -> String {
    let id = match seed {
        Some(seed) => {
            let mut bytes = [0u8; 16];
            ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut bytes);
            uuid::Builder::from_random_bytes(bytes).into_uuid()
        }
        None => Uuid::new_v4(),
    };
    id.to_string()
}

#[derive(Debug, Clone, Copy)]
enum Transport {
    Tcp,
    WebSocket,
}

async fn accept_loop(
    listener: TcpListener,
    transport: Transport,
    inbound: mpsc::UnboundedSender<Inbound>,
    next_id: Arc<AtomicU64>,
    cancel: CancellationToken,
) {
    loop {
        let accepted = tokio::select! {
            _ = cancel.cancelled() => return,
            a = listener.accept() => a,
        };
        match accepted {
            Ok((stream, peer)) => {
                let id = next_id.fetch_add(1, Ordering::Relaxed);
                log::debug!("connection {id} from {peer} ({transport:?})");
                let inbound = inbound.clone();
                let cancel = cancel.clone();
                tokio::spawn(async move {
                    let result = match transport {
                        Transport::Tcp => serve_tcp(id, stream, &inbound, cancel).await,
                        Transport::WebSocket => serve_ws(id, stream, &inbound, cancel).await,
                    };
                    if let Err(e) = result {
                        log::warn!("connection {id}: {e}");
                    }
                });
            }
            Err(e) => log::warn!("accept failed: {e}"),
        }
    }
}

async fn serve_tcp(
    id: u64,
    stream: TcpStream,
    inbound: &mpsc::UnboundedSender<Inbound>,
    cancel: CancellationToken,
) -> io::Result<()> {
    let (read, mut write) = stream.into_split();
    let (tx, mut rx) = mpsc::unbounded_channel::<String>();
    if inbound.send(Inbound::Open { id, tx }).is_err() {
        return Ok(());
    }
    let writer = tokio::spawn(async move {
        while let Some(line) = rx.recv().await {
            if write.write_all(line.as_bytes()).await.is_err() {
                break;
            }
        }
        let _ = write.shutdown().await;
    });

    let mut reader = BufReader::new(read);
    let mut buf = Vec::new();
    let result = loop {
        buf.clear();
        let mut limited = (&mut reader).take(MAX_LINE_BYTES as u64 + 1);
        let read = tokio::select! {
            _ = cancel.cancelled() => break Ok(()),
            r = limited.read_until(b'\n', &mut buf) => r,
        };
        match read {
            Ok(0) => break Ok(()),
            Ok(_) if buf.last() != Some(&b'\n') => {
                if buf.len() > MAX_LINE_BYTES {
                    break Err(io::Error::new(io::ErrorKind::InvalidData, "line too long"));
                }
                // final line without a terminator is incomplete
                break Ok(());
            }
            Ok(_) => {
                buf.pop();
                if buf.last() == Some(&b'\r') {
                    buf.pop();
                }
                if inbound.send(Inbound::Line { id, bytes: buf.clone() }).is_err() {
                    break Ok(());
                }
            }
            Err(e) => break Err(e),
        }
    };
    // the actor drops its sender on Closed, which ends the writer
    let _ = inbound.send(Inbound::Closed { id });
    let _ = writer.await;
    result
}

async fn serve_ws(
    id: u64,
    stream: TcpStream,
    inbound: &mpsc::UnboundedSender<Inbound>,
    cancel: CancellationToken,
) -> io::Result<()> {
    let ws = tokio_tungstenite::accept_async(stream)
        .await
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    let (mut sink, mut frames) = ws.split();
    let (tx, mut rx) = mpsc::unbounded_channel::<String>();
    if inbound.send(Inbound::Open { id, tx }).is_err() {
        return Ok(());
    }
    let writer = tokio::spawn(async move {
        while let Some(line) = rx.recv().await {
            let text = line.strip_suffix('\n').unwrap_or(&line).to_owned();
            if sink.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });

    let result = loop {
        let frame = tokio::select! {
            _ = cancel.cancelled() => break Ok(()),
            f = frames.next() => f,
        };
        let bytes = match frame {
            None | Some(Ok(Message::Close(_))) => break Ok(()),
            Some(Ok(Message::Text(text))) => text.as_bytes().to_vec(),
            Some(Ok(Message::Binary(data))) => data.to_vec(),
            Some(Ok(_)) => continue,
            Some(Err(e)) => break Err(io::Error::new(io::ErrorKind::InvalidData, e)),
        };
        if inbound.send(Inbound::Line { id, bytes }).is_err() {
            break Ok(());
        }
    };
    let _ = inbound.send(Inbound::Closed { id });
    let _ = writer.await;
    result
}

struct Conn {
    role: Option<Role>,
    tx: mpsc::UnboundedSender<String>,
}

struct Actor {
    session: Session<BufWriter<File>>,
    conns: BTreeMap<u64, Conn>,
    recognizer: Option<u64>,
    received: u64,
    waiters: Vec<(u64, oneshot::Sender<()>)>,
    recognizer_waiters: Vec<oneshot::Sender<()>>,
    welcome: Envelope,
    log_failed: bool,
}

async fn next_tick(ticker: &mut Option<Interval>) {
    match ticker {
        Some(t) => {
            t.tick().await;
        }
        None => std::future::pending().await,
    }
}

impl Actor {
    async fn run(
        mut self,
        mut inbound: mpsc::UnboundedReceiver<Inbound>,
        mut control: mpsc::UnboundedReceiver<Control>,
        mode: TickMode,
        dt: f64,
    ) {
        let mut ticker = (mode == TickMode::Wall).then(|| {
            let mut t = interval(Duration::from_secs_f64(dt));
            t.set_missed_tick_behavior(MissedTickBehavior::Burst);
            t
        });
        loop {
            tokio::select! {
                biased;
                Some(c) = control.recv() => {
                    if let Control::Shutdown { reply } = c {
                        self.conns.clear();
                        let _ = reply.send(self.session.flush());
                        return;
                    }
                    self.control(c);
                }
                Some(msg) = inbound.recv() => self.inbound(msg),
                _ = next_tick(&mut ticker) => self.step(),
                else => return,
            }
            let res = self.session.flush();
            self.check_log(res);
        }
    }

    fn check_log(&mut self, res: io::Result<()>) {
        if let Err(e) = res {
            if !self.log_failed {
                log::error!("session log write failed: {e}");
                self.log_failed = true;
            }
        }
    }

    fn control(&mut self, c: Control) {
        match c {
            Control::AdvanceTo { tick, reply } => {
                while self.session.engine().tick_count() < tick {
                    self.step();
                }
                let _ = reply.send(self.session.engine().tick_count());
            }
            Control::Status { reply } => {
                let _ = reply.send((self.session.engine().tick_count(), self.received));
            }
            Control::WaitUtterances { count, reply } => {
                if self.received >= count {
                    let _ = reply.send(());
                } else {
                    self.waiters.push((count, reply));
                }
            }
            Control::WaitRecognizer { reply } => {
                if self.recognizer.is_some() {
                    let _ = reply.send(());
                } else {
                    self.recognizer_waiters.push(reply);
                }
            }
            Control::Shutdown { .. } => unreachable!("handled by run"),
        }
    }

    fn step(&mut self) {
        let (out, res) = self.session.step();
        self.check_log(res);
        for env in &out {
            self.broadcast_unlogged(env);
        }
    }

    /// Sends to every ui and observer connection; the caller has logged it.
    fn broadcast_unlogged(&self, env: &Envelope) {
        let line = env.encode();
        for conn in self.conns.values() {
            if matches!(conn.role, Some(Role::Ui | Role::Observer)) {
                let _ = conn.tx.send(line.clone());
            }
        }
    }

    fn broadcast(&mut self, env: &Envelope) {
        let res = self.session.log_out(env);
        self.check_log(res);
        self.broadcast_unlogged(env);
    }

    fn send_to(&mut self, id: u64, env: &Envelope) {
        let res = self.session.log_out(env);
        self.check_log(res);
        if let Some(conn) = self.conns.get(&id) {
            let _ = conn.tx.send(env.encode());
        }
    }

    fn inbound(&mut self, msg: Inbound) {
        match msg {
            Inbound::Open { id, tx } => {
                self.conns.insert(id, Conn { role: None, tx });
            }
            Inbound::Closed { id } => {
                if self.conns.remove(&id).is_some() {
                    log::debug!("connection {id} closed");
                }
                if self.recognizer == Some(id) {
                    self.recognizer = self
                        .conns
                        .iter()
                        .find(|(_, c)| c.role == Some(Role::Recognizer))
                        .map(|(id, _)| *id);
                    log::info!("recognizer {id} left");
                }
            }
            Inbound::Line { id, bytes } => self.line(id, bytes),
        }
    }

    fn line(&mut self, id: u64, bytes: Vec<u8>) {
        let Some(role) = self.conns.get(&id).map(|c| c.role) else {
            return;
        };
        let env = match protocol::decode(&bytes) {
            Ok(env) => env,
            Err(e) => {
                log::debug!("connection {id}: {e}");
                self.send_to(id, &e.to_envelope());
                return;
            }
        };
        if !matches!(env, Envelope::Utterance(_)) {
            let res = self.session.log_in(&env);
            self.check_log(res);
        }
        match (role, env) {
            (None, Envelope::Hello(hello)) => {
                if hello.proto != PROTO_VERSION {
                    let msg = format!("proto {} not supported, expected {PROTO_VERSION}", hello.proto);
                    self.send_to(id, &Envelope::error("unsupported_proto", msg));
                    return;
                }
                if let Some(conn) = self.conns.get_mut(&id) {
                    conn.role = Some(hello.role);
                }
                if hello.role == Role::Recognizer {
                    self.recognizer = Some(id);
                    log::info!("recognizer {id} attached");
                }
                let welcome = self.welcome.clone();
                self.send_to(id, &welcome);
                if hello.role == Role::Recognizer {
                    for reply in self.recognizer_waiters.drain(..) {
                        let _ = reply.send(());
                    }
                }
            }
            (None, other) => {
                let msg = format!("send hello before {}", other.type_name());
                self.send_to(id, &Envelope::error("hello_required", msg));
            }
            (Some(_), Envelope::Hello(_)) => {
                self.send_to(id, &Envelope::error("duplicate_hello", "hello already received"));
            }
            (Some(Role::Recognizer), Envelope::Utterance(utterance)) => {
                let res = self.session.receive_utterance(utterance);
                self.check_log(res);
                self.received += 1;
                let received = self.received;
                let (ready, waiting) = std::mem::take(&mut self.waiters)
                    .into_iter()
                    .partition::<Vec<_>, _>(|(count, _)| *count <= received);
                self.waiters = waiting;
                for (_, reply) in ready {
                    let _ = reply.send(());
                }
            }
            (Some(Role::Recognizer), Envelope::Error(err)) => {
                let event = Event::new(kinds::RECOGNIZER_ERROR, None)
                    .with("code", &err.code)
                    .with("message", &err.message);
                self.broadcast(&Envelope::Event(event));
            }
            (Some(Role::Ui | Role::Observer), Envelope::Audio(audio)) => {
                self.route_audio(id, &bytes, &audio.utterance_id)
            }
            (Some(role), other) => {
                let msg = format!("{role:?} connections may not send {}", other.type_name()).to_lowercase();
                self.send_to(id, &Envelope::error("unexpected_type", msg));
            }
        }
    }

    /// Passes the original bytes through untouched; audio is never decoded here.
    fn route_audio(&mut self, from: u64, bytes: &[u8], utterance_id: &str) {
        let target = self.recognizer.and_then(|r| self.conns.get(&r));
        match target {
            Some(conn) => {
                let mut line = String::from_utf8_lossy(bytes).into_owned();
                line.push('\n');
                let _ = conn.tx.send(line);
            }
            None => {
                let event = Event::new(kinds::RECOGNIZER_UNAVAILABLE, Some(utterance_id.to_owned()));
                self.send_to(from, &Envelope::Event(event));
            }
        }
    }
}
