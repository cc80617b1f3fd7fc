//! Runs one server or the auditor: a TLS listener feeding frames into a
//! single node task, plus one outbound link per peer.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use anyhow::Context as _;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use riposte_client::config::{server_name, AUDITOR_NAME};
use riposte_client::transport::{self, ClientStream};
use riposte_core::client::make_cover_request;
use riposte_core::server::node::{Auditor, Effect, NodeId, ServerNode};
use riposte_core::server::{Context, EpochReport, Snapshot};
use riposte_core::wire::{Message, HEADER_LEN};
use rustls_pki_types::CertificateDer;
use serde::Serialize;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, watch};
use tokio::task::JoinSet;
use tracing::{debug, error, info, warn};

use crate::config::{NodeConfig, Role};

const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(10);
const DIAL_ATTEMPTS: u32 = 8;
const DIAL_BACKOFF: Duration = Duration::from_millis(100);

/// What `/status` reports.
#[derive(Debug, Clone, Default, Serialize)]
pub struct NodeStatus {
    pub role: String,
    pub index: Option<usize>,
    pub epoch: u64,
    pub state: String,
    pub accepted: u64,
    pub pending: usize,
    pub rejected: BTreeMap<String, u64>,
    /// Auditor only: decisions and rejections so far.
    pub audits: Option<(u64, u64)>,
    pub revealed_epochs: Vec<u64>,
    pub halted: Vec<String>,
}

#[derive(Default)]
pub struct Shared {
    pub status: Mutex<NodeStatus>,
    pub boards: Mutex<BTreeMap<u64, EpochReport>>,
}

enum Engine {
    Server(Box<ServerNode>),
    Auditor(Auditor),
}

impl Engine {
    fn handle(&mut self, now: u64, from: NodeId, msg: Message) -> Vec<Effect> {
        match self {
            Engine::Server(s) => s.handle(now, from, msg),
            Engine::Auditor(a) => a.handle(now, from, msg),
        }
    }

    fn tick(&mut self, now: u64) -> Vec<Effect> {
        match self {
            Engine::Server(s) => s.tick(now),
            Engine::Auditor(a) => a.tick(now),
        }
    }

    fn next_deadline(&self) -> Option<u64> {
        match self {
            Engine::Server(s) => s.next_deadline(),
            Engine::Auditor(a) => a.next_deadline(),
        }
    }

    fn fill(&self, st: &mut NodeStatus) {
        match self {
            Engine::Server(s) => {
                st.epoch = s.epoch();
                st.state = serde_json::to_value(s.state()).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
                st.accepted = s.accepted_count();
                st.pending = s.pending_count();
                st.rejected = s.rejected().iter().map(|(k, v)| (format!("{k:?}"), *v)).collect();
            }
            Engine::Auditor(a) => {
                st.state = "auditing".into();
                st.audits = Some(a.stats());
            }
        }
    }
}

type ClientMap = Arc<Mutex<HashMap<u64, mpsc::Sender<Message>>>>;

/// A started node. Dropping it stops every task.
pub struct Running {
    pub addr: SocketAddr,
    pub http: Option<SocketAddr>,
    pub shared: Arc<Shared>,
    shutdown: watch::Sender<bool>,
    tasks: JoinSet<()>,
}

impl Running {
    pub async fn shutdown(mut self) {
        let _ = self.shutdown.send(true);
        self.tasks.abort_all();
        while self.tasks.join_next().await.is_some() {}
    }

    /// Waits until any task ends, which only happens on failure.
    pub async fn wait(&mut self) -> anyhow::Result<()> {
        match self.tasks.join_next().await {
            Some(Ok(())) | None => Ok(()),
            Some(Err(e)) => Err(e.into()),
        }
    }
}

impl Drop for Running {
    fn drop(&mut self) {
        let _ = self.shutdown.send(true);
        self.tasks.abort_all();
    }
}

/// Binds the configured addresses and starts the node.
pub async fn start(cfg: NodeConfig) -> anyhow::Result<Running> {
    let ep = cfg.endpoint().clone();
    let listener = TcpListener::bind(ep.addr).await.with_context(|| format!("binding {}", ep.addr))?;
    let http = match ep.http {
        Some(a) => Some(TcpListener::bind(a).await.with_context(|| format!("binding {a}"))?),
        None => None,
    };
    start_with(cfg, listener, http).await
}

/// Starts the node on already bound listeners.
pub async fn start_with(cfg: NodeConfig, listener: TcpListener, http: Option<TcpListener>) -> anyhow::Result<Running> {
    let ctx = Arc::new(Context::new(cfg.deployment.epoch.clone())?);
    let server_tls = transport::server_config(&cfg.deployment.tls)?;
    let client_tls = transport::client_config(&cfg.deployment.tls)?;
    std::fs::create_dir_all(&cfg.node.data_dir)
        .with_context(|| format!("creating {}", cfg.node.data_dir.display()))?;

    let shared = Arc::new(Shared::default());
    let first_epoch = load_boards(&cfg.node.data_dir, &shared)?;
    let engine = match cfg.node.role {
        Role::Server => {
            let rng = ChaCha20Rng::from_entropy();
            Engine::Server(Box::new(ServerNode::new(ctx.clone(), cfg.node.index as u8, rng, first_epoch, 0)?))
        }
        Role::Auditor => Engine::Auditor(Auditor::new(ctx.config.audit_deadline_ms)),
    };
    {
        let mut st = shared.status.lock().unwrap();
        st.role = format!("{:?}", cfg.node.role).to_lowercase();
        st.index = (cfg.node.role == Role::Server).then_some(cfg.node.index);
        engine.fill(&mut st);
    }

    let (shutdown, _) = watch::channel(false);
    let mut tasks = JoinSet::new();
    let (inbox_tx, inbox_rx) = mpsc::channel::<(NodeId, Message)>(1024);
    let clients: ClientMap = Arc::default();

    // Outbound links.
    let mut links = HashMap::new();
    let mut add_link = |id: NodeId, addr: SocketAddr, name: String| {
        let (tx, rx) = mpsc::unbounded_channel();
        links.insert(id, tx);
        tasks.spawn(dialer(client_tls.clone(), addr, name, rx));
    };
    match cfg.node.role {
        Role::Server => {
            for (j, s) in cfg.deployment.servers.iter().enumerate() {
                if j != cfg.node.index {
                    add_link(NodeId::Server(j as u8), s.addr, server_name(j));
                }
            }
            if let Some(a) = &cfg.deployment.auditor {
                add_link(NodeId::Auditor, a.addr, AUDITOR_NAME.to_string());
            }
        }
        Role::Auditor => {
            for (j, s) in cfg.deployment.servers.iter().enumerate() {
                add_link(NodeId::Server(j as u8), s.addr, server_name(j));
            }
        }
    }

    // Inbound peers are recognised by their exact certificate.
    let mut pinned = Vec::new();
    for (j, s) in cfg.deployment.servers.iter().enumerate() {
        pinned.push((transport::load_certs(&s.cert)?.remove(0), NodeId::Server(j as u8)));
    }
    if let Some(a) = &cfg.deployment.auditor {
        pinned.push((transport::load_certs(&a.cert)?.remove(0), NodeId::Auditor));
    }
    let accept = AcceptCtx {
        tls: server_tls,
        pinned,
        accept_clients: cfg.node.role == Role::Server,
        client_limit: client_frame_limit(&ctx)?,
        inbox: inbox_tx,
        clients: clients.clone(),
        next_client: AtomicU64::new(0),
        shutdown: shutdown.subscribe(),
    };
    let addr = listener.local_addr()?;
    tasks.spawn(accept_loop(listener, Arc::new(accept)));

    let node = NodeLoop {
        engine,
        start: Instant::now(),
        links,
        clients,
        data_dir: cfg.node.data_dir.clone(),
        shared: shared.clone(),
    };
    tasks.spawn(node.run(inbox_rx, shutdown.subscribe()));

    let http_addr = match http {
        Some(l) => {
            let a = l.local_addr()?;
            let app = crate::http::router(shared.clone());
            let mut stop = shutdown.subscribe();
            tasks.spawn(async move {
                let serve = axum::serve(l, app).with_graceful_shutdown(async move {
                    let _ = stop.changed().await;
                });
                if let Err(e) = serve.await {
                    error!("http server failed: {e}");
                }
            });
            Some(a)
        }
        None => None,
    };
    info!(%addr, http = ?http_addr, role = ?cfg.node.role, epoch = first_epoch, "node started");
    Ok(Running { addr, http: http_addr, shared, shutdown, tasks })
}

/// Largest frame payload an honest client can send: any request has the
/// size of a cover request.
fn client_frame_limit(ctx: &Context) -> anyhow::Result<usize> {
    let bundle = make_cover_request(&mut ChaCha20Rng::seed_from_u64(0), ctx, 0)?;
    Ok(bundle.messages.iter().map(|m| m.to_frame().len() - HEADER_LEN).max().unwrap_or(0))
}

/// Reloads revealed boards; returns the epoch to start at.
fn load_boards(dir: &Path, shared: &Shared) -> anyhow::Result<u64> {
    let mut next = 0;
    let mut boards = shared.boards.lock().unwrap();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some(e) = name.strip_prefix("report-").and_then(|n| n.strip_suffix(".json")) else { continue };
        let Ok(e) = e.parse::<u64>() else { continue };
        let report: EpochReport = serde_json::from_slice(&std::fs::read(&path)?)
            .with_context(|| format!("reading {}", path.display()))?;
        boards.insert(e, report);
        next = next.max(e + 1);
    }
    shared.status.lock().unwrap().revealed_epochs = boards.keys().copied().collect();
    Ok(next)
}

struct AcceptCtx {
    tls: Arc<rustls::ServerConfig>,
    pinned: Vec<(CertificateDer<'static>, NodeId)>,
    accept_clients: bool,
    client_limit: usize,
    inbox: mpsc::Sender<(NodeId, Message)>,
    clients: ClientMap,
    next_client: AtomicU64,
    shutdown: watch::Receiver<bool>,
}

async fn accept_loop(listener: TcpListener, ctx: Arc<AcceptCtx>) {
    loop {
        match listener.accept().await {
            Ok((tcp, peer)) => {
                let ctx = ctx.clone();
                tokio::spawn(async move {
                    let mut stop = ctx.shutdown.clone();
                    tokio::select! {
                        _ = serve_conn(tcp, peer, &ctx) => {}
                        _ = stop.changed() => {}
                    }
                });
            }
            Err(e) => {
                warn!("accept failed: {e}");
                tokio::time::sleep(Duration::from_millis(50)).await;
            }
        }
    }
}

async fn serve_conn(tcp: TcpStream, peer: SocketAddr, ctx: &AcceptCtx) {
    let stream = match tokio::time::timeout(HANDSHAKE_TIMEOUT, transport::accept(ctx.tls.clone(), tcp)).await {
        Ok(Ok(s)) => s,
        Ok(Err(e)) => return debug!(%peer, "handshake failed: {e}"),
        Err(_) => return debug!(%peer, "handshake timed out"),
    };
    let Some(leaf) = transport::peer_leaf(&stream) else { return };
    let who = match ctx.pinned.iter().find(|(c, _)| *c == leaf) {
        Some((_, id)) => *id,
        None if ctx.accept_clients => NodeId::Client(ctx.next_client.fetch_add(1, Ordering::Relaxed)),
        None => return debug!(%peer, "refusing a client connection"),
    };
    let limit = match who {
        NodeId::Client(_) => ctx.client_limit,
        _ => riposte_core::wire::MAX_PAYLOAD,
    };
    let (mut rd, mut wr) = tokio::io::split(stream);
    let mut writer = None;
    if let NodeId::Client(c) = who {
        let (tx, mut rx) = mpsc::channel::<Message>(4);
        ctx.clients.lock().unwrap().insert(c, tx);
        writer = Some(tokio::spawn(async move {
            while let Some(m) = rx.recv().await {
                if transport::write_frame(&mut wr, &m).await.is_err() {
                    break;
                }
            }
        }));
    }
    loop {
        match transport::read_frame_limited(&mut rd, limit).await {
            Ok(Some(m)) => {
                if ctx.inbox.send((who, m)).await.is_err() {
                    break;
                }
            }
            Ok(None) => break,
            Err(e) => {
                warn!(%peer, ?who, "closing connection: {e}");
                break;
            }
        }
    }
    if let NodeId::Client(c) = who {
        // Dropping the sender lets the writer flush any pending ack and exit.
        ctx.clients.lock().unwrap().remove(&c);
        if let Some(w) = writer {
            let _ = w.await;
        }
    }
}

/// Delivers frames to one peer in order over a single connection,
/// reconnecting as needed.
async fn dialer(
    cfg: Arc<rustls::ClientConfig>,
    addr: SocketAddr,
    name: String,
    mut rx: mpsc::UnboundedReceiver<Message>,
) {
    let mut conn: Option<ClientStream> = None;
    while let Some(msg) = rx.recv().await {
        let mut attempt = 0;
        loop {
            if conn.is_none() {
                match transport::connect(cfg.clone(), addr, &name).await {
                    Ok(s) => conn = Some(s),
                    Err(e) => {
                        attempt += 1;
                        if attempt >= DIAL_ATTEMPTS {
                            warn!(peer = %name, "dropping frame after {attempt} attempts: {e}");
                            break;
                        }
                        tokio::time::sleep(DIAL_BACKOFF * (1 << attempt.min(5))).await;
                        continue;
                    }
                }
            }
            match transport::write_frame(conn.as_mut().expect("connected above"), &msg).await {
                Ok(()) => break,
                Err(e) => {
                    conn = None;
                    attempt += 1;
                    if attempt >= DIAL_ATTEMPTS {
                        warn!(peer = %name, "dropping frame: {e}");
                        break;
                    }
                }
            }
        }
    }
}

struct NodeLoop {
    engine: Engine,
    start: Instant,
    links: HashMap<NodeId, mpsc::UnboundedSender<Message>>,
    clients: ClientMap,
    data_dir: std::path::PathBuf,
    shared: Arc<Shared>,
}

impl NodeLoop {
    fn now(&self) -> u64 {
        self.start.elapsed().as_millis() as u64
    }

    async fn run(mut self, mut inbox: mpsc::Receiver<(NodeId, Message)>, mut stop: watch::Receiver<bool>) {
        loop {
            let wake = self.engine.next_deadline().map(|d| self.start + Duration::from_millis(d));
            let sleep = async {
                match wake {
                    Some(t) => tokio::time::sleep_until(t.into()).await,
                    None => std::future::pending().await,
                }
            };
            let effects = tokio::select! {
                m = inbox.recv() => match m {
                    Some((from, msg)) => self.engine.handle(self.now(), from, msg),
                    None => break,
                },
                _ = sleep => self.engine.tick(self.now()),
                _ = stop.changed() => break,
            };
            self.apply(effects);
            self.engine.fill(&mut self.shared.status.lock().unwrap());
        }
    }

    fn apply(&mut self, effects: Vec<Effect>) {
        for e in effects {
            match e {
                Effect::Send { to: NodeId::Client(c), msg } => {
                    if let Some(tx) = self.clients.lock().unwrap().get(&c) {
                        let _ = tx.try_send(msg);
                    }
                }
                Effect::Send { to, msg } => match self.links.get(&to) {
                    Some(tx) => {
                        let _ = tx.send(msg);
                    }
                    None => warn!(?to, "no link to peer"),
                },
                Effect::Closed(snap) => self.persist_snapshot(&snap),
                Effect::Revealed(r) => self.publish(r.report),
                Effect::Halted(why) => {
                    error!("epoch halted: {why}");
                    self.shared.status.lock().unwrap().halted.push(why);
                }
            }
        }
    }

    fn persist_snapshot(&self, snap: &Snapshot) {
        let path = self.data_dir.join(format!("epoch-{}.snap", snap.share.epoch));
        match std::fs::write(&path, snap.to_bytes()) {
            Ok(()) => info!(epoch = snap.share.epoch, requests = snap.nonces.len(), "epoch closed"),
            Err(e) => error!("writing {}: {e}", path.display()),
        }
    }

    fn publish(&self, report: EpochReport) {
        let e = report.epoch;
        let board = self.data_dir.join(format!("board-{e}.ndjson"));
        let json = self.data_dir.join(format!("report-{e}.json"));
        let res = std::fs::write(&board, report.board_ndjson())
            .and_then(|_| std::fs::write(&json, serde_json::to_vec_pretty(&report).expect("report serializes")));
        if let Err(err) = res {
            error!("writing epoch {e} board: {err}");
        }
        info!(epoch = e, accepted = report.accepted, messages = report.board.len(), "board revealed");
        let mut boards = self.shared.boards.lock().unwrap();
        boards.insert(e, report);
        self.shared.status.lock().unwrap().revealed_epochs = boards.keys().copied().collect();
    }
}
