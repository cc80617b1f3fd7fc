//! Full deployments on loopback: real sockets, real TLS, real frames.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use riposte_client::config::server_name;
use riposte_client::{discover_epoch, first_rejection, submit, transport, write, Deployment, Receipt, TlsFiles};
use riposte_core::client::{make_cover_request, make_write_request, WriteBundle};
use riposte_core::group::GroupKind;
use riposte_core::server::{Context, EpochConfig, EpochPolicy};
use riposte_core::sim::{malicious_shares, Mutation};
use riposte_core::wire::{Message, Status};
use riposte_service::certs::{generate, local_deployment, party_names, Addresses, LocalDeployment};
use riposte_service::{start_with, Running};
use rustls_pki_types::ServerName;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};

struct Cluster {
    _dir: tempfile::TempDir,
    local: LocalDeployment,
    nodes: Vec<Running>,
}

impl Cluster {
    fn client(&self) -> &Deployment {
        &self.local.client
    }

    fn ctx(&self) -> Context {
        Context::new(self.client().epoch.clone()).unwrap()
    }

    fn http(&self, i: usize) -> SocketAddr {
        self.client().servers[i].http.unwrap()
    }

    async fn shutdown(self) {
        for n in self.nodes {
            n.shutdown().await;
        }
    }
}

async fn bind() -> TcpListener {
    TcpListener::bind("127.0.0.1:0").await.unwrap()
}

async fn deploy(epoch: EpochConfig) -> Cluster {
    let dir = tempfile::tempdir().unwrap();
    let two = epoch.servers == 2;
    let mut frames = Vec::new();
    let mut https = Vec::new();
    for _ in 0..epoch.servers {
        frames.push(bind().await);
        https.push(bind().await);
    }
    let auditor = if two { Some(bind().await) } else { None };
    let addrs = Addresses {
        servers: frames.iter().zip(&https).map(|(f, h)| (f.local_addr().unwrap(), h.local_addr().unwrap())).collect(),
        auditor: auditor.as_ref().map(|a| a.local_addr().unwrap()),
    };
    let local = local_deployment(dir.path(), epoch, &addrs).unwrap();
    let mut nodes = Vec::new();
    for ((cfg, f), h) in local.servers.iter().zip(frames).zip(https) {
        nodes.push(start_with(cfg.clone(), f, Some(h)).await.unwrap());
    }
    if let (Some(cfg), Some(l)) = (&local.auditor, auditor) {
        nodes.push(start_with(cfg.clone(), l, None).await.unwrap());
    }
    Cluster { _dir: dir, local, nodes }
}

fn two_server(rows: usize, max_requests: u64) -> EpochConfig {
    EpochConfig::two_server(rows, 32, false).with_policy(EpochPolicy { max_requests: Some(max_requests), duration_ms: None })
}

async fn board(http: SocketAddr, epoch: u64) -> Option<String> {
    let r = reqwest::get(format!("http://{http}/board?epoch={epoch}")).await.ok()?;
    if r.status().is_success() {
        r.text().await.ok()
    } else {
        None
    }
}

async fn wait_board(http: SocketAddr, epoch: u64) -> String {
    let start = Instant::now();
    loop {
        if let Some(b) = board(http, epoch).await {
            return b;
        }
        assert!(start.elapsed() < Duration::from_secs(30), "board for epoch {epoch} never appeared");
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

fn statuses(r: &[Receipt]) -> Vec<Status> {
    r.iter().map(|r| r.status.clone().expect("server answered")).collect()
}

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

#[tokio::test(flavor = "multi_thread")]
async fn honest_writes_are_revealed_on_every_server() {
    let c = deploy(two_server(64, 3)).await;
    let info = discover_epoch(c.client()).await.unwrap();
    assert_eq!((info.epoch, info.state.as_str()), (0, "open"));
    let mut rng = rng(1);
    let msgs: [&[u8]; 3] = [b"first", b"second", b"third"];
    for (i, m) in msgs.iter().enumerate() {
        let r = write(&mut rng, c.client(), 0, Some(10 + i), m).await.unwrap();
        assert!(first_rejection(&r).is_none(), "{r:?}");
    }
    for s in 0..2 {
        let b = wait_board(c.http(s), 0).await;
        let lines: Vec<serde_json::Value> = b.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 3);
        for (i, m) in msgs.iter().enumerate() {
            assert_eq!(lines[i]["row"], 10 + i);
            assert_eq!(lines[i]["status"], "single");
            assert_eq!(lines[i]["message"], hex::encode(m));
        }
    }
    let status: serde_json::Value =
        reqwest::get(format!("http://{}/status", c.http(1))).await.unwrap().json().await.unwrap();
    assert_eq!(status["revealed_epochs"], serde_json::json!([0]));
    assert_eq!(discover_epoch(c.client()).await.unwrap().epoch, 1);
    c.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn replay_in_a_later_epoch_is_rejected() {
    let c = deploy(two_server(32, 1)).await;
    let ctx = c.ctx();
    let bundle = make_write_request(&mut rng(2), &ctx, 0, 5, b"once").unwrap();
    assert_eq!(statuses(&submit(c.client(), &bundle).await.unwrap()), [Status::Accepted; 2]);
    wait_board(c.http(0), 0).await;
    assert_eq!(statuses(&submit(c.client(), &bundle).await.unwrap()), [Status::Epoch; 2]);
    c.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn replay_within_an_epoch_is_rejected() {
    let c = deploy(two_server(32, 10)).await;
    let bundle = make_cover_request(&mut rng(3), &c.ctx(), 0).unwrap();
    assert_eq!(statuses(&submit(c.client(), &bundle).await.unwrap()), [Status::Accepted; 2]);
    assert_eq!(statuses(&submit(c.client(), &bundle).await.unwrap()), [Status::Replay; 2]);
    c.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn malformed_writes_fail_the_audit() {
    let c = deploy(two_server(64, 100)).await;
    let ctx = c.ctx();
    let mut rng = rng(4);
    for m in [Mutation::RowCorrupt, Mutation::BitVector, Mutation::ZeroMessage] {
        let shares = malicious_shares(&mut rng, &ctx, 0, 7, m).unwrap();
        let r = submit(c.client(), &WriteBundle::from_shares(0, shares)).await.unwrap();
        for s in statuses(&r) {
            assert_ne!(s, Status::Accepted, "{m:?} accepted");
        }
    }
    let ok = write(&mut rng, c.client(), 0, Some(3), b"still works").await.unwrap();
    assert!(first_rejection(&ok).is_none());
    c.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn many_servers_with_proofs() {
    let epoch = EpochConfig::many_server(16, 16, 3, GroupKind::P256)
        .with_policy(EpochPolicy { max_requests: Some(2), duration_ms: None });
    let c = deploy(epoch).await;
    let ctx = c.ctx();
    let mut rng = rng(5);
    let r = write(&mut rng, c.client(), 0, Some(9), b"three ways").await.unwrap();
    assert_eq!(statuses(&r), [Status::Accepted; 3]);
    let shares = malicious_shares(&mut rng, &ctx, 0, 4, Mutation::ProofTamper).unwrap();
    let r = submit(c.client(), &WriteBundle::from_shares(0, shares)).await.unwrap();
    assert!(statuses(&r).iter().all(|s| *s != Status::Accepted));
    let r = write(&mut rng, c.client(), 0, Some(2), b"second").await.unwrap();
    assert_eq!(statuses(&r), [Status::Accepted; 3]);
    for s in 0..3 {
        let b = wait_board(c.http(s), 0).await;
        assert!(b.contains(&hex::encode(b"three ways")) && b.contains(&hex::encode(b"second")), "{b}");
    }
    c.shutdown().await;
}

/// Sends a cover frame and reads until the server hangs up. Returns any
/// frame that came back.
async fn probe<S: tokio::io::AsyncRead + tokio::io::AsyncWrite + Unpin>(s: &mut S, frame: &[u8]) -> Option<Message> {
    if s.write_all(frame).await.is_err() {
        return None;
    }
    let _ = s.flush().await;
    match tokio::time::timeout(Duration::from_secs(10), transport::read_frame(s)).await {
        Ok(Ok(m)) => m,
        Ok(Err(_)) => None,
        Err(_) => panic!("server neither answered nor closed the connection"),
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn plaintext_connection_is_refused() {
    let c = deploy(two_server(32, 10)).await;
    let frame = make_cover_request(&mut rng(6), &c.ctx(), 0).unwrap().messages[0].to_frame();
    let mut tcp = TcpStream::connect(c.client().servers[0].addr).await.unwrap();
    let _ = tcp.write_all(&frame).await;
    let mut buf = Vec::new();
    let n = tokio::time::timeout(Duration::from_secs(10), tcp.read_to_end(&mut buf)).await.unwrap().unwrap_or(0);
    assert!(!buf[..n].starts_with(b"RPST"), "plaintext got a protocol answer");
    assert_eq!(c.nodes[0].shared.status.lock().unwrap().accepted, 0);
    c.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn bad_magic_closes_the_connection() {
    let c = deploy(two_server(32, 10)).await;
    let cfg = transport::client_config(&c.client().tls).unwrap();
    let mut s = transport::connect(cfg, c.client().servers[0].addr, &server_name(0)).await.unwrap();
    let mut frame = make_cover_request(&mut rng(7), &c.ctx(), 0).unwrap().messages[0].to_frame();
    frame[..4].copy_from_slice(b"XXXX");
    assert!(probe(&mut s, &frame).await.is_none());
    // The server keeps serving everyone else.
    let r = write(&mut rng(8), c.client(), 0, None, b"after").await.unwrap();
    assert!(first_rejection(&r).is_none());
    c.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn oversized_client_frame_is_refused() {
    let c = deploy(two_server(32, 10)).await;
    let cfg = transport::client_config(&c.client().tls).unwrap();
    let mut s = transport::connect(cfg, c.client().servers[0].addr, &server_name(0)).await.unwrap();
    let mut header = b"RPST\x01\x01".to_vec();
    header.extend_from_slice(&(64u32 << 20).to_be_bytes());
    assert!(probe(&mut s, &header).await.is_none());
    c.shutdown().await;
}

fn ca_only_config(ca: &std::path::Path) -> Arc<rustls::ClientConfig> {
    let mut roots = rustls::RootCertStore::empty();
    for cert in transport::load_certs(ca).unwrap() {
        roots.add(cert).unwrap();
    }
    let provider = Arc::new(rustls::crypto::ring::default_provider());
    let cfg = rustls::ClientConfig::builder_with_provider(provider)
        .with_protocol_versions(&[&rustls::version::TLS13])
        .unwrap()
        .with_root_certificates(roots)
        .with_no_client_auth();
    Arc::new(cfg)
}

#[tokio::test(flavor = "multi_thread")]
async fn client_without_certificate_is_refused() {
    let c = deploy(two_server(32, 10)).await;
    let frame = make_cover_request(&mut rng(9), &c.ctx(), 0).unwrap().messages[0].to_frame();
    let tcp = TcpStream::connect(c.client().servers[0].addr).await.unwrap();
    let name = ServerName::try_from(server_name(0)).unwrap();
    // TLS 1.3 reports a rejected client only after the client's flight.
    if let Ok(mut s) = tokio_rustls::TlsConnector::from(ca_only_config(&c.client().tls.ca)).connect(name, tcp).await {
        assert!(probe(&mut s, &frame).await.is_none());
    }
    assert_eq!(c.nodes[0].shared.status.lock().unwrap().accepted, 0);
    c.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn certificate_from_another_root_is_refused() {
    let c = deploy(two_server(32, 10)).await;
    let other = tempfile::tempdir().unwrap();
    generate(other.path(), &party_names(2, true)).unwrap();
    let mut rogue = c.client().clone();
    rogue.tls = TlsFiles {
        cert: other.path().join("client.pem"),
        key: other.path().join("client.key"),
        ca: c.client().tls.ca.clone(),
    };
    let bundle = make_cover_request(&mut rng(10), &c.ctx(), 0).unwrap();
    let r = submit(&rogue, &bundle).await.unwrap();
    assert!(r.iter().all(|r| r.status.is_err()), "{r:?}");
    // And a client trusting another root will not talk to the servers.
    let mut lost = c.client().clone();
    lost.tls.ca = other.path().join("ca.pem");
    let r = submit(&lost, &bundle).await.unwrap();
    assert!(r.iter().all(|r| r.status.is_err()), "{r:?}");
    c.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn restarted_server_resumes_after_the_last_board() {
    let c = deploy(two_server(32, 1)).await;
    let r = write(&mut rng(11), c.client(), 0, Some(4), b"kept").await.unwrap();
    assert!(first_rejection(&r).is_none());
    wait_board(c.http(0), 0).await;
    let cfg = c.local.servers[0].clone();
    let Cluster { _dir, nodes, .. } = c;
    for n in nodes {
        n.shutdown().await;
    }
    let http = bind().await;
    let addr = http.local_addr().unwrap();
    let again = start_with(cfg, bind().await, Some(http)).await.unwrap();
    assert_eq!(again.shared.status.lock().unwrap().epoch, 1);
    assert!(wait_board(addr, 0).await.contains(&hex::encode(b"kept")));
    again.shutdown().await;
}
