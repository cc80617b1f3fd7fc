//! Submits writes to a deployment: epoch discovery over HTTP, then one
//! TLS round trip per server.

use std::time::Duration;

use rand::{CryptoRng, RngCore};
use riposte_core::client::{choose_row, make_cover_request, make_write_request, WriteBundle};
use riposte_core::server::Context;
use riposte_core::wire::{Message, Status};
use serde::Deserialize;

pub mod config;
pub mod transport;

pub use config::{Deployment, Endpoint, TlsFiles};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("tls: {0}")]
    Tls(String),
    #[error("io: {0}")]
    Io(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("request: {0}")]
    Request(String),
}

/// Epoch state as published by a server's HTTP side.
#[derive(Debug, Clone, Deserialize)]
pub struct EpochInfo {
    pub epoch: u64,
    pub state: String,
}

pub async fn discover_epoch(d: &Deployment) -> Result<EpochInfo, Error> {
    let addr = d.discovery().ok_or_else(|| Error::Config("no server lists an http address".into()))?;
    let url = format!("http://{addr}/epoch");
    let resp = reqwest::get(&url).await.map_err(|e| Error::Io(format!("{url}: {e}")))?;
    resp.json::<EpochInfo>().await.map_err(|e| Error::Protocol(format!("{url}: {e}")))
}

/// Per-server answer to one submission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receipt {
    pub server: usize,
    pub status: Result<Status, String>,
}

impl Receipt {
    pub fn accepted(&self) -> bool {
        self.status == Ok(Status::Accepted)
    }
}

/// First failure among `receipts`, if any.
pub fn first_rejection(receipts: &[Receipt]) -> Option<&Receipt> {
    receipts.iter().find(|r| !r.accepted())
}

pub const ACK_TIMEOUT: Duration = Duration::from_secs(120);

async fn send_one(
    cfg: std::sync::Arc<rustls::ClientConfig>,
    server: usize,
    ep: Endpoint,
    msg: Message,
) -> Result<Status, Error> {
    let mut s = transport::connect(cfg, ep.addr, &config::server_name(server)).await?;
    transport::write_frame(&mut s, &msg).await?;
    let reply = tokio::time::timeout(ACK_TIMEOUT, transport::read_frame(&mut s))
        .await
        .map_err(|_| Error::Io("timed out waiting for acknowledgement".into()))??;
    match reply {
        Some(Message::WriteAck { status, .. }) => Ok(status),
        Some(other) => Err(Error::Protocol(format!("unexpected reply type {:#04x}", other.msg_type()))),
        None => Err(Error::Io("server closed the connection".into())),
    }
}

/// Sends each server its share concurrently and waits for every ack.
pub async fn submit(d: &Deployment, bundle: &WriteBundle) -> Result<Vec<Receipt>, Error> {
    let cfg = transport::client_config(&d.tls)?;
    let mut tasks = Vec::new();
    for (i, msg) in bundle.messages.iter().enumerate() {
        let ep = d.servers[i].clone();
        tasks.push(tokio::spawn(send_one(cfg.clone(), i, ep, msg.clone())));
    }
    let mut out = Vec::new();
    for (i, t) in tasks.into_iter().enumerate() {
        let status = match t.await {
            Ok(r) => r.map_err(|e| e.to_string()),
            Err(e) => Err(e.to_string()),
        };
        out.push(Receipt { server: i, status });
    }
    Ok(out)
}

/// Builds and submits a write of `msg`; `row` defaults to a uniform pick.
pub async fn write<R: RngCore + CryptoRng>(
    rng: &mut R,
    d: &Deployment,
    epoch: u64,
    row: Option<usize>,
    msg: &[u8],
) -> Result<Vec<Receipt>, Error> {
    let ctx = Context::new(d.epoch.clone()).map_err(|e| Error::Config(e.to_string()))?;
    let row = match row {
        Some(r) => r,
        None => choose_row(rng, ctx.geometry.rows).map_err(|e| Error::Request(e.to_string()))?,
    };
    let bundle = make_write_request(rng, &ctx, epoch, row, msg).map_err(|e| Error::Request(e.to_string()))?;
    submit(d, &bundle).await
}

pub async fn cover<R: RngCore + CryptoRng>(rng: &mut R, d: &Deployment, epoch: u64) -> Result<Vec<Receipt>, Error> {
    let ctx = Context::new(d.epoch.clone()).map_err(|e| Error::Config(e.to_string()))?;
    let bundle = make_cover_request(rng, &ctx, epoch).map_err(|e| Error::Request(e.to_string()))?;
    submit(d, &bundle).await
}
