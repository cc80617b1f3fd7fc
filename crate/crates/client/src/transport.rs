//! Mutually authenticated TLS 1.3 links carrying protocol frames.

use std::path::Path;
use std::sync::Arc;

use riposte_core::wire::{parse_header, Message, HEADER_LEN, MAX_PAYLOAD};
use rustls_pki_types::pem::PemObject;
use rustls_pki_types::{CertificateDer, PrivateKeyDer, ServerName};
use rustls::server::WebPkiClientVerifier;
use rustls::{ClientConfig, RootCertStore, ServerConfig};
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio_rustls::{TlsAcceptor, TlsConnector};

use crate::config::TlsFiles;
use crate::Error;

fn tls_err(e: impl std::fmt::Display) -> Error {
    Error::Tls(e.to_string())
}

pub fn load_certs(path: &Path) -> Result<Vec<CertificateDer<'static>>, Error> {
    let certs: Vec<_> = CertificateDer::pem_file_iter(path)
        .and_then(|it| it.collect::<Result<Vec<_>, _>>())
        .map_err(|e| Error::Tls(format!("{}: {e}", path.display())))?;
    if certs.is_empty() {
        return Err(Error::Tls(format!("{}: no certificate", path.display())));
    }
    Ok(certs)
}

fn load_key(path: &Path) -> Result<PrivateKeyDer<'static>, Error> {
    PrivateKeyDer::from_pem_file(path).map_err(|e| Error::Tls(format!("{}: {e}", path.display())))
}

fn roots(ca: &Path) -> Result<RootCertStore, Error> {
    let mut store = RootCertStore::empty();
    for c in load_certs(ca)? {
        store.add(c).map_err(tls_err)?;
    }
    Ok(store)
}

fn provider() -> Arc<rustls::crypto::CryptoProvider> {
    Arc::new(rustls::crypto::ring::default_provider())
}

/// Dialing side: trusts only the deployment root and presents `files.cert`.
pub fn client_config(files: &TlsFiles) -> Result<Arc<ClientConfig>, Error> {
    let cfg = ClientConfig::builder_with_provider(provider())
        .with_protocol_versions(&[&rustls::version::TLS13])
        .map_err(tls_err)?
        .with_root_certificates(roots(&files.ca)?)
        .with_client_auth_cert(load_certs(&files.cert)?, load_key(&files.key)?)
        .map_err(tls_err)?;
    Ok(Arc::new(cfg))
}

/// Listening side: demands a client certificate from the deployment root.
pub fn server_config(files: &TlsFiles) -> Result<Arc<ServerConfig>, Error> {
    let verifier =
        WebPkiClientVerifier::builder_with_provider(Arc::new(roots(&files.ca)?), provider()).build().map_err(tls_err)?;
    let cfg = ServerConfig::builder_with_provider(provider())
        .with_protocol_versions(&[&rustls::version::TLS13])
        .map_err(tls_err)?
        .with_client_cert_verifier(verifier)
        .with_single_cert(load_certs(&files.cert)?, load_key(&files.key)?)
        .map_err(tls_err)?;
    Ok(Arc::new(cfg))
}

pub type ClientStream = tokio_rustls::client::TlsStream<TcpStream>;
pub type ServerStream = tokio_rustls::server::TlsStream<TcpStream>;

pub async fn connect(cfg: Arc<ClientConfig>, addr: std::net::SocketAddr, name: &str) -> Result<ClientStream, Error> {
    let tcp = TcpStream::connect(addr).await.map_err(|e| Error::Io(format!("{addr}: {e}")))?;
    tcp.set_nodelay(true).ok();
    let name = ServerName::try_from(name.to_string()).map_err(tls_err)?;
    TlsConnector::from(cfg).connect(name, tcp).await.map_err(|e| Error::Tls(format!("{addr}: {e}")))
}

pub async fn accept(cfg: Arc<ServerConfig>, tcp: TcpStream) -> Result<ServerStream, Error> {
    tcp.set_nodelay(true).ok();
    TlsAcceptor::from(cfg).accept(tcp).await.map_err(tls_err)
}

/// Leaf certificate the peer authenticated with.
pub fn peer_leaf(s: &ServerStream) -> Option<CertificateDer<'static>> {
    s.get_ref().1.peer_certificates().and_then(|c| c.first()).map(|c| c.clone().into_owned())
}

/// Reads one frame. `Ok(None)` on clean end of stream before a header.
pub async fn read_frame<S: AsyncRead + Unpin>(s: &mut S) -> Result<Option<Message>, Error> {
    read_frame_limited(s, MAX_PAYLOAD).await
}

/// Like [`read_frame`] but refuses payloads longer than `limit`. The buffer
/// grows with the bytes actually received.
pub async fn read_frame_limited<S: AsyncRead + Unpin>(s: &mut S, limit: usize) -> Result<Option<Message>, Error> {
    let mut header = [0u8; HEADER_LEN];
    match s.read_exact(&mut header).await {
        Ok(_) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(Error::Io(e.to_string())),
    }
    let (t, len) = parse_header(&header).map_err(|e| Error::Protocol(e.to_string()))?;
    if len > limit {
        return Err(Error::Protocol(format!("payload of {len} bytes over the {limit} byte limit")));
    }
    let mut payload = Vec::with_capacity(len.min(1 << 16));
    let got = (&mut *s).take(len as u64).read_to_end(&mut payload).await.map_err(|e| Error::Io(e.to_string()))?;
    if got != len {
        return Err(Error::Io("stream ended inside a frame".into()));
    }
    Message::decode(t, &payload).map(Some).map_err(|e| Error::Protocol(e.to_string()))
}

pub async fn write_frame<S: AsyncWrite + Unpin>(s: &mut S, m: &Message) -> Result<(), Error> {
    s.write_all(&m.to_frame()).await.map_err(|e| Error::Io(e.to_string()))?;
    s.flush().await.map_err(|e| Error::Io(e.to_string()))
}
