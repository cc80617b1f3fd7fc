//! Self-signed credentials and ready-to-run local deployments.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use rcgen::{
    BasicConstraints, CertificateParams, DnType, ExtendedKeyUsagePurpose, IsCa, KeyPair, KeyUsagePurpose,
};
use riposte_client::config::{server_name, Deployment, AUDITOR_NAME, CLIENT_NAME};
use riposte_client::{Endpoint, TlsFiles};
use riposte_core::server::{EpochConfig, Variant};

use crate::config::{NodeConfig, NodeSection, Role};

/// Names of every party in a deployment of `servers` servers.
pub fn party_names(servers: usize, auditor: bool) -> Vec<String> {
    let mut names: Vec<String> = (0..servers).map(server_name).collect();
    if auditor {
        names.push(AUDITOR_NAME.to_string());
    }
    names.push(CLIENT_NAME.to_string());
    names
}

/// Writes `ca.pem` and `<name>.pem` / `<name>.key` for each name. The CA
/// key is not kept; rerun to issue a new set.
pub fn generate(dir: &Path, names: &[String]) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let ca_key = KeyPair::generate()?;
    let mut ca = CertificateParams::new(Vec::<String>::new())?;
    ca.is_ca = IsCa::Ca(BasicConstraints::Unconstrained);
    ca.distinguished_name.push(DnType::CommonName, "riposte deployment root");
    ca.key_usages = vec![KeyUsagePurpose::KeyCertSign, KeyUsagePurpose::DigitalSignature];
    let ca_cert = ca.self_signed(&ca_key)?;
    write(&dir.join("ca.pem"), &ca_cert.pem())?;
    for name in names {
        let key = KeyPair::generate()?;
        let mut p = CertificateParams::new(vec![name.clone()])?;
        p.distinguished_name.push(DnType::CommonName, name.as_str());
        p.key_usages = vec![KeyUsagePurpose::DigitalSignature];
        // Every party both dials and accepts.
        p.extended_key_usages = vec![ExtendedKeyUsagePurpose::ServerAuth, ExtendedKeyUsagePurpose::ClientAuth];
        let cert = p.signed_by(&key, &ca_cert, &ca_key)?;
        write(&dir.join(format!("{name}.pem")), &cert.pem())?;
        write(&dir.join(format!("{name}.key")), &key.serialize_pem())?;
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Listening addresses for a local deployment.
#[derive(Debug, Clone)]
pub struct Addresses {
    pub servers: Vec<(SocketAddr, SocketAddr)>,
    pub auditor: Option<SocketAddr>,
}

impl Addresses {
    /// Consecutive loopback ports: frames at `base + i`, HTTP at
    /// `base + 100 + i`, the auditor at `base + 50`.
    pub fn loopback(base: u16, servers: usize, auditor: bool) -> Self {
        let at = |p: u16| SocketAddr::from(([127, 0, 0, 1], p));
        Addresses {
            servers: (0..servers as u16).map(|i| (at(base + i), at(base + 100 + i))).collect(),
            auditor: auditor.then(|| at(base + 50)),
        }
    }
}

/// Everything needed to start one deployment on this machine.
pub struct LocalDeployment {
    pub dir: PathBuf,
    pub servers: Vec<NodeConfig>,
    pub auditor: Option<NodeConfig>,
    pub client: Deployment,
}

/// Generates credentials under `dir/certs` and writes `server-<i>.toml`,
/// `auditor.toml` and `client.toml` into `dir`.
pub fn local_deployment(dir: &Path, epoch: EpochConfig, addrs: &Addresses) -> anyhow::Result<LocalDeployment> {
    let auditor = epoch.variant == Variant::TwoServer;
    anyhow::ensure!(addrs.servers.len() == epoch.servers, "address count does not match the server count");
    anyhow::ensure!(addrs.auditor.is_some() == auditor, "auditor address needed exactly for two servers");
    let certs = dir.join("certs");
    generate(&certs, &party_names(epoch.servers, auditor))?;
    let files = |name: &str| TlsFiles {
        cert: certs.join(format!("{name}.pem")),
        key: certs.join(format!("{name}.key")),
        ca: certs.join("ca.pem"),
    };
    let servers: Vec<Endpoint> = addrs
        .servers
        .iter()
        .enumerate()
        .map(|(i, (addr, http))| Endpoint {
            addr: *addr,
            cert: certs.join(format!("{}.pem", server_name(i))),
            http: Some(*http),
        })
        .collect();
    let auditor_ep =
        addrs.auditor.map(|addr| Endpoint { addr, cert: certs.join(format!("{AUDITOR_NAME}.pem")), http: None });
    let deployment = |name: &str| Deployment {
        tls: files(name),
        servers: servers.clone(),
        auditor: auditor_ep.clone(),
        epoch: epoch.clone(),
    };
    let node = |role, index, name: &str| NodeConfig {
        node: NodeSection { role, index, data_dir: dir.join("data").join(name) },
        deployment: deployment(name),
    };
    let out = LocalDeployment {
        dir: dir.to_path_buf(),
        servers: (0..epoch.servers).map(|i| node(Role::Server, i, &server_name(i))).collect(),
        auditor: auditor.then(|| node(Role::Auditor, 0, AUDITOR_NAME)),
        client: deployment(CLIENT_NAME),
    };
    for c in out.servers.iter().chain(&out.auditor) {
        c.validate()?;
        let name = match c.node.role {
            Role::Server => server_name(c.node.index),
            Role::Auditor => AUDITOR_NAME.to_string(),
        };
        let mut rel = c.clone();
        relativize(&mut rel.deployment, dir);
        if let Ok(p) = rel.node.data_dir.strip_prefix(dir) {
            rel.node.data_dir = p.to_path_buf();
        }
        write(&dir.join(format!("{name}.toml")), &rel.to_toml())?;
    }
    out.client.validate()?;
    let mut rel = out.client.clone();
    relativize(&mut rel, dir);
    write(&dir.join("client.toml"), &toml::to_string(&rel)?)?;
    Ok(out)
}

/// Rewrites paths under `dir` relative to it, so the files written there
/// stay valid wherever the directory is moved.
fn relativize(d: &mut Deployment, dir: &Path) {
    let fix = |p: &mut PathBuf| {
        if let Ok(r) = p.strip_prefix(dir) {
            *p = r.to_path_buf();
        }
    };
    fix(&mut d.tls.cert);
    fix(&mut d.tls.key);
    fix(&mut d.tls.ca);
    for e in d.servers.iter_mut().chain(d.auditor.as_mut()) {
        fix(&mut e.cert);
    }
}
