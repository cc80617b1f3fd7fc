//! Deployment description shared by clients, servers and the auditor.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use riposte_core::server::{EpochConfig, Variant};
use serde::{Deserialize, Serialize};

use crate::Error;

/// Certificate, key and trust root for one party.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TlsFiles {
    /// PEM certificate chain presented to the other side.
    pub cert: PathBuf,
    pub key: PathBuf,
    /// PEM root that every deployment certificate chains to.
    pub ca: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Endpoint {
    pub addr: SocketAddr,
    /// The party's own certificate; inbound connections are identified by
    /// matching it exactly.
    pub cert: PathBuf,
    /// Plain HTTP read side (epoch discovery, board, status).
    #[serde(default)]
    pub http: Option<SocketAddr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub tls: TlsFiles,
    pub servers: Vec<Endpoint>,
    #[serde(default)]
    pub auditor: Option<Endpoint>,
    pub epoch: EpochConfig,
}

/// TLS name in the certificate of server `i`.
pub fn server_name(i: usize) -> String {
    format!("server-{i}")
}

pub const AUDITOR_NAME: &str = "auditor";
pub const CLIENT_NAME: &str = "client";

impl Deployment {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, Error> {
        let mut d: Deployment = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        d.resolve(base);
        d.validate()?;
        Ok(d)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Makes relative paths relative to the config file.
    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.tls.cert);
        fix(&mut self.tls.key);
        fix(&mut self.tls.ca);
        for e in self.servers.iter_mut().chain(self.auditor.as_mut()) {
            fix(&mut e.cert);
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.epoch.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.servers.len() != self.epoch.servers {
            return Err(Error::Config(format!(
                "{} server endpoints listed, epoch config says {}",
                self.servers.len(),
                self.epoch.servers
            )));
        }
        let two = self.epoch.variant == Variant::TwoServer;
        if two != self.auditor.is_some() {
            return Err(Error::Config("an auditor endpoint is required exactly for the two-server variant".into()));
        }
        if self.epoch.variant == Variant::Toy {
            return Err(Error::Config("the toy variant cannot be deployed".into()));
        }
        Ok(())
    }

    /// HTTP address used for epoch discovery.
    pub fn discovery(&self) -> Option<SocketAddr> {
        self.servers.iter().find_map(|s| s.http)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[tls]
cert = "certs/client.pem"
key = "certs/client.key"
ca = "certs/ca.pem"

[[servers]]
addr = "127.0.0.1:7000"
cert = "certs/server-0.pem"
http = "127.0.0.1:8000"

[[servers]]
addr = "127.0.0.1:7001"
cert = "certs/server-1.pem"

[auditor]
addr = "127.0.0.1:7100"
cert = "certs/auditor.pem"

[epoch]
rows = 1024
row_bytes = 160
variant = "two-server"
policy = { max_requests = 500 }
"#;

    #[test]
    fn parses_and_resolves() {
        let d = Deployment::from_toml(SAMPLE, Path::new("/etc/riposte")).unwrap();
        assert_eq!(d.servers.len(), 2);
        assert_eq!(d.tls.ca, Path::new("/etc/riposte/certs/ca.pem"));
        assert_eq!(d.discovery(), Some("127.0.0.1:8000".parse().unwrap()));
        assert_eq!(d.epoch.policy.max_requests, Some(500));
    }

    #[test]
    fn auditor_required_for_two_servers() {
        let no_auditor = SAMPLE.replace("[auditor]\naddr = \"127.0.0.1:7100\"\ncert = \"certs/auditor.pem\"\n", "");
        assert!(Deployment::from_toml(&no_auditor, Path::new(".")).is_err());
    }
}
