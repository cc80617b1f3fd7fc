//! Node configuration: a deployment description plus a `[node]` table
//! saying which party this process is.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _};
use riposte_client::config::Deployment;
use riposte_client::Endpoint;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Server,
    Auditor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSection {
    pub role: Role,
    /// Position in `servers`; ignored for the auditor.
    #[serde(default)]
    pub index: usize,
    /// Snapshots and revealed boards are written here.
    pub data_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub node: NodeSection,
    #[serde(flatten)]
    pub deployment: Deployment,
}

impl NodeConfig {
    pub fn from_toml(text: &str, base: &Path) -> anyhow::Result<Self> {
        let mut c: NodeConfig = toml::from_str(text)?;
        c.deployment.resolve(base);
        if c.node.data_dir.is_relative() {
            c.node.data_dir = base.join(&c.node.data_dir);
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
            .with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.deployment.validate()?;
        match self.node.role {
            Role::Server if self.node.index >= self.deployment.servers.len() => {
                bail!("node index {} but only {} servers", self.node.index, self.deployment.servers.len())
            }
            Role::Auditor if self.deployment.auditor.is_none() => bail!("auditor role without an auditor endpoint"),
            _ => Ok(()),
        }
    }

    /// This node's own endpoint.
    pub fn endpoint(&self) -> &Endpoint {
        match self.node.role {
            Role::Server => &self.deployment.servers[self.node.index],
            Role::Auditor => self.deployment.auditor.as_ref().expect("validated"),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[node]
role = "server"
index = 1
data_dir = "data/server-1"

[tls]
cert = "certs/server-1.pem"
key = "certs/server-1.key"
ca = "certs/ca.pem"

[[servers]]
addr = "127.0.0.1:7000"
cert = "certs/server-0.pem"
http = "127.0.0.1:8000"

[[servers]]
addr = "127.0.0.1:7001"
cert = "certs/server-1.pem"
http = "127.0.0.1:8001"

[auditor]
addr = "127.0.0.1:7100"
cert = "certs/auditor.pem"

[epoch]
rows = 1024
variant = "two-server"
policy = { duration_ms = 60000 }
"#;

    #[test]
    fn parses_node_section() {
        let c = NodeConfig::from_toml(SAMPLE, Path::new("/srv")).unwrap();
        assert_eq!(c.node.role, Role::Server);
        assert_eq!(c.endpoint().addr, "127.0.0.1:7001".parse().unwrap());
        assert_eq!(c.node.data_dir, Path::new("/srv/data/server-1"));
        let again = NodeConfig::from_toml(&c.to_toml(), Path::new("/elsewhere")).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn index_out_of_range() {
        assert!(NodeConfig::from_toml(&SAMPLE.replace("index = 1", "index = 2"), Path::new(".")).is_err());
    }
}
