use std::path::PathBuf;

use anyhow::ensure;
use clap::Parser;
use riposte_service::{init_logging, NodeConfig, Role};

/// Run one database server.
#[derive(Parser)]
#[command(name = "riposte-server")]
struct Cli {
    #[arg(long)]
    config: PathBuf,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    init_logging();
    let cfg = NodeConfig::load(&Cli::parse().config)?;
    ensure!(cfg.node.role == Role::Server, "config is for the {:?} role", cfg.node.role);
    let mut node = riposte_service::start(cfg).await?;
    tokio::select! {
        r = node.wait() => r,
        _ = tokio::signal::ctrl_c() => {
            node.shutdown().await;
            Ok(())
        },
    }
}
