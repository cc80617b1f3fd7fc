use std::path::PathBuf;

use clap::Parser;
use riposte_core::group::GroupKind;
use riposte_core::server::{EpochConfig, EpochPolicy};
use riposte_service::certs::{generate, local_deployment, party_names, Addresses};

/// Generate a deployment root and party certificates, optionally with
/// ready-to-run loopback configs.
#[derive(Parser)]
#[command(name = "riposte-certgen")]
struct Cli {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2)]
    servers: usize,
    /// Also write server, auditor and client configs for loopback.
    #[arg(long)]
    configs: bool,
    #[arg(long, default_value_t = 7000)]
    base_port: u16,
    #[arg(long, default_value_t = 1024)]
    rows: usize,
    #[arg(long, default_value_t = 160)]
    row_bytes: usize,
    #[arg(long)]
    recovery: bool,
    /// Epoch length for the generated configs.
    #[arg(long, default_value_t = 60_000)]
    epoch_ms: u64,
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let two = cli.servers == 2;
    if !cli.configs {
        generate(&cli.out, &party_names(cli.servers, two))?;
        println!("certificates written to {}", cli.out.display());
        return Ok(());
    }
    let base = if two {
        EpochConfig::two_server(cli.rows, cli.row_bytes, cli.recovery)
    } else {
        EpochConfig::many_server(cli.rows, cli.row_bytes, cli.servers, GroupKind::P256)
    };
    let epoch = base.with_policy(EpochPolicy { max_requests: None, duration_ms: Some(cli.epoch_ms) });
    local_deployment(&cli.out, epoch, &Addresses::loopback(cli.base_port, cli.servers, two))?;
    println!("certificates and configs written to {}", cli.out.display());
    Ok(())
}
