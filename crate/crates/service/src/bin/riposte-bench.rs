use std::time::Duration;

use clap::Parser;
use riposte_core::bench::{run_benchmark, BenchSpec};
use riposte_core::group::GroupKind;
use riposte_core::server::EpochConfig;

/// Measure server-side write throughput on one machine.
#[derive(Parser)]
#[command(name = "riposte-bench")]
struct Cli {
    #[arg(long)]
    rows: usize,
    #[arg(long, default_value_t = 160)]
    row_bytes: usize,
    /// Seconds of server time to measure.
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    #[arg(long, default_value_t = 2)]
    servers: usize,
    #[arg(long)]
    recovery: bool,
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    #[arg(long)]
    max_requests: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let config = if cli.servers == 2 {
        EpochConfig::two_server(cli.rows, cli.row_bytes, cli.recovery)
    } else {
        EpochConfig::many_server(cli.rows, cli.row_bytes, cli.servers, GroupKind::P256)
    };
    let mut spec = BenchSpec::new(config, Duration::from_secs_f64(cli.duration));
    spec.concurrency = cli.concurrency;
    spec.max_requests = cli.max_requests;
    spec.seed = cli.seed;
    print!("{}", run_benchmark(&spec)?.render());
    Ok(())
}
