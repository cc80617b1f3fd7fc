use std::path::PathBuf;

use anyhow::Context as _;
use clap::Parser;
use riposte_core::sim::{run_simulation, summarize, SimSpec};

/// Run the in-process simulator on a spec file (TOML).
#[derive(Parser)]
#[command(name = "riposte-sim")]
struct Cli {
    #[arg(long)]
    spec: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Print the full report as JSON.
    #[arg(long)]
    json: bool,
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let text = std::fs::read_to_string(&cli.spec).with_context(|| format!("reading {}", cli.spec.display()))?;
    let mut spec: SimSpec = toml::from_str(&text).with_context(|| format!("parsing {}", cli.spec.display()))?;
    if let Some(s) = cli.seed {
        spec.seed = s;
    }
    let report = run_simulation(&spec)?;
    if cli.json {
        println!("{}", report.to_json());
    } else {
        print!("{}", summarize(&report));
    }
    Ok(())
}
