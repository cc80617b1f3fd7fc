use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context as _};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use riposte_client::{cover, discover_epoch, first_rejection, write, Deployment, Receipt};

#[derive(Parser)]
#[command(name = "riposte-client", about = "Submit an anonymous write to the board")]
struct Cli {
    #[arg(long, global = true, default_value = "riposte.toml")]
    config: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a message into a row of the current epoch's table.
    Write {
        /// Target row; picked uniformly at random when omitted.
        #[arg(long)]
        row: Option<usize>,
        /// Message as hex.
        #[arg(long, conflicts_with = "file", required_unless_present = "file")]
        message: Option<String>,
        #[arg(long)]
        file: Option<PathBuf>,
        /// Resubmit in later epochs after a failed attempt.
        #[arg(long, default_value_t = 0)]
        retries: u32,
        /// On retry keep the same row instead of drawing a new one.
        #[arg(long)]
        keep_row: bool,
    },
    /// Submit a cover write (random contents, row 0).
    Cover,
}

fn report(receipts: &[Receipt]) -> bool {
    for r in receipts {
        match &r.status {
            Ok(s) => println!("server {}: {s}", r.server),
            Err(e) => println!("server {}: error: {e}", r.server),
        }
    }
    first_rejection(receipts).is_none()
}

async fn wait_for_next_epoch(d: &Deployment, after: u64) -> anyhow::Result<u64> {
    loop {
        let info = discover_epoch(d).await?;
        if info.epoch > after && info.state == "open" {
            return Ok(info.epoch);
        }
        tokio::time::sleep(Duration::from_millis(500)).await;
    }
}

async fn run(cli: Cli) -> anyhow::Result<bool> {
    let d = Deployment::load(&cli.config).with_context(|| format!("loading {}", cli.config.display()))?;
    let mut rng = ChaCha20Rng::from_entropy();
    let info = discover_epoch(&d).await?;
    if info.state != "open" {
        bail!("epoch {} is {}", info.epoch, info.state);
    }
    match cli.cmd {
        Cmd::Cover => Ok(report(&cover(&mut rng, &d, info.epoch).await?)),
        Cmd::Write { row, message, file, retries, keep_row } => {
            let msg = match (message, file) {
                (Some(h), _) => hex::decode(h.trim()).context("--message is not hex")?,
                (None, Some(p)) => std::fs::read(&p).with_context(|| format!("reading {}", p.display()))?,
                (None, None) => unreachable!("clap requires one of them"),
            };
            let mut epoch = info.epoch;
            let mut row = row;
            for attempt in 0..=retries {
                if attempt > 0 {
                    epoch = wait_for_next_epoch(&d, epoch).await?;
                    println!("retrying in epoch {epoch}");
                }
                let ctx = riposte_core::server::Context::new(d.epoch.clone())?;
                let r = match row {
                    Some(r) => r,
                    None => riposte_core::client::choose_row(&mut rng, ctx.geometry.rows)?,
                };
                if keep_row {
                    row = Some(r);
                }
                println!("epoch {epoch}, row {r}");
                if report(&write(&mut rng, &d, epoch, Some(r), &msg).await?) {
                    return Ok(true);
                }
            }
            Ok(false)
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    match run(Cli::parse()).await {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("riposte-client: {e:#}");
            ExitCode::FAILURE
        }
    }
}
