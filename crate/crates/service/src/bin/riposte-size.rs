use clap::Parser;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use riposte_core::collision::{exact_success_rate, required_table_size, simulate_success_rate, SizingQuery};

/// Size a table for a writer count and target success rate.
#[derive(Parser)]
#[command(name = "riposte-size")]
struct Cli {
    #[arg(long)]
    writers: usize,
    #[arg(long, default_value_t = 0)]
    malicious: usize,
    #[arg(long, default_value_t = 0.95)]
    target_rate: f64,
    #[arg(long)]
    recovery: bool,
    #[arg(long, default_value_t = 1000)]
    monte_carlo_trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let q = SizingQuery { writers: cli.writers, malicious: cli.malicious, target: cli.target_rate, recovery: cli.recovery };
    let n = required_table_size(&q)?;
    let mut rng = ChaCha20Rng::seed_from_u64(cli.seed);
    println!("{:>10} {:>10} {:>10}", "n", "predicted", "simulated");
    // The chosen size and a few neighbours on either side.
    for f in [0.5, 0.75, 1.0, 1.5, 2.0] {
        let size = ((n as f64 * f).round() as usize).max(1);
        let honest_rows = size.saturating_sub(cli.malicious).max(1);
        let predicted = exact_success_rate(cli.writers, honest_rows, cli.recovery);
        let simulated = simulate_success_rate(&mut rng, cli.writers, honest_rows, cli.recovery, cli.monte_carlo_trials);
        let mark = if size == n { "  <- required" } else { "" };
        println!("{size:>10} {predicted:>10.4} {simulated:>10.4}{mark}");
    }
    Ok(())
}
