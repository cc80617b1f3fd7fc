//! Throughput harness: an in-process cluster driven closed-loop, with the
//! raw PRG rate measured alongside as the ceiling.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::client::{choose_row, make_write_request};
use crate::error::{invalid, Result};
use crate::prg::prg_xor_into;
use crate::server::{Context, EpochConfig, EpochPolicy};
use crate::sim::{Clock, Cluster};
use crate::wire::Status;

/// Keystream bytes per second for one thread.
pub fn prg_throughput(min: Duration) -> f64 {
    let mut buf = vec![0u8; 1 << 20];
    let seed = [7u8; 16];
    let start = Instant::now();
    let mut bytes = 0u64;
    while start.elapsed() < min || bytes == 0 {
        prg_xor_into(&seed, &mut buf);
        bytes += buf.len() as u64;
    }
    bytes as f64 / start.elapsed().as_secs_f64()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchSpec {
    pub config: EpochConfig,
    /// Stop after this much server time.
    pub duration: Duration,
    /// Or after this many decided requests, whichever comes first.
    pub max_requests: Option<usize>,
    /// Requests kept in flight.
    pub concurrency: usize,
    pub seed: u64,
}

impl BenchSpec {
    pub fn new(config: EpochConfig, duration: Duration) -> Self {
        BenchSpec { config, duration, max_requests: None, concurrency: 4, seed: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: usize,
    pub row_bytes: usize,
    pub x: usize,
    pub y: usize,
    pub servers: usize,
    /// One server's table.
    pub table_bytes: usize,
    pub key_bytes: usize,
    pub accepted: u64,
    pub rejected: u64,
    /// Time spent inside the servers and auditor, client work excluded.
    pub server_seconds: f64,
    pub requests_per_sec: f64,
    /// Full-domain evaluation output, summed over servers.
    pub eval_bytes_per_sec: f64,
    pub latency_ms_p50: f64,
    pub latency_ms_p90: f64,
    pub latency_ms_p99: f64,
    pub prg_bytes_per_sec: f64,
    /// PRG rate over table bytes.
    pub ceiling_requests_per_sec: f64,
}

impl BenchReport {
    /// How far below the PRG ceiling the measured rate sits.
    pub fn ceiling_ratio(&self) -> f64 {
        self.ceiling_requests_per_sec / self.requests_per_sec.max(f64::MIN_POSITIVE)
    }

    pub fn render(&self) -> String {
        format!(
            "rows {} ({}x{}), row {} B, {} servers, table {} B, key {} B\n\
             accepted {} rejected {} in {:.3} s server time\n\
             {:.2} req/s, eval {:.1} MB/s\n\
             latency p50 {:.2} ms, p90 {:.2} ms, p99 {:.2} ms\n\
             PRG {:.1} MB/s, ceiling {:.2} req/s ({:.2}x measured)\n",
            self.rows,
            self.x,
            self.y,
            self.row_bytes,
            self.servers,
            self.table_bytes,
            self.key_bytes,
            self.accepted,
            self.rejected,
            self.server_seconds,
            self.requests_per_sec,
            self.eval_bytes_per_sec / 1e6,
            self.latency_ms_p50,
            self.latency_ms_p90,
            self.latency_ms_p99,
            self.prg_bytes_per_sec / 1e6,
            self.ceiling_requests_per_sec,
            self.ceiling_ratio(),
        )
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let i = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[i]
}

pub fn run_benchmark(spec: &BenchSpec) -> Result<BenchReport> {
    if spec.concurrency == 0 {
        return Err(invalid("concurrency must be at least 1"));
    }
    let mut config = spec.config.clone();
    // The harness measures intake; epochs never close underneath it.
    config.policy = EpochPolicy { max_requests: Some(u64::MAX), duration_ms: None };
    let ctx = Arc::new(Context::new(config)?);
    let mut cluster = Cluster::new(ctx.clone(), spec.seed, Clock::Virtual)?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let cap = ctx.format.capacity();

    let mut busy = Duration::ZERO;
    let mut in_flight: BTreeMap<u64, Duration> = BTreeMap::new();
    let mut next = 0u64;
    let (mut accepted, mut rejected) = (0u64, 0u64);
    let mut latencies = Vec::new();
    let limit = spec.max_requests.unwrap_or(usize::MAX);
    let mut decided = 0usize;

    loop {
        while in_flight.len() < spec.concurrency && decided + in_flight.len() < limit && busy < spec.duration {
            let row = choose_row(&mut rng, ctx.geometry.rows)?;
            let mut msg = vec![0u8; cap.min(32)];
            rng.fill_bytes(&mut msg);
            *msg.last_mut().expect("nonempty") |= 1;
            let bundle = make_write_request(&mut rng, &ctx, cluster.epoch(), row, &msg)?;
            cluster.submit(next, &bundle, cluster.now());
            in_flight.insert(next, busy);
            next += 1;
        }
        if in_flight.is_empty() {
            break;
        }
        let t = Instant::now();
        let progressed = cluster.step(u64::MAX);
        busy += t.elapsed();
        if !progressed {
            return Err(invalid("cluster stalled with requests in flight"));
        }
        let done: Vec<(u64, Status)> = in_flight.keys().filter_map(|c| cluster.outcome(*c).map(|s| (*c, s))).collect();
        for (c, s) in done {
            let t0 = in_flight.remove(&c).expect("in flight");
            latencies.push((busy - t0).as_secs_f64() * 1e3);
            decided += 1;
            if s == Status::Accepted {
                accepted += 1;
            } else {
                rejected += 1;
            }
        }
    }

    latencies.sort_by(|a, b| a.total_cmp(b));
    let g = ctx.geometry;
    let table_bytes = g.table_elems() * ctx.table_kind().elem_bytes();
    let secs = busy.as_secs_f64().max(1e-9);
    let prg = prg_throughput(Duration::from_millis(200));
    Ok(BenchReport {
        rows: g.rows,
        row_bytes: ctx.config.row_bytes,
        x: g.x,
        y: g.y,
        servers: ctx.servers(),
        table_bytes,
        key_bytes: ctx.key_len(),
        accepted,
        rejected,
        server_seconds: secs,
        requests_per_sec: accepted as f64 / secs,
        eval_bytes_per_sec: (accepted as f64) * (ctx.servers() * table_bytes) as f64 / secs,
        latency_ms_p50: percentile(&latencies, 0.5),
        latency_ms_p90: percentile(&latencies, 0.9),
        latency_ms_p99: percentile(&latencies, 0.99),
        prg_bytes_per_sec: prg,
        ceiling_requests_per_sec: prg / table_bytes as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_are_deterministic() {
        let mut s = BenchSpec::new(EpochConfig::two_server(256, 32, false), Duration::from_secs(60));
        s.max_requests = Some(10);
        let a = run_benchmark(&s).unwrap();
        let b = run_benchmark(&s).unwrap();
        assert_eq!((a.accepted, a.rejected), (10, 0));
        assert_eq!((b.accepted, b.rejected), (10, 0));
        assert!(a.requests_per_sec > 0.0 && a.prg_bytes_per_sec > 0.0);
    }
}
