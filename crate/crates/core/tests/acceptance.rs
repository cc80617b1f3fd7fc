//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines always reach the terminal.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use riposte_core::audit::{
    build_t_vector, build_u_vector, differing_positions, mask_and_rotate, u_vector_bytes, CoinFlip, Contribution,
    Phase, T_ELEM_BYTES,
};
use riposte_core::bench::{run_benchmark, BenchSpec};
use riposte_core::client::{choose_row, encode_row, share_row, Shares};
use riposte_core::codec::{decode_fp_row, decode_xor_row, encode_fp_row, encode_xor_row, RowContent};
use riposte_core::collision::{required_table_size, SizingQuery, CELL_DATA_BYTES};
use riposte_core::dpf::{
    dpf2_eval_full, dpf2_gen, dpfs_eval_full, dpfs_gen, optimize_geometry, toy_eval, toy_gen, Dpf2Key, Geometry,
    PointFunction, Role,
};
use riposte_core::group::{GroupKind, PedersenParams, Schnorr64};
use riposte_core::payload::{FpPayload, GroupPayload, Payload, SeededPayload, Xor};
use riposte_core::server::{validate_pair, validate_zk, Context, EpochConfig, EpochPolicy};
use riposte_core::sim::{malicious_shares, run_simulation, Mutation, SimSpec};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(t: Duration, secs: u64) -> bool {
    t < Duration::from_secs(secs)
}

fn square(rows: usize, row_elems: usize) -> Geometry {
    let x = (rows as f64).sqrt().ceil() as usize;
    Geometry::new(rows, x, rows.div_ceil(x), row_elems).unwrap()
}

fn point_table<P: Payload>(rows: usize, at: usize, m: &[P::Elem]) -> Vec<P::Elem> {
    let w = m.len();
    let mut t = vec![P::zero(); rows * w];
    t[at * w..(at + 1) * w].copy_from_slice(m);
    t
}

fn check_toy<P: SeededPayload>(rng: &mut ChaCha20Rng, g: &Geometry) -> usize {
    let mut bad = 0;
    for at in 0..g.rows {
        let m: Vec<P::Elem> = (0..g.row_elems).map(|_| P::random(rng)).collect();
        let keys = toy_gen::<P, _>(rng, g, &PointFunction::new(at, m.clone()), 3).unwrap();
        let mut sum = vec![P::zero(); g.rows * g.row_elems];
        for k in &keys {
            for r in 0..g.rows {
                P::add_into(&mut sum[r * g.row_elems..(r + 1) * g.row_elems], &toy_eval(k, r).unwrap());
            }
        }
        bad += (sum != point_table::<P>(g.rows, at, &m)) as usize;
    }
    bad
}

fn check_two<P: SeededPayload>(rng: &mut ChaCha20Rng, g: &Geometry) -> usize {
    let mut bad = 0;
    for at in 0..g.rows {
        let m: Vec<P::Elem> = (0..g.row_elems).map(|_| P::random(rng)).collect();
        let (a, b) = dpf2_gen(rng, g, &PointFunction::<P>::new(at, m.clone())).unwrap();
        let mut sum = dpf2_eval_full(&a, Role::A);
        P::add_into(&mut sum, &dpf2_eval_full(&b, Role::B));
        bad += (sum[..g.rows * g.row_elems] != point_table::<P>(g.rows, at, &m)[..]) as usize;
    }
    bad
}

fn check_many(rng: &mut ChaCha20Rng, g: &Geometry, servers: usize) -> usize {
    type P = GroupPayload<Schnorr64>;
    let params = PedersenParams::<Schnorr64>::derive(g.v_elems());
    let mut bad = 0;
    for at in 0..g.rows {
        let m: Vec<Schnorr64> = (0..g.row_elems).map(|_| P::random(rng)).collect();
        let gen = dpfs_gen(rng, &params, g, &PointFunction::<P>::new(at, m.clone()), servers).unwrap();
        let mut sum = vec![P::zero(); g.table_elems()];
        for k in &gen.keys {
            P::add_into(&mut sum, &dpfs_eval_full(&params, k));
        }
        bad += (sum[..g.rows * g.row_elems] != point_table::<P>(g.rows, at, &m)[..]) as usize;
    }
    bad
}

fn dpf_correctness() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    let mut cases = 0;
    let mut bad = 0;
    for rows in [16usize, 64, 256] {
        for g in [Geometry::optimized(rows, 4, 128, 32), square(rows, 4)] {
            bad += check_toy::<Xor>(&mut rng, &Geometry::new(rows, rows, 1, 4).unwrap());
            bad += check_two::<Xor>(&mut rng, &g);
            bad += check_two::<FpPayload>(&mut rng, &g);
            bad += check_many(&mut rng, &Geometry::new(rows, g.x, g.y, 2).unwrap(), 3);
            cases += 4 * rows;
        }
    }
    let el = t.elapsed();
    outcome(
        bad == 0 && within(el, 60),
        format!("{cases} (variant, shape, index) cases over L in {{16, 64, 256}}, {bad} mismatches, {:.1} s", el.as_secs_f64()),
    )
}

fn key_size() -> Outcome {
    let t = Instant::now();
    let rows = 1 << 20;
    let (x, y) = optimize_geometry(rows, 128, 8192);
    let g = Geometry::new(rows, x, y, 1024).unwrap();
    let predicted = Dpf2Key::<Xor>::serialized_len(&g);
    let mut rng = ChaCha20Rng::seed_from_u64(102);
    let (a, _) = dpf2_gen(&mut rng, &g, &PointFunction::<Xor>::new(12345, vec![7u8; 1024])).unwrap();
    let actual = a.to_bytes().len();
    let err = (actual as f64 - 263_000.0).abs() / 263_000.0;
    let el = t.elapsed();
    outcome(
        err < 0.01 && actual == predicted && within(el, 1),
        format!("x = {x}, y = {y}, key {actual} B vs 263 KB ({:+.3}%), {:.2} s", 100.0 * (actual as f64 / 263_000.0 - 1.0), el.as_secs_f64()),
    )
}

fn random_message<R: RngCore>(rng: &mut R, len: usize) -> Vec<u8> {
    let mut m = vec![0u8; len];
    rng.fill_bytes(&mut m);
    m[len - 1] |= 1;
    m
}

/// Fraction of writers whose message decodes at their row, averaged over
/// `epochs`, using the real row codec.
fn codec_success(rng: &mut ChaCha20Rng, m: usize, n: usize, recovery: bool, epochs: usize) -> f64 {
    let row_bytes: usize = 16;
    let cells = row_bytes.div_ceil(CELL_DATA_BYTES);
    let mut ok = 0usize;
    for _ in 0..epochs {
        let mut rows: BTreeMap<usize, Vec<Vec<u8>>> = BTreeMap::new();
        for _ in 0..m {
            rows.entry(rng.gen_range(0..n)).or_default().push(random_message(rng, 8));
        }
        for msgs in rows.values() {
            let content = if recovery {
                let mut acc = vec![FpPayload::zero(); 2 * (cells + 1)];
                for msg in msgs {
                    FpPayload::add_into(&mut acc, &encode_fp_row(msg, cells).unwrap());
                }
                decode_fp_row(&acc)
            } else {
                let mut acc = vec![0u8; row_bytes];
                for msg in msgs {
                    Xor::add_into(&mut acc, &encode_xor_row(msg, row_bytes).unwrap());
                }
                decode_xor_row(&acc)
            };
            let got = content.messages();
            ok += msgs.iter().filter(|msg| got.contains(&msg.as_slice())).count();
        }
    }
    ok as f64 / (m * epochs) as f64
}

fn table_sizing() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(103);
    let m = 1024;
    let n_plain = (19.5 * m as f64).round() as usize;
    let n_rec = (2.7 * m as f64).round() as usize;
    let plain = codec_success(&mut rng, m, n_plain, false, 200);
    let rec = codec_success(&mut rng, m, n_rec, true, 200);

    let n_req = required_table_size(&SizingQuery { writers: m, malicious: 0, target: 0.95, recovery: false }).unwrap();
    let config = EpochConfig::two_server(n_req, 8, false)
        .with_policy(EpochPolicy { max_requests: Some(1 << 30), duration_ms: None });
    let mut spec = SimSpec::new(config, m, 3);
    spec.message_bytes = Some(6);
    let sim = run_simulation(&spec).unwrap();
    let el = t.elapsed();
    let ok = |r: f64| (r - 0.95).abs() <= 0.02;
    outcome(
        ok(plain) && ok(rec) && ok(sim.success_rate) && within(el, 300),
        format!(
            "m = 1024 over 200 epochs: n = {n_plain} plain {plain:.4}, n = {n_rec} coded {rec:.4}; \
             cluster at required n = {n_req}: {:.4}; {:.1} s",
            sim.success_rate,
            el.as_secs_f64()
        ),
    )
}

fn collision_recovery() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(104);
    let cells = 32;
    let cap = cells * CELL_DATA_BYTES - 1;
    let mut pair_bad = 0;
    for _ in 0..10_000 {
        let len = rng.gen_range(1..=cap);
        let a = random_message(&mut rng, len);
        let b = loop {
            let len = rng.gen_range(1..=cap);
            let b = random_message(&mut rng, len);
            if b != a {
                break b;
            }
        };
        let mut acc = encode_fp_row(&a, cells).unwrap();
        FpPayload::add_into(&mut acc, &encode_fp_row(&b, cells).unwrap());
        let good = match decode_fp_row(&acc) {
            RowContent::Pair(x, y) => (x == a && y == b) || (x == b && y == a),
            _ => false,
        };
        pair_bad += (!good) as usize;
    }
    let mut silent = 0;
    let mut flagged = 0;
    for _ in 0..1_000 {
        let mut acc = vec![FpPayload::zero(); 2 * (cells + 1)];
        for _ in 0..3 {
            let len = rng.gen_range(1..=cap);
            FpPayload::add_into(&mut acc, &encode_fp_row(&random_message(&mut rng, len), cells).unwrap());
        }
        match decode_fp_row(&acc) {
            RowContent::Unrecoverable => flagged += 1,
            _ => silent += 1,
        }
    }
    let el = t.elapsed();
    outcome(
        pair_bad == 0 && silent == 0 && within(el, 30),
        format!(
            "10^4 pairs: {pair_bad} wrong; 10^3 triples: {flagged} flagged unrecoverable, {silent} decoded as messages; {:.1} s",
            el.as_secs_f64()
        ),
    )
}

/// Whether every server accepts `shares` as a two-server write.
fn audit_accepts(rng: &mut ChaCha20Rng, ctx: &Context, shares: &Shares) -> bool {
    let (Ok(a), Ok(b)) = (ctx.parse_key(&shares.keys[0], 0), ctx.parse_key(&shares.keys[1], 1)) else {
        return false;
    };
    validate_pair(rng, 0, &shares.nonce(0), a, b).is_ok()
}

fn audit_sound() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(105);
    let ctx = Context::new(EpochConfig::two_server(1024, 160, false)).unwrap();
    let mut honest_ok = 0;
    for _ in 0..10_000 {
        let row = choose_row(&mut rng, 1024).unwrap();
        let msg = random_message(&mut rng, 40);
        let shares = share_row(&mut rng, &ctx, 0, row, encode_row(&ctx, &msg).unwrap()).unwrap();
        honest_ok += audit_accepts(&mut rng, &ctx, &shares) as usize;
    }
    let muts = Mutation::applicable(&ctx);
    let mut accepted: BTreeMap<String, usize> = BTreeMap::new();
    for i in 0..100_000 {
        let m = muts[i % muts.len()];
        let row = choose_row(&mut rng, 1024).unwrap();
        let shares = malicious_shares(&mut rng, &ctx, 0, row, m).unwrap();
        let e = accepted.entry(format!("{m:?}")).or_default();
        *e += audit_accepts(&mut rng, &ctx, &shares) as usize;
    }
    let bad: usize = accepted.values().sum();
    let el = t.elapsed();
    outcome(
        honest_ok == 10_000 && bad == 0 && within(el, 600),
        format!(
            "L = 1024: {honest_ok}/10000 honest accepted, {bad}/100000 mutated accepted across {} mutation kinds {:?}; {:.1} s",
            muts.len(),
            accepted,
            el.as_secs_f64()
        ),
    )
}

fn chi_square_p(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    let want = total as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - want).powi(2) / want).sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
}

fn auditor_leakage() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(106);
    let g = Geometry::new(1024, 32, 32, 4).unwrap();
    let at = 517;
    let mut t_counts = vec![0usize; g.x];
    let mut u_counts = vec![0usize; g.y];
    let mut malformed = 0;
    for _ in 0..10_000 {
        let (a, b) = dpf2_gen(&mut rng, &g, &PointFunction::<Xor>::new(at, vec![1, 2, 3, 4])).unwrap();
        let nonce: [u8; 16] = rng.gen();
        let cf = CoinFlip::from_contributions(&Contribution::random(&mut rng), &Contribution::random(&mut rng), &nonce);
        let ta = mask_and_rotate(&build_t_vector(&a), T_ELEM_BYTES, &cf, Phase::T);
        let tb = mask_and_rotate(&build_t_vector(&b), T_ELEM_BYTES, &cf, Phase::T);
        let w = g.row_elems;
        let ua = mask_and_rotate(&u_vector_bytes::<Xor>(&build_u_vector(&a)), w, &cf, Phase::U);
        let ub = mask_and_rotate(&u_vector_bytes::<Xor>(&build_u_vector(&b)), w, &cf, Phase::U);
        match (&differing_positions(&ta, &tb)[..], &differing_positions(&ua, &ub)[..]) {
            ([i], [j]) => {
                t_counts[*i] += 1;
                u_counts[*j] += 1;
            }
            _ => malformed += 1,
        }
    }
    let (pt, pu) = (chi_square_p(&t_counts), chi_square_p(&u_counts));
    let el = t.elapsed();
    outcome(
        pt > 0.01 && pu > 0.01 && malformed == 0,
        format!(
            "fixed row {at}, 10^4 audits: t index over Z_{} p = {pt:.3}, u index over Z_{} p = {pu:.3}; {:.1} s",
            g.x,
            g.y,
            el.as_secs_f64()
        ),
    )
}

/// Whether every server accepts `shares` as a proved many-server write.
fn zk_accepts(ctx: &Context, shares: &Shares) -> bool {
    let Some((common, openings)) = &shares.zk else { return false };
    (0..ctx.servers()).all(|i| match ctx.parse_key(&shares.keys[i], i) {
        Ok(k) => validate_zk(ctx, 0, i, k, common, &openings[i]).is_ok(),
        Err(_) => false,
    })
}

fn zk_validity() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(107);
    let ctx = Context::new(EpochConfig::many_server(64, 12, 3, GroupKind::Schnorr64)).unwrap();
    let mut honest_ok = 0;
    for _ in 0..1_000 {
        let row = choose_row(&mut rng, 64).unwrap();
        let msg = random_message(&mut rng, 8);
        let shares = share_row(&mut rng, &ctx, 0, row, encode_row(&ctx, &msg).unwrap()).unwrap();
        honest_ok += zk_accepts(&ctx, &shares) as usize;
    }
    let muts = Mutation::applicable(&ctx);
    let mut accepted: BTreeMap<String, usize> = BTreeMap::new();
    for i in 0..10_000 {
        let m = muts[i % muts.len()];
        let row = choose_row(&mut rng, 64).unwrap();
        let shares = malicious_shares(&mut rng, &ctx, 0, row, m).unwrap();
        *accepted.entry(format!("{m:?}")).or_default() += zk_accepts(&ctx, &shares) as usize;
    }
    let bad: usize = accepted.values().sum();
    let el = t.elapsed();
    outcome(
        honest_ok == 1_000 && bad == 0 && within(el, 600),
        format!(
            "small group, 3 servers, L = 64: {honest_ok}/1000 honest verified, {bad}/10000 mutated accepted; {:.1} s",
            el.as_secs_f64()
        ),
    )
}

fn trial_config(i: usize) -> EpochConfig {
    match i % 3 {
        0 => EpochConfig::two_server(64, 12, false),
        1 => EpochConfig::two_server(48, 12, true),
        _ => EpochConfig::many_server(32, 8, 3, GroupKind::Schnorr64),
    }
}

fn disruption_game() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(108);
    let mut worst = 0usize;
    let mut failures = 0;
    let mut malicious_total = 0;
    for i in 0..100 {
        let honest = rng.gen_range(0..12);
        let n = rng.gen_range(1..=10);
        let mut spec = SimSpec::new(trial_config(i), honest + n, 1000 + i as u64);
        spec.malicious_fraction = n as f64 / (honest + n) as f64;
        spec.latency_ms = 3;
        spec.jitter_ms = 4;
        let r = run_simulation(&spec).unwrap();
        let e = &r.epochs[0];
        malicious_total += e.malicious;
        // Rows not explained by the honest writes are the adversary's.
        let rogue = e.oracle_mismatch_rows;
        worst = worst.max(rogue);
        if e.malicious != n || rogue > n || e.malicious_accepted > 0 {
            failures += 1;
        }
    }
    let el = t.elapsed();
    outcome(
        failures == 0,
        format!(
            "100 trials, {malicious_total} malicious writers: {failures} trials over budget, most adversarial rows in a trial {worst}; {:.1} s",
            el.as_secs_f64()
        ),
    )
}

fn correctness_game() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(109);
    let mut epochs = 0;
    let mut mismatched = 0;
    let mut accepted = 0;
    for i in 0..25 {
        let mut spec = SimSpec::new(trial_config(i), rng.gen_range(1..24), 2000 + i as u64);
        spec.cover = rng.gen_range(0..4);
        spec.epochs = 4;
        spec.latency_ms = rng.gen_range(0..10);
        spec.jitter_ms = rng.gen_range(0..10);
        let r = run_simulation(&spec).unwrap();
        for e in &r.epochs {
            epochs += 1;
            accepted += e.honest_accepted + e.cover_accepted;
            mismatched += (e.oracle_mismatch_rows > 0 || e.honest_accepted != e.honest) as usize;
        }
    }
    let el = t.elapsed();
    outcome(
        epochs == 100 && mismatched == 0,
        format!("{epochs} epochs, {accepted} accepted writes: {mismatched} epochs differ from the oracle; {:.1} s", el.as_secs_f64()),
    )
}

fn throughput(prior_ok: bool) -> Outcome {
    let mut lines = Vec::new();
    let mut rates = Vec::new();
    let mut last = None;
    for log in [12u32, 14, 16] {
        let mut spec = BenchSpec::new(EpochConfig::two_server(1 << log, 160, false), Duration::from_secs(20));
        spec.max_requests = Some(if log == 16 { 40 } else { 100 });
        let r = run_benchmark(&spec).unwrap();
        lines.push(format!("L = 2^{log}: {:.1} req/s", r.requests_per_sec));
        rates.push(r.requests_per_sec);
        last = Some(r);
    }
    let r = last.unwrap();
    let ratio = r.ceiling_ratio();
    let monotone = rates.windows(2).all(|w| w[1] < w[0]);
    outcome(
        (1.0..=10.0).contains(&ratio) && monotone && prior_ok,
        format!(
            "{}; at 2^16 the PRG ceiling is {:.1} req/s ({:.0} MB/s over {} B), measured {:.2}x below it; properties 1-9 {}",
            lines.join(", "),
            r.ceiling_requests_per_sec,
            r.prg_bytes_per_sec / 1e6,
            r.table_bytes,
            ratio,
            if prior_ok { "pass" } else { "fail" }
        ),
    )
}

fn main() {
    // `cargo test -- <filter>` passes through; honor a numeric filter.
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("DPF correctness", dpf_correctness),
        ("key size", key_size),
        ("table sizing", table_sizing),
        ("collision recovery", collision_recovery),
        ("audit completeness/soundness", audit_sound),
        ("auditor leakage", auditor_leakage),
        ("ZK validity proofs", zk_validity),
        ("disruption resistance", disruption_game),
        ("correctness game", correctness_game),
    ];
    let mut all = true;
    let mut failed = 0;
    let mut show = |i: usize, name: &str, o: Outcome| {
        println!("criterion {i:>2} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
        o.pass
    };
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        all &= show(i + 1, name, f());
    }
    if only.is_none() || only == Some(10) {
        show(10, "throughput vs PRG ceiling", throughput(all));
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
