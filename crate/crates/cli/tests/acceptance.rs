//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Seeds are fixed.

use std::process::{Command, ExitCode};
use std::time::Instant;

use kademlia_rid::experiments::harness::brute_force_comparison;
use kademlia_rid::experiments::{convergence_study, oracle_comparison, subtree_size_study, ExperimentConfig};
use kademlia_rid::idspace::{generate_ids, rotate, xor_distance, NodeId};
use kademlia_rid::lookup::{final_node_optimality_check, search, Halt};
use kademlia_rid::theory::{first_crossing, harmonic, mu, mu_bounds, truncate_sequence, DEFAULT_TOL};
use kademlia_rid::trie::log2_real;
use kademlia_rid::{BucketMode, IdTrie};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Worker threads for the heavy runs; results do not depend on it.
const THREADS: usize = 0;

/// Published rows: k, 1/mu_k, ln2/H_k.
const TABLE: [(u32, f64, f64); 10] = [
    (1, 0.5000000000, 0.6931471806),
    (2, 0.3750000000, 0.4620981204),
    (3, 0.3181818182, 0.3780802804),
    (4, 0.2853260870, 0.3327106467),
    (5, 0.2635627530, 0.3035681083),
    (6, 0.2478426396, 0.2829172166),
    (7, 0.2358018447, 0.2673294911),
    (8, 0.2261891923, 0.2550344423),
    (9, 0.2182781689, 0.2450176596),
    (10, 0.2116151616, 0.2366523364),
];

fn kadrid(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_kadrid")).args(args).output().expect("binary runs")
}

type Check = Result<String, String>;

fn table_reproduction() -> Check {
    let started = Instant::now();
    let o = kadrid(&["mu-table", "--kmax", "10"]);
    let secs = started.elapsed().as_secs_f64();
    let text = String::from_utf8(o.stdout).map_err(|e| e.to_string())?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("k,"))
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    if rows.len() != 10 {
        return Err(format!("expected 10 rows, got {}", rows.len()));
    }
    let mut worst = (0.0f64, String::new());
    for (row, &(k, inv_mu, ratio)) in rows.iter().zip(&TABLE) {
        for (col, got, want) in [("1/mu", row[1], inv_mu), ("ln2/H", row[2], ratio)] {
            let err = (got - want).abs();
            if err > worst.0 {
                worst = (err, format!("k={k} {col}: got {got:.10} published {want:.10}"));
            }
        }
    }
    let msg = format!("max abs error {:.3e} ({}), runtime {secs:.3} s", worst.0, worst.1);
    if worst.0 < 5e-11 && secs < 1.0 && o.status.success() {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn mu_bounds_check() -> Check {
    for k in 1..=1000 {
        let m = mu(k, DEFAULT_TOL).map_err(|e| e.to_string())?.mu;
        let (lo, hi) = mu_bounds(k);
        if !(lo <= m && m <= hi) {
            return Err(format!("k={k}: mu={m} outside [{lo}, {hi}]"));
        }
    }
    let ratio = mu(1000, DEFAULT_TOL).unwrap().mu / 1000f64.log2();
    let msg = format!("bounds hold for k=1..1000, mu_1000/log2(1000) = {ratio:.4}, H_1000 = {:.4}", harmonic(1000));
    if (0.9..=1.1).contains(&ratio) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn slope_check() -> Check {
    let ns = [1 << 14, 1 << 17, 1 << 20];
    let mut parts = Vec::new();
    let mut ok = true;
    for k in [1usize, 3] {
        let target = 1.0 / mu(k as u32, DEFAULT_TOL).unwrap().mu;
        let base = ExperimentConfig::new(ns[0], k, 2000, 2024);
        let r = convergence_study(&ns, &base, THREADS).map_err(|e| e.to_string())?;
        ok &= (r.fit.slope - target).abs() <= 0.05;
        parts.push(format!("k={k} slope {:.4} ± {:.4} (target {target:.4})", r.fit.slope, r.fit.se));
    }
    let msg = parts.join(", ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn oracle_identity() -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for (k, seed) in [(1u32, 301u64), (3, 303)] {
        let r = oracle_comparison(30, k, 100_000, seed).map_err(|e| e.to_string())?;
        ok &= r.chi_square.p_value > 0.01 && r.z.abs() <= 3.0;
        parts.push(format!("k={k} p={:.4} z={:+.2}", r.chi_square.p_value, r.z));
    }
    let msg = parts.join(", ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn subtree_law() -> Check {
    let s = subtree_size_study(1 << 16, 1000, 8, 1616, THREADS).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut fails = Vec::new();
    for (kind, levels) in [("merged", &s.merged), ("raw", &s.raw)] {
        for l in levels.iter() {
            let mean_ok = (l.mean - l.expected).abs() <= 3.0 * l.se;
            let var_ok = l.variance <= 1.1 * l.mean;
            if !(mean_ok && var_ok) {
                ok = false;
                fails.push(format!("{kind} j={} mean {:.2} exp {:.2} se {:.3} var {:.1}", l.j, l.mean, l.expected, l.se, l.variance));
            }
        }
    }
    let msg = format!(
        "J={} merged levels {}, raw levels {} checked{}",
        s.cutoff,
        s.merged.len(),
        s.raw.len(),
        if fails.is_empty() { String::new() } else { format!("; {}", fails.join("; ")) }
    );
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn tail_bound() -> Check {
    let n = 1usize << 20;
    let config = ExperimentConfig::new(n, 1, 1000, 4242);
    let s = kademlia_rid::experiments::run_search_experiment(&config, THREADS).map_err(|e| e.to_string())?;
    let bound = 4.0 * log2_real(n).log2() + 2.0;
    let msg = format!("mean T_tail {:.3} (se {:.3}), bound {bound:.3}, J={}", s.mean_tail, s.se_tail, s.cutoff);
    if s.mean_tail <= bound {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn brute_force() -> Check {
    let rows = brute_force_comparison(&[(4, 3, 1), (8, 4, 1), (8, 4, 2)], 100_000, 777, THREADS)
        .map_err(|e| e.to_string())?;
    let ok = rows.iter().all(|r| r.z <= 3.0);
    let msg = rows
        .iter()
        .map(|r| format!("({},{},{}) exact {:.5} sim {:.5} z={:.2}", r.n, r.d, r.k, r.exact, r.mean, r.z))
        .collect::<Vec<_>>()
        .join(", ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn invariants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(55);

    // metric axioms on the numeric XOR distance
    for d in [8u32, 32, 64] {
        for _ in 0..10_000 {
            let x = NodeId::random(d, &mut rng).unwrap();
            let y = NodeId::random(d, &mut rng).unwrap();
            let z = NodeId::random(d, &mut rng).unwrap();
            let dist = |a: &NodeId, b: &NodeId| u128::from(xor_distance(a, b).unwrap().to_u64().unwrap());
            if dist(&x, &x) != 0 || dist(&x, &y) != dist(&y, &x) || (dist(&x, &y) == 0) != (x == y) {
                return Err(format!("metric axiom broken at d={d}"));
            }
            if dist(&x, &z) > dist(&x, &y) + dist(&y, &z) {
                return Err(format!("triangle inequality broken at d={d}"));
            }
        }
    }

    // traces: strict progress, T <= d, prefix optimality on empty buckets
    let mut searches = 0;
    for &(n, d) in &[(1usize << 10, 12u32), (1 << 10, 64), (1 << 12, 14), (1 << 12, 64)] {
        for k in [1usize, 2, 3] {
            for mode in [BucketMode::WithoutReplacement, BucketMode::WithReplacement] {
                for _ in 0..150 {
                    let trie = IdTrie::random(n, d, &mut rng).unwrap();
                    let y = NodeId::random(d, &mut rng).unwrap();
                    let start = rng.random_range(0..n);
                    let trace = search(&trie, start, &y, k, mode, &mut rng).unwrap();
                    searches += 1;
                    if trace.hops.windows(2).any(|w| w[1].ell <= w[0].ell) {
                        return Err("non-increasing prefix length in a trace".into());
                    }
                    if trace.steps() > d as usize {
                        return Err(format!("T={} exceeds d={d}", trace.steps()));
                    }
                    match trace.halt {
                        Halt::EmptyBucket if !final_node_optimality_check(&trie, &trace).unwrap() => {
                            return Err("empty-bucket halt at a node without the longest prefix".into())
                        }
                        Halt::TargetFound if trace.last().ell != d => return Err("target found without full prefix".into()),
                        _ => {}
                    }
                }
            }
        }
    }

    // rotation equivariance: same draws, rotated ids and target
    for trial in 0..500u64 {
        let (n, d) = if trial % 2 == 0 { (300, 10) } else { (2000, 64) };
        let ids = generate_ids(n, d, &mut rng).unwrap();
        let z = NodeId::random(d, &mut rng).unwrap();
        let y = NodeId::random(d, &mut rng).unwrap();
        let rotated: Vec<NodeId> = ids.iter().map(|x| rotate(x, &z).unwrap()).collect();
        let a = IdTrie::build(&ids).unwrap();
        let b = IdTrie::build(&rotated).unwrap();
        let start = rng.random_range(0..n);
        let k = 1 + (trial % 3) as usize;
        let ta = search(&a, start, &y, k, BucketMode::default(), &mut ChaCha8Rng::seed_from_u64(trial)).unwrap();
        let tb = search(&b, start, &rotate(&y, &z).unwrap(), k, BucketMode::default(), &mut ChaCha8Rng::seed_from_u64(trial))
            .unwrap();
        if ta.hops != tb.hops || ta.halt != tb.halt {
            return Err(format!("rotation changed the trace in trial {trial}"));
        }
    }

    // truncation identity on random sequences
    for _ in 0..10_000 {
        let len = rng.random_range(0..40);
        let w: Vec<u64> = (0..len).map(|_| rng.random_range(0..20)).collect();
        let budget = rng.random_range(1..200u64);
        let bar = truncate_sequence(&w, budget);
        if first_crossing(&w, budget) != first_crossing(&bar, budget) {
            return Err(format!("crossing index differs for w={w:?} M={budget}"));
        }
        let mut acc = 0;
        for &b in &bar {
            acc += b;
            if acc > budget {
                return Err("truncated sequence overshoots".into());
            }
        }
        if let Some(t) = first_crossing(&w, budget) {
            if bar[..=t].iter().sum::<u64>() != budget {
                return Err("truncated sum misses the budget at the crossing".into());
            }
        }
    }
    Ok(format!("metric 3x10^4, traces {searches}, rotations 500, truncations 10^4"))
}

fn determinism() -> Check {
    let runs: &[&[&str]] = &[
        &["mu-table", "--kmax", "25"],
        &["simulate", "--n", "2^12", "--k", "3", "--trials", "400", "--seed", "8", "--start", "uniform", "--target", "uniform"],
        &["simulate", "--n", "2^10", "--trials", "200", "--seed", "8", "--mode", "with", "--source", "perfect"],
        &["converge", "--n-list", "2^8,2^10,2^12", "--trials", "300", "--seed", "9"],
        &["goodness", "--n-list", "2^10,2^12", "--trials", "200", "--seed", "10"],
        &["oracle-compare", "--jmax", "30", "--k", "3", "--samples", "20000", "--seed", "11"],
        &["brute-check", "--trials", "5000", "--seed", "12"],
    ];
    let mut compared = 0;
    for args in runs {
        let reference = kadrid(&[args, &["--threads", "1"][..]].concat());
        for threads in ["1", "2", "4", "0"] {
            let o = kadrid(&[args, &["--threads", threads][..]].concat());
            compared += 1;
            if o.stdout != reference.stdout || o.status.code() != reference.status.code() {
                return Err(format!("{} differs with --threads {threads}", args[0]));
            }
        }
    }
    Ok(format!("{} subcommand runs, {compared} byte comparisons", runs.len()))
}

fn main() -> ExitCode {
    let checks: [(&str, fn() -> Check); 9] = [
        ("table reproduction", table_reproduction),
        ("mu_k bounds", mu_bounds_check),
        ("slope of mean T", slope_check),
        ("level chain vs renewal identity", oracle_identity),
        ("subtree-size law", subtree_law),
        ("tail bound", tail_bound),
        ("brute-force oracle", brute_force),
        ("invariant suite", invariants),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let started = Instant::now();
        let result = check();
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(msg) => println!("PASS  {name}: {msg} [{secs:.1} s]"),
            Err(msg) => {
                failed += 1;
                println!("FAIL  {name}: {msg} [{secs:.1} s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
