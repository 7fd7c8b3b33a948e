//! Monte Carlo trial orchestration.
//!
//! Trial `t` of a run with master seed `s` draws all of its randomness from
//! `ChaCha8Rng::seed_from_u64(s)` on stream `t`, so results do not depend on
//! which worker runs which trial. Workers return records that are collected in
//! trial order.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::stats::{chi_square_two_sample, histogram, moments, ols_slope, wilson_interval, ChiSquareReport, SlopeFit};
use crate::error::{invalid, Result};
use crate::idspace::{default_dim, min_dim, NodeId, MAX_BITS};
use crate::lookup::{search, split_head_tail, Halt};
use crate::routing::BucketMode;
use crate::theory::{level_chain_search, renewal_tau, LevelChainParams};
use crate::trie::{
    almost_perfect_sizes, build_synthetic_trie, compute_cutoff, expected_size, is_good, log2_real,
    perfect_sizes, target_partition, IdTrie,
};

/// Stream used for draws shared by every trial (the fixed trie).
const SHARED_STREAM: u64 = u64::MAX;

/// Rng for trial `trial` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of a sub-experiment labelled `tag` (for instance one `n` of a sweep).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix(seed ^ mix(tag))
}

/// Runs `f(0..count)` on `threads` workers (0 picks the rayon default) and
/// returns the results in index order.
pub fn run_indexed<T, F>(count: usize, threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if threads == 1 {
        return (0..count).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;
    pool.install(|| (0..count).into_par_iter().map(f).collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TrieSource {
    #[default]
    Random,
    Perfect,
    AlmostPerfect,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TargetMode {
    #[default]
    AllOnes,
    Uniform,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StartMode {
    #[default]
    Node0,
    Uniform,
}

macro_rules! named_enum {
    ($t:ty { $($v:ident => $s:literal),* $(,)? }) => {
        impl $t {
            pub fn name(&self) -> &'static str {
                match self { $(Self::$v => $s),* }
            }
        }
        impl std::str::FromStr for $t {
            type Err = crate::error::Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok(Self::$v),)*
                    _ => Err(invalid(format!("unknown value {s:?}, expected one of: {}", [$($s),*].join(", ")))),
                }
            }
        }
    };
}

named_enum!(TrieSource { Random => "random", Perfect => "perfect", AlmostPerfect => "almost-perfect" });
named_enum!(TargetMode { AllOnes => "ones", Uniform => "uniform" });
named_enum!(StartMode { Node0 => "node0", Uniform => "uniform" });
named_enum!(BucketMode { WithoutReplacement => "without", WithReplacement => "with" });

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub d: u32,
    pub k: usize,
    pub trials: usize,
    pub seed: u64,
    pub mode: BucketMode,
    pub source: TrieSource,
    pub target: TargetMode,
    pub start: StartMode,
    /// Reuse one trie (and target) for all trials; only buckets and start vary.
    pub fixed_trie: bool,
}

impl ExperimentConfig {
    /// Fresh random tries, target all ones, start at node 0, `d` from [`default_dim`].
    pub fn new(n: usize, k: usize, trials: usize, seed: u64) -> Self {
        Self {
            n,
            d: default_dim(n),
            k,
            trials,
            seed,
            mode: BucketMode::default(),
            source: TrieSource::default(),
            target: TargetMode::default(),
            start: StartMode::default(),
            fixed_trie: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("n must be positive"));
        }
        if self.d == 0 || self.d > MAX_BITS {
            return Err(invalid(format!("d must be in 1..={MAX_BITS}, got {}", self.d)));
        }
        if self.d < min_dim(self.n) {
            return Err(invalid(format!("d = {} cannot hold {} distinct ids", self.d, self.n)));
        }
        if self.k == 0 {
            return Err(invalid("k must be positive"));
        }
        if self.trials == 0 {
            return Err(invalid("trials must be positive"));
        }
        if self.source != TrieSource::Random {
            if self.n < 2 {
                return Err(invalid("synthetic tries need n >= 2"));
            }
            let cutoff = compute_cutoff(self.n)?;
            if cutoff > self.d {
                return Err(invalid(format!("cutoff {cutoff} exceeds d = {}", self.d)));
            }
            match self.source {
                TrieSource::Perfect => drop(perfect_sizes(self.n, cutoff)?),
                _ => drop(almost_perfect_sizes(self.n, cutoff)?),
            }
        }
        Ok(())
    }

    /// `key=value` lines describing the run.
    pub fn describe(&self) -> Vec<(&'static str, String)> {
        vec![
            ("n", self.n.to_string()),
            ("d", self.d.to_string()),
            ("k", self.k.to_string()),
            ("trials", self.trials.to_string()),
            ("seed", self.seed.to_string()),
            ("mode", self.mode.name().into()),
            ("source", self.source.name().into()),
            ("target", self.target.name().into()),
            ("start", self.start.name().into()),
            ("fixed_trie", self.fixed_trie.to_string()),
        ]
    }

    fn cutoff(&self) -> u32 {
        compute_cutoff(self.n).unwrap_or(0)
    }

    fn draw_target<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<NodeId> {
        match self.target {
            TargetMode::AllOnes => NodeId::ones(self.d),
            TargetMode::Uniform => NodeId::random(self.d, rng),
        }
    }

    fn draw_trie<R: Rng + ?Sized>(&self, y: &NodeId, rng: &mut R) -> Result<IdTrie> {
        match self.source {
            TrieSource::Random => IdTrie::random(self.n, self.d, rng),
            TrieSource::Perfect => build_synthetic_trie(&perfect_sizes(self.n, self.cutoff())?, y, self.d, rng),
            TrieSource::AlmostPerfect => {
                build_synthetic_trie(&almost_perfect_sizes(self.n, self.cutoff())?, y, self.d, rng)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrialRecord {
    pub trial: usize,
    pub t: usize,
    pub head: usize,
    pub tail: usize,
    pub halt: Halt,
    pub good: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialSummary {
    pub config: ExperimentConfig,
    pub cutoff: u32,
    pub records: Vec<TrialRecord>,
    pub mean: f64,
    pub variance: f64,
    pub se: f64,
    pub mean_tail: f64,
    pub se_tail: f64,
    /// `histogram[t]` trials took `t` steps.
    pub histogram: Vec<u64>,
    pub bad: usize,
}

/// Ten significant digits.
pub fn fmt_sig(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.9e}")
    } else {
        format!("{x}")
    }
}

impl TrialSummary {
    fn from_records(config: ExperimentConfig, records: Vec<TrialRecord>) -> Self {
        let ts: Vec<f64> = records.iter().map(|r| r.t as f64).collect();
        let tails: Vec<f64> = records.iter().map(|r| r.tail as f64).collect();
        let m = moments(&ts);
        let mt = moments(&tails);
        let steps: Vec<u64> = records.iter().map(|r| r.t as u64).collect();
        TrialSummary {
            cutoff: config.cutoff(),
            config,
            mean: m.mean,
            variance: m.variance,
            se: m.se,
            mean_tail: mt.mean,
            se_tail: mt.se,
            histogram: histogram(&steps),
            bad: records.iter().filter(|r| !r.good).count(),
            records,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("trial,T,T_head,T_tail,halt,good\n");
        for r in &self.records {
            writeln!(out, "{},{},{},{},{},{}", r.trial, r.t, r.head, r.tail, r.halt, r.good).unwrap();
        }
        out
    }

    pub fn to_json(&self) -> String {
        let c = &self.config;
        let hist: Vec<String> = self.histogram.iter().map(u64::to_string).collect();
        format!(
            "{{\"n\":{},\"d\":{},\"k\":{},\"trials\":{},\"seed\":{},\"J\":{},\"mean\":{},\"var\":{},\"se\":{},\"mean_tail\":{},\"se_tail\":{},\"bad\":{},\"histogram\":[{}]}}\n",
            c.n,
            c.d,
            c.k,
            c.trials,
            c.seed,
            self.cutoff,
            fmt_sig(self.mean),
            fmt_sig(self.variance),
            fmt_sig(self.se),
            fmt_sig(self.mean_tail),
            fmt_sig(self.se_tail),
            self.bad,
            hist.join(",")
        )
    }
}

fn run_trial(config: &ExperimentConfig, shared: Option<&(NodeId, IdTrie)>, trial: usize) -> Result<TrialRecord> {
    let mut rng = trial_rng(config.seed, trial as u64);
    let owned;
    let (y, trie) = match shared {
        Some((y, trie)) => (y, trie),
        None => {
            let y = config.draw_target(&mut rng)?;
            let trie = config.draw_trie(&y, &mut rng)?;
            owned = (y, trie);
            (&owned.0, &owned.1)
        }
    };
    let start = match config.start {
        StartMode::Node0 => 0,
        StartMode::Uniform => rng.random_range(0..config.n),
    };
    let trace = search(trie, start, y, config.k, config.mode, &mut rng)?;
    let cutoff = config.cutoff();
    let split = split_head_tail(&trace, cutoff);
    let good = config.n < 2 || is_good(&target_partition(trie, y)?).good;
    Ok(TrialRecord { trial, t: trace.steps(), head: split.head, tail: split.tail, halt: trace.halt, good })
}

/// One search per trial, each on a fresh trie unless `fixed_trie` is set.
pub fn run_search_experiment(config: &ExperimentConfig, threads: usize) -> Result<TrialSummary> {
    config.validate()?;
    let shared = if config.fixed_trie {
        let mut rng = trial_rng(config.seed, SHARED_STREAM);
        let y = config.draw_target(&mut rng)?;
        let trie = config.draw_trie(&y, &mut rng)?;
        Some((y, trie))
    } else {
        None
    };
    let records = run_indexed(config.trials, threads, |t| run_trial(config, shared.as_ref(), t))?;
    Ok(TrialSummary::from_records(config.clone(), records))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergencePoint {
    pub n: usize,
    pub log2_n: f64,
    pub mean: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub k: usize,
    pub points: Vec<ConvergencePoint>,
    pub fit: SlopeFit,
}

/// Mean `T` at each `n` and the least-squares slope against `log2 n`.
/// `base` supplies everything but `n` and `d`; the seed of each `n` is derived from `base.seed`.
pub fn convergence_study(n_list: &[usize], base: &ExperimentConfig, threads: usize) -> Result<ConvergenceReport> {
    if n_list.len() < 3 {
        return Err(invalid("convergence study needs at least three values of n"));
    }
    let mut points = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let config = ExperimentConfig { n, d: default_dim(n), seed: derive_seed(base.seed, n as u64), ..base.clone() };
        let s = run_search_experiment(&config, threads)?;
        points.push(ConvergencePoint { n, log2_n: log2_real(n), mean: s.mean, se: s.se });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.log2_n).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean).collect();
    let ses: Vec<f64> = points.iter().map(|p| p.se).collect();
    let fit = ols_slope(&xs, &ys, &ses)?;
    Ok(ConvergenceReport { k: base.k, points, fit })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GoodnessPoint {
    pub n: usize,
    pub trials: usize,
    pub bad: usize,
    pub fraction: f64,
    /// 95% Wilson interval.
    pub ci: (f64, f64),
}

/// Fraction of bad tries at each `n`, measured around the all-ones target.
pub fn goodness_experiment(
    n_list: &[usize],
    trials: usize,
    seed: u64,
    source: TrieSource,
    threads: usize,
) -> Result<Vec<GoodnessPoint>> {
    let mut out = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let config = ExperimentConfig {
            source,
            seed: derive_seed(seed, n as u64),
            ..ExperimentConfig::new(n, 1, trials, 0)
        };
        config.validate()?;
        let good = run_indexed(trials, threads, |t| {
            let mut rng = trial_rng(config.seed, t as u64);
            let y = config.draw_target(&mut rng)?;
            let trie = config.draw_trie(&y, &mut rng)?;
            Ok(n < 2 || is_good(&target_partition(&trie, &y)?).good)
        })?;
        let bad = good.iter().filter(|&&g| !g).count();
        out.push(GoodnessPoint {
            n,
            trials,
            bad,
            fraction: bad as f64 / trials as f64,
            ci: wilson_interval(bad, trials, 1.96),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelStat {
    pub j: u32,
    pub expected: f64,
    pub mean: f64,
    pub variance: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubtreeStudy {
    pub n: usize,
    pub cutoff: u32,
    /// Merged partition sizes `N_0..N_J`.
    pub merged: Vec<LevelStat>,
    /// Unmerged `|S(y, j)|` for `j < raw_levels`, expected `n / 2^(j+1)`.
    pub raw: Vec<LevelStat>,
}

/// Sizes of the target partition over `tries` fresh random tries (target all ones).
pub fn subtree_size_study(n: usize, tries: usize, raw_levels: u32, seed: u64, threads: usize) -> Result<SubtreeStudy> {
    let config = ExperimentConfig::new(n, 1, tries, seed);
    config.validate()?;
    let cutoff = compute_cutoff(n)?;
    if raw_levels > config.d {
        return Err(invalid("more raw levels than bits"));
    }
    let y = NodeId::ones(config.d)?;
    let rows = run_indexed(tries, threads, |t| {
        let mut rng = trial_rng(seed, t as u64);
        let trie = IdTrie::random(n, config.d, &mut rng)?;
        let merged = target_partition(&trie, &y)?.sizes;
        let raw = (0..raw_levels).map(|j| trie.subtree_size(&y, j)).collect::<Result<Vec<_>>>()?;
        Ok((merged, raw))
    })?;
    let stat = |j: u32, expected: f64, pick: &dyn Fn(&(Vec<usize>, Vec<usize>)) -> usize| {
        let xs: Vec<f64> = rows.iter().map(|r| pick(r) as f64).collect();
        let m = moments(&xs);
        LevelStat { j, expected, mean: m.mean, variance: m.variance, se: m.se }
    };
    let merged = (0..=cutoff)
        .map(|j| stat(j, expected_size(n, j, cutoff), &|r| r.0[j as usize]))
        .collect();
    let raw = (0..raw_levels)
        .map(|j| stat(j, n as f64 / 2f64.powi(j as i32 + 1), &|r| r.1[j as usize]))
        .collect();
    Ok(SubtreeStudy { n, cutoff, merged, raw })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub j_max: u32,
    pub k: u32,
    pub samples: usize,
    pub chi_square: ChiSquareReport,
    pub mean_chain: f64,
    pub mean_renewal: f64,
    pub pooled_se: f64,
    /// Mean difference in pooled standard errors.
    pub z: f64,
    pub chain_histogram: Vec<u64>,
    pub renewal_histogram: Vec<u64>,
}

/// Level-chain search against the renewal stopping time `τ(j_max)` with a `V_0` start.
pub fn oracle_comparison(j_max: u32, k: u32, samples: usize, seed: u64) -> Result<OracleReport> {
    if samples < 2 {
        return Err(invalid("oracle comparison needs at least two samples"));
    }
    let params = LevelChainParams::new(j_max, k)?;
    let mut chain_rng = trial_rng(seed, 0);
    let mut renewal_rng = trial_rng(seed, 1);
    let chain: Vec<u64> = (0..samples).map(|_| level_chain_search(&params, &mut chain_rng)).collect();
    let renewal: Vec<u64> = (0..samples)
        .map(|_| renewal_tau(u64::from(j_max), k, &mut renewal_rng, true))
        .collect::<Result<_>>()?;
    let chain_histogram = histogram(&chain);
    let renewal_histogram = histogram(&renewal);
    let chi_square = chi_square_two_sample(&chain_histogram, &renewal_histogram)?;
    let as_f = |v: &[u64]| moments(&v.iter().map(|&x| x as f64).collect::<Vec<_>>());
    let (a, b) = (as_f(&chain), as_f(&renewal));
    let pooled_se = (a.se.powi(2) + b.se.powi(2)).sqrt();
    let z = if pooled_se > 0.0 { (a.mean - b.mean) / pooled_se } else { 0.0 };
    Ok(OracleReport {
        j_max,
        k,
        samples,
        chi_square,
        mean_chain: a.mean,
        mean_renewal: b.mean,
        pooled_se,
        z,
        chain_histogram,
        renewal_histogram,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BruteRow {
    pub n: usize,
    pub d: u32,
    pub k: usize,
    pub exact: f64,
    pub mean: f64,
    pub se: f64,
    /// `|mean - exact| / se`.
    pub z: f64,
}

/// Simulated mean `T` against the enumerated expectation for each `(n, d, k)`.
pub fn brute_force_comparison(
    grid: &[(usize, u32, usize)],
    trials: usize,
    seed: u64,
    threads: usize,
) -> Result<Vec<BruteRow>> {
    grid.iter()
        .map(|&(n, d, k)| {
            let exact = super::oracle::brute_force_expected_t(n, d, k)?;
            let config = ExperimentConfig {
                d,
                seed: derive_seed(seed, ((n as u64) << 32) | (u64::from(d) << 16) | k as u64),
                ..ExperimentConfig::new(n, k, trials, 0)
            };
            let s = run_search_experiment(&config, threads)?;
            let z = if s.se > 0.0 { (s.mean - exact).abs() / s.se } else { (s.mean - exact).abs() * f64::INFINITY };
            Ok(BruteRow { n, d, k, exact, mean: s.mean, se: s.se, z: if z.is_nan() { 0.0 } else { z } })
        })
        .collect()
}
