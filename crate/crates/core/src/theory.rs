//! Closed forms and samplers for the search-time analysis.
//!
//! `mu_k = sum_{j>=1} [1 - (1 - 2^(1-j))^k]` is the mean of `V`, the maximum
//! of `k` i.i.d. geometric(1/2) variables on `{1, 2, ...}`. `V` is the prefix
//! gained per search step in a perfect trie, so the number of steps needed to
//! cover `M` bits is a renewal stopping time with rate `1/mu_k`.

use std::ops::{Add, Sub};

use rand::Rng;

use crate::error::{invalid, Result};

/// Default truncation tolerance for the `mu_k` series.
pub const DEFAULT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MuValue {
    pub k: u32,
    pub mu: f64,
    /// Upper bound on the omitted tail of the series.
    pub truncation_error_bound: f64,
    /// Number of series terms summed.
    pub terms: u32,
}

/// `1 - (1 - 2^(1-j))^k`, i.e. `P(V >= j)`.
fn series_term(k: u32, j: u32) -> f64 {
    if j == 1 {
        return 1.0;
    }
    let x = 2f64.powi(1 - j as i32);
    -(f64::from(k) * (-x).ln_1p()).exp_m1()
}

/// `mu_k` summed until the tail majorant `k 2^(1-j)` of the remaining terms drops below `tol`.
pub fn mu(k: u32, tol: f64) -> Result<MuValue> {
    if k == 0 {
        return Err(invalid("k must be positive"));
    }
    if !(tol > 0.0) {
        return Err(invalid(format!("tolerance must be positive, got {tol}")));
    }
    let mut terms = Vec::new();
    let mut j = 1u32;
    let tail = loop {
        terms.push(series_term(k, j));
        // remaining terms j+1, j+2, ... are each at most k 2^(1-i)
        let tail = f64::from(k) * 2f64.powi(1 - j as i32);
        if tail < tol {
            break tail;
        }
        j += 1;
    };
    // smallest terms first
    let mu = terms.iter().rev().sum();
    Ok(MuValue { k, mu, truncation_error_bound: tail, terms: j })
}

/// `H_k = 1 + 1/2 + ... + 1/k`.
pub fn harmonic(k: u32) -> f64 {
    (1..=k).rev().map(|s| 1.0 / f64::from(s)).sum()
}

/// `(H_k / ln 2, H_k / ln 2 + 1)`, bracketing `mu_k`.
pub fn mu_bounds(k: u32) -> (f64, f64) {
    let lower = harmonic(k) / std::f64::consts::LN_2;
    (lower, lower + 1.0)
}

/// `P(V < s) = (1 - 2^(1-s))^k` for integer `s >= 1`.
pub fn geometric_max_cdf(k: u32, s: u32) -> f64 {
    if s == 0 {
        return 0.0;
    }
    (1.0 - 2f64.powi(1 - s as i32)).powi(k as i32)
}

/// Geometric(1/2) on `{1, 2, ...}` by inversion: `ceil(-log2 U)`.
///
/// Values past ~53 are not representable in the uniform's resolution; their
/// total mass is below `2^-52`.
pub fn sample_geometric<R: Rng + ?Sized>(rng: &mut R) -> u32 {
    let u = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break u;
        }
    };
    ((-u.log2()).ceil() as u32).max(1)
}

/// Maximum of `k` i.i.d. geometric(1/2).
pub fn sample_v<R: Rng + ?Sized>(k: u32, rng: &mut R) -> u32 {
    (0..k).map(|_| sample_geometric(rng)).max().unwrap_or(0)
}

/// Geometric(1/2) minus one, the prefix length of a uniform start node.
pub fn sample_v0<R: Rng + ?Sized>(rng: &mut R) -> u32 {
    sample_geometric(rng) - 1
}

/// `w̄_t = min(w_t, M - sum_{s<t} w̄_s)`.
pub fn truncate_sequence<T>(w: &[T], budget: T) -> Vec<T>
where
    T: Copy + PartialOrd + Add<Output = T> + Sub<Output = T> + Default,
{
    let mut acc = T::default();
    w.iter()
        .map(|&x| {
            let room = budget - acc;
            let v = if x < room { x } else { room };
            acc = acc + v;
            v
        })
        .collect()
}

/// `inf { t : w_0 + ... + w_t >= M }`, `None` when the partial sums never reach `M`.
pub fn first_crossing<T>(w: &[T], budget: T) -> Option<usize>
where
    T: Copy + PartialOrd + Add<Output = T> + Default,
{
    let mut acc = T::default();
    w.iter().position(|&x| {
        acc = acc + x;
        acc >= budget
    })
}

/// `inf { t : V_0 + ... + V_t >= M }`. `V_0` is drawn as geometric minus one when
/// `include_v0` is set, otherwise as another copy of `V`.
pub fn renewal_tau<R: Rng + ?Sized>(budget: u64, k: u32, rng: &mut R, include_v0: bool) -> Result<u64> {
    if budget == 0 {
        return Err(invalid("renewal budget must be at least 1"));
    }
    if k == 0 {
        return Err(invalid("k must be positive"));
    }
    let mut sum = u64::from(if include_v0 { sample_v0(rng) } else { sample_v(k, rng) });
    let mut t = 0;
    while sum < budget {
        t += 1;
        sum += u64::from(sample_v(k, rng));
    }
    Ok(t)
}

/// Abstract search on a perfect trie cut off at `j_max`: the fraction of nodes
/// at level `s` is `2^-(s+1)` for `s < j_max` and `2^-j_max` for the pooled last level.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LevelChainParams {
    pub j_max: u32,
    pub k: u32,
}

/// Largest cutoff whose level weights stay normal doubles.
pub const MAX_CHAIN_DEPTH: u32 = 1000;

impl LevelChainParams {
    pub fn new(j_max: u32, k: u32) -> Result<Self> {
        if j_max == 0 || j_max > MAX_CHAIN_DEPTH {
            return Err(invalid(format!("j_max must be in 1..={MAX_CHAIN_DEPTH}, got {j_max}")));
        }
        if k == 0 {
            return Err(invalid("k must be positive"));
        }
        Ok(Self { j_max, k })
    }

    /// Level weights `w_0..=w_{j_max}`.
    pub fn weights(&self) -> Vec<f64> {
        (0..=self.j_max)
            .map(|s| 2f64.powi(-((s + 1).min(self.j_max) as i32)))
            .collect()
    }
}

/// Level of a node drawn uniformly from levels `from..=j_max`, given the
/// weights and their suffix sums.
fn draw_level<R: Rng + ?Sized>(weights: &[f64], tails: &[f64], from: usize, rng: &mut R) -> usize {
    let last = weights.len() - 1;
    let u = rng.random::<f64>() * tails[from];
    let mut acc = 0.0;
    for (s, w) in weights.iter().enumerate().skip(from) {
        acc += w;
        if u < acc {
            return s;
        }
    }
    last
}

/// Steps taken below `j_max` by a with-replacement search on the perfect level structure.
pub fn level_chain_search<R: Rng + ?Sized>(params: &LevelChainParams, rng: &mut R) -> u64 {
    let weights = params.weights();
    let mut tails = vec![0.0; weights.len() + 1];
    for s in (0..weights.len()).rev() {
        tails[s] = tails[s + 1] + weights[s];
    }
    let top = params.j_max as usize;
    let mut level = draw_level(&weights, &tails, 0, rng);
    let mut steps = 0;
    while level < top {
        level = (0..params.k)
            .map(|_| draw_level(&weights, &tails, level + 1, rng))
            .max()
            .expect("k >= 1");
        steps += 1;
    }
    steps
}
