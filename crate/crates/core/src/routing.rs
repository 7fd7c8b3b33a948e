//! k-buckets.
//!
//! Bucket `j` of node `i` holds up to `k` members of `S(X_i, j)`. Buckets are
//! normally sampled lazily when a search first consults them; an eager table
//! over every `(owner, level)` pair is available for small tries.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::Rng;

use crate::error::{invalid, Result};
use crate::trie::IdTrie;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum BucketMode {
    #[default]
    WithoutReplacement,
    WithReplacement,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoutingBucket {
    pub owner: usize,
    pub level: u32,
    /// Node indices in sampling order.
    pub entries: Vec<usize>,
}

impl RoutingBucket {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `owner<TAB>j<TAB>comma-separated entries`.
    pub fn dump(&self) -> String {
        let entries: Vec<String> = self.entries.iter().map(|e| e.to_string()).collect();
        format!("{}\t{}\t{}", self.owner, self.level, entries.join(","))
    }
}

/// Fills bucket `j` of `owner`: `min(k, |S|)` distinct members, or `k` independent
/// draws with replacement (none when the population is empty).
pub fn fill_bucket<R: Rng + ?Sized>(
    trie: &IdTrie,
    owner: usize,
    level: u32,
    k: usize,
    mode: BucketMode,
    rng: &mut R,
) -> Result<RoutingBucket> {
    if k == 0 {
        return Err(invalid("bucket size k must be positive"));
    }
    if level >= trie.dim() {
        return Err(invalid(format!("bucket level {level} must be below d = {}", trie.dim())));
    }
    let x = trie.id(owner);
    let population = trie.subtree_size(&x, level)?;
    let count = match mode {
        BucketMode::WithoutReplacement => k.min(population),
        BucketMode::WithReplacement if population == 0 => 0,
        BucketMode::WithReplacement => k,
    };
    let entries = trie.sample_subtree(&x, level, count, mode, rng)?;
    Ok(RoutingBucket { owner, level, entries })
}

/// `k^2 2^j / n`, the union bound on a collision among `k` draws with
/// replacement from a population of `n / 2^(j+1)`.
pub fn duplicate_probability_bound(n: usize, level: u32, k: usize) -> f64 {
    (k * k) as f64 * 2f64.powi(level as i32) / n as f64
}

/// Source of buckets for a search.
pub trait Router {
    fn bucket<R: Rng + ?Sized>(
        &mut self,
        trie: &IdTrie,
        owner: usize,
        level: u32,
        rng: &mut R,
    ) -> Result<&RoutingBucket>;
}

/// Samples each bucket on first consultation and remembers it.
#[derive(Clone, Debug)]
pub struct LazyRouter {
    k: usize,
    mode: BucketMode,
    filled: HashMap<(usize, u32), RoutingBucket>,
}

impl LazyRouter {
    pub fn new(k: usize, mode: BucketMode) -> Self {
        Self { k, mode, filled: HashMap::new() }
    }

    pub fn filled(&self) -> usize {
        self.filled.len()
    }
}

impl Router for LazyRouter {
    fn bucket<R: Rng + ?Sized>(
        &mut self,
        trie: &IdTrie,
        owner: usize,
        level: u32,
        rng: &mut R,
    ) -> Result<&RoutingBucket> {
        use std::collections::hash_map::Entry;
        match self.filled.entry((owner, level)) {
            Entry::Occupied(e) => Ok(e.into_mut()),
            Entry::Vacant(e) => Ok(e.insert(fill_bucket(trie, owner, level, self.k, self.mode, rng)?)),
        }
    }
}

/// Largest trie for which an eager table may be built.
pub const EAGER_LIMIT: usize = 1 << 12;

/// Every bucket of every node, filled up front in `(owner, level)` order.
#[derive(Clone, Debug)]
pub struct EagerRouter {
    dim: u32,
    buckets: Vec<RoutingBucket>,
}

impl EagerRouter {
    pub fn build<R: Rng + ?Sized>(trie: &IdTrie, k: usize, mode: BucketMode, rng: &mut R) -> Result<Self> {
        if trie.len() > EAGER_LIMIT {
            return Err(invalid(format!("eager routing is limited to {EAGER_LIMIT} nodes")));
        }
        let mut buckets = Vec::with_capacity(trie.len() * trie.dim() as usize);
        for owner in 0..trie.len() {
            for level in 0..trie.dim() {
                buckets.push(fill_bucket(trie, owner, level, k, mode, rng)?);
            }
        }
        Ok(Self { dim: trie.dim(), buckets })
    }

    pub fn get(&self, owner: usize, level: u32) -> &RoutingBucket {
        &self.buckets[owner * self.dim as usize + level as usize]
    }

    pub fn dump(&self) -> String {
        let mut out = String::new();
        for b in &self.buckets {
            writeln!(out, "{}", b.dump()).unwrap();
        }
        out
    }
}

impl Router for EagerRouter {
    fn bucket<R: Rng + ?Sized>(&mut self, _: &IdTrie, owner: usize, level: u32, _: &mut R) -> Result<&RoutingBucket> {
        Ok(self.get(owner, level))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::stats::dkw_epsilon;
    use crate::idspace::{common_prefix_len, generate_ids, NodeId};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_and_forced_buckets() {
        let ids: Vec<NodeId> = (0..4).map(|v| NodeId::from_u64(v, 3).unwrap()).collect();
        let t = IdTrie::build(&ids).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // every id starts with 0, so bucket 0 is empty for all owners
        for mode in [BucketMode::WithoutReplacement, BucketMode::WithReplacement] {
            assert!(fill_bucket(&t, 0, 0, 3, mode, &mut rng).unwrap().is_empty());
        }
        // S(000, 1) = {010, 011}
        let b = fill_bucket(&t, 0, 1, 5, BucketMode::WithoutReplacement, &mut rng).unwrap();
        let mut e = b.entries.clone();
        e.sort_unstable();
        assert_eq!(e, vec![2, 3]);
        let b = fill_bucket(&t, 0, 1, 5, BucketMode::WithReplacement, &mut rng).unwrap();
        assert_eq!(b.entries.len(), 5);
        assert!(fill_bucket(&t, 0, 3, 1, BucketMode::WithoutReplacement, &mut rng).is_err());
        assert!(fill_bucket(&t, 0, 1, 0, BucketMode::WithoutReplacement, &mut rng).is_err());
    }

    #[test]
    fn with_replacement_duplicate_rate() {
        let ids: Vec<NodeId> = [0u64, 2, 3].iter().map(|&v| NodeId::from_u64(v, 2).unwrap()).collect();
        let t = IdTrie::build(&ids).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let fills = 100_000;
        let dups = (0..fills)
            .filter(|_| {
                let b = fill_bucket(&t, 0, 0, 2, BucketMode::WithReplacement, &mut rng).unwrap();
                b.entries[0] == b.entries[1]
            })
            .count();
        let eps = dkw_epsilon(fills, 0.01);
        assert!((dups as f64 / fills as f64 - 0.5).abs() <= eps);
    }

    #[test]
    fn duplicate_bound_properties() {
        let n = 1 << 20;
        assert_eq!(duplicate_probability_bound(n, 0, 2), 4.0 / n as f64);
        assert!(duplicate_probability_bound(n, 0, 1) >= 0.0);
        for j in 0..10 {
            for k in 1..6 {
                assert!(duplicate_probability_bound(n, j + 1, k) > duplicate_probability_bound(n, j, k));
                assert!(duplicate_probability_bound(n, j, k + 1) > duplicate_probability_bound(n, j, k));
            }
        }
    }

    #[test]
    fn single_draws_never_collide() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = IdTrie::random(64, 8, &mut rng).unwrap();
        for owner in 0..64 {
            let b = fill_bucket(&t, owner, 0, 1, BucketMode::WithReplacement, &mut rng).unwrap();
            assert!(b.entries.len() <= 1);
        }
    }

    #[test]
    fn membership_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ids = generate_ids(600, 16, &mut rng).unwrap();
        let t = IdTrie::build(&ids).unwrap();
        for mode in [BucketMode::WithoutReplacement, BucketMode::WithReplacement] {
            let table = EagerRouter::build(&t, 3, mode, &mut rng).unwrap();
            for owner in 0..ids.len() {
                for level in 0..16 {
                    let b = table.get(owner, level);
                    let pop = t.subtree_size(&ids[owner], level).unwrap();
                    for &s in &b.entries {
                        assert_eq!(common_prefix_len(&ids[owner], &ids[s]).unwrap(), level);
                    }
                    match mode {
                        BucketMode::WithoutReplacement => {
                            assert_eq!(b.entries.len(), pop.min(3));
                            let mut e = b.entries.clone();
                            e.sort_unstable();
                            e.dedup();
                            assert_eq!(e.len(), b.entries.len());
                        }
                        BucketMode::WithReplacement => {
                            assert_eq!(b.entries.len(), if pop == 0 { 0 } else { 3 });
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn hit_frequency_without_replacement() {
        // owner 000000, level 0 population: the 5 ids starting with 1
        let vals = [0u64, 1, 33, 40, 50, 60, 63];
        let ids: Vec<NodeId> = vals.iter().map(|&v| NodeId::from_u64(v, 6).unwrap()).collect();
        let t = IdTrie::build(&ids).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (k, c, fills) = (2usize, 5usize, 100_000usize);
        let mut hits = [0usize; 7];
        for _ in 0..fills {
            for e in fill_bucket(&t, 0, 0, k, BucketMode::WithoutReplacement, &mut rng).unwrap().entries {
                hits[e] += 1;
            }
        }
        let eps = dkw_epsilon(fills, 0.01);
        for &h in &hits[2..] {
            assert!((h as f64 / fills as f64 - k as f64 / c as f64).abs() <= eps);
        }
    }

    #[test]
    fn buckets_of_distinct_pairs_are_uncorrelated() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = IdTrie::random(256, 10, &mut rng).unwrap();
        let y = NodeId::ones(10).unwrap();
        let fills = 20_000;
        // indicator: the bucket's first entry shares the target's first bit
        let (mut a, mut b, mut ab) = (0f64, 0f64, 0f64);
        for _ in 0..fills {
            let mut r = LazyRouter::new(1, BucketMode::WithoutReplacement);
            let ia = r.bucket(&t, 0, 1, &mut rng).unwrap().entries.first().map_or(0.0, |&s| {
                f64::from(u8::from(t.id(s).bit(2) == y.bit(2)))
            });
            let ib = r.bucket(&t, 1, 1, &mut rng).unwrap().entries.first().map_or(0.0, |&s| {
                f64::from(u8::from(t.id(s).bit(2) == y.bit(2)))
            });
            a += ia;
            b += ib;
            ab += ia * ib;
        }
        let f = fills as f64;
        let cov = ab / f - (a / f) * (b / f);
        let var_a = a / f * (1.0 - a / f);
        let var_b = b / f * (1.0 - b / f);
        let corr = cov / (var_a * var_b).sqrt();
        assert!(corr.abs() < 4.0 / f.sqrt(), "corr {corr}");
    }

    #[test]
    fn lazy_router_memoizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = IdTrie::random(100, 12, &mut rng).unwrap();
        let mut r = LazyRouter::new(2, BucketMode::WithoutReplacement);
        let first = r.bucket(&t, 5, 0, &mut rng).unwrap().clone();
        let again = r.bucket(&t, 5, 0, &mut rng).unwrap().clone();
        assert_eq!(first, again);
        assert_eq!(r.filled(), 1);
    }

    #[test]
    fn eager_limit_and_dump() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let big = IdTrie::random(EAGER_LIMIT + 1, 20, &mut rng).unwrap();
        assert!(EagerRouter::build(&big, 1, BucketMode::WithoutReplacement, &mut rng).is_err());
        let ids: Vec<NodeId> = [0u64, 3].iter().map(|&v| NodeId::from_u64(v, 2).unwrap()).collect();
        let t = IdTrie::build(&ids).unwrap();
        let table = EagerRouter::build(&t, 1, BucketMode::WithoutReplacement, &mut rng).unwrap();
        assert_eq!(table.dump(), "0\t0\t1\n0\t1\t\n1\t0\t0\n1\t1\t\n");
    }
}
