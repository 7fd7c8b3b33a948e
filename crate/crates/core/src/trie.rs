//! The ID trie over `X_1..X_n`.
//!
//! Ids are kept as a sorted array of left-aligned keys. Every vertex of the
//! binary prefix tree is a contiguous range of that array, so a vertex's leaf
//! count is the length of its range and children are found by binary search
//! on the next bit. Node indices are zero-based; node `0` is the search origin
//! in the experiments.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::ops::Range;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::idspace::{self, check_dim, prefix_len_words, stride, NodeId};
use crate::routing::BucketMode;

#[inline]
fn key_bit(key: &[u64], j: u32) -> bool {
    (key[(j / 64) as usize] >> (63 - j % 64)) & 1 == 1
}

/// Compares the first `len` bits of two left-aligned keys.
#[inline]
fn cmp_prefix(a: &[u64], b: &[u64], len: u32) -> Ordering {
    let full = (len / 64) as usize;
    match a[..full].cmp(&b[..full]) {
        Ordering::Equal => {}
        o => return o,
    }
    let rem = len % 64;
    if rem == 0 {
        return Ordering::Equal;
    }
    let mask = !0u64 << (64 - rem);
    (a[full] & mask).cmp(&(b[full] & mask))
}

/// A vertex of the prefix tree: all ids sharing a prefix of length `depth`,
/// occupying sorted positions `lo..hi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Vertex {
    pub depth: u32,
    pub lo: usize,
    pub hi: usize,
}

impl Vertex {
    pub fn count(&self) -> usize {
        self.hi - self.lo
    }
}

#[derive(Clone, Debug)]
pub struct IdTrie {
    dim: u32,
    stride: usize,
    keys: Vec<u64>,
    node_at: Vec<u32>,
    pos_of: Vec<u32>,
}

impl IdTrie {
    /// Builds the trie over `ids`; node `i` is `ids[i]`.
    pub fn build(ids: &[NodeId]) -> Result<Self> {
        let first = ids.first().ok_or_else(|| invalid("cannot build a trie over zero ids"))?;
        let dim = first.dim();
        if let Some(bad) = ids.iter().find(|x| x.dim() != dim) {
            return Err(Error::DimensionMismatch { left: dim, right: bad.dim() });
        }
        if ids.len() > u32::MAX as usize {
            return Err(invalid("more than 2^32 ids"));
        }
        let mut order: Vec<u32> = (0..ids.len() as u32).collect();
        order.sort_unstable_by(|&a, &b| ids[a as usize].cmp(&ids[b as usize]));
        if let Some(w) = order.windows(2).find(|w| ids[w[0] as usize] == ids[w[1] as usize]) {
            return Err(Error::DuplicateId(ids[w[0] as usize].encode()));
        }
        let keys = order
            .iter()
            .flat_map(|&i| ids[i as usize].words().iter().copied())
            .collect();
        Ok(Self::from_sorted(dim, keys, order))
    }

    /// A trie over `n` uniformly random distinct ids with uniformly random node labels.
    /// Distributed exactly as `build(&generate_ids(n, d, rng)?)`.
    pub fn random<R: Rng + ?Sized>(n: usize, d: u32, rng: &mut R) -> Result<Self> {
        if n == 0 {
            return Err(invalid("cannot build a trie over zero ids"));
        }
        if n > u32::MAX as usize {
            return Err(invalid("more than 2^32 ids"));
        }
        let keys = idspace::sample_sorted_keys(n, d, rng)?;
        let mut labels: Vec<u32> = (0..n as u32).collect();
        labels.shuffle(rng);
        Ok(Self::from_sorted(d, keys, labels))
    }

    fn from_sorted(dim: u32, keys: Vec<u64>, node_at: Vec<u32>) -> Self {
        let mut pos_of = vec![0u32; node_at.len()];
        for (p, &node) in node_at.iter().enumerate() {
            pos_of[node as usize] = p as u32;
        }
        Self { dim, stride: stride(dim), keys, node_at, pos_of }
    }

    pub fn len(&self) -> usize {
        self.node_at.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_at.is_empty()
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    #[inline]
    fn key(&self, pos: usize) -> &[u64] {
        &self.keys[pos * self.stride..(pos + 1) * self.stride]
    }

    /// Id of node `node`.
    pub fn id(&self, node: usize) -> NodeId {
        let key = self.key(self.pos_of[node] as usize);
        NodeId::from_words(key, self.dim).expect("stored keys are well formed")
    }

    /// All ids in node-index order.
    pub fn ids(&self) -> Vec<NodeId> {
        (0..self.len()).map(|i| self.id(i)).collect()
    }

    /// Node index stored at sorted position `pos`.
    #[inline]
    pub fn node_at(&self, pos: usize) -> usize {
        self.node_at[pos] as usize
    }

    /// `ℓ(y, X_node)` without the dimension check.
    #[inline]
    pub(crate) fn prefix_with(&self, node: usize, y: &NodeId) -> u32 {
        prefix_len_words(self.key(self.pos_of[node] as usize), y.words(), self.dim)
    }

    fn check(&self, x: &NodeId) -> Result<()> {
        if x.dim() == self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { left: self.dim, right: x.dim() })
        }
    }

    fn partition_point(&self, mut lo: usize, mut hi: usize, pred: impl Fn(&[u64]) -> bool) -> usize {
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if pred(self.key(mid)) {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Positions of the ids whose first `len` bits equal those of `x`.
    fn prefix_range(&self, x: &NodeId, len: u32) -> Range<usize> {
        let xw = x.words();
        let lo = self.partition_point(0, self.len(), |k| cmp_prefix(k, xw, len) == Ordering::Less);
        let hi = self.partition_point(lo, self.len(), |k| cmp_prefix(k, xw, len) != Ordering::Greater);
        lo..hi
    }

    pub fn root(&self) -> Vertex {
        Vertex { depth: 0, lo: 0, hi: self.len() }
    }

    /// The two children (bit 0, bit 1) of an internal vertex; `None` at depth `d`.
    pub fn children(&self, v: Vertex) -> Option<[Vertex; 2]> {
        if v.depth >= self.dim {
            return None;
        }
        let mid = self.partition_point(v.lo, v.hi, |k| !key_bit(k, v.depth));
        Some([
            Vertex { depth: v.depth + 1, lo: v.lo, hi: mid },
            Vertex { depth: v.depth + 1, lo: mid, hi: v.hi },
        ])
    }

    /// Leaf counts of all nonempty vertices in breadth-first order, 0-children first.
    pub fn vertex_counts(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut frontier = vec![self.root()];
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for v in frontier {
                out.push(v.count());
                if let Some(children) = self.children(v) {
                    next.extend(children.into_iter().filter(|c| c.count() > 0));
                }
            }
            frontier = next;
        }
        out
    }

    /// Node index holding `x`, if any.
    pub fn find(&self, x: &NodeId) -> Option<usize> {
        if x.dim() != self.dim {
            return None;
        }
        let r = self.prefix_range(x, self.dim);
        (!r.is_empty()).then(|| self.node_at(r.start))
    }

    /// Sorted positions of `S(x, j) = {i : ℓ(x, X_i) = j}`.
    pub fn subtree_range(&self, x: &NodeId, j: u32) -> Result<Range<usize>> {
        self.check(x)?;
        if j > self.dim {
            return Err(invalid(format!("level {j} exceeds id length {}", self.dim)));
        }
        Ok(if j == self.dim {
            self.prefix_range(x, self.dim)
        } else {
            self.prefix_range(&x.with_bit_flipped(j), j + 1)
        })
    }

    /// `|S(x, j)|`.
    pub fn subtree_size(&self, x: &NodeId, j: u32) -> Result<usize> {
        self.subtree_range(x, j).map(|r| r.len())
    }

    /// Node indices of `S(x, j)` in sorted-id order.
    pub fn subtree_members(&self, x: &NodeId, j: u32) -> Result<Vec<usize>> {
        Ok(self.subtree_range(x, j)?.map(|p| self.node_at(p)).collect())
    }

    /// `max_i ℓ(y, X_i)`: the longest prefix of `y` held by any node.
    pub fn max_prefix_len(&self, y: &NodeId) -> Result<u32> {
        self.check(y)?;
        let yw = y.words();
        let p = self.partition_point(0, self.len(), |k| k < yw);
        let mut best = 0;
        for q in [p.wrapping_sub(1), p] {
            if q < self.len() {
                best = best.max(prefix_len_words(self.key(q), yw, self.dim));
            }
        }
        Ok(best)
    }

    /// Uniform sample of `count` node indices from `S(x, j)`.
    ///
    /// Ranks are drawn uniformly (distinct ranks without replacement) and each
    /// rank is resolved by weighted descent from the subtree root, visiting the
    /// child that agrees with `x` first. Members are thereby ranked by their
    /// XOR distance to `x`, so the same random draws select the same nodes
    /// after a joint rotation of `x` and all ids.
    pub fn sample_subtree<R: Rng + ?Sized>(
        &self,
        x: &NodeId,
        j: u32,
        count: usize,
        mode: BucketMode,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        let range = self.subtree_range(x, j)?;
        let population = range.len();
        let root = Vertex { depth: (j + 1).min(self.dim), lo: range.start, hi: range.end };
        let ranks: Vec<usize> = match mode {
            BucketMode::WithoutReplacement => {
                if count > population {
                    return Err(Error::Capacity { requested: count as u64, available: population as u64 });
                }
                index::sample(rng, population, count).into_vec()
            }
            BucketMode::WithReplacement => {
                if count > 0 && population == 0 {
                    return Err(Error::Capacity { requested: count as u64, available: 0 });
                }
                (0..count).map(|_| rng.random_range(0..population)).collect()
            }
        };
        Ok(ranks
            .into_iter()
            .map(|r| self.node_at(self.select_by_distance(root, x, r)))
            .collect())
    }

    fn select_by_distance(&self, mut v: Vertex, x: &NodeId, mut rank: usize) -> usize {
        debug_assert!(rank < v.count());
        while v.count() > 1 {
            let [zero, one] = self.children(v).expect("distinct ids split before depth d");
            let (near, far) = if x.bit(v.depth) { (one, zero) } else { (zero, one) };
            if rank < near.count() {
                v = near;
            } else {
                rank -= near.count();
                v = far;
            }
        }
        v.lo
    }

    /// Debug listing: a header line followed by `index<TAB>hex<TAB>ℓ(y,·)` per node.
    pub fn dump(&self, y: &NodeId) -> Result<String> {
        self.check(y)?;
        let mut out = String::new();
        let n = self.len();
        match compute_cutoff(n) {
            Ok(cut) => {
                let alpha = accuracy(log2_real(n));
                writeln!(out, "# n={n} d={} J={cut} alpha={alpha:.10}", self.dim).unwrap();
            }
            Err(_) => writeln!(out, "# n={n} d={} J=NA alpha=NA", self.dim).unwrap(),
        }
        for i in 0..n {
            writeln!(out, "{i}\t{}\t{}", self.id(i).to_hex(), self.prefix_with(i, y)).unwrap();
        }
        Ok(out)
    }
}

/// `log2 n` as a real number, exact for powers of two.
pub fn log2_real(n: usize) -> f64 {
    if n.is_power_of_two() {
        f64::from(n.trailing_zeros())
    } else {
        (n as f64).log2()
    }
}

fn accuracy(m: f64) -> f64 {
    m.powf(-1.5)
}

/// The cutoff `J = min { j >= 0 : n / 2^(j+1) <= (log2 n)^4 }`.
pub fn compute_cutoff(n: usize) -> Result<u32> {
    if n < 2 {
        return Err(invalid(format!("cutoff needs n >= 2, got {n}")));
    }
    let m4 = log2_real(n).powi(4);
    let mut j = 0u32;
    while n as f64 / 2f64.powi(j as i32 + 1) > m4 {
        j += 1;
    }
    Ok(j)
}

/// `E N_j = n / 2^((j+1) ∧ J)`.
pub fn expected_size(n: usize, j: u32, cutoff: u32) -> f64 {
    n as f64 / 2f64.powi((j + 1).min(cutoff) as i32)
}

/// Sizes of the merged target partition: `N_j = |S(y, j)|` for `j < J` and
/// `N_J` pooling every level from `J` to `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetPartition {
    pub target: NodeId,
    pub n: usize,
    pub m: f64,
    pub cutoff: u32,
    pub alpha: f64,
    pub sizes: Vec<usize>,
}

impl TargetPartition {
    pub fn expected(&self, j: u32) -> f64 {
        expected_size(self.n, j, self.cutoff)
    }
}

pub fn target_partition(trie: &IdTrie, y: &NodeId) -> Result<TargetPartition> {
    trie.check(y)?;
    let n = trie.len();
    let cutoff = compute_cutoff(n)?;
    let m = log2_real(n);
    let mut sizes = Vec::with_capacity(cutoff as usize + 1);
    for j in 0..cutoff {
        sizes.push(trie.subtree_size(y, j)?);
    }
    sizes.push(trie.prefix_range(y, cutoff).len());
    debug_assert_eq!(sizes.iter().sum::<usize>(), n);
    Ok(TargetPartition { target: *y, n, m, cutoff, alpha: accuracy(m), sizes })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Goodness {
    pub good: bool,
    pub first_violation: Option<u32>,
}

/// A trie is good when every `N_j` lies within `alpha * E N_j` of `E N_j`.
pub fn is_good(partition: &TargetPartition) -> Goodness {
    let first_violation = partition
        .sizes
        .iter()
        .enumerate()
        .find(|&(j, &size)| {
            let e = partition.expected(j as u32);
            (size as f64 - e).abs() > partition.alpha * e
        })
        .map(|(j, _)| j as u32);
    Goodness { good: first_violation.is_none(), first_violation }
}

/// Level sizes of a perfect trie: `n / 2^((j+1) ∧ J)` for `j = 0..=J`.
pub fn perfect_sizes(n: usize, cutoff: u32) -> Result<Vec<usize>> {
    if !n.is_power_of_two() {
        return Err(invalid(format!("perfect sizes need a power of two, got {n}")));
    }
    if cutoff > n.trailing_zeros() {
        return Err(invalid(format!("cutoff {cutoff} exceeds log2 {n}")));
    }
    Ok((0..=cutoff).map(|j| n >> (j + 1).min(cutoff)).collect())
}

/// Level sizes of an almost perfect trie: `ceil(n / 2^(j+1))` for `j < J`, remainder at `J`.
pub fn almost_perfect_sizes(n: usize, cutoff: u32) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(invalid(format!("almost perfect sizes need n >= 2, got {n}")));
    }
    let mut sizes = Vec::with_capacity(cutoff as usize + 1);
    let mut used = 0usize;
    for j in 0..cutoff {
        let b = if j + 1 >= usize::BITS { 1 } else { n.div_ceil(1usize << (j + 1)) };
        used += b;
        sizes.push(b);
    }
    if used > n {
        return Err(invalid(format!("cutoff {cutoff} leaves a negative last level for n={n}")));
    }
    sizes.push(n - used);
    Ok(sizes)
}

/// Builds a trie whose merged partition around `y` has exactly `sizes` (levels `0..=J`,
/// `J = sizes.len() - 1`). Ids within a level are uniform without replacement among
/// those with `ℓ(·, y) = j` (`ℓ >= J` for the last level); node labels are a uniform
/// random permutation.
pub fn build_synthetic_trie<R: Rng + ?Sized>(
    sizes: &[usize],
    y: &NodeId,
    d: u32,
    rng: &mut R,
) -> Result<IdTrie> {
    check_dim(d)?;
    if y.dim() != d {
        return Err(Error::DimensionMismatch { left: d, right: y.dim() });
    }
    let cutoff = sizes.len().checked_sub(1).ok_or_else(|| invalid("no level sizes given"))? as u32;
    if cutoff > d {
        return Err(invalid(format!("{} levels do not fit in {d} bits", sizes.len())));
    }
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return Err(invalid("synthetic trie needs at least one id"));
    }
    if n > u32::MAX as usize {
        return Err(invalid("more than 2^32 ids"));
    }
    let s = stride(d);
    let mut levels: Vec<(NodeId, Vec<u64>)> = Vec::with_capacity(sizes.len());
    for (j, &count) in sizes.iter().enumerate() {
        let j = j as u32;
        let (prefix, prefix_len) = if j < cutoff { (y.with_bit_flipped(j), j + 1) } else { (*y, cutoff) };
        let free = d - prefix_len;
        let capacity = idspace::space_size(free);
        if count as u64 > capacity {
            return Err(Error::Capacity { requested: count as u64, available: capacity });
        }
        if count == 0 {
            continue;
        }
        let keys = if free == 0 {
            prefix.words().to_vec()
        } else {
            let suffixes = idspace::sample_sorted_keys(count, free, rng)?;
            let ss = stride(free);
            let mut keys = Vec::with_capacity(count * s);
            for w in suffixes.chunks_exact(ss) {
                let suffix = NodeId::from_words(w, free)?;
                keys.extend_from_slice(prefix.splice_suffix(prefix_len, &suffix).words());
            }
            keys
        };
        levels.push((prefix, keys));
    }
    // levels occupy disjoint prefix ranges, so ordering them by prefix keeps keys sorted
    levels.sort_by(|a, b| a.0.cmp(&b.0));
    let keys: Vec<u64> = levels.into_iter().flat_map(|(_, k)| k).collect();
    let mut labels: Vec<u32> = (0..n as u32).collect();
    labels.shuffle(rng);
    Ok(IdTrie::from_sorted(d, keys, labels))
}
