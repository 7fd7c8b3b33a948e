//! Greedy prefix lookup.
//!
//! From node `i` with `j = ℓ(y, X_i)`, the search consults bucket `j` of `i`
//! and moves to the entry sharing the longest prefix with the target. Ties go
//! to the smallest node index. It halts on the target itself or on an empty
//! bucket.

use std::fmt::{self, Write as _};

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::idspace::NodeId;
use crate::routing::{BucketMode, LazyRouter, Router, RoutingBucket};
use crate::trie::IdTrie;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Halt {
    TargetFound,
    EmptyBucket,
}

impl fmt::Display for Halt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Halt::TargetFound => "TargetFound",
            Halt::EmptyBucket => "EmptyBucket",
        })
    }
}

/// A visited node and its common prefix length with the target.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Hop {
    pub node: usize,
    pub ell: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SearchTrace {
    pub start: usize,
    pub target: NodeId,
    /// Visited nodes, starting node included.
    pub hops: Vec<Hop>,
    pub halt: Halt,
}

impl SearchTrace {
    /// Number of steps `T`.
    pub fn steps(&self) -> usize {
        self.hops.len() - 1
    }

    pub fn last(&self) -> Hop {
        *self.hops.last().expect("a trace holds at least its start")
    }

    /// Per-step progress: the initial prefix length, then the gain of each step.
    pub fn progress(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.hops.len());
        out.push(self.hops[0].ell);
        out.extend(self.hops.windows(2).map(|w| w[1].ell - w[0].ell));
        out
    }

    /// One `t<TAB>node<TAB>ell` line per hop and a summary trailer.
    pub fn to_text(&self, cutoff: u32) -> String {
        let mut out = String::new();
        for (t, h) in self.hops.iter().enumerate() {
            writeln!(out, "{t}\t{}\t{}", h.node, h.ell).unwrap();
        }
        let split = split_head_tail(self, cutoff);
        writeln!(
            out,
            "halt={} T={} Thead={} Ttail={}",
            self.halt,
            self.steps(),
            split.head,
            split.tail
        )
        .unwrap();
        out
    }
}

/// Steps departing below the cutoff (`head`) and at or above it (`tail`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct HeadTailSplit {
    pub head: usize,
    pub tail: usize,
}

pub fn split_head_tail(trace: &SearchTrace, cutoff: u32) -> HeadTailSplit {
    let departures = &trace.hops[..trace.hops.len() - 1];
    let head = departures.iter().filter(|h| h.ell < cutoff).count();
    HeadTailSplit { head, tail: departures.len() - head }
}

/// The entry with the longest common prefix with `y`, smallest index on ties.
pub fn next_hop(trie: &IdTrie, bucket: &RoutingBucket, y: &NodeId) -> Option<usize> {
    bucket
        .entries
        .iter()
        .map(|&e| (trie.prefix_with(e, y), e))
        .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
        .map(|(_, e)| e)
}

/// Runs one search with lazily sampled buckets.
pub fn search<R: Rng + ?Sized>(
    trie: &IdTrie,
    start: usize,
    y: &NodeId,
    k: usize,
    mode: BucketMode,
    rng: &mut R,
) -> Result<SearchTrace> {
    search_with(trie, start, y, &mut LazyRouter::new(k, mode), rng)
}

pub fn search_with<Rt: Router, R: Rng + ?Sized>(
    trie: &IdTrie,
    start: usize,
    y: &NodeId,
    router: &mut Rt,
    rng: &mut R,
) -> Result<SearchTrace> {
    if y.dim() != trie.dim() {
        return Err(Error::DimensionMismatch { left: trie.dim(), right: y.dim() });
    }
    if start >= trie.len() {
        return Err(invalid(format!("start node {start} out of range for {} nodes", trie.len())));
    }
    let d = trie.dim();
    let mut hops = vec![Hop { node: start, ell: trie.prefix_with(start, y) }];
    let halt = loop {
        let here = *hops.last().unwrap();
        if here.ell == d {
            break Halt::TargetFound;
        }
        let bucket = router.bucket(trie, here.node, here.ell, rng)?;
        match next_hop(trie, bucket, y) {
            None => break Halt::EmptyBucket,
            Some(node) => {
                let ell = trie.prefix_with(node, y);
                debug_assert!(ell > here.ell);
                hops.push(Hop { node, ell });
            }
        }
    };
    Ok(SearchTrace { start, target: *y, hops, halt })
}

/// True when no node shares a strictly longer prefix with the target than the final node.
pub fn final_node_optimality_check(trie: &IdTrie, trace: &SearchTrace) -> Result<bool> {
    Ok(trie.max_prefix_len(&trace.target)? <= trace.last().ell)
}
