//! Exact expected search length on tiny id spaces by full enumeration.

use crate::error::{invalid, Result};
use crate::idspace::NodeId;
use crate::lookup::next_hop;
use crate::routing::RoutingBucket;
use crate::trie::IdTrie;

pub const ORACLE_MAX_N: usize = 8;
pub const ORACLE_MAX_D: u32 = 4;
pub const ORACLE_MAX_K: usize = 2;

/// All `r`-subsets of `0..n` in lexicographic order.
fn subsets(n: usize, r: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < r - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, r, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, r, &mut Vec::with_capacity(r), &mut out);
    out
}

/// `E[T from node]` on a fixed id set, buckets drawn without replacement.
fn expected_from(trie: &IdTrie, y: &NodeId, k: usize, node: usize, memo: &mut [Option<f64>]) -> f64 {
    if let Some(v) = memo[node] {
        return v;
    }
    let d = trie.dim();
    let ell = trie.prefix_with(node, y);
    let value = if ell == d {
        0.0
    } else {
        let members = trie.subtree_members(&trie.id(node), ell).expect("level below d");
        if members.is_empty() {
            0.0
        } else {
            let choices = subsets(members.len(), k.min(members.len()));
            let mut total = 0.0;
            for pick in &choices {
                let bucket = RoutingBucket {
                    owner: node,
                    level: ell,
                    entries: pick.iter().map(|&i| members[i]).collect(),
                };
                let next = next_hop(trie, &bucket, y).expect("non-empty bucket");
                total += 1.0 + expected_from(trie, y, k, next, memo);
            }
            total / choices.len() as f64
        }
    };
    memo[node] = Some(value);
    value
}

/// Exact `E[T]` from node 0 towards the all-ones target, over uniform `n`-subsets
/// of `{0,1}^d`, a uniform choice of which id node 0 holds, and bucket contents.
pub fn brute_force_expected_t(n: usize, d: u32, k: usize) -> Result<f64> {
    if n == 0 || n > ORACLE_MAX_N {
        return Err(invalid(format!("oracle needs 1 <= n <= {ORACLE_MAX_N}, got {n}")));
    }
    if d == 0 || d > ORACLE_MAX_D {
        return Err(invalid(format!("oracle needs 1 <= d <= {ORACLE_MAX_D}, got {d}")));
    }
    if k == 0 || k > ORACLE_MAX_K {
        return Err(invalid(format!("oracle needs 1 <= k <= {ORACLE_MAX_K}, got {k}")));
    }
    let space = 1usize << d;
    if n > space {
        return Err(invalid(format!("{n} ids do not fit in {d} bits")));
    }
    let y = NodeId::ones(d)?;
    let sets = subsets(space, n);
    let mut total = 0.0;
    for set in &sets {
        let ids: Vec<NodeId> = set.iter().map(|&v| NodeId::from_u64(v as u64, d)).collect::<Result<_>>()?;
        let trie = IdTrie::build(&ids)?;
        let mut memo = vec![None; n];
        // node 0 is equally likely to hold any of the ids
        total += (0..n).map(|i| expected_from(&trie, &y, k, i, &mut memo)).sum::<f64>() / n as f64;
    }
    Ok(total / sets.len() as f64)
}
