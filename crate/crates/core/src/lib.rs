//! Random-id model of Kademlia lookups.
//!
//! Ids are `d`-bit strings drawn uniformly without replacement. Node `i` keeps,
//! for each level `j`, a bucket of up to `k` nodes sampled from `S(X_i, j)`:
//! the ids that agree with `X_i` on the first `j` bits and differ at bit `j`.
//! A lookup for target `y` repeatedly jumps to the bucket entry with the
//! longest common prefix with `y`.

pub mod error;
pub mod experiments;
pub mod idspace;
pub mod lookup;
pub mod routing;
pub mod theory;
pub mod trie;

pub use error::{Error, Result};
pub use idspace::{common_prefix_len, default_dim, generate_ids, rotate, xor_distance, NodeId, XorDistance};
pub use lookup::{search, search_with, Halt, SearchTrace};
pub use routing::{BucketMode, EagerRouter, LazyRouter, Router, RoutingBucket};
pub use trie::{compute_cutoff, IdTrie};
