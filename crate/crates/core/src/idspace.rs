//! The identifier space `{0,1}^d`.
//!
//! A [`NodeId`] stores its `d` bits left-aligned in a fixed array of 64-bit
//! words, most significant bit first, so word-wise lexicographic order equals
//! the order of the ids read as binary numbers. Unused trailing bits are
//! always zero.

use std::fmt;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};

/// Largest supported id length in bits.
pub const MAX_BITS: u32 = 512;

pub(crate) const WORDS: usize = (MAX_BITS as usize) / 64;

/// Id spaces with at most this many bits are sampled from an enumeration.
const DENSE_BITS: u32 = 24;

/// Number of 64-bit words needed for a `d`-bit id.
#[inline]
pub(crate) fn stride(d: u32) -> usize {
    d.div_ceil(64) as usize
}

#[inline]
fn tail_mask(d: u32) -> u64 {
    let used = d - 64 * (stride(d) as u32 - 1);
    if used == 64 {
        !0
    } else {
        !0u64 << (64 - used)
    }
}

pub(crate) fn check_dim(d: u32) -> Result<()> {
    if d == 0 || d > MAX_BITS {
        Err(Error::InvalidDimension(d))
    } else {
        Ok(())
    }
}

/// Length of the common prefix of two left-aligned keys of `d` bits.
#[inline]
pub(crate) fn prefix_len_words(a: &[u64], b: &[u64], d: u32) -> u32 {
    for (w, (x, y)) in a.iter().zip(b).enumerate() {
        let diff = x ^ y;
        if diff != 0 {
            return (w as u32 * 64 + diff.leading_zeros()).min(d);
        }
    }
    d
}

/// A `d`-bit identifier, `1 <= d <= 512`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    words: [u64; WORDS],
    dim: u32,
}

impl NodeId {
    pub fn zero(d: u32) -> Result<Self> {
        check_dim(d)?;
        Ok(Self { words: [0; WORDS], dim: d })
    }

    /// The all-ones id, the canonical search target.
    pub fn ones(d: u32) -> Result<Self> {
        let mut id = Self::zero(d)?;
        let s = stride(d);
        id.words[..s].fill(!0);
        id.words[s - 1] &= tail_mask(d);
        Ok(id)
    }

    /// Builds an id from a slice of binary digits (each 0 or 1), most significant first.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        let mut id = Self::zero(bits.len() as u32)?;
        for (j, &b) in bits.iter().enumerate() {
            match b {
                0 => {}
                1 => id.words[j / 64] |= 1u64 << (63 - j % 64),
                _ => return Err(Error::Parse(format!("bit value {b} at position {j}"))),
            }
        }
        Ok(id)
    }

    /// Builds a `d`-bit id (`d <= 64`) from its numeric value.
    pub fn from_u64(value: u64, d: u32) -> Result<Self> {
        check_dim(d)?;
        if d > 64 {
            return Err(Error::InvalidDimension(d));
        }
        if d < 64 && value >> d != 0 {
            return Err(Error::Parse(format!("{value} does not fit in {d} bits")));
        }
        let mut id = Self::zero(d)?;
        id.words[0] = if d == 64 { value } else { value << (64 - d) };
        Ok(id)
    }

    /// Builds an id from left-aligned words; bits past `d` are cleared.
    pub fn from_words(words: &[u64], d: u32) -> Result<Self> {
        check_dim(d)?;
        let s = stride(d);
        if words.len() < s {
            return Err(Error::InvalidParameter(format!(
                "{} words cannot hold {d} bits",
                words.len()
            )));
        }
        let mut id = Self::zero(d)?;
        id.words[..s].copy_from_slice(&words[..s]);
        id.words[s - 1] &= tail_mask(d);
        Ok(id)
    }

    /// Uniformly random `d`-bit id.
    pub fn random<R: Rng + ?Sized>(d: u32, rng: &mut R) -> Result<Self> {
        let mut id = Self::zero(d)?;
        let s = stride(d);
        for w in &mut id.words[..s] {
            *w = rng.random();
        }
        id.words[s - 1] &= tail_mask(d);
        Ok(id)
    }

    /// Bit length `d`.
    #[inline]
    pub fn dim(&self) -> u32 {
        self.dim
    }

    /// The significant words, left-aligned.
    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words[..stride(self.dim)]
    }

    /// Bit `j`, counting from 0 at the most significant end.
    #[inline]
    pub fn bit(&self, j: u32) -> bool {
        debug_assert!(j < self.dim);
        (self.words[(j / 64) as usize] >> (63 - j % 64)) & 1 == 1
    }

    /// The bits as 0/1 digits, most significant first.
    pub fn to_bits(&self) -> Vec<u8> {
        (0..self.dim).map(|j| self.bit(j) as u8).collect()
    }

    pub fn with_bit_flipped(&self, j: u32) -> Self {
        assert!(j < self.dim, "bit {j} out of range for {}-bit id", self.dim);
        let mut out = *self;
        out.words[(j / 64) as usize] ^= 1u64 << (63 - j % 64);
        out
    }

    /// Numeric value when `d <= 64`.
    pub fn to_u64(&self) -> Option<u64> {
        (self.dim <= 64).then(|| {
            if self.dim == 64 {
                self.words[0]
            } else {
                self.words[0] >> (64 - self.dim)
            }
        })
    }

    fn same_dim(&self, other: &Self) -> Result<()> {
        if self.dim == other.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { left: self.dim, right: other.dim })
        }
    }

    #[inline]
    pub(crate) fn xor_unchecked(&self, other: &Self) -> Self {
        let mut out = *self;
        for (a, b) in out.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
        out
    }

    #[inline]
    pub(crate) fn prefix_len_unchecked(&self, other: &Self) -> u32 {
        prefix_len_words(self.words(), other.words(), self.dim)
    }

    pub fn xor(&self, other: &Self) -> Result<Self> {
        self.same_dim(other)?;
        Ok(self.xor_unchecked(other))
    }

    pub fn common_prefix_len(&self, other: &Self) -> Result<u32> {
        self.same_dim(other)?;
        Ok(self.prefix_len_unchecked(other))
    }

    /// Places `suffix` (a `d - prefix_len` bit id) after the first `prefix_len` bits of `self`.
    pub(crate) fn splice_suffix(&self, prefix_len: u32, suffix: &NodeId) -> Self {
        debug_assert_eq!(suffix.dim + prefix_len, self.dim);
        let mut out = *self;
        // clear everything past the prefix
        for j in 0..stride(self.dim) {
            let lo = j as u32 * 64;
            if lo >= prefix_len {
                out.words[j] = 0;
            } else if lo + 64 > prefix_len {
                out.words[j] &= !0u64 << (64 - (prefix_len - lo));
            }
        }
        let (shift_words, shift_bits) = ((prefix_len / 64) as usize, prefix_len % 64);
        for (i, &w) in suffix.words().iter().enumerate() {
            let at = i + shift_words;
            if at < WORDS {
                out.words[at] |= w >> shift_bits;
            }
            if shift_bits != 0 && at + 1 < WORDS {
                out.words[at + 1] |= w << (64 - shift_bits);
            }
        }
        out
    }

    /// Lowercase hex of the numeric value, left-padded to `ceil(d/4)` digits.
    pub fn to_hex(&self) -> String {
        let digits = self.dim.div_ceil(4);
        let mut s = String::with_capacity(digits as usize);
        for q in 0..digits {
            let mut nibble = 0u32;
            for b in (0..4).rev() {
                // value bit p, counted from the least significant end
                let p = 4 * (digits - 1 - q) + b;
                nibble <<= 1;
                if p < self.dim && self.bit(self.dim - 1 - p) {
                    nibble |= 1;
                }
            }
            s.push(char::from_digit(nibble, 16).expect("nibble < 16"));
        }
        s
    }

    pub fn from_hex(hex: &str, d: u32) -> Result<Self> {
        let mut id = Self::zero(d)?;
        let parse_err = || Error::Parse(hex.to_string());
        if hex.is_empty() {
            return Err(parse_err());
        }
        let nibbles = hex.len() as u32;
        for (q, c) in hex.chars().enumerate() {
            let v = c.to_digit(16).ok_or_else(parse_err)?;
            for b in 0..4 {
                if v >> b & 1 == 0 {
                    continue;
                }
                let p = 4 * (nibbles - 1 - q as u32) + b;
                if p >= d {
                    return Err(parse_err());
                }
                let j = d - 1 - p;
                id.words[(j / 64) as usize] |= 1u64 << (63 - j % 64);
            }
        }
        Ok(id)
    }

    /// Text form `hex/d`, e.g. `4/3` for the 3-bit id `100`.
    pub fn encode(&self) -> String {
        format!("{}/{}", self.to_hex(), self.dim)
    }

    pub fn decode(text: &str) -> Result<Self> {
        let (hex, d) = text.split_once('/').ok_or_else(|| Error::Parse(text.to_string()))?;
        let d: u32 = d.parse().map_err(|_| Error::Parse(text.to_string()))?;
        Self::from_hex(hex, d)
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NodeId({})", self.encode())
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

/// Coordinate-wise XOR of two ids. Ordering is lexicographic on the bits,
/// which coincides with numeric ordering of the distance.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct XorDistance(NodeId);

impl XorDistance {
    pub fn bits(&self) -> Vec<u8> {
        self.0.to_bits()
    }

    /// Numeric distance; only defined for `d <= 64`.
    pub fn to_u64(&self) -> Option<u64> {
        self.0.to_u64()
    }

    pub fn is_zero(&self) -> bool {
        self.0.words().iter().all(|&w| w == 0)
    }

    /// Leading zero bits, i.e. the common prefix length of the two operands.
    pub fn leading_zeros(&self) -> u32 {
        let zero = NodeId { words: [0; WORDS], dim: self.0.dim };
        self.0.prefix_len_unchecked(&zero)
    }
}

pub fn xor_distance(x: &NodeId, y: &NodeId) -> Result<XorDistance> {
    x.xor(y).map(XorDistance)
}

pub fn common_prefix_len(x: &NodeId, y: &NodeId) -> Result<u32> {
    x.common_prefix_len(y)
}

/// Rotation of the hypercube: coordinate-wise XOR with `z`.
pub fn rotate(x: &NodeId, z: &NodeId) -> Result<NodeId> {
    x.xor(z)
}

/// `2^d` saturated to `u64`.
pub(crate) fn space_size(d: u32) -> u64 {
    if d >= 64 {
        u64::MAX
    } else {
        1u64 << d
    }
}

fn check_capacity(n: usize, d: u32) -> Result<()> {
    check_dim(d)?;
    if d < 64 && n as u64 > 1u64 << d {
        return Err(Error::Capacity { requested: n as u64, available: 1u64 << d });
    }
    Ok(())
}

/// A uniformly random `n`-subset of `{0,1}^d` as sorted, flattened left-aligned keys
/// (`stride(d)` words per key).
///
/// Small spaces are sampled by index selection over the enumeration. Large ones
/// take the distinct values of an i.i.d. stream until `n` are collected: draws are
/// made in batches, deduplicated by sorting, and topped up with exactly the
/// deficit, so the result is the first `n` distinct values of the stream.
pub(crate) fn sample_sorted_keys<R: Rng + ?Sized>(n: usize, d: u32, rng: &mut R) -> Result<Vec<u64>> {
    check_capacity(n, d)?;
    if d <= DENSE_BITS {
        let mut keys: Vec<u64> = index::sample(rng, 1usize << d, n)
            .into_iter()
            .map(|v| (v as u64) << (64 - d))
            .collect();
        keys.sort_unstable();
        return Ok(keys);
    }
    let s = stride(d);
    if s == 1 {
        let mask = tail_mask(d);
        let mut keys: Vec<u64> = Vec::with_capacity(n);
        while keys.len() < n {
            let deficit = n - keys.len();
            keys.extend((0..deficit).map(|_| rng.random::<u64>() & mask));
            keys.sort_unstable();
            keys.dedup();
        }
        return Ok(keys);
    }
    let mut ids: Vec<NodeId> = Vec::with_capacity(n);
    while ids.len() < n {
        let deficit = n - ids.len();
        for _ in 0..deficit {
            ids.push(NodeId::random(d, rng)?);
        }
        ids.sort_unstable();
        ids.dedup();
    }
    Ok(ids.iter().flat_map(|id| id.words().iter().copied()).collect())
}

/// `n` distinct ids drawn uniformly without replacement from `{0,1}^d`, in uniformly random order.
pub fn generate_ids<R: Rng + ?Sized>(n: usize, d: u32, rng: &mut R) -> Result<Vec<NodeId>> {
    let keys = sample_sorted_keys(n, d, rng)?;
    let mut ids: Vec<NodeId> = keys
        .chunks_exact(stride(d))
        .map(|w| NodeId::from_words(w, d))
        .collect::<Result<_>>()?;
    ids.shuffle(rng);
    Ok(ids)
}

/// Default id length for `n` nodes: `max(2 * ceil(log2 n), 64)`.
pub fn default_dim(n: usize) -> u32 {
    let log = usize::BITS - n.saturating_sub(1).leading_zeros();
    (2 * log).clamp(64, MAX_BITS)
}

/// `ceil(log2 n)`, the smallest admissible id length for `n` nodes (at least 1).
pub fn min_dim(n: usize) -> u32 {
    (usize::BITS - n.saturating_sub(1).leading_zeros()).max(1)
}
