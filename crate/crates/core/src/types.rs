//! Method of types: empirical types, the type set, class sizes and
//! enumerative ranking of sequences inside a type class.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::dist::{entropy_of, kl_of, FiniteDist};
use crate::error::{Error, Result};

pub const DEFAULT_TYPE_CAP: u128 = 1_000_000;

/// A type of length-`n` sequences: symbol counts summing to `n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TypeClass {
    pub n: usize,
    pub counts: Vec<u32>,
}

impl TypeClass {
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::pre("type over empty alphabet"));
        }
        let n = counts.iter().map(|&c| c as usize).sum();
        Ok(TypeClass { n, counts })
    }

    pub fn alphabet(&self) -> usize {
        self.counts.len()
    }

    pub fn dist(&self) -> FiniteDist {
        let c: Vec<u64> = self.counts.iter().map(|&c| c as u64).collect();
        FiniteDist::from_counts(&c).expect("n >= 1")
    }

    pub fn probs(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// Entropy of the empirical distribution, in bits.
    pub fn entropy(&self) -> f64 {
        entropy_of(&self.probs())
    }

    /// `D(type || p)`; infinite when the type uses a symbol `p` never emits.
    pub fn divergence_to(&self, p: &FiniteDist) -> f64 {
        kl_of(&self.probs(), p.probs()).as_f64()
    }

    /// `n! / prod(c!)`
    pub fn class_size(&self) -> BigUint {
        multinomial(&self.counts)
    }

    /// Probability of the whole class under an i.i.d. source.
    pub fn class_prob(&self, p: &FiniteDist) -> f64 {
        let logp: f64 = self
            .counts
            .iter()
            .zip(p.probs())
            .map(|(&c, &q)| if c == 0 { 0.0 } else { c as f64 * q.log2() })
            .sum();
        if logp == f64::NEG_INFINITY {
            return 0.0;
        }
        let size = log2_big(&self.class_size());
        (size + logp).exp2()
    }
}

pub fn type_of(x: &[u8], alphabet: usize) -> Result<TypeClass> {
    if x.is_empty() {
        return Err(Error::pre("empty sequence"));
    }
    let mut counts = vec![0u32; alphabet];
    for &s in x {
        let s = s as usize;
        if s >= alphabet {
            return Err(Error::pre(format!("symbol {s} outside alphabet {alphabet}")));
        }
        counts[s] += 1;
    }
    Ok(TypeClass { n: x.len(), counts })
}

pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

fn binomial_u128(n: u64, k: u64) -> u128 {
    binomial(n, k).to_u128().unwrap_or(u128::MAX)
}

pub fn multinomial(counts: &[u32]) -> BigUint {
    let mut acc = BigUint::one();
    let mut total = 0u64;
    for &c in counts {
        total += c as u64;
        acc *= binomial(total, c as u64);
    }
    acc
}

pub fn log2_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().unwrap().log2();
    }
    let shift = bits - 64;
    (x >> shift).to_f64().unwrap().log2() + shift as f64
}

/// `|P_n(X)| = C(n + k - 1, k - 1)`.
pub fn num_types(n: usize, alphabet: usize) -> u128 {
    if alphabet == 0 {
        return 0;
    }
    binomial_u128((n + alphabet - 1) as u64, (alphabet - 1) as u64)
}

/// All types in lexicographic order of their count vectors.
pub fn enumerate_types(n: usize, alphabet: usize) -> Result<Vec<TypeClass>> {
    enumerate_types_capped(n, alphabet, DEFAULT_TYPE_CAP)
}

pub fn enumerate_types_capped(n: usize, alphabet: usize, cap: u128) -> Result<Vec<TypeClass>> {
    if n == 0 || alphabet == 0 {
        return Err(Error::pre("need n >= 1 and a non-empty alphabet"));
    }
    let total = num_types(n, alphabet);
    if total > cap {
        return Err(Error::Cap { what: "type enumeration", needed: total, cap });
    }
    let mut out = Vec::with_capacity(total as usize);
    let mut counts = vec![0u32; alphabet];
    fill(&mut counts, 0, n as u32, &mut out, n);
    Ok(out)
}

fn fill(counts: &mut Vec<u32>, pos: usize, left: u32, out: &mut Vec<TypeClass>, n: usize) {
    if pos + 1 == counts.len() {
        counts[pos] = left;
        out.push(TypeClass { n, counts: counts.clone() });
        return;
    }
    for v in 0..=left {
        counts[pos] = v;
        fill(counts, pos + 1, left - v, out, n);
    }
}

/// Position of `t` in `enumerate_types(t.n, k)`, computed without enumerating.
pub fn type_index(t: &TypeClass) -> u128 {
    let k = t.counts.len();
    let mut idx = 0u128;
    let mut left = t.n as u64;
    for j in 0..k.saturating_sub(1) {
        let parts_after = (k - j - 1) as u64;
        for v in 0..t.counts[j] as u64 {
            // compositions of left - v into the remaining parts
            idx += binomial_u128(left - v + parts_after - 1, parts_after - 1);
        }
        left -= t.counts[j] as u64;
    }
    idx
}

/// Inverse of [`type_index`].
pub fn type_at(index: u128, n: usize, alphabet: usize) -> Result<TypeClass> {
    if index >= num_types(n, alphabet) {
        return Err(Error::pre(format!("type index {index} out of range")));
    }
    let mut counts = vec![0u32; alphabet];
    let mut left = n as u64;
    let mut idx = index;
    for j in 0..alphabet - 1 {
        let parts_after = (alphabet - j - 1) as u64;
        let mut v = 0u64;
        loop {
            let block = binomial_u128(left - v + parts_after - 1, parts_after - 1);
            if idx < block {
                break;
            }
            idx -= block;
            v += 1;
        }
        counts[j] = v as u32;
        left -= v;
    }
    counts[alphabet - 1] = left as u32;
    Ok(TypeClass { n, counts })
}

/// Lexicographic rank of `x` among the arrangements of its own multiset.
pub fn rank_in_type(x: &[u8], alphabet: usize) -> Result<BigUint> {
    let t = type_of(x, alphabet)?;
    let mut counts: Vec<u64> = t.counts.iter().map(|&c| c as u64).collect();
    let mut arrangements = t.class_size();
    let mut rank = BigUint::zero();
    let mut left = x.len() as u64;
    for &s in x {
        let s = s as usize;
        for &c in counts.iter().take(s) {
            if c > 0 {
                rank += &arrangements * c / left;
            }
        }
        arrangements = arrangements * counts[s] / left;
        counts[s] -= 1;
        left -= 1;
    }
    Ok(rank)
}

pub fn unrank_in_type(t: &TypeClass, rank: &BigUint) -> Result<Vec<u8>> {
    let mut arrangements = t.class_size();
    if rank >= &arrangements {
        return Err(Error::pre("rank outside the type class"));
    }
    let mut counts: Vec<u64> = t.counts.iter().map(|&c| c as u64).collect();
    let mut r = rank.clone();
    let mut left = t.n as u64;
    let mut out = Vec::with_capacity(t.n);
    while left > 0 {
        for s in 0..counts.len() {
            if counts[s] == 0 {
                continue;
            }
            let block = &arrangements * counts[s] / left;
            if r < block {
                out.push(s as u8);
                arrangements = block;
                counts[s] -= 1;
                break;
            }
            r -= block;
        }
        left -= 1;
    }
    Ok(out)
}

/// Every length-`n` sequence over `{0..k-1}` in lexicographic order.
pub fn all_sequences(n: usize, alphabet: usize) -> impl Iterator<Item = Vec<u8>> {
    let total = (alphabet as u64).pow(n as u32);
    (0..total).map(move |mut v| {
        let mut x = vec![0u8; n];
        for slot in x.iter_mut().rev() {
            *slot = (v % alphabet as u64) as u8;
            v /= alphabet as u64;
        }
        x
    })
}
