use std::f64::consts::LN_2;

use rand::Rng;

use super::transform::{bit_reverse_permute, log2_exact};
use crate::error::{Error, Result};

/// `ln((1-p)/p)`: the log-likelihood ratio of one i.i.d. Bernoulli(p) bit.
pub fn source_llr(p: f64) -> f64 {
    ((1.0 - p) / p).ln()
}

/// Check-node combination of two LLRs, exact and overflow-safe.
#[inline]
pub fn boxplus(a: f64, b: f64) -> f64 {
    let s = if (a < 0.0) != (b < 0.0) { -1.0 } else { 1.0 };
    s * a.abs().min(b.abs()) + (-(a + b).abs()).exp().ln_1p() - (-(a - b).abs()).exp().ln_1p()
}

/// `P[bit = 1]` from an LLR.
#[inline]
pub fn prob_one(llr: f64) -> f64 {
    1.0 / (1.0 + llr.exp())
}

/// Binary entropy in bits of the bit whose LLR is `llr`.
#[inline]
pub fn llr_entropy(llr: f64) -> f64 {
    let a = llr.abs();
    let pmin = 1.0 / (1.0 + a.exp());
    ((pmin * a) + (-a).exp().ln_1p()) / LN_2
}

fn sc_rec<F: FnMut(usize, f64) -> u8>(llr: &[f64], x: &mut [u8], offset: usize, scratch: &mut [f64], decide: &mut F) {
    let n = llr.len();
    if n == 1 {
        x[0] = decide(offset, llr[0]);
        return;
    }
    let h = n / 2;
    let (sa, rest) = scratch.split_at_mut(h);
    for j in 0..h {
        sa[j] = boxplus(llr[j], llr[j + h]);
    }
    sc_rec(sa, &mut x[..h], offset, rest, decide);
    for j in 0..h {
        sa[j] = if x[j] == 0 { llr[j + h] + llr[j] } else { llr[j + h] - llr[j] };
    }
    let (xa, xb) = x.split_at_mut(h);
    sc_rec(sa, xb, offset + h, rest, decide);
    for j in 0..h {
        xa[j] ^= xb[j];
    }
}

/// Successive cancellation over `x = u G_N` with `G_N = B_N F^{(x)n}`.
///
/// `llr[k]` is the channel LLR of `x_k`. `decide(i, L_i)` fixes `u_i` given the
/// LLR of `u_i` conditioned on the earlier decisions, in order `i = 0..N`.
/// Returns `x` for the chosen `u`.
pub fn sc_run<F: FnMut(usize, f64) -> u8>(llr: &[f64], mut decide: F) -> Result<Vec<u8>> {
    log2_exact(llr.len())?;
    // x B = u F^{(x)n}, so run the natural-order recursion on bit-reversed LLRs
    let lr = bit_reverse_permute(llr);
    let mut xb = vec![0u8; lr.len()];
    let mut scratch = vec![0.0; lr.len()];
    sc_rec(&lr, &mut xb, 0, &mut scratch, &mut decide);
    Ok(bit_reverse_permute(&xb))
}

/// Bits known at some positions, free elsewhere.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pinned {
    bits: Vec<Option<u8>>,
}

impl Pinned {
    pub fn new(n: usize) -> Self {
        Pinned { bits: vec![None; n] }
    }

    pub fn from_sets(n: usize, idx: &[usize], vals: &[u8]) -> Result<Self> {
        if idx.len() != vals.len() {
            return Err(Error::pre("index and value lists differ in length"));
        }
        let mut p = Self::new(n);
        for (&i, &v) in idx.iter().zip(vals) {
            if i >= n {
                return Err(Error::pre(format!("index {i} outside 0..{n}")));
            }
            p.bits[i] = Some(v & 1);
        }
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<u8> {
        self.bits[i]
    }
}

/// Reconstructs an i.i.d. Bernoulli(p) block from its pinned `u` bits; free
/// positions take the likelier value, ties going to 0.
pub fn sc_decode(p: f64, known: &Pinned) -> Result<Vec<u8>> {
    let llr = vec![source_llr(p); known.len()];
    sc_run(&llr, |i, l| known.get(i).unwrap_or(if l < 0.0 { 1 } else { 0 }))
}

/// Draws the free `u` positions from their exact conditionals under
/// Bernoulli(p) i.i.d. `x`; returns `(x, u)`.
pub fn sc_sample_fill<R: Rng + ?Sized>(p: f64, fixed: &Pinned, rng: &mut R) -> Result<(Vec<u8>, Vec<u8>)> {
    let llr = vec![source_llr(p); fixed.len()];
    let mut u = vec![0u8; fixed.len()];
    let x = sc_run(&llr, |i, l| {
        let b = fixed.get(i).unwrap_or_else(|| (rng.gen::<f64>() < prob_one(l)) as u8);
        u[i] = b;
        b
    })?;
    Ok((x, u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::h2;
    use crate::polar::transform::polar_transform;

    #[test]
    fn boxplus_matches_definition() {
        for &(a, b) in &[(0.3, -1.2), (5.0, 4.0), (-30.0, 0.1), (0.0, 2.0), (800.0, -900.0)] {
            let pa = prob_one(a);
            let pb = prob_one(b);
            let pxor = pa * (1.0 - pb) + pb * (1.0 - pa);
            let got = prob_one(boxplus(a, b));
            assert!((got - pxor).abs() < 1e-12, "{a} {b}");
        }
    }

    #[test]
    fn entropy_of_llr() {
        for p in [0.01, 0.11, 0.3, 0.5] {
            assert!((llr_entropy(source_llr(p)) - h2(p)).abs() < 1e-12);
        }
        assert!(llr_entropy(1e4) >= 0.0);
    }

    #[test]
    fn genie_run_reproduces_x() {
        let x = vec![1, 0, 0, 1, 1, 1, 0, 1];
        let u = polar_transform(&x).unwrap();
        let llr = vec![source_llr(0.2); 8];
        assert_eq!(sc_run(&llr, |i, _| u[i]).unwrap(), x);
    }

    #[test]
    fn all_known_is_exact() {
        let x = vec![0, 1, 1, 0, 1, 0, 0, 0, 1, 1, 1, 1, 0, 0, 1, 0];
        let u = polar_transform(&x).unwrap();
        let idx: Vec<usize> = (0..16).collect();
        let k = Pinned::from_sets(16, &idx, &u).unwrap();
        assert_eq!(sc_decode(0.3, &k).unwrap(), x);
        let mut rng = crate::rng::derive_stream(0, "t", 0);
        let (y, v) = sc_sample_fill(0.4, &k, &mut rng).unwrap();
        assert_eq!((y, v), (x, u));
    }
}
