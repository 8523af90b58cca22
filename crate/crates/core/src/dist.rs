//! Finite distributions, entropies and divergences. Everything is in bits.

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-12;
const PARSE_TOL: f64 = 1e-9;

/// Probability vector over `{0, .., k-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FiniteDist {
    probs: Vec<f64>,
}

impl FiniteDist {
    /// Strict constructor: entries must already sum to one within 1e-12.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Self::check(&probs, SUM_TOL)?;
        Ok(FiniteDist { probs })
    }

    /// Accepts a vector summing to one within 1e-9 and renormalizes it.
    pub fn normalized(mut probs: Vec<f64>) -> Result<Self> {
        Self::check(&probs, PARSE_TOL)?;
        let s: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= s);
        Ok(FiniteDist { probs })
    }

    fn check(probs: &[f64], tol: f64) -> Result<()> {
        if probs.is_empty() {
            return Err(Error::InvalidDist("empty alphabet".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDist(format!("bad entry {p}")));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > tol {
            return Err(Error::InvalidDist(format!("sums to {s}")));
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// `P[1] = p`.
    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidDist(format!("bernoulli parameter {p}")));
        }
        Ok(FiniteDist { probs: vec![1.0 - p, p] })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidDist("empty alphabet".into()));
        }
        Ok(FiniteDist { probs: vec![1.0 / k as f64; k] })
    }

    pub fn point(k: usize, at: usize) -> Result<Self> {
        if at >= k {
            return Err(Error::InvalidDist(format!("point {at} outside alphabet {k}")));
        }
        let mut probs = vec![0.0; k];
        probs[at] = 1.0;
        Ok(FiniteDist { probs })
    }

    /// Empirical distribution of a count vector.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return Err(Error::InvalidDist("no observations".into()));
        }
        Ok(FiniteDist {
            probs: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn p(&self, x: usize) -> f64 {
        self.probs[x]
    }

    /// Smallest probability over the whole alphabet (zero if not full support).
    pub fn min_prob(&self) -> f64 {
        self.probs.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn full_support(&self) -> bool {
        self.min_prob() > 0.0
    }

    pub fn mix(&self, other: &FiniteDist, lambda: f64) -> Result<FiniteDist> {
        same_alphabet(self, other)?;
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect();
        FiniteDist::normalized(probs)
    }
}

impl TryFrom<Vec<f64>> for FiniteDist {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        FiniteDist::normalized(v)
    }
}

impl From<FiniteDist> for Vec<f64> {
    fn from(d: FiniteDist) -> Self {
        d.probs
    }
}

/// A KL divergence: finite bits, or the `+inf` convention.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kl {
    Finite(f64),
    Infinite,
}

impl Kl {
    pub fn is_finite(self) -> bool {
        matches!(self, Kl::Finite(_))
    }

    /// `f64::INFINITY` for the infinite case. Handy for comparisons only.
    pub fn as_f64(self) -> f64 {
        match self {
            Kl::Finite(v) => v,
            Kl::Infinite => f64::INFINITY,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Kl::Finite(v) => Some(v),
            Kl::Infinite => None,
        }
    }

    pub fn min(self, other: Kl) -> Kl {
        match (self, other) {
            (Kl::Finite(a), Kl::Finite(b)) => Kl::Finite(a.min(b)),
            (Kl::Finite(a), Kl::Infinite) | (Kl::Infinite, Kl::Finite(a)) => Kl::Finite(a),
            _ => Kl::Infinite,
        }
    }
}

fn same_alphabet(p: &FiniteDist, q: &FiniteDist) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::AlphabetMismatch(p.len(), q.len()));
    }
    Ok(())
}

#[inline]
fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

pub fn entropy(d: &FiniteDist) -> f64 {
    entropy_of(d.probs())
}

/// Entropy of a raw (possibly unnormalized-by-rounding) probability slice.
pub fn entropy_of(probs: &[f64]) -> f64 {
    let h = -probs.iter().map(|&p| plogp(p)).sum::<f64>();
    h.max(0.0)
}

/// Binary entropy function.
pub fn h2(p: f64) -> f64 {
    -plogp(p) - plogp(1.0 - p)
}

pub fn kl_div(p: &FiniteDist, q: &FiniteDist) -> Result<Kl> {
    same_alphabet(p, q)?;
    Ok(kl_of(p.probs(), q.probs()))
}

pub(crate) fn kl_of(p: &[f64], q: &[f64]) -> Kl {
    let mut d = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return Kl::Infinite;
            }
            d += a * (a / b).log2();
        }
    }
    Kl::Finite(d.max(0.0))
}

/// `sum |p - q|`, in `[0, 2]`.
pub fn var_dist(p: &FiniteDist, q: &FiniteDist) -> Result<f64> {
    same_alphabet(p, q)?;
    Ok(vdist_of(p.probs(), q.probs()))
}

pub(crate) fn vdist_of(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>().min(2.0)
}

/// Left and right sides of the three divergence inequalities.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub kl_pq: Kl,
    pub vdist: f64,
    /// `D(p||q)`
    pub bound1_lhs: f64,
    pub bound1_rhs: f64,
    /// `H(q) - H(p)`
    pub bound2_lhs: f64,
    pub bound2_rhs: f64,
    /// `D(p||q)` again, bounded through `r`
    pub bound3_lhs: f64,
    pub bound3_rhs: f64,
    pub holds: [bool; 3],
}

const HOLD_TOL: f64 = 1e-9;

/// Evaluates
/// `D(p||q) <= log(1/mu_q) V(p,q)`,
/// `H(q) - H(p) <= D(p||q) + log(1/mu_q) sqrt(2 ln 2) sqrt(min(D(p||q), D(q||p)))`,
/// `D(p||q) <= log(1/mu_q) sqrt(2 ln 2) [sqrt(min D(p,r)) + sqrt(min D(q,r))]`
/// where `min D(a,b)` takes the smaller of the two directions.
pub fn lemma1_report(p: &FiniteDist, q: &FiniteDist, r: &FiniteDist) -> Result<DivergenceReport> {
    same_alphabet(p, q)?;
    same_alphabet(p, r)?;
    let mu = q.min_prob();
    if mu <= 0.0 {
        return Err(Error::pre("q must have full support"));
    }
    let log_inv_mu = -mu.log2();
    let c = log_inv_mu * (2.0 * LN_2).sqrt();

    let kl_pq = kl_div(p, q)?;
    let d_pq = kl_pq.as_f64();
    let vdist = var_dist(p, q)?;

    let sym = |a: &FiniteDist, b: &FiniteDist| -> f64 {
        kl_of(a.probs(), b.probs()).min(kl_of(b.probs(), a.probs())).as_f64()
    };

    let b1_rhs = log_inv_mu * vdist;
    let b2_lhs = entropy(q) - entropy(p);
    let b2_rhs = d_pq + c * sym(p, q).sqrt();
    let b3_rhs = c * (sym(p, r).sqrt() + sym(q, r).sqrt());

    Ok(DivergenceReport {
        kl_pq,
        vdist,
        bound1_lhs: d_pq,
        bound1_rhs: b1_rhs,
        bound2_lhs: b2_lhs,
        bound2_rhs: b2_rhs,
        bound3_lhs: d_pq,
        bound3_rhs: b3_rhs,
        holds: [
            d_pq <= b1_rhs + HOLD_TOL,
            b2_lhs <= b2_rhs + HOLD_TOL,
            d_pq <= b3_rhs + HOLD_TOL,
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(p: f64) -> FiniteDist {
        FiniteDist::bernoulli(p).unwrap()
    }

    #[test]
    fn entropy_values() {
        assert_eq!(entropy(&b(0.5)), 1.0);
        assert_eq!(entropy(&FiniteDist::point(4, 2).unwrap()), 0.0);
        assert!((entropy(&b(0.11)) - 0.4999).abs() < 1e-4);
        assert!((entropy(&FiniteDist::uniform(8).unwrap()) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn kl_values() {
        assert_eq!(kl_div(&b(0.3), &b(0.3)).unwrap(), Kl::Finite(0.0));
        assert_eq!(kl_div(&b(0.5), &FiniteDist::point(2, 0).unwrap()).unwrap(), Kl::Infinite);
        let d = kl_div(&b(0.5), &b(0.25)).unwrap().as_f64();
        assert!((d - 0.2075).abs() < 1e-4, "{d}");
        assert!(kl_div(&b(0.5), &FiniteDist::uniform(3).unwrap()).is_err());
    }

    #[test]
    fn vdist_values() {
        assert_eq!(var_dist(&b(0.2), &b(0.2)).unwrap(), 0.0);
        let a = FiniteDist::point(3, 0).unwrap();
        let c = FiniteDist::point(3, 2).unwrap();
        assert_eq!(var_dist(&a, &c).unwrap(), 2.0);
        assert!((var_dist(&b(0.5), &b(0.25)).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn divergence_report_examples() {
        let r = lemma1_report(&b(0.4), &b(0.4), &b(0.4)).unwrap();
        assert_eq!(r.holds, [true; 3]);
        assert_eq!(r.bound1_lhs, 0.0);

        let r = lemma1_report(&b(0.5), &b(0.25), &b(0.5)).unwrap();
        assert!((r.bound1_rhs - 1.0).abs() < 1e-12);
        assert!((r.bound1_lhs - 0.2075).abs() < 1e-4);
        assert_eq!(r.holds, [true; 3]);

        assert!(lemma1_report(&b(0.5), &FiniteDist::point(2, 1).unwrap(), &b(0.5)).is_err());
    }

    #[test]
    fn eq2_uses_finite_direction() {
        // D(q||p) is infinite since p puts no mass on symbol 1.
        let p = FiniteDist::point(2, 0).unwrap();
        let q = b(0.3);
        let r = lemma1_report(&p, &q, &q).unwrap();
        let d_pq = kl_div(&p, &q).unwrap().as_f64();
        let expect = d_pq + (-0.3f64.log2()) * (2.0 * LN_2).sqrt() * d_pq.sqrt();
        assert!((r.bound2_rhs - expect).abs() < 1e-12);
        assert!(r.holds[1]);
    }

    #[test]
    fn json_parsing() {
        let d = FiniteDist::from_json("[0.5, 0.3, 0.2]").unwrap();
        assert_eq!(d.len(), 3);
        let d = FiniteDist::from_json("[0.3333333333, 0.3333333333, 0.3333333334]").unwrap();
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(FiniteDist::from_json("[0.5, 0.4]").is_err());
        assert!(FiniteDist::from_json("[1.5, -0.5]").is_err());
        assert!(FiniteDist::from_json("[]").is_err());
        let back = serde_json::to_string(&b(0.25)).unwrap();
        assert_eq!(back, "[0.75,0.25]");
    }

    #[test]
    fn strict_constructor() {
        assert!(FiniteDist::new(vec![0.5, 0.5 + 1e-10]).is_err());
        assert!(FiniteDist::new(vec![0.5, 0.5 + 1e-13]).is_ok());
    }
}
