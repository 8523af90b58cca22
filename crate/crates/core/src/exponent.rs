//! Error exponents and bounds for the uniform codes, and the rate converse.

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::dist::{entropy_of, h2, kl_of, FiniteDist};
use crate::error::{Error, Result};
use crate::stats::slope;
use crate::uniform::UniformCodeConfig;

const H_TOL: f64 = 1e-10;
pub const MAX_ALPHABET: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `H(q) <= R`
    AtMost,
    /// `H(q) >= R`
    AtLeast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinDiv {
    /// Bits; `+inf` if the constraint set is empty.
    pub value: f64,
    pub argmin: Vec<f64>,
    pub method: String,
}

fn d(q: &[f64], p: &[f64]) -> f64 {
    kl_of(q, p).as_f64()
}

/// `p` in `[0, 1/2]` with `h2(p) = r`.
pub fn inverse_h2(r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    if r >= 1.0 {
        return 0.5;
    }
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h2(mid) < r {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// `min D(q || p)` over the simplex subject to `H(q) <= R` or `H(q) >= R`.
pub fn min_div_entropy_constrained(p: &FiniteDist, r: f64, dir: Direction) -> Result<MinDiv> {
    let k = p.len();
    if k > MAX_ALPHABET {
        return Err(Error::Cap { what: "alphabet for divergence minimization", needed: k as u128, cap: MAX_ALPHABET as u128 });
    }
    if !p.full_support() {
        return Err(Error::pre("p must have full support"));
    }
    if !r.is_finite() || r < 0.0 {
        return Err(Error::pre(format!("entropy level {r} must be non-negative")));
    }
    let hp = entropy_of(p.probs());
    let feasible_at_p = match dir {
        Direction::AtMost => hp <= r + H_TOL,
        Direction::AtLeast => hp >= r - H_TOL,
    };
    if feasible_at_p {
        return Ok(MinDiv { value: 0.0, argmin: p.probs().to_vec(), method: "unconstrained".into() });
    }
    let hmax = (k as f64).log2();
    if dir == Direction::AtLeast && r > hmax + H_TOL {
        return Ok(MinDiv { value: f64::INFINITY, argmin: vec![], method: "infeasible".into() });
    }
    if k == 1 {
        // only reachable for AtLeast with r > 0
        return Ok(MinDiv { value: f64::INFINITY, argmin: vec![], method: "infeasible".into() });
    }
    if k == 2 {
        return Ok(binary_min_div(p.p(1), r.min(1.0), dir));
    }
    Ok(simplex_min_div(p.probs(), r.min(hmax), dir))
}

/// The constraint is active at the optimum, so the minimizer is one of the
/// two points with `h2(q) = R`; take whichever is nearer to `p` in divergence.
fn binary_min_div(p1: f64, r: f64, dir: Direction) -> MinDiv {
    let p = [1.0 - p1, p1];
    let a = inverse_h2(r);
    let cands: Vec<f64> = match dir {
        Direction::AtMost => vec![a, 1.0 - a],
        Direction::AtLeast => vec![if p1 < a { a } else { 1.0 - a }],
    };
    let best = cands
        .into_iter()
        .map(|q1| (d(&[1.0 - q1, q1], &p), q1))
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .unwrap();
    MinDiv { value: best.0, argmin: vec![1.0 - best.1, best.1], method: "binary bisection (1e-16 in q)".into() }
}

/// Entropy of `q_s ∝ p^s` restricted to `support`.
fn tilt(p: &[f64], support: &[usize], s: f64) -> Vec<f64> {
    let lmax = support.iter().map(|&i| s * p[i].ln()).fold(f64::NEG_INFINITY, f64::max);
    let mut q = vec![0.0; p.len()];
    let mut z = 0.0;
    for &i in support {
        let w = (s * p[i].ln() - lmax).exp();
        q[i] = w;
        z += w;
    }
    q.iter_mut().for_each(|v| *v /= z);
    q
}

/// Points of the power family `p^s` (on every support subset) with `H = r`.
/// Every interior stationary point of `D(q||p) + lambda H(q)` on a face has
/// this form.
fn tilted_candidates(p: &[f64], r: f64) -> Vec<Vec<f64>> {
    let k = p.len();
    let mut out = Vec::new();
    for mask in 1u32..(1 << k) {
        let support: Vec<usize> = (0..k).filter(|i| mask >> i & 1 == 1).collect();
        if support.len() == 1 {
            if r.abs() < H_TOL {
                out.push(tilt(p, &support, 1.0));
            }
            continue;
        }
        let h0 = (support.len() as f64).log2();
        if r > h0 + H_TOL {
            continue;
        }
        // H(s) rises on (-inf, 0] and falls on [0, inf).
        for sign in [1.0, -1.0] {
            let hs = |s: f64| entropy_of(&tilt(p, &support, sign * s));
            let mut hi = 1.0;
            while hs(hi) > r && hi < 1e6 {
                hi *= 2.0;
            }
            if hs(hi) > r + H_TOL {
                continue;
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if hs(mid) > r {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out.push(tilt(p, &support, sign * 0.5 * (lo + hi)));
        }
    }
    out
}

fn feasible(q: &[f64], r: f64, dir: Direction) -> bool {
    let h = entropy_of(q);
    match dir {
        Direction::AtMost => h <= r + H_TOL,
        Direction::AtLeast => h >= r - H_TOL,
    }
}

fn grid_points(k: usize, step: f64) -> Vec<Vec<f64>> {
    let m = (1.0 / step).round() as usize;
    let mut out = Vec::new();
    let mut c = vec![0usize; k];
    fn rec(c: &mut Vec<usize>, pos: usize, left: usize, m: usize, out: &mut Vec<Vec<f64>>) {
        if pos + 1 == c.len() {
            c[pos] = left;
            out.push(c.iter().map(|&v| v as f64 / m as f64).collect());
            return;
        }
        for v in 0..=left {
            c[pos] = v;
            rec(c, pos + 1, left - v, m, out);
        }
    }
    rec(&mut c, 0, m, m, &mut out);
    out
}

/// Pattern search along pairwise mass transfers, keeping feasibility.
fn refine(p: &[f64], r: f64, dir: Direction, start: Vec<f64>, step0: f64) -> Vec<f64> {
    let k = p.len();
    let mut q = start;
    let mut best = d(&q, p);
    let mut step = step0;
    while step > 1e-12 {
        let mut improved = false;
        for i in 0..k {
            for j in 0..k {
                if i == j || q[j] < step {
                    continue;
                }
                let mut cand = q.clone();
                cand[i] += step;
                cand[j] -= step;
                if !feasible(&cand, r, dir) {
                    continue;
                }
                let v = d(&cand, p);
                if v < best {
                    best = v;
                    q = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    q
}

fn simplex_min_div(p: &[f64], r: f64, dir: Direction) -> MinDiv {
    let k = p.len();
    let step = if k == 3 { 1e-3 } else { 1e-2 };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut consider = |q: Vec<f64>| {
        if !feasible(&q, r, dir) {
            return;
        }
        let v = d(&q, p);
        if best.as_ref().map_or(true, |b| v < b.0) {
            best = Some((v, q));
        }
    };
    for q in tilted_candidates(p, r) {
        consider(q);
    }
    let mut grid_best: Option<(f64, Vec<f64>)> = None;
    for q in grid_points(k, step) {
        if feasible(&q, r, dir) {
            let v = d(&q, p);
            if grid_best.as_ref().map_or(true, |b| v < b.0) {
                grid_best = Some((v, q));
            }
        }
    }
    if let Some((_, q)) = grid_best {
        consider(refine(p, r, dir, q, step));
    }
    match best {
        Some((v, q)) => MinDiv {
            value: v,
            argmin: q,
            method: format!("power-family candidates + simplex grid {step:e} refined locally"),
        },
        None => MinDiv { value: f64::INFINITY, argmin: vec![], method: "infeasible".into() },
    }
}

/// Inputs of the exponential bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentQuery {
    pub p: FiniteDist,
    pub n: usize,
    /// Decoding threshold `R_n`.
    pub rate: f64,
    pub seed_bits: f64,
    pub gamma: f64,
    /// Rate and gamma describing the codomain, used on the uniformity side.
    /// They equal `rate` and `gamma` unless the codomain was rounded up.
    pub ue_rate: f64,
    pub ue_gamma: f64,
}

impl ExponentQuery {
    pub fn new(p: FiniteDist, n: usize, rate: f64, seed_bits: f64, gamma: f64) -> Self {
        ExponentQuery { p, n, rate, seed_bits, gamma, ue_rate: rate, ue_gamma: gamma }
    }

    /// Query for an implemented code: the codomain is `2^(rate_bits + gamma_bits)`
    /// cells, which is what the uniformity bound must use.
    pub fn for_code(cfg: &UniformCodeConfig, p: &FiniteDist) -> Self {
        ExponentQuery {
            p: p.clone(),
            n: cfg.n,
            rate: cfg.rate,
            seed_bits: cfg.seed_bits as f64,
            gamma: cfg.gamma,
            ue_rate: cfg.rate_bits as f64 / cfg.n as f64,
            ue_gamma: cfg.gamma_bits as f64,
        }
    }

    /// `R(d) = R - d/n + 2 gamma / n`
    pub fn r_of_d(&self) -> f64 {
        let n = self.n as f64;
        self.ue_rate - self.seed_bits / n + 2.0 * self.ue_gamma / n
    }
}

/// `E = min_q [H(q) - R]^+ + 2 D(q||p)`.
///
/// Splits on the sign of `H(q) - R`. On `H >= R` the objective is
/// `D(q || p^2) - R` up to normalization, minimized at `q ∝ p^2` when that
/// point is feasible and on the boundary `H = R` otherwise.
pub fn exponent_e(p: &FiniteDist, r: f64) -> Result<f64> {
    let hp = entropy_of(p.probs());
    if r >= hp {
        return Ok(0.0);
    }
    let r = r.max(0.0);
    let below = 2.0 * min_div_entropy_constrained(p, r, Direction::AtMost)?.value;
    let z: f64 = p.probs().iter().map(|x| x * x).sum();
    let q: Vec<f64> = p.probs().iter().map(|x| x * x / z).collect();
    let above = if entropy_of(&q) >= r { -z.log2() - r } else { f64::INFINITY };
    Ok(below.min(above))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedBounds {
    /// `min D` over types with `H > R_n`.
    pub pe_exponent: f64,
    /// `2^(-n pe_exponent + gamma)`
    pub pe_bound: f64,
    pub pe_vacuous: bool,
    pub r_of_d: f64,
    pub e_n: f64,
    /// `min_{H <= R(d)} D`, a lower bound on `e_n`.
    pub e_lower: f64,
    /// `2 * 2^(-(n/2) E + gamma)`
    pub ue_bound: f64,
    pub ue_vacuous: bool,
}

pub fn predicted_bounds(q: &ExponentQuery) -> Result<PredictedBounds> {
    let n = q.n as f64;
    let pe_exponent = min_div_entropy_constrained(&q.p, q.rate, Direction::AtLeast)?.value;
    let pe_bound = (-n * pe_exponent + q.gamma).exp2();
    let r_d = q.r_of_d();
    let e_n = exponent_e(&q.p, r_d)?;
    let e_lower = if r_d >= 0.0 {
        min_div_entropy_constrained(&q.p, r_d, Direction::AtMost)?.value
    } else {
        f64::INFINITY
    };
    let ue_bound = 2.0 * (-(n / 2.0) * e_n + q.ue_gamma).exp2();
    Ok(PredictedBounds {
        pe_exponent,
        pe_bound,
        pe_vacuous: pe_bound > 1.0,
        r_of_d: r_d,
        e_n,
        e_lower,
        ue_bound,
        ue_vacuous: ue_bound >= 2.0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichRow {
    pub eps: f64,
    pub exact_min: f64,
    /// `eps^2 (1 + log(1/mu) sqrt(2 ln 2))^-2`
    pub lower: f64,
    /// `eps^2 (1 + log|X| sqrt(2 ln 2))^-1`, the constant as printed in the
    /// final display of the quadratic-rate argument.
    pub lower_printed: f64,
    /// `(eps / mu) / log(p_max / p_min)`; `None` when `p` is uniform.
    pub upper: Option<f64>,
    pub lower_holds: bool,
    pub lower_printed_holds: bool,
    pub upper_holds: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub rows: Vec<SandwichRow>,
    /// Least-squares slope of `log min` against `log eps`.
    pub slope: f64,
    pub upper_skipped: bool,
}

/// Checks `lower(eps) <= min_{H <= H(p) - eps} D <= upper(eps)` on a grid.
pub fn lemma_sandwich_checks(p: &FiniteDist, eps_grid: &[f64]) -> Result<SandwichReport> {
    let hp = entropy_of(p.probs());
    let mu = p.min_prob();
    if mu <= 0.0 {
        return Err(Error::pre("p must have full support"));
    }
    let c = (-mu.log2()) * (2.0 * LN_2).sqrt();
    let c_printed = (p.len() as f64).log2() * (2.0 * LN_2).sqrt();
    let pmax = p.probs().iter().cloned().fold(0.0, f64::max);
    let upper_skipped = (pmax - mu).abs() < 1e-15;
    let mut rows = Vec::new();
    for &eps in eps_grid {
        if !(eps > 0.0 && eps < hp) {
            return Err(Error::pre(format!("eps {eps} outside (0, H(p))")));
        }
        let exact = min_div_entropy_constrained(p, hp - eps, Direction::AtMost)?.value;
        let lower = eps * eps / (1.0 + c).powi(2);
        let lower_printed = eps * eps / (1.0 + c_printed);
        let upper = (!upper_skipped).then(|| (eps / mu) / (pmax / mu).log2());
        rows.push(SandwichRow {
            eps,
            exact_min: exact,
            lower,
            lower_printed,
            upper,
            lower_holds: lower <= exact + 1e-12,
            lower_printed_holds: lower_printed <= exact + 1e-12,
            upper_holds: upper.map(|u| exact <= u + 1e-12),
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.eps.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.exact_min.ln()).collect();
    let s = if rows.len() >= 2 { slope(&xs, &ys) } else { f64::NAN };
    Ok(SandwichReport { rows, slope: s, upper_skipped })
}

pub fn sandwich_csv(rep: &SandwichReport) -> String {
    let mut s = String::from("eps,exact_min,lower,upper,slope\n");
    for r in &rep.rows {
        let up = r.upper.map(|u| format!("{u:.12e}")).unwrap_or_default();
        s.push_str(&format!("{},{:.12e},{:.12e},{},{:.6}\n", r.eps, r.exact_min, r.lower, up, rep.slope));
    }
    s
}

/// Inputs of the rate converse.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConverseInput {
    pub n: usize,
    pub h_x: f64,
    pub h_y: f64,
    /// Fano term per source symbol: `P_e log|X|` in bits.
    pub eps_n: f64,
    /// Measured (or bounded) `D(p_output || p_Y^m)` in bits.
    pub divergence: f64,
    pub alphabet_y: usize,
    /// Output length the divergence refers to.
    pub m: usize,
}

/// Entropy-gap term: with `theta = sqrt(2 ln 2 D)`, `theta log(|Y|^m / theta)`
/// when `theta <= 1/2`, never more than the trivial `m log|Y|`.
pub fn entropy_gap_bound(divergence: f64, alphabet_y: usize, m: usize) -> f64 {
    let trivial = m as f64 * (alphabet_y as f64).log2();
    if divergence <= 0.0 {
        return 0.0;
    }
    let theta = (2.0 * LN_2 * divergence).sqrt();
    if theta > 0.5 {
        return trivial;
    }
    (theta * (trivial - theta.log2())).min(trivial)
}

/// Lower bound on `m/n`:
/// `H_X/H_Y - 1/(n H_Y) - eps_n/H_Y - gap/(n H_Y)`.
pub fn converse_bound(c: &ConverseInput) -> Result<f64> {
    if !(c.h_y > 0.0) {
        return Err(Error::pre("target entropy must be positive"));
    }
    let n = c.n as f64;
    let gap = entropy_gap_bound(c.divergence, c.alphabet_y, c.m);
    Ok(c.h_x / c.h_y - 1.0 / (n * c.h_y) - c.eps_n / c.h_y - gap / (n * c.h_y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::entropy;

    fn b(p: f64) -> FiniteDist {
        FiniteDist::bernoulli(p).unwrap()
    }

    #[test]
    fn trivial_cases() {
        let p = b(0.3);
        let hp = entropy(&p);
        assert_eq!(min_div_entropy_constrained(&p, hp, Direction::AtMost).unwrap().value, 0.0);
        assert_eq!(min_div_entropy_constrained(&p, hp, Direction::AtLeast).unwrap().value, 0.0);
        let v = min_div_entropy_constrained(&b(0.5), 0.0, Direction::AtMost).unwrap().value;
        assert!((v - 1.0).abs() < 1e-9, "{v}");
        assert_eq!(
            min_div_entropy_constrained(&b(0.3), 1.5, Direction::AtLeast).unwrap().value,
            f64::INFINITY
        );
        assert!(min_div_entropy_constrained(&FiniteDist::uniform(5).unwrap(), 1.0, Direction::AtMost).is_err());
    }

    #[test]
    fn inverse_entropy() {
        for r in [0.01, 0.3, 0.5, 0.99] {
            assert!((h2(inverse_h2(r)) - r).abs() < 1e-12);
        }
    }

    #[test]
    fn ternary_matches_binary_embedding_direction() {
        // A ternary p with one tiny letter behaves close to the binary case.
        let p3 = FiniteDist::new(vec![0.7, 0.2, 0.1]).unwrap();
        let r = 0.8;
        let m = min_div_entropy_constrained(&p3, r, Direction::AtMost).unwrap();
        assert!((entropy_of(&m.argmin) - r).abs() < 1e-6);
        // no grid point does better
        for q in grid_points(3, 0.01) {
            if entropy_of(&q) <= r {
                assert!(d(&q, p3.probs()) >= m.value - 1e-9);
            }
        }
    }

    #[test]
    fn exponent_e_matches_grid() {
        for (p1, r) in [(0.3, 0.5), (0.3, 0.85), (0.1, 0.2), (0.45, 0.3), (0.2, 0.7)] {
            let p = b(p1);
            let e = exponent_e(&p, r).unwrap();
            let mut g = f64::INFINITY;
            for i in 0..=200_000 {
                let q1 = i as f64 / 200_000.0;
                let q = [1.0 - q1, q1];
                let v = (entropy_of(&q) - r).max(0.0) + 2.0 * d(&q, p.probs());
                g = g.min(v);
            }
            assert!(e <= g + 1e-12 && g - e < 1e-4, "p={p1} r={r}: {e} vs {g}");
        }
    }

    #[test]
    fn converse_formula() {
        let c = ConverseInput { n: 100, h_x: 0.5, h_y: 1.0, eps_n: 0.0, divergence: 0.0, alphabet_y: 2, m: 60 };
        assert!((converse_bound(&c).unwrap() - (0.5 - 0.01)).abs() < 1e-12);
        let big = ConverseInput { n: 1_000_000_000, ..c.clone() };
        assert!((converse_bound(&big).unwrap() - 0.5).abs() < 1e-8);
        let noisy = ConverseInput { divergence: 0.01, ..c.clone() };
        assert!(converse_bound(&noisy).unwrap() < converse_bound(&c).unwrap());
        assert!(converse_bound(&ConverseInput { h_y: 0.0, ..c }).is_err());
        assert_eq!(entropy_gap_bound(10.0, 2, 5), 5.0);
    }

    #[test]
    fn sandwich_bern03() {
        let grid: Vec<f64> = (1..=10).map(|i| 0.02 * i as f64).collect();
        let rep = lemma_sandwich_checks(&b(0.3), &grid).unwrap();
        for r in &rep.rows {
            assert!(r.lower_holds && r.upper_holds == Some(true), "{r:?}");
        }
        assert!((1.5..=2.5).contains(&rep.slope), "{}", rep.slope);
        let rep = lemma_sandwich_checks(&b(0.5), &[0.1]).unwrap();
        assert!(rep.upper_skipped && rep.rows[0].upper.is_none());
        assert!(sandwich_csv(&rep).starts_with("eps,exact_min,lower,upper,slope\n"));
    }

    #[test]
    fn vacuous_flag() {
        let q = ExponentQuery::new(b(0.3), 4, 1.2, 2.0, 4.0 * 2.0f64.log2() + 10.0);
        let pb = predicted_bounds(&q).unwrap();
        assert!(pb.r_of_d >= 1.0);
        assert_eq!(pb.e_n, 0.0);
        assert!(pb.ue_vacuous && pb.ue_bound >= 2.0);
    }
}
