use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::profile::{cached_profile, select_sets, PolarProfile, PolarSets, ProfileMethod};
use super::sc::{sc_decode, sc_sample_fill, Pinned};
use super::transform::{log2_exact, polar_transform};
use crate::bits::{as_bitstring, from_bits, index_bits, to_bits, xor};
use crate::dist::h2;
use crate::error::{Error, Result};
use crate::estimate::Partition;
use crate::exponent::{converse_bound, ConverseInput};
use crate::rng::par_trials;
use crate::stats::{mean_std, Estimate};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarParams {
    /// `N = 2^log_n`; the output has `M = N^2` symbols.
    pub log_n: u32,
    /// Target is Bernoulli(p_y).
    pub p_y: f64,
    pub beta: f64,
    pub t: f64,
    /// Samples for Monte Carlo profiles (`N > 16` or `M > 16`).
    pub samples: u64,
}

impl PolarParams {
    pub fn new(log_n: u32, p_y: f64) -> Self {
        PolarParams { log_n, p_y, beta: 0.3, t: 0.25, samples: super::profile::DEFAULT_MC_SAMPLES }
    }

    pub fn n(&self) -> usize {
        1 << self.log_n
    }

    pub fn m(&self) -> usize {
        1 << (2 * self.log_n)
    }

    fn method(&self, len: usize) -> ProfileMethod {
        if len <= super::profile::EXACT_MAX_N {
            ProfileMethod::Exact
        } else {
            ProfileMethod::MonteCarlo { samples: self.samples }
        }
    }
}

/// Outcome of the parameter estimate that opens a frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step1 {
    pub p_hat: f64,
    /// Cell index in `1..=q`.
    pub i0: usize,
    pub q: usize,
    /// Parameter whose profile is used for compression, in `(0, 1/2]`.
    pub p_lower: f64,
    /// `min(|a_{i0-2} - 1/2|, |a_{i0+1} - 1/2|)`
    pub p_lower_literal: f64,
    /// The cell `[a_{i0-2}, a_{i0+1}]` contains 1/2, so `p_lower = 1/2`.
    pub straddles_half: bool,
    #[serde(with = "as_bitstring")]
    pub i_n: Vec<u8>,
}

pub fn step1_partition(n: usize, t: f64) -> Result<Partition> {
    Partition::new(n, t, 1.0)
}

/// The point of `[a_{i0-2}, a_{i0+1}]` nearest 1/2, folded into `(0, 1/2]`.
pub fn p_lower_for(part: &Partition, i0: usize) -> (f64, f64, bool) {
    let (lo, hi) = part.wide_cell(i0);
    let literal = (lo - 0.5).abs().min((hi - 0.5).abs());
    if lo <= 0.5 && 0.5 <= hi {
        (0.5, literal, true)
    } else {
        (0.5 - literal, literal, false)
    }
}

pub fn polar_step1(x_all: &[u8], n: usize, t: f64, k0: &[u8]) -> Result<Step1> {
    if x_all.is_empty() {
        return Err(Error::pre("empty source"));
    }
    let part = step1_partition(n, t)?;
    let ib = index_bits(part.q as u64);
    if k0.len() as u32 != ib {
        return Err(Error::pre(format!("K_0 has {} bits, need {ib}", k0.len())));
    }
    let p_hat = x_all.iter().filter(|&&b| b == 1).count() as f64 / x_all.len() as f64;
    let i0 = part.select(p_hat);
    let (p_lower, p_lower_literal, straddles_half) = p_lower_for(&part, i0);
    let i_n = xor(&to_bits((i0 - 1) as u128, ib), k0)?;
    Ok(Step1 { p_hat, i0, q: part.q, p_lower, p_lower_literal, straddles_half, i_n })
}

/// `K_0` and a pool from which block `i` takes `K_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarKeys {
    #[serde(with = "as_bitstring")]
    pub k0: Vec<u8>,
    #[serde(with = "as_bitstring")]
    pub pool: Vec<u8>,
}

impl PolarKeys {
    pub fn random<R: Rng + ?Sized>(scheme: &PolarScheme, rng: &mut R) -> Self {
        let k0 = (0..scheme.index_bits()).map(|_| rng.gen_range(0..2u8)).collect();
        let pool = (0..scheme.v_y.len()).map(|_| rng.gen_range(0..2u8)).collect();
        PolarKeys { k0, pool }
    }

    fn block_key(&self, i: usize, len: usize) -> Result<&[u8]> {
        self.pool
            .get(i * len..(i + 1) * len)
            .ok_or_else(|| Error::pre("key pool too short for the number of blocks"))
    }
}

/// Source-side sets for one value of `p_lower`.
#[derive(Clone, Debug)]
pub struct SourceSide {
    pub profile: Arc<PolarProfile>,
    pub sets: PolarSets,
    pub h_minus_v: Vec<usize>,
    pub blocks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarLayout {
    pub blocks: usize,
    pub h_len: usize,
    pub v_len: usize,
    pub i_bits: u32,
    pub r_bits: usize,
    pub v_y_len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarFrame {
    #[serde(with = "as_bitstring")]
    pub y: Vec<u8>,
    pub layout: PolarLayout,
    pub step1: Step1,
    /// Source bits beyond `L N` that were estimated on but not sent.
    pub dropped_bits: usize,
}

/// Target profile and sets, shared by every frame.
pub struct PolarScheme {
    pub params: PolarParams,
    pub target: Arc<PolarProfile>,
    pub target_delta: f64,
    pub v_y: Vec<usize>,
    pub part: Partition,
}

/// `floor((|V_Y| - |I_N|) / |H|)`
pub fn block_count(v_y: usize, i_bits: u32, h_len: usize) -> Result<usize> {
    if h_len == 0 || v_y < i_bits as usize + h_len {
        return Err(Error::pre("blocklength too small for framing"));
    }
    Ok((v_y - i_bits as usize) / h_len)
}

impl PolarScheme {
    pub fn new(params: PolarParams) -> Result<Self> {
        if !(params.p_y > 0.0 && params.p_y < 1.0) {
            return Err(Error::pre("p_y outside (0, 1)"));
        }
        if params.log_n == 0 || params.log_n > 10 {
            return Err(Error::pre("log2 N must be in 1..=10"));
        }
        let m = params.m();
        let target = cached_profile(params.p_y, m, params.method(m))?;
        let sets = select_sets(&target, params.beta)?;
        let part = step1_partition(params.n(), params.t)?;
        Ok(PolarScheme { target_delta: sets.delta, v_y: sets.v_set, target, part, params })
    }

    pub fn index_bits(&self) -> u32 {
        index_bits(self.part.q as u64)
    }

    pub fn source_side(&self, p_lower: f64) -> Result<SourceSide> {
        let n = self.params.n();
        let profile = cached_profile(p_lower, n, self.params.method(n))?;
        let sets = select_sets(&profile, self.params.beta)?;
        let blocks = block_count(self.v_y.len(), self.index_bits(), sets.h_set.len())?;
        Ok(SourceSide { h_minus_v: sets.h_minus_v(), profile, sets, blocks })
    }

    /// Picks `L` so that the estimate over the first `L N` source bits yields
    /// the same `L`, drawing bits from `next` as needed. Returns the bits and
    /// whether a fixed point was reached.
    pub fn fit_source<F: FnMut() -> u8>(&self, mut next: F) -> Result<(Vec<u8>, bool)> {
        let n = self.params.n();
        let zero_key = vec![0u8; self.index_bits() as usize];
        let mut buf: Vec<u8> = (0..n).map(|_| next()).collect();
        let mut l = 1;
        for _ in 0..32 {
            while buf.len() < l * n {
                buf.push(next());
            }
            let s1 = polar_step1(&buf[..l * n], n, self.params.t, &zero_key)?;
            let l2 = self.source_side(s1.p_lower)?.blocks;
            if l2 == l {
                buf.truncate(l * n);
                return Ok((buf, true));
            }
            l = l2;
        }
        while buf.len() < l * n {
            buf.push(next());
        }
        buf.truncate(l * n);
        Ok((buf, false))
    }

    pub fn encode<R: Rng + ?Sized>(&self, x_all: &[u8], keys: &PolarKeys, rng: &mut R) -> Result<PolarFrame> {
        let n = self.params.n();
        let step1 = polar_step1(x_all, n, self.params.t, &keys.k0)?;
        let side = self.source_side(step1.p_lower)?;
        let l = side.blocks;
        if x_all.len() < l * n {
            return Err(Error::pre(format!("need {} source bits for L = {l}, got {}", l * n, x_all.len())));
        }
        let s = side.h_minus_v.len();
        let h_len = side.sets.h_set.len();
        let blocks: Vec<Vec<u8>> = (0..l)
            .into_par_iter()
            .map(|i| -> Result<Vec<u8>> {
                let u = polar_transform(&x_all[i * n..(i + 1) * n])?;
                let mut a: Vec<u8> = side.sets.v_set.iter().map(|&j| u[j]).collect();
                let hv: Vec<u8> = side.h_minus_v.iter().map(|&j| u[j]).collect();
                a.extend(xor(&hv, keys.block_key(i, s)?)?);
                Ok(a)
            })
            .collect::<Result<_>>()?;
        let ib = self.index_bits();
        let r_bits = self.v_y.len() - l * h_len - ib as usize;
        let mut vals: Vec<u8> = blocks.concat();
        vals.extend((0..r_bits).map(|_| rng.gen_range(0..2u8)));
        vals.extend_from_slice(&step1.i_n);
        let fixed = Pinned::from_sets(self.params.m(), &self.v_y, &vals)?;
        let (y, _) = sc_sample_fill(self.params.p_y, &fixed, rng)?;
        Ok(PolarFrame {
            y,
            layout: PolarLayout { blocks: l, h_len, v_len: side.sets.v_set.len(), i_bits: ib, r_bits, v_y_len: self.v_y.len() },
            dropped_bits: x_all.len() - l * n,
            step1,
        })
    }

    /// `None` when the frame does not parse under these keys.
    pub fn decode(&self, y: &[u8], keys: &PolarKeys) -> Result<Option<Vec<u8>>> {
        if y.len() != self.params.m() {
            return Ok(None);
        }
        let v = polar_transform(y)?;
        let vals: Vec<u8> = self.v_y.iter().map(|&j| v[j]).collect();
        let ib = self.index_bits() as usize;
        if keys.k0.len() != ib {
            return Err(Error::pre("K_0 length does not match the partition"));
        }
        let i_field = xor(&vals[vals.len() - ib..], &keys.k0)?;
        let i0 = from_bits(&i_field) as usize + 1;
        if i0 > self.part.q {
            return Ok(None);
        }
        let (p_lower, _, _) = p_lower_for(&self.part, i0);
        let side = self.source_side(p_lower)?;
        let n = self.params.n();
        let h_len = side.sets.h_set.len();
        let s = side.h_minus_v.len();
        let nv = side.sets.v_set.len();
        let idx: Vec<usize> = side.sets.v_set.iter().chain(&side.h_minus_v).copied().collect();
        let out: Vec<Vec<u8>> = (0..side.blocks)
            .into_par_iter()
            .map(|i| -> Result<Vec<u8>> {
                let a = &vals[i * h_len..(i + 1) * h_len];
                let mut known = a[..nv].to_vec();
                known.extend(xor(&a[nv..], keys.block_key(i, s)?)?);
                sc_decode(p_lower, &Pinned::from_sets(n, &idx, &known)?)
            })
            .collect::<Result<_>>()?;
        Ok(Some(out.concat()))
    }

    /// Shared bits a frame consumes: `|K_0| + L |H \ V|`.
    pub fn seed_bits(&self, side: &SourceSide) -> usize {
        self.index_bits() as usize + side.blocks * side.h_minus_v.len()
    }
}

pub fn polar_encode<R: Rng + ?Sized>(x_all: &[u8], params: &PolarParams, keys: &PolarKeys, rng: &mut R) -> Result<PolarFrame> {
    PolarScheme::new(params.clone())?.encode(x_all, keys, rng)
}

pub fn polar_decode(y: &[u8], params: &PolarParams, keys: &PolarKeys) -> Result<Option<Vec<u8>>> {
    PolarScheme::new(params.clone())?.decode(y, keys)
}

/// Recovery of one block from `U[H]` alone, with the sets taken at `p_lower`.
pub fn block_recovery(x: &[u8], p_lower: f64, sets: &PolarSets) -> Result<bool> {
    log2_exact(x.len())?;
    let u = polar_transform(x)?;
    let vals: Vec<u8> = sets.h_set.iter().map(|&j| u[j]).collect();
    let known = Pinned::from_sets(x.len(), &sets.h_set, &vals)?;
    Ok(sc_decode(p_lower, &known)? == x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarConverse {
    /// Bound with zero divergence; the strongest form.
    pub bound: f64,
    pub measured: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarReport {
    pub n: usize,
    pub m: usize,
    pub p: f64,
    pub p_y: f64,
    pub frames: u64,
    pub v_y_len: usize,
    pub recovery: Estimate,
    pub decode_failures: u64,
    pub ones_fraction: f64,
    /// `sum |freq - p_Y|` over `{0, 1}`.
    pub marginal_vdist: f64,
    pub blocks_mean: f64,
    pub p_lower_mean: f64,
    pub straddle_frames: u64,
    pub unfitted_frames: u64,
    pub seed_bits_mean: f64,
    /// `(|K_0| + sum |K_i|) / (L N)`
    pub seed_ratio: f64,
    /// `M / (L N)`
    pub rate_mean: f64,
    pub converse: PolarConverse,
}

struct FrameOutcome {
    ok: bool,
    failed: bool,
    ones: usize,
    blocks: usize,
    p_lower: f64,
    straddles: bool,
    fitted: bool,
    seed_bits: usize,
}

/// Encodes and decodes `frames` frames of Bernoulli(p) source bits.
pub fn polar_experiment(params: &PolarParams, p: f64, frames: u64, master: u64) -> Result<PolarReport> {
    if frames == 0 {
        return Err(Error::pre("need at least one frame"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::pre("p outside (0, 1)"));
    }
    let scheme = PolarScheme::new(params.clone())?;
    let n = params.n();
    let outcomes = par_trials(master, "polar/frame", frames, |rng, _| -> Result<FrameOutcome> {
        let mut src = crate::rng::derive_stream(rng.gen(), "polar/source", 0);
        let (x_all, fitted) = scheme.fit_source(|| (src.gen::<f64>() < p) as u8)?;
        let keys = PolarKeys::random(&scheme, rng);
        let frame = scheme.encode(&x_all, &keys, rng)?;
        let got = scheme.decode(&frame.y, &keys)?;
        let used = &x_all[..frame.layout.blocks * n];
        let side = scheme.source_side(frame.step1.p_lower)?;
        Ok(FrameOutcome {
            ok: got.as_deref() == Some(used),
            failed: got.is_none(),
            ones: frame.y.iter().filter(|&&b| b == 1).count(),
            blocks: frame.layout.blocks,
            p_lower: frame.step1.p_lower,
            straddles: frame.step1.straddles_half,
            fitted,
            seed_bits: scheme.seed_bits(&side),
        })
    });
    let outcomes: Vec<FrameOutcome> = outcomes.into_iter().collect::<Result<_>>()?;
    let f = frames as f64;
    let m = params.m();
    let ones: usize = outcomes.iter().map(|o| o.ones).sum();
    let ones_fraction = ones as f64 / (f * m as f64);
    let ok = outcomes.iter().filter(|o| o.ok).count() as u64;
    let rates: Vec<f64> = outcomes.iter().map(|o| m as f64 / (o.blocks * n) as f64).collect();
    let ratios: f64 = outcomes.iter().map(|o| o.seed_bits as f64).sum::<f64>() / outcomes.iter().map(|o| (o.blocks * n) as f64).sum::<f64>();
    let rate_mean = mean_std(&rates).mean;
    let pe = 1.0 - ok as f64 / f;
    let bound = converse_bound(&ConverseInput {
        n: outcomes.iter().map(|o| o.blocks * n).min().unwrap_or(n),
        h_x: h2(p),
        h_y: h2(params.p_y),
        eps_n: pe,
        divergence: 0.0,
        alphabet_y: 2,
        m,
    })?;
    Ok(PolarReport {
        n,
        m,
        p,
        p_y: params.p_y,
        frames,
        v_y_len: scheme.v_y.len(),
        recovery: Estimate::binomial(ok, frames),
        decode_failures: outcomes.iter().filter(|o| o.failed).count() as u64,
        ones_fraction,
        marginal_vdist: 2.0 * (ones_fraction - params.p_y).abs(),
        blocks_mean: outcomes.iter().map(|o| o.blocks as f64).sum::<f64>() / f,
        p_lower_mean: outcomes.iter().map(|o| o.p_lower).sum::<f64>() / f,
        straddle_frames: outcomes.iter().filter(|o| o.straddles).count() as u64,
        unfitted_frames: outcomes.iter().filter(|o| !o.fitted).count() as u64,
        seed_bits_mean: outcomes.iter().map(|o| o.seed_bits as f64).sum::<f64>() / f,
        seed_ratio: ratios,
        rate_mean,
        converse: PolarConverse { bound, measured: rate_mean, holds: rate_mean >= bound },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub n: usize,
    pub p: f64,
    pub beta: f64,
    pub h_fraction: f64,
    pub p_hat: f64,
    pub p_lower: f64,
    pub h_lower_fraction: f64,
    pub recovery: Estimate,
}

/// `|H|/N` at the true `p`, and SC recovery from `U[H]` with the sets taken
/// at the `p_lower` that a Step 1 estimate on `blocks` fresh blocks yields.
pub fn polar_reliability(log_n: u32, p: f64, beta: f64, t: f64, samples: u64, blocks: usize, trials: u64, master: u64) -> Result<ReliabilityReport> {
    let n = 1usize << log_n;
    let method = if n <= super::profile::EXACT_MAX_N { ProfileMethod::Exact } else { ProfileMethod::MonteCarlo { samples } };
    let at_p = select_sets(&*cached_profile(p, n, method)?, beta)?;
    let mut rng = crate::rng::derive_stream(master, "polar/step1", 0);
    let est: Vec<u8> = (0..blocks.max(1) * n).map(|_| (rng.gen::<f64>() < p) as u8).collect();
    let part = step1_partition(n, t)?;
    let s1 = polar_step1(&est, n, t, &vec![0; index_bits(part.q as u64) as usize])?;
    let lower = select_sets(&*cached_profile(s1.p_lower, n, method)?, beta)?;
    let ok = par_trials(master, "polar/reliability", trials, |rng, _| {
        let x: Vec<u8> = (0..n).map(|_| (rng.gen::<f64>() < p) as u8).collect();
        block_recovery(&x, s1.p_lower, &lower)
    });
    let hits = ok.into_iter().collect::<Result<Vec<bool>>>()?.into_iter().filter(|&b| b).count() as u64;
    Ok(ReliabilityReport {
        n,
        p,
        beta,
        h_fraction: at_p.h_set.len() as f64 / n as f64,
        p_hat: s1.p_hat,
        p_lower: s1.p_lower,
        h_lower_fraction: lower.h_set.len() as f64 / n as f64,
        recovery: Estimate::binomial(hits, trials),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step1_examples() {
        let s = polar_step1(&[1; 32], 16, 0.25, &[0]).unwrap();
        assert_eq!((s.p_hat, s.i0, s.q), (1.0, 2, 2));
        let mut x = vec![0u8; 10];
        x[..3].fill(1);
        let s = polar_step1(&x, 16, 0.25, &[1]).unwrap();
        assert_eq!(s.i0, 1);
        assert_eq!(xor(&s.i_n, &[1]).unwrap(), vec![0]);
        assert!(polar_step1(&x, 16, 0.25, &[]).is_err());
    }

    #[test]
    fn p_lower_cells() {
        let part = step1_partition(1024, 0.25).unwrap();
        assert_eq!(part.q, 6);
        let (pl, lit, st) = p_lower_for(&part, 1);
        assert!(!st);
        assert!((pl - 2.0 * 1024f64.powf(-0.25)).abs() < 1e-12);
        assert!((lit - (0.5 - pl)).abs() < 1e-12);
        let (pl, _, st) = p_lower_for(&part, 3);
        assert!(st);
        assert_eq!(pl, 0.5);
        let (hi, _, _) = p_lower_for(&part, 6);
        assert!((hi - (0.5 - (4.0 * part.delta - 0.5))).abs() < 1e-12);
    }

    #[test]
    fn layout_floor() {
        assert_eq!(block_count(100, 10, 30).unwrap(), 3);
        assert_eq!(100 - 3 * 30 - 10, 0);
        assert!(block_count(30, 2, 30).is_err());
        assert!(block_count(30, 2, 0).is_err());
    }

    #[test]
    fn small_roundtrip() {
        let params = PolarParams::new(3, 0.4);
        let scheme = PolarScheme::new(params).unwrap();
        let mut rng = crate::rng::derive_stream(1, "t", 0);
        for _ in 0..20 {
            let (x, _) = scheme.fit_source(|| (rng.gen::<f64>() < 0.2) as u8).unwrap();
            let keys = PolarKeys::random(&scheme, &mut rng);
            let f = scheme.encode(&x, &keys, &mut rng).unwrap();
            assert_eq!(f.y.len(), 64);
            let got = scheme.decode(&f.y, &keys).unwrap().unwrap();
            assert_eq!(got, x[..f.layout.blocks * 8]);
        }
    }
}
