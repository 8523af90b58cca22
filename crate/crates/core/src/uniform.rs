//! Seeded uniform source codes and their error / uniformity measurements.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::FiniteDist;
use crate::error::{Error, Result};
use crate::maps::{gamma, gamma_bits, injective_type, MapKey, Prp, Seed, SeededMaps, MAX_BITS};
use crate::rng::par_trials;
use crate::stats::{ceil_snap, Estimate};
use crate::types::{all_sequences, enumerate_types, num_types, rank_in_type, type_at, type_index, type_of, unrank_in_type, TypeClass};

/// How the code rate is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RateMode {
    /// Source entropy known exactly: `R_n = H + eps_n`.
    Exact { h: f64 },
    /// Entropy known to lie in `[h_lo, h_hi]`: `R_n = h_hi + eps_n`.
    Interval { h_lo: f64, h_hi: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformCodeConfig {
    pub n: usize,
    pub alphabet: usize,
    pub beta: f64,
    pub mode: RateMode,
    /// `ceil(n^(1/2 + beta)) / n`
    pub eps_n: f64,
    /// `|X| log2(n + 1)`
    pub gamma: f64,
    pub gamma_bits: u32,
    /// `R_n`, bits per symbol.
    pub rate: f64,
    /// `ceil(n R_n)`
    pub rate_bits: u32,
    /// Seed length in use.
    pub seed_bits: u32,
    /// Seed length the schedule asks for, before any override.
    pub seed_bits_schedule: u32,
    pub key: MapKey,
}

/// `ceil(n^(1/2 + beta))`
pub fn eps_count(n: usize, beta: f64) -> u64 {
    ceil_snap((n as f64).powf(0.5 + beta)) as u64
}

pub fn make_uniform_code(n: usize, alphabet: usize, beta: f64, mode: RateMode, key: MapKey) -> Result<UniformCodeConfig> {
    if n == 0 || alphabet == 0 {
        return Err(Error::pre("need n >= 1 and a non-empty alphabet"));
    }
    if !(beta > 0.0) {
        return Err(Error::pre("beta must be positive"));
    }
    let hmax = (alphabet as f64).log2() + 1e-12;
    let c = eps_count(n, beta);
    let eps_n = c as f64 / n as f64;
    let g = gamma(n, alphabet);
    let gb = gamma_bits(n, alphabet);
    let (rate, seed_bits) = match mode {
        RateMode::Exact { h } => {
            if !(0.0..=hmax).contains(&h) {
                return Err(Error::pre(format!("entropy {h} outside [0, log|X|]")));
            }
            (h + eps_n, 2 * c + 2 * ceil_snap(g) as u64)
        }
        RateMode::Interval { h_lo, h_hi } => {
            if !(0.0 <= h_lo && h_lo < h_hi && h_hi <= hmax) {
                return Err(Error::pre(format!("bad entropy interval [{h_lo}, {h_hi}]")));
            }
            let spread = ceil_snap(n as f64 * (h_hi - h_lo)) as u64;
            (h_hi + eps_n, 2 * (c + ceil_snap(g) as u64) + spread)
        }
    };
    let rate_bits = ceil_snap(n as f64 * rate) as u64;
    if rate_bits > MAX_BITS as u64 || gb > MAX_BITS {
        return Err(Error::Cap { what: "code width (bits)", needed: rate_bits.max(gb as u64) as u128, cap: MAX_BITS as u128 });
    }
    let seed_bits = u32::try_from(seed_bits).map_err(|_| Error::pre("seed length overflow"))?;
    Ok(UniformCodeConfig {
        n,
        alphabet,
        beta,
        mode,
        eps_n,
        gamma: g,
        gamma_bits: gb,
        rate,
        rate_bits: rate_bits as u32,
        seed_bits,
        seed_bits_schedule: seed_bits,
        key,
    })
}

impl UniformCodeConfig {
    /// Overrides the seed length (used to keep exhaustive experiments small).
    pub fn with_seed_bits(mut self, bits: u32) -> Self {
        self.seed_bits = bits;
        self
    }

    pub fn message_bits(&self) -> u32 {
        self.rate_bits + self.gamma_bits
    }
}

/// The pair `(i, j)`: sequence index and type index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UcMessage {
    pub i: u128,
    pub j: u128,
}

impl UcMessage {
    /// `i` then `j`, most significant bit first.
    pub fn to_bits(&self, cfg: &UniformCodeConfig) -> Vec<u8> {
        let mut out = crate::bits::to_bits(self.i, cfg.rate_bits);
        out.extend(crate::bits::to_bits(self.j, cfg.gamma_bits));
        out
    }

    pub fn from_bits(bits: &[u8], cfg: &UniformCodeConfig) -> Result<Self> {
        if bits.len() != cfg.message_bits() as usize {
            return Err(Error::Format(format!("message has {} bits, code expects {}", bits.len(), cfg.message_bits())));
        }
        let (a, b) = bits.split_at(cfg.rate_bits as usize);
        Ok(UcMessage { i: crate::bits::from_bits(a), j: crate::bits::from_bits(b) })
    }
}

/// Result of decoding one message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decoded {
    /// The type is decodable and the index was in the image.
    Sequence(Vec<u8>),
    /// The type has entropy above the rate; the all-zeros placeholder.
    Fallback(Vec<u8>),
    /// No sequence maps to this message.
    Failure,
}

impl Decoded {
    pub fn sequence(&self) -> Option<&[u8]> {
        match self {
            Decoded::Sequence(x) | Decoded::Fallback(x) => Some(x),
            Decoded::Failure => None,
        }
    }
}

/// A configured code with its key schedule expanded.
#[derive(Clone, Debug)]
pub struct UniformCode {
    pub cfg: UniformCodeConfig,
    maps: SeededMaps,
}

impl UniformCode {
    pub fn new(cfg: UniformCodeConfig) -> Self {
        let maps = SeededMaps::new(&cfg.key);
        UniformCode { cfg, maps }
    }

    fn check_len(&self, x: &[u8]) -> Result<()> {
        if x.len() != self.cfg.n {
            return Err(Error::pre(format!("sequence length {} but n = {}", x.len(), self.cfg.n)));
        }
        Ok(())
    }

    pub fn encode(&self, u: &Seed, x: &[u8]) -> Result<UcMessage> {
        self.check_len(x)?;
        let c = &self.cfg;
        let t = type_of(x, c.alphabet)?;
        let uw = self.maps.seed_word(u);
        let tidx = type_index(&t);
        let i = if injective_type(&t, c.rate) {
            let r = rank_in_type(x, c.alphabet)?;
            let r = u128::try_from(r).map_err(|_| Error::pre("rank exceeds 128 bits"))?;
            self.maps.phi1_prp(uw, tidx, c.rate_bits).permute(r)
        } else {
            self.maps.prf(uw, x, c.rate_bits)
        };
        let j = self.maps.phi2_prp(uw, c.gamma_bits).permute(tidx);
        Ok(UcMessage { i, j })
    }

    pub fn decode(&self, u: &Seed, m: &UcMessage) -> Result<Decoded> {
        let c = &self.cfg;
        if c.rate_bits < 128 && m.i >> c.rate_bits != 0 || c.gamma_bits < 128 && m.j >> c.gamma_bits != 0 {
            return Err(Error::pre("message wider than the code"));
        }
        let uw = self.maps.seed_word(u);
        let tidx = self.maps.phi2_prp(uw, c.gamma_bits).invert(m.j);
        if tidx >= num_types(c.n, c.alphabet) {
            return Ok(Decoded::Failure);
        }
        let t = type_at(tidx, c.n, c.alphabet)?;
        if !injective_type(&t, c.rate) {
            return Ok(Decoded::Fallback(vec![0; c.n]));
        }
        let r = self.maps.phi1_prp(uw, tidx, c.rate_bits).invert(m.i);
        let size = t.class_size();
        if num_bigint::BigUint::from(r) >= size {
            return Ok(Decoded::Failure);
        }
        Ok(Decoded::Sequence(unrank_in_type(&t, &r.into())?))
    }
}

pub fn uc_encode(cfg: &UniformCodeConfig, u: &Seed, x: &[u8]) -> Result<UcMessage> {
    UniformCode::new(cfg.clone()).encode(u, x)
}

pub fn uc_decode(cfg: &UniformCodeConfig, u: &Seed, m: &UcMessage) -> Result<Decoded> {
    UniformCode::new(cfg.clone()).decode(u, m)
}

pub fn sample_sequence<R: Rng + ?Sized>(p: &FiniteDist, n: usize, rng: &mut R) -> Vec<u8> {
    (0..n).map(|_| sample_symbol(p, rng)).collect()
}

pub fn sample_symbol<R: Rng + ?Sized>(p: &FiniteDist, rng: &mut R) -> u8 {
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    for (a, &q) in p.probs().iter().enumerate() {
        acc += q;
        if r < acc {
            return a as u8;
        }
    }
    // rounding: land on the last symbol with positive mass
    p.probs().iter().rposition(|&q| q > 0.0).unwrap_or(0) as u8
}

fn seq_prob(p: &FiniteDist, x: &[u8]) -> f64 {
    x.iter().map(|&s| p.p(s as usize)).product()
}

/// `P[type has entropy above R_n]`: every such sequence decodes to the
/// placeholder, and the placeholder itself lies in a decodable type, so this
/// is the exact error probability of the code.
pub fn pe_exact(cfg: &UniformCodeConfig, p: &FiniteDist) -> Result<f64> {
    let ts = enumerate_types(cfg.n, cfg.alphabet)?;
    Ok(ts.iter().filter(|t| !injective_type(t, cfg.rate)).fold(0.0, |a, t| a + t.class_prob(p)))
}

pub const EXACT_CAP_LOG2: u32 = 24;

fn exact_cost_log2(cfg: &UniformCodeConfig) -> f64 {
    cfg.n as f64 * (cfg.alphabet as f64).log2() + cfg.seed_bits as f64
}

fn check_exact_cap(cfg: &UniformCodeConfig) -> Result<()> {
    if exact_cost_log2(cfg) > EXACT_CAP_LOG2 as f64 + 1e-9 {
        return Err(Error::Cap {
            what: "exhaustive enumeration (log2 |X|^n 2^d); use monte-carlo",
            needed: exact_cost_log2(cfg).ceil() as u128,
            cap: EXACT_CAP_LOG2 as u128,
        });
    }
    Ok(())
}

/// Error probability by running the decoder on every `(x, u)` pair.
pub fn pe_enumerate(cfg: &UniformCodeConfig, p: &FiniteDist) -> Result<f64> {
    check_exact_cap(cfg)?;
    let code = UniformCode::new(cfg.clone());
    let w = (-(cfg.seed_bits as f64)).exp2();
    let mut pe = 0.0;
    for x in all_sequences(cfg.n, cfg.alphabet) {
        let px = seq_prob(p, &x);
        if px == 0.0 {
            continue;
        }
        for u in 0..1u64 << cfg.seed_bits {
            let u = Seed::from_u64(u);
            let m = code.encode(&u, &x)?;
            if code.decode(&u, &m)?.sequence() != Some(&x[..]) {
                pe += px * w;
            }
        }
    }
    Ok(pe)
}

/// Monte Carlo error probability over `(X^n, U)`.
pub fn measure_pe(cfg: &UniformCodeConfig, p: &FiniteDist, trials: u64, master: u64) -> Result<Estimate> {
    if trials == 0 {
        return Err(Error::pre("need at least one trial"));
    }
    if p.len() != cfg.alphabet {
        return Err(Error::AlphabetMismatch(p.len(), cfg.alphabet));
    }
    let code = UniformCode::new(cfg.clone());
    let errs = par_trials(master, "uniform/pe", trials, |rng, _| -> Result<bool> {
        let x = sample_sequence(p, cfg.n, rng);
        let u = Seed::random(rng, cfg.seed_bits);
        let m = code.encode(&u, &x)?;
        Ok(code.decode(&u, &m)?.sequence() != Some(&x[..]))
    });
    let mut hits = 0;
    for e in errs {
        hits += e? as u64;
    }
    Ok(Estimate::binomial(hits, trials))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UeMode {
    Exact,
    MonteCarlo { samples: u64 },
}

/// Distance of the message law from uniform on the (rounded) message space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Uniformity {
    pub vdist: f64,
    pub kl: f64,
    pub mode: UeMode,
}

/// Accumulates a law over a `bits`-bit message space.
struct Law {
    bits: u32,
    dense: Option<Vec<f64>>,
    sparse: HashMap<u128, f64>,
}

impl Law {
    fn new(bits: u32) -> Self {
        if bits <= 24 {
            Law { bits, dense: Some(vec![0.0; 1 << bits]), sparse: HashMap::new() }
        } else {
            Law { bits, dense: None, sparse: HashMap::new() }
        }
    }

    #[inline]
    fn add(&mut self, cell: u128, w: f64) {
        match &mut self.dense {
            Some(v) => v[cell as usize] += w,
            None => *self.sparse.entry(cell).or_insert(0.0) += w,
        }
    }

    fn masses(&self) -> Vec<f64> {
        match &self.dense {
            Some(v) => v.iter().cloned().filter(|&w| w > 0.0).collect(),
            None => self.sparse.values().cloned().filter(|&w| w > 0.0).collect(),
        }
    }

    /// `(sum |P - 1/M|, D(P || uniform))`, counting the empty cells.
    fn against_uniform(&self) -> (f64, f64) {
        let m = (self.bits as f64).exp2();
        let inv = 1.0 / m;
        let masses = self.masses();
        let filled = masses.len() as f64;
        let mut v = 0.0;
        let mut kl = 0.0;
        for w in &masses {
            v += (w - inv).abs();
            kl += w * (w * m).log2();
        }
        v += (m - filled) * inv;
        (v.min(2.0), kl.max(0.0))
    }
}

/// Per-sequence data reused across seeds.
struct SeqEntry {
    x: Vec<u8>,
    prob: f64,
    tidx: u128,
    /// rank within the class when the type is decodable
    rank: Option<u128>,
}

fn sequence_table(cfg: &UniformCodeConfig, p: &FiniteDist) -> Result<Vec<SeqEntry>> {
    let mut out = Vec::new();
    for x in all_sequences(cfg.n, cfg.alphabet) {
        let prob = seq_prob(p, &x);
        if prob == 0.0 {
            continue;
        }
        let t = type_of(&x, cfg.alphabet)?;
        let rank = if injective_type(&t, cfg.rate) {
            Some(u128::try_from(rank_in_type(&x, cfg.alphabet)?).map_err(|_| Error::pre("rank exceeds 128 bits"))?)
        } else {
            None
        };
        out.push(SeqEntry { x, prob, tidx: type_index(&t), rank });
    }
    Ok(out)
}

/// Exact law of `(i, j)` over uniform `u` and i.i.d. `x`.
pub fn ue_exact(cfg: &UniformCodeConfig, p: &FiniteDist) -> Result<Uniformity> {
    check_exact_cap(cfg)?;
    if p.len() != cfg.alphabet {
        return Err(Error::AlphabetMismatch(p.len(), cfg.alphabet));
    }
    let maps = SeededMaps::new(&cfg.key);
    let table = sequence_table(cfg, p)?;
    let ntypes = num_types(cfg.n, cfg.alphabet) as usize;
    let mut law = Law::new(cfg.message_bits());
    let w = (-(cfg.seed_bits as f64)).exp2();
    let mut prps: Vec<Option<Prp>> = vec![None; ntypes];
    for u in 0..1u64 << cfg.seed_bits {
        let uw = maps.seed_word(&Seed::from_u64(u));
        let phi2 = maps.phi2_prp(uw, cfg.gamma_bits);
        prps.iter_mut().for_each(|p| *p = None);
        for e in &table {
            let j = phi2.permute(e.tidx);
            let i = match e.rank {
                Some(r) => prps[e.tidx as usize]
                    .get_or_insert_with(|| maps.phi1_prp(uw, e.tidx, cfg.rate_bits))
                    .permute(r),
                None => maps.prf(uw, &e.x, cfg.rate_bits),
            };
            law.add((i << cfg.gamma_bits) | j, e.prob * w);
        }
    }
    let (vdist, kl) = law.against_uniform();
    Ok(Uniformity { vdist, kl, mode: UeMode::Exact })
}

/// Plug-in estimate from sampled messages. Biased upward when the message
/// space is large relative to `samples`.
pub fn ue_monte_carlo(cfg: &UniformCodeConfig, p: &FiniteDist, samples: u64, master: u64) -> Result<Uniformity> {
    if samples == 0 {
        return Err(Error::pre("need at least one sample"));
    }
    let code = UniformCode::new(cfg.clone());
    let msgs = par_trials(master, "uniform/ue", samples, |rng, _| {
        let x = sample_sequence(p, cfg.n, rng);
        let u = Seed::random(rng, cfg.seed_bits);
        code.encode(&u, &x)
    });
    let mut law = Law { bits: cfg.message_bits(), dense: None, sparse: HashMap::new() };
    let w = 1.0 / samples as f64;
    for m in msgs {
        let m = m?;
        law.add((m.i << cfg.gamma_bits) | m.j, w);
    }
    let (vdist, kl) = law.against_uniform();
    Ok(Uniformity { vdist, kl, mode: UeMode::MonteCarlo { samples } })
}

pub fn measure_ue(cfg: &UniformCodeConfig, p: &FiniteDist, mode: UeMode, master: u64) -> Result<Uniformity> {
    match mode {
        UeMode::Exact => ue_exact(cfg, p),
        UeMode::MonteCarlo { samples } => ue_monte_carlo(cfg, p, samples, master),
    }
}

/// Decodable types, handy for exhaustive checks.
pub fn decodable_types(cfg: &UniformCodeConfig) -> Result<Vec<TypeClass>> {
    Ok(enumerate_types(cfg.n, cfg.alphabet)?
        .into_iter()
        .filter(|t| injective_type(t, cfg.rate))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::entropy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn key() -> MapKey {
        MapKey::new([7; 32], 1)
    }

    #[test]
    fn schedule_values() {
        let c = make_uniform_code(100, 2, 0.1, RateMode::Exact { h: 0.5 }, key()).unwrap();
        assert_eq!(c.eps_n, 0.16);
        assert!((c.gamma - 13.3164).abs() < 1e-3);
        assert_eq!(c.gamma_bits, 14);
        assert_eq!(c.seed_bits, 60);
        assert_eq!(c.rate_bits, 66);

        let c = make_uniform_code(100, 2, 0.1, RateMode::Interval { h_lo: 0.2, h_hi: 0.5 }, key()).unwrap();
        assert_eq!(c.rate, 0.66);
        assert_eq!(c.seed_bits, 2 * (16 + 14) + 30);
    }

    #[test]
    fn schedule_rejects_bad_entropy() {
        assert!(make_uniform_code(10, 2, 0.1, RateMode::Exact { h: 1.5 }, key()).is_err());
        assert!(make_uniform_code(10, 2, 0.1, RateMode::Exact { h: -0.1 }, key()).is_err());
        assert!(make_uniform_code(10, 2, 0.1, RateMode::Interval { h_lo: 0.5, h_hi: 0.4 }, key()).is_err());
        assert!(make_uniform_code(10, 2, 0.0, RateMode::Exact { h: 0.5 }, key()).is_err());
    }

    #[test]
    fn encode_is_deterministic_with_fixed_widths() {
        let c = make_uniform_code(8, 2, 0.1, RateMode::Exact { h: 0.88 }, key()).unwrap();
        let code = UniformCode::new(c.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x: Vec<u8> = (0..8).map(|_| rng.gen_range(0..2)).collect();
            let u = Seed::random(&mut rng, c.seed_bits);
            let m = code.encode(&u, &x).unwrap();
            assert_eq!(m, code.encode(&u, &x).unwrap());
            assert_eq!(m.to_bits(&c).len(), (c.rate_bits + c.gamma_bits) as usize);
            assert_eq!(UcMessage::from_bits(&m.to_bits(&c), &c).unwrap(), m);
        }
    }

    #[test]
    fn distinct_members_get_distinct_indices() {
        let c = make_uniform_code(4, 2, 0.1, RateMode::Exact { h: 0.5 }, key()).unwrap();
        let code = UniformCode::new(c);
        let u = Seed::from_u64(99);
        let members: Vec<Vec<u8>> = all_sequences(4, 2).filter(|x| x.iter().sum::<u8>() == 1).collect();
        let is: HashSet<u128> = members.iter().map(|x| code.encode(&u, x).unwrap().i).collect();
        assert_eq!(is.len(), 4);
    }

    #[test]
    fn fallback_and_failure() {
        // rate well below the entropy of type (2, 2)
        let c = make_uniform_code(4, 2, 0.01, RateMode::Exact { h: 0.0 }, key()).unwrap();
        assert!(c.rate < 1.0);
        let code = UniformCode::new(c.clone());
        let u = Seed::from_u64(5);
        let m = code.encode(&u, &[0, 1, 1, 0]).unwrap();
        assert_eq!(code.decode(&u, &m).unwrap(), Decoded::Fallback(vec![0; 4]));

        let used: HashSet<u128> = enumerate_types(4, 2).unwrap().iter().map(|t| {
            crate::maps::phi2_eval(&c.key, &u, t).unwrap()
        }).collect();
        let unused = (0..1u128 << c.gamma_bits).find(|j| !used.contains(j)).unwrap();
        let bad = UcMessage { i: 0, j: unused };
        assert_eq!(code.decode(&u, &bad).unwrap(), Decoded::Failure);
    }

    #[test]
    fn zero_error_on_decodable_types() {
        for (alphabet, n) in [(2, 8), (3, 5)] {
            let c = make_uniform_code(n, alphabet, 0.1, RateMode::Exact { h: 0.7 }, key()).unwrap();
            let code = UniformCode::new(c.clone());
            let u = Seed::from_u64(1234);
            for x in all_sequences(n, alphabet) {
                let t = type_of(&x, alphabet).unwrap();
                if !injective_type(&t, c.rate) {
                    continue;
                }
                let m = code.encode(&u, &x).unwrap();
                assert_eq!(code.decode(&u, &m).unwrap(), Decoded::Sequence(x));
            }
        }
    }

    #[test]
    fn pe_point_mass_is_zero() {
        let p = FiniteDist::point(2, 0).unwrap();
        let c = make_uniform_code(6, 2, 0.1, RateMode::Exact { h: 0.0 }, key()).unwrap();
        assert_eq!(measure_pe(&c, &p, 200, 1).unwrap().est, 0.0);
        assert_eq!(pe_exact(&c, &p).unwrap(), 0.0);
    }

    #[test]
    fn pe_enumeration_matches_closed_form() {
        let p = FiniteDist::bernoulli(0.3).unwrap();
        let c = make_uniform_code(6, 2, 0.05, RateMode::Exact { h: 0.3 }, key()).unwrap().with_seed_bits(4);
        let a = pe_enumerate(&c, &p).unwrap();
        let b = pe_exact(&c, &p).unwrap();
        assert!(b > 0.1);
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn single_letter_alphabet() {
        // One sequence, so the law is a mixture of 2^d point masses.
        let p = FiniteDist::point(1, 0).unwrap();
        let c = make_uniform_code(5, 1, 0.1, RateMode::Exact { h: 0.0 }, key()).unwrap().with_seed_bits(3);
        let code = UniformCode::new(c.clone());
        let cells: HashSet<UcMessage> = (0..8).map(|u| code.encode(&Seed::from_u64(u), &[0; 5]).unwrap()).collect();
        let mut counts: HashMap<UcMessage, u32> = HashMap::new();
        for u in 0..8 {
            *counts.entry(code.encode(&Seed::from_u64(u), &[0; 5]).unwrap()).or_default() += 1;
        }
        let m = (c.message_bits() as f64).exp2();
        let expect: f64 = counts.values().map(|&k| (k as f64 / 8.0 - 1.0 / m).abs()).sum::<f64>()
            + (m - cells.len() as f64) / m;
        let got = ue_exact(&c, &p).unwrap();
        assert!((got.vdist - expect).abs() < 1e-12);
        if cells.len() == 8 {
            assert!((got.vdist - 2.0 * (1.0 - 8.0 / m)).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_cap_enforced() {
        let p = FiniteDist::bernoulli(0.3).unwrap();
        let c = make_uniform_code(8, 2, 0.1, RateMode::Exact { h: entropy(&p) }, key()).unwrap().with_seed_bits(17);
        assert!(matches!(ue_exact(&c, &p), Err(Error::Cap { .. })));
    }

    #[test]
    fn monte_carlo_tracks_exact_on_small_space() {
        let p = FiniteDist::bernoulli(0.5).unwrap();
        let c = make_uniform_code(3, 2, 0.1, RateMode::Exact { h: 1.0 }, key()).unwrap().with_seed_bits(6);
        let ex = ue_exact(&c, &p).unwrap();
        let mc = ue_monte_carlo(&c, &p, 400_000, 5).unwrap();
        assert!((ex.vdist - mc.vdist).abs() < 0.05, "{} vs {}", ex.vdist, mc.vdist);
    }
}
