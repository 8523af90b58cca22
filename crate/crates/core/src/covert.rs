//! End-to-end covert compression for general alphabets: adaptive coding,
//! framing `M' = M || C || I`, and output synthesis by random binning.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::{as_bitstring, big_to_bits, from_bits, to_bits, xor};
use crate::dist::{entropy, FiniteDist};
use crate::error::{Error, Result};
use crate::estimate::{adaptive_decode_with_index, adaptive_encode, CodeBank};
use crate::exponent::{converse_bound, ConverseInput};
use crate::maps::{MapKey, Seed};
use crate::resolvability::{BinTable, BinningSpec};
use crate::rng::{derive_stream, par_trials};
use crate::stats::{ceil_snap, mean_std, Estimate};
use crate::types::all_sequences;
use crate::uniform::{sample_sequence, Decoded};

/// Binning keys tried per frame before giving up on an empty bin.
pub const REKEY_ATTEMPTS: u32 = 8;

/// Bit lengths of the three frame fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub m_bits: u32,
    pub c_bits: u32,
    pub i_bits: u32,
}

impl Layout {
    pub fn total(&self) -> u32 {
        self.m_bits + self.c_bits + self.i_bits
    }
}

/// `m = ceil((|M| + |I|) / R_Y)` and `|C| = ceil(m R_Y) - |M| - |I|`.
pub fn frame_layout(m_bits: u32, i_bits: u32, rate_y: f64) -> Result<(usize, u32)> {
    if !(rate_y > 0.0) {
        return Err(Error::pre("R_Y must be positive"));
    }
    let k = m_bits + i_bits;
    if k == 0 {
        return Err(Error::pre("empty frame"));
    }
    let m = ceil_snap(k as f64 / rate_y) as usize;
    let total = ceil_snap(m as f64 * rate_y) as u32;
    Ok((m, total - k))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovertFrame {
    pub y_hat: Vec<u8>,
    pub m: usize,
    pub layout: Layout,
    #[serde(with = "as_bitstring")]
    pub code_index_masked: Vec<u8>,
    /// Binning key attempt the frame was synthesised under.
    #[serde(default)]
    pub attempt: u32,
}

/// Wire form: `{symbols, layout, masked_index, attempt}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameJson {
    pub symbols: String,
    pub layout: Layout,
    pub masked_index: String,
    #[serde(default)]
    pub attempt: u32,
}

impl CovertFrame {
    pub fn to_json(&self) -> FrameJson {
        FrameJson {
            symbols: self.y_hat.iter().map(|&s| char::from_digit(s as u32, 36).unwrap()).collect(),
            layout: self.layout,
            masked_index: crate::bits::bitstring(&self.code_index_masked),
            attempt: self.attempt,
        }
    }

    pub fn from_json(f: &FrameJson) -> Result<Self> {
        let y_hat = f
            .symbols
            .chars()
            .map(|c| c.to_digit(36).map(|d| d as u8).ok_or_else(|| Error::Format(format!("bad symbol {c:?}"))))
            .collect::<Result<Vec<u8>>>()?;
        Ok(CovertFrame {
            m: y_hat.len(),
            y_hat,
            layout: f.layout,
            code_index_masked: crate::bits::parse_bitstring(&f.masked_index)?,
            attempt: f.attempt,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovertParams {
    pub n: usize,
    pub alphabet_x: usize,
    pub p_y: FiniteDist,
    pub beta: f64,
    pub t: f64,
    /// `R_Y = (1 - eps_frac) H(Y)`.
    pub eps_frac: f64,
}

impl CovertParams {
    pub fn new(n: usize, alphabet_x: usize, p_y: FiniteDist) -> Self {
        CovertParams { n, alphabet_x, p_y, beta: 0.1, t: 0.25, eps_frac: 0.1 }
    }

    pub fn rate_y(&self) -> f64 {
        (1.0 - self.eps_frac) * entropy(&self.p_y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharedSecrets {
    pub seed_u: Seed,
    #[serde(with = "as_bitstring")]
    pub k_tilde: Vec<u8>,
    pub binning_key: MapKey,
    pub code_bank_key: MapKey,
}

impl SharedSecrets {
    /// Fresh keys, then a seed and pad sized for the bank those keys define.
    pub fn random<R: Rng + ?Sized>(params: &CovertParams, rng: &mut R) -> Result<Self> {
        let binning_key = MapKey::random(rng, 0);
        let code_bank_key = MapKey::random(rng, 0);
        let bank = CodeBank::new(params.n, params.alphabet_x, params.t, params.beta, &code_bank_key)?;
        Ok(Self::for_bank(&bank, binning_key, code_bank_key, rng))
    }

    pub fn for_bank<R: Rng + ?Sized>(bank: &CodeBank, binning_key: MapKey, code_bank_key: MapKey, rng: &mut R) -> Self {
        SharedSecrets {
            seed_u: Seed::random(rng, bank.seed_bits()),
            k_tilde: (0..bank.index_bits()).map(|_| rng.gen_range(0..2u8)).collect(),
            binning_key,
            code_bank_key,
        }
    }

    /// Same secrets with the `attempt`-th binning key.
    pub fn rekeyed(&self, attempt: u32) -> Self {
        let mut s = self.clone();
        if attempt > 0 {
            s.binning_key = self.binning_key.with_code_id(attempt as u64);
        }
        s
    }

    pub fn seed_bits_total(&self, bank: &CodeBank) -> u32 {
        bank.seed_bits() + bank.index_bits()
    }
}

type TableKey = ([u8; 32], u64);

/// A bank plus cached binning tables, one per `(binning key, m)`.
pub struct CovertScheme {
    pub params: CovertParams,
    pub rate_y: f64,
    pub bank: CodeBank,
    tables: Mutex<HashMap<TableKey, Arc<BinTable>>>,
}

impl CovertScheme {
    pub fn new(params: CovertParams, code_bank_key: &MapKey) -> Result<Self> {
        if params.p_y.len() < 2 {
            return Err(Error::pre("target alphabet needs two symbols"));
        }
        if !(params.eps_frac > 0.0 && params.eps_frac < 1.0) {
            return Err(Error::pre("eps_frac outside (0, 1)"));
        }
        let rate_y = params.rate_y();
        if !(rate_y > 0.0) {
            return Err(Error::pre("target entropy is zero"));
        }
        let bank = CodeBank::new(params.n, params.alphabet_x, params.t, params.beta, code_bank_key)?;
        Ok(CovertScheme { params, rate_y, bank, tables: Mutex::new(HashMap::new()) })
    }

    fn check_secrets(&self, s: &SharedSecrets) -> Result<()> {
        if s.k_tilde.len() as u32 != self.bank.index_bits() {
            return Err(Error::pre(format!("k_tilde has {} bits, bank needs {}", s.k_tilde.len(), self.bank.index_bits())));
        }
        Ok(())
    }

    /// Output length and padding for code entry `i`.
    pub fn layout_for(&self, i: usize) -> Result<(usize, Layout)> {
        let m_bits = self.bank.entry(i).message_bits();
        let i_bits = self.bank.index_bits();
        let (m, c_bits) = frame_layout(m_bits, i_bits, self.rate_y)?;
        Ok((m, Layout { m_bits, c_bits, i_bits }))
    }

    fn spec_for(&self, key: &MapKey, m: usize) -> Result<BinningSpec> {
        let bits = ceil_snap(m as f64 * self.rate_y) as u32;
        let k = MapKey::new(key.master, key.code_id.wrapping_shl(20) ^ m as u64);
        BinningSpec::with_bits(m, self.params.p_y.len(), self.rate_y, bits, k)
    }

    /// Binning table for length `m` under `key`, built on first use.
    pub fn table(&self, key: &MapKey, m: usize) -> Result<Arc<BinTable>> {
        let spec = self.spec_for(key, m)?;
        let id = (spec.key.master, spec.key.code_id);
        let mut cache = self.tables.lock().unwrap();
        if let Some(t) = cache.get(&id) {
            return Ok(t.clone());
        }
        let t = Arc::new(BinTable::build_with(&spec, &self.params.p_y, false)?);
        cache.insert(id, t.clone());
        Ok(t)
    }

    /// Builds the tables for every entry's output length, in parallel.
    pub fn warm(&self, key: &MapKey) -> Result<()> {
        for i in 1..=self.bank.q() {
            let (m, _) = self.layout_for(i)?;
            let spec = self.spec_for(key, m)?;
            let id = (spec.key.master, spec.key.code_id);
            if self.tables.lock().unwrap().contains_key(&id) {
                continue;
            }
            let t = Arc::new(BinTable::build(&spec, &self.params.p_y)?);
            self.tables.lock().unwrap().insert(id, t);
        }
        Ok(())
    }

    pub fn encode<R: Rng + ?Sized>(&self, x: &[u8], secrets: &SharedSecrets, rng: &mut R) -> Result<CovertFrame> {
        self.check_secrets(secrets)?;
        if x.len() != self.params.n {
            return Err(Error::pre(format!("source block of length {} for n = {}", x.len(), self.params.n)));
        }
        let msg = adaptive_encode(&self.bank, &secrets.seed_u, x)?;
        let (m, layout) = self.layout_for(msg.index)?;
        let i_field = xor(&to_bits((msg.index - 1) as u128, layout.i_bits), &secrets.k_tilde)?;
        let c: Vec<u8> = (0..layout.c_bits).map(|_| rng.gen_range(0..2u8)).collect();
        let mut frame_bits = msg.payload;
        frame_bits.extend_from_slice(&c);
        frame_bits.extend_from_slice(&i_field);
        let b = from_bits(&frame_bits);
        let table = self.table(&secrets.binning_key, m)?;
        let y_hat = table.sample(b, rng)?;
        Ok(CovertFrame { y_hat, m, layout, code_index_masked: i_field, attempt: 0 })
    }

    /// Recovers the source block from the symbols alone.
    pub fn decode(&self, y_hat: &[u8], secrets: &SharedSecrets) -> Result<Decoded> {
        self.check_secrets(secrets)?;
        let m = y_hat.len();
        if m == 0 || y_hat.iter().any(|&s| s as usize >= self.params.p_y.len()) {
            return Ok(Decoded::Failure);
        }
        let spec = self.spec_for(&secrets.binning_key, m)?;
        let b = spec.bin_of(y_hat)?;
        let frame_bits = big_to_bits(&b.into(), spec.bin_bits);
        let ib = self.bank.index_bits() as usize;
        if frame_bits.len() < ib {
            return Ok(Decoded::Failure);
        }
        let i_field = &frame_bits[frame_bits.len() - ib..];
        let index = from_bits(&xor(i_field, &secrets.k_tilde)?) as usize + 1;
        if index > self.bank.q() {
            return Ok(Decoded::Failure);
        }
        let (m_expected, layout) = self.layout_for(index)?;
        if m_expected != m || layout.total() != spec.bin_bits {
            return Ok(Decoded::Failure);
        }
        let payload = &frame_bits[..layout.m_bits as usize];
        adaptive_decode_with_index(&self.bank, &secrets.seed_u, payload, index)
    }

    /// Encodes, moving to the next binning key whenever the frame lands in an
    /// empty bin. Returns the frame and the secrets it was made under.
    pub fn encode_rekeying<R: Rng + ?Sized>(&self, x: &[u8], secrets: &SharedSecrets, rng: &mut R) -> Result<(CovertFrame, SharedSecrets, u32)> {
        let mut last = None;
        for a in 0..REKEY_ATTEMPTS {
            let s = if a == 0 { secrets.clone() } else { secrets.rekeyed(a) };
            match self.encode(x, &s, rng) {
                Ok(f) => return Ok((CovertFrame { attempt: a, ..f }, s, a)),
                Err(Error::EmptyBin(b)) => last = Some(Error::EmptyBin(b)),
                Err(e) => return Err(e),
            }
        }
        Err(last.unwrap())
    }
}

/// Encodes one block, re-keying the binning on empty bins.
pub fn covert_encode<R: Rng + ?Sized>(x: &[u8], secrets: &SharedSecrets, params: &CovertParams, rng: &mut R) -> Result<CovertFrame> {
    Ok(CovertScheme::new(params.clone(), &secrets.code_bank_key)?.encode_rekeying(x, secrets, rng)?.0)
}

pub fn covert_decode(frame: &CovertFrame, secrets: &SharedSecrets, params: &CovertParams) -> Result<Decoded> {
    if frame.attempt >= REKEY_ATTEMPTS {
        return Err(Error::Format(format!("binning attempt {} out of range", frame.attempt)));
    }
    CovertScheme::new(params.clone(), &secrets.code_bank_key)?.decode(&frame.y_hat, &secrets.rekeyed(frame.attempt))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub m: usize,
    pub frames: u64,
    /// `V(p_B, uniform)` of the base binning at this length: the exact
    /// distance of the synthesised block from `p_Y^m` when `M'` is uniform.
    pub resolvability_vdist: Option<f64>,
    /// First-order marginal of the frames of this length against `p_Y`.
    pub marginal_vdist: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConverseCheck {
    /// Bound with zero divergence, the strongest form; `holds` refers to it.
    pub bound: f64,
    /// Bound after charging the entropy gap of `divergence`.
    pub bound_with_divergence: f64,
    pub measured: f64,
    /// Block divergence used in the weaker bound, and how it was obtained.
    pub divergence: f64,
    pub divergence_source: String,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovertReport {
    pub n: usize,
    pub trials: u64,
    pub h_x: f64,
    pub h_y: f64,
    pub rate_y: f64,
    pub rate_mean: f64,
    pub rate_std: f64,
    pub pe: Estimate,
    /// Frames that needed a binning key other than the first.
    pub rekeyed_frames: u64,
    pub encode_failures: u64,
    pub covert_vdist: f64,
    /// `log2(1 / min p_Y) * covert_vdist`.
    pub covert_kl_bound: f64,
    pub per_length: Vec<LengthStats>,
    pub exact: Option<ExactCovertness>,
    pub seed_bits_total: u32,
    pub converse: ConverseCheck,
}

struct Trial {
    m: usize,
    counts: Vec<u64>,
    error: bool,
    rekeyed: bool,
    failed: bool,
}

fn marginal_vdist(counts: &[u64], p: &FiniteDist) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    counts.iter().zip(p.probs()).map(|(&c, &q)| (c as f64 / total as f64 - q).abs()).sum()
}

/// Rate, reliability and covertness of the pipeline over `trials` frames.
///
/// Keys are drawn once from `master`; seed and pad are fresh per frame.
pub fn covert_metrics(p_x: &FiniteDist, params: &CovertParams, trials: u64, master: u64) -> Result<CovertReport> {
    if trials == 0 {
        return Err(Error::pre("need at least one trial"));
    }
    if p_x.len() != params.alphabet_x {
        return Err(Error::AlphabetMismatch(p_x.len(), params.alphabet_x));
    }
    let mut krng = derive_stream(master, "covert/keys", 0);
    let binning_key = MapKey::random(&mut krng, 0);
    let code_bank_key = MapKey::random(&mut krng, 0);
    let scheme = CovertScheme::new(params.clone(), &code_bank_key)?;
    scheme.warm(&binning_key)?;
    let ky = params.p_y.len();
    let outcomes = par_trials(master, "covert/trial", trials, |rng, _| -> Result<Trial> {
        let x = sample_sequence(p_x, params.n, rng);
        let secrets = SharedSecrets::for_bank(&scheme.bank, binning_key.clone(), code_bank_key.clone(), rng);
        match scheme.encode_rekeying(&x, &secrets, rng) {
            Ok((frame, used, attempt)) => {
                let got = scheme.decode(&frame.y_hat, &used)?;
                let mut counts = vec![0u64; ky];
                for &s in &frame.y_hat {
                    counts[s as usize] += 1;
                }
                Ok(Trial { m: frame.m, counts, error: got.sequence() != Some(&x[..]), rekeyed: attempt > 0, failed: false })
            }
            Err(Error::EmptyBin(_)) => Ok(Trial { m: 0, counts: vec![0; ky], error: true, rekeyed: true, failed: true }),
            Err(e) => Err(e),
        }
    });
    let outcomes: Vec<Trial> = outcomes.into_iter().collect::<Result<_>>()?;
    let n = params.n as f64;
    let rates: Vec<f64> = outcomes.iter().filter(|t| !t.failed).map(|t| t.m as f64 / n).collect();
    let rs = mean_std(&rates);
    let errors = outcomes.iter().filter(|t| t.error).count() as u64;
    let mut total_counts = vec![0u64; ky];
    let mut by_m: HashMap<usize, (u64, Vec<u64>)> = HashMap::new();
    for t in outcomes.iter().filter(|t| !t.failed) {
        let e = by_m.entry(t.m).or_insert_with(|| (0, vec![0; ky]));
        e.0 += 1;
        for (a, &c) in e.1.iter_mut().zip(&t.counts) {
            *a += c;
        }
        for (a, &c) in total_counts.iter_mut().zip(&t.counts) {
            *a += c;
        }
    }
    let mut per_length: Vec<LengthStats> = by_m
        .into_iter()
        .map(|(m, (frames, counts))| {
            let resolvability_vdist = scheme.table(&binning_key, m).ok().map(|t| t.uniformity().vdist);
            LengthStats { m, frames, resolvability_vdist, marginal_vdist: marginal_vdist(&counts, &params.p_y) }
        })
        .collect();
    per_length.sort_by_key(|l| l.m);
    let covert_vdist = marginal_vdist(&total_counts, &params.p_y);
    let log_inv_mu = (1.0 / params.p_y.min_prob()).log2();
    let pe = Estimate::binomial(errors, trials);
    let h_x = entropy(p_x);
    let h_y = entropy(&params.p_y);

    // block divergence bound at the most frequent length
    let main = per_length.iter().max_by_key(|l| l.frames);
    let (m_ref, divergence, source) = match main {
        Some(l) => match l.resolvability_vdist {
            Some(v) => (l.m, l.m as f64 * log_inv_mu * v, "block KL bound from exact binning uniformity"),
            None => (l.m, l.m as f64 * log_inv_mu * l.marginal_vdist, "block KL bound from first-order marginal"),
        },
        None => (1, f64::INFINITY, "no frames"),
    };
    let input = ConverseInput {
        n: params.n,
        h_x,
        h_y,
        eps_n: pe.est * (params.alphabet_x as f64).log2(),
        divergence,
        alphabet_y: ky,
        m: m_ref,
    };
    let bound = converse_bound(&ConverseInput { divergence: 0.0, ..input.clone() })?;
    let bound_with_divergence = converse_bound(&input)?;
    let exact = exact_covertness(&scheme, p_x, &binning_key).ok();
    Ok(CovertReport {
        n: params.n,
        trials,
        h_x,
        h_y,
        rate_y: scheme.rate_y,
        rate_mean: rs.mean,
        rate_std: rs.std,
        pe,
        rekeyed_frames: outcomes.iter().filter(|t| t.rekeyed).count() as u64,
        encode_failures: outcomes.iter().filter(|t| t.failed).count() as u64,
        covert_vdist,
        covert_kl_bound: log_inv_mu * covert_vdist,
        per_length,
        exact,
        seed_bits_total: scheme.bank.seed_bits() + scheme.bank.index_bits(),
        converse: ConverseCheck {
            bound,
            bound_with_divergence,
            measured: rs.mean,
            divergence,
            divergence_source: source.into(),
            holds: rs.mean >= bound,
        },
    })
}

/// Largest `log2` of the enumeration behind [`exact_covertness`].
pub const EXACT_COVERT_CAP_LOG2: f64 = 22.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactLength {
    pub m: usize,
    pub prob: f64,
    /// `V(P_{Y^m | m}, p_Y^m)`
    pub vdist: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactCovertness {
    pub per_length: Vec<ExactLength>,
    /// `sum_m P(m) V_m`
    pub mixture_vdist: f64,
    /// Probability of hitting an empty bin under the base binning key.
    pub empty_bin_mass: f64,
}

/// Exact output law over source, seed, pad and filler bits, for tiny
/// configurations. Uses the base binning key only.
pub fn exact_covertness(scheme: &CovertScheme, p_x: &FiniteDist, binning_key: &MapKey) -> Result<ExactCovertness> {
    let bank = &scheme.bank;
    let (n, kx) = (scheme.params.n, scheme.params.alphabet_x);
    let d = bank.seed_bits();
    let ib = bank.index_bits();
    let max_c = (1..=bank.q()).map(|i| scheme.layout_for(i).map(|(_, l)| l.c_bits)).collect::<Result<Vec<_>>>()?;
    let cost = n as f64 * (kx as f64).log2() + (d + ib + max_c.iter().max().copied().unwrap_or(0)) as f64;
    if cost > EXACT_COVERT_CAP_LOG2 {
        return Err(Error::Cap { what: "exact covert enumeration (log2)", needed: cost.ceil() as u128, cap: EXACT_COVERT_CAP_LOG2 as u128 });
    }
    // bin weights per output length
    let mut weights: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut empty = 0.0;
    for x in all_sequences(n, kx) {
        let px: f64 = x.iter().map(|&s| p_x.p(s as usize)).product();
        if px == 0.0 {
            continue;
        }
        for uv in 0..1u64 << d {
            let u = Seed::from_u64(uv);
            let msg = adaptive_encode(bank, &u, &x)?;
            let (m, layout) = scheme.layout_for(msg.index)?;
            let table = scheme.table(binning_key, m)?;
            let w = weights.entry(m).or_insert_with(|| vec![0.0; table.bins() as usize]);
            for kv in 0..1u64 << ib {
                let i_field = xor(&to_bits((msg.index - 1) as u128, ib), &to_bits(kv as u128, ib))?;
                for cv in 0..1u64 << layout.c_bits {
                    let mut bits = msg.payload.clone();
                    bits.extend(to_bits(cv as u128, layout.c_bits));
                    bits.extend_from_slice(&i_field);
                    let b = from_bits(&bits);
                    let mass = px / ((1u64 << d) as f64 * (1u64 << ib) as f64 * (1u64 << layout.c_bits) as f64);
                    if table.bin_mass(b) > 0.0 {
                        w[b as usize] += mass;
                    } else {
                        empty += mass;
                    }
                }
            }
        }
    }
    let mut per_length = Vec::new();
    let mut mixture = 0.0;
    let mut ms: Vec<usize> = weights.keys().copied().collect();
    ms.sort();
    for m in ms {
        let w = &weights[&m];
        let table = scheme.table(binning_key, m)?;
        let pm: f64 = w.iter().sum();
        let mut v = 0.0;
        for b in 0..table.bins() {
            let mass = table.bin_mass(b);
            let wb = w[b as usize] / pm;
            for (_, py) in table.members(b) {
                let out = if mass > 0.0 { wb * py / mass } else { 0.0 };
                v += (out - py).abs();
            }
        }
        mixture += pm * v;
        per_length.push(ExactLength { m, prob: pm, vdist: v });
    }
    Ok(ExactCovertness { per_length, mixture_vdist: mixture, empty_bin_mass: empty })
}
