//! Plug-in entropy estimation and the bank of interval codes it selects from.

use serde::{Deserialize, Serialize};

use crate::bits::{from_bits, index_bits, to_bits};
use crate::dist::{entropy, FiniteDist};
use crate::error::{Error, Result};
use crate::maps::{MapKey, Seed};
use crate::rng::par_trials;
use crate::stats::{ceil_snap, mean_std, Estimate};
use crate::types::type_of;
use crate::uniform::{make_uniform_code, sample_sequence, Decoded, RateMode, UcMessage, UniformCode, UniformCodeConfig};

const TIE_TOL: f64 = 1e-12;

/// Entropy of the empirical distribution of `x`.
pub fn plugin_entropy(x: &[u8], alphabet: usize) -> Result<f64> {
    Ok(type_of(x, alphabet)?.entropy())
}

/// Grid `a_i = i delta` on `[0, top]`, `q = ceil(n^t)` cells, padded with
/// `a_{-1} = a_0` and `a_{q+1} = a_q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub n: usize,
    pub t: f64,
    pub q: usize,
    pub delta: f64,
    pub top: f64,
    /// `a_{-1}, a_0, ..., a_{q+1}`
    pub points: Vec<f64>,
}

impl Partition {
    /// Cells of width `top / n^t` on `[0, top]`.
    pub fn new(n: usize, t: f64, top: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::pre("n must be positive"));
        }
        if !(t > 0.0 && t < 0.5) {
            return Err(Error::pre(format!("t = {t} outside (0, 1/2)")));
        }
        let nt = (n as f64).powf(t);
        let q = ceil_snap(nt) as usize;
        let delta = top / nt;
        let mut points = Vec::with_capacity(q + 3);
        points.push(0.0);
        for i in 0..q {
            points.push(i as f64 * delta);
        }
        points.push(top);
        points.push(top);
        Ok(Partition { n, t, q, delta, top, points })
    }

    /// Partition of `[0, log2 |X|]`.
    pub fn for_entropy(n: usize, t: f64, alphabet: usize) -> Result<Self> {
        Self::new(n, t, (alphabet as f64).log2())
    }

    /// `a_i` for `i` in `-1..=q+1`.
    pub fn a(&self, i: i64) -> f64 {
        assert!((-1..=self.q as i64 + 1).contains(&i), "partition index {i}");
        self.points[(i + 1) as usize]
    }

    /// Smallest `i0` in `1..=q` with `h` in `[a_{i0-1}, a_{i0}]`.
    pub fn select(&self, h: f64) -> usize {
        let h = h.clamp(0.0, self.top);
        (1..=self.q)
            .find(|&i| h <= self.a(i as i64) + TIE_TOL)
            .unwrap_or(self.q)
    }

    /// The padded cell `[a_{i-2}, a_{i+1}]` attached to index `i`.
    pub fn wide_cell(&self, i: usize) -> (f64, f64) {
        (self.a(i as i64 - 2), self.a(i as i64 + 1))
    }
}

pub fn select_interval(h_hat: f64, part: &Partition) -> usize {
    part.select(h_hat)
}

/// One interval code per partition index, sharing one seed.
#[derive(Clone, Debug)]
pub struct CodeBank {
    pub part: Partition,
    pub beta: f64,
    pub alphabet: usize,
    /// Entry `i - 1` serves index `i`.
    pub entries: Vec<UniformCode>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BankEntryManifest {
    pub index: usize,
    pub h_lo: f64,
    pub h_hi: f64,
    pub rate: f64,
    pub rate_bits: u32,
    pub gamma_bits: u32,
    pub seed_bits: u32,
    pub payload_bits: u32,
    pub message_bits: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BankManifest {
    pub n: usize,
    pub alphabet: usize,
    pub t: f64,
    pub beta: f64,
    pub q: usize,
    pub delta: f64,
    pub index_bits: u32,
    pub seed_bits: u32,
    pub entries: Vec<BankEntryManifest>,
}

impl CodeBank {
    pub fn new(n: usize, alphabet: usize, t: f64, beta: f64, key: &MapKey) -> Result<Self> {
        let part = Partition::for_entropy(n, t, alphabet)?;
        let mut entries = Vec::with_capacity(part.q);
        for i in 1..=part.q {
            let (h_lo, h_hi) = part.wide_cell(i);
            let mode = if h_hi > h_lo {
                RateMode::Interval { h_lo, h_hi }
            } else {
                RateMode::Exact { h: h_hi }
            };
            let cfg = make_uniform_code(n, alphabet, beta, mode, key.with_code_id(i as u64))?;
            entries.push(UniformCode::new(cfg));
        }
        Ok(CodeBank { part, beta, alphabet, entries })
    }

    pub fn n(&self) -> usize {
        self.part.n
    }

    pub fn q(&self) -> usize {
        self.part.q
    }

    pub fn entry(&self, i: usize) -> &UniformCodeConfig {
        &self.entries[i - 1].cfg
    }

    /// Bits of the shared seed: enough for the longest entry.
    pub fn seed_bits(&self) -> u32 {
        self.entries.iter().map(|e| e.cfg.seed_bits).max().unwrap_or(0)
    }

    pub fn index_bits(&self) -> u32 {
        index_bits(self.q() as u64)
    }

    /// Entry `i` reads the low `d_i` bits of the shared seed.
    pub fn entry_seed(&self, u: &Seed, i: usize) -> Seed {
        u.low_bits(self.entry(i).seed_bits)
    }

    pub fn manifest(&self) -> BankManifest {
        BankManifest {
            n: self.n(),
            alphabet: self.alphabet,
            t: self.part.t,
            beta: self.beta,
            q: self.q(),
            delta: self.part.delta,
            index_bits: self.index_bits(),
            seed_bits: self.seed_bits(),
            entries: (1..=self.q())
                .map(|i| {
                    let c = self.entry(i);
                    let (h_lo, h_hi) = self.part.wide_cell(i);
                    BankEntryManifest {
                        index: i,
                        h_lo,
                        h_hi,
                        rate: c.rate,
                        rate_bits: c.rate_bits,
                        gamma_bits: c.gamma_bits,
                        seed_bits: c.seed_bits,
                        payload_bits: c.message_bits(),
                        message_bits: c.message_bits() + self.index_bits(),
                    }
                })
                .collect(),
        }
    }

    /// Index selected for `x` by its plug-in entropy.
    pub fn select(&self, x: &[u8]) -> Result<usize> {
        Ok(self.part.select(plugin_entropy(x, self.alphabet)?))
    }
}

/// Output of the adaptive encoder.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdaptiveMessage {
    /// The selected code's message bits.
    pub payload: Vec<u8>,
    /// Selected index in `1..=q`.
    pub index: usize,
}

impl AdaptiveMessage {
    /// Payload followed by `index - 1` in `ceil(log2 q)` bits.
    pub fn to_bits(&self, bank: &CodeBank) -> Vec<u8> {
        let mut out = self.payload.clone();
        out.extend(to_bits((self.index - 1) as u128, bank.index_bits()));
        out
    }

    pub fn from_bits(bits: &[u8], bank: &CodeBank) -> Result<Self> {
        let ib = bank.index_bits() as usize;
        if bits.len() < ib {
            return Err(Error::Format("message shorter than its index field".into()));
        }
        let (payload, idx) = bits.split_at(bits.len() - ib);
        let index = from_bits(idx) as usize + 1;
        if index > bank.q() {
            return Err(Error::Format(format!("code index {index} beyond bank of {}", bank.q())));
        }
        let expect = bank.entry(index).message_bits() as usize;
        if payload.len() != expect {
            return Err(Error::Format(format!("entry {index} expects {expect} payload bits, got {}", payload.len())));
        }
        Ok(AdaptiveMessage { payload: payload.to_vec(), index })
    }
}

pub fn adaptive_encode(bank: &CodeBank, u: &Seed, x: &[u8]) -> Result<AdaptiveMessage> {
    let i = bank.select(x)?;
    let code = &bank.entries[i - 1];
    let m = code.encode(&bank.entry_seed(u, i), x)?;
    Ok(AdaptiveMessage { payload: m.to_bits(&code.cfg), index: i })
}

/// Decodes a payload under a known index.
pub fn adaptive_decode_with_index(bank: &CodeBank, u: &Seed, payload: &[u8], index: usize) -> Result<Decoded> {
    if index == 0 || index > bank.q() {
        return Err(Error::Format(format!("code index {index} outside 1..={}", bank.q())));
    }
    let code = &bank.entries[index - 1];
    let m = UcMessage::from_bits(payload, &code.cfg)?;
    code.decode(&bank.entry_seed(u, index), &m)
}

/// Decodes a full message (payload plus index field).
pub fn adaptive_decode(bank: &CodeBank, u: &Seed, bits: &[u8]) -> Result<Decoded> {
    let m = AdaptiveMessage::from_bits(bits, bank)?;
    adaptive_decode_with_index(bank, u, &m.payload, m.index)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub bias: f64,
    pub variance: f64,
    pub trials: u64,
}

/// Monte Carlo mean, bias and variance of the plug-in estimator.
pub fn estimator_moments(p: &FiniteDist, n: usize, trials: u64, master: u64) -> Result<Moments> {
    if trials < 100 {
        return Err(Error::pre("need at least 100 trials"));
    }
    let hs = par_trials(master, "estimate/moments", trials, |rng, _| {
        plugin_entropy(&sample_sequence(p, n, rng), p.len())
    });
    let hs: Vec<f64> = hs.into_iter().collect::<Result<_>>()?;
    let ms = mean_std(&hs);
    Ok(Moments { mean: ms.mean, bias: ms.mean - entropy(p), variance: ms.std * ms.std, trials })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub n: usize,
    pub t: f64,
    pub q: usize,
    pub delta: f64,
    pub true_entropy: f64,
    /// `P[H outside [a_{I0-2}, a_{I0+1}]]`
    pub miss: Estimate,
    /// `P[|H_hat - mu| >= n^(-2t)]`
    pub deviation: Estimate,
    pub moments: Moments,
    /// `sigma^2 n^(4 t^2)`, the constant as printed.
    pub chebyshev_printed: f64,
    /// `sigma^2 n^(4t)`, Chebyshev at threshold `n^(-2t)`.
    pub chebyshev: f64,
    /// Whether `delta_n + n^(-2t) < delta`, the regime where a miss implies a deviation.
    pub inclusion_regime: bool,
    /// Trials with a miss but no deviation (should be zero in the regime above).
    pub inclusion_violations: u64,
    /// Adaptive round trips that did not return the input.
    pub roundtrip: Estimate,
    pub mean_message_bits: f64,
}

/// Selection accuracy and round-trip reliability of the adaptive scheme.
pub fn selection_experiment(p: &FiniteDist, n: usize, t: f64, beta: f64, trials: u64, master: u64) -> Result<SelectionReport> {
    let alphabet = p.len();
    let key = MapKey::random(&mut crate::rng::derive_stream(master, "estimate/bank-key", 0), 0);
    let bank = CodeBank::new(n, alphabet, t, beta, &key)?;
    let h = entropy(p);
    let moments = estimator_moments(p, n, trials.max(100), crate::rng::derive_seed(master, "estimate/moments", 0))?;
    let thr = (n as f64).powf(-2.0 * t);
    let seed_bits = bank.seed_bits();
    let outcomes = par_trials(master, "estimate/select", trials, |rng, _| -> Result<(bool, bool, bool, usize)> {
        let x = sample_sequence(p, n, rng);
        let hh = plugin_entropy(&x, alphabet)?;
        let i0 = bank.part.select(hh);
        let (lo, hi) = bank.part.wide_cell(i0);
        let miss = h < lo - TIE_TOL || h > hi + TIE_TOL;
        let dev = (hh - moments.mean).abs() >= thr;
        let u = Seed::random(rng, seed_bits);
        let m = adaptive_encode(&bank, &u, &x)?;
        let bits = m.to_bits(&bank);
        let ok = adaptive_decode(&bank, &u, &bits)?.sequence() == Some(&x[..]);
        Ok((miss, dev, !ok, bits.len()))
    });
    let (mut miss, mut dev, mut viol, mut err, mut len) = (0u64, 0u64, 0u64, 0u64, 0usize);
    for o in outcomes {
        let (a, b, e, l) = o?;
        miss += a as u64;
        dev += b as u64;
        viol += (a && !b) as u64;
        err += e as u64;
        len += l;
    }
    let nf = n as f64;
    Ok(SelectionReport {
        n,
        t,
        q: bank.q(),
        delta: bank.part.delta,
        true_entropy: h,
        miss: Estimate::binomial(miss, trials),
        deviation: Estimate::binomial(dev, trials),
        chebyshev_printed: moments.variance * nf.powf(4.0 * t * t),
        chebyshev: moments.variance * nf.powf(4.0 * t),
        inclusion_regime: moments.bias.abs() + thr < bank.part.delta,
        inclusion_violations: viol,
        moments,
        roundtrip: Estimate::binomial(err, trials),
        mean_message_bits: len as f64 / trials as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::h2;
    use crate::types::all_sequences;

    #[test]
    fn plugin_values() {
        assert_eq!(plugin_entropy(&[0, 0, 1, 1], 2).unwrap(), 1.0);
        assert_eq!(plugin_entropy(&[0, 0, 0, 0], 2).unwrap(), 0.0);
        assert!((plugin_entropy(&[1, 0, 1, 1], 2).unwrap() - h2(0.25)).abs() < 1e-12);
        assert!((h2(0.25) - 0.8113).abs() < 1e-4);
    }

    #[test]
    fn partition_example() {
        let p = Partition::for_entropy(16, 0.25, 2).unwrap();
        assert_eq!(p.q, 2);
        assert_eq!(p.delta, 0.5);
        assert_eq!(p.points, vec![0.0, 0.0, 0.5, 1.0, 1.0]);
        assert_eq!(p.select(0.7), 2);
        assert_eq!(p.select(0.0), 1);
        assert_eq!(p.select(1.0), 2);
        assert_eq!(p.select(0.5), 1);
        assert!(Partition::new(16, 0.5, 1.0).is_err());
    }

    #[test]
    fn partition_covers() {
        for (n, t, k) in [(64, 0.25, 2), (100, 0.3, 3), (7, 0.1, 4), (1000, 0.45, 2)] {
            let p = Partition::for_entropy(n, t, k).unwrap();
            assert!(p.points.windows(2).all(|w| w[0] <= w[1]));
            assert_eq!(p.a(0), 0.0);
            assert_eq!(p.a(p.q as i64), (k as f64).log2());
            for s in 0..=1000 {
                let h = s as f64 / 1000.0 * p.top;
                let i = p.select(h);
                assert!(p.a(i as i64 - 1) - 1e-12 <= h && h <= p.a(i as i64) + 1e-12);
            }
        }
    }

    #[test]
    fn bank_roundtrip_every_sequence() {
        let key = MapKey::new([3; 32], 0);
        let bank = CodeBank::new(8, 2, 0.25, 0.1, &key).unwrap();
        assert_eq!(bank.q(), 2);
        let u = Seed::from_u64(0xfeed);
        for x in all_sequences(8, 2) {
            let m = adaptive_encode(&bank, &u, &x).unwrap();
            let bits = m.to_bits(&bank);
            assert_eq!(bits.len() as u32, bank.entry(m.index).message_bits() + bank.index_bits());
            assert_eq!(adaptive_decode(&bank, &u, &bits).unwrap(), Decoded::Sequence(x));
        }
    }

    #[test]
    fn index_field_identifies_entry() {
        let key = MapKey::new([5; 32], 0);
        let bank = CodeBank::new(64, 2, 0.25, 0.1, &key).unwrap();
        let lens: Vec<u32> = (1..=bank.q()).map(|i| bank.entry(i).message_bits()).collect();
        // entries q-1 and q share a_{q} = a_{q+1} as upper end, so payload lengths tie there
        assert!(lens[0] < lens[1]);
        assert_eq!(lens[1], lens[2]);
        let u = Seed::from_u64(9);
        let mut x = vec![0u8; 64];
        for v in x.iter_mut().step_by(2) {
            *v = 1;
        }
        let m = adaptive_encode(&bank, &u, &x).unwrap();
        assert_eq!(m.index, 3);
        assert_eq!(adaptive_decode(&bank, &u, &m.to_bits(&bank)).unwrap(), Decoded::Sequence(x));
        let man = bank.manifest();
        assert_eq!(man.entries.len(), 3);
        assert_eq!(man.entries[0].h_lo, 0.0);
        let j = serde_json::to_string(&man).unwrap();
        assert!(j.contains("\"payload_bits\""));
    }

    #[test]
    fn bad_index_rejected() {
        let key = MapKey::new([5; 32], 0);
        let bank = CodeBank::new(8, 2, 0.25, 0.1, &key).unwrap();
        let u = Seed::from_u64(1);
        let m = adaptive_encode(&bank, &u, &[0, 1, 0, 0, 0, 0, 0, 1]).unwrap();
        let mut bits = m.to_bits(&bank);
        bits.pop();
        assert!(adaptive_decode(&bank, &u, &bits).is_err());
    }

    #[test]
    fn moments_point_mass() {
        let m = estimator_moments(&FiniteDist::point(2, 1).unwrap(), 20, 100, 1).unwrap();
        assert_eq!((m.bias, m.variance), (0.0, 0.0));
        assert!(estimator_moments(&FiniteDist::point(2, 1).unwrap(), 20, 99, 1).is_err());
    }
}
