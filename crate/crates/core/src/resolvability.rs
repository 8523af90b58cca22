//! Random binning of `Y^m` for source resolvability: keyed bin assignment,
//! exact sampling inside a bin and the exact law of the bin index.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{entropy, FiniteDist};
use crate::error::{Error, Result};
use crate::maps::{MapKey, SeededMaps};
use crate::stats::ceil_snap;

/// Largest `|Y|^m` (and bin count) handled by exact enumeration.
pub const TABLE_CAP: u128 = 1 << 24;

/// A fixed realisation of a uniform random binning of `Y^m`.
///
/// Bins are numbered `0..bins`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinningSpec {
    pub m: usize,
    pub alphabet: usize,
    /// Nominal `R_Y`, bits per symbol.
    pub rate: f64,
    /// `ceil(m R_Y)`; bin indices fit in this many bits.
    pub bin_bits: u32,
    pub bins: u128,
    pub key: MapKey,
}

impl BinningSpec {
    /// `ceil(2^{m R_Y})` bins.
    pub fn new(m: usize, alphabet: usize, rate: f64, key: MapKey) -> Result<Self> {
        check_common(m, alphabet)?;
        if !(rate > 0.0 && rate < (alphabet as f64).log2()) {
            return Err(Error::pre(format!("R_Y = {rate} outside (0, log2 {alphabet})")));
        }
        let mr = m as f64 * rate;
        if mr >= 127.0 {
            return Err(Error::Cap { what: "bin index bits", needed: mr.ceil() as u128, cap: 127 });
        }
        let bins = ceil_snap(mr.exp2()) as u128;
        let bin_bits = (ceil_snap(mr) as u32).max(1);
        Ok(BinningSpec { m, alphabet, rate, bin_bits, bins: bins.max(2), key })
    }

    /// `R_Y = H(Y) - eps`.
    pub fn for_source(m: usize, p: &FiniteDist, eps: f64, key: MapKey) -> Result<Self> {
        if eps <= 0.0 {
            return Err(Error::pre("need eps > 0 so that R_Y < H(Y)"));
        }
        Self::new(m, p.len(), entropy(p) - eps, key)
    }

    /// `2^bin_bits` bins, for callers that address bins by bit strings.
    pub fn with_bits(m: usize, alphabet: usize, rate: f64, bin_bits: u32, key: MapKey) -> Result<Self> {
        check_common(m, alphabet)?;
        if bin_bits == 0 || bin_bits > 127 {
            return Err(Error::pre(format!("bin_bits = {bin_bits} outside 1..=127")));
        }
        Ok(BinningSpec { m, alphabet, rate, bin_bits, bins: 1u128 << bin_bits, key })
    }

    pub fn bin_of(&self, y: &[u8]) -> Result<u128> {
        if y.len() != self.m {
            return Err(Error::pre(format!("sequence of length {} for m = {}", y.len(), self.m)));
        }
        Ok(bin_with(&SeededMaps::new(&self.key), y, self.bins))
    }

    /// `|Y|^m`, if it fits the enumeration cap.
    pub fn space(&self) -> Result<u64> {
        let total = (self.alphabet as u128).checked_pow(self.m as u32).unwrap_or(u128::MAX);
        if total > TABLE_CAP {
            return Err(Error::Cap { what: "binning enumeration", needed: total, cap: TABLE_CAP });
        }
        if self.bins > TABLE_CAP {
            return Err(Error::Cap { what: "bin count", needed: self.bins, cap: TABLE_CAP });
        }
        Ok(total as u64)
    }
}

fn check_common(m: usize, alphabet: usize) -> Result<()> {
    if m == 0 || alphabet < 2 || alphabet > 256 {
        return Err(Error::pre("need m >= 1 and 2 <= |Y| <= 256"));
    }
    Ok(())
}

#[inline]
fn bin_with(maps: &SeededMaps, y: &[u8], bins: u128) -> u128 {
    maps.prf(0, y, 128) % bins
}

fn decode_index(mut v: u64, m: usize, alphabet: usize, out: &mut [u8]) {
    for slot in out[..m].iter_mut().rev() {
        *slot = (v % alphabet as u64) as u8;
        v /= alphabet as u64;
    }
}

/// Every sequence of `Y^m` grouped by bin, with its i.i.d. probability.
#[derive(Clone, Debug)]
pub struct BinTable {
    pub spec: BinningSpec,
    /// `offsets[b]..offsets[b+1]` indexes the members of bin `b`.
    offsets: Vec<u32>,
    /// Sequence indices (base-`|Y|`, first symbol most significant).
    members: Vec<u32>,
    /// Running sum of sequence probabilities inside each bin.
    cum: Vec<f64>,
    masses: Vec<f64>,
}

impl BinTable {
    pub fn build(spec: &BinningSpec, p: &FiniteDist) -> Result<Self> {
        Self::build_with(spec, p, true)
    }

    /// `parallel = false` keeps the build on the calling thread, for callers
    /// already inside a parallel loop that hold a lock.
    pub fn build_with(spec: &BinningSpec, p: &FiniteDist, parallel: bool) -> Result<Self> {
        if p.len() != spec.alphabet {
            return Err(Error::AlphabetMismatch(p.len(), spec.alphabet));
        }
        let total = spec.space()?;
        let (m, k, bins) = (spec.m, spec.alphabet, spec.bins);
        let maps = SeededMaps::new(&spec.key);
        let assign = |y: &mut Vec<u8>, v: u64| {
            decode_index(v, m, k, y);
            bin_with(&maps, y, bins) as u32
        };
        let assigned: Vec<u32> = if parallel {
            (0..total).into_par_iter().map_init(|| vec![0u8; m], assign).collect()
        } else {
            let mut y = vec![0u8; m];
            (0..total).map(|v| assign(&mut y, v)).collect()
        };
        let nb = bins as usize;
        let mut offsets = vec![0u32; nb + 1];
        for &b in &assigned {
            offsets[b as usize + 1] += 1;
        }
        for b in 0..nb {
            offsets[b + 1] += offsets[b];
        }
        let mut fill = offsets.clone();
        let mut members = vec![0u32; total as usize];
        for (v, &b) in assigned.iter().enumerate() {
            let slot = &mut fill[b as usize];
            members[*slot as usize] = v as u32;
            *slot += 1;
        }
        drop(assigned);
        let mut cum = vec![0.0; total as usize];
        let mut masses = vec![0.0; nb];
        let mut y = vec![0u8; m];
        for b in 0..nb {
            let mut acc = 0.0;
            for s in offsets[b] as usize..offsets[b + 1] as usize {
                decode_index(members[s] as u64, m, k, &mut y);
                acc += y.iter().map(|&c| p.p(c as usize)).product::<f64>();
                cum[s] = acc;
            }
            masses[b] = acc;
        }
        Ok(BinTable { spec: spec.clone(), offsets, members, cum, masses })
    }

    /// Builds with `key.with_code_id(salt + a)` for `a = 0, 1, ...` until no
    /// bin is empty, trying at most `attempts` keys.
    pub fn build_rekeyed(spec: &BinningSpec, p: &FiniteDist, salt: u64, attempts: u32) -> Result<Self> {
        let mut last = Error::pre("no attempts");
        for a in 0..attempts as u64 {
            let mut s = spec.clone();
            s.key = spec.key.with_code_id(salt.wrapping_add(a));
            let t = Self::build(&s, p)?;
            match t.empty_bins() {
                0 => return Ok(t),
                _ => last = Error::EmptyBin(t.first_empty().unwrap()),
            }
        }
        Err(last)
    }

    fn prob_at(&self, s: usize, lo: usize) -> f64 {
        if s == lo {
            self.cum[s]
        } else {
            self.cum[s] - self.cum[s - 1]
        }
    }

    pub fn bins(&self) -> u128 {
        self.spec.bins
    }

    /// `P[B(Y^m) = b]`
    pub fn bin_mass(&self, b: u128) -> f64 {
        self.masses[b as usize]
    }

    pub fn bin_size(&self, b: u128) -> usize {
        (self.offsets[b as usize + 1] - self.offsets[b as usize]) as usize
    }

    pub fn empty_bins(&self) -> usize {
        self.masses.iter().filter(|&&w| w <= 0.0).count()
    }

    fn first_empty(&self) -> Option<u128> {
        self.masses.iter().position(|&w| w <= 0.0).map(|b| b as u128)
    }

    pub fn sequence(&self, index: u32) -> Vec<u8> {
        let mut y = vec![0u8; self.spec.m];
        decode_index(index as u64, self.spec.m, self.spec.alphabet, &mut y);
        y
    }

    /// Sequences of bin `b` with their probabilities under `p_Y^m`.
    pub fn members(&self, b: u128) -> impl Iterator<Item = (Vec<u8>, f64)> + '_ {
        let r = self.offsets[b as usize] as usize..self.offsets[b as usize + 1] as usize;
        let lo = r.start;
        r.map(move |s| (self.sequence(self.members[s]), self.prob_at(s, lo)))
    }

    /// Exact draw from `p_{Y^m | B = b}`.
    pub fn sample<R: Rng + ?Sized>(&self, b: u128, rng: &mut R) -> Result<Vec<u8>> {
        if b >= self.bins() {
            return Err(Error::pre(format!("bin {b} outside 0..{}", self.bins())));
        }
        let mass = self.masses[b as usize];
        if mass <= 0.0 {
            return Err(Error::EmptyBin(b));
        }
        let lo = self.offsets[b as usize] as usize;
        let hi = self.offsets[b as usize + 1] as usize;
        let r = rng.gen::<f64>() * mass;
        let k = self.cum[lo..hi].partition_point(|&c| c <= r).min(hi - lo - 1);
        // skip zero-probability members that share the running sum
        let mut s = lo + k;
        while self.prob_at(s, lo) <= 0.0 && s > lo {
            s -= 1;
        }
        Ok(self.sequence(self.members[s]))
    }

    /// `(V(p_B, U), D(p_B || U))` over all `bins` cells.
    pub fn uniformity(&self) -> BinningUniformity {
        let nb = self.bins() as f64;
        let inv = 1.0 / nb;
        let mut v = 0.0;
        let mut kl = 0.0;
        for &w in &self.masses {
            v += (w - inv).abs();
            if w > 0.0 {
                kl += w * (w * nb).log2();
            }
        }
        BinningUniformity { vdist: v.min(2.0), kl: kl.max(0.0), bins: self.bins(), empty_bins: self.empty_bins() }
    }

    /// `V(p_hat, p_Y^m)` where `p_hat` draws `b` uniformly then samples inside
    /// bin `b`; computed sequence by sequence.
    pub fn synthesis_vdist(&self) -> f64 {
        let inv = 1.0 / self.bins() as f64;
        let mut v = 0.0;
        for b in 0..self.masses.len() {
            let mass = self.masses[b];
            let lo = self.offsets[b] as usize;
            for s in lo..self.offsets[b + 1] as usize {
                let pr = self.prob_at(s, lo);
                let hat = if mass > 0.0 { inv * pr / mass } else { 0.0 };
                v += (hat - pr).abs();
            }
            if mass <= 0.0 {
                v += inv;
            }
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinningUniformity {
    pub vdist: f64,
    pub kl: f64,
    pub bins: u128,
    pub empty_bins: usize,
}

pub fn bin_of(spec: &BinningSpec, y: &[u8]) -> Result<u128> {
    spec.bin_of(y)
}

/// One-shot exact conditional sample; builds the table each call.
pub fn sample_given_bin<R: Rng + ?Sized>(spec: &BinningSpec, p: &FiniteDist, b: u128, rng: &mut R) -> Result<Vec<u8>> {
    BinTable::build(spec, p)?.sample(b, rng)
}

/// Exact uniformity of the bin index; rejects `R_Y >= H(Y)`.
pub fn binning_uniformity(spec: &BinningSpec, p: &FiniteDist) -> Result<BinningUniformity> {
    if spec.rate >= entropy(p) {
        return Err(Error::pre(format!("R_Y = {} not below H(Y) = {}", spec.rate, entropy(p))));
    }
    Ok(BinTable::build(spec, p)?.uniformity())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    fn key(i: u64) -> MapKey {
        MapKey::new([7; 32], i)
    }

    #[test]
    fn bin_counts() {
        let s = BinningSpec::new(5, 3, 1.2, key(0)).unwrap();
        assert_eq!(s.bin_bits, 6);
        assert_eq!(s.bins, 64);
        let s = BinningSpec::new(4, 3, 1.2855, key(0)).unwrap();
        assert_eq!((s.bins, s.bin_bits), (36, 6));
        let s = BinningSpec::with_bits(4, 2, 0.5, 2, key(0)).unwrap();
        assert_eq!(s.bins, 4);
        assert!(BinningSpec::new(4, 2, 1.0, key(0)).is_err());
        assert!(BinningSpec::new(4, 2, 0.0, key(0)).is_err());
    }

    #[test]
    fn determinism_and_length() {
        let s = BinningSpec::with_bits(6, 3, 1.0, 4, key(1)).unwrap();
        let y = [0, 1, 2, 2, 1, 0];
        assert_eq!(s.bin_of(&y).unwrap(), s.bin_of(&y).unwrap());
        assert!(s.bin_of(&y[..5]).is_err());
    }

    #[test]
    fn average_bin_size() {
        let mut total = 0usize;
        for i in 0..100 {
            let s = BinningSpec::with_bits(4, 2, 0.5, 2, key(i)).unwrap();
            let t = BinTable::build(&s, &FiniteDist::uniform(2).unwrap()).unwrap();
            assert_eq!((0..4).map(|b| t.bin_size(b)).sum::<usize>(), 16);
            total += t.bin_size(0);
        }
        let avg = total as f64 / 100.0;
        assert!((avg - 4.0).abs() < 0.5, "{avg}");
    }

    #[test]
    fn avalanche() {
        let y = [0u8, 1, 1, 0, 1, 0, 0, 1];
        let mut z = y;
        z[3] ^= 1;
        let moved = (0..20).any(|i| {
            let s = BinningSpec::with_bits(8, 2, 0.5, 4, key(i)).unwrap();
            s.bin_of(&y).unwrap() != s.bin_of(&z).unwrap()
        });
        assert!(moved);
    }

    #[test]
    fn recoverability_and_masses() {
        let p = FiniteDist::new(vec![0.5, 0.3, 0.2]).unwrap();
        let s = BinningSpec::for_source(6, &p, 0.2, key(3)).unwrap();
        let t = BinTable::build(&s, &p).unwrap();
        assert!((t.masses.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let mut rng = derive_stream(1, "t", 0);
        for i in 0..2000u128 {
            let b = i % t.bins();
            match t.sample(b, &mut rng) {
                Ok(y) => assert_eq!(t.spec.bin_of(&y).unwrap(), b),
                Err(Error::EmptyBin(e)) => assert_eq!((e, t.bin_size(b)), (b, 0)),
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn rekey_finds_full_binning() {
        let p = FiniteDist::uniform(2).unwrap();
        let s = BinningSpec::with_bits(8, 2, 0.25, 2, key(0)).unwrap();
        let t = BinTable::build_rekeyed(&s, &p, 100, 8).unwrap();
        assert_eq!(t.empty_bins(), 0);
        let s = BinningSpec::with_bits(3, 2, 1.0, 3, key(0)).unwrap();
        let fails = (0..20).filter(|&i| BinTable::build_rekeyed(&s, &p, i * 8, 1).is_err()).count();
        assert!(fails > 0);
    }

    #[test]
    fn singleton_bin() {
        let s = BinningSpec::with_bits(2, 2, 0.5, 3, key(5)).unwrap();
        let t = BinTable::build(&s, &FiniteDist::bernoulli(0.3).unwrap()).unwrap();
        let mut rng = derive_stream(2, "t", 0);
        for b in 0..8 {
            match t.bin_size(b) {
                0 => assert!(matches!(t.sample(b, &mut rng), Err(Error::EmptyBin(_)))),
                1 => {
                    let (only, _) = t.members(b).next().unwrap();
                    for _ in 0..10 {
                        assert_eq!(t.sample(b, &mut rng).unwrap(), only);
                    }
                }
                _ => {}
            }
        }
    }

    #[test]
    fn pushback_identity() {
        let p = FiniteDist::new(vec![0.5, 0.3, 0.2]).unwrap();
        for m in [4, 6, 8] {
            let s = BinningSpec::for_source(m, &p, 0.2, key(m as u64)).unwrap();
            let t = BinTable::build(&s, &p).unwrap();
            let u = t.uniformity();
            assert!((u.vdist - t.synthesis_vdist()).abs() < 1e-9, "m={m}");
        }
    }

    #[test]
    fn one_bit_balanced() {
        let s = BinningSpec::with_bits(10, 2, 0.1, 1, key(11)).unwrap();
        let u = BinTable::build(&s, &FiniteDist::uniform(2).unwrap()).unwrap().uniformity();
        assert!(u.vdist <= 0.1, "{}", u.vdist);
    }

    #[test]
    fn guard_rejects_rate_above_entropy() {
        let p = FiniteDist::bernoulli(0.1).unwrap();
        let s = BinningSpec::new(6, 2, 0.9, key(0)).unwrap();
        assert!(binning_uniformity(&s, &p).is_err());
        assert!(BinningSpec::for_source(6, &p, 0.0, key(0)).is_err());
    }
}
