//! Keyed stand-ins for the random maps of a uniform code.
//!
//! `phi1` sends a sequence to a `bits_out`-bit index: injectively (through a
//! Feistel permutation of its rank within the type class) when the type has
//! entropy at most the code rate, and through a keyed hash otherwise.
//! `phi2` injects the type index into `gamma_bits` bits.
//!
//! Indices are zero-based, so a `b`-bit codomain is `0..2^b`.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::{num_types, rank_in_type, type_at, type_index, type_of, unrank_in_type, TypeClass};

pub const MAX_BITS: u32 = 128;
const RATE_TOL: f64 = 1e-12;

const TAG_PHI1: u64 = 0x7068_6931;
const TAG_PHI2: u64 = 0x7068_6932;
const TAG_PRF: u64 = 0x7072_6600;

/// 256-bit master key plus an integer tag separating map families.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MapKey {
    pub master: [u8; 32],
    pub code_id: u64,
}

impl MapKey {
    pub fn new(master: [u8; 32], code_id: u64) -> Self {
        MapKey { master, code_id }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, code_id: u64) -> Self {
        let mut master = [0u8; 32];
        rng.fill(&mut master);
        MapKey { master, code_id }
    }

    pub fn from_hex(s: &str, code_id: u64) -> Result<Self> {
        let v = hex::decode(s.trim()).map_err(|e| Error::Format(format!("key hex: {e}")))?;
        let master: [u8; 32] = v
            .try_into()
            .map_err(|_| Error::Format("key must be 32 bytes".into()))?;
        Ok(MapKey { master, code_id })
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.master)
    }

    pub fn with_code_id(&self, code_id: u64) -> Self {
        MapKey { master: self.master, code_id }
    }
}

#[derive(Serialize, Deserialize)]
struct MapKeyRepr {
    key: String,
    code_id: u64,
}

impl Serialize for MapKey {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MapKeyRepr { key: self.to_hex(), code_id: self.code_id }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MapKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = MapKeyRepr::deserialize(d)?;
        MapKey::from_hex(&r.key, r.code_id).map_err(serde::de::Error::custom)
    }
}

/// A shared seed value `u`, an arbitrary-length bit string read as an integer.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Seed(pub BigUint);

impl Seed {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, bits: u32) -> Self {
        let mut bytes = vec![0u8; (bits as usize).div_ceil(8)];
        rng.fill(&mut bytes[..]);
        Seed(BigUint::from_bytes_le(&bytes) & low_mask(bits))
    }

    pub fn from_u64(v: u64) -> Self {
        Seed(BigUint::from(v))
    }

    /// The low `bits` bits, which is how a shorter code reads a longer seed.
    pub fn low_bits(&self, bits: u32) -> Seed {
        Seed(&self.0 & low_mask(bits))
    }

    pub fn to_hex(&self) -> String {
        self.0.to_str_radix(16)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        BigUint::parse_bytes(s.trim().as_bytes(), 16)
            .map(Seed)
            .ok_or_else(|| Error::Format(format!("seed hex {s:?}")))
    }
}

impl Serialize for Seed {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Seed {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Seed::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

fn low_mask(bits: u32) -> BigUint {
    (BigUint::one() << bits) - 1u32
}

#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn mask(bits: u32) -> u128 {
    if bits >= 128 {
        u128::MAX
    } else {
        (1u128 << bits) - 1
    }
}

/// Balanced 4-round Feistel permutation of `0..2^bits`.
///
/// Odd widths run over `bits + 1` and cycle-walk back into range.
#[derive(Clone, Debug)]
pub struct Prp {
    bits: u32,
    half: u32,
    keys: [u64; 4],
}

impl Prp {
    pub fn new(bits: u32, keys: [u64; 4]) -> Self {
        assert!(bits <= MAX_BITS);
        Prp { bits, half: bits.div_ceil(2), keys }
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    #[inline]
    fn round(k: u64, r: u64) -> u64 {
        mix64(r.wrapping_add(k))
    }

    #[inline]
    fn forward(&self, x: u128) -> u128 {
        let hm = mask(self.half) as u64;
        let mut l = (x >> self.half) as u64;
        let mut r = (x as u64) & hm;
        for &k in &self.keys {
            let nr = l ^ (Self::round(k, r) & hm);
            l = r;
            r = nr;
        }
        ((l as u128) << self.half) | r as u128
    }

    #[inline]
    fn backward(&self, y: u128) -> u128 {
        let hm = mask(self.half) as u64;
        let mut l = (y >> self.half) as u64;
        let mut r = (y as u64) & hm;
        for &k in self.keys.iter().rev() {
            let pl = r ^ (Self::round(k, l) & hm);
            r = l;
            l = pl;
        }
        ((l as u128) << self.half) | r as u128
    }

    pub fn permute(&self, x: u128) -> u128 {
        if self.bits == 0 {
            return 0;
        }
        debug_assert!(x <= mask(self.bits));
        let mut y = self.forward(x);
        while y > mask(self.bits) {
            y = self.forward(y);
        }
        y
    }

    pub fn invert(&self, y: u128) -> u128 {
        if self.bits == 0 {
            return 0;
        }
        let mut x = self.backward(y);
        while x > mask(self.bits) {
            x = self.backward(x);
        }
        x
    }
}

/// Per-key state: the master key compressed once through SHA-256.
/// Everything below it is derived with the cheap mixer.
#[derive(Clone, Debug)]
pub struct SeededMaps {
    base: [u64; 4],
}

impl SeededMaps {
    pub fn new(key: &MapKey) -> Self {
        let mut h = Sha256::new();
        h.update(b"covertpress/maps");
        h.update(key.master);
        h.update(key.code_id.to_le_bytes());
        let d = h.finalize();
        let mut base = [0u64; 4];
        for (i, w) in base.iter_mut().enumerate() {
            *w = u64::from_le_bytes(d[8 * i..8 * i + 8].try_into().unwrap());
        }
        SeededMaps { base }
    }

    fn absorb(&self, words: &[u64]) -> u64 {
        let mut h = self.base[0];
        for (i, &w) in words.iter().enumerate() {
            h = mix64(h ^ w.wrapping_add(self.base[(i + 1) & 3]));
        }
        mix64(h ^ self.base[3])
    }

    /// Compresses a seed value to the word used in domain tags.
    pub fn seed_word(&self, u: &Seed) -> u64 {
        let digits = u.0.to_u64_digits();
        let mut h = mix64(self.base[1] ^ digits.len() as u64);
        for d in digits {
            h = mix64(h ^ d).wrapping_add(self.base[2]);
        }
        mix64(h)
    }

    fn prp(&self, tag: u64, uw: u64, extra: u128, bits: u32) -> Prp {
        let mut keys = [0u64; 4];
        for (i, k) in keys.iter_mut().enumerate() {
            *k = self.absorb(&[tag, uw, extra as u64, (extra >> 64) as u64, bits as u64, i as u64]);
        }
        Prp::new(bits, keys)
    }

    pub fn phi1_prp(&self, uw: u64, type_idx: u128, bits: u32) -> Prp {
        self.prp(TAG_PHI1, uw, type_idx, bits)
    }

    pub fn phi2_prp(&self, uw: u64, bits: u32) -> Prp {
        self.prp(TAG_PHI2, uw, 0, bits)
    }

    /// Keyed hash of `(u, x)` onto `0..2^bits`.
    pub fn prf(&self, uw: u64, x: &[u8], bits: u32) -> u128 {
        let mut h = self.absorb(&[TAG_PRF, uw, x.len() as u64]);
        for chunk in x.chunks(8) {
            let mut w = 0u64;
            for (i, &s) in chunk.iter().enumerate() {
                w |= (s as u64) << (8 * i);
            }
            h = mix64(h ^ w).wrapping_add(self.base[1]);
        }
        let lo = mix64(h ^ self.base[2]);
        let hi = mix64(h ^ self.base[3]);
        (((hi as u128) << 64) | lo as u128) & mask(bits)
    }
}

fn check_bits(bits: u32) -> Result<()> {
    if bits > MAX_BITS {
        return Err(Error::Cap { what: "map width (bits)", needed: bits as u128, cap: MAX_BITS as u128 });
    }
    Ok(())
}

/// Whether `phi1` is injective on this type at rate `rate` (bits per symbol).
pub fn injective_type(t: &TypeClass, rate: f64) -> bool {
    t.entropy() <= rate + RATE_TOL
}

pub fn phi1_eval(key: &MapKey, u: &Seed, x: &[u8], alphabet: usize, rate: f64, bits_out: u32) -> Result<u128> {
    check_bits(bits_out)?;
    let maps = SeededMaps::new(key);
    let uw = maps.seed_word(u);
    let t = type_of(x, alphabet)?;
    if injective_type(&t, rate) {
        let rank = rank_in_type(x, alphabet)?;
        let rank = rank
            .to_u128()
            .filter(|&r| r <= mask(bits_out))
            .ok_or_else(|| Error::pre("type class larger than the codomain; rate and bits_out disagree"))?;
        Ok(maps.phi1_prp(uw, type_index(&t), bits_out).permute(rank))
    } else {
        Ok(maps.prf(uw, x, bits_out))
    }
}

/// The unique member of `t` sent to `index`, if any.
pub fn phi1_invert(key: &MapKey, u: &Seed, t: &TypeClass, index: u128, rate: f64, bits_out: u32) -> Result<Option<Vec<u8>>> {
    check_bits(bits_out)?;
    if !injective_type(t, rate) {
        return Err(Error::pre("phi1 is not injective on this type"));
    }
    let maps = SeededMaps::new(key);
    let uw = maps.seed_word(u);
    let r = maps.phi1_prp(uw, type_index(t), bits_out).invert(index & mask(bits_out));
    let size = t.class_size();
    let r = BigUint::from(r);
    if r >= size {
        return Ok(None);
    }
    Ok(Some(unrank_in_type(t, &r)?))
}

pub fn phi2_eval(key: &MapKey, u: &Seed, t: &TypeClass) -> Result<u128> {
    let bits = gamma_bits(t.n, t.alphabet());
    check_bits(bits)?;
    let maps = SeededMaps::new(key);
    Ok(maps.phi2_prp(maps.seed_word(u), bits).permute(type_index(t)))
}

pub fn phi2_invert(key: &MapKey, u: &Seed, index: u128, n: usize, alphabet: usize) -> Result<Option<TypeClass>> {
    let bits = gamma_bits(n, alphabet);
    check_bits(bits)?;
    let maps = SeededMaps::new(key);
    let i = maps.phi2_prp(maps.seed_word(u), bits).invert(index & mask(bits));
    if i >= num_types(n, alphabet) {
        return Ok(None);
    }
    Ok(Some(type_at(i, n, alphabet)?))
}

/// `gamma(n) = |X| log2(n + 1)`.
pub fn gamma(n: usize, alphabet: usize) -> f64 {
    alphabet as f64 * ((n + 1) as f64).log2()
}

/// Smallest `b` with `2^b >= (n + 1)^|X|`, computed exactly.
pub fn gamma_bits(n: usize, alphabet: usize) -> u32 {
    let v = BigUint::from(n as u64 + 1).pow(alphabet as u32);
    if v <= BigUint::one() {
        return 0;
    }
    (v - 1u32).bits() as u32
}
