//! Bit strings as `Vec<u8>` of 0/1, most significant bit first.

use num_bigint::BigUint;
use num_traits::Zero;

use crate::error::{Error, Result};

pub fn to_bits(v: u128, width: u32) -> Vec<u8> {
    (0..width).rev().map(|k| if k < 128 { ((v >> k) & 1) as u8 } else { 0 }).collect()
}

pub fn from_bits(bits: &[u8]) -> u128 {
    bits.iter().fold(0u128, |acc, &b| (acc << 1) | b as u128)
}

pub fn big_to_bits(v: &BigUint, width: u32) -> Vec<u8> {
    (0..width as u64).rev().map(|k| v.bit(k) as u8).collect()
}

pub fn big_from_bits(bits: &[u8]) -> BigUint {
    let mut v = BigUint::zero();
    for (k, &b) in bits.iter().rev().enumerate() {
        if b != 0 {
            v.set_bit(k as u64, true);
        }
    }
    v
}

pub fn xor(a: &[u8], b: &[u8]) -> Result<Vec<u8>> {
    if a.len() != b.len() {
        return Err(Error::pre(format!("xor of {} and {} bits", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x ^ y).collect())
}

/// Bits needed to write any of `0..count`.
pub fn index_bits(count: u64) -> u32 {
    if count <= 1 {
        0
    } else {
        64 - (count - 1).leading_zeros()
    }
}

/// Parses a string of `0`/`1` characters, ignoring whitespace.
pub fn parse_bitstring(s: &str) -> Result<Vec<u8>> {
    s.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            _ => Err(Error::Format(format!("not a bit: {c:?}"))),
        })
        .collect()
}

pub fn bitstring(bits: &[u8]) -> String {
    bits.iter().map(|&b| if b == 0 { '0' } else { '1' }).collect()
}

/// Serde adapter writing bit vectors as `0`/`1` strings.
pub mod as_bitstring {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bits: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::bitstring(bits))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_bitstring(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrips() {
        assert_eq!(to_bits(5, 4), vec![0, 1, 0, 1]);
        assert_eq!(from_bits(&[1, 1, 0]), 6);
        assert_eq!(from_bits(&to_bits(u128::MAX, 128)), u128::MAX);
        let v = BigUint::from(0b1011u32);
        assert_eq!(big_to_bits(&v, 6), vec![0, 0, 1, 0, 1, 1]);
        assert_eq!(big_from_bits(&big_to_bits(&v, 6)), v);
        assert_eq!(index_bits(1), 0);
        assert_eq!(index_bits(2), 1);
        assert_eq!(index_bits(3), 2);
        assert_eq!(index_bits(4), 2);
        assert_eq!(index_bits(5), 3);
        assert_eq!(parse_bitstring("01 1").unwrap(), vec![0, 1, 1]);
        assert!(parse_bitstring("012").is_err());
        assert!(xor(&[1], &[1, 0]).is_err());
    }
}
