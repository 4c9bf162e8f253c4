//! Small helpers for bit strings stored as `[bool]`.
//!
//! Byte packing is LSB-first everywhere: bit `i` of a string lives in bit
//! `i % 8` of byte `i / 8`.

use crate::{Error, Result};

pub fn hamming_weight(bits: &[bool]) -> usize {
    bits.iter().filter(|&&b| b).count()
}

pub fn hamming_distance(a: &[bool], b: &[bool]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::length("bit strings", a.len(), b.len()));
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count())
}

pub fn xor(a: &[bool], b: &[bool]) -> Result<Vec<bool>> {
    if a.len() != b.len() {
        return Err(Error::length("bit strings", a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x ^ y).collect())
}

pub fn pack_lsb_first(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

/// Inverse of [`pack_lsb_first`]; trailing pad bits in the last byte are dropped.
pub fn unpack_lsb_first(bytes: &[u8], len: usize) -> Result<Vec<bool>> {
    if bytes.len() != len.div_ceil(8) {
        return Err(Error::length("packed bytes", len.div_ceil(8), bytes.len()));
    }
    Ok((0..len).map(|i| (bytes[i / 8] >> (i % 8)) & 1 == 1).collect())
}

/// Renders bits as a `0`/`1` character string.
pub fn to_bit_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

pub fn from_bit_string(s: &str) -> Option<Vec<bool>> {
    s.chars()
        .map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn distance_rejects_unequal_lengths() {
        assert!(hamming_distance(&[true], &[true, false]).is_err());
    }

    #[test]
    fn packing_is_lsb_first() {
        let mut bits = vec![false; 8];
        bits[0] = true;
        assert_eq!(pack_lsb_first(&bits), vec![1]);
        bits[0] = false;
        bits[7] = true;
        assert_eq!(pack_lsb_first(&bits), vec![128]);
    }

    proptest! {
        #[test]
        fn pack_roundtrip(bits in proptest::collection::vec(any::<bool>(), 0..300)) {
            let packed = pack_lsb_first(&bits);
            prop_assert_eq!(unpack_lsb_first(&packed, bits.len()).unwrap(), bits.clone());
            prop_assert_eq!(from_bit_string(&to_bit_string(&bits)).unwrap(), bits);
        }
    }
}
