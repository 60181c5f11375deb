//! Compact text encoding of bit vectors for line-oriented records.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{check_bits, PhyError};

/// Bits (one per byte, values 0/1) serialized as `"<len>:<hex>"`, packed
/// MSB-first and zero-padded to whole nibbles.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct BitVec(pub Vec<u8>);

impl BitVec {
    pub fn new(bits: Vec<u8>) -> Result<Self, PhyError> {
        check_bits(&bits)?;
        Ok(Self(bits))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{}:", self.0.len());
        for nib in self.0.chunks(4) {
            let v = nib.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | (b << (3 - i)));
            s.push(char::from_digit(u32::from(v), 16).expect("nibble < 16"));
        }
        s
    }

    pub fn from_text(s: &str) -> Result<Self, String> {
        let (len, hex) = s.split_once(':').ok_or("missing ':' in bit vector")?;
        let len: usize = len.parse().map_err(|e| format!("bad bit length: {e}"))?;
        if hex.len() != len.div_ceil(4) {
            return Err(format!("{} hex digits cannot hold {len} bits", hex.len()));
        }
        let mut bits = Vec::with_capacity(len);
        for c in hex.chars() {
            let v = c.to_digit(16).ok_or_else(|| format!("invalid hex digit {c:?}"))?;
            for i in 0..4 {
                if bits.len() < len {
                    bits.push(((v >> (3 - i)) & 1) as u8);
                } else if (v >> (3 - i)) & 1 == 1 {
                    return Err("nonzero padding bits".into());
                }
            }
        }
        Ok(Self(bits))
    }
}

impl Serialize for BitVec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_text())
    }
}

impl<'de> Deserialize<'de> for BitVec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = BitVec;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a \"<len>:<hex>\" bit string")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<BitVec, E> {
                BitVec::from_text(v).map_err(E::custom)
            }
        }
        d.deserialize_str(V)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_encoding() {
        assert_eq!(BitVec(vec![1, 0, 1, 1, 1]).to_text(), "5:b8");
        assert_eq!(BitVec(vec![]).to_text(), "0:");
        assert_eq!(BitVec::from_text("5:b8").unwrap().0, vec![1, 0, 1, 1, 1]);
        assert!(BitVec::from_text("5:b9").is_err());
        assert!(BitVec::from_text("5:b").is_err());
        assert!(BitVec::from_text("x:b").is_err());
        assert!(BitVec::new(vec![2]).is_err());
    }

    proptest! {
        #[test]
        fn text_round_trip(bits in prop::collection::vec(0u8..2, 0..200)) {
            let v = BitVec(bits);
            let json = serde_json::to_string(&v).unwrap();
            prop_assert_eq!(serde_json::from_str::<BitVec>(&json).unwrap(), v);
        }
    }
}

/// Bit-packed storage (64 bits per word, LSB-first within a word).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct PackedBits {
    len: usize,
    words: Vec<u64>,
}

impl PackedBits {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self, PhyError> {
        check_bits(bits)?;
        let mut p = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            p.words[i / 64] |= u64::from(b) << (i % 64);
        }
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> u8 {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        ((self.words[i / 64] >> (i % 64)) & 1) as u8
    }

    pub fn to_bits(&self) -> Vec<u8> {
        (0..self.len).map(|i| self.get(i)).collect()
    }

    /// Bits at the given positions.
    pub fn gather(&self, idx: impl IntoIterator<Item = usize>) -> Vec<u8> {
        idx.into_iter().map(|i| self.get(i)).collect()
    }

    /// Little-endian bytes, bit `i` in byte `i / 8` at position `i % 8`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.len.div_ceil(8);
        self.words
            .iter()
            .flat_map(|w| w.to_le_bytes())
            .take(n)
            .collect()
    }

    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self, PhyError> {
        if bytes.len() != len.div_ceil(8) {
            return Err(PhyError::LengthMismatch {
                what: "packed bit bytes",
                expected: len.div_ceil(8),
                got: bytes.len(),
            });
        }
        let mut p = Self::zeros(len);
        for (i, &b) in bytes.iter().enumerate() {
            p.words[i / 8] |= u64::from(b) << (8 * (i % 8));
        }
        if len % 64 != 0 {
            let last = p.words.len() - 1;
            if p.words[last] >> (len % 64) != 0 {
                return Err(PhyError::InvalidParameter("nonzero padding bits".into()));
            }
        }
        Ok(p)
    }
}

#[cfg(test)]
mod packed_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn packed_round_trips(bits in prop::collection::vec(0u8..2, 0..300)) {
            let p = PackedBits::from_bits(&bits).unwrap();
            prop_assert_eq!(p.to_bits(), bits.clone());
            let q = PackedBits::from_bytes(&p.to_bytes(), bits.len()).unwrap();
            prop_assert_eq!(q, p);
        }
    }

    #[test]
    fn byte_layout() {
        let p = PackedBits::from_bits(&[1, 0, 0, 0, 0, 0, 0, 0, 0, 1]).unwrap();
        assert_eq!(p.to_bytes(), vec![0x01, 0x02]);
        assert!(PackedBits::from_bytes(&[0x01, 0x06], 10).is_err());
    }
}
