//! Transport-block CRC (CRC-24A, generator 0x1864CFB).

use serde::{Deserialize, Serialize};

use crate::error::{check_bits, PhyError};

/// Generator polynomial including the x^24 term.
pub const CRC24A_POLY: u32 = 0x186_4CFB;
/// Number of parity bits appended by [`crc_attach`].
pub const CRC_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrcStatus {
    Pass,
    Fail,
}

impl CrcStatus {
    pub fn is_pass(self) -> bool {
        self == CrcStatus::Pass
    }
}

/// Remainder of `bits(x) * x^24` modulo the generator, MSB-first.
pub fn crc24a(bits: &[u8]) -> u32 {
    let low = CRC24A_POLY & 0xFF_FFFF;
    let mut reg = 0u32;
    for &b in bits {
        let feedback = ((reg >> 23) & 1) ^ u32::from(b & 1);
        reg = (reg << 1) & 0xFF_FFFF;
        if feedback == 1 {
            reg ^= low;
        }
    }
    reg
}

/// Appends the 24 CRC parity bits (MSB first) to `payload`.
pub fn crc_attach(payload: &[u8]) -> Result<Vec<u8>, PhyError> {
    if payload.is_empty() {
        return Err(PhyError::Empty("crc_attach payload"));
    }
    check_bits(payload)?;
    let rem = crc24a(payload);
    let mut out = Vec::with_capacity(payload.len() + CRC_LEN);
    out.extend_from_slice(payload);
    out.extend((0..CRC_LEN).rev().map(|i| ((rem >> i) & 1) as u8));
    Ok(out)
}

/// Checks a CRC-attached block.
pub fn crc_check(block: &[u8]) -> Result<CrcStatus, PhyError> {
    if block.len() <= CRC_LEN {
        return Err(PhyError::LengthMismatch {
            what: "crc_check block (minimum)",
            expected: CRC_LEN + 1,
            got: block.len(),
        });
    }
    check_bits(block)?;
    Ok(if crc24a(block) == 0 {
        CrcStatus::Pass
    } else {
        CrcStatus::Fail
    })
}

/// Packs the 24 trailing CRC bits of a block into an integer.
pub fn crc_value(parity_bits: &[u8]) -> u32 {
    parity_bits
        .iter()
        .fold(0u32, |acc, &b| (acc << 1) | u32::from(b & 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Plain polynomial long division of `bits * x^24` by the generator.
    fn long_division_remainder(bits: &[u8]) -> u32 {
        let poly: Vec<u8> = (0..=24).rev().map(|i| ((CRC24A_POLY >> i) & 1) as u8).collect();
        let mut dividend: Vec<u8> = bits.to_vec();
        dividend.extend(std::iter::repeat_n(0, 24));
        for i in 0..bits.len() {
            if dividend[i] == 1 {
                for (j, &p) in poly.iter().enumerate() {
                    dividend[i + j] ^= p;
                }
            }
        }
        dividend[bits.len()..]
            .iter()
            .fold(0u32, |acc, &b| (acc << 1) | u32::from(b))
    }

    fn bytes_to_bits(bytes: &[u8]) -> Vec<u8> {
        bytes
            .iter()
            .flat_map(|&byte| (0..8).rev().map(move |i| (byte >> i) & 1))
            .collect()
    }

    #[test]
    fn zero_payload_has_zero_parity() {
        let block = crc_attach(&[0u8; 40]).unwrap();
        assert_eq!(block.len(), 64);
        assert!(block[40..].iter().all(|&b| b == 0));
    }

    #[test]
    fn ascii_digits_match_long_division() {
        let bits = bytes_to_bits(b"123456789");
        let oracle = long_division_remainder(&bits);
        // Published check value of CRC-24/LTE-A.
        assert_eq!(oracle, 0xCD_E703);
        let block = crc_attach(&bits).unwrap();
        assert_eq!(crc_value(&block[bits.len()..]), oracle);
    }

    #[test]
    fn short_block_is_rejected() {
        assert!(crc_check(&[0u8; 24]).is_err());
        assert!(crc_attach(&[]).is_err());
        assert!(crc_attach(&[0, 2, 1]).is_err());
    }

    #[test]
    fn random_blocks_rarely_pass() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let mut passes = 0;
        let mut block = [0u8; 64];
        for _ in 0..1_000_000 {
            let word: u64 = rng.random();
            for (i, b) in block.iter_mut().enumerate() {
                *b = ((word >> i) & 1) as u8;
            }
            if crc24a(&block) == 0 {
                passes += 1;
            }
        }
        // Expected 10^6 / 2^24 ≈ 0.06 passes.
        assert!(passes <= 2, "{passes} random blocks passed");
    }

    proptest! {
        #[test]
        fn attach_then_check_passes_and_single_flip_fails(
            payload in proptest::collection::vec(0u8..2, 1..300),
            flip in any::<proptest::sample::Index>(),
        ) {
            let mut block = crc_attach(&payload).unwrap();
            prop_assert_eq!(crc_check(&block).unwrap(), CrcStatus::Pass);
            prop_assert_eq!(crc24a(&payload), long_division_remainder(&payload));
            let i = flip.index(block.len());
            block[i] ^= 1;
            prop_assert_eq!(crc_check(&block).unwrap(), CrcStatus::Fail);
        }
    }
}
