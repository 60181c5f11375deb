//! Length-31 Gold sequence scrambling.

use serde::{Deserialize, Serialize};

use crate::error::PhyError;

/// Number of sequence steps discarded before the first output bit.
pub const GOLD_OFFSET: usize = 1600;

/// Scrambler seed. Retransmissions in a later slot use a different seed than
/// the initial transmission, so labels must be re-derived per slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScramblingConfig {
    pub c_init: u32,
}

impl ScramblingConfig {
    pub fn new(c_init: u32) -> Result<Self, PhyError> {
        if c_init >= 1 << 31 {
            return Err(PhyError::InvalidParameter(format!(
                "c_init {c_init} does not fit in 31 bits"
            )));
        }
        Ok(Self { c_init })
    }

    /// Seed for a PUSCH transmission of `rnti` in slot `slot_id`.
    pub fn for_pusch(rnti: u16, slot_id: u64) -> Self {
        let c_init = (u32::from(rnti) << 15) + (slot_id % (1 << 15)) as u32;
        Self { c_init }
    }
}

/// First `len` bits of the Gold sequence for `c_init`.
pub fn gold_sequence(c_init: u32, len: usize) -> Vec<u8> {
    // Registers hold x(n) .. x(n + 30) in bits 0 .. 30.
    let mut x1: u32 = 1;
    let mut x2: u32 = c_init & 0x7FFF_FFFF;
    let step = |x1: &mut u32, x2: &mut u32| {
        let n1 = (*x1 ^ (*x1 >> 3)) & 1;
        let n2 = (*x2 ^ (*x2 >> 1) ^ (*x2 >> 2) ^ (*x2 >> 3)) & 1;
        *x1 = (*x1 >> 1) | (n1 << 30);
        *x2 = (*x2 >> 1) | (n2 << 30);
    };
    for _ in 0..GOLD_OFFSET {
        step(&mut x1, &mut x2);
    }
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(((x1 ^ x2) & 1) as u8);
        step(&mut x1, &mut x2);
    }
    out
}

/// XORs `bits` with the scrambling sequence. Applying it twice is the identity.
pub fn scramble(bits: &[u8], cfg: ScramblingConfig) -> Vec<u8> {
    let seq = gold_sequence(cfg.c_init, bits.len());
    bits.iter().zip(seq).map(|(&b, c)| b ^ c).collect()
}

/// Descrambles LLRs in place by flipping the sign where the sequence bit is 1.
pub fn descramble_llrs(llrs: &mut [f32], cfg: ScramblingConfig) {
    let seq = gold_sequence(cfg.c_init, llrs.len());
    for (l, c) in llrs.iter_mut().zip(seq) {
        if c == 1 {
            *l = -*l;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Literal recurrence over explicit sequences.
    fn naive_gold(c_init: u32, len: usize) -> Vec<u8> {
        let total = GOLD_OFFSET + len + 31;
        let mut x1 = vec![0u8; total];
        let mut x2 = vec![0u8; total];
        x1[0] = 1;
        for (i, v) in x2.iter_mut().take(31).enumerate() {
            *v = ((c_init >> i) & 1) as u8;
        }
        for n in 0..total - 31 {
            x1[n + 31] = (x1[n + 3] + x1[n]) % 2;
            x2[n + 31] = (x2[n + 3] + x2[n + 2] + x2[n + 1] + x2[n]) % 2;
        }
        (0..len)
            .map(|n| (x1[n + GOLD_OFFSET] + x2[n + GOLD_OFFSET]) % 2)
            .collect()
    }

    #[test]
    fn matches_naive_lfsr() {
        for c_init in [0u32, 1, 42, 0x1234_5678, (1 << 31) - 1] {
            assert_eq!(gold_sequence(c_init, 500), naive_gold(c_init, 500));
        }
    }

    #[test]
    fn zero_input_yields_sequence() {
        let cfg = ScramblingConfig::new(42).unwrap();
        assert_eq!(scramble(&[0u8; 256], cfg), gold_sequence(42, 256));
    }

    #[test]
    fn seed_range_is_checked() {
        assert!(ScramblingConfig::new(1 << 31).is_err());
        let cfg = ScramblingConfig::for_pusch(u16::MAX, (1 << 15) - 1);
        assert!(cfg.c_init < 1 << 31);
    }

    #[test]
    fn llr_descrambling_matches_bit_descrambling() {
        let cfg = ScramblingConfig::new(777).unwrap();
        let bits: Vec<u8> = (0..64).map(|i| (i * 7 % 3 == 0) as u8).collect();
        let tx = scramble(&bits, cfg);
        let mut llrs: Vec<f32> = tx.iter().map(|&b| if b == 0 { 1.0 } else { -1.0 }).collect();
        descramble_llrs(&mut llrs, cfg);
        let hard: Vec<u8> = llrs.iter().map(|&l| (l < 0.0) as u8).collect();
        assert_eq!(hard, bits);
    }

    proptest! {
        #[test]
        fn scrambling_is_an_involution(
            bits in proptest::collection::vec(0u8..2, 0..2000),
            c_init in 0u32..(1 << 31),
        ) {
            let cfg = ScramblingConfig::new(c_init).unwrap();
            prop_assert_eq!(scramble(&scramble(&bits, cfg), cfg), bits);
        }
    }
}
