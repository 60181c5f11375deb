//! Circular-buffer rate matching with four redundancy versions.

use serde::{Deserialize, Serialize};

use crate::error::PhyError;
use crate::phy::ldpc::CodecConfig;

/// Order in which HARQ attempts cycle through redundancy versions.
pub const RV_SEQUENCE: [u8; 4] = [0, 2, 3, 1];

/// A redundancy version with its resolved circular-buffer start offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RedundancyVersion {
    rv: u8,
    start_offset: usize,
}

impl RedundancyVersion {
    /// Start offset is `rv / 4` of the buffer, rounded down to a multiple of
    /// the lifting size.
    pub fn new(rv: u8, cfg: &CodecConfig) -> Result<Self, PhyError> {
        if rv > 3 {
            return Err(PhyError::InvalidParameter(format!(
                "redundancy version {rv} outside 0..=3"
            )));
        }
        let n = cfg.codeword_len();
        let z = cfg.lifting_size;
        let start_offset = (usize::from(rv) * n / 4) / z * z;
        Ok(Self { rv, start_offset })
    }

    pub fn index(&self) -> u8 {
        self.rv
    }

    pub fn start_offset(&self) -> usize {
        self.start_offset
    }

    /// RV used by the `attempt`-th transmission (0-based) of a HARQ chain.
    pub fn for_attempt(attempt: usize, cfg: &CodecConfig) -> Result<Self, PhyError> {
        Self::new(RV_SEQUENCE[attempt % RV_SEQUENCE.len()], cfg)
    }
}

/// Reads `e` bits from the circular buffer starting at the RV offset.
pub fn rate_match(codeword: &[u8], rv: RedundancyVersion, e: usize) -> Result<Vec<u8>, PhyError> {
    if e == 0 {
        return Err(PhyError::InvalidParameter("rate_match length E must be positive".into()));
    }
    if codeword.is_empty() {
        return Err(PhyError::Empty("rate_match codeword"));
    }
    let n = codeword.len();
    if rv.start_offset >= n {
        return Err(PhyError::InvalidParameter(format!(
            "rv offset {} outside buffer of {n}",
            rv.start_offset
        )));
    }
    Ok(codeword
        .iter()
        .cycle()
        .skip(rv.start_offset)
        .take(e)
        .copied()
        .collect())
}

/// Inverse of [`rate_match`] for LLRs: repeated positions are summed and
/// positions never transmitted stay at zero.
pub fn rate_recover(llrs: &[f32], rv: RedundancyVersion, n: usize) -> Result<Vec<f32>, PhyError> {
    if llrs.is_empty() {
        return Err(PhyError::Empty("rate_recover llrs"));
    }
    if rv.start_offset >= n {
        return Err(PhyError::InvalidParameter(format!(
            "rv offset {} outside buffer of {n}",
            rv.start_offset
        )));
    }
    let mut out = vec![0f32; n];
    let mut pos = rv.start_offset;
    for &l in llrs {
        out[pos] += l;
        pos += 1;
        if pos == n {
            pos = 0;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> CodecConfig {
        CodecConfig::new(4, 104).unwrap()
    }

    fn codeword() -> Vec<u8> {
        (0..100).map(|i| ((i * 37 + 11) % 5 % 2) as u8).collect()
    }

    #[test]
    fn identity_and_wraparound() {
        let cw = codeword();
        let rv0 = RedundancyVersion::new(0, &cfg()).unwrap();
        assert_eq!(rate_match(&cw, rv0, 100).unwrap(), cw);
        let twice = rate_match(&cw, rv0, 200).unwrap();
        assert_eq!(&twice[..100], &cw[..]);
        assert_eq!(&twice[100..], &cw[..]);
    }

    #[test]
    fn offsets_follow_index_arithmetic() {
        let cfg = cfg();
        let n = cfg.codeword_len();
        let z = cfg.lifting_size;
        let cw = codeword();
        for rv in 0..4u8 {
            let v = RedundancyVersion::new(rv, &cfg).unwrap();
            let expected = (rv as usize * n / 4) / z * z;
            assert_eq!(v.start_offset(), expected);
            assert_eq!(v.start_offset() % z, 0);
            assert_eq!(rate_match(&cw, v, 7).unwrap()[0], cw[expected]);
        }
        assert_eq!(RedundancyVersion::new(2, &cfg).unwrap().start_offset(), 48);
        assert!(RedundancyVersion::new(4, &cfg).is_err());
    }

    #[test]
    fn zero_length_is_rejected() {
        let rv0 = RedundancyVersion::new(0, &cfg()).unwrap();
        assert!(rate_match(&codeword(), rv0, 0).is_err());
    }

    #[test]
    fn recover_sums_repeats_and_zero_fills() {
        let rv0 = RedundancyVersion::new(0, &cfg()).unwrap();
        let ones = vec![1.0f32; 100];
        assert_eq!(rate_recover(&ones, rv0, 100).unwrap(), ones);
        let doubled = rate_recover(&vec![1.0f32; 200], rv0, 100).unwrap();
        assert!(doubled.iter().all(|&v| v == 2.0));
        let rv2 = RedundancyVersion::new(2, &cfg()).unwrap();
        let partial = rate_recover(&[1.0f32; 10], rv2, 100).unwrap();
        assert_eq!(partial.iter().filter(|&&v| v != 0.0).count(), 10);
        assert_eq!(partial[48], 1.0);
    }

    #[test]
    fn recover_then_hard_decision_reproduces_codeword() {
        let cfg = cfg();
        let cw = codeword();
        for rv in 0..4u8 {
            let v = RedundancyVersion::new(rv, &cfg).unwrap();
            let tx = rate_match(&cw, v, 130).unwrap();
            let llrs: Vec<f32> = tx.iter().map(|&b| if b == 0 { 3.0 } else { -3.0 }).collect();
            let rec = rate_recover(&llrs, v, cw.len()).unwrap();
            let hard: Vec<u8> = rec.iter().map(|&l| (l < 0.0) as u8).collect();
            assert_eq!(hard, cw);
        }
    }
}
