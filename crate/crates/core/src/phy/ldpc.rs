//! Quasi-cyclic LDPC code with a base-graph-2-like protograph.
//!
//! The base matrix has 10 systematic columns and 15 parity columns. The first
//! four parity columns form a dual-diagonal core; every further parity column
//! is a degree-one extension, so the code can be encoded by back substitution
//! and punctured by the circular-buffer rate matcher without losing the
//! systematic part. Shift values are reduced modulo the lifting size.

use serde::{Deserialize, Serialize};

use crate::error::{check_bits, PhyError};
use crate::phy::crc::{crc_check, CrcStatus, CRC_LEN};

/// Systematic base columns.
pub const INFO_COLUMNS: usize = 10;
/// Parity base rows (= parity base columns).
pub const PARITY_ROWS: usize = 15;
/// Total base columns.
pub const BASE_COLUMNS: usize = INFO_COLUMNS + PARITY_ROWS;
/// Check-to-variable scaling of the normalized min-sum decoder.
pub const MIN_SUM_SCALE: f32 = 0.8;
pub const DEFAULT_MAX_ITERS: usize = 20;

const CORE_ROWS: usize = 4;

/// Shift table; -1 marks an all-zero block. Generated to be free of length-4
/// cycles at Z = 48, 96, 192 and 384.
#[rustfmt::skip]
const BASE_GRAPH: [[i16; BASE_COLUMNS]; PARITY_ROWS] = [
    [167, 115, 284, 148,  -1, 225,   0,  -1,  -1, 369,   1,   0,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1],
    [115, 380,  -1, 107, 346,  -1, 267, 284, 255,  -1,  -1,   0,   0,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1],
    [264,  -1, 209,  -1,  69, 143,  -1, 101, 348, 283,   0,  -1,   0,   0,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1],
    [ -1,  18,  64, 336,  -1, 230,  80,  -1, 237, 123,   1,  -1,  -1,   0,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1],
    [ -1,  -1,  -1,  -1, 363, 180,  24,  -1,  -1,  -1,  -1,  -1,  24,  -1,   0,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1],
    [ -1,  -1,  -1,  -1,  -1, 281,  -1,  26, 250,  -1, 132,  -1,  -1,  -1,  -1,   0,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1],
    [ 87,  -1, 101,  -1,  -1,  -1,  -1,  -1,  -1, 195,  -1,  -1,  -1, 145,  -1,  -1,   0,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1],
    [ 19, 254,  -1,  -1,  -1,  -1,  -1, 173,  -1,  -1,  -1,  -1,  -1,  67,  -1,  -1,  -1,   0,  -1,  -1,  -1,  -1,  -1,  -1,  -1],
    [ -1,  -1, 184, 352,  -1,  -1,  -1,  -1,  -1,  32,  -1, 123,  -1,  -1,  -1,  -1,  -1,  -1,   0,  -1,  -1,  -1,  -1,  -1,  -1],
    [ -1,  -1,  -1,  -1,  -1,  29, 314,  -1,  -1,  -1,  -1,  -1, 282,  -1,  -1,  -1,  -1,  -1,  -1,   0,  -1,  -1,  -1,  -1,  -1],
    [ -1,  -1,  -1, 250,  -1,  -1, 211,  -1,  -1,  -1, 352,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,   0,  -1,  -1,  -1,  -1],
    [ -1, 222,  -1,  -1,  -1,  -1,  -1, 207, 329,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,   0,  -1,  -1,  -1],
    [ -1, 319,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,   5,  -1, 281,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,   0,  -1,  -1],
    [ -1,  -1, 372,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1, 144,  88,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,   0,  -1],
    [ -1, 275,  -1,  -1,  -1,  77,  -1, 274,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,  -1,   0],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BaseGraph {
    #[default]
    Bg2Lite,
}

/// Code dimensions. `K = 10 Z` includes the 24 CRC bits, `N = 25 Z` is the
/// circular-buffer length, `E` the number of bits sent per transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodecConfig {
    #[serde(default)]
    pub base_graph: BaseGraph,
    pub lifting_size: usize,
    pub rate_matched_len: usize,
}

impl CodecConfig {
    pub fn new(lifting_size: usize, rate_matched_len: usize) -> Result<Self, PhyError> {
        if lifting_size < 3 {
            return Err(PhyError::InvalidParameter(format!(
                "lifting size {lifting_size} must be at least 3"
            )));
        }
        if rate_matched_len == 0 {
            return Err(PhyError::InvalidParameter(
                "rate-matched length must be positive".into(),
            ));
        }
        Ok(Self {
            base_graph: BaseGraph::Bg2Lite,
            lifting_size,
            rate_matched_len,
        })
    }

    /// Largest lifting size whose code rate `K / E` does not exceed `rate`.
    pub fn for_code_rate(rate_matched_len: usize, rate: f64) -> Result<Self, PhyError> {
        if !(rate > 0.0 && rate < 1.0) {
            return Err(PhyError::InvalidParameter(format!(
                "code rate {rate} outside (0, 1)"
            )));
        }
        let z = (rate * rate_matched_len as f64 / INFO_COLUMNS as f64).floor() as usize;
        Self::new(z, rate_matched_len)
    }

    /// K: information bits including CRC.
    pub fn info_len(&self) -> usize {
        INFO_COLUMNS * self.lifting_size
    }

    /// Transport-block payload bits (K minus CRC).
    pub fn payload_len(&self) -> usize {
        self.info_len() - CRC_LEN
    }

    /// N: codeword / circular buffer length.
    pub fn codeword_len(&self) -> usize {
        BASE_COLUMNS * self.lifting_size
    }

    pub fn code_rate(&self) -> f64 {
        self.info_len() as f64 / self.rate_matched_len as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput {
    /// Systematic bits without the CRC.
    pub payload: Vec<u8>,
    /// Decoded 24-bit CRC field.
    pub crc_bits: Vec<u8>,
    pub crc: CrcStatus,
    pub hard_codeword: Vec<u8>,
    pub iterations: usize,
    pub syndrome_ok: bool,
}

/// A lifted code ready for encoding and decoding.
#[derive(Debug, Clone)]
pub struct LdpcCode {
    cfg: CodecConfig,
    z: usize,
    /// Per base row: (base column, shift mod Z).
    rows: Vec<Vec<(usize, usize)>>,
}

impl LdpcCode {
    pub fn new(cfg: CodecConfig) -> Self {
        let z = cfg.lifting_size;
        let rows = BASE_GRAPH
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &s)| s >= 0)
                    .map(|(c, &s)| (c, s as usize % z))
                    .collect()
            })
            .collect();
        Self { cfg, z, rows }
    }

    pub fn config(&self) -> &CodecConfig {
        &self.cfg
    }

    fn shift(&self, row: usize, col: usize) -> usize {
        self.rows[row]
            .iter()
            .find(|&&(c, _)| c == col)
            .map(|&(_, s)| s)
            .expect("core structure entry missing from base graph")
    }

    /// `acc ^= P^s x`, where `(P^s x)[i] = x[(i + s) mod Z]`.
    fn xor_shifted(acc: &mut [u8], x: &[u8], s: usize) {
        let z = acc.len();
        let (head, tail) = x.split_at(s);
        for (a, &b) in acc[..z - s].iter_mut().zip(tail) {
            *a ^= b;
        }
        for (a, &b) in acc[z - s..].iter_mut().zip(head) {
            *a ^= b;
        }
    }

    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>, PhyError> {
        let z = self.z;
        if info.len() != self.cfg.info_len() {
            return Err(PhyError::LengthMismatch {
                what: "ldpc_encode payload",
                expected: self.cfg.info_len(),
                got: info.len(),
            });
        }
        check_bits(info)?;
        let mut cw = vec![0u8; self.cfg.codeword_len()];
        cw[..info.len()].copy_from_slice(info);

        let mut lambda = vec![vec![0u8; z]; CORE_ROWS];
        for (r, acc) in lambda.iter_mut().enumerate() {
            for &(c, s) in self.rows[r].iter().filter(|(c, _)| *c < INFO_COLUMNS) {
                Self::xor_shifted(acc, &info[c * z..(c + 1) * z], s);
            }
        }
        // Summing the four core rows leaves p0 alone.
        let mut p0 = vec![0u8; z];
        for l in &lambda {
            for (a, &b) in p0.iter_mut().zip(l) {
                *a ^= b;
            }
        }
        let mut p1 = lambda[0].clone();
        Self::xor_shifted(&mut p1, &p0, self.shift(0, INFO_COLUMNS));
        let mut p2 = lambda[1].clone();
        for (a, &b) in p2.iter_mut().zip(&p1) {
            *a ^= b;
        }
        let mut p3 = lambda[3].clone();
        Self::xor_shifted(&mut p3, &p0, self.shift(3, INFO_COLUMNS));
        for (k, p) in [p0, p1, p2, p3].into_iter().enumerate() {
            let c = INFO_COLUMNS + k;
            cw[c * z..(c + 1) * z].copy_from_slice(&p);
        }

        for r in CORE_ROWS..PARITY_ROWS {
            let own = INFO_COLUMNS + r;
            let mut acc = vec![0u8; z];
            for &(c, s) in self.rows[r].iter().filter(|(c, _)| *c != own) {
                Self::xor_shifted(&mut acc, &cw[c * z..(c + 1) * z], s);
            }
            cw[own * z..(own + 1) * z].copy_from_slice(&acc);
        }
        Ok(cw)
    }

    /// True when `H c^T = 0`.
    pub fn syndrome_ok(&self, cw: &[u8]) -> bool {
        let z = self.z;
        self.rows.iter().all(|row| {
            (0..z).all(|i| {
                row.iter()
                    .fold(0u8, |acc, &(c, s)| acc ^ cw[c * z + (i + s) % z])
                    == 0
            })
        })
    }

    /// Dense parity-check matrix, one row per check. Intended for tests.
    pub fn parity_check_matrix(&self) -> Vec<Vec<u8>> {
        let z = self.z;
        let n = self.cfg.codeword_len();
        let mut h = Vec::with_capacity(PARITY_ROWS * z);
        for row in &self.rows {
            for i in 0..z {
                let mut line = vec![0u8; n];
                for &(c, s) in row {
                    line[c * z + (i + s) % z] ^= 1;
                }
                h.push(line);
            }
        }
        h
    }

    /// Layered normalized min-sum decoding of N channel LLRs.
    pub fn decode(&self, llrs: &[f32], max_iters: usize) -> Result<DecodeOutput, PhyError> {
        let z = self.z;
        let n = self.cfg.codeword_len();
        if llrs.len() != n {
            return Err(PhyError::LengthMismatch {
                what: "ldpc_decode llrs",
                expected: n,
                got: llrs.len(),
            });
        }
        if llrs.iter().any(|l| !l.is_finite()) {
            return Err(PhyError::NonFinite("ldpc_decode llrs"));
        }
        let mut post = llrs.to_vec();
        let edge_offsets: Vec<usize> = self
            .rows
            .iter()
            .scan(0, |acc, r| {
                let start = *acc;
                *acc += r.len();
                Some(start)
            })
            .collect();
        let n_edges: usize = self.rows.iter().map(Vec::len).sum();
        let mut msgs = vec![0f32; n_edges * z];
        let mut q = [0f32; BASE_COLUMNS];
        let mut var = [0usize; BASE_COLUMNS];
        let mut hard = vec![0u8; n];
        let mut iterations = 0;
        let mut syndrome_ok = false;

        for _ in 0..max_iters.max(1) {
            iterations += 1;
            for (r, row) in self.rows.iter().enumerate() {
                let base = edge_offsets[r];
                for i in 0..z {
                    let mut min1 = f32::INFINITY;
                    let mut min2 = f32::INFINITY;
                    let mut arg = 0;
                    let mut sign_neg = false;
                    for (e, &(c, s)) in row.iter().enumerate() {
                        let mut idx = i + s;
                        if idx >= z {
                            idx -= z;
                        }
                        let v = c * z + idx;
                        var[e] = v;
                        let val = post[v] - msgs[(base + e) * z + i];
                        q[e] = val;
                        sign_neg ^= val < 0.0;
                        let mag = val.abs();
                        if mag < min1 {
                            min2 = min1;
                            min1 = mag;
                            arg = e;
                        } else if mag < min2 {
                            min2 = mag;
                        }
                    }
                    for e in 0..row.len() {
                        let mag = MIN_SUM_SCALE * if e == arg { min2 } else { min1 };
                        let neg = sign_neg ^ (q[e] < 0.0);
                        let m = if neg { -mag } else { mag };
                        msgs[(base + e) * z + i] = m;
                        post[var[e]] = q[e] + m;
                    }
                }
            }
            for (h, &l) in hard.iter_mut().zip(&post) {
                *h = (l < 0.0) as u8;
            }
            if self.syndrome_ok(&hard) {
                syndrome_ok = true;
                break;
            }
        }

        let k = self.cfg.info_len();
        // A systematic bit without any evidence is undetermined, not zero.
        let undetermined = post[..k].iter().any(|&l| l == 0.0);
        let crc = if syndrome_ok && !undetermined {
            crc_check(&hard[..k])?
        } else {
            CrcStatus::Fail
        };
        Ok(DecodeOutput {
            payload: hard[..k - CRC_LEN].to_vec(),
            crc_bits: hard[k - CRC_LEN..k].to_vec(),
            crc,
            hard_codeword: hard,
            iterations,
            syndrome_ok,
        })
    }
}

/// Encodes a CRC-attached block of K bits into an N-bit codeword.
pub fn ldpc_encode(payload: &[u8], cfg: &CodecConfig) -> Result<Vec<u8>, PhyError> {
    LdpcCode::new(*cfg).encode(payload)
}

pub fn ldpc_decode(
    channel_llrs: &[f32],
    cfg: &CodecConfig,
    max_iters: usize,
) -> Result<DecodeOutput, PhyError> {
    LdpcCode::new(*cfg).decode(channel_llrs, max_iters)
}
