//! Bit-level transmit and receive primitives.
//!
//! LLR convention used throughout the project: a positive LLR means bit 0 is
//! more likely.

pub mod crc;
pub mod ldpc;
pub mod qam;
pub mod rate_match;
pub mod scrambling;

pub use crc::{crc_attach, crc_check, CrcStatus, CRC_LEN};
pub use ldpc::{ldpc_decode, ldpc_encode, CodecConfig, DecodeOutput, LdpcCode};
pub use qam::{qam16_demap, qam16_map, BITS_PER_SYMBOL};
pub use rate_match::{rate_match, rate_recover, RedundancyVersion, RV_SEQUENCE};
pub use scrambling::{descramble_llrs, gold_sequence, scramble, ScramblingConfig};
