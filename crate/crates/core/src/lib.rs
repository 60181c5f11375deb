//! Link-level building blocks for site-specific neural receiver finetuning.
//!
//! The crate simulates a PUSCH-like uplink (LDPC + 16-QAM over a slot-sized
//! OFDM resource grid), runs a HARQ process per slot, records fronthaul and
//! FAPI-style captures, and recovers ground-truth coded-bit labels for failed
//! transmissions from the capture store.

pub mod channel;
pub mod classic;
pub mod error;
pub mod features;
pub mod grid;
pub mod labels;
pub mod link;
pub mod phy;
pub mod seed;

pub use error::{PhyError, StoreError};
