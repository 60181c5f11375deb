//! Capture records: FAPI metadata, fronthaul grids and simulator truth.

use serde::{Deserialize, Serialize};

use crate::channel::ScenarioConfig;
use crate::grid::{GridConfig, ResourceGrid};
use crate::link::bits::BitVec;
use crate::error::PhyError;
use crate::phy::{CodecConfig, CrcStatus, RedundancyVersion, ScramblingConfig};

/// Scheduling and decoding result of one slot as seen by the MAC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FapiRecord {
    pub slot_id: u64,
    pub ue_id: u16,
    pub harq_pid: u8,
    /// Redundancy version index (0..=3).
    pub rv: u8,
    pub new_data_indicator: bool,
    pub scrambling: ScramblingConfig,
    /// Modulation is fixed to 16-QAM; the codec fixes the coding rate.
    pub codec: CodecConfig,
    pub n_prb: usize,
    pub crc: CrcStatus,
    /// Present iff `crc` is pass.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoded_payload: Option<BitVec>,
    /// Decoded CRC field, present iff `crc` is pass.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoded_crc: Option<BitVec>,
}

impl FapiRecord {
    pub fn redundancy_version(&self) -> Result<RedundancyVersion, PhyError> {
        RedundancyVersion::new(self.rv, &self.codec)
    }

    /// Payload presence agrees with the CRC flag.
    pub fn is_consistent(&self) -> bool {
        let has = self.decoded_payload.is_some() && self.decoded_crc.is_some();
        has == self.crc.is_pass()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FhRecord {
    pub slot_id: u64,
    pub oru_id: u16,
    pub rx_grid: ResourceGrid,
}

/// Simulator-only oracle for one transmitted slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub slot_id: u64,
    pub tx_payload: BitVec,
    /// Scrambled, rate-matched coded bits actually transmitted.
    pub tx_coded_bits: BitVec,
    /// Realized received signal power per RE and antenna.
    pub es: f64,
    /// Noise power per RE and antenna.
    pub n0: f64,
    pub snr_db: f64,
}

/// Campaign-level metadata stored in the FAPI table header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignMeta {
    pub name: String,
    pub scenario: ScenarioConfig,
    pub grid: GridConfig,
    pub codec: CodecConfig,
    pub rnti: u16,
    pub ue_id: u16,
    pub oru_id: u16,
    pub first_slot_id: u64,
    pub n_slots: u64,
    pub max_attempts: usize,
    pub receiver: String,
}
