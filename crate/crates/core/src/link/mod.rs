//! Closed-loop uplink with HARQ and the FH/FAPI capture store.

pub mod bits;
pub mod campaign;
pub mod harq;
pub mod records;
pub mod store;

pub use bits::{BitVec, PackedBits};
pub use campaign::{run_campaign, run_campaign_to_dir, CampaignConfig, CampaignSummary};
pub use harq::{HarqState, PidState, Transmission, MAX_ATTEMPTS, N_HARQ_PIDS};
pub use records::{CampaignMeta, FapiRecord, FhRecord, GroundTruthRecord};
pub use store::{read_store, write_store, CaptureStore, FhReader, FhWriter, StoreReader};
