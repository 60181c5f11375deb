//! Closed-loop campaign: schedule, transmit, propagate, receive, record.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{add_noise, draw_channel, received_signal, ScenarioConfig};
use crate::classic::{Receiver, SlotContext};
use crate::error::{PhyError, StoreError};
use crate::grid::{map_slot, GridConfig};
use crate::link::bits::BitVec;
use crate::link::harq::{HarqState, Transmission, MAX_ATTEMPTS};
use crate::link::records::{CampaignMeta, FapiRecord, FhRecord, GroundTruthRecord};
use crate::link::store::{
    CaptureStore, FhWriter, JsonlWriter, FAPI_FILE, FAPI_FORMAT, FH_FILE, TRUTH_FILE, TRUTH_FORMAT,
};
use crate::phy::{
    crc_attach, ldpc_encode, rate_match, scramble, CodecConfig, CrcStatus, RedundancyVersion,
    ScramblingConfig,
};
use crate::seed::{rng_for, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub name: String,
    pub scenario: ScenarioConfig,
    pub grid: GridConfig,
    pub code_rate: f64,
    pub n_slots: u64,
    /// Slot ids of this campaign are `first_slot_id..first_slot_id + n_slots`.
    pub first_slot_id: u64,
    pub rnti: u16,
    pub ue_id: u16,
    pub oru_id: u16,
    pub max_attempts: usize,
}

impl CampaignConfig {
    pub fn new(name: &str, scenario: ScenarioConfig, grid: GridConfig, code_rate: f64, n_slots: u64) -> Self {
        Self {
            name: name.into(),
            scenario,
            grid,
            code_rate,
            n_slots,
            first_slot_id: 0,
            rnti: 0x4601,
            ue_id: 0,
            oru_id: 0,
            max_attempts: MAX_ATTEMPTS,
        }
    }

    pub fn codec(&self) -> Result<CodecConfig, PhyError> {
        CodecConfig::for_code_rate(self.grid.coded_bits(), self.code_rate)
    }

    pub fn validate(&self) -> Result<(), PhyError> {
        if self.n_slots == 0 {
            return Err(PhyError::InvalidParameter("campaign needs at least one slot".into()));
        }
        self.grid.validate()?;
        self.scenario.validate()?;
        self.codec()?;
        Ok(())
    }

    fn meta(&self, receiver: &str) -> Result<CampaignMeta, PhyError> {
        Ok(CampaignMeta {
            name: self.name.clone(),
            scenario: self.scenario.clone(),
            grid: self.grid,
            codec: self.codec()?,
            rnti: self.rnti,
            ue_id: self.ue_id,
            oru_id: self.oru_id,
            first_slot_id: self.first_slot_id,
            n_slots: self.n_slots,
            max_attempts: HarqState::new(self.max_attempts).max_attempts(),
            receiver: receiver.into(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub n_slots: u64,
    pub n_fail: u64,
    pub n_new_data: u64,
}

impl CampaignSummary {
    pub fn bler(&self) -> f64 {
        self.n_fail as f64 / self.n_slots.max(1) as f64
    }
}

/// Runs the slots in order and hands each record triple to `sink`.
fn drive(
    cfg: &CampaignConfig,
    receiver: &dyn Receiver,
    mut sink: impl FnMut(FapiRecord, FhRecord, GroundTruthRecord) -> Result<(), StoreError>,
) -> Result<CampaignSummary, StoreError> {
    let invalid = |e: PhyError| StoreError::Inconsistent {
        path: cfg.name.clone().into(),
        detail: e.to_string(),
    };
    cfg.validate().map_err(invalid)?;
    let codec = cfg.codec().map_err(invalid)?;
    let mut harq = HarqState::new(cfg.max_attempts);
    let mut summary = CampaignSummary {
        n_slots: cfg.n_slots,
        n_fail: 0,
        n_new_data: 0,
    };
    for i in 0..cfg.n_slots {
        let slot_id = cfg.first_slot_id + i;
        let pid = HarqState::pid_for_slot(i);
        let tx = harq.next_transmission(pid);
        let payload = match &tx {
            Transmission::NewData => {
                let mut rng = rng_for(&[cfg.scenario.seed, slot_id, stream::PAYLOAD]);
                (0..codec.payload_len()).map(|_| rng.random_range(0..2u8)).collect()
            }
            Transmission::Retransmission { payload, .. } => payload.clone(),
        };
        let rv = RedundancyVersion::new(tx.rv(), &codec).map_err(invalid)?;
        let scrambling = ScramblingConfig::for_pusch(cfg.rnti, slot_id);
        let ctx = SlotContext::new(cfg.grid, slot_id, codec, rv, scrambling);

        let info = crc_attach(&payload).map_err(invalid)?;
        let cw = ldpc_encode(&info, &codec).map_err(invalid)?;
        let coded = scramble(&rate_match(&cw, rv, codec.rate_matched_len).map_err(invalid)?, scrambling);
        let (tx_grid, _) = map_slot(&coded, &cfg.grid, &ctx.dmrs).map_err(invalid)?;

        let ch = draw_channel(&cfg.scenario, &cfg.grid, slot_id);
        let mut rng = rng_for(&[cfg.scenario.seed, slot_id, stream::NOISE]);
        let mut y = received_signal(&tx_grid, &ch, &cfg.scenario.ue, &mut rng).map_err(invalid)?;
        let es = y.mean_power();
        add_noise(&mut y, ch.noise_var, &mut rng);

        // A receiver error counts as a failed CRC.
        let (crc, decoded_payload, decoded_crc) = match receiver.receive(&y, &ctx) {
            Ok(out) if out.crc.is_pass() => (
                CrcStatus::Pass,
                Some(BitVec(out.payload)),
                Some(BitVec(out.crc_bits)),
            ),
            _ => (CrcStatus::Fail, None, None),
        };
        harq.on_result(pid, &payload, tx.attempt(), crc);
        summary.n_fail += u64::from(!crc.is_pass());
        summary.n_new_data += u64::from(tx.new_data_indicator());

        let fapi = FapiRecord {
            slot_id,
            ue_id: cfg.ue_id,
            harq_pid: pid,
            rv: rv.index(),
            new_data_indicator: tx.new_data_indicator(),
            scrambling,
            codec,
            n_prb: cfg.grid.n_prb,
            crc,
            decoded_payload,
            decoded_crc,
        };
        let fh = FhRecord {
            slot_id,
            oru_id: cfg.oru_id,
            rx_grid: y,
        };
        let truth = GroundTruthRecord {
            slot_id,
            tx_payload: BitVec(payload),
            tx_coded_bits: BitVec(coded),
            es,
            n0: ch.noise_var,
            snr_db: ch.snr_db,
        };
        sink(fapi, fh, truth)?;
    }
    Ok(summary)
}

/// Runs a campaign in memory.
pub fn run_campaign(cfg: &CampaignConfig, receiver: &dyn Receiver) -> Result<CaptureStore, StoreError> {
    let meta = cfg.meta(receiver.name()).map_err(|e| StoreError::Inconsistent {
        path: cfg.name.clone().into(),
        detail: e.to_string(),
    })?;
    let mut store = CaptureStore {
        meta,
        fapi: Vec::new(),
        fh: Vec::new(),
        truth: Vec::new(),
    };
    drive(cfg, receiver, |f, h, t| {
        store.fapi.push(f);
        store.fh.push(h);
        store.truth.push(t);
        Ok(())
    })?;
    Ok(store)
}

/// Runs a campaign streaming records into a store directory.
pub fn run_campaign_to_dir(
    cfg: &CampaignConfig,
    receiver: &dyn Receiver,
    dir: &Path,
) -> Result<CampaignSummary, StoreError> {
    let meta = cfg.meta(receiver.name()).map_err(|e| StoreError::Inconsistent {
        path: dir.into(),
        detail: e.to_string(),
    })?;
    let n = u32::try_from(cfg.n_slots).map_err(|_| StoreError::Inconsistent {
        path: dir.into(),
        detail: "too many slots for one store".into(),
    })?;
    std::fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
    let mut fapi = JsonlWriter::create(&dir.join(FAPI_FILE), FAPI_FORMAT, Some(&meta))?;
    let mut truth = JsonlWriter::create::<()>(&dir.join(TRUTH_FILE), TRUTH_FORMAT, None)?;
    let dims = (cfg.grid.n_rx, cfg.grid.n_symbols(), cfg.grid.n_subcarriers());
    let mut fh = FhWriter::create(&dir.join(FH_FILE), dims, n)?;
    let summary = drive(cfg, receiver, |f, h, t| {
        fapi.write(&f)?;
        fh.write(&h)?;
        truth.write(&t)
    })?;
    fapi.finish()?;
    truth.finish()?;
    fh.finish()?;
    Ok(summary)
}
