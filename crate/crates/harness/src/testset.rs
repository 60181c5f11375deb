//! Frozen evaluation slot lists selected by the reference receiver's CRC.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use sitefit_core::link::{FapiRecord, StoreReader};
use sitefit_core::seed::{rng_for, stream};

use crate::error::HarnessError;

pub const TESTSET_FORMAT: &str = "sitefit-testset";
pub const TESTSET_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSlotId {
    pub slot_id: u64,
    /// CRC result of the reference receiver recorded in the capture.
    pub reference_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSet {
    pub format: String,
    pub version: u32,
    pub name: String,
    /// Campaign the slots come from.
    pub campaign: String,
    pub seed: u64,
    pub n_pass: usize,
    pub n_fail: usize,
    /// Sorted by slot id.
    pub slots: Vec<TestSlotId>,
}

impl TestSet {
    pub fn slot_ids(&self) -> BTreeSet<u64> {
        self.slots.iter().map(|s| s.slot_id).collect()
    }

    /// Fails if any slot is also in `training`.
    pub fn check_disjoint(&self, training: &BTreeSet<u64>) -> Result<(), HarnessError> {
        let shared: Vec<u64> = self.slots.iter().map(|s| s.slot_id).filter(|id| training.contains(id)).collect();
        match shared.first() {
            Some(&first) => Err(HarnessError::Overlap {
                count: shared.len(),
                first,
            }),
            None => Ok(()),
        }
    }

    /// Fails unless the slots come from this store with the recorded CRC.
    pub fn check_store(&self, store: &StoreReader) -> Result<(), HarnessError> {
        if store.meta.name != self.campaign {
            return Err(HarnessError::invalid(
                &store.dir,
                format!("test set {} was drawn from campaign {}, store holds {}", self.name, self.campaign, store.meta.name),
            ));
        }
        for s in &self.slots {
            let rec = store
                .fapi
                .binary_search_by_key(&s.slot_id, |r| r.slot_id)
                .map(|i| &store.fapi[i])
                .map_err(|_| HarnessError::invalid(&store.dir, format!("slot {} missing", s.slot_id)))?;
            if rec.crc.is_pass() != s.reference_pass {
                return Err(HarnessError::invalid(
                    &store.dir,
                    format!("slot {} CRC disagrees with the test set", s.slot_id),
                ));
            }
        }
        Ok(())
    }

    fn validate(&self, path: &Path) -> Result<(), HarnessError> {
        if self.format != TESTSET_FORMAT || self.version != TESTSET_VERSION {
            return Err(HarnessError::invalid(
                path,
                format!("expected {TESTSET_FORMAT} v{TESTSET_VERSION}, found {} v{}", self.format, self.version),
            ));
        }
        let n_pass = self.slots.iter().filter(|s| s.reference_pass).count();
        if n_pass != self.n_pass || self.slots.len() - n_pass != self.n_fail {
            return Err(HarnessError::invalid(path, "class counts disagree with the slot list"));
        }
        if !self.slots.windows(2).all(|w| w[0].slot_id < w[1].slot_id) {
            return Err(HarnessError::invalid(path, "slot ids are not strictly increasing"));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        let mut text = serde_json::to_string_pretty(self).expect("test set serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let t: Self = serde_json::from_str(&text).map_err(|e| HarnessError::invalid(path, e.to_string()))?;
        t.validate(path)?;
        Ok(t)
    }
}

/// Draws `n_pass` slots the reference receiver decoded and `n_fail` it did
/// not, uniformly without replacement and skipping `exclude`.
pub fn build_test_set(
    name: &str,
    campaign: &str,
    fapi: &[FapiRecord],
    n_pass: usize,
    n_fail: usize,
    exclude: &BTreeSet<u64>,
    seed: u64,
) -> Result<TestSet, HarnessError> {
    let eligible = fapi.iter().filter(|r| !exclude.contains(&r.slot_id));
    let (pass, fail): (Vec<&FapiRecord>, Vec<&FapiRecord>) = eligible.partition(|r| r.crc.is_pass());
    if pass.len() < n_pass || fail.len() < n_fail {
        return Err(HarnessError::Config(format!(
            "test set {name} needs {n_pass} pass and {n_fail} fail slots, campaign {campaign} has {} and {}",
            pass.len(),
            fail.len()
        )));
    }
    let mut rng = rng_for(&[seed, stream::SELECTION]);
    let mut slots: Vec<TestSlotId> = sample(&mut rng, pass.len(), n_pass)
        .into_iter()
        .map(|i| TestSlotId {
            slot_id: pass[i].slot_id,
            reference_pass: true,
        })
        .collect();
    slots.extend(sample(&mut rng, fail.len(), n_fail).into_iter().map(|i| TestSlotId {
        slot_id: fail[i].slot_id,
        reference_pass: false,
    }));
    slots.sort_by_key(|s| s.slot_id);
    if slots.windows(2).any(|w| w[0].slot_id == w[1].slot_id) {
        return Err(HarnessError::Config(format!("campaign {campaign} repeats slot ids")));
    }
    Ok(TestSet {
        format: TESTSET_FORMAT.into(),
        version: TESTSET_VERSION,
        name: name.into(),
        campaign: campaign.into(),
        seed,
        n_pass,
        n_fail,
        slots,
    })
}
