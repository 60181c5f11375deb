//! Dataset BLER with Wilson score intervals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sitefit_core::classic::{decode_llrs, Receiver, SlotContext};
use sitefit_core::grid::ResourceGrid;
use sitefit_core::link::{FapiRecord, StoreReader};

use crate::error::HarnessError;
use crate::testset::TestSet;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `k` successes out of `n` trials.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    // The exact endpoints at k = 0 and k = n are 0 and 1.
    let lo = if k == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Block errors within one class of the test set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCount {
    pub n_slots: u64,
    pub n_errors: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlerReport {
    pub receiver: String,
    pub test_set: String,
    pub n_slots: u64,
    pub n_errors: u64,
    pub bler: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Slots the reference receiver decoded.
    pub pass_class: ClassCount,
    /// Slots the reference receiver failed.
    pub fail_class: ClassCount,
    pub config_hash: String,
}

impl BlerReport {
    /// Builds a report from per-slot CRC results aligned with `test.slots`.
    pub fn from_outcomes(receiver: &str, test: &TestSet, crc_pass: &[bool], config_hash: &str) -> Self {
        assert_eq!(crc_pass.len(), test.slots.len(), "one outcome per test slot");
        let mut pass_class = ClassCount { n_slots: 0, n_errors: 0 };
        let mut fail_class = ClassCount { n_slots: 0, n_errors: 0 };
        for (slot, &ok) in test.slots.iter().zip(crc_pass) {
            let c = if slot.reference_pass { &mut pass_class } else { &mut fail_class };
            c.n_slots += 1;
            c.n_errors += u64::from(!ok);
        }
        let n_slots = pass_class.n_slots + fail_class.n_slots;
        let n_errors = pass_class.n_errors + fail_class.n_errors;
        let (ci_low, ci_high) = wilson_interval(n_errors, n_slots, Z95);
        Self {
            receiver: receiver.to_string(),
            test_set: test.name.clone(),
            n_slots,
            n_errors,
            bler: if n_slots == 0 { 0.0 } else { n_errors as f64 / n_slots as f64 },
            ci_low,
            ci_high,
            pass_class,
            fail_class,
            config_hash: config_hash.to_string(),
        }
    }

    /// True when the two 95% intervals share no point.
    pub fn separated_from(&self, other: &BlerReport) -> bool {
        self.ci_high < other.ci_low || other.ci_high < self.ci_low
    }

    /// True when this point estimate lies inside the other report's interval.
    pub fn within_ci_of(&self, other: &BlerReport) -> bool {
        (other.ci_low..=other.ci_high).contains(&self.bler)
    }
}

/// Receiver inputs of one test slot.
pub struct TestSlot<'a> {
    pub record: &'a FapiRecord,
    pub rx: ResourceGrid,
    pub ctx: SlotContext,
    /// Realized signal and noise power per RE and antenna.
    pub es: f64,
    pub n0: f64,
}

/// Loads the grid, context and powers of every test slot, in test-set order.
pub fn load_test_slots<'a>(store: &'a StoreReader, test: &TestSet) -> Result<Vec<TestSlot<'a>>, HarnessError> {
    test.check_store(store)?;
    test.slots
        .iter()
        .map(|s| {
            let i = store
                .fapi
                .binary_search_by_key(&s.slot_id, |r| r.slot_id)
                .map_err(|_| HarnessError::invalid(&store.dir, format!("slot {} missing from FAPI table", s.slot_id)))?;
            let record = &store.fapi[i];
            let truth = store
                .truth_for(s.slot_id)
                .ok_or_else(|| HarnessError::invalid(&store.dir, format!("slot {} has no truth record", s.slot_id)))?;
            let rx = store.fh.read_slot(s.slot_id)?.rx_grid;
            let ctx = SlotContext::new(
                store.meta.grid,
                record.slot_id,
                record.codec,
                record.redundancy_version()?,
                record.scrambling,
            );
            Ok(TestSlot {
                record,
                rx,
                ctx,
                es: truth.es,
                n0: truth.n0,
            })
        })
        .collect()
}

/// CRC outcome of `receiver` on one grid; receiver errors count as failures.
pub fn slot_passes(receiver: &dyn Receiver, rx: &ResourceGrid, ctx: &SlotContext) -> bool {
    receiver.receive(rx, ctx).is_ok_and(|o| o.crc.is_pass())
}

/// Whole-slot CRC results of `llrs` for each requested depth.
pub fn decode_depths(llrs: &[Vec<f32>], ctx: &SlotContext) -> Vec<bool> {
    llrs.iter()
        .map(|l| decode_llrs(l.clone(), ctx).is_ok_and(|o| o.crc.is_pass()))
        .collect()
}

/// BLER of `receiver` re-run over the recorded test slots.
pub fn dataset_bler(
    receiver: &dyn Receiver,
    slots: &[TestSlot<'_>],
    test: &TestSet,
    config_hash: &str,
) -> BlerReport {
    let outcomes: Vec<bool> = slots.par_iter().map(|s| slot_passes(receiver, &s.rx, &s.ctx)).collect();
    BlerReport::from_outcomes(receiver.name(), test, &outcomes, config_hash)
}
