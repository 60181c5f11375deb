//! Depth and finetuning-progress sweeps of the neural receiver.

use std::time::Instant;

use rayon::prelude::*;
use sitefit_nrx::{NrxModel, NrxReceiver};

use crate::bler::{decode_depths, BlerReport, TestSlot};
use crate::error::HarnessError;
use crate::testset::TestSet;

/// CRC results per slot for depths `1..=max_iters` from one forward pass.
pub fn depth_outcomes(
    model: &NrxModel<f32>,
    slots: &[TestSlot<'_>],
    max_iters: usize,
) -> Result<Vec<Vec<bool>>, HarnessError> {
    let rx = NrxReceiver::new(model.clone(), max_iters, "nrx")?;
    slots
        .par_iter()
        .map(|s| {
            let out = rx.all_iterations(&s.rx, &s.ctx, max_iters)?;
            let llrs: Vec<Vec<f32>> = (1..=max_iters).map(|k| out.iteration(k).to_vec()).collect();
            Ok(decode_depths(&llrs, &s.ctx))
        })
        .collect()
}

/// One report per depth `1..=max_iters`, sharing a single forward pass per
/// slot through the truncated readouts.
pub fn depth_sweep(
    model: &NrxModel<f32>,
    name: &str,
    slots: &[TestSlot<'_>],
    test: &TestSet,
    max_iters: usize,
    config_hash: &str,
) -> Result<Vec<BlerReport>, HarnessError> {
    let per_slot = depth_outcomes(model, slots, max_iters)?;
    Ok((0..max_iters)
        .map(|k| {
            let col: Vec<bool> = per_slot.iter().map(|o| o[k]).collect();
            BlerReport::from_outcomes(&format!("{name}-{}it", k + 1), test, &col, config_hash)
        })
        .collect())
}

/// Mean wall-clock milliseconds per slot of a forward pass at each depth,
/// over the first `n_probe` slots. Informational only.
pub fn depth_latency(
    model: &NrxModel<f32>,
    slots: &[TestSlot<'_>],
    max_iters: usize,
    n_probe: usize,
) -> Result<Vec<(usize, f64)>, HarnessError> {
    let rx = NrxReceiver::new(model.clone(), max_iters, "nrx")?;
    let probe = &slots[..n_probe.min(slots.len())];
    (1..=max_iters)
        .map(|k| {
            let t = Instant::now();
            for s in probe {
                rx.all_iterations(&s.rx, &s.ctx, k)?;
            }
            Ok((k, t.elapsed().as_secs_f64() * 1e3 / probe.len().max(1) as f64))
        })
        .collect()
}

/// Reports of every checkpoint on every test set at depth `n_iters`.
pub fn batch_sweep(
    checkpoints: &[(u64, NrxModel<f32>)],
    sets: &[(&TestSet, &[TestSlot<'_>])],
    n_iters: usize,
    config_hash: &str,
) -> Result<Vec<(u64, BlerReport)>, HarnessError> {
    let mut out = Vec::new();
    for (batches, model) in checkpoints {
        let rx = NrxReceiver::new(model.clone(), n_iters, &format!("finetuned-{batches}"))?;
        for (test, slots) in sets {
            out.push((*batches, crate::bler::dataset_bler(&rx, slots, test, config_hash)));
        }
    }
    Ok(out)
}
