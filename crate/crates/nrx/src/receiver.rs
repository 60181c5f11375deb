//! The network as a drop-in slot receiver.

use sitefit_core::classic::{Receiver, SlotContext};
use sitefit_core::features::slot_features;
use sitefit_core::grid::{ResourceGrid, SYMBOLS_PER_SLOT};
use sitefit_core::PhyError;

use crate::error::NrxError;
use crate::model::{NrxInput, NrxModel, NrxOutput};

/// Runs the network over the whole slot grid at a fixed depth.
#[derive(Debug, Clone)]
pub struct NrxReceiver {
    pub model: NrxModel<f32>,
    pub n_iters: usize,
    name: String,
}

impl NrxReceiver {
    pub fn new(model: NrxModel<f32>, n_iters: usize, name: &str) -> Result<Self, NrxError> {
        if !(1..=model.cfg.max_iters).contains(&n_iters) {
            return Err(NrxError::Iterations {
                requested: n_iters,
                max: model.cfg.max_iters,
            });
        }
        Ok(Self {
            model,
            n_iters,
            name: name.to_string(),
        })
    }

    /// LLRs after every iteration up to `n_iters`.
    pub fn all_iterations(&self, rx: &ResourceGrid, ctx: &SlotContext, n_iters: usize) -> Result<NrxOutput<f32>, NrxError> {
        if ctx.grid.n_rx != self.model.cfg.n_rx {
            return Err(NrxError::Config(format!(
                "model expects {} antennas, slot has {}",
                self.model.cfg.n_rx, ctx.grid.n_rx
            )));
        }
        let feats = slot_features(rx, &ctx.grid, &ctx.dmrs)?;
        let positions = ctx.grid.data_positions();
        let input = NrxInput {
            grids: vec![&feats.data],
            n_sym: SYMBOLS_PER_SLOT,
            n_sc: feats.n_sc,
            data_positions: &positions,
        };
        self.model.forward(&input, n_iters)
    }
}

impl Receiver for NrxReceiver {
    fn name(&self) -> &str {
        &self.name
    }

    fn llrs(&self, rx: &ResourceGrid, ctx: &SlotContext) -> Result<Vec<f32>, PhyError> {
        let out = self
            .all_iterations(rx, ctx, self.n_iters)
            .map_err(|e| PhyError::InvalidParameter(e.to_string()))?;
        Ok(out.iteration(self.n_iters).to_vec())
    }
}
