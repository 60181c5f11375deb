//! Per-RE neural receiver input features.
//!
//! Channel layout for `n_rx` antennas, each plane `[symbol][subcarrier]`:
//!
//! | channels              | content                                        |
//! |-----------------------|------------------------------------------------|
//! | `0 .. 2 n_rx`         | Re/Im of y for antenna 0, 1, ..                |
//! | `2 n_rx .. 4 n_rx`    | Re/Im of the LS channel estimate per antenna   |
//! | `4 n_rx`              | frequency distance to the nearest pilot (0/1)  |
//! | `4 n_rx + 1`          | time distance to the nearest DMRS symbol, /max |
//! | `4 n_rx + 2`          | ln(N0 estimate / received power), constant    |
//!
//! y and the estimate are scaled by `1/sqrt(P)` with `P` the mean received
//! power of the slot (an estimate of Es + N0).

use crate::classic::{ls_estimate, ChannelEstimate};
use crate::error::PhyError;
use crate::grid::{extract_blocks, DmrsPattern, GridConfig, ResourceGrid, SYMBOLS_PER_SLOT};

pub fn n_feature_channels(n_rx: usize) -> usize {
    4 * n_rx + 3
}

/// Feature planes `[C][T][F]` of a full slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotFeatures {
    pub n_channels: usize,
    pub n_sc: usize,
    pub data: Vec<f32>,
}

impl SlotFeatures {
    pub fn plane(&self, c: usize) -> &[f32] {
        let n = SYMBOLS_PER_SLOT * self.n_sc;
        &self.data[c * n..(c + 1) * n]
    }

    /// Splits into 4-PRB training blocks.
    pub fn blocks(&self, cfg: &GridConfig) -> Result<Vec<Vec<f32>>, PhyError> {
        extract_blocks(&self.data, self.n_channels, cfg)
    }
}

pub fn slot_features(rx: &ResourceGrid, cfg: &GridConfig, dmrs: &DmrsPattern) -> Result<SlotFeatures, PhyError> {
    let est = ls_estimate(rx, cfg, dmrs)?;
    features_from_estimate(rx, cfg, &est)
}

pub fn features_from_estimate(
    rx: &ResourceGrid,
    cfg: &GridConfig,
    est: &ChannelEstimate,
) -> Result<SlotFeatures, PhyError> {
    let n_sc = cfg.n_subcarriers();
    let plane = SYMBOLS_PER_SLOT * n_sc;
    let c_total = n_feature_channels(cfg.n_rx);
    let power = rx.mean_power().max(f64::from(crate::classic::MIN_NOISE_VAR));
    let scale = (1.0 / power.sqrt()) as f32;
    let mut data = vec![0.0f32; c_total * plane];
    for a in 0..cfg.n_rx {
        for (src, base) in [(rx, 2 * a), (&est.h_hat, 2 * (cfg.n_rx + a))] {
            for t in 0..SYMBOLS_PER_SLOT {
                for (f, v) in src.row(a, t).iter().enumerate() {
                    let i = t * n_sc + f;
                    data[base * plane + i] = v.re * scale;
                    data[(base + 1) * plane + i] = v.im * scale;
                }
            }
        }
    }
    let max_dt = (0..SYMBOLS_PER_SLOT)
        .map(|t| cfg.dmrs_time_distance(t))
        .max()
        .unwrap_or(1)
        .max(1) as f32;
    let noise = (f64::from(est.noise_var) / power).ln() as f32;
    let (pf, pt, pn) = (4 * cfg.n_rx, 4 * cfg.n_rx + 1, 4 * cfg.n_rx + 2);
    for t in 0..SYMBOLS_PER_SLOT {
        let dt = cfg.dmrs_time_distance(t) as f32 / max_dt;
        for f in 0..n_sc {
            let i = t * n_sc + f;
            data[pf * plane + i] = (f % 2) as f32;
            data[pt * plane + i] = dt;
            data[pn * plane + i] = noise;
        }
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(PhyError::NonFinite("slot features"));
    }
    Ok(SlotFeatures {
        n_channels: c_total,
        n_sc,
        data,
    })
}
