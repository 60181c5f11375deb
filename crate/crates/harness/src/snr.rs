//! Effective SNR under additive Gaussian noise injection.
//!
//! A recorded slot `y = s + n` with signal power `Es` and noise power `N0`
//! becomes `y + z` with `z ~ CN(0, a (Es + N0))`, which has effective SNR
//! `g / (1 + a (g + 1))` for `g = Es / N0`.

use num_complex::Complex32;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sitefit_core::classic::Receiver;
use sitefit_core::grid::ResourceGrid;
use sitefit_core::seed::{rng_for, stream};

use crate::bler::{slot_passes, BlerReport, TestSlot};
use crate::error::HarnessError;
use crate::testset::TestSet;

pub fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn from_db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

/// Linear effective SNR of a link at SNR `gamma` after injecting noise of
/// variance `alpha (Es + N0)`.
pub fn effective_snr(gamma: f64, alpha: f64) -> Result<f64, HarnessError> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(HarnessError::Config(format!("SNR must be positive, got {gamma}")));
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(HarnessError::Config(format!("alpha must be non-negative, got {alpha}")));
    }
    Ok(gamma / (1.0 + alpha * (gamma + 1.0)))
}

/// Injection parameters of one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseInjectionConfig {
    pub alpha: f64,
    /// Received signal power per RE and antenna, channel gain included.
    pub es: f64,
    /// Recorded noise power per RE and antenna.
    pub n0: f64,
}

impl NoiseInjectionConfig {
    pub fn new(alpha: f64, es: f64, n0: f64) -> Result<Self, HarnessError> {
        let cfg = Self { alpha, es, n0 };
        effective_snr(cfg.gamma(), alpha)?;
        Ok(cfg)
    }

    pub fn gamma(&self) -> f64 {
        self.es / self.n0
    }

    /// Variance of the injected noise.
    pub fn nz(&self) -> f64 {
        self.alpha * (self.es + self.n0)
    }

    pub fn snr_eff(&self) -> f64 {
        self.gamma() / (1.0 + self.alpha * (self.gamma() + 1.0))
    }
}

/// Noise draws depend only on `(seed, slot_id, alpha index)`.
pub fn injection_rng(seed: u64, slot_id: u64, alpha_index: usize) -> rand_chacha::ChaCha8Rng {
    rng_for(&[seed, slot_id, alpha_index as u64, stream::INJECTION])
}

/// `y + z` with i.i.d. `z ~ CN(0, nz)` per RE; `nz = 0` returns `y` unchanged
/// without drawing.
pub fn inject_noise<R: Rng>(y: &ResourceGrid, nz: f64, rng: &mut R) -> ResourceGrid {
    let mut out = y.clone();
    if nz > 0.0 {
        let s = (nz / 2.0).sqrt();
        for v in out.samples_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v += Complex32::new((re * s) as f32, (im * s) as f32);
        }
    }
    out
}

/// `sum |s|^2 / sum |y - s|^2` in dB.
pub fn measured_snr_db(s: &ResourceGrid, y: &ResourceGrid) -> f64 {
    assert_eq!(s.dims(), y.dims(), "grids must match");
    let (mut ps, mut pn) = (0.0f64, 0.0f64);
    for (a, b) in s.samples().iter().zip(y.samples()) {
        ps += f64::from(a.norm_sqr());
        pn += f64::from((b - a).norm_sqr());
    }
    db(ps / pn)
}

/// `alpha = 0` followed by the injection levels that bring SNR `gamma` to
/// `n` targets evenly spaced in dB from `hi_db` down to `lo_db`. Targets at
/// or above `gamma` need no injection and are skipped.
pub fn alpha_grid(gamma: f64, lo_db: f64, hi_db: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0];
    for i in 0..n {
        let t_db = if n == 1 { lo_db } else { hi_db - (hi_db - lo_db) * i as f64 / (n - 1) as f64 };
        let a = (gamma / from_db(t_db) - 1.0) / (gamma + 1.0);
        if a > 0.0 {
            out.push(a);
        }
    }
    out
}

/// Dataset-mean `Es / N0` of the test slots.
pub fn mean_gamma(slots: &[TestSlot<'_>]) -> f64 {
    slots.iter().map(|s| s.es / s.n0).sum::<f64>() / slots.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrPoint {
    pub alpha: f64,
    /// Dataset-mean SNR before injection.
    pub gamma_db: f64,
    /// Effective SNR at the dataset-mean SNR.
    pub snr_eff_db: f64,
    /// Standard deviation of per-slot effective SNR.
    pub snr_jitter_db: f64,
    pub report: BlerReport,
}

/// Dataset BLER of `receiver` at every injection level.
pub fn snr_sweep(
    receiver: &dyn Receiver,
    slots: &[TestSlot<'_>],
    test: &TestSet,
    alphas: &[f64],
    seed: u64,
    config_hash: &str,
) -> Result<Vec<SnrPoint>, HarnessError> {
    let gamma = mean_gamma(slots);
    let mut points = Vec::with_capacity(alphas.len());
    for (k, &alpha) in alphas.iter().enumerate() {
        let per_slot: Vec<f64> = slots
            .iter()
            .map(|s| NoiseInjectionConfig::new(alpha, s.es, s.n0).map(|c| db(c.snr_eff())))
            .collect::<Result<_, _>>()?;
        let mean = per_slot.iter().sum::<f64>() / per_slot.len().max(1) as f64;
        let var = per_slot.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / per_slot.len().max(1) as f64;
        let outcomes: Vec<bool> = slots
            .par_iter()
            .map(|s| {
                let nz = alpha * (s.es + s.n0);
                if nz > 0.0 {
                    let y = inject_noise(&s.rx, nz, &mut injection_rng(seed, s.record.slot_id, k));
                    slot_passes(receiver, &y, &s.ctx)
                } else {
                    slot_passes(receiver, &s.rx, &s.ctx)
                }
            })
            .collect();
        points.push(SnrPoint {
            alpha,
            gamma_db: db(gamma),
            snr_eff_db: db(effective_snr(gamma, alpha)?),
            snr_jitter_db: var.sqrt(),
            report: BlerReport::from_outcomes(receiver.name(), test, &outcomes, config_hash),
        });
    }
    Ok(points)
}

/// Smallest SNR (dB) at which the curve reaches `threshold`, interpolating
/// linearly in dB between grid points. Scans down from the highest SNR and
/// stops at the first point above the threshold. `None` if even the highest
/// SNR misses the threshold or no point lies above it.
pub fn snr_at_bler(curve: &[(f64, f64)], threshold: f64) -> Option<f64> {
    let mut pts = curve.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let top = pts.last()?;
    if top.1 > threshold {
        return None;
    }
    for w in pts.windows(2).rev() {
        let ((s0, b0), (s1, b1)) = (w[0], w[1]);
        if b0 > threshold {
            return Some(s0 + (s1 - s0) * (b0 - threshold) / (b0 - b1));
        }
    }
    None
}
