//! Classical receivers: LS pilot estimation (also an NRX input feature) and
//! the MMSE reference receiver with delay-domain denoising.

use std::sync::Arc;

use num_complex::Complex32;
use rustfft::{Fft, FftPlanner};

use crate::error::PhyError;
use crate::grid::{DmrsPattern, GridConfig, ResourceGrid, SYMBOLS_PER_SLOT};
use crate::phy::ldpc::DEFAULT_MAX_ITERS;
use crate::phy::{
    descramble_llrs, ldpc_decode, qam16_demap, rate_recover, CodecConfig, CrcStatus,
    RedundancyVersion, ScramblingConfig, CRC_LEN,
};

/// Floor applied to noise estimates so that demapping never divides by zero.
pub const MIN_NOISE_VAR: f32 = 1e-6;
/// Delay-domain tap threshold relative to the per-tap noise floor.
pub const DELAY_THRESHOLD: f32 = 3.0;
/// Longest channel delay the denoiser keeps (normal cyclic prefix at 30 kHz).
pub const MAX_DELAY_S: f64 = 2.34e-6;
/// Taps kept before delay zero to absorb leakage of fractional delays.
const PRECURSOR_TAPS: usize = 2;

/// Channel estimate on every RE with its error variance per `[symbol][subcarrier]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub h_hat: ResourceGrid,
    pub err_var: Vec<f32>,
    /// Estimated noise variance per RE and antenna.
    pub noise_var: f32,
}

impl ChannelEstimate {
    pub fn err_var_at(&self, t: usize, f: usize) -> f32 {
        self.err_var[t * self.h_hat.n_sc() + f]
    }
}

/// Everything a receiver needs to know about one scheduled slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotContext {
    pub grid: GridConfig,
    pub dmrs: DmrsPattern,
    pub codec: CodecConfig,
    pub rv: RedundancyVersion,
    pub scrambling: ScramblingConfig,
}

impl SlotContext {
    pub fn new(
        grid: GridConfig,
        slot_id: u64,
        codec: CodecConfig,
        rv: RedundancyVersion,
        scrambling: ScramblingConfig,
    ) -> Self {
        let dmrs = DmrsPattern::for_slot(&grid, slot_id);
        Self {
            grid,
            dmrs,
            codec,
            rv,
            scrambling,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RxOutput {
    pub payload: Vec<u8>,
    pub crc_bits: Vec<u8>,
    pub crc: CrcStatus,
    /// Demapper LLRs of the scrambled coded bits (positive means bit 0).
    pub llrs: Vec<f32>,
}

/// A PUSCH receiver producing per-bit LLRs for a slot.
pub trait Receiver: Send + Sync {
    fn name(&self) -> &str;

    fn llrs(&self, rx: &ResourceGrid, ctx: &SlotContext) -> Result<Vec<f32>, PhyError>;

    fn receive(&self, rx: &ResourceGrid, ctx: &SlotContext) -> Result<RxOutput, PhyError> {
        let llrs = self.llrs(rx, ctx)?;
        decode_llrs(llrs, ctx)
    }
}

/// Descrambles, rate-recovers and decodes demapper LLRs.
pub fn decode_llrs(llrs: Vec<f32>, ctx: &SlotContext) -> Result<RxOutput, PhyError> {
    if llrs.len() != ctx.codec.rate_matched_len {
        return Err(PhyError::LengthMismatch {
            what: "receiver LLRs",
            expected: ctx.codec.rate_matched_len,
            got: llrs.len(),
        });
    }
    let mut d = llrs.clone();
    descramble_llrs(&mut d, ctx.scrambling);
    let soft = rate_recover(&d, ctx.rv, ctx.codec.codeword_len())?;
    let out = ldpc_decode(&soft, &ctx.codec, DEFAULT_MAX_ITERS)?;
    Ok(RxOutput {
        payload: out.payload,
        crc_bits: out.crc_bits,
        crc: out.crc,
        llrs,
    })
}

fn check_grid(rx: &ResourceGrid, cfg: &GridConfig, dmrs: &DmrsPattern) -> Result<(), PhyError> {
    let want = (cfg.n_rx, SYMBOLS_PER_SLOT, cfg.n_subcarriers());
    if rx.dims() != want {
        return Err(PhyError::InvalidParameter(format!(
            "rx grid {:?} does not match configuration {want:?}",
            rx.dims()
        )));
    }
    if dmrs.n_pilots() != cfg.pilots_per_symbol() {
        return Err(PhyError::LengthMismatch {
            what: "DMRS pilots",
            expected: cfg.pilots_per_symbol(),
            got: dmrs.n_pilots(),
        });
    }
    if !rx.is_finite() {
        return Err(PhyError::NonFinite("rx grid"));
    }
    Ok(())
}

/// Raw LS estimates at pilots: `[antenna][dmrs symbol][pilot]`.
pub fn pilot_ls(rx: &ResourceGrid, cfg: &GridConfig, dmrs: &DmrsPattern) -> Vec<Vec<Vec<Complex32>>> {
    (0..cfg.n_rx)
        .map(|a| {
            cfg.dmrs_symbols
                .iter()
                .enumerate()
                .map(|(k, &t)| {
                    let row = rx.row(a, t);
                    dmrs.pilots_on(k)
                        .iter()
                        .enumerate()
                        .map(|(m, p)| row[2 * m] * p.conj() / p.norm_sqr())
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Noise variance from second differences of adjacent pilot estimates:
/// for a smooth channel `E|h[m-1] - 2h[m] + h[m+1]|² ≈ 6 σ²`.
pub fn estimate_noise_var(ls: &[Vec<Vec<Complex32>>]) -> f32 {
    let mut acc = 0.0f64;
    let mut n = 0usize;
    for per_ant in ls {
        for p in per_ant {
            for w in p.windows(3) {
                acc += f64::from((w[0] - w[1] * 2.0 + w[2]).norm_sqr());
                n += 1;
            }
        }
    }
    if n == 0 {
        return MIN_NOISE_VAR;
    }
    ((acc / n as f64 / 6.0) as f32).max(MIN_NOISE_VAR)
}

/// Fills a full `[symbol][subcarrier]` plane from per-DMRS-symbol estimates
/// on every subcarrier: linear in time between DMRS symbols, held outside.
fn interpolate_time(dmrs_symbols: [usize; 3], per_dmrs: &[Vec<Complex32>], out: &mut ResourceGrid, a: usize) {
    for t in 0..SYMBOLS_PER_SLOT {
        let row = out.row_mut(a, t);
        if t <= dmrs_symbols[0] {
            row.copy_from_slice(&per_dmrs[0]);
        } else if t >= dmrs_symbols[2] {
            row.copy_from_slice(&per_dmrs[2]);
        } else {
            let k = if t < dmrs_symbols[1] { 0 } else { 1 };
            let (t0, t1) = (dmrs_symbols[k], dmrs_symbols[k + 1]);
            let w = (t - t0) as f32 / (t1 - t0) as f32;
            for ((v, &h0), &h1) in row.iter_mut().zip(&per_dmrs[k]).zip(&per_dmrs[k + 1]) {
                *v = h0 * (1.0 - w) + h1 * w;
            }
        }
    }
}

/// LS channel estimate: exact at pilots, nearest-pilot hold in frequency and
/// linear interpolation in time.
pub fn ls_estimate(rx: &ResourceGrid, cfg: &GridConfig, dmrs: &DmrsPattern) -> Result<ChannelEstimate, PhyError> {
    check_grid(rx, cfg, dmrs)?;
    let ls = pilot_ls(rx, cfg, dmrs);
    let noise_var = estimate_noise_var(&ls);
    let n_sc = cfg.n_subcarriers();
    let mut h_hat = ResourceGrid::zeros(cfg.n_rx, SYMBOLS_PER_SLOT, n_sc);
    for (a, per_ant) in ls.iter().enumerate() {
        let filled: Vec<Vec<Complex32>> = per_ant
            .iter()
            .map(|p| (0..n_sc).map(|f| p[f / 2]).collect())
            .collect();
        interpolate_time(cfg.dmrs_symbols, &filled, &mut h_hat, a);
    }
    Ok(ChannelEstimate {
        h_hat,
        err_var: vec![noise_var; SYMBOLS_PER_SLOT * n_sc],
        noise_var,
    })
}

/// Delay-domain denoiser for comb-2 pilots of one DMRS symbol width.
#[derive(Clone)]
pub struct DelayDenoiser {
    n_pilots: usize,
    ifft: Arc<dyn Fft<f32>>,
    window: Vec<usize>,
}

impl std::fmt::Debug for DelayDenoiser {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DelayDenoiser")
            .field("n_pilots", &self.n_pilots)
            .field("window", &self.window)
            .finish()
    }
}

impl DelayDenoiser {
    pub fn new(n_pilots: usize) -> Self {
        let ifft = FftPlanner::new().plan_fft_inverse(n_pilots);
        // Tap l sits at delay l / (2 Δf M).
        let max_tap = (MAX_DELAY_S * 2.0 * crate::channel::SUBCARRIER_SPACING_HZ * n_pilots as f64).ceil() as usize;
        let max_tap = max_tap.min(n_pilots / 2);
        let pre = PRECURSOR_TAPS.min(n_pilots.saturating_sub(max_tap + 1));
        let mut window: Vec<usize> = (0..=max_tap).collect();
        window.extend((n_pilots - pre)..n_pilots);
        window.sort_unstable();
        window.dedup();
        Self { n_pilots, ifft, window }
    }

    /// Signed delay of tap index `l`.
    fn signed(&self, l: usize) -> f32 {
        if l > self.n_pilots / 2 {
            l as f32 - self.n_pilots as f32
        } else {
            l as f32
        }
    }

    /// Delay responses `g[l] = (1/M) Σ_m H[m] e^{+j2π lm/M}`.
    pub fn to_delay(&self, pilots: &[Complex32]) -> Vec<Complex32> {
        let mut buf = pilots.to_vec();
        self.ifft.process(&mut buf);
        let s = 1.0 / self.n_pilots as f32;
        buf.iter_mut().for_each(|v| *v *= s);
        buf
    }

    /// Taps inside the delay window whose mean power over `responses`
    /// exceeds the threshold.
    pub fn support(&self, responses: &[Vec<Complex32>], noise_var: f32) -> Vec<usize> {
        let floor = DELAY_THRESHOLD * noise_var / self.n_pilots as f32;
        let n = responses.len().max(1) as f32;
        self.window
            .iter()
            .copied()
            .filter(|&l| responses.iter().map(|g| g[l].norm_sqr()).sum::<f32>() / n > floor)
            .collect()
    }

    /// Evaluates the kept taps on all `2M` subcarriers.
    pub fn to_frequency(&self, g: &[Complex32], support: &[usize]) -> Vec<Complex32> {
        let n_sc = 2 * self.n_pilots;
        let mut out = vec![Complex32::new(0.0, 0.0); n_sc];
        for &l in support {
            // Subcarrier f sits at pilot position f / 2.
            let step = -std::f32::consts::PI * self.signed(l) / self.n_pilots as f32;
            let rot = Complex32::from_polar(1.0, step);
            let mut ph = g[l];
            for v in out.iter_mut() {
                *v += ph;
                ph *= rot;
            }
        }
        out
    }
}

/// Multi-stage MMSE estimate: pilot LS, delay-domain support thresholding,
/// then averaging over DMRS symbols (static-channel Wiener prior).
pub fn mmse_estimate(
    rx: &ResourceGrid,
    cfg: &GridConfig,
    dmrs: &DmrsPattern,
    denoiser: &DelayDenoiser,
) -> Result<ChannelEstimate, PhyError> {
    check_grid(rx, cfg, dmrs)?;
    if denoiser.n_pilots != cfg.pilots_per_symbol() {
        return Err(PhyError::LengthMismatch {
            what: "denoiser width",
            expected: cfg.pilots_per_symbol(),
            got: denoiser.n_pilots,
        });
    }
    let ls = pilot_ls(rx, cfg, dmrs);
    let noise_var = estimate_noise_var(&ls);
    let delay: Vec<Vec<Complex32>> = ls.iter().flatten().map(|p| denoiser.to_delay(p)).collect();
    let support = denoiser.support(&delay, noise_var);
    let n_dmrs = cfg.dmrs_symbols.len();
    let n_sc = cfg.n_subcarriers();
    let mut h_hat = ResourceGrid::zeros(cfg.n_rx, SYMBOLS_PER_SLOT, n_sc);
    for a in 0..cfg.n_rx {
        let mut avg = vec![Complex32::new(0.0, 0.0); cfg.pilots_per_symbol()];
        for g in &delay[a * n_dmrs..(a + 1) * n_dmrs] {
            for (s, v) in avg.iter_mut().zip(g) {
                *s += v / n_dmrs as f32;
            }
        }
        let h = denoiser.to_frequency(&avg, &support);
        for t in 0..SYMBOLS_PER_SLOT {
            h_hat.row_mut(a, t).copy_from_slice(&h);
        }
    }
    let err = noise_var * support.len() as f32 / (denoiser.n_pilots * n_dmrs) as f32;
    Ok(ChannelEstimate {
        h_hat,
        err_var: vec![err; SYMBOLS_PER_SLOT * n_sc],
        noise_var,
    })
}

/// Per-RE LMMSE combining across antennas followed by max-log demapping.
/// Estimation error is folded into the noise term.
pub fn lmmse_demap(rx: &ResourceGrid, est: &ChannelEstimate, cfg: &GridConfig) -> Result<Vec<f32>, PhyError> {
    let mut llrs = Vec::with_capacity(cfg.coded_bits());
    for (t, f) in cfg.data_positions() {
        let sigma2 = est.noise_var + est.err_var_at(t, f);
        let mut num = Complex32::new(0.0, 0.0);
        let mut gain = 0.0f32;
        for a in 0..cfg.n_rx {
            let h = est.h_hat.get(a, t, f);
            num += h.conj() * rx.get(a, t, f);
            gain += h.norm_sqr();
        }
        let denom = gain + sigma2;
        let x = num / denom;
        let mu = gain / denom;
        let nu = (mu * (1.0 - mu)).max(MIN_NOISE_VAR);
        llrs.extend(qam16_demap(x, Complex32::new(mu, 0.0), nu)?);
    }
    Ok(llrs)
}

/// Receiver using the raw LS estimate.
#[derive(Debug, Clone, Default)]
pub struct LsReceiver;

impl Receiver for LsReceiver {
    fn name(&self) -> &str {
        "ls"
    }

    fn llrs(&self, rx: &ResourceGrid, ctx: &SlotContext) -> Result<Vec<f32>, PhyError> {
        let est = ls_estimate(rx, &ctx.grid, &ctx.dmrs)?;
        lmmse_demap(rx, &est, &ctx.grid)
    }
}

/// The MMSE reference receiver.
#[derive(Debug, Clone)]
pub struct MmseReceiver {
    denoiser: DelayDenoiser,
}

impl MmseReceiver {
    pub fn new(cfg: &GridConfig) -> Self {
        Self {
            denoiser: DelayDenoiser::new(cfg.pilots_per_symbol()),
        }
    }
}

impl Receiver for MmseReceiver {
    fn name(&self) -> &str {
        "mmse"
    }

    fn llrs(&self, rx: &ResourceGrid, ctx: &SlotContext) -> Result<Vec<f32>, PhyError> {
        let est = if self.denoiser.n_pilots == ctx.grid.pilots_per_symbol() {
            mmse_estimate(rx, &ctx.grid, &ctx.dmrs, &self.denoiser)?
        } else {
            mmse_estimate(rx, &ctx.grid, &ctx.dmrs, &DelayDenoiser::new(ctx.grid.pilots_per_symbol()))?
        };
        lmmse_demap(rx, &est, &ctx.grid)
    }
}

/// Convenience wrapper running the MMSE reference chain on one slot.
pub fn mmse_reference_rx(rx: &ResourceGrid, ctx: &SlotContext) -> Result<RxOutput, PhyError> {
    MmseReceiver::new(&ctx.grid).receive(rx, ctx)
}

/// Payload plus CRC field of a decoded slot, as checked by the CRC.
pub fn tb_with_crc(out: &RxOutput) -> Vec<u8> {
    let mut v = Vec::with_capacity(out.payload.len() + CRC_LEN);
    v.extend_from_slice(&out.payload);
    v.extend_from_slice(&out.crc_bits);
    v
}
