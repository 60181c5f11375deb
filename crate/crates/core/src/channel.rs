//! Frequency-domain tapped-delay-line channel with Jakes Doppler, optional
//! line-of-sight component and UE-side impairments.
//!
//! Every realization is a pure function of `(scenario seed, slot index)`.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::{Complex32, Complex64};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{PhyError, StoreError};
use crate::grid::{GridConfig, ResourceGrid, SYMBOLS_PER_SLOT};
use crate::seed::{rng_for, stream};

pub const SUBCARRIER_SPACING_HZ: f64 = 30e3;
pub const SYMBOL_DURATION_S: f64 = 0.5e-3 / SYMBOLS_PER_SLOT as f64;
pub const MAX_TAPS: usize = 16;
const SINUSOIDS_PER_TAP: usize = 16;
const PROFILE_TAPS: usize = 12;

/// Transmitter impairments of one device type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct UeProfile {
    /// Residual carrier frequency offset.
    pub cfo_hz: f64,
    /// Standard deviation of the per-symbol phase-noise increment (radians).
    pub phase_noise_std: f64,
    pub tx_power_offset_db: f64,
}

impl UeProfile {
    pub fn ideal() -> Self {
        Self::default()
    }

    /// Built-in device profiles `ue0` and `ue1`.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "ue0" => Some(Self {
                cfo_hz: 100.0,
                phase_noise_std: 0.01,
                tx_power_offset_db: 0.0,
            }),
            "ue1" => Some(Self {
                cfo_hz: -100.0,
                phase_noise_std: 0.02,
                tx_power_offset_db: 0.0,
            }),
            "ideal" => Some(Self::ideal()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), PhyError> {
        if ![self.cfo_hz, self.phase_noise_std, self.tx_power_offset_db]
            .iter()
            .all(|v| v.is_finite())
            || self.phase_noise_std < 0.0
        {
            return Err(PhyError::InvalidParameter(format!("invalid UE profile {self:?}")));
        }
        Ok(())
    }
}

/// Channel statistics and impairments defining one site and device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub tap_delays_ns: Vec<f64>,
    /// Relative tap powers in dB; normalized to unit sum on use.
    pub tap_powers_db: Vec<f64>,
    pub doppler_max_hz: f64,
    pub snr_target_db: f64,
    /// Per-slot SNR is drawn uniformly from `target ± jitter`.
    pub snr_jitter_db: f64,
    pub los_probability: f64,
    pub los_k_factor_db: f64,
    pub ue: UeProfile,
    pub seed: u64,
}

/// Exponential power delay profile with the given RMS delay spread.
pub fn exponential_profile(delay_spread_ns: f64) -> (Vec<f64>, Vec<f64>) {
    let units: Vec<f64> = (0..PROFILE_TAPS).map(|k| 0.5 * k as f64).collect();
    let pw: Vec<f64> = units.iter().map(|d| (-d).exp()).collect();
    let total: f64 = pw.iter().sum();
    let mean: f64 = units.iter().zip(&pw).map(|(d, p)| d * p).sum::<f64>() / total;
    let var: f64 = units
        .iter()
        .zip(&pw)
        .map(|(d, p)| (d - mean).powi(2) * p)
        .sum::<f64>()
        / total;
    let scale = delay_spread_ns / var.sqrt();
    let delays = units.iter().map(|d| d * scale).collect();
    let powers_db = pw.iter().map(|p| 10.0 * p.log10()).collect();
    (delays, powers_db)
}

/// RMS delay spread of a tap profile in ns.
pub fn rms_delay_spread_ns(delays_ns: &[f64], powers_db: &[f64]) -> f64 {
    let pw: Vec<f64> = powers_db.iter().map(|p| 10f64.powf(p / 10.0)).collect();
    let total: f64 = pw.iter().sum();
    let mean = delays_ns.iter().zip(&pw).map(|(d, p)| d * p).sum::<f64>() / total;
    (delays_ns
        .iter()
        .zip(&pw)
        .map(|(d, p)| (d - mean).powi(2) * p)
        .sum::<f64>()
        / total)
        .sqrt()
}

impl ScenarioConfig {
    fn from_spread(name: &str, ds_ns: f64, doppler: f64, los_p: f64, k_db: f64, seed: u64) -> Self {
        let (tap_delays_ns, tap_powers_db) = exponential_profile(ds_ns);
        Self {
            name: name.to_string(),
            tap_delays_ns,
            tap_powers_db,
            doppler_max_hz: doppler,
            snr_target_db: 7.0,
            snr_jitter_db: 1.0,
            los_probability: los_p,
            los_k_factor_db: k_db,
            ue: UeProfile::preset("ue0").expect("built-in profile"),
            seed,
        }
    }

    /// Built-in site analogs: `small-lab`, `office-floor`, `outdoor-uav`.
    /// Their statistics are stand-ins, not measured values.
    pub fn preset(name: &str) -> Result<Self, PhyError> {
        match name {
            "small-lab" => Ok(Self::from_spread(name, 30.0, 5.0, 0.9, 6.0, 0x5111)),
            "office-floor" => Ok(Self::from_spread(name, 150.0, 10.0, 0.5, 3.0, 0x0FF1)),
            "outdoor-uav" => Ok(Self::from_spread(name, 80.0, 400.0, 0.8, 6.0, 0x0A17)),
            _ => Err(PhyError::InvalidParameter(format!("unknown scenario preset {name:?}"))),
        }
    }

    pub fn with_ue(mut self, ue: UeProfile) -> Self {
        self.ue = ue;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), PhyError> {
        let n = self.tap_delays_ns.len();
        if n == 0 || n > MAX_TAPS || n != self.tap_powers_db.len() {
            return Err(PhyError::InvalidParameter(format!(
                "scenario {:?}: need 1..={MAX_TAPS} taps with matching powers",
                self.name
            )));
        }
        let finite = self
            .tap_delays_ns
            .iter()
            .chain(&self.tap_powers_db)
            .chain([&self.snr_target_db, &self.snr_jitter_db, &self.los_k_factor_db])
            .all(|v| v.is_finite());
        if !finite
            || self.tap_delays_ns.iter().any(|&d| d < 0.0)
            || !(self.doppler_max_hz >= 0.0)
            || !(0.0..=1.0).contains(&self.los_probability)
            || self.snr_jitter_db < 0.0
        {
            return Err(PhyError::InvalidParameter(format!(
                "scenario {:?} has out-of-range parameters",
                self.name
            )));
        }
        self.ue.validate()
    }

    /// Linear tap powers summing to one.
    pub fn normalized_tap_powers(&self) -> Vec<f64> {
        let lin: Vec<f64> = self
            .tap_powers_db
            .iter()
            .map(|p| 10f64.powf(p / 10.0))
            .collect();
        let total: f64 = lin.iter().sum();
        lin.into_iter().map(|p| p / total).collect()
    }

    pub fn delay_spread_ns(&self) -> f64 {
        rms_delay_spread_ns(&self.tap_delays_ns, &self.tap_powers_db)
    }

    /// Loads a scenario file (TOML). See `ScenarioFile` for the schema.
    pub fn from_file(path: &Path) -> Result<Self, StoreError> {
        let text = std::fs::read_to_string(path).map_err(|e| StoreError::io(path, e))?;
        let file: ScenarioFile = toml::from_str(&text).map_err(|e| StoreError::Malformed {
            path: path.into(),
            line: 0,
            detail: e.to_string(),
        })?;
        file.resolve().map_err(|e| StoreError::Malformed {
            path: path.into(),
            line: 0,
            detail: e.to_string(),
        })
    }
}

/// On-disk scenario schema. Every field is optional and overrides the
/// `preset` it starts from (default `small-lab`):
///
/// ```toml
/// preset = "office-floor"
/// name = "office-floor-ue1"
/// delay_spread_ns = 150.0        # regenerates an exponential profile
/// # tap_delays_ns = [0.0, 50.0]  # or give taps explicitly
/// # tap_powers_db = [0.0, -3.0]
/// doppler_max_hz = 10.0
/// snr_target_db = 7.0
/// snr_jitter_db = 1.0
/// los_probability = 0.5
/// los_k_factor_db = 3.0
/// seed = 4081
/// ue = "ue1"                     # or an inline table of UeProfile fields
/// ```
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub preset: Option<String>,
    pub name: Option<String>,
    pub delay_spread_ns: Option<f64>,
    pub tap_delays_ns: Option<Vec<f64>>,
    pub tap_powers_db: Option<Vec<f64>>,
    pub doppler_max_hz: Option<f64>,
    pub snr_target_db: Option<f64>,
    pub snr_jitter_db: Option<f64>,
    pub los_probability: Option<f64>,
    pub los_k_factor_db: Option<f64>,
    pub seed: Option<u64>,
    pub ue: Option<UeSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum UeSpec {
    Named(String),
    Custom(UeProfile),
}

impl UeSpec {
    pub fn resolve(&self) -> Result<UeProfile, PhyError> {
        match self {
            UeSpec::Named(n) => UeProfile::preset(n)
                .ok_or_else(|| PhyError::InvalidParameter(format!("unknown UE profile {n:?}"))),
            UeSpec::Custom(p) => Ok(*p),
        }
    }
}

impl ScenarioFile {
    pub fn resolve(&self) -> Result<ScenarioConfig, PhyError> {
        let mut s = ScenarioConfig::preset(self.preset.as_deref().unwrap_or("small-lab"))?;
        if let Some(n) = &self.name {
            s.name = n.clone();
        }
        if let Some(ds) = self.delay_spread_ns {
            let (d, p) = exponential_profile(ds);
            s.tap_delays_ns = d;
            s.tap_powers_db = p;
        }
        if let Some(d) = &self.tap_delays_ns {
            s.tap_delays_ns = d.clone();
        }
        if let Some(p) = &self.tap_powers_db {
            s.tap_powers_db = p.clone();
        }
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { s.$f = v; } )* };
        }
        take!(doppler_max_hz, snr_target_db, snr_jitter_db, los_probability, los_k_factor_db, seed);
        if let Some(ue) = &self.ue {
            s.ue = ue.resolve()?;
        }
        s.validate()?;
        Ok(s)
    }
}

/// Per-slot channel: complex gains `[antenna][symbol][subcarrier]`, noise
/// power and nominal received signal power (both per RE and antenna).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: ResourceGrid,
    pub noise_var: f64,
    /// Expected received signal power per RE (tx power offset applied).
    pub signal_power: f64,
    pub snr_db: f64,
    pub los: bool,
}

fn complex_normal(rng: &mut ChaCha8Rng, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// Draws the channel of slot `slot_index`.
pub fn draw_channel(cfg: &ScenarioConfig, grid: &GridConfig, slot_index: u64) -> ChannelRealization {
    let mut rng = rng_for(&[cfg.seed, slot_index, stream::CHANNEL]);
    let powers = cfg.normalized_tap_powers();
    let n_sc = grid.n_subcarriers();
    let fd = cfg.doppler_max_hz;
    let times: Vec<f64> = (0..SYMBOLS_PER_SLOT)
        .map(|t| t as f64 * SYMBOL_DURATION_S)
        .collect();

    let los = rng.random::<f64>() < cfg.los_probability;
    let k_lin = 10f64.powf(cfg.los_k_factor_db / 10.0);
    let los_aoa = rng.random::<f64>() * 2.0 * PI;
    let los_phase = rng.random::<f64>() * 2.0 * PI;
    let los_doppler = fd * (rng.random::<f64>() * 2.0 * PI).cos();

    // Frequency ramp of each tap.
    let ramps: Vec<Vec<Complex64>> = cfg
        .tap_delays_ns
        .iter()
        .map(|&tau| {
            (0..n_sc)
                .map(|f| {
                    Complex64::from_polar(1.0, -2.0 * PI * f as f64 * SUBCARRIER_SPACING_HZ * tau * 1e-9)
                })
                .collect()
        })
        .collect();

    let mut h = ResourceGrid::zeros(grid.n_rx, SYMBOLS_PER_SLOT, n_sc);
    let mut row = vec![Complex64::new(0.0, 0.0); n_sc];
    for a in 0..grid.n_rx {
        // Tap gains over time for this antenna (Gaussian-weighted sum of sinusoids).
        let mut gains = vec![vec![Complex64::new(0.0, 0.0); SYMBOLS_PER_SLOT]; powers.len()];
        for (k, g) in gains.iter_mut().enumerate() {
            let scatter = if k == 0 && los { powers[0] / (k_lin + 1.0) } else { powers[k] };
            for _ in 0..SINUSOIDS_PER_TAP {
                let c = complex_normal(&mut rng, scatter / SINUSOIDS_PER_TAP as f64);
                let nu = fd * (rng.random::<f64>() * 2.0 * PI).cos();
                for (gt, &t) in g.iter_mut().zip(&times) {
                    *gt += c * Complex64::from_polar(1.0, 2.0 * PI * nu * t);
                }
            }
            if k == 0 && los {
                let amp = (powers[0] * k_lin / (k_lin + 1.0)).sqrt();
                let steer = PI * a as f64 * los_aoa.sin();
                for (gt, &t) in g.iter_mut().zip(&times) {
                    *gt += Complex64::from_polar(amp, los_phase + steer + 2.0 * PI * los_doppler * t);
                }
            }
        }
        for t in 0..SYMBOLS_PER_SLOT {
            row.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            for (g, ramp) in gains.iter().zip(&ramps) {
                let gt = g[t];
                for (v, r) in row.iter_mut().zip(ramp) {
                    *v += gt * r;
                }
            }
            for (dst, v) in h.row_mut(a, t).iter_mut().zip(&row) {
                *dst = Complex32::new(v.re as f32, v.im as f32);
            }
        }
    }

    let jitter = if cfg.snr_jitter_db > 0.0 {
        rng.random_range(-cfg.snr_jitter_db..=cfg.snr_jitter_db)
    } else {
        0.0
    };
    let snr_db = cfg.snr_target_db + jitter + cfg.ue.tx_power_offset_db;
    let signal_power = 10f64.powf(cfg.ue.tx_power_offset_db / 10.0);
    let noise_var = signal_power / 10f64.powf(snr_db / 10.0);
    ChannelRealization {
        h,
        noise_var,
        signal_power,
        snr_db,
        los,
    }
}

/// Noise-free received signal `h x e^{jφ(t)}` for a single-antenna tx grid.
pub fn received_signal(
    tx: &ResourceGrid,
    ch: &ChannelRealization,
    ue: &UeProfile,
    rng: &mut ChaCha8Rng,
) -> Result<ResourceGrid, PhyError> {
    let (n_ant, n_sym, n_sc) = ch.h.dims();
    if tx.dims() != (1, n_sym, n_sc) {
        return Err(PhyError::InvalidParameter(format!(
            "tx grid {:?} does not match channel {:?}",
            tx.dims(),
            ch.h.dims()
        )));
    }
    let amp = ch.signal_power.sqrt();
    let mut phase = 0.0f64;
    let mut rot = Vec::with_capacity(n_sym);
    for t in 0..n_sym {
        if t > 0 && ue.phase_noise_std > 0.0 {
            let w: f64 = StandardNormal.sample(rng);
            phase += ue.phase_noise_std * w;
        }
        let cfo = 2.0 * PI * ue.cfo_hz * t as f64 * SYMBOL_DURATION_S;
        let r = Complex64::from_polar(amp, cfo + phase);
        rot.push(Complex32::new(r.re as f32, r.im as f32));
    }
    let mut out = ResourceGrid::zeros(n_ant, n_sym, n_sc);
    for a in 0..n_ant {
        for (t, &r) in rot.iter().enumerate() {
            let x = tx.row(0, t);
            let h = ch.h.row(a, t);
            for ((y, &xv), &hv) in out.row_mut(a, t).iter_mut().zip(x).zip(h) {
                *y = hv * xv * r;
            }
        }
    }
    Ok(out)
}

/// Adds circularly-symmetric complex Gaussian noise of variance `noise_var`.
pub fn add_noise(grid: &mut ResourceGrid, noise_var: f64, rng: &mut ChaCha8Rng) {
    if noise_var <= 0.0 {
        return;
    }
    let s = (noise_var / 2.0).sqrt();
    for v in grid.samples_mut() {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *v += Complex32::new((re * s) as f32, (im * s) as f32);
    }
}

/// `y = h x e^{jφ(t)} + n`.
pub fn apply_channel(
    tx: &ResourceGrid,
    ch: &ChannelRealization,
    ue: &UeProfile,
    rng: &mut ChaCha8Rng,
) -> Result<ResourceGrid, PhyError> {
    let mut y = received_signal(tx, ch, ue, rng)?;
    add_noise(&mut y, ch.noise_var, rng);
    Ok(y)
}

/// Randomized pretraining scenarios: delay spread in [10, 300] ns, Doppler in
/// [0, 200] Hz, SNR in [4, 10] dB, ideal UE. Scenario `i` depends only on
/// `(seed, i)`.
#[derive(Debug, Clone)]
pub struct PretrainDistribution {
    seed: u64,
    next: u64,
}

pub const PRETRAIN_DELAY_SPREAD_NS: (f64, f64) = (10.0, 300.0);
pub const PRETRAIN_DOPPLER_HZ: (f64, f64) = (0.0, 200.0);
pub const PRETRAIN_SNR_DB: (f64, f64) = (4.0, 10.0);

impl PretrainDistribution {
    pub fn new(seed: u64) -> Self {
        Self { seed, next: 0 }
    }

    pub fn draw(&self, index: u64) -> ScenarioConfig {
        let mut rng = rng_for(&[self.seed, index, stream::PRETRAIN]);
        let ds = rng.random_range(PRETRAIN_DELAY_SPREAD_NS.0..=PRETRAIN_DELAY_SPREAD_NS.1);
        let doppler = rng.random_range(PRETRAIN_DOPPLER_HZ.0..=PRETRAIN_DOPPLER_HZ.1);
        let snr = rng.random_range(PRETRAIN_SNR_DB.0..=PRETRAIN_SNR_DB.1);
        let los_p = rng.random_range(0.0..=1.0);
        let k_db = rng.random_range(0.0..=9.0);
        let mut s = ScenarioConfig::from_spread("pretrain", ds, doppler, los_p, k_db, rng.random());
        s.snr_target_db = snr;
        s.snr_jitter_db = 0.0;
        s.ue = UeProfile::ideal();
        s
    }
}

impl Iterator for PretrainDistribution {
    type Item = ScenarioConfig;

    fn next(&mut self) -> Option<ScenarioConfig> {
        let s = self.draw(self.next);
        self.next += 1;
        Some(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{map_slot, DmrsPattern};

    fn flat(doppler: f64) -> ScenarioConfig {
        ScenarioConfig {
            name: "flat".into(),
            tap_delays_ns: vec![0.0],
            tap_powers_db: vec![0.0],
            doppler_max_hz: doppler,
            snr_target_db: 10.0,
            snr_jitter_db: 0.0,
            los_probability: 0.0,
            los_k_factor_db: 0.0,
            ue: UeProfile::ideal(),
            seed: 1,
        }
    }

    #[test]
    fn static_channel_is_constant_in_time() {
        let cfg = ScenarioConfig::preset("office-floor").unwrap();
        let cfg = ScenarioConfig {
            doppler_max_hz: 0.0,
            ..cfg
        };
        let ch = draw_channel(&cfg, &GridConfig::default(), 3);
        for a in 0..4 {
            for t in 1..14 {
                assert_eq!(ch.h.row(a, t), ch.h.row(a, 0));
            }
        }
    }

    #[test]
    fn single_tap_is_flat_in_frequency() {
        let ch = draw_channel(&flat(100.0), &GridConfig::default(), 9);
        for a in 0..4 {
            for t in 0..14 {
                let r = ch.h.row(a, t);
                assert!(r.iter().all(|v| (v - r[0]).norm() < 1e-6));
            }
        }
    }

    #[test]
    fn channel_energy_is_normalized() {
        let cfg = ScenarioConfig::preset("outdoor-uav").unwrap();
        let grid = GridConfig::new(1, 1).unwrap();
        let n = 10_000;
        let e: f64 = (0..n)
            .map(|s| draw_channel(&cfg, &grid, s).h.mean_power())
            .sum::<f64>()
            / n as f64;
        assert!((e - 1.0).abs() < 0.02, "E|h|^2 = {e}");
    }

    #[test]
    fn realization_is_deterministic() {
        let cfg = ScenarioConfig::preset("small-lab").unwrap();
        let g = GridConfig::default();
        assert_eq!(draw_channel(&cfg, &g, 17), draw_channel(&cfg, &g, 17));
        assert_ne!(draw_channel(&cfg, &g, 17).h, draw_channel(&cfg, &g, 18).h);
    }

    #[test]
    fn noiseless_unit_channel_is_identity() {
        let grid = GridConfig::new(2, 1).unwrap();
        let bits: Vec<u8> = (0..grid.coded_bits()).map(|i| (i % 3 == 0) as u8).collect();
        let (tx, _) = map_slot(&bits, &grid, &DmrsPattern::for_slot(&grid, 0)).unwrap();
        let mut h = ResourceGrid::zeros(1, 14, grid.n_subcarriers());
        h.samples_mut().iter_mut().for_each(|v| *v = Complex32::new(1.0, 0.0));
        let ch = ChannelRealization {
            h,
            noise_var: 0.0,
            signal_power: 1.0,
            snr_db: f64::INFINITY,
            los: false,
        };
        let mut rng = rng_for(&[0]);
        let y = apply_channel(&tx, &ch, &UeProfile::ideal(), &mut rng).unwrap();
        assert_eq!(y, tx);
    }

    #[test]
    fn cfo_rotates_linearly() {
        let grid = GridConfig::new(1, 1).unwrap();
        let mut cfg = flat(0.0);
        cfg.ue = UeProfile {
            cfo_hz: 300.0,
            ..UeProfile::ideal()
        };
        let ch = draw_channel(&cfg, &grid, 0);
        let bits = vec![0u8; grid.coded_bits()];
        let (tx, _) = map_slot(&bits, &grid, &DmrsPattern::for_slot(&grid, 0)).unwrap();
        let mut rng = rng_for(&[1]);
        let y = received_signal(&tx, &ch, &cfg.ue, &mut rng).unwrap();
        let step = 2.0 * PI * 300.0 * SYMBOL_DURATION_S;
        let phase = |t: usize| (y.get(0, t, 1) / tx.get(0, t, 1)).arg() as f64;
        for t in 1..14 {
            let mut d = phase(t) - phase(t - 1);
            if d < -PI {
                d += 2.0 * PI;
            }
            assert!((d - step).abs() < 1e-4);
        }
    }

    #[test]
    fn empirical_snr_matches_configuration() {
        let grid = GridConfig::new(4, 4).unwrap();
        let mut cfg = ScenarioConfig::preset("small-lab").unwrap();
        cfg.snr_jitter_db = 0.0;
        let mut sig = 0.0;
        let mut noise = 0.0;
        for slot in 0..100 {
            let ch = draw_channel(&cfg, &grid, slot);
            let bits: Vec<u8> = (0..grid.coded_bits()).map(|i| ((i * 7 + slot as usize) % 2) as u8).collect();
            let (tx, _) = map_slot(&bits, &grid, &DmrsPattern::for_slot(&grid, slot)).unwrap();
            let mut rng = rng_for(&[slot, 99]);
            let s = received_signal(&tx, &ch, &cfg.ue, &mut rng).unwrap();
            let mut y = s.clone();
            add_noise(&mut y, ch.noise_var, &mut rng);
            sig += s.mean_power();
            noise += y
                .samples()
                .iter()
                .zip(s.samples())
                .map(|(a, b)| (a - b).norm_sqr() as f64)
                .sum::<f64>()
                / y.samples().len() as f64;
        }
        let snr_db = 10.0 * (sig / noise).log10();
        assert!((snr_db - cfg.snr_target_db).abs() < 0.2, "{snr_db}");
    }

    #[test]
    fn pretrain_draws_stay_in_range_and_repeat() {
        let a: Vec<ScenarioConfig> = PretrainDistribution::new(8).take(1000).collect();
        let b: Vec<ScenarioConfig> = PretrainDistribution::new(8).take(1000).collect();
        assert_eq!(a, b);
        for s in &a {
            let ds = s.delay_spread_ns();
            assert!((10.0 - 1e-6..=300.0 + 1e-6).contains(&ds), "{ds}");
            assert!((0.0..=200.0).contains(&s.doppler_max_hz));
            assert!((4.0..=10.0).contains(&s.snr_target_db));
            s.validate().unwrap();
        }
        let lab = ScenarioConfig::preset("small-lab").unwrap();
        assert!(a.iter().all(|s| s.tap_delays_ns != lab.tap_delays_ns));
    }

    #[test]
    fn presets_have_stated_spreads() {
        for (name, ds) in [("small-lab", 30.0), ("office-floor", 150.0), ("outdoor-uav", 80.0)] {
            let s = ScenarioConfig::preset(name).unwrap();
            assert!((s.delay_spread_ns() - ds).abs() < 1e-9);
            assert!((s.normalized_tap_powers().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            s.validate().unwrap();
        }
        assert!(ScenarioConfig::preset("moon-base").is_err());
    }

    #[test]
    fn scenario_file_overrides_preset() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.toml");
        std::fs::write(
            &p,
            "preset = \"office-floor\"\nname = \"x\"\ndelay_spread_ns = 50.0\nue = \"ue1\"\nseed = 12\n",
        )
        .unwrap();
        let s = ScenarioConfig::from_file(&p).unwrap();
        assert_eq!(s.name, "x");
        assert_eq!(s.seed, 12);
        assert_eq!(s.ue, UeProfile::preset("ue1").unwrap());
        assert!((s.delay_spread_ns() - 50.0).abs() < 1e-9);
        assert_eq!(s.doppler_max_hz, 10.0);
        std::fs::write(&p, "bogus_key = 1\n").unwrap();
        assert!(ScenarioConfig::from_file(&p).is_err());
    }
}
