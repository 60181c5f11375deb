//! Slot resource grid, DMRS pilots and 4-PRB block partitioning.

use std::ops::Range;

use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use crate::error::PhyError;
use crate::phy::qam::{qam16_demap, qam16_map, BITS_PER_SYMBOL};
use crate::phy::scrambling::gold_sequence;

pub const SUBCARRIERS_PER_PRB: usize = 12;
pub const SYMBOLS_PER_SLOT: usize = 14;
/// PRBs per training block.
pub const BLOCK_PRBS: usize = 4;
/// Slots per 10 ms frame at 30 kHz subcarrier spacing.
pub const SLOTS_PER_FRAME: u64 = 20;

fn default_dmrs() -> [usize; 3] {
    [2, 7, 11]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridConfig {
    pub n_prb: usize,
    #[serde(default = "default_rx")]
    pub n_rx: usize,
    #[serde(default = "default_dmrs")]
    pub dmrs_symbols: [usize; 3],
    /// Scrambling identity of the DMRS sequence.
    #[serde(default)]
    pub dmrs_id: u16,
}

fn default_rx() -> usize {
    4
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n_prb: 16,
            n_rx: 4,
            dmrs_symbols: default_dmrs(),
            dmrs_id: 0,
        }
    }
}

impl GridConfig {
    pub fn new(n_prb: usize, n_rx: usize) -> Result<Self, PhyError> {
        let cfg = Self {
            n_prb,
            n_rx,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PhyError> {
        if self.n_prb == 0 {
            return Err(PhyError::InvalidParameter("n_prb must be positive".into()));
        }
        if self.n_rx == 0 {
            return Err(PhyError::InvalidParameter("n_rx must be positive".into()));
        }
        let d = self.dmrs_symbols;
        if d.iter().any(|&t| t >= SYMBOLS_PER_SLOT) || !(d[0] < d[1] && d[1] < d[2]) {
            return Err(PhyError::InvalidParameter(format!(
                "DMRS symbols {d:?} must be strictly increasing and below {SYMBOLS_PER_SLOT}"
            )));
        }
        Ok(())
    }

    pub fn n_subcarriers(&self) -> usize {
        self.n_prb * SUBCARRIERS_PER_PRB
    }

    pub fn n_symbols(&self) -> usize {
        SYMBOLS_PER_SLOT
    }

    pub fn is_dmrs_symbol(&self, t: usize) -> bool {
        self.dmrs_symbols.contains(&t)
    }

    /// Comb-2 pilots: even subcarriers of DMRS symbols.
    pub fn is_pilot(&self, t: usize, f: usize) -> bool {
        self.is_dmrs_symbol(t) && f % 2 == 0
    }

    pub fn pilots_per_symbol(&self) -> usize {
        self.n_subcarriers() / 2
    }

    /// Data resource elements in frequency-first order: (symbol, subcarrier).
    pub fn data_positions(&self) -> Vec<(usize, usize)> {
        let f_len = self.n_subcarriers();
        (0..SYMBOLS_PER_SLOT)
            .flat_map(|t| (0..f_len).map(move |f| (t, f)))
            .filter(|&(t, f)| !self.is_pilot(t, f))
            .collect()
    }

    pub fn n_data_re(&self) -> usize {
        SYMBOLS_PER_SLOT * self.n_subcarriers() - 3 * self.pilots_per_symbol()
    }

    /// Coded bits carried by one slot.
    pub fn coded_bits(&self) -> usize {
        BITS_PER_SYMBOL * self.n_data_re()
    }

    pub fn n_blocks(&self) -> usize {
        self.n_prb / BLOCK_PRBS
    }

    /// Subcarrier range of each training block; leftover PRBs are excluded.
    pub fn block_ranges(&self) -> Vec<Range<usize>> {
        let w = BLOCK_PRBS * SUBCARRIERS_PER_PRB;
        (0..self.n_blocks()).map(|b| b * w..(b + 1) * w).collect()
    }

    /// Grid configuration of a single training block.
    pub fn block_config(&self) -> GridConfig {
        GridConfig {
            n_prb: BLOCK_PRBS,
            ..*self
        }
    }

    /// Time distance from symbol `t` to the nearest DMRS symbol.
    pub fn dmrs_time_distance(&self, t: usize) -> usize {
        self.dmrs_symbols
            .iter()
            .map(|&d| d.abs_diff(t))
            .min()
            .unwrap_or(0)
    }
}

/// Complex samples indexed `[antenna][symbol][subcarrier]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceGrid {
    n_ant: usize,
    n_sym: usize,
    n_sc: usize,
    samples: Vec<Complex32>,
}

impl ResourceGrid {
    pub fn zeros(n_ant: usize, n_sym: usize, n_sc: usize) -> Self {
        Self {
            n_ant,
            n_sym,
            n_sc,
            samples: vec![Complex32::new(0.0, 0.0); n_ant * n_sym * n_sc],
        }
    }

    pub fn from_samples(
        n_ant: usize,
        n_sym: usize,
        n_sc: usize,
        samples: Vec<Complex32>,
    ) -> Result<Self, PhyError> {
        if samples.len() != n_ant * n_sym * n_sc {
            return Err(PhyError::LengthMismatch {
                what: "resource grid samples",
                expected: n_ant * n_sym * n_sc,
                got: samples.len(),
            });
        }
        Ok(Self {
            n_ant,
            n_sym,
            n_sc,
            samples,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n_ant, self.n_sym, self.n_sc)
    }

    pub fn n_ant(&self) -> usize {
        self.n_ant
    }

    pub fn n_sym(&self) -> usize {
        self.n_sym
    }

    pub fn n_sc(&self) -> usize {
        self.n_sc
    }

    #[inline]
    fn idx(&self, a: usize, t: usize, f: usize) -> usize {
        (a * self.n_sym + t) * self.n_sc + f
    }

    #[inline]
    pub fn get(&self, a: usize, t: usize, f: usize) -> Complex32 {
        self.samples[self.idx(a, t, f)]
    }

    #[inline]
    pub fn set(&mut self, a: usize, t: usize, f: usize, v: Complex32) {
        let i = self.idx(a, t, f);
        self.samples[i] = v;
    }

    pub fn samples(&self) -> &[Complex32] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex32] {
        &mut self.samples
    }

    /// One symbol row of one antenna.
    pub fn row(&self, a: usize, t: usize) -> &[Complex32] {
        let start = self.idx(a, t, 0);
        &self.samples[start..start + self.n_sc]
    }

    pub fn row_mut(&mut self, a: usize, t: usize) -> &mut [Complex32] {
        let start = self.idx(a, t, 0);
        &mut self.samples[start..start + self.n_sc]
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Mean of `|x|^2` over all entries.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|c| c.norm_sqr() as f64).sum::<f64>() / self.samples.len() as f64
    }
}

/// Known QPSK pilots of one slot, stored per DMRS symbol and pilot index
/// (pilot `m` sits on subcarrier `2 m`).
#[derive(Debug, Clone, PartialEq)]
pub struct DmrsPattern {
    symbols: [usize; 3],
    values: Vec<Vec<Complex32>>,
}

impl DmrsPattern {
    /// Pilots for `slot_id`, seeded from the slot number within the frame and
    /// the symbol index.
    pub fn for_slot(cfg: &GridConfig, slot_id: u64) -> Self {
        let n_slot = slot_id % SLOTS_PER_FRAME;
        let n_id = u64::from(cfg.dmrs_id);
        let m = cfg.pilots_per_symbol();
        let scale = std::f32::consts::FRAC_1_SQRT_2;
        let values = cfg
            .dmrs_symbols
            .iter()
            .map(|&t| {
                let c_init = (((SYMBOLS_PER_SLOT as u64 * n_slot + t as u64 + 1)
                    * (2 * n_id + 1)
                    << 17)
                    + 2 * n_id)
                    % (1 << 31);
                let c = gold_sequence(c_init as u32, 2 * m);
                c.chunks_exact(2)
                    .map(|p| {
                        Complex32::new(
                            (1.0 - 2.0 * f32::from(p[0])) * scale,
                            (1.0 - 2.0 * f32::from(p[1])) * scale,
                        )
                    })
                    .collect()
            })
            .collect();
        Self {
            symbols: cfg.dmrs_symbols,
            values,
        }
    }

    pub fn symbols(&self) -> [usize; 3] {
        self.symbols
    }

    /// Pilot on DMRS symbol number `k` (0..3) at subcarrier `2 m`.
    pub fn pilot(&self, k: usize, m: usize) -> Complex32 {
        self.values[k][m]
    }

    pub fn pilots_on(&self, k: usize) -> &[Complex32] {
        &self.values[k]
    }

    pub fn n_pilots(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }
}

/// Places pilots and 16-QAM data symbols on a single-antenna slot grid.
/// Returns the grid and the number of data REs.
pub fn map_slot(
    coded_bits: &[u8],
    cfg: &GridConfig,
    dmrs: &DmrsPattern,
) -> Result<(ResourceGrid, usize), PhyError> {
    let n_data = cfg.n_data_re();
    if coded_bits.len() != BITS_PER_SYMBOL * n_data {
        return Err(PhyError::LengthMismatch {
            what: "map_slot coded bits",
            expected: BITS_PER_SYMBOL * n_data,
            got: coded_bits.len(),
        });
    }
    if dmrs.n_pilots() != cfg.pilots_per_symbol() {
        return Err(PhyError::LengthMismatch {
            what: "map_slot DMRS pilots",
            expected: cfg.pilots_per_symbol(),
            got: dmrs.n_pilots(),
        });
    }
    let symbols = qam16_map(coded_bits)?;
    let mut grid = ResourceGrid::zeros(1, SYMBOLS_PER_SLOT, cfg.n_subcarriers());
    let mut next = symbols.into_iter();
    for t in 0..SYMBOLS_PER_SLOT {
        let dmrs_k = cfg.dmrs_symbols.iter().position(|&d| d == t);
        for f in 0..cfg.n_subcarriers() {
            let v = match dmrs_k {
                Some(k) if f % 2 == 0 => dmrs.pilot(k, f / 2),
                _ => next.next().expect("data symbol count checked above"),
            };
            grid.set(0, t, f, v);
        }
    }
    Ok((grid, n_data))
}

/// Hard-decision demapping of data REs assuming unit channel gain on
/// antenna 0. Inverse of [`map_slot`] at zero noise.
pub fn demap_slot(grid: &ResourceGrid, cfg: &GridConfig) -> Result<Vec<u8>, PhyError> {
    let one = Complex32::new(1.0, 0.0);
    let mut bits = Vec::with_capacity(cfg.coded_bits());
    for (t, f) in cfg.data_positions() {
        let l = qam16_demap(grid.get(0, t, f), one, 1.0)?;
        bits.extend(l.iter().map(|&v| (v < 0.0) as u8));
    }
    Ok(bits)
}

/// Indices into the slot's data-position list that fall into each block,
/// in the slot's frequency-first order.
pub fn block_data_indices(cfg: &GridConfig) -> Vec<Vec<usize>> {
    let ranges = cfg.block_ranges();
    let mut out = vec![Vec::new(); ranges.len()];
    for (i, (_, f)) in cfg.data_positions().into_iter().enumerate() {
        if let Some(b) = ranges.iter().position(|r| r.contains(&f)) {
            out[b].push(i);
        }
    }
    out
}

/// Splits a channel-major feature array `[C][T][F]` into 4-PRB blocks
/// `[C][T][48]`.
pub fn extract_blocks(
    features: &[f32],
    n_channels: usize,
    cfg: &GridConfig,
) -> Result<Vec<Vec<f32>>, PhyError> {
    if cfg.n_prb < BLOCK_PRBS {
        return Err(PhyError::InvalidParameter(format!(
            "need at least {BLOCK_PRBS} PRBs to extract blocks, got {}",
            cfg.n_prb
        )));
    }
    let f_len = cfg.n_subcarriers();
    let t_len = SYMBOLS_PER_SLOT;
    if features.len() != n_channels * t_len * f_len {
        return Err(PhyError::LengthMismatch {
            what: "extract_blocks features",
            expected: n_channels * t_len * f_len,
            got: features.len(),
        });
    }
    Ok(cfg
        .block_ranges()
        .into_iter()
        .map(|r| {
            let mut block = Vec::with_capacity(n_channels * t_len * r.len());
            for row in features.chunks_exact(f_len) {
                block.extend_from_slice(&row[r.clone()]);
            }
            block
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn data_re_count_matches_enumeration() {
        let cfg = GridConfig::new(1, 1).unwrap();
        let mut count = 0;
        for t in 0..14 {
            for f in 0..12 {
                if !(cfg.dmrs_symbols.contains(&t) && f % 2 == 0) {
                    count += 1;
                }
            }
        }
        assert_eq!(count, 150);
        assert_eq!(cfg.n_data_re(), 150);
        assert_eq!(cfg.data_positions().len(), 150);
    }

    #[test]
    fn paper_scale_grid_shape() {
        let cfg = GridConfig::new(273, 4).unwrap();
        assert_eq!((cfg.n_symbols(), cfg.n_subcarriers()), (14, 3276));
        assert_eq!(cfg.n_blocks(), 68);
        assert_eq!(7500 * cfg.n_blocks(), 510_000);
    }

    #[test]
    fn config_validation() {
        assert!(GridConfig::new(0, 4).is_err());
        let bad = GridConfig {
            dmrs_symbols: [2, 2, 11],
            ..GridConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn pilots_have_unit_modulus_and_depend_on_slot() {
        let cfg = GridConfig::default();
        let a = DmrsPattern::for_slot(&cfg, 3);
        let b = DmrsPattern::for_slot(&cfg, 4);
        assert_eq!(a.n_pilots(), 96);
        for k in 0..3 {
            assert!(a.pilots_on(k).iter().all(|p| (p.norm() - 1.0).abs() < 1e-6));
        }
        assert_ne!(a, b);
        assert_eq!(a, DmrsPattern::for_slot(&cfg, 23));
    }

    #[test]
    fn map_rejects_wrong_length() {
        let cfg = GridConfig::new(1, 1).unwrap();
        let dmrs = DmrsPattern::for_slot(&cfg, 0);
        assert!(map_slot(&[0u8; 599], &cfg, &dmrs).is_err());
    }

    #[test]
    fn single_block_equals_grid() {
        let cfg = GridConfig::new(4, 1).unwrap();
        let feats: Vec<f32> = (0..2 * 14 * 48).map(|i| i as f32).collect();
        let blocks = extract_blocks(&feats, 2, &cfg).unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0], feats);
        let small = GridConfig::new(3, 1).unwrap();
        assert!(extract_blocks(&feats[..2 * 14 * 36], 2, &small).is_err());
    }

    #[test]
    fn blocks_partition_the_aligned_prbs() {
        let cfg = GridConfig::new(10, 1).unwrap();
        let idx = block_data_indices(&cfg);
        assert_eq!(idx.len(), 2);
        let per_block = GridConfig::new(4, 1).unwrap().n_data_re();
        assert!(idx.iter().all(|b| b.len() == per_block));
        let mut all: Vec<usize> = idx.concat();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 2 * per_block);
        // Leftover PRBs 8 and 9 stay out of every block.
        let pos = cfg.data_positions();
        assert!(all.iter().all(|&i| pos[i].1 < 96));
    }

    proptest! {
        #[test]
        fn map_demap_round_trip(n_prb in 1usize..6, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let cfg = GridConfig::new(n_prb, 1).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let bits: Vec<u8> = (0..cfg.coded_bits()).map(|_| rng.random_range(0..2)).collect();
            let dmrs = DmrsPattern::for_slot(&cfg, seed % 40);
            let (grid, n) = map_slot(&bits, &cfg, &dmrs).unwrap();
            prop_assert_eq!(n, cfg.n_data_re());
            prop_assert_eq!(demap_slot(&grid, &cfg).unwrap(), bits);
            // Pilot and data positions partition every symbol.
            for t in 0..14 {
                for f in 0..cfg.n_subcarriers() {
                    let v = grid.get(0, t, f);
                    if cfg.is_pilot(t, f) {
                        prop_assert_eq!(v, dmrs.pilot(cfg.dmrs_symbols.iter().position(|&d| d == t).unwrap(), f / 2));
                    }
                }
            }
            let p = grid.mean_power();
            prop_assert!(p > 0.5 && p < 1.6);
        }
    }
}
