//! Pretraining on randomized channels and finetuning on recorded datasets.
//!
//! Batch composition is a pure function of `(seed, batch index)`, so a run
//! is reproducible regardless of how samples are produced.

use std::borrow::Cow;

use rand::Rng;
use sitefit_core::channel::{apply_channel, draw_channel, PretrainDistribution};
use sitefit_core::features::slot_features;
use sitefit_core::grid::{map_slot, DmrsPattern, GridConfig, SYMBOLS_PER_SLOT};
use sitefit_core::labels::{block_label_indices, slot_samples, SampleSet, TrainingDataset, TrainingSample};
use sitefit_core::link::FhReader;
use sitefit_core::seed::{rng_for, stream};

use crate::adam::{AdamConfig, AdamState};
use crate::error::NrxError;
use crate::loss::{multi_loss, multi_loss_grad};
use crate::model::{NrxInput, NrxModel, NrxOutput, Tape};

/// Random access to training samples.
pub trait SampleSource {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn sample(&self, i: usize) -> Result<Cow<'_, TrainingSample>, NrxError>;
}

impl SampleSource for SampleSet {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn sample(&self, i: usize) -> Result<Cow<'_, TrainingSample>, NrxError> {
        Ok(Cow::Borrowed(&self.samples[i]))
    }
}

impl SampleSource for Vec<TrainingSample> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn sample(&self, i: usize) -> Result<Cow<'_, TrainingSample>, NrxError> {
        Ok(Cow::Borrowed(&self[i]))
    }
}

/// Samples computed on demand from a capture's fronthaul file.
pub struct FhDataset {
    pub dataset: TrainingDataset,
    pub fh: FhReader,
    label_idx: Vec<Vec<usize>>,
}

impl FhDataset {
    pub fn new(dataset: TrainingDataset, fh: FhReader) -> Self {
        let label_idx = block_label_indices(&dataset.grid);
        Self { dataset, fh, label_idx }
    }

    /// Loads every sample into memory.
    pub fn materialize(&self) -> Result<Vec<TrainingSample>, NrxError> {
        let mut out = Vec::with_capacity(self.dataset.n_samples());
        for slot in &self.dataset.slots {
            out.extend(slot_samples(&self.dataset, slot, &self.fh, &self.label_idx)?);
        }
        Ok(out)
    }
}

impl SampleSource for FhDataset {
    fn len(&self) -> usize {
        self.dataset.n_samples()
    }

    fn sample(&self, i: usize) -> Result<Cow<'_, TrainingSample>, NrxError> {
        let (s, b) = self.dataset.locate(i);
        let mut all = slot_samples(&self.dataset, &self.dataset.slots[s], &self.fh, &self.label_idx)?;
        Ok(Cow::Owned(all.swap_remove(b)))
    }
}

/// Online pretraining samples: each index draws a scenario from the
/// randomized distribution, simulates one slot carrying random coded bits
/// and keeps one random 4-PRB block.
#[derive(Debug, Clone)]
pub struct PretrainGenerator {
    pub seed: u64,
    pub grid: GridConfig,
    dist: PretrainDistribution,
    label_idx: Vec<Vec<usize>>,
}

impl PretrainGenerator {
    pub fn new(seed: u64, grid: GridConfig) -> Result<Self, NrxError> {
        grid.validate()?;
        if grid.n_blocks() == 0 {
            return Err(NrxError::Config(format!("{} PRBs hold no training block", grid.n_prb)));
        }
        Ok(Self {
            seed,
            grid,
            dist: PretrainDistribution::new(seed),
            label_idx: block_label_indices(&grid),
        })
    }

    pub fn sample(&self, index: u64) -> Result<TrainingSample, NrxError> {
        let scenario = self.dist.draw(index);
        let mut rng = rng_for(&[self.seed, index, stream::PRETRAIN, stream::PAYLOAD]);
        let bits: Vec<u8> = (0..self.grid.coded_bits()).map(|_| rng.random_range(0..2u8)).collect();
        let dmrs = DmrsPattern::for_slot(&self.grid, index);
        let (tx, _) = map_slot(&bits, &self.grid, &dmrs)?;
        let ch = draw_channel(&scenario, &self.grid, index);
        let y = apply_channel(&tx, &ch, &scenario.ue, &mut rng)?;
        let feats = slot_features(&y, &self.grid, &dmrs)?;
        let block = rng.random_range(0..self.grid.n_blocks());
        let features = feats.blocks(&self.grid)?.swap_remove(block);
        Ok(TrainingSample {
            slot_id: index,
            block,
            fail: false,
            features,
            labels: self.label_idx[block].iter().map(|&i| bits[i]).collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub n_batches: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Unrolled iterations during training.
    pub n_iters: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NrxError> {
        if self.batch_size == 0 {
            return Err(NrxError::Config("batch size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(NrxError::Config(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }
}

/// Loss trace entry at a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub batches: u64,
    /// Mean training loss over the batches since the previous entry.
    pub mean_loss: Option<f64>,
}

/// Optimizer state plus reusable activation buffers.
pub struct Trainer {
    pub model: NrxModel<f32>,
    pub adam: AdamState<f32>,
    tape: Tape<f32>,
    positions: Vec<(usize, usize)>,
    n_sc: usize,
}

impl Trainer {
    pub fn new(model: NrxModel<f32>, lr: f64) -> Result<Self, NrxError> {
        let block = GridConfig::new(sitefit_core::grid::BLOCK_PRBS, model.cfg.n_rx)?;
        let adam = AdamState::new(model.params.len(), AdamConfig::with_lr(lr));
        Ok(Self {
            model,
            adam,
            tape: Tape::default(),
            positions: block.data_positions(),
            n_sc: block.n_subcarriers(),
        })
    }

    /// One optimizer step on a batch of 4-PRB samples; returns the loss.
    pub fn step(&mut self, batch: &[&TrainingSample], n_iters: usize) -> Result<f64, NrxError> {
        train_step(
            &mut self.model,
            &mut self.adam,
            batch,
            n_iters,
            &mut self.tape,
            &self.positions,
            self.n_sc,
        )
    }
}

/// Computes the multi-iteration loss and its exact gradient on `batch` and
/// applies one Adam update. A non-finite loss or gradient leaves the model
/// untouched and names the offending samples.
pub fn train_step(
    model: &mut NrxModel<f32>,
    adam: &mut AdamState<f32>,
    batch: &[&TrainingSample],
    n_iters: usize,
    tape: &mut Tape<f32>,
    positions: &[(usize, usize)],
    n_sc: usize,
) -> Result<f64, NrxError> {
    if batch.is_empty() {
        return Err(NrxError::Shape("empty batch".into()));
    }
    let n_llr = 4 * positions.len();
    if let Some(s) = batch.iter().find(|s| s.labels.len() != n_llr) {
        return Err(NrxError::Shape(format!(
            "sample from slot {} has {} labels, expected {n_llr}",
            s.slot_id,
            s.labels.len()
        )));
    }
    let input = NrxInput {
        grids: batch.iter().map(|s| s.features.as_slice()).collect(),
        n_sym: SYMBOLS_PER_SLOT,
        n_sc,
        data_positions: positions,
    };
    model.forward_into(&input, n_iters, tape)?;
    let labels: Vec<u8> = batch.iter().flat_map(|s| s.labels.iter().copied()).collect();
    let mask = vec![1u8; labels.len()];
    let (loss, dl) = multi_loss_grad(&tape.output.llrs, n_iters, &labels, &mask);
    if !loss.is_finite() {
        return Err(NrxError::NonFinite { sample_ids: offenders(&tape.output, batch, n_iters) });
    }
    let grad = model.backward(tape, &dl);
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(NrxError::NonFinite { sample_ids: offenders(&tape.output, batch, n_iters) });
    }
    adam.update(&mut model.params, &grad);
    Ok(f64::from(loss))
}

/// Slots whose own loss is non-finite, or the whole batch when the failure
/// only shows up in aggregate.
fn offenders(out: &NrxOutput<f32>, batch: &[&TrainingSample], n_iters: usize) -> Vec<u64> {
    let ids: Vec<u64> = (0..batch.len())
        .filter(|&b| {
            let l: Vec<f32> = (1..=n_iters).flat_map(|k| out.get(k, b).iter().copied()).collect();
            let mask = vec![1u8; batch[b].labels.len()];
            !multi_loss(&l, n_iters, &batch[b].labels, &mask).is_finite()
        })
        .map(|b| batch[b].slot_id)
        .collect();
    if ids.is_empty() {
        batch.iter().map(|s| s.slot_id).collect()
    } else {
        ids
    }
}

/// Pretrains on generated samples; batch `i` holds sample indices
/// `i * batch_size ..`. `progress` sees every batch loss.
pub fn pretrain(
    model: NrxModel<f32>,
    generator: &PretrainGenerator,
    cfg: &TrainConfig,
    mut progress: impl FnMut(u64, f64),
) -> Result<NrxModel<f32>, NrxError> {
    cfg.validate()?;
    check_grid(&model, &generator.grid)?;
    let mut trainer = Trainer::new(model, cfg.lr)?;
    for i in 0..cfg.n_batches {
        let base = i * cfg.batch_size as u64;
        let samples = (0..cfg.batch_size as u64)
            .map(|j| generator.sample(base + j))
            .collect::<Result<Vec<_>, _>>()?;
        let refs: Vec<&TrainingSample> = samples.iter().collect();
        let loss = trainer.step(&refs, cfg.n_iters)?;
        progress(i + 1, loss);
    }
    Ok(trainer.model)
}

fn check_grid(model: &NrxModel<f32>, grid: &GridConfig) -> Result<(), NrxError> {
    if grid.n_rx != model.cfg.n_rx {
        return Err(NrxError::Config(format!(
            "model expects {} antennas, data has {}",
            model.cfg.n_rx, grid.n_rx
        )));
    }
    Ok(())
}

/// Sample indices of finetuning batch `batch`: uniform with replacement.
pub fn finetune_batch(seed: u64, batch: u64, batch_size: usize, n: usize) -> Vec<usize> {
    let mut rng = rng_for(&[seed, batch, stream::FINETUNE]);
    (0..batch_size).map(|_| rng.random_range(0..n)).collect()
}

/// Finetunes on `source`. `on_checkpoint` receives the model after exactly
/// each scheduled batch count (0 means the unmodified input).
pub fn finetune(
    model: NrxModel<f32>,
    source: &dyn SampleSource,
    cfg: &TrainConfig,
    schedule: &[u64],
    mut on_checkpoint: impl FnMut(u64, &NrxModel<f32>) -> Result<(), NrxError>,
) -> Result<(NrxModel<f32>, Vec<TracePoint>), NrxError> {
    cfg.validate()?;
    if source.is_empty() {
        return Err(NrxError::Config("finetuning dataset is empty".into()));
    }
    let mut schedule = schedule.to_vec();
    schedule.sort_unstable();
    schedule.dedup();
    if let Some(&last) = schedule.last() {
        if last > cfg.n_batches {
            return Err(NrxError::Config(format!(
                "checkpoint at {last} batches exceeds the {} planned",
                cfg.n_batches
            )));
        }
    }
    let mut trainer = Trainer::new(model, cfg.lr)?;
    let mut trace = Vec::with_capacity(schedule.len());
    let mut next = schedule.iter().peekable();
    let (mut loss_sum, mut loss_n) = (0.0, 0u64);
    let mut emit = |done: u64, trainer: &Trainer, sum: &mut f64, n: &mut u64| -> Result<(), NrxError> {
        trace.push(TracePoint {
            batches: done,
            mean_loss: (*n > 0).then(|| *sum / *n as f64),
        });
        *sum = 0.0;
        *n = 0;
        on_checkpoint(done, &trainer.model)
    };
    if next.next_if_eq(&&0).is_some() {
        emit(0, &trainer, &mut loss_sum, &mut loss_n)?;
    }
    for i in 0..cfg.n_batches {
        let idx = finetune_batch(cfg.seed, i, cfg.batch_size, source.len());
        let samples = idx.iter().map(|&j| source.sample(j)).collect::<Result<Vec<_>, _>>()?;
        let refs: Vec<&TrainingSample> = samples.iter().map(|c| c.as_ref()).collect();
        loss_sum += trainer.step(&refs, cfg.n_iters)?;
        loss_n += 1;
        if next.next_if_eq(&&(i + 1)).is_some() {
            emit(i + 1, &trainer, &mut loss_sum, &mut loss_n)?;
        }
    }
    Ok((trainer.model, trace))
}
