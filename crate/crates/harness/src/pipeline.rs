//! End-to-end run: captures, labels, test sets, training and reports.
//!
//! Each stage records a key derived from the configuration parts it
//! depends on; a rerun skips stages whose key is unchanged and whose
//! outputs exist.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sitefit_core::channel::UeProfile;
use sitefit_core::classic::MmseReceiver;
use sitefit_core::labels::{build_dataset, extract_labels, write_dataset, DatasetManifest, LabelSummary, SampleShape};
use sitefit_core::link::{run_campaign_to_dir, CampaignConfig, StoreReader};
use sitefit_core::labels::read_dataset;
use sitefit_core::seed::{rng_for, stream};
use sitefit_nrx::checkpoint::{params_hash, sha256_hex};
use sitefit_nrx::{
    finetune, load_checkpoint, pretrain, save_checkpoint, NrxModel, NrxReceiver, PretrainGenerator, Provenance,
    TrainConfig,
};

use crate::bler::{dataset_bler, load_test_slots, BlerReport, TestSlot};
use crate::config::RunConfig;
use crate::error::HarnessError;
use crate::report::{write_csv, BatchRow, BlerRow, DepthRow, LatencyRow, SnrRow, TraceRow};
use crate::snr::{alpha_grid, mean_gamma, snr_sweep};
use crate::sweep::{batch_sweep, depth_latency, depth_outcomes};
use crate::testset::{build_test_set, TestSet};

/// Outputs excluded from determinism comparisons.
pub const NONDETERMINISTIC: &[&str] = &["reports/latency.csv", "manifest.json"];

/// Where every artifact of a run lives.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(root: &Path) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn store(&self, campaign: &str) -> PathBuf {
        self.root.join("stores").join(campaign)
    }

    pub fn labels(&self) -> PathBuf {
        self.root.join("dataset/labels.json")
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset/dataset.bin")
    }

    pub fn dataset_manifest(&self) -> PathBuf {
        self.root.join("dataset/manifest.json")
    }

    pub fn testset(&self, ue: &str) -> PathBuf {
        self.root.join("testsets").join(format!("{}.json", test_campaign(ue)))
    }

    pub fn pretrained(&self) -> PathBuf {
        self.root.join("checkpoints/pretrained.nrxw")
    }

    pub fn finetuned(&self, batches: u64) -> PathBuf {
        self.root.join(format!("checkpoints/finetuned-{batches:06}.nrxw"))
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.root.join("reports").join(name)
    }

    fn stamp(&self, stage: &str) -> PathBuf {
        self.root.join("stages").join(format!("{stage}.key"))
    }
}

pub fn train_campaign(ue: &str) -> String {
    format!("train-{ue}")
}

pub fn test_campaign(ue: &str) -> String {
    format!("test-{ue}")
}

fn ue_index(name: &str) -> u16 {
    name.trim_start_matches("ue").parse().unwrap_or(0)
}

fn create_parent(path: &Path) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    create_parent(path)?;
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(v).expect("serializes");
    text.push('\n');
    write_text(path, &text)
}

/// Progress sink.
pub type Log<'a> = &'a dyn Fn(&str);

struct Stage<'a> {
    paths: &'a RunPaths,
    name: &'static str,
    key: String,
}

impl<'a> Stage<'a> {
    fn new(paths: &'a RunPaths, name: &'static str, key: String) -> Self {
        Self { paths, name, key }
    }

    fn done(&self, outputs: &[PathBuf]) -> bool {
        std::fs::read_to_string(self.paths.stamp(self.name)).is_ok_and(|k| k.trim() == self.key)
            && outputs.iter().all(|p| p.exists())
    }

    fn invalidate(&self) -> Result<(), HarnessError> {
        let p = self.paths.stamp(self.name);
        match std::fs::remove_file(&p) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(HarnessError::io(p, e)),
            _ => Ok(()),
        }
    }

    fn finish(&self) -> Result<(), HarnessError> {
        write_text(&self.paths.stamp(self.name), &format!("{}\n", self.key))
    }
}

/// Campaign configuration of the training capture (`index` 0) or of test
/// capture `index - 1`.
pub fn campaign_config(cfg: &RunConfig, name: &str, ue: &str, index: u64, n_slots: u64) -> Result<CampaignConfig, HarnessError> {
    let profile = UeProfile::preset(ue).ok_or_else(|| HarnessError::Config(format!("unknown UE profile {ue:?}")))?;
    let scenario = cfg.scenario_config()?.with_ue(profile);
    let mut c = CampaignConfig::new(name, scenario, cfg.grid, cfg.code_rate, n_slots);
    c.first_slot_id = index * cfg.campaigns.slot_stride;
    c.ue_id = ue_index(ue);
    Ok(c)
}

/// All campaigns of a run in slot-id order.
pub fn campaign_configs(cfg: &RunConfig) -> Result<Vec<CampaignConfig>, HarnessError> {
    let c = &cfg.campaigns;
    let mut out = vec![campaign_config(cfg, &train_campaign(&c.train_ue), &c.train_ue, 0, c.train_slots)?];
    for (i, ue) in c.test_ues.iter().enumerate() {
        out.push(campaign_config(cfg, &test_campaign(ue), ue, i as u64 + 1, c.test_slots)?);
    }
    Ok(out)
}

/// Runs the capture campaigns with the reference receiver driving HARQ.
pub fn stage_generate(cfg: &RunConfig, paths: &RunPaths, log: Log) -> Result<(), HarnessError> {
    let campaigns = campaign_configs(cfg)?;
    let outputs: Vec<PathBuf> = campaigns.iter().map(|c| paths.store(&c.name).join("fh.bin")).collect();
    let stage = Stage::new(paths, "generate", cfg.campaigns_key()?);
    if stage.done(&outputs) {
        log("generate: up to date");
        return Ok(());
    }
    stage.invalidate()?;
    let rx = MmseReceiver::new(&cfg.grid);
    for c in &campaigns {
        let dir = paths.store(&c.name);
        let t = std::time::Instant::now();
        let s = run_campaign_to_dir(c, &rx, &dir)?;
        log(&format!(
            "generate: {} {} slots, reference BLER {:.4} ({:.0} s)",
            c.name,
            s.n_slots,
            s.bler(),
            t.elapsed().as_secs_f64()
        ));
    }
    stage.finish()
}

/// Labels the training capture and writes the finetuning dataset.
pub fn stage_extract(cfg: &RunConfig, paths: &RunPaths, log: Log) -> Result<(), HarnessError> {
    let outputs = [paths.dataset(), paths.dataset_manifest(), paths.labels()];
    let stage = Stage::new(paths, "extract", cfg.dataset_key()?);
    if stage.done(&outputs) {
        log("extract: up to date");
        return Ok(());
    }
    stage.invalidate()?;
    let store_dir = paths.store(&train_campaign(&cfg.campaigns.train_ue));
    let manifest = extract_dataset(&store_dir, &paths.dataset(), &paths.labels(), cfg.dataset.n_slots, cfg.dataset.fail_fraction, cfg.seed)?;
    write_json(&paths.dataset_manifest(), &manifest)?;
    log(&format!(
        "extract: {} direct, {} recovered, {} dropped; dataset {} slots ({} failed), {} samples",
        manifest.labels.direct,
        manifest.labels.harq_recovered,
        manifest.labels.dropped.values().sum::<usize>(),
        manifest.n_slots,
        manifest.n_fail_slots,
        manifest.n_samples
    ));
    stage.finish()
}

/// Extracts labels from a store and writes a dataset of `n_slots` slots.
pub fn extract_dataset(
    store_dir: &Path,
    dataset: &Path,
    labels_out: &Path,
    n_slots: usize,
    fail_fraction: f64,
    seed: u64,
) -> Result<DatasetManifest, HarnessError> {
    let store = StoreReader::open(store_dir)?;
    let labels = extract_labels(&store);
    let summary: LabelSummary = labels.summary();
    write_json(labels_out, &(&summary, &labels.dropped))?;
    let mut rng = rng_for(&[seed, stream::SELECTION, 1]);
    let ds = build_dataset(&labels.labeled, &store.meta.grid, n_slots, fail_fraction, &mut rng)?;
    create_parent(dataset)?;
    write_dataset(&ds, &store.fh, dataset)?;
    Ok(DatasetManifest {
        source_store: store.meta.name.clone(),
        grid: ds.grid,
        shape: SampleShape::for_grid(&ds.grid),
        n_slots: ds.slots.len(),
        n_fail_slots: ds.n_fail_slots(),
        n_samples: ds.n_samples(),
        target_fail_fraction: fail_fraction,
        seed,
        labels: summary,
        slot_ids: ds.slot_ids(),
    })
}

fn load_manifest(path: &Path) -> Result<DatasetManifest, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::invalid(path, e.to_string()))
}

/// Draws one test set per test capture, disjoint from the training slots.
pub fn stage_testsets(cfg: &RunConfig, paths: &RunPaths, log: Log) -> Result<(), HarnessError> {
    let outputs: Vec<PathBuf> = cfg.campaigns.test_ues.iter().map(|u| paths.testset(u)).collect();
    let stage = Stage::new(paths, "testsets", cfg.testset_key()?);
    if stage.done(&outputs) {
        log("testsets: up to date");
        return Ok(());
    }
    stage.invalidate()?;
    let training: BTreeSet<u64> = load_manifest(&paths.dataset_manifest())?.slot_ids.into_iter().collect();
    for (i, ue) in cfg.campaigns.test_ues.iter().enumerate() {
        let name = test_campaign(ue);
        let store = StoreReader::open(&paths.store(&name))?;
        let seed = sitefit_core::seed::mix(&[cfg.seed, i as u64]);
        let t = build_test_set(&name, &store.meta.name, &store.fapi, cfg.test_set.n_pass, cfg.test_set.n_fail, &training, seed)?;
        t.check_disjoint(&training)?;
        create_parent(&paths.testset(ue))?;
        t.save(&paths.testset(ue))?;
        log(&format!("testsets: {name} {} pass + {} fail", t.n_pass, t.n_fail));
    }
    stage.finish()
}

/// Pretrains from a seeded initialization on randomized channels.
pub fn stage_pretrain(cfg: &RunConfig, paths: &RunPaths, log: Log) -> Result<(), HarnessError> {
    let trace_path = paths.report("pretrain_trace.csv");
    let stage = Stage::new(paths, "pretrain", cfg.pretrain_key());
    if stage.done(&[paths.pretrained(), trace_path.clone()]) {
        log("pretrain: up to date");
        return Ok(());
    }
    stage.invalidate()?;
    let p = &cfg.pretrain;
    let model = NrxModel::<f32>::init(cfg.model, cfg.seed)?;
    let generator = PretrainGenerator::new(cfg.seed, cfg.grid)?;
    let tc = TrainConfig {
        n_batches: p.batches,
        batch_size: p.batch_size,
        lr: p.lr,
        seed: cfg.seed,
        n_iters: cfg.model.max_iters,
    };
    let hash = cfg.pretrain_key();
    let start = std::time::Instant::now();
    let (mut sum, mut n) = (0.0, 0u64);
    let mut trace = Vec::new();
    let trained = pretrain(model, &generator, &tc, |b, loss| {
        sum += loss;
        n += 1;
        if b % p.log_every == 0 || b == p.batches {
            let mean = sum / n as f64;
            log(&format!("pretrain: batch {b}/{} mean loss {mean:.4} ({:.0} s)", p.batches, start.elapsed().as_secs_f64()));
            trace.push(TraceRow {
                config_hash: hash.clone(),
                seed: cfg.seed,
                stage: "pretrain".into(),
                batches: b,
                mean_loss: Some(mean),
            });
            sum = 0.0;
            n = 0;
        }
    })?;
    create_parent(&paths.pretrained())?;
    let prov = Provenance {
        stage: "pretrain".into(),
        batches: p.batches,
        batch_size: p.batch_size,
        lr: p.lr,
        parent: None,
        data: Some(format!("randomized-channels seed {}", cfg.seed)),
    };
    save_checkpoint(&paths.pretrained(), &trained, cfg.seed, prov)?;
    create_parent(&trace_path)?;
    write_csv(&trace_path, &trace)?;
    stage.finish()
}

/// Finetunes the pretrained model on the extracted dataset, keeping the
/// scheduled checkpoints.
pub fn stage_finetune(cfg: &RunConfig, paths: &RunPaths, log: Log) -> Result<(), HarnessError> {
    let trace_path = paths.report("finetune_trace.csv");
    let mut outputs: Vec<PathBuf> = cfg.finetune.schedule.iter().map(|&b| paths.finetuned(b)).collect();
    outputs.push(trace_path.clone());
    let stage = Stage::new(paths, "finetune", cfg.finetune_key()?);
    if stage.done(&outputs) {
        log("finetune: up to date");
        return Ok(());
    }
    stage.invalidate()?;
    finetune_from(cfg, &paths.pretrained(), &paths.dataset(), paths, log)?;
    stage.finish()
}

/// Finetunes the checkpoint at `start` on the dataset file `dataset`,
/// writing the scheduled checkpoints and trace under `paths`.
pub fn finetune_from(cfg: &RunConfig, start: &Path, dataset: &Path, paths: &RunPaths, log: Log) -> Result<(), HarnessError> {
    let trace_path = paths.report("finetune_trace.csv");
    let f = &cfg.finetune;
    let model = load_model(cfg, start)?;
    let parent = params_hash(&model);
    let data = read_dataset(dataset)?;
    let data_id = sha256_hex(&std::fs::read(dataset).map_err(|e| HarnessError::io(dataset, e))?);
    create_parent(&paths.finetuned(0))?;
    let tc = TrainConfig {
        n_batches: f.batches,
        batch_size: f.batch_size,
        lr: f.lr,
        seed: cfg.seed,
        n_iters: cfg.model.max_iters,
    };
    let start = std::time::Instant::now();
    let (_, trace) = finetune(model, &data, &tc, &f.schedule, |b, m| {
        let prov = Provenance {
            stage: "finetune".into(),
            batches: b,
            batch_size: f.batch_size,
            lr: f.lr,
            parent: Some(parent.clone()),
            data: Some(data_id.clone()),
        };
        log(&format!("finetune: checkpoint at {b} batches ({:.0} s)", start.elapsed().as_secs_f64()));
        save_checkpoint(&paths.finetuned(b), m, cfg.seed, prov)
    })?;
    let hash = cfg.finetune_key()?;
    let rows: Vec<TraceRow> = trace
        .iter()
        .map(|t| TraceRow {
            config_hash: hash.clone(),
            seed: cfg.seed,
            stage: "finetune".into(),
            batches: t.batches,
            mean_loss: t.mean_loss,
        })
        .collect();
    create_parent(&trace_path)?;
    write_csv(&trace_path, &rows)
}

/// A test set with its loaded slots.
pub struct LoadedTestSet<'a> {
    pub ue: String,
    pub set: TestSet,
    pub slots: Vec<TestSlot<'a>>,
}

/// Opens the test captures of a run.
pub fn open_test_stores(cfg: &RunConfig, paths: &RunPaths) -> Result<Vec<(String, StoreReader, TestSet)>, HarnessError> {
    let training: BTreeSet<u64> = load_manifest(&paths.dataset_manifest())?.slot_ids.into_iter().collect();
    cfg.campaigns
        .test_ues
        .iter()
        .map(|ue| {
            let store = StoreReader::open(&paths.store(&test_campaign(ue)))?;
            let set = TestSet::load(&paths.testset(ue))?;
            set.check_disjoint(&training)?;
            Ok((ue.clone(), store, set))
        })
        .collect()
}

pub fn load_sets<'a>(stores: &'a [(String, StoreReader, TestSet)]) -> Result<Vec<LoadedTestSet<'a>>, HarnessError> {
    stores
        .iter()
        .map(|(ue, store, set)| {
            Ok(LoadedTestSet {
                ue: ue.clone(),
                set: set.clone(),
                slots: load_test_slots(store, set)?,
            })
        })
        .collect()
}

/// Loads a checkpoint and checks that it matches the run's model shape.
pub fn load_model(cfg: &RunConfig, path: &Path) -> Result<NrxModel<f32>, HarnessError> {
    let (model, header) = load_checkpoint(path)?;
    if header.config != cfg.model {
        return Err(HarnessError::invalid(
            path,
            format!("checkpoint model {:?} differs from configured {:?}", header.config, cfg.model),
        ));
    }
    Ok(model)
}

/// Reference and neural receivers at both depths on every test set.
pub fn bler_table(
    cfg: &RunConfig,
    models: &[(&str, &NrxModel<f32>)],
    sets: &[LoadedTestSet<'_>],
    hash: &str,
) -> Result<(Vec<BlerRow>, Vec<DepthRow>), HarnessError> {
    let mmse = MmseReceiver::new(&cfg.grid);
    let (mut bler, mut depth) = (Vec::new(), Vec::new());
    for s in sets {
        bler.push(BlerRow::new(&dataset_bler(&mmse, &s.slots, &s.set, hash), cfg.seed));
        for (name, model) in models {
            let per_slot = depth_outcomes(model, &s.slots, cfg.model.max_iters)?;
            for k in 1..=cfg.model.max_iters {
                let col: Vec<bool> = per_slot.iter().map(|o| o[k - 1]).collect();
                let r = BlerReport::from_outcomes(&format!("{name}-{k}it"), &s.set, &col, hash);
                if k == cfg.eval.shallow_iters || k == cfg.eval.deep_iters {
                    bler.push(BlerRow::new(&r, cfg.seed));
                }
                depth.push(DepthRow::new(name, k, &r, cfg.seed));
            }
        }
    }
    Ok((bler, depth))
}

/// Loaded inputs shared by the evaluation tables.
pub struct EvalInputs {
    pub hash: String,
    pub stores: Vec<(String, StoreReader, TestSet)>,
}

impl EvalInputs {
    pub fn open(cfg: &RunConfig, paths: &RunPaths) -> Result<Self, HarnessError> {
        let dir = paths.root.join("reports");
        std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(dir, e))?;
        Ok(Self {
            hash: cfg.config_hash()?,
            stores: open_test_stores(cfg, paths)?,
        })
    }
}

fn primary<'s, 'a>(cfg: &RunConfig, sets: &'s [LoadedTestSet<'a>]) -> Result<&'s LoadedTestSet<'a>, HarnessError> {
    sets.iter()
        .find(|s| s.ue == cfg.test_set.primary_ue)
        .ok_or_else(|| HarnessError::Config(format!("no test set for primary UE {}", cfg.test_set.primary_ue)))
}

/// Writes `bler.csv` and `depth.csv` for the given models.
pub fn write_bler_reports(
    cfg: &RunConfig,
    paths: &RunPaths,
    models: &[(&str, &NrxModel<f32>)],
    log: Log,
) -> Result<(), HarnessError> {
    let t = std::time::Instant::now();
    let inputs = EvalInputs::open(cfg, paths)?;
    let sets = load_sets(&inputs.stores)?;
    let (bler, depth) = bler_table(cfg, models, &sets, &inputs.hash)?;
    write_csv(&paths.report("bler.csv"), &bler)?;
    write_csv(&paths.report("depth.csv"), &depth)?;
    log(&format!("evaluate: BLER and depth tables ({:.0} s)", t.elapsed().as_secs_f64()));
    Ok(())
}

/// Writes `batches.csv` from the scheduled finetuning checkpoints.
pub fn write_batch_report(cfg: &RunConfig, paths: &RunPaths, log: Log) -> Result<(), HarnessError> {
    let t = std::time::Instant::now();
    let inputs = EvalInputs::open(cfg, paths)?;
    let sets = load_sets(&inputs.stores)?;
    let rows = batches_table(cfg, paths, &sets, &inputs.hash)?;
    write_csv(&paths.report("batches.csv"), &rows)?;
    log(&format!("evaluate: batch sweep ({:.0} s)", t.elapsed().as_secs_f64()));
    Ok(())
}

/// Writes `snr.csv` on the primary test set.
pub fn write_snr_report(
    cfg: &RunConfig,
    paths: &RunPaths,
    models: &[(&str, &NrxModel<f32>)],
    log: Log,
) -> Result<(), HarnessError> {
    let t = std::time::Instant::now();
    let inputs = EvalInputs::open(cfg, paths)?;
    let sets = load_sets(&inputs.stores)?;
    let rows = snr_table(cfg, models, primary(cfg, &sets)?, &inputs.hash)?;
    write_csv(&paths.report("snr.csv"), &rows)?;
    log(&format!("evaluate: SNR sweep ({:.0} s)", t.elapsed().as_secs_f64()));
    Ok(())
}

/// Writes the informational `latency.csv`.
pub fn write_latency_report(
    cfg: &RunConfig,
    paths: &RunPaths,
    models: &[(&str, &NrxModel<f32>)],
) -> Result<(), HarnessError> {
    let inputs = EvalInputs::open(cfg, paths)?;
    let sets = load_sets(&inputs.stores)?;
    let set = primary(cfg, &sets)?;
    let mut rows = Vec::new();
    for (name, model) in models {
        for (k, ms) in depth_latency(model, &set.slots, cfg.model.max_iters, cfg.eval.latency_probe_slots)? {
            rows.push(LatencyRow {
                config_hash: inputs.hash.clone(),
                seed: cfg.seed,
                model: (*name).into(),
                n_iters: k,
                ms_per_slot: ms,
            });
        }
    }
    write_csv(&paths.report("latency.csv"), &rows)
}

/// The pretrained and final finetuned models of a run.
pub fn run_models(cfg: &RunConfig, paths: &RunPaths) -> Result<[(&'static str, NrxModel<f32>); 2], HarnessError> {
    Ok([
        ("pretrained", load_model(cfg, &paths.pretrained())?),
        ("finetuned", load_model(cfg, &paths.finetuned(cfg.finetune.batches))?),
    ])
}

/// Runs every evaluation and writes the report tables.
pub fn stage_evaluate(cfg: &RunConfig, paths: &RunPaths, log: Log) -> Result<(), HarnessError> {
    let names = ["bler.csv", "depth.csv", "batches.csv", "snr.csv", "latency.csv"];
    let outputs: Vec<PathBuf> = names.iter().map(|n| paths.report(n)).collect();
    let stage = Stage::new(paths, "evaluate", cfg.eval_key()?);
    if stage.done(&outputs) {
        log("evaluate: up to date");
        return Ok(());
    }
    stage.invalidate()?;
    let owned = run_models(cfg, paths)?;
    let models: Vec<(&str, &NrxModel<f32>)> = owned.iter().map(|(n, m)| (*n, m)).collect();
    write_bler_reports(cfg, paths, &models, log)?;
    write_batch_report(cfg, paths, log)?;
    write_snr_report(cfg, paths, &models, log)?;
    write_latency_report(cfg, paths, &models)?;
    stage.finish()
}

/// Every scheduled checkpoint at full depth on every test set.
pub fn batches_table(cfg: &RunConfig, paths: &RunPaths, sets: &[LoadedTestSet<'_>], hash: &str) -> Result<Vec<BatchRow>, HarnessError> {
    let mut schedule = cfg.finetune.schedule.clone();
    schedule.sort_unstable();
    schedule.dedup();
    let checkpoints = schedule
        .iter()
        .map(|&b| Ok((b, load_model(cfg, &paths.finetuned(b))?)))
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let pairs: Vec<(&TestSet, &[TestSlot<'_>])> = sets.iter().map(|s| (&s.set, s.slots.as_slice())).collect();
    let deep = cfg.eval.deep_iters;
    Ok(batch_sweep(&checkpoints, &pairs, deep, hash)?
        .iter()
        .map(|(b, r)| BatchRow::new(*b, deep, r, cfg.seed))
        .collect())
}

/// BLER against effective SNR for the reference and both neural depths.
pub fn snr_table(
    cfg: &RunConfig,
    models: &[(&str, &NrxModel<f32>)],
    set: &LoadedTestSet<'_>,
    hash: &str,
) -> Result<Vec<SnrRow>, HarnessError> {
    let alphas = alpha_grid(mean_gamma(&set.slots), cfg.eval.snr_lo_db, cfg.eval.snr_hi_db, cfg.eval.snr_points);
    let seed = sitefit_core::seed::mix(&[cfg.seed, stream::INJECTION]);
    let mut rows = Vec::new();
    let mmse = MmseReceiver::new(&cfg.grid);
    for p in snr_sweep(&mmse, &set.slots, &set.set, &alphas, seed, hash)? {
        rows.push(SnrRow::new(&p, cfg.seed));
    }
    for (name, model) in models {
        for it in [cfg.eval.shallow_iters, cfg.eval.deep_iters] {
            let rx = NrxReceiver::new((*model).clone(), it, &format!("{name}-{it}it"))?;
            for p in snr_sweep(&rx, &set.slots, &set.set, &alphas, seed, hash)? {
                rows.push(SnrRow::new(&p, cfg.seed));
            }
        }
    }
    Ok(rows)
}

/// Digest of one output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Digests of every deterministic output under the run root, sorted by path.
pub fn digest_outputs(root: &Path) -> Result<Vec<FileDigest>, HarnessError> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).map_err(|e| HarnessError::io(&dir, e))? {
            let p = entry.map_err(|e| HarnessError::io(&dir, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push(p);
            }
        }
    }
    let mut out = Vec::new();
    for p in files {
        let rel = p.strip_prefix(root).expect("under root").to_string_lossy().replace('\\', "/");
        if NONDETERMINISTIC.contains(&rel.as_str()) {
            continue;
        }
        let bytes = std::fs::read(&p).map_err(|e| HarnessError::io(&p, e))?;
        out.push(FileDigest {
            path: rel,
            bytes: bytes.len() as u64,
            sha256: Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect(),
        });
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

/// Runs every stage, skipping up-to-date ones, and writes `manifest.json`.
pub fn run_pipeline(cfg: &RunConfig, root: &Path, log: Log) -> Result<Vec<FileDigest>, HarnessError> {
    cfg.validate()?;
    let paths = RunPaths::new(root);
    write_text(&paths.config(), &cfg.to_toml())?;
    stage_generate(cfg, &paths, log)?;
    stage_extract(cfg, &paths, log)?;
    stage_testsets(cfg, &paths, log)?;
    stage_pretrain(cfg, &paths, log)?;
    stage_finetune(cfg, &paths, log)?;
    stage_evaluate(cfg, &paths, log)?;
    let digests = digest_outputs(root)?;
    write_json(&root.join("manifest.json"), &digests)?;
    Ok(digests)
}
