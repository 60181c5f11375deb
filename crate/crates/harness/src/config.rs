//! Run configuration (TOML) with desk-scale defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sitefit_core::channel::{ScenarioConfig, UeProfile};
use sitefit_core::grid::GridConfig;
use sitefit_core::seed::mix;
use sitefit_nrx::NrxConfig;

use crate::error::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Built-in site preset.
    pub scenario: String,
    /// Scenario file overriding `scenario`.
    pub scenario_file: Option<PathBuf>,
    pub grid: GridConfig,
    pub code_rate: f64,
    pub campaigns: CampaignPlan,
    pub dataset: DatasetPlan,
    pub test_set: TestSetPlan,
    pub model: NrxConfig,
    pub pretrain: PretrainPlan,
    pub finetune: FinetunePlan,
    pub eval: EvalPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignPlan {
    /// UE profile of the finetuning capture.
    pub train_ue: String,
    pub train_slots: u64,
    /// One test capture per UE profile.
    pub test_ues: Vec<String>,
    pub test_slots: u64,
    /// Campaign `k` (training is 0) starts at slot id `k * slot_stride`.
    pub slot_stride: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetPlan {
    pub n_slots: usize,
    pub fail_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TestSetPlan {
    pub n_pass: usize,
    pub n_fail: usize,
    /// UE whose test set the headline comparisons use.
    pub primary_ue: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainPlan {
    pub batches: u64,
    pub batch_size: usize,
    pub lr: f64,
    /// Loss trace granularity.
    pub log_every: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetunePlan {
    pub batches: u64,
    pub batch_size: usize,
    pub lr: f64,
    /// Batch counts at which checkpoints are kept.
    pub schedule: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalPlan {
    pub shallow_iters: usize,
    pub deep_iters: usize,
    pub bler_threshold: f64,
    pub snr_lo_db: f64,
    pub snr_hi_db: f64,
    pub snr_points: usize,
    pub latency_probe_slots: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            scenario: "small-lab".into(),
            scenario_file: None,
            grid: GridConfig::default(),
            code_rate: 0.6,
            campaigns: CampaignPlan::default(),
            dataset: DatasetPlan::default(),
            test_set: TestSetPlan::default(),
            model: NrxConfig::default(),
            pretrain: PretrainPlan::default(),
            finetune: FinetunePlan::default(),
            eval: EvalPlan::default(),
        }
    }
}

impl Default for CampaignPlan {
    fn default() -> Self {
        Self {
            train_ue: "ue0".into(),
            train_slots: 4000,
            test_ues: vec!["ue0".into(), "ue1".into()],
            test_slots: 2000,
            slot_stride: 1_000_000,
        }
    }
}

impl Default for DatasetPlan {
    fn default() -> Self {
        Self {
            n_slots: 2000,
            fail_fraction: 0.1,
        }
    }
}

impl Default for TestSetPlan {
    fn default() -> Self {
        Self {
            n_pass: 900,
            n_fail: 100,
            primary_ue: "ue1".into(),
        }
    }
}

impl Default for PretrainPlan {
    fn default() -> Self {
        Self {
            batches: 20_000,
            batch_size: 32,
            lr: 1e-3,
            log_every: 500,
        }
    }
}

impl Default for FinetunePlan {
    fn default() -> Self {
        Self {
            batches: 10_000,
            batch_size: 32,
            lr: 3e-4,
            schedule: vec![0, 10, 100, 300, 1000, 3000, 10_000],
        }
    }
}

impl Default for EvalPlan {
    fn default() -> Self {
        Self {
            shallow_iters: 2,
            deep_iters: 8,
            bler_threshold: 0.25,
            snr_lo_db: 1.0,
            snr_hi_db: 7.0,
            snr_points: 10,
            latency_probe_slots: 20,
        }
    }
}

pub fn sha256_json<T: Serialize + ?Sized>(v: &T) -> String {
    let bytes = serde_json::to_vec(v).expect("config serializes");
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunConfig {
    /// A configuration small enough for unit and determinism tests.
    pub fn tiny() -> Self {
        Self {
            seed: 11,
            grid: GridConfig::new(4, 2).expect("valid grid"),
            code_rate: 0.6,
            campaigns: CampaignPlan {
                train_slots: 160,
                test_slots: 120,
                ..CampaignPlan::default()
            },
            dataset: DatasetPlan {
                n_slots: 40,
                fail_fraction: 0.1,
            },
            test_set: TestSetPlan {
                n_pass: 20,
                n_fail: 4,
                primary_ue: "ue1".into(),
            },
            model: NrxConfig {
                n_rx: 2,
                state: 8,
                max_iters: 3,
            },
            pretrain: PretrainPlan {
                batches: 6,
                batch_size: 4,
                lr: 1e-3,
                log_every: 2,
            },
            finetune: FinetunePlan {
                batches: 6,
                batch_size: 4,
                lr: 1e-3,
                schedule: vec![0, 2, 6],
            },
            eval: EvalPlan {
                shallow_iters: 1,
                deep_iters: 3,
                snr_points: 3,
                latency_probe_slots: 2,
                ..EvalPlan::default()
            },
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str, path: &Path) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::invalid(path, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text, path)
    }

    /// Full configuration with every default spelled out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        self.grid.validate()?;
        self.model.validate()?;
        if self.model.n_rx != self.grid.n_rx {
            return bad(format!("model has {} inputs antennas, grid has {}", self.model.n_rx, self.grid.n_rx));
        }
        if self.grid.n_blocks() == 0 {
            return bad(format!("{} PRBs hold no 4-PRB block", self.grid.n_prb));
        }
        let c = &self.campaigns;
        for ue in std::iter::once(&c.train_ue).chain(&c.test_ues) {
            if UeProfile::preset(ue).is_none() {
                return bad(format!("unknown UE profile {ue:?}"));
            }
        }
        if !c.test_ues.contains(&self.test_set.primary_ue) {
            return bad(format!("primary UE {:?} has no test campaign", self.test_set.primary_ue));
        }
        if c.train_slots > c.slot_stride || c.test_slots > c.slot_stride {
            return bad(format!("campaigns longer than the slot stride {} would share slot ids", c.slot_stride));
        }
        if c.test_ues.iter().enumerate().any(|(i, u)| c.test_ues[..i].contains(u)) {
            return bad("test UEs must be distinct".into());
        }
        for (name, it) in [("shallow", self.eval.shallow_iters), ("deep", self.eval.deep_iters)] {
            if !(1..=self.model.max_iters).contains(&it) {
                return bad(format!("{name} depth {it} outside 1..={}", self.model.max_iters));
            }
        }
        if !(0.0..=1.0).contains(&self.dataset.fail_fraction) {
            return bad(format!("fail fraction {} outside [0, 1]", self.dataset.fail_fraction));
        }
        if let Some(&last) = self.finetune.schedule.iter().max() {
            if last > self.finetune.batches {
                return bad(format!("checkpoint {last} beyond {} finetuning batches", self.finetune.batches));
            }
        }
        if !self.finetune.schedule.contains(&self.finetune.batches) {
            return bad("the finetuning schedule must include the final batch count".into());
        }
        if self.pretrain.log_every == 0 || self.pretrain.batch_size == 0 || self.finetune.batch_size == 0 {
            return bad("batch sizes and log interval must be positive".into());
        }
        if self.eval.snr_points == 0 || self.eval.snr_lo_db >= self.eval.snr_hi_db {
            return bad("SNR grid needs at least one point and lo < hi".into());
        }
        self.scenario_config()?;
        Ok(())
    }

    /// Site scenario with the run seed folded into its channel seed.
    pub fn scenario_config(&self) -> Result<ScenarioConfig, HarnessError> {
        let base = match &self.scenario_file {
            Some(p) => ScenarioConfig::from_file(p)?,
            None => ScenarioConfig::preset(&self.scenario)?,
        };
        let seed = mix(&[self.seed, base.seed]);
        Ok(base.with_seed(seed))
    }

    /// Hash of the whole resolved configuration.
    pub fn config_hash(&self) -> Result<String, HarnessError> {
        Ok(sha256_json(&(self, self.scenario_config()?)))
    }

    pub fn campaigns_key(&self) -> Result<String, HarnessError> {
        Ok(sha256_json(&(
            "campaigns",
            self.seed,
            self.scenario_config()?,
            self.grid,
            self.code_rate,
            &self.campaigns,
        )))
    }

    pub fn dataset_key(&self) -> Result<String, HarnessError> {
        Ok(sha256_json(&("dataset", self.campaigns_key()?, &self.dataset)))
    }

    pub fn testset_key(&self) -> Result<String, HarnessError> {
        Ok(sha256_json(&("testsets", self.dataset_key()?, &self.test_set)))
    }

    pub fn pretrain_key(&self) -> String {
        sha256_json(&("pretrain", self.seed, self.grid, self.model, &self.pretrain))
    }

    pub fn finetune_key(&self) -> Result<String, HarnessError> {
        Ok(sha256_json(&("finetune", self.pretrain_key(), self.dataset_key()?, &self.finetune)))
    }

    pub fn eval_key(&self) -> Result<String, HarnessError> {
        Ok(sha256_json(&("eval", self.finetune_key()?, self.testset_key()?, &self.eval)))
    }
}
