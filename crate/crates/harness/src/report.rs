//! CSV tables, one per experiment, with a fixed column order.
//!
//! Every row carries the configuration hash and seed of the run. Loading
//! checks the header and that BLER values and intervals are consistent.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bler::BlerReport;
use crate::error::HarnessError;
use crate::snr::SnrPoint;

pub trait CsvRow: Serialize + DeserializeOwned {
    const HEADER: &'static [&'static str];

    fn bler_fields(&self) -> Option<(f64, f64, f64)> {
        None
    }
}

fn check_bler(bler: f64, lo: f64, hi: f64) -> Result<(), String> {
    if !(0.0..=1.0).contains(&bler) {
        return Err(format!("BLER {bler} outside [0, 1]"));
    }
    if !(0.0 <= lo && lo <= bler && bler <= hi && hi <= 1.0) {
        return Err(format!("interval [{lo}, {hi}] does not contain BLER {bler}"));
    }
    Ok(())
}

/// Dataset BLER per receiver and test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlerRow {
    pub config_hash: String,
    pub seed: u64,
    pub receiver: String,
    pub test_set: String,
    pub n_slots: u64,
    pub n_errors: u64,
    pub bler: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub pass_class_errors: u64,
    pub fail_class_errors: u64,
}

impl BlerRow {
    pub fn new(r: &BlerReport, seed: u64) -> Self {
        Self {
            config_hash: r.config_hash.clone(),
            seed,
            receiver: r.receiver.clone(),
            test_set: r.test_set.clone(),
            n_slots: r.n_slots,
            n_errors: r.n_errors,
            bler: r.bler,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
            pass_class_errors: r.pass_class.n_errors,
            fail_class_errors: r.fail_class.n_errors,
        }
    }
}

impl CsvRow for BlerRow {
    const HEADER: &'static [&'static str] = &[
        "config_hash",
        "seed",
        "receiver",
        "test_set",
        "n_slots",
        "n_errors",
        "bler",
        "ci_low",
        "ci_high",
        "pass_class_errors",
        "fail_class_errors",
    ];

    fn bler_fields(&self) -> Option<(f64, f64, f64)> {
        Some((self.bler, self.ci_low, self.ci_high))
    }
}

/// BLER against the number of receiver iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthRow {
    pub config_hash: String,
    pub seed: u64,
    pub model: String,
    pub test_set: String,
    pub n_iters: usize,
    pub n_slots: u64,
    pub n_errors: u64,
    pub bler: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl DepthRow {
    pub fn new(model: &str, n_iters: usize, r: &BlerReport, seed: u64) -> Self {
        Self {
            config_hash: r.config_hash.clone(),
            seed,
            model: model.into(),
            test_set: r.test_set.clone(),
            n_iters,
            n_slots: r.n_slots,
            n_errors: r.n_errors,
            bler: r.bler,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
        }
    }
}

impl CsvRow for DepthRow {
    const HEADER: &'static [&'static str] = &[
        "config_hash",
        "seed",
        "model",
        "test_set",
        "n_iters",
        "n_slots",
        "n_errors",
        "bler",
        "ci_low",
        "ci_high",
    ];

    fn bler_fields(&self) -> Option<(f64, f64, f64)> {
        Some((self.bler, self.ci_low, self.ci_high))
    }
}

/// BLER against the number of finetuning batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub config_hash: String,
    pub seed: u64,
    pub test_set: String,
    pub n_iters: usize,
    pub batches: u64,
    pub n_slots: u64,
    pub n_errors: u64,
    pub bler: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl BatchRow {
    pub fn new(batches: u64, n_iters: usize, r: &BlerReport, seed: u64) -> Self {
        Self {
            config_hash: r.config_hash.clone(),
            seed,
            test_set: r.test_set.clone(),
            n_iters,
            batches,
            n_slots: r.n_slots,
            n_errors: r.n_errors,
            bler: r.bler,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
        }
    }
}

impl CsvRow for BatchRow {
    const HEADER: &'static [&'static str] = &[
        "config_hash",
        "seed",
        "test_set",
        "n_iters",
        "batches",
        "n_slots",
        "n_errors",
        "bler",
        "ci_low",
        "ci_high",
    ];

    fn bler_fields(&self) -> Option<(f64, f64, f64)> {
        Some((self.bler, self.ci_low, self.ci_high))
    }
}

/// BLER against effective SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrRow {
    pub config_hash: String,
    pub seed: u64,
    pub receiver: String,
    pub test_set: String,
    pub alpha: f64,
    pub gamma_db: f64,
    pub snr_eff_db: f64,
    pub snr_jitter_db: f64,
    pub n_slots: u64,
    pub n_errors: u64,
    pub bler: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl SnrRow {
    pub fn new(p: &SnrPoint, seed: u64) -> Self {
        let r = &p.report;
        Self {
            config_hash: r.config_hash.clone(),
            seed,
            receiver: r.receiver.clone(),
            test_set: r.test_set.clone(),
            alpha: p.alpha,
            gamma_db: p.gamma_db,
            snr_eff_db: p.snr_eff_db,
            snr_jitter_db: p.snr_jitter_db,
            n_slots: r.n_slots,
            n_errors: r.n_errors,
            bler: r.bler,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
        }
    }
}

impl CsvRow for SnrRow {
    const HEADER: &'static [&'static str] = &[
        "config_hash",
        "seed",
        "receiver",
        "test_set",
        "alpha",
        "gamma_db",
        "snr_eff_db",
        "snr_jitter_db",
        "n_slots",
        "n_errors",
        "bler",
        "ci_low",
        "ci_high",
    ];

    fn bler_fields(&self) -> Option<(f64, f64, f64)> {
        Some((self.bler, self.ci_low, self.ci_high))
    }
}

/// Forward-pass wall clock per depth; varies between runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub config_hash: String,
    pub seed: u64,
    pub model: String,
    pub n_iters: usize,
    pub ms_per_slot: f64,
}

impl CsvRow for LatencyRow {
    const HEADER: &'static [&'static str] = &["config_hash", "seed", "model", "n_iters", "ms_per_slot"];
}

/// Mean training loss over the batches since the previous row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub config_hash: String,
    pub seed: u64,
    pub stage: String,
    pub batches: u64,
    pub mean_loss: Option<f64>,
}

impl CsvRow for TraceRow {
    const HEADER: &'static [&'static str] = &["config_hash", "seed", "stage", "batches", "mean_loss"];
}

pub fn csv_bytes<T: CsvRow>(rows: &[T]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(T::HEADER).expect("in-memory write");
    for r in rows {
        w.serialize(r).expect("row serializes");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn write_csv<T: CsvRow>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    std::fs::write(path, csv_bytes(rows)).map_err(|e| HarnessError::io(path, e))
}

pub fn read_csv<T: CsvRow>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    parse_csv(&bytes, path)
}

pub fn parse_csv<T: CsvRow>(bytes: &[u8], path: &Path) -> Result<Vec<T>, HarnessError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = r.headers().map_err(|e| HarnessError::invalid(path, e.to_string()))?;
    if header.iter().ne(T::HEADER.iter().copied()) {
        return Err(HarnessError::invalid(
            path,
            format!("header {:?} does not match {:?}", header.iter().collect::<Vec<_>>(), T::HEADER),
        ));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize::<T>().enumerate() {
        let row = rec.map_err(|e| HarnessError::invalid(path, format!("row {}: {e}", i + 1)))?;
        if let Some((b, lo, hi)) = row.bler_fields() {
            check_bler(b, lo, hi).map_err(|e| HarnessError::invalid(path, format!("row {}: {e}", i + 1)))?;
        }
        rows.push(row);
    }
    Ok(rows)
}
