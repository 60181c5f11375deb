use std::cell::RefCell;
use std::path::PathBuf;
use std::sync::OnceLock;

use sitefit_core::classic::{Receiver, SlotContext};
use sitefit_core::grid::ResourceGrid;
use sitefit_core::link::StoreReader;
use sitefit_core::PhyError;
use sitefit_harness::bler::{dataset_bler, load_test_slots};
use sitefit_harness::pipeline::{self, digest_outputs, load_model, run_pipeline, RunPaths};
use sitefit_harness::report::{csv_bytes, parse_csv, read_csv, BatchRow, BlerRow, DepthRow, SnrRow};
use sitefit_harness::sweep::depth_sweep;
use sitefit_harness::testset::{build_test_set, TestSet};
use sitefit_harness::{HarnessError, RunConfig};
use sitefit_nrx::NrxReceiver;

fn run_dir(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

/// One tiny run shared by the tests of this file.
fn tiny_run() -> &'static PathBuf {
    static RUN: OnceLock<PathBuf> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = run_dir("tiny-a");
        run_pipeline(&RunConfig::tiny(), &dir, &|_| {}).expect("tiny pipeline runs");
        dir
    })
}

#[test]
fn rerun_is_byte_identical_and_cached() {
    let a = digest_outputs(tiny_run()).unwrap();
    let b_dir = run_dir("tiny-b");
    let b = run_pipeline(&RunConfig::tiny(), &b_dir, &|_| {}).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().any(|d| d.path == "checkpoints/pretrained.nrxw"));
    assert!(a.iter().any(|d| d.path == "reports/snr.csv"));
    assert!(a.iter().any(|d| d.path == "stores/test-ue1/fh.bin"));

    let msgs = RefCell::new(Vec::new());
    run_pipeline(&RunConfig::tiny(), &b_dir, &|m| msgs.borrow_mut().push(m.to_string())).unwrap();
    let msgs = msgs.into_inner();
    assert_eq!(msgs.len(), 6);
    assert!(msgs.iter().all(|m| m.ends_with("up to date")), "{msgs:?}");
}

#[test]
fn reference_receiver_reproduces_its_selection() {
    let cfg = RunConfig::tiny();
    let rows = read_csv::<BlerRow>(&RunPaths::new(tiny_run()).report("bler.csv")).unwrap();
    let n = (cfg.test_set.n_pass + cfg.test_set.n_fail) as u64;
    for ue in &cfg.campaigns.test_ues {
        let r = rows
            .iter()
            .find(|r| r.receiver == "mmse" && r.test_set == format!("test-{ue}"))
            .unwrap();
        assert_eq!((r.n_slots, r.n_errors), (n, cfg.test_set.n_fail as u64));
        assert_eq!((r.pass_class_errors, r.fail_class_errors), (0, cfg.test_set.n_fail as u64));
    }
    let h = cfg.config_hash().unwrap();
    assert!(rows.iter().all(|r| r.config_hash == h && r.seed == cfg.seed));
}

#[test]
fn tables_agree_with_each_other() {
    let cfg = RunConfig::tiny();
    let paths = RunPaths::new(tiny_run());
    let depth = read_csv::<DepthRow>(&paths.report("depth.csv")).unwrap();
    let batches = read_csv::<BatchRow>(&paths.report("batches.csv")).unwrap();
    let snr = read_csv::<SnrRow>(&paths.report("snr.csv")).unwrap();
    let bler = read_csv::<BlerRow>(&paths.report("bler.csv")).unwrap();
    let deep = cfg.eval.deep_iters;
    for ue in &cfg.campaigns.test_ues {
        let set = format!("test-{ue}");
        let d = |model: &str| depth.iter().find(|r| r.model == model && r.n_iters == deep && r.test_set == set).unwrap();
        let b = |n: u64| batches.iter().find(|r| r.batches == n && r.test_set == set).unwrap();
        // Checkpoint 0 is the pretrained model, the last one the finetuned.
        assert_eq!(b(0).n_errors, d("pretrained").n_errors);
        assert_eq!(b(cfg.finetune.batches).n_errors, d("finetuned").n_errors);
    }
    // The zero-injection point of each curve is the plain dataset BLER.
    for r in snr.iter().filter(|r| r.alpha == 0.0) {
        let base = bler.iter().find(|b| b.receiver == r.receiver && b.test_set == r.test_set).unwrap();
        assert_eq!(r.n_errors, base.n_errors, "{}", r.receiver);
    }
    let n_alpha = snr.iter().filter(|r| r.receiver == "mmse").count();
    assert!(n_alpha > 1);
    assert_eq!(snr.len(), 5 * n_alpha);
}

#[test]
fn truncated_depths_match_independent_passes() {
    let cfg = RunConfig::tiny();
    let paths = RunPaths::new(tiny_run());
    let model = load_model(&cfg, &paths.finetuned(cfg.finetune.batches)).unwrap();
    let store = StoreReader::open(&paths.store("test-ue1")).unwrap();
    let set = TestSet::load(&paths.testset("ue1")).unwrap();
    let slots = load_test_slots(&store, &set).unwrap();
    let sweep = depth_sweep(&model, "m", &slots, &set, cfg.model.max_iters, "h").unwrap();
    for (k, r) in sweep.iter().enumerate() {
        let rx = NrxReceiver::new(model.clone(), k + 1, "m").unwrap();
        assert_eq!(r.n_errors, dataset_bler(&rx, &slots, &set, "h").n_errors, "depth {}", k + 1);
    }
}

struct ZeroLlrs;

impl Receiver for ZeroLlrs {
    fn name(&self) -> &str {
        "zero"
    }

    fn llrs(&self, _: &ResourceGrid, ctx: &SlotContext) -> Result<Vec<f32>, PhyError> {
        Ok(vec![0.0; ctx.codec.rate_matched_len])
    }
}

/// Confident LLRs of one slot's transmitted coded bits.
struct Oracle(Vec<u8>);

impl Receiver for Oracle {
    fn name(&self) -> &str {
        "oracle"
    }

    fn llrs(&self, _: &ResourceGrid, _: &SlotContext) -> Result<Vec<f32>, PhyError> {
        Ok(self.0.iter().map(|&b| if b == 0 { 10.0 } else { -10.0 }).collect())
    }
}

#[test]
fn trivial_receivers_bound_the_metric() {
    let paths = RunPaths::new(tiny_run());
    let store = StoreReader::open(&paths.store("test-ue0")).unwrap();
    let set = TestSet::load(&paths.testset("ue0")).unwrap();
    let slots = load_test_slots(&store, &set).unwrap();
    assert_eq!(dataset_bler(&ZeroLlrs, &slots, &set, "h").bler, 1.0);
    // The oracle decodes each slot from its own transmitted bits.
    let mut errors = 0;
    for (s, id) in slots.iter().zip(&set.slots) {
        let truth = store.truth_for(id.slot_id).unwrap();
        let oracle = Oracle(truth.tx_coded_bits.0.clone());
        errors += u64::from(!oracle.receive(&s.rx, &s.ctx).unwrap().crc.is_pass());
    }
    assert_eq!(errors, 0);
}

#[test]
fn test_sets_are_disjoint_and_exact() {
    let cfg = RunConfig::tiny();
    let paths = RunPaths::new(tiny_run());
    let store = StoreReader::open(&paths.store("test-ue0")).unwrap();
    let set = TestSet::load(&paths.testset("ue0")).unwrap();
    assert_eq!((set.n_pass, set.n_fail), (cfg.test_set.n_pass, cfg.test_set.n_fail));
    let again = build_test_set("test-ue0", "test-ue0", &store.fapi, set.n_pass, set.n_fail, &Default::default(), set.seed).unwrap();
    assert_eq!(again, set);
    let taken = set.slot_ids();
    assert!(matches!(set.check_disjoint(&taken), Err(HarnessError::Overlap { .. })));
    let other = build_test_set("x", "test-ue0", &store.fapi, 5, 1, &taken, 3).unwrap();
    other.check_disjoint(&taken).unwrap();
    assert!(build_test_set("x", "test-ue0", &store.fapi, 10_000, 1, &taken, 3).is_err());
}

#[test]
fn saved_test_sets_are_validated() {
    let paths = RunPaths::new(tiny_run());
    let mut set = TestSet::load(&paths.testset("ue0")).unwrap();
    set.n_fail += 1;
    let bad = run_dir("bad-testset.json");
    set.save(&bad).unwrap();
    assert!(TestSet::load(&bad).is_err());
}

#[test]
fn csv_tables_validate_on_load() {
    let empty = csv_bytes::<BlerRow>(&[]);
    assert_eq!(String::from_utf8(empty.clone()).unwrap().lines().count(), 1);
    assert!(parse_csv::<BlerRow>(&empty, "e.csv".as_ref()).unwrap().is_empty());
    let paths = RunPaths::new(tiny_run());
    let mut rows = read_csv::<BlerRow>(&paths.report("bler.csv")).unwrap();
    rows[0].bler = 1.5;
    let err = parse_csv::<BlerRow>(&csv_bytes(&rows), "b.csv".as_ref()).unwrap_err();
    assert!(err.to_string().contains("b.csv"));
    assert!(parse_csv::<DepthRow>(&csv_bytes(&rows), "b.csv".as_ref()).is_err());
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = RunConfig::default();
    let back = RunConfig::from_toml(&cfg.to_toml(), "c.toml".as_ref()).unwrap();
    assert_eq!(back, cfg);
    let partial = RunConfig::from_toml("seed = 3\n[finetune]\nbatches = 100\nschedule = [0, 100]\n", "p.toml".as_ref()).unwrap();
    assert_eq!(partial.finetune.lr, cfg.finetune.lr);
    assert_eq!(partial.seed, 3);
    assert!(RunConfig::from_toml("bogus = 1\n", "b.toml".as_ref()).is_err());
    assert!(RunConfig::from_toml("[finetune]\nschedule = [0, 5]\n", "s.toml".as_ref()).is_err());
    assert_ne!(partial.config_hash().unwrap(), cfg.config_hash().unwrap());
    assert_eq!(cfg.pretrain_key(), RunConfig { seed: 7, ..cfg.clone() }.pretrain_key());
    let _ = pipeline::campaign_configs(&cfg).unwrap();
}
