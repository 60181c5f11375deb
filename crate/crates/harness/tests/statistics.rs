use proptest::prelude::*;
use sitefit_harness::bler::{wilson_interval, BlerReport, Z95};
use sitefit_harness::snr::{alpha_grid, db, effective_snr, from_db, inject_noise, snr_at_bler, NoiseInjectionConfig};
use sitefit_harness::testset::{TestSet, TestSlotId, TESTSET_FORMAT, TESTSET_VERSION};
use sitefit_core::grid::ResourceGrid;
use sitefit_core::seed::rng_for;

/// Wilson bounds as the roots of `(p - x)^2 = z^2 x (1 - x) / n`.
fn wilson_by_roots(k: u64, n: u64, z: f64) -> (f64, f64) {
    let (p, n) = (k as f64 / n as f64, n as f64);
    let a = 1.0 + z * z / n;
    let b = -(2.0 * p + z * z / n);
    let c = p * p;
    let d = (b * b - 4.0 * a * c).sqrt();
    ((-b - d) / (2.0 * a), (-b + d) / (2.0 * a))
}

#[test]
fn wilson_matches_quadratic_roots() {
    for (k, n) in [(10, 100), (1, 1000), (100, 1000), (37, 50), (999, 1000)] {
        let (lo, hi) = wilson_interval(k, n, Z95);
        let (rlo, rhi) = wilson_by_roots(k, n, Z95);
        assert!((lo - rlo).abs() < 1e-12 && (hi - rhi).abs() < 1e-12, "{k}/{n}");
    }
    // Tabulated value for 10 of 100.
    let (lo, hi) = wilson_interval(10, 100, Z95);
    assert!((lo - 0.0552).abs() < 5e-5 && (hi - 0.1744).abs() < 5e-5);
}

#[test]
fn wilson_edges_are_exact() {
    assert_eq!(wilson_interval(0, 50, Z95).0, 0.0);
    assert_eq!(wilson_interval(50, 50, Z95).1, 1.0);
    assert_eq!(wilson_interval(0, 0, Z95), (0.0, 1.0));
}

fn test_set(pass: &[bool]) -> TestSet {
    let slots: Vec<TestSlotId> = pass
        .iter()
        .enumerate()
        .map(|(i, &p)| TestSlotId {
            slot_id: i as u64,
            reference_pass: p,
        })
        .collect();
    let n_pass = pass.iter().filter(|&&p| p).count();
    TestSet {
        format: TESTSET_FORMAT.into(),
        version: TESTSET_VERSION,
        name: "t".into(),
        campaign: "c".into(),
        seed: 0,
        n_pass,
        n_fail: pass.len() - n_pass,
        slots,
    }
}

#[test]
fn report_counts_per_class() {
    let t = test_set(&[true, true, false, false, true]);
    let r = BlerReport::from_outcomes("rx", &t, &[true, false, false, true, true], "h");
    assert_eq!((r.n_slots, r.n_errors), (5, 2));
    assert_eq!((r.pass_class.n_slots, r.pass_class.n_errors), (3, 1));
    assert_eq!((r.fail_class.n_slots, r.fail_class.n_errors), (2, 1));
    assert_eq!(r.bler, 0.4);
}

#[test]
fn effective_snr_examples() {
    let g = 5.0119;
    assert_eq!(effective_snr(g, 0.0).unwrap(), g);
    let s = effective_snr(g, 0.2).unwrap();
    assert!((s - 2.2757).abs() < 1e-4, "{s}");
    assert!((db(s) - 3.57).abs() < 5e-3);
    assert!(effective_snr(g, 1e12).unwrap() < 1e-11);
    assert!(effective_snr(0.0, 0.1).is_err());
    assert!(effective_snr(g, -0.1).is_err());
}

#[test]
fn alpha_grid_hits_targets() {
    let g = from_db(7.3);
    let alphas = alpha_grid(g, 1.0, 7.0, 10);
    assert_eq!(alphas.len(), 11);
    assert_eq!(alphas[0], 0.0);
    for (i, &a) in alphas[1..].iter().enumerate() {
        let target = 7.0 - 6.0 * i as f64 / 9.0;
        assert!((db(effective_snr(g, a).unwrap()) - target).abs() < 1e-9);
    }
    // Targets above the operating point need no noise.
    assert_eq!(alpha_grid(from_db(5.0), 1.0, 7.0, 10).len(), 7);
}

#[test]
fn threshold_readout_interpolates_in_db() {
    let curve = [(1.0, 0.9), (2.0, 0.5), (3.0, 0.2), (4.0, 0.05)];
    let s = snr_at_bler(&curve, 0.25).unwrap();
    assert!((s - (2.0 + 0.25 / 0.3)).abs() < 1e-12);
    assert_eq!(snr_at_bler(&curve, 0.01), None);
    assert_eq!(snr_at_bler(&[(1.0, 0.1), (2.0, 0.0)], 0.25), None);
    // A bump below the threshold does not count as reaching it.
    let bumpy = [(1.0, 0.8), (2.0, 0.2), (3.0, 0.3), (4.0, 0.1)];
    assert!((snr_at_bler(&bumpy, 0.25).unwrap() - 3.25).abs() < 1e-12);
}

#[test]
fn injection_preserves_the_signal_component() {
    let y = ResourceGrid::zeros(4, 14, 192);
    let mut rng = rng_for(&[3]);
    let cfg = NoiseInjectionConfig::new(0.3, 2.0, 0.5).unwrap();
    let yt = inject_noise(&y, cfg.nz(), &mut rng);
    let n = yt.samples().len() as f64;
    let mean = yt.samples().iter().fold(num_complex::Complex64::new(0.0, 0.0), |acc, v| {
        acc + num_complex::Complex64::new(f64::from(v.re), f64::from(v.im))
    }) / n;
    let var = yt.samples().iter().map(|v| f64::from(v.norm_sqr())).sum::<f64>() / n;
    assert!(mean.norm() < 4.0 * (cfg.nz() / n).sqrt(), "mean {mean}");
    assert!((var / cfg.nz() - 1.0).abs() < 4.0 / n.sqrt(), "var {var} vs {}", cfg.nz());
    // No injection leaves the grid untouched.
    let same = inject_noise(&yt, 0.0, &mut rng);
    assert_eq!(same, yt);
}

proptest! {
    #[test]
    fn wilson_contains_estimate(n in 1u64..5000, frac in 0.0f64..=1.0) {
        let k = ((n as f64) * frac).floor() as u64;
        let (lo, hi) = wilson_interval(k, n, Z95);
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
    }

    #[test]
    fn effective_snr_algebra(g_db in -10.0f64..30.0, a in 0.0f64..10.0, da in 1e-6f64..1.0) {
        let g = from_db(g_db);
        let s = effective_snr(g, a).unwrap();
        prop_assert!((s * (1.0 + a * (g + 1.0)) - g).abs() <= 1e-12 * g);
        prop_assert!(effective_snr(g, a + da).unwrap() < s);
        prop_assert_eq!(effective_snr(g, 0.0).unwrap(), g);
    }
}
