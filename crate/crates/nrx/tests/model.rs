use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sitefit_core::grid::GridConfig;
use sitefit_nrx::checkpoint::{decode_checkpoint, encode_checkpoint};
use sitefit_nrx::conv::{self, Epilogue};
use sitefit_nrx::layout::{Act, Layout};
use sitefit_nrx::loss::{bce, multi_loss, multi_loss_grad};
use sitefit_nrx::{Backend, NrxConfig, NrxError, NrxInput, NrxModel, Provenance};

fn random_grids(n: usize, len: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect()).collect()
}

fn random_act(layout: Layout, c: usize, seed: u64) -> Act<f32> {
    let grids = random_grids(layout.batch, c * layout.t * layout.f, seed);
    let refs: Vec<&[f32]> = grids.iter().map(|g| g.as_slice()).collect();
    Act::from_grids(layout, c, &refs)
}

fn close(a: &[f32], b: &[f32], tol: f32) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol * (1.0 + y.abs()), "index {i}: {x} vs {y}");
    }
}

#[test]
fn simd_and_portable_convolutions_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (batch, t, f, cin, cout, taps) in [(3, 14, 48, 19, 32, 9), (1, 14, 192, 32, 32, 9), (2, 5, 7, 8, 16, 1), (2, 14, 12, 32, 8, 9)] {
        let l = Layout::new(batch, t, f);
        let x = random_act(l, cin, rng.random());
        let w: Vec<f32> = (0..cout * cin * taps).map(|_| rng.random_range(-0.3..0.3)).collect();
        let b: Vec<f32> = (0..cout).map(|_| rng.random_range(-0.3..0.3)).collect();
        let mask = l.interior_mask::<f32>();
        for ep in [Epilogue::Store, Epilogue::StoreRelu, Epilogue::AddTo] {
            let mut fast = random_act(l, cout, 9);
            let mut slow = fast.clone();
            conv::forward(Backend::Auto, &w, Some(&b), taps, &x, &mut fast, &mask, ep);
            conv::forward(Backend::Portable, &w, Some(&b), taps, &x, &mut slow, &mask, ep);
            close(&fast.data, &slow.data, 1e-5);
        }
        let dout = {
            let mut d = random_act(l, cout, 17);
            for c in 0..cout {
                for (v, m) in d.cols_mut(c).iter_mut().zip(&mask) {
                    *v *= m;
                }
            }
            d
        };
        let (mut gw_fast, mut gb_fast) = (vec![0.5f32; w.len()], vec![0.25f32; cout]);
        let (mut gw_slow, mut gb_slow) = (gw_fast.clone(), gb_fast.clone());
        conv::backward_weight(Backend::Auto, &x, &dout, taps, &mut gw_fast, Some(&mut gb_fast));
        conv::backward_weight(Backend::Portable, &x, &dout, taps, &mut gw_slow, Some(&mut gb_slow));
        close(&gw_fast, &gw_slow, 1e-4);
        close(&gb_fast, &gb_slow, 1e-5);
        let mut di_fast = Act::zeros(l, cin);
        let mut di_slow = Act::zeros(l, cin);
        conv::backward_input(Backend::Auto, &w, taps, &dout, &mut di_fast, &mask, Epilogue::Store);
        conv::backward_input(Backend::Portable, &w, taps, &dout, &mut di_slow, &mask, Epilogue::Store);
        close(&di_fast.data, &di_slow.data, 1e-5);
    }
}

#[test]
fn adjoint_convolution_satisfies_inner_product_identity() {
    // <conv(x), y> == <x, conv^T(y)> on interior pixels.
    let l = Layout::new(2, 6, 9);
    let (cin, cout) = (3, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let w: Vec<f64> = (0..cout * cin * 9).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mask = l.interior_mask::<f64>();
    let fill = |c: usize, rng: &mut ChaCha8Rng| {
        let mut a = Act::<f64>::zeros(l, c);
        for ch in 0..c {
            for (v, m) in a.cols_mut(ch).iter_mut().zip(&mask) {
                *v = rng.random_range(-1.0..1.0) * m;
            }
        }
        a
    };
    let x = fill(cin, &mut rng);
    let y = fill(cout, &mut rng);
    let mut cx = Act::zeros(l, cout);
    conv::forward(Backend::Portable, &w, None, 9, &x, &mut cx, &mask, Epilogue::Store);
    let mut cty = Act::zeros(l, cin);
    conv::backward_input(Backend::Portable, &w, 9, &y, &mut cty, &mask, Epilogue::Store);
    let dot = |a: &Act<f64>, b: &Act<f64>| a.data.iter().zip(&b.data).map(|(p, q)| p * q).sum::<f64>();
    assert!((dot(&cx, &y) - dot(&x, &cty)).abs() < 1e-10);
}

struct Fixture {
    grids: Vec<Vec<f32>>,
    positions: Vec<(usize, usize)>,
    n_sc: usize,
}

impl Fixture {
    fn new(cfg: &NrxConfig, n_prb: usize, batch: usize, seed: u64) -> Self {
        let g = GridConfig::new(n_prb, cfg.n_rx).unwrap();
        Self {
            grids: random_grids(batch, cfg.n_inputs() * 14 * g.n_subcarriers(), seed),
            positions: g.data_positions(),
            n_sc: g.n_subcarriers(),
        }
    }

    fn input(&self) -> NrxInput<'_> {
        NrxInput {
            grids: self.grids.iter().map(|g| g.as_slice()).collect(),
            n_sym: 14,
            n_sc: self.n_sc,
            data_positions: &self.positions,
        }
    }
}

#[test]
fn simd_and_portable_models_agree_on_gradients() {
    let cfg = NrxConfig::default();
    let fast = NrxModel::<f32>::init(cfg, 1).unwrap();
    let slow = fast.clone().with_backend(Backend::Portable);
    let fx = Fixture::new(&cfg, 4, 3, 2);
    let n = 8;
    let mut tf = fast.forward_tape(&fx.input(), n).unwrap();
    let mut ts = slow.forward_tape(&fx.input(), n).unwrap();
    close(&tf.output.llrs, &ts.output.llrs, 1e-4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let labels: Vec<u8> = (0..tf.output.llrs.len() / n).map(|_| rng.random_range(0..2)).collect();
    let mask = vec![1u8; labels.len()];
    let (_, dl) = multi_loss_grad(&tf.output.llrs, n, &labels, &mask);
    let gf = fast.backward(&mut tf, &dl);
    let gs = slow.backward(&mut ts, &dl);
    let scale = gs.iter().fold(0f32, |a, v| a.max(v.abs()));
    for (i, (a, b)) in gf.iter().zip(&gs).enumerate() {
        assert!((a - b).abs() <= 1e-3 * scale, "param {i}: {a} vs {b}");
    }
}

#[test]
fn zero_weights_emit_the_readout_bias() {
    let cfg = NrxConfig::default();
    let mut m = NrxModel::<f32>::zeros(cfg).unwrap();
    let out_b = m.layout().out_b;
    m.params[out_b].copy_from_slice(&[0.5, -1.0, 2.0, 0.0]);
    let fx = Fixture::new(&cfg, 4, 2, 3);
    let out = m.forward(&fx.input(), 3).unwrap();
    for k in 1..=3 {
        for re in out.iteration(k).chunks_exact(4) {
            assert_eq!(re, &[0.5, -1.0, 2.0, 0.0]);
        }
    }
}

#[test]
fn iteration_count_is_validated() {
    let cfg = NrxConfig::default();
    let m = NrxModel::<f32>::init(cfg, 0).unwrap();
    let fx = Fixture::new(&cfg, 4, 1, 0);
    for n in [0, 9] {
        assert!(matches!(m.forward(&fx.input(), n), Err(NrxError::Iterations { .. })));
    }
    let mut bad = fx.input();
    bad.n_sc = 47;
    assert!(matches!(m.forward(&bad, 2), Err(NrxError::Shape(_))));
}

#[test]
fn shallow_output_is_a_prefix_of_deep_output() {
    let cfg = NrxConfig::default();
    let m = NrxModel::<f32>::init(cfg, 5).unwrap();
    let fx = Fixture::new(&cfg, 16, 1, 6);
    let deep = m.forward(&fx.input(), 8).unwrap();
    for k in 1..=8 {
        let shallow = m.forward(&fx.input(), k).unwrap();
        for j in 1..=k {
            assert_eq!(shallow.iteration(j), deep.iteration(j), "depth {k}, iteration {j}");
        }
    }
}

#[test]
fn batching_does_not_change_outputs() {
    let cfg = NrxConfig::default();
    let m = NrxModel::<f32>::init(cfg, 6).unwrap();
    let fx = Fixture::new(&cfg, 4, 3, 7);
    let all = m.forward(&fx.input(), 4).unwrap();
    for b in 0..3 {
        let mut one = fx.input();
        one.grids = vec![one.grids[b]];
        let single = m.forward(&one, 4).unwrap();
        close(single.get(4, 0), all.get(4, b), 1e-6);
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let cfg = NrxConfig::default();
    let m = NrxModel::<f32>::init(cfg, 7).unwrap();
    let prov = Provenance {
        stage: "init".into(),
        batches: 0,
        batch_size: 0,
        lr: 0.0,
        parent: None,
        data: None,
    };
    let bytes = encode_checkpoint(&m, 7, prov.clone());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.nrxw");
    std::fs::write(&path, &bytes).unwrap();
    let (back, header) = sitefit_nrx::load_checkpoint(&path).unwrap();
    assert_eq!(header.seed, 7);
    assert_eq!(header.provenance, prov);
    assert_eq!(back.params, m.params);
    let fx = Fixture::new(&cfg, 4, 2, 8);
    assert_eq!(back.forward(&fx.input(), 8).unwrap(), m.forward(&fx.input(), 8).unwrap());

    let mut flipped = bytes.clone();
    let last = flipped.len() - 10;
    flipped[last] ^= 1;
    assert!(decode_checkpoint(&flipped, &path).is_err());
    assert!(decode_checkpoint(&bytes[..bytes.len() - 1], &path).is_err());
    assert!(matches!(
        sitefit_nrx::load_checkpoint(&dir.path().join("missing")),
        Err(NrxError::Io { .. })
    ));
}

#[test]
fn initialization_is_seeded() {
    let cfg = NrxConfig::default();
    let a = NrxModel::<f32>::init(cfg, 1).unwrap();
    assert_eq!(a, NrxModel::<f32>::init(cfg, 1).unwrap());
    assert_ne!(a, NrxModel::<f32>::init(cfg, 2).unwrap());
    assert!(a.is_finite());
}

#[test]
fn loss_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (n_iters, n) = (3, 37);
    let llrs: Vec<f64> = (0..n_iters * n).map(|_| rng.random_range(-20.0..20.0)).collect();
    let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
    let mask: Vec<u8> = (0..n).map(|_| rng.random_range(0..4).min(1)).collect();
    let mut sum = 0.0;
    let mut count = 0;
    for k in 0..n_iters {
        for i in 0..n {
            if mask[i] == 1 {
                // -ln P(label): P(0) = 1 / (1 + e^-l), P(1) = 1 / (1 + e^l).
                let l = llrs[k * n + i];
                let z = if labels[i] == 0 { -l } else { l };
                sum += (1.0 + z.exp()).ln();
                count += 1;
            }
        }
    }
    let got = multi_loss(&llrs, n_iters, &labels, &mask);
    assert!((got - sum / count as f64).abs() < 1e-12, "{got} vs {}", sum / count as f64);
}

proptest! {
    #[test]
    fn loss_is_nonnegative(llrs in prop::collection::vec(-1e4f64..1e4, 1..64), seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<u8> = llrs.iter().map(|_| rng.random_range(0..2)).collect();
        let mask = vec![1u8; llrs.len()];
        let l = multi_loss(&llrs, 1, &labels, &mask);
        prop_assert!(l >= 0.0 && l.is_finite());
        for (&x, &y) in llrs.iter().zip(&labels) {
            prop_assert!(bce(x, y) >= 0.0);
        }
    }

    #[test]
    fn loss_gradient_matches_difference_quotient(l in -30.0f64..30.0, label in 0u8..2) {
        let h = 1e-6;
        let (_, g) = multi_loss_grad(&[l], 1, &[label], &[1]);
        let fd = (bce(l + h, label) - bce(l - h, label)) / (2.0 * h);
        prop_assert!((g[0] - fd).abs() < 1e-7);
    }
}
