//! Reverse-mode gradients against central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sitefit_core::grid::GridConfig;
use sitefit_core::phy::BITS_PER_SYMBOL;
use sitefit_nrx::loss::{multi_loss, multi_loss_grad};
use sitefit_nrx::{NrxConfig, NrxInput, NrxModel};

const H: f64 = 1e-5;
const TOL: f64 = 1e-3;
/// Gradients below this are compared in absolute terms.
const FLOOR: f64 = 1e-8;

struct Problem {
    grids: Vec<Vec<f32>>,
    positions: Vec<(usize, usize)>,
    labels: Vec<u8>,
    n_sc: usize,
}

fn problem(cfg: &NrxConfig, batch: usize, seed: u64) -> Problem {
    let grid = GridConfig::new(1, cfg.n_rx).unwrap();
    let n_sc = grid.n_subcarriers();
    let positions = grid.data_positions();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grids = (0..batch)
        .map(|_| (0..cfg.n_inputs() * 14 * n_sc).map(|_| rng.random_range(-1.5f32..1.5)).collect())
        .collect();
    let labels = (0..batch * BITS_PER_SYMBOL * positions.len()).map(|_| rng.random_range(0..2u8)).collect();
    Problem {
        grids,
        positions,
        labels,
        n_sc,
    }
}

fn input<'a>(p: &'a Problem) -> NrxInput<'a> {
    NrxInput {
        grids: p.grids.iter().map(|g| g.as_slice()).collect(),
        n_sym: 14,
        n_sc: p.n_sc,
        data_positions: &p.positions,
    }
}

fn loss(model: &NrxModel<f64>, p: &Problem, n_iters: usize) -> f64 {
    let out = model.forward(&input(p), n_iters).unwrap();
    let mask = vec![1u8; p.labels.len()];
    multi_loss(&out.llrs, n_iters, &p.labels, &mask)
}

fn tiny_model(seed: u64) -> NrxModel<f64> {
    let cfg = NrxConfig {
        n_rx: 2,
        state: 4,
        max_iters: 8,
    };
    let mut m = NrxModel::<f64>::init(cfg, seed).unwrap();
    // Nonzero biases so every parameter influences the loss.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    let p = m.layout();
    for r in [p.embed_b, p.blk1_b, p.blk2_b, p.out_b] {
        for v in &mut m.params[r] {
            *v = rng.random_range(-0.2..0.2);
        }
    }
    m
}

#[test]
fn every_parameter_matches_finite_differences() {
    let start = std::time::Instant::now();
    let n_iters = 8;
    let mut model = tiny_model(11);
    let p = problem(&model.cfg, 2, 5);
    let mut tape = model.forward_tape(&input(&p), n_iters).unwrap();
    let mask = vec![1u8; p.labels.len()];
    let (_, dllr) = multi_loss_grad(&tape.output.llrs, n_iters, &p.labels, &mask);
    let grad = model.backward(&mut tape, &dllr);

    let mut worst = (0.0f64, 0usize);
    let names = model.layout().tensors();
    for i in 0..model.params.len() {
        let w = model.params[i];
        model.params[i] = w + H;
        let up = loss(&model, &p, n_iters);
        model.params[i] = w - H;
        let down = loss(&model, &p, n_iters);
        model.params[i] = w;
        let fd = (up - down) / (2.0 * H);
        let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(FLOOR);
        if rel > worst.0 {
            worst = (rel, i);
        }
        let name = names.iter().find(|(_, r)| r.contains(&i)).unwrap().0;
        assert!(rel <= TOL, "{name}[{i}]: analytic {} vs numeric {fd} (rel {rel:.2e})", grad[i]);
    }
    eprintln!(
        "gradient check: {} parameters, worst relative error {:.2e} at {}, {:.1?}",
        model.params.len(),
        worst.0,
        worst.1,
        start.elapsed()
    );
}
