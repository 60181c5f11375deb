//! Times forward/backward passes of the default model on 4-PRB blocks.
//! Usage: step_timing [batch] [reps]

use std::time::Instant;

use sitefit_core::grid::GridConfig;
use sitefit_nrx::loss::multi_loss_grad;
use sitefit_nrx::{NrxConfig, NrxInput, NrxModel};

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer")).collect();
    let batch = args.first().copied().unwrap_or(64);
    let reps = args.get(1).copied().unwrap_or(3);
    let cfg = NrxConfig::default();
    let model = NrxModel::<f32>::init(cfg, 0).expect("config");
    let g = GridConfig::new(4, cfg.n_rx).expect("grid");
    let pos = g.data_positions();
    let grids: Vec<Vec<f32>> = (0..batch)
        .map(|b| (0..cfg.n_inputs() * 14 * 48).map(|i| ((i * 7 + b) % 13) as f32 * 0.1 - 0.6).collect())
        .collect();
    let input = NrxInput {
        grids: grids.iter().map(|v| v.as_slice()).collect(),
        n_sym: 14,
        n_sc: 48,
        data_positions: &pos,
    };
    let labels = vec![0u8; batch * 4 * pos.len()];
    let mask = vec![1u8; labels.len()];
    let mut tape = Default::default();
    for _ in 0..reps {
        let t0 = Instant::now();
        model.forward_into(&input, cfg.max_iters, &mut tape).expect("forward");
        let t1 = Instant::now();
        let (_, dl) = multi_loss_grad(&tape.output.llrs, cfg.max_iters, &labels, &mask);
        let grad = model.backward(&mut tape, &dl);
        let t2 = Instant::now();
        println!(
            "batch {batch}: forward {:.0} ms, backward {:.0} ms ({} grads)",
            (t1 - t0).as_secs_f64() * 1e3,
            (t2 - t1).as_secs_f64() * 1e3,
            grad.len()
        );
    }
}
