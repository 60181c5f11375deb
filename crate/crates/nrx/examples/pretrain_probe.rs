//! Prints the running pretraining loss.
//! Usage: pretrain_probe <batches> <batch_size> <lr> [state]

use std::time::Instant;

use sitefit_core::grid::GridConfig;
use sitefit_nrx::{pretrain, NrxConfig, NrxModel, PretrainGenerator, TrainConfig};

fn main() {
    let a: Vec<String> = std::env::args().skip(1).collect();
    let n: u64 = a.first().map_or(500, |v| v.parse().expect("batches"));
    let bs: usize = a.get(1).map_or(32, |v| v.parse().expect("batch size"));
    let lr: f64 = a.get(2).map_or(1e-3, |v| v.parse().expect("lr"));
    let state: usize = a.get(3).map_or(32, |v| v.parse().expect("state"));
    let cfg = NrxConfig { state, ..NrxConfig::default() };
    let g = PretrainGenerator::new(1, GridConfig::new(8, 4).expect("grid")).expect("generator");
    let t = Instant::now();
    let mut acc = 0.0;
    let tc = TrainConfig { n_batches: n, batch_size: bs, lr, seed: 1, n_iters: 8 };
    pretrain(NrxModel::init(cfg, 1).expect("init"), &g, &tc, |i, l| {
        acc += l;
        if i % 50 == 0 {
            println!("{i:6} loss {:.4} ({:.0} s)", acc / 50.0, t.elapsed().as_secs_f64());
            acc = 0.0;
        }
    })
    .expect("pretrain");
}
