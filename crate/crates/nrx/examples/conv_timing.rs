use std::time::Instant;
use sitefit_nrx::conv::{self, Backend, Epilogue};
use sitefit_nrx::layout::{Act, Layout};

fn main() {
    let l = Layout::new(64, 14, 48);
    let x = Act::<f32>::zeros(l, 32);
    let mut y = Act::<f32>::zeros(l, 32);
    let w = vec![0.01f32; 32 * 32 * 9];
    let b = vec![0.0f32; 32];
    let mask = l.interior_mask::<f32>();
    let flops = 2.0 * 32.0 * 288.0 * l.n_pad as f64;
    for _ in 0..3 {
        let t = Instant::now();
        for _ in 0..10 {
            conv::forward(Backend::Auto, &w, Some(&b), 9, &x, &mut y, &mask, Epilogue::Store);
        }
        let fw = flops * 10.0 / t.elapsed().as_secs_f64() / 1e9;
        let t = Instant::now();
        let mut gw = vec![0f32; w.len()];
        let mut gb = vec![0f32; 32];
        for _ in 0..10 {
            conv::backward_weight(Backend::Auto, &x, &y, 9, &mut gw, Some(&mut gb));
        }
        let bw = flops * 10.0 / t.elapsed().as_secs_f64() / 1e9;
        let t = Instant::now();
        for _ in 0..10 {
            let _a = Act::<f32>::zeros(l, 32);
        }
        let al = t.elapsed().as_secs_f64() / 10.0 * 1e3;
        println!("forward {fw:.1} GFLOPS, weight grad {bw:.1} GFLOPS, alloc {al:.2} ms");
    }
}
