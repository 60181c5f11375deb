//! Same-padded convolutions over [`Act`] planes.
//!
//! Weights are `[cout][cin][taps]` with `taps` 9 (3x3, row-major over
//! symbol then subcarrier offset) or 1 (pointwise). Outputs are multiplied
//! by the interior mask so padding stays zero.

use crate::layout::Act;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Epilogue {
    /// `out = (acc + b) * m`
    Store,
    /// `out = max(acc + b, 0) * m`
    StoreRelu,
    /// `out += (acc + b) * m`
    AddTo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    /// SIMD kernels when the CPU and shapes allow it, portable otherwise.
    #[default]
    Auto,
    /// im2col followed by a library GEMM.
    Portable,
}

fn offsets<T: Real>(input: &Act<T>, taps: usize) -> Vec<isize> {
    match taps {
        9 => input.layout.tap_offsets().to_vec(),
        1 => vec![0],
        _ => panic!("unsupported tap count {taps}"),
    }
}

#[cfg(target_arch = "x86_64")]
fn use_simd<T: Real>(backend: Backend) -> bool {
    backend == Backend::Auto && T::NAME == "f32" && crate::simd::available()
}

#[cfg(not(target_arch = "x86_64"))]
fn use_simd<T: Real>(_: Backend) -> bool {
    false
}

#[cfg(target_arch = "x86_64")]
thread_local! {
    /// Transposed output gradient, reused across calls.
    static SCRATCH: std::cell::RefCell<Vec<f32>> = const { std::cell::RefCell::new(Vec::new()) };
}

/// Unrolled input patches `[cin * taps][n_pad]`.
fn im2col<T: Real>(input: &Act<T>, offs: &[isize]) -> Vec<T> {
    let l = input.layout;
    let mut x = vec![T::zero(); input.c * offs.len() * l.n_pad];
    for ci in 0..input.c {
        let plane = input.plane(ci);
        for (s, &o) in offs.iter().enumerate() {
            let start = (l.guard as isize + o) as usize;
            x[(ci * offs.len() + s) * l.n_pad..][..l.n_pad].copy_from_slice(&plane[start..start + l.n_pad]);
        }
    }
    x
}

fn apply_epilogue<T: Real>(acc: &[T], bias: Option<&[T]>, mask: &[T], out: &mut Act<T>, ep: Epilogue) {
    let n = out.layout.n_pad;
    for co in 0..out.c {
        let b = bias.map_or(T::zero(), |b| b[co]);
        let dst = out.cols_mut(co);
        for ((d, &a), &m) in dst.iter_mut().zip(&acc[co * n..(co + 1) * n]).zip(mask) {
            let v = (a + b) * m;
            *d = match ep {
                Epilogue::Store => v,
                Epilogue::StoreRelu => v.max(T::zero()),
                Epilogue::AddTo => *d + v,
            };
        }
    }
}

/// `out <- epilogue(conv(w, input) + bias)`.
#[allow(clippy::too_many_arguments)]
pub fn forward<T: Real>(
    backend: Backend,
    w: &[T],
    bias: Option<&[T]>,
    taps: usize,
    input: &Act<T>,
    out: &mut Act<T>,
    mask: &[T],
    ep: Epilogue,
) {
    let l = input.layout;
    assert_eq!(out.layout, l, "layout mismatch");
    assert_eq!(mask.len(), l.n_pad);
    let k = input.c * taps;
    assert_eq!(w.len(), out.c * k, "weight shape mismatch");
    if let Some(b) = bias {
        assert_eq!(b.len(), out.c);
    }
    let offs = offsets(input, taps);

    #[cfg(target_arch = "x86_64")]
    if use_simd::<T>(backend) && out.c % 8 == 0 {
        let w32 = T::as_f32(w).expect("f32");
        let b32 = bias.map(|b| T::as_f32(b).expect("f32"));
        let m32 = T::as_f32(mask).expect("f32");
        let base = T::as_f32(&input.data).expect("f32").as_ptr();
        let rows: Vec<*const f32> = (0..k)
            .map(|kk| {
                let (ci, s) = (kk / taps, kk % taps);
                // In bounds: guards exceed the largest tap offset.
                unsafe { base.add(ci * l.plane + l.guard).offset(offs[s]) }
            })
            .collect();
        let ob = T::as_f32_mut(&mut out.data).expect("f32").as_mut_ptr();
        let outs: Vec<*mut f32> = (0..out.c).map(|co| unsafe { ob.add(co * l.plane + l.guard) }).collect();
        let args = crate::simd::ConvArgs {
            w: w32,
            bias: b32,
            cout: out.c,
            rows: &rows,
            mask: m32,
            n: l.n_pad,
            out: &outs,
            epilogue: ep,
        };
        // SAFETY: pointers index planes of `input` and `out`, which hold
        // `guard + n_pad + guard` floats; shapes were checked above.
        unsafe { crate::simd::conv_forward(&args) };
        return;
    }

    let x = im2col(input, &offs);
    let n = l.n_pad;
    let mut acc = vec![T::zero(); out.c * n];
    T::gemm(out.c, k, n, T::one(), w, k as isize, 1, &x, n as isize, 1, T::zero(), &mut acc, n as isize, 1);
    apply_epilogue(&acc, bias, mask, out, ep);
}

/// Weights of the adjoint convolution: `w'[ci][co][s] = w[co][ci][taps-1-s]`.
pub fn adjoint_weights<T: Real>(w: &[T], cout: usize, cin: usize, taps: usize) -> Vec<T> {
    let mut wt = vec![T::zero(); w.len()];
    for co in 0..cout {
        for ci in 0..cin {
            for s in 0..taps {
                wt[(ci * cout + co) * taps + taps - 1 - s] = w[(co * cin + ci) * taps + s];
            }
        }
    }
    wt
}

/// `din <- epilogue(conv^T(w, dout))`, the gradient with respect to the input.
pub fn backward_input<T: Real>(
    backend: Backend,
    w: &[T],
    taps: usize,
    dout: &Act<T>,
    din: &mut Act<T>,
    mask: &[T],
    ep: Epilogue,
) {
    let wt = adjoint_weights(w, dout.c, din.c, taps);
    forward(backend, &wt, None, taps, dout, din, mask, ep);
}

/// Sum with 16 independent partial sums so it vectorizes.
fn lane_sum<T: Real>(v: &[T]) -> T {
    let mut lanes = [T::zero(); 16];
    let chunks = v.chunks_exact(16);
    let rest = chunks.remainder().iter().fold(T::zero(), |a, &x| a + x);
    for c in chunks {
        for (l, &x) in lanes.iter_mut().zip(c) {
            *l = *l + x;
        }
    }
    lanes.iter().fold(rest, |a, &x| a + x)
}

/// `dw += dout (x) input` and `db += sum(dout)`; `dout` must already be masked.
pub fn backward_weight<T: Real>(
    backend: Backend,
    input: &Act<T>,
    dout: &Act<T>,
    taps: usize,
    dw: &mut [T],
    db: Option<&mut [T]>,
) {
    let l = input.layout;
    assert_eq!(dout.layout, l, "layout mismatch");
    let k = input.c * taps;
    assert_eq!(dw.len(), dout.c * k, "weight shape mismatch");
    if let Some(db) = db {
        assert_eq!(db.len(), dout.c);
        for (co, g) in db.iter_mut().enumerate() {
            *g = *g + lane_sum(dout.cols(co));
        }
    }
    let offs = offsets(input, taps);
    let n = l.n_pad;

    #[cfg(target_arch = "x86_64")]
    if use_simd::<T>(backend) && dout.c == crate::simd::DW_COLS {
        let planes: Vec<&[f32]> = (0..dout.c).map(|co| T::as_f32(dout.cols(co)).expect("f32")).collect();
        let base = T::as_f32(&input.data).expect("f32").as_ptr();
        let rows: Vec<*const f32> = (0..k)
            .map(|kk| unsafe { base.add((kk / taps) * l.plane + l.guard).offset(offs[kk % taps]) })
            .collect();
        SCRATCH.with_borrow_mut(|dout_t| {
            dout_t.resize(n * dout.c, 0.0);
            crate::simd::transpose_32(&planes, n, dout_t);
            // SAFETY: rows stay inside the guarded planes; shapes checked above.
            unsafe { crate::simd::conv_weight_grad(&rows, dout_t, n, T::as_f32_mut(dw).expect("f32")) };
        });
        return;
    }

    let x = im2col(input, &offs);
    // dw[co][kk] += sum_p dout[co][p] x[kk][p]
    let dcols: Vec<T> = (0..dout.c).flat_map(|co| dout.cols(co).to_vec()).collect();
    T::gemm(
        dout.c,
        n,
        k,
        T::one(),
        &dcols,
        n as isize,
        1,
        &x,
        1,
        n as isize,
        T::one(),
        dw,
        k as isize,
        1,
    );
}
