//! AVX-512 kernels for 3x3 convolutions over padded planes.
//!
//! Forward (and input-gradient) convolutions are an implicit GEMM: row `k`
//! of the right-hand matrix is channel `k / taps` read at a constant shift,
//! so no im2col buffer is materialized. Weight gradients use a second kernel
//! that reduces over pixels against a transposed copy of the output gradient.

#![cfg(target_arch = "x86_64")]

use std::arch::x86_64::*;

use crate::conv::Epilogue;

const MR: usize = 8;
const NR: usize = 48;
/// Column chunk kept hot in L2 while all output rows are produced.
const NC: usize = 480;
/// Output channel count handled by the weight-gradient kernel.
pub const DW_COLS: usize = 32;
const DW_ROWS: usize = 12;
/// Pixel chunk; keeps the transposed gradient slice in L1.
const DW_CHUNK: usize = 256;

pub fn available() -> bool {
    is_x86_feature_detected!("avx512f")
}

/// Arguments of one implicit-GEMM convolution.
pub struct ConvArgs<'a> {
    /// `[cout][k]` with `k = ci * taps + s`.
    pub w: &'a [f32],
    pub bias: Option<&'a [f32]>,
    pub cout: usize,
    /// Base pointers of each right-hand row, already shifted, indexed from column 0.
    pub rows: &'a [*const f32],
    pub mask: &'a [f32],
    pub n: usize,
    /// Output plane pointers, indexed from column 0.
    pub out: &'a [*mut f32],
    pub epilogue: Epilogue,
}

/// # Safety
/// Every row pointer must be readable for `n` floats, every output pointer
/// writable for `n` floats, `n % 48 == 0`, `cout % 8 == 0`, and AVX-512F
/// must be available.
pub unsafe fn conv_forward(a: &ConvArgs) {
    debug_assert!(a.n % NR == 0 && a.cout % MR == 0);
    let k = a.rows.len();
    let mut j0 = 0;
    while j0 < a.n {
        let j1 = (j0 + NC).min(a.n);
        for i in (0..a.cout).step_by(MR) {
            let mut j = j0;
            while j < j1 {
                kernel_8x48(k, a, i, j);
                j += NR;
            }
        }
        j0 = j1;
    }
}

#[target_feature(enable = "avx512f")]
unsafe fn kernel_8x48(k: usize, a: &ConvArgs, i: usize, j: usize) {
    let mut acc = [[_mm512_setzero_ps(); 3]; MR];
    let w = a.w.as_ptr().add(i * k);
    for kk in 0..k {
        let b = a.rows.get_unchecked(kk).add(j);
        let b0 = _mm512_loadu_ps(b);
        let b1 = _mm512_loadu_ps(b.add(16));
        let b2 = _mm512_loadu_ps(b.add(32));
        for (r, acc_r) in acc.iter_mut().enumerate() {
            let av = _mm512_set1_ps(*w.add(r * k + kk));
            acc_r[0] = _mm512_fmadd_ps(av, b0, acc_r[0]);
            acc_r[1] = _mm512_fmadd_ps(av, b1, acc_r[1]);
            acc_r[2] = _mm512_fmadd_ps(av, b2, acc_r[2]);
        }
    }
    let m = a.mask.as_ptr().add(j);
    let mv = [_mm512_loadu_ps(m), _mm512_loadu_ps(m.add(16)), _mm512_loadu_ps(m.add(32))];
    let zero = _mm512_setzero_ps();
    for (r, acc_r) in acc.iter().enumerate() {
        let bias = _mm512_set1_ps(a.bias.map_or(0.0, |b| b[i + r]));
        let o = a.out.get_unchecked(i + r).add(j);
        for q in 0..3 {
            let v = _mm512_mul_ps(_mm512_add_ps(acc_r[q], bias), mv[q]);
            let p = o.add(16 * q);
            match a.epilogue {
                Epilogue::Store => _mm512_storeu_ps(p, v),
                Epilogue::StoreRelu => _mm512_storeu_ps(p, _mm512_max_ps(v, zero)),
                Epilogue::AddTo => _mm512_storeu_ps(p, _mm512_add_ps(_mm512_loadu_ps(p), v)),
            }
        }
    }
}

/// `dw[co][k] += sum_p dout[co][p] * rows[k][p]` for 32 output channels.
///
/// # Safety
/// Row pointers readable for `n` floats, `dout_t` is `[n][32]`, `dw` is
/// `[32][rows.len()]`, and AVX-512F must be available.
#[target_feature(enable = "avx512f")]
pub unsafe fn conv_weight_grad(rows: &[*const f32], dout_t: &[f32], n: usize, dw: &mut [f32]) {
    let k = rows.len();
    debug_assert_eq!(dout_t.len(), n * DW_COLS);
    debug_assert_eq!(dw.len(), k * DW_COLS);
    let mut acc = vec![0f32; k.div_ceil(DW_ROWS) * DW_ROWS * DW_COLS];
    let mut p0 = 0;
    while p0 < n {
        let p1 = (p0 + DW_CHUNK).min(n);
        for (blk, acc_blk) in acc.chunks_exact_mut(DW_ROWS * DW_COLS).enumerate() {
            // Rows past the end reuse the last row; their sums land in padding.
            let r: [*const f32; DW_ROWS] = std::array::from_fn(|q| rows[(blk * DW_ROWS + q).min(k - 1)]);
            kernel_12x32(&r, dout_t.as_ptr(), p0, p1, acc_blk.as_mut_ptr());
        }
        p0 = p1;
    }
    for kk in 0..k {
        for co in 0..DW_COLS {
            dw[co * k + kk] += acc[kk * DW_COLS + co];
        }
    }
}

#[inline(always)]
unsafe fn kernel_12x32(rows: &[*const f32; DW_ROWS], dout_t: *const f32, p0: usize, p1: usize, c: *mut f32) {
    let rows = *rows;
    let mut acc = [[_mm512_setzero_ps(); 2]; DW_ROWS];
    for (r, acc_r) in acc.iter_mut().enumerate() {
        acc_r[0] = _mm512_loadu_ps(c.add(r * DW_COLS));
        acc_r[1] = _mm512_loadu_ps(c.add(r * DW_COLS + 16));
    }
    for p in p0..p1 {
        let d = dout_t.add(p * DW_COLS);
        let d0 = _mm512_loadu_ps(d);
        let d1 = _mm512_loadu_ps(d.add(16));
        for (r, acc_r) in acc.iter_mut().enumerate() {
            let x = _mm512_set1_ps(*rows[r].add(p));
            acc_r[0] = _mm512_fmadd_ps(x, d0, acc_r[0]);
            acc_r[1] = _mm512_fmadd_ps(x, d1, acc_r[1]);
        }
    }
    for (r, acc_r) in acc.iter().enumerate() {
        _mm512_storeu_ps(c.add(r * DW_COLS), acc_r[0]);
        _mm512_storeu_ps(c.add(r * DW_COLS + 16), acc_r[1]);
    }
}

/// Transposes `[32][n]` planes into `[n][32]` in cache-sized tiles.
pub fn transpose_32(planes: &[&[f32]], n: usize, out: &mut [f32]) {
    debug_assert_eq!(planes.len(), DW_COLS);
    const TILE: usize = 64;
    let mut p0 = 0;
    while p0 < n {
        let p1 = (p0 + TILE).min(n);
        for (co, pl) in planes.iter().enumerate() {
            for (p, &v) in (p0..p1).zip(&pl[p0..p1]) {
                out[p * DW_COLS + co] = v;
            }
        }
        p0 = p1;
    }
}
