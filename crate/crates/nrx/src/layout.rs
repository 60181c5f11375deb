//! Zero-padded activation planes.
//!
//! A batch of `B` grids of `T x F` pixels is stored per channel as one plane
//! of rows `F+1` wide: `guard | zero row | B x (T rows, zero row) | tail | guard`.
//! The last column of each row is zero and doubles as the left neighbour of
//! the next row, and consecutive grids share one zero row. A 3x3 tap is then
//! a constant offset into the plane, and the same code runs on training
//! blocks and full slots.

use crate::real::Real;

/// Columns are processed in multiples of this width.
pub const COL_ALIGN: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub batch: usize,
    pub t: usize,
    pub f: usize,
    /// Padded pixel count `(1 + B (T+1)) (F+1)`.
    pub n: usize,
    /// `n` rounded up to [`COL_ALIGN`].
    pub n_pad: usize,
    pub guard: usize,
    pub plane: usize,
}

impl Layout {
    pub fn new(batch: usize, t: usize, f: usize) -> Self {
        assert!(batch > 0 && t > 0 && f > 0, "empty layout");
        let n = (1 + batch * (t + 1)) * (f + 1);
        let n_pad = n.div_ceil(COL_ALIGN) * COL_ALIGN;
        let guard = (f + 2).div_ceil(16) * 16;
        Self {
            batch,
            t,
            f,
            n,
            n_pad,
            guard,
            plane: guard + n_pad + guard,
        }
    }

    /// Row pitch.
    pub fn fp(&self) -> usize {
        self.f + 1
    }

    /// Column (relative to the guard) of pixel `(b, t, f)`.
    pub fn col(&self, b: usize, t: usize, f: usize) -> usize {
        (1 + b * (self.t + 1) + t) * self.fp() + f
    }

    /// Offsets of the nine taps, row-major over `(dt, df) in {-1,0,1}^2`.
    pub fn tap_offsets(&self) -> [isize; 9] {
        let fp = self.fp() as isize;
        std::array::from_fn(|s| (s as isize / 3 - 1) * fp + (s as isize % 3 - 1))
    }

    /// 1 at real pixels, 0 at borders and tail; length `n_pad`.
    pub fn interior_mask<T: Real>(&self) -> Vec<T> {
        let mut m = vec![T::zero(); self.n_pad];
        for b in 0..self.batch {
            for t in 0..self.t {
                for f in 0..self.f {
                    m[self.col(b, t, f)] = T::one();
                }
            }
        }
        m
    }
}

/// `c` channel planes of one layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Act<T> {
    pub layout: Layout,
    pub c: usize,
    pub data: Vec<T>,
}

impl<T: Real> Act<T> {
    pub fn zeros(layout: Layout, c: usize) -> Self {
        Self {
            layout,
            c,
            data: vec![T::zero(); c * layout.plane],
        }
    }

    pub fn plane(&self, ch: usize) -> &[T] {
        &self.data[ch * self.layout.plane..(ch + 1) * self.layout.plane]
    }

    pub fn plane_mut(&mut self, ch: usize) -> &mut [T] {
        let p = self.layout.plane;
        &mut self.data[ch * p..(ch + 1) * p]
    }

    /// Columns `0..n_pad` of a channel (guards excluded).
    pub fn cols(&self, ch: usize) -> &[T] {
        let l = self.layout;
        &self.plane(ch)[l.guard..l.guard + l.n_pad]
    }

    pub fn cols_mut(&mut self, ch: usize) -> &mut [T] {
        let l = self.layout;
        &mut self.plane_mut(ch)[l.guard..l.guard + l.n_pad]
    }

    pub fn get(&self, ch: usize, b: usize, t: usize, f: usize) -> T {
        self.cols(ch)[self.layout.col(b, t, f)]
    }

    /// Packs channel-major `[C][T][F]` inputs, one per batch entry.
    pub fn from_grids(layout: Layout, c: usize, grids: &[&[f32]]) -> Self {
        let mut a = Self::zeros(layout, c);
        a.load_grids(grids);
        a
    }

    /// Overwrites the interior with `grids`; padding is left untouched.
    pub fn load_grids(&mut self, grids: &[&[f32]]) {
        let (layout, c) = (self.layout, self.c);
        assert_eq!(grids.len(), layout.batch);
        let a = self;
        let (t_len, f_len) = (layout.t, layout.f);
        for (b, g) in grids.iter().enumerate() {
            assert_eq!(g.len(), c * t_len * f_len, "grid {b} has wrong size");
            for ch in 0..c {
                let dst = a.cols_mut(ch);
                for t in 0..t_len {
                    let src = &g[(ch * t_len + t) * f_len..][..f_len];
                    let o = layout.col(b, t, 0);
                    for (d, &s) in dst[o..o + f_len].iter_mut().zip(src) {
                        *d = T::from_single(s);
                    }
                }
            }
        }
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = T::zero());
    }
}
