//! The iterative receiver network.
//!
//! ```text
//! s0   = embed3x3(x)
//! h_k  = relu(conv3x3_a(s_{k-1}))
//! s_k  = s_{k-1} + conv3x3_b(h_k)          k = 1..n_iters, weights shared
//! llr_k = readout1x1(s_k) at data REs      4 LLRs per RE
//! ```
//!
//! All parameters live in one flat vector so optimizers and checkpoints
//! treat them uniformly.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sitefit_core::features::n_feature_channels;
use sitefit_core::phy::BITS_PER_SYMBOL;
use sitefit_core::seed::{rng_for, stream};

use crate::conv::{self, Backend, Epilogue};
use crate::error::NrxError;
use crate::layout::{Act, Layout};
use crate::real::Real;

const TAPS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NrxConfig {
    pub n_rx: usize,
    /// State width S.
    pub state: usize,
    pub max_iters: usize,
}

impl Default for NrxConfig {
    fn default() -> Self {
        Self {
            n_rx: 4,
            state: 32,
            max_iters: 8,
        }
    }
}

impl NrxConfig {
    pub fn n_inputs(&self) -> usize {
        n_feature_channels(self.n_rx)
    }

    pub fn params(&self) -> ParamLayout {
        ParamLayout::new(self)
    }

    pub fn validate(&self) -> Result<(), NrxError> {
        if self.n_rx == 0 || self.state == 0 || self.max_iters == 0 {
            return Err(NrxError::Config(format!("all sizes must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Ranges of each tensor in the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    /// `[S][C_in][9]`
    pub embed_w: Range<usize>,
    pub embed_b: Range<usize>,
    /// `[S][S][9]`
    pub blk1_w: Range<usize>,
    pub blk1_b: Range<usize>,
    /// `[S][S][9]`
    pub blk2_w: Range<usize>,
    pub blk2_b: Range<usize>,
    /// `[4][S]`
    pub out_w: Range<usize>,
    pub out_b: Range<usize>,
}

impl ParamLayout {
    fn new(cfg: &NrxConfig) -> Self {
        let s = cfg.state;
        let sizes = [
            s * cfg.n_inputs() * TAPS,
            s,
            s * s * TAPS,
            s,
            s * s * TAPS,
            s,
            BITS_PER_SYMBOL * s,
            BITS_PER_SYMBOL,
        ];
        let mut at = 0;
        let r: Vec<Range<usize>> = sizes
            .iter()
            .map(|&n| {
                at += n;
                at - n..at
            })
            .collect();
        Self {
            embed_w: r[0].clone(),
            embed_b: r[1].clone(),
            blk1_w: r[2].clone(),
            blk1_b: r[3].clone(),
            blk2_w: r[4].clone(),
            blk2_b: r[5].clone(),
            out_w: r[6].clone(),
            out_b: r[7].clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.out_b.end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Named tensors in storage order.
    pub fn tensors(&self) -> [(&'static str, Range<usize>); 8] {
        [
            ("embed_w", self.embed_w.clone()),
            ("embed_b", self.embed_b.clone()),
            ("blk1_w", self.blk1_w.clone()),
            ("blk1_b", self.blk1_b.clone()),
            ("blk2_w", self.blk2_w.clone()),
            ("blk2_b", self.blk2_b.clone()),
            ("out_w", self.out_w.clone()),
            ("out_b", self.out_b.clone()),
        ]
    }
}

/// A batch of equally sized input grids.
#[derive(Debug, Clone)]
pub struct NrxInput<'a> {
    /// Channel-major features `[C][T][F]`, one slice per batch entry.
    pub grids: Vec<&'a [f32]>,
    pub n_sym: usize,
    pub n_sc: usize,
    /// Data REs `(symbol, subcarrier)` in the order LLRs are emitted.
    pub data_positions: &'a [(usize, usize)],
}

impl<'a> NrxInput<'a> {
    pub fn batch(&self) -> usize {
        self.grids.len()
    }

    pub fn n_llr(&self) -> usize {
        BITS_PER_SYMBOL * self.data_positions.len()
    }
}

/// LLRs of every iteration: `[iter][batch][re][bit]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NrxOutput<T> {
    pub n_iters: usize,
    pub batch: usize,
    pub n_llr: usize,
    pub llrs: Vec<T>,
}

impl<T: Real> NrxOutput<T> {
    /// All LLRs of iteration `k` (1-based).
    pub fn iteration(&self, k: usize) -> &[T] {
        assert!((1..=self.n_iters).contains(&k), "iteration {k} out of range");
        let n = self.batch * self.n_llr;
        &self.llrs[(k - 1) * n..k * n]
    }

    /// LLRs of batch entry `b` after iteration `k` (1-based).
    pub fn get(&self, k: usize, b: usize) -> &[T] {
        &self.iteration(k)[b * self.n_llr..(b + 1) * self.n_llr]
    }
}

/// Activations kept for the backward pass, plus gradient scratch. A tape
/// can be reused across steps to avoid reallocating large planes.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    input: Option<Act<T>>,
    mask: Vec<T>,
    cols: Vec<usize>,
    /// `s_0 ..= s_K`
    s: Vec<Act<T>>,
    /// `h_1 ..= h_K`
    h: Vec<Act<T>>,
    ds: Option<Act<T>>,
    dh: Option<Act<T>>,
    pub output: NrxOutput<T>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self {
            input: None,
            mask: Vec::new(),
            cols: Vec::new(),
            s: Vec::new(),
            h: Vec::new(),
            ds: None,
            dh: None,
            output: NrxOutput {
                n_iters: 0,
                batch: 0,
                n_llr: 0,
                llrs: Vec::new(),
            },
        }
    }
}

impl<T: Real> Tape<T> {
    fn reshape(&mut self, layout: Layout, n_in: usize, state: usize, n_iters: usize) {
        if self.input.as_ref().map(|a| (a.layout, a.c)) != Some((layout, n_in)) {
            *self = Self::default();
            self.input = Some(Act::zeros(layout, n_in));
            self.mask = layout.interior_mask();
        }
        let fresh = || Act::zeros(layout, state);
        self.s.resize_with(n_iters + 1, fresh);
        self.h.resize_with(n_iters, fresh);
        self.s.truncate(n_iters + 1);
        self.h.truncate(n_iters);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NrxModel<T> {
    pub cfg: NrxConfig,
    pub params: Vec<T>,
    pub backend: Backend,
}

impl<T: Real> NrxModel<T> {
    pub fn zeros(cfg: NrxConfig) -> Result<Self, NrxError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            params: vec![T::zero(); cfg.params().len()],
            backend: Backend::Auto,
        })
    }

    /// Uniform fan-in scaled initialization; the residual branch starts
    /// small so eight unrolled iterations stay well conditioned.
    pub fn init(cfg: NrxConfig, seed: u64) -> Result<Self, NrxError> {
        let mut m = Self::zeros(cfg)?;
        let p = cfg.params();
        let mut rng = rng_for(&[seed, stream::INIT]);
        let s = cfg.state as f64;
        let fills = [
            (p.embed_w.clone(), (3.0 / (cfg.n_inputs() * TAPS) as f64).sqrt()),
            (p.blk1_w.clone(), (6.0 / (s * TAPS as f64)).sqrt()),
            (p.blk2_w.clone(), 0.25 * (3.0 / (s * TAPS as f64)).sqrt()),
            (p.out_w.clone(), (3.0 / s).sqrt()),
        ];
        for (r, a) in fills {
            for w in &mut m.params[r] {
                *w = T::from_f64(rng.random_range(-a..a)).expect("finite");
            }
        }
        Ok(m)
    }

    pub fn layout(&self) -> ParamLayout {
        self.cfg.params()
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|v| v.is_finite())
    }

    /// Converts the parameters to another precision.
    pub fn cast<U: Real>(&self) -> NrxModel<U> {
        NrxModel {
            cfg: self.cfg,
            params: self
                .params
                .iter()
                .map(|&v| U::from_f64(v.to_f64().expect("finite")).expect("finite"))
                .collect(),
            backend: self.backend,
        }
    }

    fn check(&self, input: &NrxInput, n_iters: usize) -> Result<Layout, NrxError> {
        if !(1..=self.cfg.max_iters).contains(&n_iters) {
            return Err(NrxError::Iterations {
                requested: n_iters,
                max: self.cfg.max_iters,
            });
        }
        if input.grids.is_empty() {
            return Err(NrxError::Shape("empty batch".into()));
        }
        let want = self.cfg.n_inputs() * input.n_sym * input.n_sc;
        if let Some(b) = input.grids.iter().position(|g| g.len() != want) {
            return Err(NrxError::Shape(format!(
                "grid {b} has {} values, expected {want}",
                input.grids[b].len()
            )));
        }
        if let Some(&(t, f)) = input.data_positions.iter().find(|&&(t, f)| t >= input.n_sym || f >= input.n_sc) {
            return Err(NrxError::Shape(format!("data position ({t}, {f}) outside the grid")));
        }
        Ok(Layout::new(input.batch(), input.n_sym, input.n_sc))
    }

    fn readout(&self, s: &Act<T>, cols: &[usize], out: &mut [T]) {
        let p = self.layout();
        let (w, b) = (&self.params[p.out_w], &self.params[p.out_b]);
        let sw = self.cfg.state;
        for o in out.chunks_exact_mut(BITS_PER_SYMBOL) {
            o.copy_from_slice(b);
        }
        for c in 0..sw {
            let plane = s.cols(c);
            let wc: [T; BITS_PER_SYMBOL] = std::array::from_fn(|j| w[j * sw + c]);
            for (o, &col) in out.chunks_exact_mut(BITS_PER_SYMBOL).zip(cols) {
                let v = plane[col];
                for (oj, &wj) in o.iter_mut().zip(&wc) {
                    *oj = *oj + wj * v;
                }
            }
        }
    }

    fn embed(&self, x: &Act<T>, mask: &[T]) -> Act<T> {
        let p = self.layout();
        let mut s0 = Act::zeros(x.layout, self.cfg.state);
        conv::forward(
            self.backend,
            &self.params[p.embed_w],
            Some(&self.params[p.embed_b]),
            TAPS,
            x,
            &mut s0,
            mask,
            Epilogue::Store,
        );
        s0
    }

    /// One shared-weight iteration: writes `h_k` and updates `s` in place.
    fn step_into(&self, s: &mut Act<T>, h: &mut Act<T>, mask: &[T]) {
        let p = self.layout();
        conv::forward(
            self.backend,
            &self.params[p.blk1_w],
            Some(&self.params[p.blk1_b]),
            TAPS,
            s,
            h,
            mask,
            Epilogue::StoreRelu,
        );
        conv::forward(
            self.backend,
            &self.params[p.blk2_w],
            Some(&self.params[p.blk2_b]),
            TAPS,
            h,
            s,
            mask,
            Epilogue::AddTo,
        );
    }

    fn prepare(&self, input: &NrxInput, layout: Layout) -> (Act<T>, Vec<T>, Vec<usize>) {
        let x = Act::from_grids(layout, self.cfg.n_inputs(), &input.grids);
        let cols = (0..input.batch())
            .flat_map(|b| input.data_positions.iter().map(move |&(t, f)| layout.col(b, t, f)))
            .collect();
        (x, layout.interior_mask(), cols)
    }

    /// LLRs after each of the first `n_iters` iterations.
    pub fn forward(&self, input: &NrxInput, n_iters: usize) -> Result<NrxOutput<T>, NrxError> {
        let layout = self.check(input, n_iters)?;
        let (x, mask, cols) = self.prepare(input, layout);
        let mut s = self.embed(&x, &mask);
        drop(x);
        let n = cols.len() * BITS_PER_SYMBOL;
        let mut llrs = vec![T::zero(); n_iters * n];
        let mut h = Act::zeros(layout, self.cfg.state);
        for k in 0..n_iters {
            self.step_into(&mut s, &mut h, &mask);
            self.readout(&s, &cols, &mut llrs[k * n..(k + 1) * n]);
        }
        Ok(NrxOutput {
            n_iters,
            batch: input.batch(),
            n_llr: input.n_llr(),
            llrs,
        })
    }

    /// Forward pass that records activations for [`Self::backward`].
    pub fn forward_tape(&self, input: &NrxInput, n_iters: usize) -> Result<Tape<T>, NrxError> {
        let mut tape = Tape::default();
        self.forward_into(input, n_iters, &mut tape)?;
        Ok(tape)
    }

    /// Like [`Self::forward_tape`] but reuses the buffers of `tape`.
    pub fn forward_into(&self, input: &NrxInput, n_iters: usize, tape: &mut Tape<T>) -> Result<(), NrxError> {
        let layout = self.check(input, n_iters)?;
        tape.reshape(layout, self.cfg.n_inputs(), self.cfg.state, n_iters);
        let x = tape.input.as_mut().expect("reshaped");
        x.load_grids(&input.grids);
        tape.cols.clear();
        tape.cols.extend(
            (0..input.batch()).flat_map(|b| input.data_positions.iter().map(move |&(t, f)| layout.col(b, t, f))),
        );
        let p = self.layout();
        conv::forward(
            self.backend,
            &self.params[p.embed_w],
            Some(&self.params[p.embed_b]),
            TAPS,
            x,
            &mut tape.s[0],
            &tape.mask,
            Epilogue::Store,
        );
        let n = tape.cols.len() * BITS_PER_SYMBOL;
        let out = &mut tape.output;
        out.n_iters = n_iters;
        out.batch = input.batch();
        out.n_llr = input.n_llr();
        out.llrs.clear();
        out.llrs.resize(n_iters * n, T::zero());
        for k in 0..n_iters {
            let (prev, next) = tape.s.split_at_mut(k + 1);
            let next = &mut next[0];
            next.data.copy_from_slice(&prev[k].data);
            self.step_into(next, &mut tape.h[k], &tape.mask);
            self.readout(next, &tape.cols, &mut out.llrs[k * n..(k + 1) * n]);
        }
        Ok(())
    }

    /// Gradient of a scalar loss with respect to all parameters, given the
    /// loss gradient `dllr` with respect to `tape.output.llrs`.
    pub fn backward(&self, tape: &mut Tape<T>, dllr: &[T]) -> Vec<T> {
        assert_eq!(dllr.len(), tape.output.llrs.len(), "gradient shape mismatch");
        let p = self.layout();
        let sw = self.cfg.state;
        let mut g = vec![T::zero(); p.len()];
        let x = tape.input.as_ref().expect("forward ran");
        let layout = x.layout;
        let ds = tape.ds.get_or_insert_with(|| Act::zeros(layout, sw));
        ds.fill_zero();
        let dh = tape.dh.get_or_insert_with(|| Act::zeros(layout, sw));
        let mask = &tape.mask;
        let n = tape.cols.len() * BITS_PER_SYMBOL;
        for k in (1..=tape.output.n_iters).rev() {
            let dl = &dllr[(k - 1) * n..k * n];
            self.readout_backward(&tape.s[k], &tape.cols, dl, &mut g, ds);

            let (gw, gb) = split_wb(&mut g, &p.blk2_w, &p.blk2_b);
            conv::backward_weight(self.backend, &tape.h[k - 1], ds, TAPS, gw, Some(gb));
            conv::backward_input(self.backend, &self.params[p.blk2_w.clone()], TAPS, ds, dh, mask, Epilogue::Store);
            for (d, &hv) in dh.data.iter_mut().zip(&tape.h[k - 1].data) {
                if hv <= T::zero() {
                    *d = T::zero();
                }
            }

            let (gw, gb) = split_wb(&mut g, &p.blk1_w, &p.blk1_b);
            conv::backward_weight(self.backend, &tape.s[k - 1], dh, TAPS, gw, Some(gb));
            conv::backward_input(self.backend, &self.params[p.blk1_w.clone()], TAPS, dh, ds, mask, Epilogue::AddTo);
        }
        let (gw, gb) = split_wb(&mut g, &p.embed_w, &p.embed_b);
        conv::backward_weight(self.backend, x, ds, TAPS, gw, Some(gb));
        g
    }

    fn readout_backward(&self, s: &Act<T>, cols: &[usize], dl: &[T], g: &mut [T], ds: &mut Act<T>) {
        let p = self.layout();
        let sw = self.cfg.state;
        let w = &self.params[p.out_w.clone()];
        let (gw, gb) = split_wb(g, &p.out_w, &p.out_b);
        for d in dl.chunks_exact(BITS_PER_SYMBOL) {
            for (gbj, &dj) in gb.iter_mut().zip(d) {
                *gbj = *gbj + dj;
            }
        }
        for c in 0..sw {
            let wc: [T; BITS_PER_SYMBOL] = std::array::from_fn(|j| w[j * sw + c]);
            let mut gc = [T::zero(); BITS_PER_SYMBOL];
            let plane = s.cols(c);
            let dplane = ds.cols_mut(c);
            for (d, &col) in dl.chunks_exact(BITS_PER_SYMBOL).zip(cols) {
                let sv = plane[col];
                let mut acc = T::zero();
                for j in 0..BITS_PER_SYMBOL {
                    gc[j] = gc[j] + d[j] * sv;
                    acc = acc + wc[j] * d[j];
                }
                dplane[col] = dplane[col] + acc;
            }
            for (j, &v) in gc.iter().enumerate() {
                gw[j * sw + c] = gw[j * sw + c] + v;
            }
        }
    }
}

/// Disjoint mutable views of a weight tensor and its bias.
fn split_wb<'a, T>(g: &'a mut [T], w: &Range<usize>, b: &Range<usize>) -> (&'a mut [T], &'a mut [T]) {
    assert_eq!(w.end, b.start, "bias must follow its weights");
    let (head, tail) = g.split_at_mut(b.start);
    (&mut head[w.clone()], &mut tail[..b.len()])
}
