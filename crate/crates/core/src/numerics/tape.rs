//! Minimal reverse-mode autodiff over dense matrices.
//!
//! A [`Tape`] records every operation eagerly (values are computed on
//! construction) and [`Tape::backward`] walks the record in reverse. Leaves
//! created with [`Tape::param`] remember their [`ParamId`] so gradients can be
//! pushed back into a [`ParamStore`].

use std::fmt;
use std::sync::Arc;

use super::matrix::shape_error;
use super::ops::{self, check_rrelu_bounds, rrelu_multipliers, SeededRng};
use super::{Matrix, ParamId, ParamStore};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// A fixed linear map on matrices with an explicit adjoint.
pub trait LinearMap: Send + Sync {
    fn apply(&self, x: &Matrix) -> Result<Matrix>;
    fn apply_adjoint(&self, g: &Matrix) -> Result<Matrix>;
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Affine(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Rrelu(Var, Matrix),
    GatherRows(Var, Vec<usize>),
    SparseRows(Var, Vec<(usize, usize, f64)>),
    ConcatCols(Var, Var),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    Conv1d { input: Var, kernel: Var, bias: Var, in_channels: usize },
    Softmax(Var),
    NllSum(Var, Vec<usize>),
    Linear(Var, Arc<dyn LinearMap>),
}

struct Node {
    value: Matrix,
    op: Op,
    param: Option<ParamId>,
}

pub struct Tape {
    nodes: Vec<Node>,
    rrelu_bounds: (f64, f64),
    rng: Option<SeededRng>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape")
            .field("nodes", &self.nodes.len())
            .field("train", &self.rng.is_some())
            .finish()
    }
}

impl Tape {
    /// Tape whose RReLU uses the fixed mean slope.
    pub fn eval(lower: f64, upper: f64) -> Result<Self> {
        check_rrelu_bounds(lower, upper)?;
        Ok(Tape {
            nodes: Vec::new(),
            rrelu_bounds: (lower, upper),
            rng: None,
        })
    }

    /// Tape whose RReLU samples slopes from `rng`.
    pub fn train(lower: f64, upper: f64, rng: SeededRng) -> Result<Self> {
        check_rrelu_bounds(lower, upper)?;
        Ok(Tape {
            nodes: Vec::new(),
            rrelu_bounds: (lower, upper),
            rng: Some(rng),
        })
    }

    pub fn is_train(&self) -> bool {
        self.rng.is_some()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            op,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.push(store.value(id).clone(), Op::Leaf);
        self.nodes[v.0].param = Some(id);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul_t(self.value(b))?;
        Ok(self.push(value, Op::MatMulT(a, b)))
    }

    fn same_shape(&self, op: &str, a: Var, b: Var) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(shape_error(op, self.value(a), self.value(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(value, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(value, Op::Mul(a, b)))
    }

    /// Adds the `1 x cols` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ma, mb) = (self.value(a), self.value(b));
        if mb.rows() != 1 || mb.cols() != ma.cols() {
            return Err(shape_error("add_row", ma, mb));
        }
        let mut value = ma.clone();
        for r in 0..value.rows() {
            for (x, y) in value.row_mut(r).iter_mut().zip(mb.row(0)) {
                *x += y;
            }
        }
        Ok(self.push(value, Op::AddRow(a, b)))
    }

    /// `scale · x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let value = self.value(x).map(|v| scale * v + shift);
        self.push(value, Op::Affine(x, scale))
    }

    pub fn scale(&mut self, x: Var, alpha: f64) -> Var {
        self.affine(x, alpha, 0.0)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(ops::sigmoid);
        self.push(value, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f64::tanh);
        self.push(value, Op::Tanh(x))
    }

    pub fn rrelu(&mut self, x: Var) -> Var {
        let (lo, hi) = self.rrelu_bounds;
        let mult = rrelu_multipliers(&self.nodes[x.0].value, lo, hi, self.rng.as_mut());
        let value = self.value(x).zip_map(&mult, |a, m| a * m);
        self.push(value, Op::Rrelu(x, mult))
    }

    pub fn gather_rows(&mut self, src: Var, idx: Vec<usize>) -> Result<Var> {
        let m = self.value(src);
        let mut data = Vec::with_capacity(idx.len() * m.cols());
        for &i in &idx {
            if i >= m.rows() {
                return Err(Error::validation(format!(
                    "gather_rows: index {i} out of {} rows",
                    m.rows()
                )));
            }
            data.extend_from_slice(m.row(i));
        }
        let value = Matrix::from_vec(idx.len(), m.cols(), data)?;
        Ok(self.push(value, Op::GatherRows(src, idx)))
    }

    /// `out[r] = Σ w · src[s]` over `(r, s, w)` entries; `out` has `rows` rows.
    pub fn sparse_rows(
        &mut self,
        src: Var,
        entries: Vec<(usize, usize, f64)>,
        rows: usize,
    ) -> Result<Var> {
        let m = self.value(src);
        let mut value = Matrix::zeros(rows, m.cols());
        for &(r, s, w) in &entries {
            if r >= rows || s >= m.rows() {
                return Err(Error::validation(format!(
                    "sparse_rows: entry ({r}, {s}) outside {rows}x{} <- {}",
                    m.cols(),
                    m.rows()
                )));
            }
            let src_row = m.row(s);
            for (o, x) in value.row_mut(r).iter_mut().zip(src_row) {
                *o += w * x;
            }
        }
        Ok(self.push(value, Op::SparseRows(src, entries)))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ma, mb) = (self.value(a), self.value(b));
        if ma.rows() != mb.rows() {
            return Err(shape_error("concat_cols", ma, mb));
        }
        let mut data = Vec::with_capacity(ma.len() + mb.len());
        for r in 0..ma.rows() {
            data.extend_from_slice(ma.row(r));
            data.extend_from_slice(mb.row(r));
        }
        let value = Matrix::from_vec(ma.rows(), ma.cols() + mb.cols(), data)?;
        Ok(self.push(value, Op::ConcatCols(a, b)))
    }

    pub fn concat_rows(&mut self, parts: Vec<Var>) -> Result<Var> {
        let cols = parts.first().map_or(0, |&p| self.value(p).cols());
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in &parts {
            let m = self.value(p);
            if m.cols() != cols {
                return Err(Error::validation("concat_rows: column mismatch"));
            }
            data.extend_from_slice(m.as_slice());
            rows += m.rows();
        }
        let value = Matrix::from_vec(rows, cols, data)?;
        Ok(self.push(value, Op::ConcatRows(parts)))
    }

    pub fn slice_rows(&mut self, src: Var, start: usize, len: usize) -> Result<Var> {
        let m = self.value(src);
        if start + len > m.rows() {
            return Err(Error::validation(format!(
                "slice_rows: {start}..{} outside {} rows",
                start + len,
                m.rows()
            )));
        }
        let c = m.cols();
        let value = Matrix::from_vec(len, c, m.as_slice()[start * c..(start + len) * c].to_vec())?;
        Ok(self.push(value, Op::SliceRows(src, start)))
    }

    /// Same-length 1-D convolution along the embedding axis.
    ///
    /// `input` is `Q x (in_channels · d)` (channel-major per row), `kernel`
    /// is `F x (in_channels · w)` with odd `w`, `bias` is `1 x F`. The result
    /// is `Q x (F · d)` with zero padding of `(w - 1) / 2` on both sides.
    pub fn conv1d(&mut self, input: Var, kernel: Var, bias: Var, in_channels: usize) -> Result<Var> {
        let (x, k, b) = (self.value(input), self.value(kernel), self.value(bias));
        if in_channels == 0 || x.cols() % in_channels != 0 || k.cols() % in_channels != 0 {
            return Err(Error::validation("conv1d: channel count does not divide widths"));
        }
        let d = x.cols() / in_channels;
        let w = k.cols() / in_channels;
        let filters = k.rows();
        if w.is_multiple_of(2) {
            return Err(Error::validation(format!("conv1d: kernel width {w} must be odd")));
        }
        if b.rows() != 1 || b.cols() != filters {
            return Err(shape_error("conv1d bias", k, b));
        }
        let pad = (w - 1) / 2;
        let mut value = Matrix::zeros(x.rows(), filters * d);
        for q in 0..x.rows() {
            let xr = x.row(q);
            let out = value.row_mut(q);
            for f in 0..filters {
                let kr = k.row(f);
                for j in 0..d {
                    let mut acc = b[(0, f)];
                    for ch in 0..in_channels {
                        for t in 0..w {
                            let pos = j + t;
                            if pos < pad || pos - pad >= d {
                                continue;
                            }
                            acc += kr[ch * w + t] * xr[ch * d + pos - pad];
                        }
                    }
                    out[f * d + j] = acc;
                }
            }
        }
        Ok(self.push(
            value,
            Op::Conv1d {
                input,
                kernel,
                bias,
                in_channels,
            },
        ))
    }

    pub fn softmax(&mut self, logits: Var) -> Result<Var> {
        let value = ops::softmax_rows(self.value(logits))?;
        Ok(self.push(value, Op::Softmax(logits)))
    }

    /// Summed negative log-likelihood, `1 x 1`.
    pub fn nll_sum(&mut self, probs: Var, targets: Vec<usize>) -> Result<Var> {
        let total = ops::nll_sum(self.value(probs), &targets)?;
        Ok(self.push(Matrix::scalar(total), Op::NllSum(probs, targets)))
    }

    pub fn linear_map(&mut self, src: Var, map: Arc<dyn LinearMap>) -> Result<Var> {
        let value = map.apply(self.value(src))?;
        Ok(self.push(value, Op::Linear(src, map)))
    }

    /// Reverse sweep from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::validation("backward requires a 1x1 loss"));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b))?;
                    let gb = self.value(*a).t_matmul(&g)?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::MatMulT(a, b) => {
                    let ga = g.matmul(self.value(*b))?;
                    let gb = g.t_matmul(self.value(*a))?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.scale(-1.0));
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |x, y| x * y);
                    let gb = g.zip_map(self.value(*a), |x, y| x * y);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddRow(a, b) => {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, x) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    accumulate(&mut grads, *b, gb);
                    accumulate(&mut grads, *a, g);
                }
                Op::Affine(x, scale) => accumulate(&mut grads, *x, g.scale(*scale)),
                Op::Sigmoid(x) => {
                    let gx = g.zip_map(&node.value, |gi, s| gi * s * (1.0 - s));
                    accumulate(&mut grads, *x, gx);
                }
                Op::Tanh(x) => {
                    let gx = g.zip_map(&node.value, |gi, t| gi * (1.0 - t * t));
                    accumulate(&mut grads, *x, gx);
                }
                Op::Rrelu(x, mult) => accumulate(&mut grads, *x, g.zip_map(mult, |a, m| a * m)),
                Op::GatherRows(src, idx) => {
                    let s = self.value(*src);
                    let mut gs = Matrix::zeros(s.rows(), s.cols());
                    for (r, &i) in idx.iter().enumerate() {
                        for (o, x) in gs.row_mut(i).iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    accumulate(&mut grads, *src, gs);
                }
                Op::SparseRows(src, entries) => {
                    let s = self.value(*src);
                    let mut gs = Matrix::zeros(s.rows(), s.cols());
                    for &(r, si, w) in entries {
                        for (o, x) in gs.row_mut(si).iter_mut().zip(g.row(r)) {
                            *o += w * x;
                        }
                    }
                    accumulate(&mut grads, *src, gs);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).cols();
                    let cb = self.value(*b).cols();
                    let mut ga = Matrix::zeros(g.rows(), ca);
                    let mut gb = Matrix::zeros(g.rows(), cb);
                    for r in 0..g.rows() {
                        ga.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                        gb.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::ConcatRows(parts) => {
                    let c = g.cols();
                    let mut start = 0;
                    for &p in parts {
                        let rows = self.value(p).rows();
                        let gp = Matrix::from_vec(
                            rows,
                            c,
                            g.as_slice()[start * c..(start + rows) * c].to_vec(),
                        )?;
                        accumulate(&mut grads, p, gp);
                        start += rows;
                    }
                }
                Op::SliceRows(src, start) => {
                    let s = self.value(*src);
                    let mut gs = Matrix::zeros(s.rows(), s.cols());
                    let c = s.cols();
                    gs.as_mut_slice()[start * c..start * c + g.len()].copy_from_slice(g.as_slice());
                    accumulate(&mut grads, *src, gs);
                }
                Op::Conv1d {
                    input,
                    kernel,
                    bias,
                    in_channels,
                } => {
                    let (gx, gk, gb) = conv1d_backward(
                        self.value(*input),
                        self.value(*kernel),
                        *in_channels,
                        &g,
                    );
                    accumulate(&mut grads, *input, gx);
                    accumulate(&mut grads, *kernel, gk);
                    accumulate(&mut grads, *bias, gb);
                }
                Op::Softmax(x) => {
                    let p = &node.value;
                    let mut gx = Matrix::zeros(p.rows(), p.cols());
                    for r in 0..p.rows() {
                        let inner: f64 = g.row(r).iter().zip(p.row(r)).map(|(a, b)| a * b).sum();
                        for ((o, gi), pi) in gx.row_mut(r).iter_mut().zip(g.row(r)).zip(p.row(r)) {
                            *o = pi * (gi - inner);
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::NllSum(probs, targets) => {
                    let p = self.value(*probs);
                    let upstream = g.item();
                    let mut gp = Matrix::zeros(p.rows(), p.cols());
                    for (r, &t) in targets.iter().enumerate() {
                        let pt = p[(r, t)];
                        if pt > ops::PROB_FLOOR {
                            gp[(r, t)] = -upstream / pt;
                        }
                    }
                    accumulate(&mut grads, *probs, gp);
                }
                Op::Linear(src, map) => {
                    let gs = map.apply_adjoint(&g)?;
                    accumulate(&mut grads, *src, gs);
                }
            }
        }
        Ok(Gradients { grads })
    }

    /// Adds the gradients of every parameter leaf into `store`.
    pub fn accumulate_param_grads(&self, grads: &Gradients, store: &mut ParamStore) {
        for (node, g) in self.nodes.iter().zip(&grads.grads) {
            if let (Some(id), Some(g)) = (node.param, g) {
                store.accumulate_grad(id, g);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn conv1d_backward(
    x: &Matrix,
    k: &Matrix,
    in_channels: usize,
    g: &Matrix,
) -> (Matrix, Matrix, Matrix) {
    let d = x.cols() / in_channels;
    let w = k.cols() / in_channels;
    let filters = k.rows();
    let pad = (w - 1) / 2;
    let mut gx = Matrix::zeros(x.rows(), x.cols());
    let mut gk = Matrix::zeros(k.rows(), k.cols());
    let mut gb = Matrix::zeros(1, filters);
    for q in 0..x.rows() {
        let xr = x.row(q);
        let gr = g.row(q);
        for f in 0..filters {
            for j in 0..d {
                let go = gr[f * d + j];
                if go == 0.0 {
                    continue;
                }
                gb[(0, f)] += go;
                for ch in 0..in_channels {
                    for t in 0..w {
                        let pos = j + t;
                        if pos < pad || pos - pad >= d {
                            continue;
                        }
                        let xi = ch * d + pos - pad;
                        gk[(f, ch * w + t)] += go * xr[xi];
                        gx[(q, xi)] += go * k[(f, ch * w + t)];
                    }
                }
            }
        }
    }
    (gx, gk, gb)
}

/// Gradients from one [`Tape::backward`] call.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. a leaf, or `None` if it did not reach it.
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ops::{seeded_rng, RRELU_LOWER, RRELU_UPPER};

    fn tape() -> Tape {
        Tape::eval(RRELU_LOWER, RRELU_UPPER).unwrap()
    }

    fn numeric_grad(f: impl Fn(&Matrix) -> f64, x: &Matrix) -> Matrix {
        let eps = 1e-6;
        let mut g = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.len() {
            let mut hi = x.clone();
            hi.as_mut_slice()[i] += eps;
            let mut lo = x.clone();
            lo.as_mut_slice()[i] -= eps;
            g.as_mut_slice()[i] = (f(&hi) - f(&lo)) / (2.0 * eps);
        }
        g
    }

    #[test]
    fn conv1d_matches_direct_loop_and_its_gradient() {
        let mut rng = seeded_rng(11);
        let x = crate::numerics::xavier_init_from(3, 8, &mut rng).unwrap();
        let k = crate::numerics::xavier_init_from(5, 6, &mut rng).unwrap();
        let b = crate::numerics::xavier_init_from(1, 5, &mut rng).unwrap();

        let run = |x: &Matrix, k: &Matrix, b: &Matrix| {
            let mut t = tape();
            let (xv, kv, bv) = (t.constant(x.clone()), t.constant(k.clone()), t.constant(b.clone()));
            let y = t.conv1d(xv, kv, bv, 2).unwrap();
            let s = t.value(y).as_slice().iter().enumerate().map(|(i, v)| v * (1.0 + i as f64 * 0.01)).sum::<f64>();
            (t, xv, kv, bv, y, s)
        };

        // direct evaluation for one output cell: q=1, f=2, j=0 (left edge)
        let (t, xv, kv, bv, y, _) = run(&x, &k, &b);
        let mut want = b[(0, 2)];
        for ch in 0..2 {
            for tt in 1..3 {
                want += k[(2, ch * 3 + tt)] * x[(1, ch * 4 + tt - 1)];
            }
        }
        assert!((t.value(y)[(1, 2 * 4)] - want).abs() < 1e-14);

        let weights: Vec<f64> = (0..t.value(y).len()).map(|i| 1.0 + i as f64 * 0.01).collect();
        let mut t = t;
        let wv = t.constant(Matrix::from_vec(3, 20, weights).unwrap());
        let prod = t.mul(y, wv).unwrap();
        let ones = t.constant(Matrix::filled(20, 1, 1.0));
        let col = t.matmul(prod, ones).unwrap();
        let ones_r = t.constant(Matrix::filled(1, 3, 1.0));
        let loss = t.matmul(ones_r, col).unwrap();
        let g = t.backward(loss).unwrap();

        let nx = numeric_grad(|m| run(m, &k, &b).5, &x);
        let nk = numeric_grad(|m| run(&x, m, &b).5, &k);
        let nb = numeric_grad(|m| run(&x, &k, m).5, &b);
        assert!(g.wrt(xv).unwrap().max_abs_diff(&nx) < 1e-7);
        assert!(g.wrt(kv).unwrap().max_abs_diff(&nk) < 1e-7);
        assert!(g.wrt(bv).unwrap().max_abs_diff(&nb) < 1e-7);
    }

    #[test]
    fn softmax_nll_gradient_is_p_minus_onehot() {
        let mut t = tape();
        let logits = t.constant(Matrix::row_vector(&[0.3, -1.0, 2.0]));
        let p = t.softmax(logits).unwrap();
        let loss = t.nll_sum(p, vec![1]).unwrap();
        let g = t.backward(loss).unwrap();
        let probs = t.value(p).clone();
        let gl = g.wrt(logits).unwrap();
        for i in 0..3 {
            let want = probs[(0, i)] - if i == 1 { 1.0 } else { 0.0 };
            assert!((gl[(0, i)] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn train_mode_rrelu_is_seeded() {
        let x = Matrix::filled(2, 3, -1.0);
        let run = |seed| {
            let mut t = Tape::train(RRELU_LOWER, RRELU_UPPER, seeded_rng(seed)).unwrap();
            let v = t.constant(x.clone());
            let y = t.rrelu(v);
            t.value(y).clone()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
        assert!(run(3).as_slice().iter().all(|v| (-1.0 / 3.0..=-1.0 / 8.0).contains(v)));
    }

    #[test]
    fn shape_errors_surface() {
        let mut t = tape();
        let a = t.constant(Matrix::zeros(2, 3));
        let b = t.constant(Matrix::zeros(3, 2));
        assert!(t.add(a, b).is_err());
        assert!(t.gather_rows(a, vec![2]).is_err());
        assert!(t.backward(a).is_err());
    }
}
