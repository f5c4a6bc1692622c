//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! A [`Graph`] records one forward pass. Nodes are appended in topological
//! order, so the backward sweep is a single reverse iteration.

mod adam;
mod params;

use std::sync::Arc;

pub use adam::{Adam, AdamConfig};
pub use params::{ParamId, ParamStore};

use crate::scalar::Scalar;
use crate::tensor::Matrix;
use crate::training::losses;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Boolean attention mask, `true` where a query row may attend a key column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttnMask {
    rows: usize,
    cols: usize,
    allowed: Vec<bool>,
}

impl AttnMask {
    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut allowed = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                allowed.push(f(r, c));
            }
        }
        Self {
            rows,
            cols,
            allowed,
        }
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |_, _| true)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.allowed[r * self.cols + c]
    }

    pub fn count_allowed(&self) -> usize {
        self.allowed.iter().filter(|&&a| a).count()
    }
}

enum Op<T> {
    Input,
    Param,
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// Elementwise product with a constant.
    MulConst(NodeId, Matrix<T>),
    Scale(NodeId, T),
    Gelu(NodeId),
    /// `softplus(x) + floor`
    Softplus(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        normalized: Matrix<T>,
        inv_std: Vec<T>,
    },
    Attention {
        q: NodeId,
        k: NodeId,
        v: NodeId,
        heads: usize,
        probs: Vec<Matrix<T>>,
    },
    ConcatRows(Vec<NodeId>),
    SliceRows(NodeId, usize),
    RepeatRow(NodeId),
    Mse(NodeId, Matrix<T>),
    Velocity(NodeId, Matrix<T>),
    Kl(NodeId, NodeId),
}

struct Node<T> {
    value: Matrix<T>,
    op: Op<T>,
}

pub struct Graph<'p, T> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_nodes: Vec<Option<NodeId>>,
}

/// Gradients of every parameter touched by the graph.
pub struct Gradients<T> {
    pub per_param: Vec<Option<Matrix<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn global_norm(&self) -> T {
        self.per_param
            .iter()
            .flatten()
            .map(Matrix::sum_squares)
            .sum::<T>()
            .sqrt()
    }

    pub fn accumulate(&mut self, other: &Gradients<T>, weight: T) {
        for (mine, theirs) in self.per_param.iter_mut().zip(&other.per_param) {
            if let Some(g) = theirs {
                match mine {
                    Some(m) => m.scaled_add_assign(weight, g),
                    None => {
                        let mut m = g.clone();
                        m.scale_in_place(weight);
                        *mine = Some(m);
                    }
                }
            }
        }
    }

    pub fn zeros_like(store: &ParamStore<T>) -> Self {
        Self {
            per_param: vec![None; store.len()],
        }
    }
}

pub const SOFTPLUS_FLOOR: f64 = 1e-6;

fn gelu_parts<T: Scalar>(x: T) -> (T, T) {
    // tanh approximation
    let c = T::of(0.797_884_560_802_865_4);
    let a = T::of(0.044_715);
    let half = T::of(0.5);
    let inner = c * (x + a * x * x * x);
    let th = inner.tanh();
    let value = half * x * (T::one() + th);
    let d_inner = c * (T::one() + T::of(3.0) * a * x * x);
    let deriv = half * (T::one() + th) + half * x * (T::one() - th * th) * d_inner;
    (value, deriv)
}

fn softplus<T: Scalar>(x: T) -> T {
    if x > T::of(20.0) {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<'p, T: Scalar> Graph<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
        }
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Matrix<T> {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> T {
        let v = self.value(id);
        debug_assert_eq!(v.shape(), (1, 1));
        v.as_slice()[0]
    }

    pub fn input(&mut self, value: Matrix<T>) -> NodeId {
        self.push(value, Op::Input)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(n) = self.param_nodes[id.index()] {
            return n;
        }
        let n = self.push(self.params.value(id).clone(), Op::Param);
        self.param_nodes[id.index()] = Some(n);
        n
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// Adds a `1 x n` row to every row of `x`.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let b = self.value(bias);
        assert_eq!(b.rows(), 1, "bias must be a row vector");
        let mut v = self.value(x).clone();
        assert_eq!(v.cols(), b.cols(), "bias width mismatch");
        let brow = b.row(0).to_vec();
        for r in 0..v.rows() {
            for (o, &bb) in v.row_mut(r).iter_mut().zip(&brow) {
                *o += bb;
            }
        }
        self.push(v, Op::AddBias(x, bias))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    pub fn mul_const(&mut self, x: NodeId, c: Matrix<T>) -> NodeId {
        let v = self.value(x).zip_map(&c, |a, b| a * b);
        self.push(v, Op::MulConst(x, c))
    }

    pub fn scale(&mut self, x: NodeId, s: T) -> NodeId {
        let v = self.value(x).map(|a| a * s);
        self.push(v, Op::Scale(x, s))
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(|a| gelu_parts(a).0);
        self.push(v, Op::Gelu(x))
    }

    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        let floor = T::of(SOFTPLUS_FLOOR);
        let v = self.value(x).map(|a| softplus(a) + floor);
        self.push(v, Op::Softplus(x))
    }

    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let eps = T::of(1e-5);
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let n = T::of_usize(cols);
        let mut normalized = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&a| (a - mean) * (a - mean)).sum::<T>() / n;
            let is = (var + eps).sqrt().recip();
            for (o, &a) in normalized.row_mut(r).iter_mut().zip(row) {
                *o = (a - mean) * is;
            }
            inv_std.push(is);
        }
        let g = self.value(gain).row(0).to_vec();
        let b = self.value(bias).row(0).to_vec();
        let mut out = normalized.clone();
        for r in 0..rows {
            for ((o, &gg), &bb) in out.row_mut(r).iter_mut().zip(&g).zip(&b) {
                *o = *o * gg + bb;
            }
        }
        self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            },
        )
    }

    /// Multi-head scaled dot-product attention without the output projection.
    ///
    /// Masked entries receive exactly zero weight; every row must allow at
    /// least one column.
    pub fn attention(
        &mut self,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        mask: Option<&Arc<AttnMask>>,
        heads: usize,
    ) -> NodeId {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (n, d) = qv.shape();
        let m = kv.rows();
        assert_eq!(kv.cols(), d);
        assert_eq!(vv.shape(), (m, d));
        assert!(d % heads == 0, "model width must divide into heads");
        if let Some(mask) = mask {
            assert_eq!((mask.rows(), mask.cols()), (n, m), "mask shape mismatch");
        }
        let dh = d / heads;
        let scale = T::one() / T::of_usize(dh).sqrt();
        let mut out = Matrix::zeros(n, d);
        let mut probs = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = col_block(qv, h * dh, dh);
            let kh = col_block(kv, h * dh, dh);
            let vh = col_block(vv, h * dh, dh);
            let mut s = qh.matmul_t(&kh);
            for r in 0..n {
                let row = s.row_mut(r);
                let allowed = |c: usize| mask.is_none_or(|mk| mk.get(r, c));
                let mut mx = T::neg_infinity();
                let mut visible = false;
                for (c, x) in row.iter().enumerate() {
                    if allowed(c) {
                        visible = true;
                        mx = mx.max(*x * scale);
                    }
                }
                assert!(visible, "attention row {r} has no visible keys");
                if !mx.is_finite() {
                    // Overflowed scores: poison the row so the loss reports it.
                    row.fill(T::nan());
                    continue;
                }
                let mut total = T::zero();
                for (c, x) in row.iter_mut().enumerate() {
                    if allowed(c) {
                        *x = (*x * scale - mx).exp();
                        total += *x;
                    } else {
                        *x = T::zero();
                    }
                }
                for x in row.iter_mut() {
                    *x /= total;
                }
            }
            let oh = s.matmul(&vh);
            set_col_block(&mut out, &oh, h * dh);
            probs.push(s);
        }
        self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                heads,
                probs,
            },
        )
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        let mats: Vec<&Matrix<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Matrix::vstack(&mats);
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.value(x).slice_rows(start, len);
        self.push(v, Op::SliceRows(x, start))
    }

    /// Tiles a `1 x d` row `times` times.
    pub fn repeat_row(&mut self, x: NodeId, times: usize) -> NodeId {
        let row = self.value(x);
        assert_eq!(row.rows(), 1);
        let parts: Vec<&Matrix<T>> = std::iter::repeat_n(row, times).collect();
        let v = Matrix::vstack(&parts);
        self.push(v, Op::RepeatRow(x))
    }

    pub fn mse_loss(&mut self, pred: NodeId, target: Matrix<T>) -> NodeId {
        let l = losses::mean_squared_distance(self.value(pred), &target)
            .expect("mse operands share a shape");
        self.push(Matrix::filled(1, 1, l), Op::Mse(pred, target))
    }

    pub fn velocity_loss(&mut self, pred: NodeId, target: Matrix<T>) -> NodeId {
        let l = losses::velocity_distance(self.value(pred), &target)
            .expect("velocity operands share a shape with at least two frames");
        self.push(Matrix::filled(1, 1, l), Op::Velocity(pred, target))
    }

    pub fn kl_loss(&mut self, mu: NodeId, sigma: NodeId) -> NodeId {
        let (m, s) = (self.value(mu).as_slice(), self.value(sigma).as_slice());
        assert_eq!(m.len(), s.len(), "mu and sigma widths differ");
        // sigma is positive unless the forward pass overflowed; surface that as a NaN loss.
        let l = losses::kl_standard_normal(m, s).unwrap_or_else(|_| T::nan());
        self.push(Matrix::filled(1, 1, l), Op::Kl(mu, sigma))
    }

    /// Reverse sweep from a `1 x 1` node.
    pub fn backward(&self, root: NodeId) -> Gradients<T> {
        assert_eq!(self.value(root).shape(), (1, 1), "backward root must be scalar");
        let mut grads: Vec<Option<Matrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Matrix::filled(1, 1, T::one()));

        fn acc<T: Scalar>(grads: &mut [Option<Matrix<T>>], id: NodeId, g: Matrix<T>) {
            match &mut grads[id.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=root.0).rev() {
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param => {
                    grads[idx] = Some(gout);
                }
                Op::MatMul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    if self.needs_grad(*a) {
                        acc(&mut grads, *a, gout.matmul_t(bv));
                    }
                    if self.needs_grad(*b) {
                        acc(&mut grads, *b, av.t_matmul(&gout));
                    }
                }
                Op::AddBias(x, b) => {
                    let mut gb = Matrix::zeros(1, gout.cols());
                    for r in 0..gout.rows() {
                        for (o, &g) in gb.row_mut(0).iter_mut().zip(gout.row(r)) {
                            *o += g;
                        }
                    }
                    acc(&mut grads, *b, gb);
                    acc(&mut grads, *x, gout);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, gout.clone());
                    acc(&mut grads, *a, gout);
                }
                Op::MulConst(x, c) => {
                    acc(&mut grads, *x, gout.zip_map(c, |g, cc| g * cc));
                }
                Op::Scale(x, s) => {
                    let s = *s;
                    acc(&mut grads, *x, gout.map(|g| g * s));
                }
                Op::Gelu(x) => {
                    let g = gout.zip_map(self.value(*x), |g, a| g * gelu_parts(a).1);
                    acc(&mut grads, *x, g);
                }
                Op::Softplus(x) => {
                    let g = gout.zip_map(self.value(*x), |g, a| g * sigmoid(a));
                    acc(&mut grads, *x, g);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    normalized,
                    inv_std,
                } => {
                    let (rows, cols) = gout.shape();
                    let gv = self.value(*gain).row(0);
                    let mut g_gain = Matrix::zeros(1, cols);
                    let mut g_bias = Matrix::zeros(1, cols);
                    let mut gx = Matrix::zeros(rows, cols);
                    let n = T::of_usize(cols);
                    for r in 0..rows {
                        let go = gout.row(r);
                        let xh = normalized.row(r);
                        let mut sum_dxh = T::zero();
                        let mut sum_dxh_xh = T::zero();
                        for c in 0..cols {
                            g_gain.row_mut(0)[c] += go[c] * xh[c];
                            g_bias.row_mut(0)[c] += go[c];
                            let dxh = go[c] * gv[c];
                            sum_dxh += dxh;
                            sum_dxh_xh += dxh * xh[c];
                        }
                        let is = inv_std[r];
                        let row = gx.row_mut(r);
                        for c in 0..cols {
                            let dxh = go[c] * gv[c];
                            row[c] = is * (dxh - sum_dxh / n - xh[c] * sum_dxh_xh / n);
                        }
                    }
                    acc(&mut grads, *gain, g_gain);
                    acc(&mut grads, *bias, g_bias);
                    acc(&mut grads, *x, gx);
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    heads,
                    probs,
                } => {
                    let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                    let d = qv.cols();
                    let dh = d / heads;
                    let scale = T::one() / T::of_usize(dh).sqrt();
                    let mut gq = Matrix::zeros(qv.rows(), d);
                    let mut gk = Matrix::zeros(kv.rows(), d);
                    let mut gv = Matrix::zeros(vv.rows(), d);
                    for (h, p) in probs.iter().enumerate() {
                        let qh = col_block(qv, h * dh, dh);
                        let kh = col_block(kv, h * dh, dh);
                        let vh = col_block(vv, h * dh, dh);
                        let go = col_block(&gout, h * dh, dh);
                        let gvh = p.t_matmul(&go);
                        let mut gp = go.matmul_t(&vh);
                        for r in 0..gp.rows() {
                            let prow = p.row(r);
                            let dot: T = gp.row(r).iter().zip(prow).map(|(&a, &b)| a * b).sum();
                            for (x, &pp) in gp.row_mut(r).iter_mut().zip(prow) {
                                *x = pp * (*x - dot) * scale;
                            }
                        }
                        let gqh = gp.matmul(&kh);
                        let gkh = gp.t_matmul(&qh);
                        set_col_block(&mut gq, &gqh, h * dh);
                        set_col_block(&mut gk, &gkh, h * dh);
                        set_col_block(&mut gv, &gvh, h * dh);
                    }
                    acc(&mut grads, *q, gq);
                    acc(&mut grads, *k, gk);
                    acc(&mut grads, *v, gv);
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let rows = self.value(p).rows();
                        acc(&mut grads, p, gout.slice_rows(start, rows));
                        start += rows;
                    }
                }
                Op::SliceRows(x, start) => {
                    let xv = self.value(*x);
                    let mut g = Matrix::zeros(xv.rows(), xv.cols());
                    for r in 0..gout.rows() {
                        g.row_mut(start + r).copy_from_slice(gout.row(r));
                    }
                    acc(&mut grads, *x, g);
                }
                Op::RepeatRow(x) => {
                    let mut g = Matrix::zeros(1, gout.cols());
                    for r in 0..gout.rows() {
                        for (o, &v) in g.row_mut(0).iter_mut().zip(gout.row(r)) {
                            *o += v;
                        }
                    }
                    acc(&mut grads, *x, g);
                }
                Op::Mse(pred, target) => {
                    let s = gout.as_slice()[0];
                    let mut g = losses::mean_squared_distance_grad(self.value(*pred), target)
                        .expect("shapes checked in forward");
                    g.scale_in_place(s);
                    acc(&mut grads, *pred, g);
                }
                Op::Velocity(pred, target) => {
                    let s = gout.as_slice()[0];
                    let mut g = losses::velocity_distance_grad(self.value(*pred), target)
                        .expect("shapes checked in forward");
                    g.scale_in_place(s);
                    acc(&mut grads, *pred, g);
                }
                Op::Kl(mu, sigma) => {
                    let s = gout.as_slice()[0];
                    let (muv, sv) = (self.value(*mu), self.value(*sigma));
                    let (gm, gs) = losses::kl_standard_normal_grad(muv.as_slice(), sv.as_slice())
                        .unwrap_or_else(|_| (vec![T::nan(); muv.len()], vec![T::nan(); sv.len()]));
                    let to_row = |v: Vec<T>, like: &Matrix<T>| {
                        let mut m = Matrix::from_vec(like.rows(), like.cols(), v);
                        m.scale_in_place(s);
                        m
                    };
                    acc(&mut grads, *mu, to_row(gm, muv));
                    acc(&mut grads, *sigma, to_row(gs, sv));
                }
            }
        }

        let mut per_param = vec![None; self.params.len()];
        for (pidx, node) in self.param_nodes.iter().enumerate() {
            if let Some(n) = node {
                per_param[pidx] = grads[n.0].take();
            }
        }
        Gradients { per_param }
    }

    fn needs_grad(&self, id: NodeId) -> bool {
        !matches!(self.nodes[id.0].op, Op::Input)
    }
}

fn col_block<T: Scalar>(m: &Matrix<T>, start: usize, width: usize) -> Matrix<T> {
    if start == 0 && width == m.cols() {
        return m.clone();
    }
    Matrix::from_fn(m.rows(), width, |r, c| m[(r, start + c)])
}

fn set_col_block<T: Scalar>(dst: &mut Matrix<T>, src: &Matrix<T>, start: usize) {
    for r in 0..src.rows() {
        let cols = src.cols();
        dst.row_mut(r)[start..start + cols].copy_from_slice(src.row(r));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix<f64> {
        Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Builds a small graph exercising every op and returns the scalar loss.
    fn build(g: &mut Graph<'_, f64>, ids: &[ParamId], mask: &Arc<AttnMask>) -> NodeId {
        let x = g.param(ids[0]); // 4x6
        let w = g.param(ids[1]); // 6x6
        let b = g.param(ids[2]); // 1x6
        let gain = g.param(ids[3]);
        let bias = g.param(ids[4]);
        let tok = g.param(ids[5]); // 1x6
        let h = g.matmul(x, w);
        let h = g.add_bias(h, b);
        let h = g.layer_norm(h, gain, bias);
        let h = g.gelu(h);
        let t = g.repeat_row(tok, 4);
        let h = g.add(h, t);
        let head = g.slice_rows(h, 0, 1);
        let body = g.slice_rows(h, 1, 3);
        let cat = g.concat_rows(&[body, head]);
        let att = g.attention(cat, h, x, Some(mask), 2);
        let sp = g.softplus(att);
        let sc = g.scale(sp, 0.7);
        let mc = g.mul_const(sc, Matrix::from_fn(4, 6, |r, c| 0.1 * (r + c) as f64 - 0.3));
        let target = Matrix::from_fn(4, 6, |r, c| ((r * 6 + c) as f64).sin());
        let l1 = g.mse_loss(mc, target.clone());
        let l2 = g.velocity_loss(att, target);
        let mu = g.slice_rows(att, 0, 1);
        let sig_raw = g.slice_rows(att, 1, 1);
        let sig = g.softplus(sig_raw);
        let l3 = g.kl_loss(mu, sig);
        let s = g.add(l1, l2);
        g.add(s, l3)
    }

    #[test]
    fn every_op_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut store = ParamStore::new();
        let shapes = [(4, 6), (6, 6), (1, 6), (1, 6), (1, 6), (1, 6)];
        let ids: Vec<ParamId> = shapes
            .iter()
            .enumerate()
            .map(|(i, &(r, c))| store.add(format!("p{i}"), rand_mat(&mut rng, r, c)))
            .collect();
        let mask = Arc::new(AttnMask::from_fn(4, 4, |r, c| r == 0 || (r as isize - c as isize).abs() <= 1));

        let g = {
            let mut g = Graph::new(&store);
            let root = build(&mut g, &ids, &mask);
            g.backward(root)
        };

        let eval = |store: &ParamStore<f64>| {
            let mut g = Graph::new(store);
            let root = build(&mut g, &ids, &mask);
            g.scalar(root)
        };
        let h = 1e-6;
        for (pi, &id) in ids.iter().enumerate() {
            let analytic = g.per_param[pi].as_ref().expect("every parameter gets a gradient");
            for e in 0..store.value(id).len() {
                let mut plus = store.clone();
                plus.value_mut(id).as_mut_slice()[e] += h;
                let mut minus = store.clone();
                minus.value_mut(id).as_mut_slice()[e] -= h;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let an = analytic.as_slice()[e];
                let err = (fd - an).abs() / (fd.abs().max(an.abs()).max(1e-3));
                assert!(err < 1e-5, "param {pi} elem {e}: fd {fd} vs analytic {an}");
            }
        }
    }

    #[test]
    fn masked_weights_are_exactly_zero() {
        let mut store = ParamStore::new();
        let id = store.add("x", Matrix::from_fn(3, 4, |r, c| (r + 2 * c) as f64 * 0.3));
        let mask = Arc::new(AttnMask::from_fn(3, 3, |r, c| r == c));
        let mut g = Graph::new(&store);
        let x = g.param(id);
        let out = g.attention(x, x, x, Some(&mask), 2);
        assert_eq!(g.value(out), store.value(id));
    }
}
