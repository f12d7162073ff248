//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Graph`] records operations eagerly; [`Graph::backward`] walks the tape
//! in reverse and accumulates parameter gradients into [`Grads`]. Scalars are
//! `1 x 1` matrices.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};

use super::params::{Grads, Mat, ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
struct LstmCache {
    /// Activated gates per time step, columns `[i | f | g | o]`.
    gates: Mat,
    cell: Mat,
    tanh_cell: Mat,
    reverse: bool,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Gather { table: ParamId, ids: Vec<usize> },
    MatMul(Var, Var),
    /// `a * b^T`
    MatMulBt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Abs(Var),
    Square(Var),
    Sqrt(Var),
    /// `|x|^p`
    PowAbs(Var, f64),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SelectRows(Var, Vec<usize>),
    MeanRows(Var),
    MaxRows(Var, Vec<usize>),
    SumAll(Var),
    MeanAll(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    PickRows(Var, Vec<usize>),
    Lstm { x: Var, w: Var, u: Var, b: Var, cache: Box<LstmCache> },
}

#[derive(Debug)]
struct Node {
    value: Option<Mat>,
    op: Op,
    needs_grad: bool,
}

pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<Var>>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softmax_row(row: ArrayView1<f64>) -> Array1<f64> {
    let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let mut e = row.mapv(|x| (x - max).exp());
    let z = e.sum();
    e /= z;
    e
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            param_nodes: vec![None; store.len()],
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Mat {
        let node = &self.nodes[v.0];
        match (&node.op, &node.value) {
            (Op::Param(p), _) => self.store.get(*p),
            (_, Some(m)) => m,
            _ => unreachable!("non-parameter node without value"),
        }
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.dim(), (1, 1));
        m[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Mat, op: Op, needs_grad: bool) -> Var {
        debug_assert!(value.iter().all(|x| !x.is_nan()), "NaN produced by {op:?}");
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, a: Var, value: Mat, op: Op) -> Var {
        let ng = self.needs(a);
        self.push(value, op, ng)
    }

    fn binary(&mut self, a: Var, b: Var, value: Mat, op: Op) -> Var {
        let ng = self.needs(a) || self.needs(b);
        self.push(value, op, ng)
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar_const(&mut self, x: f64) -> Var {
        self.constant(Array2::from_elem((1, 1), x))
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes[id.0] = Some(v);
        v
    }

    /// Rows `ids` of a parameter table, as an `ids.len() x cols` matrix.
    pub fn gather(&mut self, table: ParamId, ids: &[usize]) -> Var {
        let t = self.store.get(table);
        let mut out = Array2::zeros((ids.len(), t.ncols()));
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).assign(&t.row(id));
        }
        self.push(out, Op::Gather { table, ids: ids.to_vec() }, true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.binary(a, b, v, Op::MatMul(a, b))
    }

    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.binary(a, b, v, Op::MatMulBt(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.binary(a, b, v, Op::Add(a, b))
    }

    /// `a` plus a `1 x n` row broadcast over every row.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        debug_assert_eq!(self.shape(row).0, 1);
        let v = self.value(a) + self.value(row);
        self.binary(a, row, v, Op::AddRow(a, row))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.binary(a, b, v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.binary(a, b, v, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) / self.value(b);
        self.binary(a, b, v, Op::Div(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.unary(a, v, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) + c;
        self.unary(a, v, Op::AddScalar(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.unary(a, v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.unary(a, v, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.unary(a, v, Op::Relu(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::abs);
        self.unary(a, v, Op::Abs(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x * x);
        self.unary(a, v, Op::Square(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::sqrt);
        self.unary(a, v, Op::Sqrt(a))
    }

    pub fn pow_abs(&mut self, a: Var, p: f64) -> Var {
        let v = self.value(a).mapv(|x| x.abs().powf(p));
        self.unary(a, v, Op::PowAbs(a, p))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.unary(a, v, Op::SliceCols(a, start))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![start..start + len, ..]).to_owned();
        self.unary(a, v, Op::SliceRows(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(v, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("column counts agree");
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(v, Op::ConcatRows(parts.to_vec()), ng)
    }

    pub fn select_rows(&mut self, a: Var, rows: &[usize]) -> Var {
        let v = self.value(a).select(Axis(0), rows);
        self.unary(a, v, Op::SelectRows(a, rows.to_vec()))
    }

    pub fn row(&mut self, a: Var, r: usize) -> Var {
        self.slice_rows(a, r, 1)
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).mean_axis(Axis(0)).expect("non-empty").insert_axis(Axis(0));
        self.unary(a, v, Op::MeanRows(a))
    }

    /// Column-wise maximum over rows; ties pick the earliest row.
    pub fn max_rows(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let mut arg = vec![0usize; m.ncols()];
        let mut out = Array2::zeros((1, m.ncols()));
        for (j, col) in m.columns().into_iter().enumerate() {
            let mut best = 0;
            for (i, &x) in col.iter().enumerate() {
                if x > col[best] {
                    best = i;
                }
            }
            arg[j] = best;
            out[[0, j]] = col[best];
        }
        self.unary(a, out, Op::MaxRows(a, arg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Array2::from_elem((1, 1), self.value(a).sum());
        self.unary(a, v, Op::SumAll(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let v = Array2::from_elem((1, 1), m.sum() / m.len() as f64);
        self.unary(a, v, Op::MeanAll(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let mut out = Array2::zeros(m.dim());
        for (i, row) in m.rows().into_iter().enumerate() {
            out.row_mut(i).assign(&softmax_row(row));
        }
        self.unary(a, out, Op::SoftmaxRows(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let mut out = Array2::zeros(m.dim());
        for (i, row) in m.rows().into_iter().enumerate() {
            let max = row.fold(f64::NEG_INFINITY, |acc, &x| acc.max(x));
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            out.row_mut(i).assign(&row.mapv(|x| x - lse));
        }
        self.unary(a, out, Op::LogSoftmaxRows(a))
    }

    /// Column vector with element `idx[i]` of every row `i`.
    pub fn pick_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let m = self.value(a);
        let v = Array2::from_shape_fn((idx.len(), 1), |(i, _)| m[[i, idx[i]]]);
        self.unary(a, v, Op::PickRows(a, idx.to_vec()))
    }

    /// Single-layer LSTM over the rows of `x` (`T x in`).
    ///
    /// `w` is `in x 4h`, `u` is `h x 4h`, `b` is `1 x 4h`, gate column blocks
    /// ordered input, forget, cell, output. Initial state is zero. With
    /// `reverse` the sequence is consumed last row first; row `t` of the
    /// output is always the state after consuming row `t`.
    pub fn lstm(&mut self, x: Var, w: Var, u: Var, b: Var, reverse: bool) -> Var {
        let (xm, wm, um, bm) = (self.value(x), self.value(w), self.value(u), self.value(b));
        let t_len = xm.nrows();
        let h = um.nrows();
        debug_assert_eq!(wm.ncols(), 4 * h);
        let xw = xm.dot(wm) + bm;
        let mut gates = Array2::zeros((t_len, 4 * h));
        let mut cell = Array2::zeros((t_len, h));
        let mut tanh_cell = Array2::zeros((t_len, h));
        let mut out = Array2::zeros((t_len, h));
        let mut h_prev = Array1::<f64>::zeros(h);
        let mut c_prev = Array1::<f64>::zeros(h);
        for step in 0..t_len {
            let t = if reverse { t_len - 1 - step } else { step };
            let mut z = xw.row(t).to_owned();
            if step > 0 {
                z += &h_prev.dot(um);
            }
            let mut grow = gates.row_mut(t);
            for k in 0..h {
                let i = sigmoid(z[k]);
                let f = sigmoid(z[h + k]);
                let g = z[2 * h + k].tanh();
                let o = sigmoid(z[3 * h + k]);
                grow[k] = i;
                grow[h + k] = f;
                grow[2 * h + k] = g;
                grow[3 * h + k] = o;
                let c = f * c_prev[k] + i * g;
                let tc = c.tanh();
                cell[[t, k]] = c;
                tanh_cell[[t, k]] = tc;
                out[[t, k]] = o * tc;
                c_prev[k] = c;
                h_prev[k] = o * tc;
            }
        }
        let ng = [x, w, u, b].iter().any(|&v| self.needs(v));
        let cache = Box::new(LstmCache {
            gates,
            cell,
            tanh_cell,
            reverse,
        });
        self.push(out, Op::Lstm { x, w, u, b, cache }, ng)
    }

    /// Backpropagates from the scalar `loss`, adding parameter gradients to `grads`.
    pub fn backward(&self, loss: Var, grads: &mut Grads) {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar loss");
        let mut g: Vec<Option<Mat>> = (0..=loss.0).map(|_| None).collect();
        g[loss.0] = Some(Array2::ones((1, 1)));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(gout) = g[idx].take() else { continue };
            self.backprop_node(node, &gout, &mut g, grads);
        }
    }

    fn backprop_node(&self, node: &Node, gout: &Mat, g: &mut [Option<Mat>], grads: &mut Grads) {
        let out = node.value.as_ref();
        let mut acc = |v: Var, delta: Mat| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut g[v.0] {
                Some(existing) => *existing += &delta,
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Param(p) => grads.accumulate(*p, gout),
            Op::Gather { table, ids } => {
                let shape = self.store.get(*table).dim();
                let slot = grads.slot(*table, shape);
                for (r, &id) in ids.iter().enumerate() {
                    let mut row = slot.row_mut(id);
                    row += &gout.row(r);
                }
            }
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    acc(*a, gout.dot(&self.value(*b).t()));
                }
                if self.needs(*b) {
                    acc(*b, self.value(*a).t().dot(gout));
                }
            }
            Op::MatMulBt(a, b) => {
                if self.needs(*a) {
                    acc(*a, gout.dot(self.value(*b)));
                }
                if self.needs(*b) {
                    acc(*b, gout.t().dot(self.value(*a)));
                }
            }
            Op::Add(a, b) => {
                acc(*a, gout.clone());
                acc(*b, gout.clone());
            }
            Op::AddRow(a, row) => {
                acc(*a, gout.clone());
                acc(*row, gout.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::Sub(a, b) => {
                acc(*a, gout.clone());
                acc(*b, -gout);
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    acc(*a, gout * self.value(*b));
                }
                if self.needs(*b) {
                    acc(*b, gout * self.value(*a));
                }
            }
            Op::Div(a, b) => {
                let bv = self.value(*b);
                if self.needs(*a) {
                    acc(*a, gout / bv);
                }
                if self.needs(*b) {
                    let av = self.value(*a);
                    acc(*b, -(gout * av) / (bv * bv));
                }
            }
            Op::Scale(a, c) => acc(*a, gout * *c),
            Op::AddScalar(a) => acc(*a, gout.clone()),
            Op::Tanh(a) => {
                let y = out.expect("value");
                acc(*a, gout * &y.mapv(|y| 1.0 - y * y));
            }
            Op::Sigmoid(a) => {
                let y = out.expect("value");
                acc(*a, gout * &y.mapv(|y| y * (1.0 - y)));
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                acc(*a, gout * &x.mapv(|x| if x > 0.0 { 1.0 } else { 0.0 }));
            }
            Op::Abs(a) => {
                let x = self.value(*a);
                acc(*a, gout * &x.mapv(|x| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 }));
            }
            Op::Square(a) => {
                let x = self.value(*a);
                acc(*a, gout * &(x * 2.0));
            }
            Op::Sqrt(a) => {
                let y = out.expect("value");
                acc(*a, gout / &(y * 2.0));
            }
            Op::PowAbs(a, p) => {
                let x = self.value(*a);
                let d = x.mapv(|x| {
                    if x == 0.0 {
                        0.0
                    } else {
                        p * x.abs().powf(p - 1.0) * x.signum()
                    }
                });
                acc(*a, gout * &d);
            }
            Op::SliceCols(a, start) => {
                let mut d = Array2::zeros(self.shape(*a));
                d.slice_mut(s![.., *start..*start + gout.ncols()]).assign(gout);
                acc(*a, d);
            }
            Op::SliceRows(a, start) => {
                let mut d = Array2::zeros(self.shape(*a));
                d.slice_mut(s![*start..*start + gout.nrows(), ..]).assign(gout);
                acc(*a, d);
            }
            Op::ConcatCols(parts) => {
                let mut c = 0;
                for &p in parts {
                    let w = self.shape(p).1;
                    acc(p, gout.slice(s![.., c..c + w]).to_owned());
                    c += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut r = 0;
                for &p in parts {
                    let h = self.shape(p).0;
                    acc(p, gout.slice(s![r..r + h, ..]).to_owned());
                    r += h;
                }
            }
            Op::SelectRows(a, rows) => {
                let mut d = Array2::zeros(self.shape(*a));
                for (i, &r) in rows.iter().enumerate() {
                    let mut row = d.row_mut(r);
                    row += &gout.row(i);
                }
                acc(*a, d);
            }
            Op::MeanRows(a) => {
                let (n, _) = self.shape(*a);
                let row = gout.row(0).mapv(|x| x / n as f64);
                let d = row.broadcast(self.shape(*a)).expect("broadcast").to_owned();
                acc(*a, d);
            }
            Op::MaxRows(a, arg) => {
                let mut d = Array2::zeros(self.shape(*a));
                for (j, &i) in arg.iter().enumerate() {
                    d[[i, j]] = gout[[0, j]];
                }
                acc(*a, d);
            }
            Op::SumAll(a) => acc(*a, Array2::from_elem(self.shape(*a), gout[[0, 0]])),
            Op::MeanAll(a) => {
                let shape = self.shape(*a);
                acc(*a, Array2::from_elem(shape, gout[[0, 0]] / (shape.0 * shape.1) as f64));
            }
            Op::SoftmaxRows(a) => {
                let y = out.expect("value");
                let mut d = Array2::zeros(y.dim());
                for i in 0..y.nrows() {
                    let (yr, gr) = (y.row(i), gout.row(i));
                    let dot = yr.dot(&gr);
                    d.row_mut(i).assign(&(&yr * &gr.mapv(|x| x - dot)));
                }
                acc(*a, d);
            }
            Op::LogSoftmaxRows(a) => {
                let y = out.expect("value");
                let mut d = Array2::zeros(y.dim());
                for i in 0..y.nrows() {
                    let gsum = gout.row(i).sum();
                    let p = y.row(i).mapv(f64::exp);
                    d.row_mut(i).assign(&(&gout.row(i) - &(p * gsum)));
                }
                acc(*a, d);
            }
            Op::PickRows(a, idx_cols) => {
                let mut d = Array2::zeros(self.shape(*a));
                for (i, &c) in idx_cols.iter().enumerate() {
                    d[[i, c]] = gout[[i, 0]];
                }
                acc(*a, d);
            }
            Op::Lstm { x, w, u, b, cache } => {
                let h_out = out.expect("value");
                let (dx, dw, du, db) = self.lstm_backward(*x, *w, *u, h_out, cache, gout);
                acc(*x, dx);
                acc(*w, dw);
                acc(*u, du);
                acc(*b, db);
            }
        }
    }

    fn lstm_backward(&self, x: Var, w: Var, u: Var, h_out: &Mat, cache: &LstmCache, gout: &Mat) -> (Mat, Mat, Mat, Mat) {
        let (xm, wm, um) = (self.value(x), self.value(w), self.value(u));
        let t_len = xm.nrows();
        let h = um.nrows();
        let order: Vec<usize> = if cache.reverse { (0..t_len).rev().collect() } else { (0..t_len).collect() };
        let mut dz_all = Array2::<f64>::zeros((t_len, 4 * h));
        let mut du = Array2::<f64>::zeros(um.dim());
        let mut dh_next = Array1::<f64>::zeros(h);
        let mut dc_next = Array1::<f64>::zeros(h);
        for step in (0..t_len).rev() {
            let t = order[step];
            let prev = if step > 0 { Some(order[step - 1]) } else { None };
            let gates = cache.gates.row(t);
            let mut dz = dz_all.row_mut(t);
            for k in 0..h {
                let (i, f, g, o) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
                let tc = cache.tanh_cell[[t, k]];
                let dh = gout[[t, k]] + dh_next[k];
                let d_o = dh * tc;
                let dc = dh * o * (1.0 - tc * tc) + dc_next[k];
                let c_prev = prev.map_or(0.0, |p| cache.cell[[p, k]]);
                dz[k] = dc * g * i * (1.0 - i);
                dz[h + k] = dc * c_prev * f * (1.0 - f);
                dz[2 * h + k] = dc * i * (1.0 - g * g);
                dz[3 * h + k] = d_o * o * (1.0 - o);
                dc_next[k] = dc * f;
            }
            if let Some(p) = prev {
                let h_prev = h_out.row(p);
                let dz = dz_all.row(t);
                for r in 0..h {
                    let hp = h_prev[r];
                    if hp != 0.0 {
                        du.row_mut(r).scaled_add(hp, &dz);
                    }
                }
                dh_next = um.dot(&dz);
            } else {
                dh_next.fill(0.0);
            }
        }
        let dx = dz_all.dot(&wm.t());
        let dw = xm.t().dot(&dz_all);
        let db = dz_all.sum_axis(Axis(0)).insert_axis(Axis(0));
        (dx, dw, du, db)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_gradients;
    use crate::nn::params::uniform;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store_with(shapes: &[(&str, usize, usize)], seed: u64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        for &(n, r, c) in shapes {
            s.add(n, uniform(&mut rng, r, c, 1.0));
        }
        s
    }

    #[test]
    fn elementwise_and_reduction_gradients() {
        let store = store_with(&[("a", 3, 4), ("b", 3, 4), ("r", 1, 4), ("m", 4, 2)], 1);
        let loss = |s: &ParamStore, grads: Option<&mut Grads>| {
            let mut g = Graph::new(s);
            let a = g.param(s.id("a").unwrap());
            let b = g.param(s.id("b").unwrap());
            let r = g.param(s.id("r").unwrap());
            let m = g.param(s.id("m").unwrap());
            let x = g.mul(a, b);
            let x = g.add_row(x, r);
            let t = g.tanh(x);
            let sg = g.sigmoid(a);
            let y = g.sub(t, sg);
            let sq = g.square(y);
            let ab = g.abs(b);
            let p = g.pow_abs(b, 3.0);
            let z = g.add(sq, ab);
            let z = g.add(z, p);
            let z = g.div(z, sg);
            let mm = g.matmul(z, m);
            let mx = g.max_rows(mm);
            let mr = g.mean_rows(z);
            let sm = g.softmax_rows(mm);
            let ls = g.log_softmax_rows(mm);
            let pk = g.pick_rows(ls, &[0, 1, 1]);
            let bt = g.matmul_bt(a, b);
            let sl = g.slice_cols(bt, 1, 2);
            let rw = g.slice_rows(z, 1, 2);
            let sel = g.select_rows(z, &[2, 0, 2]);
            let cat = g.concat_rows(&[rw, sel]);
            let l1 = g.sum(mx);
            let l2 = g.mean(mr);
            let l3 = g.sum(sm);
            let l4 = g.sum(pk);
            let l5 = g.mean(sl);
            let l6 = g.mean(cat);
            let sq_root = g.add_scalar(l2, 3.0);
            let l2 = g.sqrt(sq_root);
            let parts = g.concat_cols(&[l1, l2, l3, l4, l5, l6]);
            let rl = g.relu(parts);
            let tot = g.sum(rl);
            let tot = g.scale(tot, 0.5);
            let val = g.scalar(tot);
            if let Some(gr) = grads {
                g.backward(tot, gr);
            }
            val
        };
        check_gradients(&store, loss, 1e-4).unwrap();
    }

    #[test]
    fn lstm_gradients_both_directions() {
        for reverse in [false, true] {
            let store = store_with(&[("x", 4, 3), ("w", 3, 8), ("u", 2, 8), ("b", 1, 8), ("proj", 2, 1)], 7);
            let loss = |s: &ParamStore, grads: Option<&mut Grads>| {
                let mut g = Graph::new(s);
                let x = g.param(s.id("x").unwrap());
                let w = g.param(s.id("w").unwrap());
                let u = g.param(s.id("u").unwrap());
                let b = g.param(s.id("b").unwrap());
                let p = g.param(s.id("proj").unwrap());
                let h = g.lstm(x, w, u, b, reverse);
                let y = g.matmul(h, p);
                let y = g.square(y);
                let l = g.sum(y);
                let v = g.scalar(l);
                if let Some(gr) = grads {
                    g.backward(l, gr);
                }
                v
            };
            check_gradients(&store, loss, 1e-4).unwrap();
        }
    }

    #[test]
    fn lstm_direction_semantics() {
        let store = store_with(&[("x", 3, 2), ("w", 2, 4), ("u", 1, 4), ("b", 1, 4)], 3);
        let run = |store: &ParamStore, reverse| {
            let mut g = Graph::new(store);
            let ids: Vec<_> = ["x", "w", "u", "b"].iter().map(|n| g.param(store.id(n).unwrap())).collect();
            let h = g.lstm(ids[0], ids[1], ids[2], ids[3], reverse);
            g.value(h).clone()
        };
        let fwd = run(&store, false);
        let bwd = run(&store, true);
        let mut changed = store.clone();
        changed.get_mut(store.id("x").unwrap())[[2, 0]] += 1.0;
        let fwd2 = run(&changed, false);
        let bwd2 = run(&changed, true);
        // the forward pass at t=0,1 never sees row 2
        assert_eq!(fwd.row(0), fwd2.row(0));
        assert_eq!(fwd.row(1), fwd2.row(1));
        assert_ne!(fwd.row(2), fwd2.row(2));
        // the backward pass sees row 2 everywhere
        assert_ne!(bwd.row(0), bwd2.row(0));
    }
}
