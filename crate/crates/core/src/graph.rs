//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation of one forward pass. Parameters live
//! in a [`ParamStore`] and enter the graph as leaves through
//! [`Graph::param`]; [`Graph::backward`] returns gradients for every node,
//! from which [`Gradients::params`] extracts per-parameter gradients.
//!
//! Piecewise-linear decisions (ReLU signs, max-pool winners) can be recorded
//! and replayed so that finite-difference checks stay on one smooth piece of
//! the function.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{corners_jacobian, pose_corners, wrap_angle, NUM_CORNERS};
use crate::tensor::{gemm, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    lookup: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Panics on duplicate names; parameter paths are fixed by the model layout.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            !self.lookup.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let id = self.values.len();
        self.lookup.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        ParamId(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.lookup.get(name).map(|&i| ParamId(i))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// A recorded piecewise decision, replayable in a later pass.
#[derive(Clone, Debug, PartialEq)]
pub enum Decision {
    Relu(Vec<bool>),
    Pool(Vec<usize>),
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    Relu(Var, Vec<bool>),
    Gelu(Var),
    Sigmoid(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, eps: f64 },
    Softmax(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    MaxPoolGroups { x: Var, argmax: Vec<usize> },
    Reshape(Var),
    SumAll(Var),
    MulConst(Var, Tensor),
    BoxCorners { poses: Var, sizes: Vec<[f64; 3]> },
    BoxHuber { pred: Var, target: Tensor, delta: f64 },
    BceLogitsMean { logits: Var, labels: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

struct DropoutState {
    rate: f64,
    rng: ChaCha8Rng,
}

/// One forward pass worth of recorded operations.
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<Option<Var>>,
    param_ids: Vec<(ParamId, Var)>,
    dropout: Option<DropoutState>,
    recorded: Vec<Decision>,
    replay: Option<Vec<Decision>>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

const LN_EPS: f64 = 1e-5;

impl Graph {
    /// Inference graph: dropout disabled.
    pub fn new() -> Self {
        Graph {
            nodes: Vec::with_capacity(512),
            params: Vec::new(),
            param_ids: Vec::new(),
            dropout: None,
            recorded: Vec::new(),
            replay: None,
        }
    }

    /// Training graph with inverted dropout at `rate`, seeded per pass.
    pub fn with_dropout(rate: f64, seed: u64) -> Self {
        let mut g = Graph::new();
        if rate > 0.0 {
            g.dropout = Some(DropoutState {
                rate,
                rng: ChaCha8Rng::seed_from_u64(seed),
            });
        }
        g
    }

    /// Replays decisions captured by [`Graph::decisions`] of an earlier pass
    /// with the same structure.
    pub fn with_replay(decisions: Vec<Decision>) -> Self {
        let mut g = Graph::new();
        g.replay = Some(decisions);
        g
    }

    pub fn decisions(&self) -> &[Decision] {
        &self.recorded
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A constant input; no gradient is tracked.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf that accumulates gradient (used for input sensitivity probes).
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if self.params.len() < store.len() {
            self.params.resize(store.len(), None);
        }
        if let Some(v) = self.params[id.0] {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Leaf, true);
        self.params[id.0] = Some(v);
        self.param_ids.push((id, v));
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MatMul(a, b), rg)
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul_t(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MatMulT(a, b), rg)
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "elementwise shape mismatch");
        Tensor::from_vec(
            ta.rows(),
            ta.cols(),
            ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect(),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip_with(a, b, |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip_with(a, b, |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip_with(a, b, |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Mul(a, b), rg)
    }

    /// Adds a `1×c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (ta, tr) = (self.value(a), self.value(row));
        assert_eq!(tr.rows(), 1, "add_row expects a single row");
        assert_eq!(ta.cols(), tr.cols(), "add_row width mismatch");
        let mut value = ta.clone();
        let c = ta.cols();
        for r in 0..ta.rows() {
            for (x, b) in value.row_mut(r).iter_mut().zip(tr.row(0)) {
                *x += b;
            }
        }
        debug_assert_eq!(value.cols(), c);
        let rg = self.rg(a) || self.rg(row);
        self.push(value, Op::AddRow(a, row), rg)
    }

    /// Scales row `i` of `a` by `col[i]` (`col` is `r×1`).
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let (ta, tc) = (self.value(a), self.value(col));
        assert_eq!(tc.shape(), (ta.rows(), 1), "mul_col expects an r×1 column");
        let mut value = ta.clone();
        for r in 0..ta.rows() {
            let s = tc.at(r, 0);
            for x in value.row_mut(r) {
                *x *= s;
            }
        }
        let rg = self.rg(a) || self.rg(col);
        self.push(value, Op::MulCol(a, col), rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x * s);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, s), rg)
    }

    fn next_replay(&self) -> Option<Decision> {
        let replay = self.replay.as_ref()?;
        let idx = self.recorded.len();
        replay.get(idx).cloned()
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let mask: Vec<bool> = match self.next_replay() {
            Some(Decision::Relu(mask)) if mask.len() == ta.len() => mask,
            Some(_) => panic!("replayed decision does not match a relu"),
            None => ta.data().iter().map(|&x| x > 0.0).collect(),
        };
        let value = Tensor::from_vec(
            ta.rows(),
            ta.cols(),
            ta.data()
                .iter()
                .zip(&mask)
                .map(|(&x, &m)| if m { x } else { 0.0 })
                .collect(),
        );
        self.recorded.push(Decision::Relu(mask.clone()));
        let rg = self.rg(a);
        self.push(value, Op::Relu(a, mask), rg)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| gelu_parts(x).0);
        let rg = self.rg(a);
        self.push(value, Op::Gelu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(value, Op::Sigmoid(a), rg)
    }

    /// Row-wise layer normalization with affine `gamma`, `beta` (each `1×c`).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let tx = self.value(x);
        let (tg, tb) = (self.value(gamma), self.value(beta));
        let c = tx.cols();
        assert_eq!(tg.shape(), (1, c), "layer_norm gamma shape");
        assert_eq!(tb.shape(), (1, c), "layer_norm beta shape");
        let mut value = Tensor::zeros(tx.rows(), c);
        for r in 0..tx.rows() {
            let row = tx.row(r);
            let (mean, rstd) = row_stats(row, LN_EPS);
            for (k, out) in value.row_mut(r).iter_mut().enumerate() {
                *out = (row[k] - mean) * rstd * tg.at(0, k) + tb.at(0, k);
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                eps: LN_EPS,
            },
            rg,
        )
    }

    /// Row-wise softmax, stabilized by max subtraction.
    pub fn softmax(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let mut value = ta.clone();
        for r in 0..ta.rows() {
            softmax_in_place(value.row_mut(r));
        }
        let rg = self.rg(a);
        self.push(value, Op::Softmax(a), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols(), cols, "concat_rows width mismatch");
            data.extend_from_slice(t.data());
            rows += t.rows();
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(
            Tensor::from_vec(rows, cols, data),
            Op::ConcatRows(parts.to_vec()),
            rg,
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut value = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.rows(), rows, "concat_cols height mismatch");
            for r in 0..rows {
                value.row_mut(r)[offset..offset + t.cols()].copy_from_slice(t.row(r));
            }
            offset += t.cols();
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(value, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let ta = self.value(a);
        assert!(start + len <= ta.rows(), "slice_rows out of range");
        let c = ta.cols();
        let value = Tensor::from_vec(len, c, ta.data()[start * c..(start + len) * c].to_vec());
        let rg = self.rg(a);
        self.push(value, Op::SliceRows(a, start), rg)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let ta = self.value(a);
        assert!(start + len <= ta.cols(), "slice_cols out of range");
        let mut value = Tensor::zeros(ta.rows(), len);
        for r in 0..ta.rows() {
            value
                .row_mut(r)
                .copy_from_slice(&ta.row(r)[start..start + len]);
        }
        let rg = self.rg(a);
        self.push(value, Op::SliceCols(a, start), rg)
    }

    /// Rows of `a` at `indices` (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, indices: Vec<usize>) -> Var {
        let ta = self.value(a);
        let c = ta.cols();
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in &indices {
            data.extend_from_slice(ta.row(i));
        }
        let value = Tensor::from_vec(indices.len(), c, data);
        let rg = self.rg(a);
        self.push(value, Op::GatherRows(a, indices), rg)
    }

    /// Column-wise max over consecutive groups of `group` rows.
    pub fn max_pool_groups(&mut self, x: Var, group: usize) -> Var {
        let tx = self.value(x);
        assert!(group > 0 && tx.rows() % group == 0, "max_pool group size");
        let groups = tx.rows() / group;
        let c = tx.cols();
        let argmax = match self.next_replay() {
            Some(Decision::Pool(idx)) if idx.len() == groups * c => idx,
            Some(_) => panic!("replayed decision does not match a max pool"),
            None => {
                let mut idx = vec![0; groups * c];
                for gi in 0..groups {
                    for k in 0..c {
                        let mut best = gi * group;
                        let mut best_v = tx.at(best, k);
                        for r in gi * group + 1..(gi + 1) * group {
                            let v = tx.at(r, k);
                            if v > best_v {
                                best = r;
                                best_v = v;
                            }
                        }
                        idx[gi * c + k] = best;
                    }
                }
                idx
            }
        };
        let mut value = Tensor::zeros(groups, c);
        for gi in 0..groups {
            for k in 0..c {
                value.set(gi, k, tx.at(argmax[gi * c + k], k));
            }
        }
        self.recorded.push(Decision::Pool(argmax.clone()));
        let rg = self.rg(x);
        self.push(value, Op::MaxPoolGroups { x, argmax }, rg)
    }

    /// Row-major reinterpretation.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let ta = self.value(a);
        assert_eq!(ta.len(), rows * cols, "reshape size mismatch");
        let value = Tensor::from_vec(rows, cols, ta.data().to_vec());
        let rg = self.rg(a);
        self.push(value, Op::Reshape(a), rg)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::SumAll(a), rg)
    }

    /// Inverted dropout; identity when the graph has dropout disabled.
    pub fn dropout(&mut self, a: Var) -> Var {
        let Some(state) = self.dropout.as_mut() else {
            return a;
        };
        let keep = 1.0 - state.rate;
        let (rows, cols) = self.nodes[a.0].value.shape();
        let mask: Vec<f64> = (0..rows * cols)
            .map(|_| {
                if state.rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let mask = Tensor::from_vec(rows, cols, mask);
        let value = self.zip_const(a, &mask);
        let rg = self.rg(a);
        self.push(value, Op::MulConst(a, mask), rg)
    }

    fn zip_const(&self, a: Var, m: &Tensor) -> Tensor {
        let ta = self.value(a);
        Tensor::from_vec(
            ta.rows(),
            ta.cols(),
            ta.data().iter().zip(m.data()).map(|(x, y)| x * y).collect(),
        )
    }

    /// Corners of `k` boxes: `poses` is `k×4` `(x, y, z, theta)`, output is
    /// `(8k)×4` rows `(x, y, z, t)` in canonical corner order.
    pub fn box_corners(&mut self, poses: Var, sizes: &[[f64; 3]], times: &[f64]) -> Var {
        let tp = self.value(poses);
        assert_eq!(tp.cols(), 4, "box poses must be k×4");
        assert_eq!(tp.rows(), sizes.len(), "one size per box");
        assert_eq!(tp.rows(), times.len(), "one timestamp per box");
        let mut value = Tensor::zeros(tp.rows() * NUM_CORNERS, 4);
        for b in 0..tp.rows() {
            let p = tp.row(b);
            let corners = pose_corners([p[0], p[1], p[2], p[3]], sizes[b]);
            for (j, c) in corners.iter().enumerate() {
                let row = value.row_mut(b * NUM_CORNERS + j);
                row[..3].copy_from_slice(c);
                row[3] = times[b];
            }
        }
        let rg = self.rg(poses);
        self.push(
            value,
            Op::BoxCorners {
                poses,
                sizes: sizes.to_vec(),
            },
            rg,
        )
    }

    /// Per-box Huber loss `k×1` over `(x, y, z, theta)` residuals, the angle
    /// residual wrapped into `(-pi, pi]`.
    pub fn box_huber(&mut self, pred: Var, target: Tensor, delta: f64) -> Var {
        let tp = self.value(pred);
        assert_eq!(tp.shape(), target.shape(), "box_huber shape mismatch");
        assert_eq!(tp.cols(), 4, "box_huber expects k×4");
        let mut value = Tensor::zeros(tp.rows(), 1);
        for r in 0..tp.rows() {
            let res = box_residual(tp.row(r), target.row(r));
            value.set(r, 0, res.iter().map(|&x| huber_value(x, delta)).sum());
        }
        let rg = self.rg(pred);
        self.push(
            value,
            Op::BoxHuber {
                pred,
                target,
                delta,
            },
            rg,
        )
    }

    /// Mean binary cross-entropy of logits (`n×1`) against `labels`.
    pub fn bce_logits_mean(&mut self, logits: Var, labels: Vec<f64>) -> Var {
        let tl = self.value(logits);
        assert_eq!(tl.len(), labels.len(), "bce label count");
        let n = labels.len().max(1) as f64;
        let total: f64 = tl
            .data()
            .iter()
            .zip(&labels)
            .map(|(&z, &y)| bce_with_logits(z, y))
            .sum();
        let rg = self.rg(logits);
        self.push(
            Tensor::scalar(total / n),
            Op::BceLogitsMean { logits, labels },
            rg,
        )
    }

    /// Gradients of the scalar `output` with respect to every node.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.value(output).len(), 1, "backward from a non-scalar");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Tensor::scalar(1.0));
        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.backward_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients {
            grads,
            param_ids: self.param_ids.clone(),
        }
    }

    fn backward_node(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let mut acc = |v: Var, delta: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(t) => t.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    let mut ga = Tensor::zeros(ta.rows(), ta.cols());
                    gemm(g, false, tb, true, &mut ga, 0.0);
                    acc(*a, ga);
                }
                if self.rg(*b) {
                    let mut gb = Tensor::zeros(tb.rows(), tb.cols());
                    gemm(ta, true, g, false, &mut gb, 0.0);
                    acc(*b, gb);
                }
            }
            Op::MatMulT(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    let mut ga = Tensor::zeros(ta.rows(), ta.cols());
                    gemm(g, false, tb, false, &mut ga, 0.0);
                    acc(*a, ga);
                }
                if self.rg(*b) {
                    let mut gb = Tensor::zeros(tb.rows(), tb.cols());
                    gemm(g, true, ta, false, &mut gb, 0.0);
                    acc(*b, gb);
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                acc(*a, elementwise(g, tb, |x, y| x * y));
                acc(*b, elementwise(g, ta, |x, y| x * y));
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                acc(*row, column_sums(g));
            }
            Op::MulCol(a, col) => {
                let (ta, tc) = (self.value(*a), self.value(*col));
                let mut ga = g.clone();
                let mut gc = Tensor::zeros(tc.rows(), 1);
                for r in 0..g.rows() {
                    let s = tc.at(r, 0);
                    let mut dot = 0.0;
                    for (k, x) in ga.row_mut(r).iter_mut().enumerate() {
                        dot += *x * ta.at(r, k);
                        *x *= s;
                    }
                    gc.set(r, 0, dot);
                }
                acc(*a, ga);
                acc(*col, gc);
            }
            Op::Scale(a, s) => acc(*a, g.map(|x| x * s)),
            Op::Relu(a, mask) => {
                let mut ga = g.clone();
                for (x, &m) in ga.data_mut().iter_mut().zip(mask) {
                    if !m {
                        *x = 0.0;
                    }
                }
                acc(*a, ga);
            }
            Op::Gelu(a) => {
                acc(*a, elementwise(g, self.value(*a), |gv, x| gv * gelu_parts(x).1));
            }
            Op::Sigmoid(a) => {
                acc(*a, elementwise(g, &node.value, |gv, y| gv * y * (1.0 - y)));
            }
            Op::LayerNorm { x, gamma, beta, eps } => {
                let tx = self.value(*x);
                let tg = self.value(*gamma);
                let c = tx.cols();
                let mut gx = Tensor::zeros(tx.rows(), c);
                let mut ggamma = Tensor::zeros(1, c);
                let mut gbeta = Tensor::zeros(1, c);
                let mut xhat = vec![0.0; c];
                let mut dy = vec![0.0; c];
                for r in 0..tx.rows() {
                    let row = tx.row(r);
                    let (mean, rstd) = row_stats(row, *eps);
                    let grow = g.row(r);
                    let mut mean_dy = 0.0;
                    let mut mean_dy_xhat = 0.0;
                    for k in 0..c {
                        xhat[k] = (row[k] - mean) * rstd;
                        dy[k] = grow[k] * tg.at(0, k);
                        mean_dy += dy[k];
                        mean_dy_xhat += dy[k] * xhat[k];
                        ggamma.data_mut()[k] += grow[k] * xhat[k];
                        gbeta.data_mut()[k] += grow[k];
                    }
                    mean_dy /= c as f64;
                    mean_dy_xhat /= c as f64;
                    for (k, out) in gx.row_mut(r).iter_mut().enumerate() {
                        *out = rstd * (dy[k] - mean_dy - xhat[k] * mean_dy_xhat);
                    }
                }
                acc(*x, gx);
                acc(*gamma, ggamma);
                acc(*beta, gbeta);
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let mut ga = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (k, out) in ga.row_mut(r).iter_mut().enumerate() {
                        *out = yr[k] * (gr[k] - dot);
                    }
                }
                acc(*a, ga);
            }
            Op::ConcatRows(parts) => {
                let c = g.cols();
                let mut offset = 0;
                for p in parts {
                    let rows = self.value(*p).rows();
                    let slice = g.data()[offset * c..(offset + rows) * c].to_vec();
                    acc(*p, Tensor::from_vec(rows, c, slice));
                    offset += rows;
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let cols = self.value(*p).cols();
                    if self.rg(*p) {
                        let mut gp = Tensor::zeros(g.rows(), cols);
                        for r in 0..g.rows() {
                            gp.row_mut(r)
                                .copy_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        acc(*p, gp);
                    }
                    offset += cols;
                }
            }
            Op::SliceRows(a, start) => {
                let ta = self.value(*a);
                let mut ga = Tensor::zeros(ta.rows(), ta.cols());
                let c = ta.cols();
                ga.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                acc(*a, ga);
            }
            Op::SliceCols(a, start) => {
                let ta = self.value(*a);
                let mut ga = Tensor::zeros(ta.rows(), ta.cols());
                for r in 0..ta.rows() {
                    ga.row_mut(r)[*start..start + g.cols()].copy_from_slice(g.row(r));
                }
                acc(*a, ga);
            }
            Op::GatherRows(a, indices) => {
                let ta = self.value(*a);
                let mut ga = Tensor::zeros(ta.rows(), ta.cols());
                for (r, &src) in indices.iter().enumerate() {
                    for (x, d) in ga.row_mut(src).iter_mut().zip(g.row(r)) {
                        *x += d;
                    }
                }
                acc(*a, ga);
            }
            Op::MaxPoolGroups { x, argmax, .. } => {
                let tx = self.value(*x);
                let c = tx.cols();
                let mut gx = Tensor::zeros(tx.rows(), c);
                for (flat, &src) in argmax.iter().enumerate() {
                    let k = flat % c;
                    let gi = flat / c;
                    gx.data_mut()[src * c + k] += g.at(gi, k);
                }
                acc(*x, gx);
            }
            Op::Reshape(a) => {
                let (r, c) = self.shape(*a);
                acc(*a, Tensor::from_vec(r, c, g.data().to_vec()));
            }
            Op::SumAll(a) => {
                let (r, c) = self.shape(*a);
                acc(*a, Tensor::full(r, c, g.item()));
            }
            Op::MulConst(a, m) => acc(*a, elementwise(g, m, |x, y| x * y)),
            Op::BoxCorners { poses, sizes } => {
                let tp = self.value(*poses);
                let mut gp = Tensor::zeros(tp.rows(), 4);
                for b in 0..tp.rows() {
                    let p = tp.row(b);
                    let jac = corners_jacobian([p[0], p[1], p[2], p[3]], sizes[b]);
                    let out = gp.row_mut(b);
                    for (j, cj) in jac.iter().enumerate() {
                        let grow = g.row(b * NUM_CORNERS + j);
                        for (k, dk) in cj.iter().enumerate() {
                            for q in 0..4 {
                                out[q] += grow[k] * dk[q];
                            }
                        }
                    }
                }
                acc(*poses, gp);
            }
            Op::BoxHuber {
                pred,
                target,
                delta,
            } => {
                let tp = self.value(*pred);
                let mut gp = Tensor::zeros(tp.rows(), 4);
                for r in 0..tp.rows() {
                    let res = box_residual(tp.row(r), target.row(r));
                    let gr = g.at(r, 0);
                    for (k, out) in gp.row_mut(r).iter_mut().enumerate() {
                        *out = gr * huber_slope(res[k], *delta);
                    }
                }
                acc(*pred, gp);
            }
            Op::BceLogitsMean { logits, labels } => {
                let tl = self.value(*logits);
                let n = labels.len().max(1) as f64;
                let gv = g.item() / n;
                let data = tl
                    .data()
                    .iter()
                    .zip(labels)
                    .map(|(&z, &y)| gv * (sigmoid(z) - y))
                    .collect();
                acc(*logits, Tensor::from_vec(tl.rows(), tl.cols(), data));
            }
        }
    }
}

/// Gradients of one backward pass.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    param_ids: Vec<(ParamId, Var)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// One gradient per parameter of `store`; zeros for parameters the pass
    /// did not touch.
    pub fn params(&self, store: &ParamStore) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = store
            .values()
            .iter()
            .map(|t| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        for (id, var) in &self.param_ids {
            if let Some(g) = self.get(*var) {
                out[id.index()] = g.clone();
            }
        }
        out
    }
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::from_vec(
        a.rows(),
        a.cols(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
}

fn column_sums(g: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(1, g.cols());
    for r in 0..g.rows() {
        for (o, x) in out.data_mut().iter_mut().zip(g.row(r)) {
            *o += x;
        }
    }
    out
}

fn row_stats(row: &[f64], eps: f64) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + eps).sqrt())
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-(y ln σ(z) + (1 - y) ln(1 - σ(z)))`, evaluated without overflow.
pub fn bce_with_logits(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Tanh-approximated GELU and its derivative.
fn gelu_parts(x: f64) -> (f64, f64) {
    const K: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
    const A: f64 = 0.044_715;
    let u = K * (x + A * x * x * x);
    let t = u.tanh();
    let value = 0.5 * x * (1.0 + t);
    let grad = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * K * (1.0 + 3.0 * A * x * x);
    (value, grad)
}

pub(crate) fn huber_value(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}

fn huber_slope(r: f64, delta: f64) -> f64 {
    r.clamp(-delta, delta)
}

fn box_residual(pred: &[f64], target: &[f64]) -> [f64; 4] {
    [
        pred[0] - target[0],
        pred[1] - target[1],
        pred[2] - target[2],
        wrap_angle(pred[3] - target[3]),
    ]
}
