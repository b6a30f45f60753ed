//! Reverse-mode differentiation over batched matrices.
//!
//! A [`Tape`] records one forward pass; [`Tape::backward`] seeds adjoints on
//! chosen nodes and accumulates parameter gradients. Only the operations the
//! two networks need are provided.

use alloc::vec::Vec;

#[allow(unused_imports)] // needed for f64 math under no_std
use num_traits::Float as _;

use super::tensor::{gemm, Matrix};
use crate::math::Mat3;
use crate::sampling::{distance_encode, distance_encode_derivative};

pub const LEAKY_SLOPE: f64 = 0.01;

/// Flat list of parameter tensors; layers refer to them by index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    pub tensors: Vec<Matrix>,
}

impl ParamSet {
    pub fn push(&mut self, m: Matrix) -> usize {
        self.tensors.push(m);
        self.tensors.len() - 1
    }

    pub fn zeros_like(&self) -> ParamSet {
        ParamSet { tensors: self.tensors.iter().map(|t| Matrix::zeros(t.rows, t.cols)).collect() }
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    /// Parameter `k` in the flattened order.
    pub fn flat_get(&self, mut k: usize) -> f64 {
        for t in &self.tensors {
            if k < t.len() {
                return t.data[k];
            }
            k -= t.len();
        }
        panic!("parameter index out of range")
    }

    pub fn flat_set(&mut self, mut k: usize, v: f64) {
        for t in &mut self.tensors {
            if k < t.len() {
                t.data[k] = v;
                return;
            }
            k -= t.len();
        }
        panic!("parameter index out of range")
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Const,
    /// `x W + b` with `W` of shape in x out and `b` of shape 1 x out.
    Linear { x: NodeId, w: usize, b: usize },
    LeakyRelu(NodeId),
    Sigmoid(NodeId),
    Concat(Vec<NodeId>),
    Slice { x: NodeId, start: usize },
    /// Distance encoding of a single-column input.
    Encode { x: NodeId, l: usize },
    /// Row `r` (3 columns) multiplied by `mats[r % mats.len()]`.
    RowTransform { x: NodeId, mats: Vec<Mat3> },
    /// Row `b` of the output is `Σ_v weights[b V + v] x[b V + v]`.
    GroupSum { x: NodeId, weights: Vec<f64>, group: usize },
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Tape { params, nodes: Vec::new() }
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id].value
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, needs_grad });
        self.nodes.len() - 1
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id].needs_grad
    }

    pub fn constant(&mut self, m: Matrix) -> NodeId {
        self.push(m, Op::Const, false)
    }

    pub fn linear(&mut self, x: NodeId, w: usize, b: usize) -> NodeId {
        let (wm, bm) = (&self.params.tensors[w], &self.params.tensors[b]);
        let xv = &self.nodes[x].value;
        assert_eq!(xv.cols, wm.rows, "linear input width");
        let mut out = Matrix::zeros(xv.rows, wm.cols);
        for r in 0..out.rows {
            out.row_mut(r).copy_from_slice(&bm.data);
        }
        gemm(xv, false, wm, false, 1.0, &mut out);
        self.push(out, Op::Linear { x, w, b }, true)
    }

    pub fn leaky_relu(&mut self, x: NodeId) -> NodeId {
        let mut v = self.nodes[x].value.clone();
        v.data.iter_mut().for_each(|a| {
            if *a < 0.0 {
                *a *= LEAKY_SLOPE
            }
        });
        let g = self.needs(x);
        self.push(v, Op::LeakyRelu(x), g)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let mut v = self.nodes[x].value.clone();
        v.data.iter_mut().for_each(|a| *a = sigmoid(*a));
        let g = self.needs(x);
        self.push(v, Op::Sigmoid(x), g)
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let rows = self.nodes[parts[0]].value.rows;
        let cols: usize = parts.iter().map(|p| self.nodes[*p].value.cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut c0 = 0;
        for &p in parts {
            let v = &self.nodes[p].value;
            assert_eq!(v.rows, rows, "concat rows");
            for r in 0..rows {
                out.row_mut(r)[c0..c0 + v.cols].copy_from_slice(v.row(r));
            }
            c0 += v.cols;
        }
        let g = parts.iter().any(|p| self.needs(*p));
        self.push(out, Op::Concat(parts.to_vec()), g)
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let v = &self.nodes[x].value;
        let mut out = Matrix::zeros(v.rows, len);
        for r in 0..v.rows {
            out.row_mut(r).copy_from_slice(&v.row(r)[start..start + len]);
        }
        let g = self.needs(x);
        self.push(out, Op::Slice { x, start }, g)
    }

    pub fn encode(&mut self, x: NodeId, l: usize) -> NodeId {
        let v = &self.nodes[x].value;
        assert_eq!(v.cols, 1, "encode takes one column");
        let mut out = Matrix::zeros(v.rows, 2 * l + 3);
        for r in 0..v.rows {
            out.row_mut(r).copy_from_slice(&distance_encode(v.data[r], l));
        }
        let g = self.needs(x);
        self.push(out, Op::Encode { x, l }, g)
    }

    pub fn row_transform(&mut self, x: NodeId, mats: Vec<Mat3>) -> NodeId {
        let v = &self.nodes[x].value;
        assert_eq!(v.cols, 3, "row transform takes three columns");
        let mut out = Matrix::zeros(v.rows, 3);
        for r in 0..v.rows {
            let m = &mats[r % mats.len()];
            let p = v.row(r);
            for i in 0..3 {
                out.data[r * 3 + i] = m[(i, 0)] * p[0] + m[(i, 1)] * p[1] + m[(i, 2)] * p[2];
            }
        }
        let g = self.needs(x);
        self.push(out, Op::RowTransform { x, mats }, g)
    }

    pub fn group_sum(&mut self, x: NodeId, weights: Vec<f64>, group: usize) -> NodeId {
        let v = &self.nodes[x].value;
        assert_eq!(v.rows, weights.len(), "one weight per row");
        assert_eq!(v.rows % group, 0, "rows divisible by group");
        let mut out = Matrix::zeros(v.rows / group, v.cols);
        for r in 0..v.rows {
            let w = weights[r];
            let (src, dst) = (r * v.cols, (r / group) * v.cols);
            for c in 0..v.cols {
                out.data[dst + c] += w * v.data[src + c];
            }
        }
        let g = self.needs(x);
        self.push(out, Op::GroupSum { x, weights, group }, g)
    }

    /// Signs of every leaky-rectifier input, in recording order. Two passes
    /// with equal patterns are on the same linear piece of the network.
    pub fn kink_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Op::LeakyRelu(x) = node.op {
                out.extend(self.nodes[x].value.data.iter().map(|v| *v < 0.0));
            }
        }
        out
    }

    /// Accumulates `d loss / d params` given adjoints of `seeds`.
    pub fn backward(&self, seeds: Vec<(NodeId, Matrix)>, grads: &mut ParamSet) {
        let mut adj: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        for (id, g) in seeds {
            accumulate(&mut adj[id], g);
        }
        for id in (0..self.nodes.len()).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Const => {}
                Op::Linear { x, w, b } => {
                    let xv = &self.nodes[*x].value;
                    gemm(xv, true, &g, false, 1.0, &mut grads.tensors[*w]);
                    let gb = &mut grads.tensors[*b];
                    for r in 0..g.rows {
                        for (a, v) in gb.data.iter_mut().zip(g.row(r)) {
                            *a += v;
                        }
                    }
                    if self.needs(*x) {
                        let mut dx = Matrix::zeros(xv.rows, xv.cols);
                        gemm(&g, false, &self.params.tensors[*w], true, 0.0, &mut dx);
                        accumulate(&mut adj[*x], dx);
                    }
                }
                Op::LeakyRelu(x) => {
                    let mut dx = g;
                    for (d, v) in dx.data.iter_mut().zip(&self.nodes[*x].value.data) {
                        if *v < 0.0 {
                            *d *= LEAKY_SLOPE;
                        }
                    }
                    accumulate(&mut adj[*x], dx);
                }
                Op::Sigmoid(x) => {
                    let mut dx = g;
                    for (d, s) in dx.data.iter_mut().zip(&node.value.data) {
                        *d *= s * (1.0 - s);
                    }
                    accumulate(&mut adj[*x], dx);
                }
                Op::Concat(parts) => {
                    let mut c0 = 0;
                    for &p in parts {
                        let cols = self.nodes[p].value.cols;
                        if self.needs(p) {
                            let mut dp = Matrix::zeros(g.rows, cols);
                            for r in 0..g.rows {
                                dp.row_mut(r).copy_from_slice(&g.row(r)[c0..c0 + cols]);
                            }
                            accumulate(&mut adj[p], dp);
                        }
                        c0 += cols;
                    }
                }
                Op::Slice { x, start } => {
                    let xv = &self.nodes[*x].value;
                    let mut dx = Matrix::zeros(xv.rows, xv.cols);
                    for r in 0..g.rows {
                        dx.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut adj[*x], dx);
                }
                Op::Encode { x, l } => {
                    let xv = &self.nodes[*x].value;
                    let mut dx = Matrix::zeros(xv.rows, 1);
                    for r in 0..xv.rows {
                        let d = distance_encode_derivative(xv.data[r], *l);
                        dx.data[r] = d.iter().zip(g.row(r)).map(|(a, b)| a * b).sum();
                    }
                    accumulate(&mut adj[*x], dx);
                }
                Op::RowTransform { x, mats } => {
                    let mut dx = Matrix::zeros(g.rows, 3);
                    for r in 0..g.rows {
                        let m = &mats[r % mats.len()];
                        let q = g.row(r);
                        for j in 0..3 {
                            dx.data[r * 3 + j] = m[(0, j)] * q[0] + m[(1, j)] * q[1] + m[(2, j)] * q[2];
                        }
                    }
                    accumulate(&mut adj[*x], dx);
                }
                Op::GroupSum { x, weights, group } => {
                    let xv = &self.nodes[*x].value;
                    let mut dx = Matrix::zeros(xv.rows, xv.cols);
                    for r in 0..xv.rows {
                        let w = weights[r];
                        let src = (r / group) * g.cols;
                        for c in 0..g.cols {
                            dx.data[r * g.cols + c] = w * g.data[src + c];
                        }
                    }
                    accumulate(&mut adj[*x], dx);
                }
            }
        }
    }
}

fn accumulate(slot: &mut Option<Matrix>, g: Matrix) {
    match slot {
        Some(m) => m.add_assign(&g),
        None => *slot = Some(g),
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
