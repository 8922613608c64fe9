//! Reverse-mode automatic differentiation over batched tensors.
//!
//! A [`Graph`] is an eager tape: every operation computes its value as soon
//! as it is recorded and appends one node. Node indices are therefore a
//! topological order, and [`Graph::backward`] simply walks them in reverse,
//! visiting every node once.
//!
//! Values are row-major `B x k` matrices where `B` is the batch (one row per
//! closed-loop rollout) and `k` the feature width. Scalars are `1 x 1`.
//! Elementwise operations require identical shapes.
//!
//! The operation set is exactly what the closed-loop rollouts need:
//! arithmetic, `cube`/`square`, `sigmoid`, `relu`, `affine`, reductions,
//! column slicing and concatenation, clamps with subgradients, and the
//! straight-through rounding node [`Graph::ste_round`].

mod arith;

pub use arith::{Arith, Scalar};

use ndarray::{s, Array2, Axis};
use serde::Serialize;

use crate::error::{Error, Result};

pub type Tensor = Array2<f64>;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Forward behaviour of [`Graph::ste_round`].
///
/// `Straight` is the training and inference path: hard threshold forward,
/// sigmoid-derivative backward. `Surrogate` evaluates the sigmoid itself in
/// the forward pass, which makes the whole graph a smooth function whose
/// adjoints can be checked against finite differences.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum Rounding {
    #[default]
    Straight,
    Surrogate,
}

/// Rounding threshold of the relaxed binaries.
pub const ROUND_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    Offset(Var),
    Square(Var),
    Cube(Var),
    Sigmoid(Var),
    Relu(Var),
    Affine { x: Var, w: Var, b: Var },
    Sum(Var),
    SumCols(Var),
    Column(Var, usize),
    Concat(Vec<Var>),
    Clamp { x: Var, lo: f64, hi: f64 },
    Maximum(Var, Var),
    Minimum(Var, Var),
    SteRound { x: Var, slope: f64 },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Neg(..) => "neg",
            Op::Scale(..) => "scale",
            Op::Offset(..) => "offset",
            Op::Square(..) => "square",
            Op::Cube(..) => "cube",
            Op::Sigmoid(..) => "sigmoid",
            Op::Relu(..) => "relu",
            Op::Affine { .. } => "affine",
            Op::Sum(..) => "sum",
            Op::SumCols(..) => "sum_cols",
            Op::Column(..) => "column",
            Op::Concat(..) => "concat",
            Op::Clamp { .. } => "clamp",
            Op::Maximum(..) => "maximum",
            Op::Minimum(..) => "minimum",
            Op::SteRound { .. } => "ste_round",
        }
    }

    fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) | Op::Maximum(a, b) | Op::Minimum(a, b) => {
                vec![*a, *b]
            }
            Op::Neg(a)
            | Op::Scale(a, _)
            | Op::Offset(a)
            | Op::Square(a)
            | Op::Cube(a)
            | Op::Sigmoid(a)
            | Op::Relu(a)
            | Op::Sum(a)
            | Op::SumCols(a)
            | Op::Column(a, _) => vec![*a],
            Op::Clamp { x, .. } | Op::SteRound { x, .. } => vec![*x],
            Op::Affine { x, w, b } => vec![*x, *w, *b],
            Op::Concat(parts) => parts.clone(),
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// First non-finite value observed while building a graph.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Fault {
    pub op: &'static str,
    pub node: usize,
    pub path: String,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    rounding: Rounding,
    scopes: Vec<String>,
    fault: Option<Fault>,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Derivative of the centred sigmoid `1 / (1 + exp(-slope (x - 0.5)))`.
pub fn surrogate_slope(x: f64, slope: f64) -> f64 {
    let s = sigmoid(slope * (x - ROUND_THRESHOLD));
    slope * s * (1.0 - s)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_rounding(rounding: Rounding) -> Self {
        Self {
            rounding,
            ..Self::default()
        }
    }

    pub fn rounding(&self) -> Rounding {
        self.rounding
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

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let t = self.value(v);
        debug_assert_eq!(t.dim(), (1, 1));
        t[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    pub fn fault(&self) -> Option<&Fault> {
        self.fault.as_ref()
    }

    /// Returns the recorded fault, if any, as an error.
    pub fn check(&self) -> Result<()> {
        match &self.fault {
            Some(f) => Err(Error::NumericFault {
                op: f.op,
                node: f.node,
                path: f.path.clone(),
            }),
            None => Ok(()),
        }
    }

    pub fn push_scope(&mut self, name: impl Into<String>) {
        self.scopes.push(name.into());
    }

    pub fn pop_scope(&mut self) {
        self.scopes.pop();
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let idx = self.nodes.len();
        if self.fault.is_none() && value.iter().any(|v| !v.is_finite()) {
            self.fault = Some(Fault {
                op: op.name(),
                node: idx,
                path: self.scopes.join("/"),
            });
        }
        let requires_grad = op.parents().iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(idx)
    }

    /// Differentiable leaf (a parameter or an input we want adjoints for).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        let v = self.push(value, Op::Leaf);
        self.nodes[v.0].requires_grad = true;
        v
    }

    /// Leaf that never receives an adjoint.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn full(&mut self, rows: usize, cols: usize, value: f64) -> Var {
        self.constant(Tensor::from_elem((rows, cols), value))
    }

    fn same_shape(&self, a: Var, b: Var, op: &str) {
        assert_eq!(self.shape(a), self.shape(b), "{op}: operand shapes differ");
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "add");
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "sub");
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "mul");
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "div");
        let v = self.value(a) / self.value(b);
        self.push(v, Op::Div(a, b))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| -x);
        self.push(v, Op::Neg(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) + c;
        self.push(v, Op::Offset(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x * x);
        self.push(v, Op::Square(a))
    }

    pub fn cube(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x * x * x);
        self.push(v, Op::Cube(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    /// `x · wᵀ + b` with `x: B x in`, `w: out x in`, `b: 1 x out`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (_, inp) = self.shape(x);
        let (out, w_in) = self.shape(w);
        assert_eq!(inp, w_in, "affine: input width {inp} != weight width {w_in}");
        assert_eq!(self.shape(b), (1, out), "affine: bias shape");
        let mut v = self.value(x).dot(&self.value(w).t());
        v += self.value(b);
        self.push(v, Op::Affine { x, w, b })
    }

    /// Sum of all elements, `1 x 1`.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::from_elem((1, 1), s), Op::Sum(a))
    }

    /// Row sums, `B x 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(v, Op::SumCols(a))
    }

    pub fn column(&mut self, a: Var, j: usize) -> Var {
        let v = self.value(a).slice(s![.., j..j + 1]).to_owned();
        self.push(v, Op::Column(a, j))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat: no operands");
        let rows = self.shape(parts[0]).0;
        let width: usize = parts.iter().map(|p| self.shape(*p).1).sum();
        let mut v = Tensor::zeros((rows, width));
        let mut at = 0;
        for p in parts {
            let t = self.value(*p);
            assert_eq!(t.nrows(), rows, "concat: row counts differ");
            v.slice_mut(s![.., at..at + t.ncols()]).assign(t);
            at += t.ncols();
        }
        self.push(v, Op::Concat(parts.to_vec()))
    }

    /// Elementwise clamp to `[lo, hi]`; the adjoint passes where the input
    /// lies inside the interval and is zero elsewhere.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(x).mapv(|e| e.clamp(lo, hi));
        self.push(v, Op::Clamp { x, lo, hi })
    }

    pub fn maximum(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "maximum");
        let mut v = self.value(a).clone();
        v.zip_mut_with(self.value(b), |x, &y| *x = x.max(y));
        self.push(v, Op::Maximum(a, b))
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "minimum");
        let mut v = self.value(a).clone();
        v.zip_mut_with(self.value(b), |x, &y| *x = x.min(y));
        self.push(v, Op::Minimum(a, b))
    }

    /// Threshold rounding with a straight-through sigmoid gradient.
    ///
    /// Forward: `1` if `x > 0.5` else `0` (or the sigmoid itself under
    /// [`Rounding::Surrogate`]). Backward: `slope · σ(1 − σ)` with
    /// `σ = 1 / (1 + exp(−slope (x − 0.5)))`.
    pub fn ste_round(&mut self, x: Var, slope: f64) -> Var {
        let v = match self.rounding {
            Rounding::Straight => self.value(x).mapv(|e| if e > ROUND_THRESHOLD { 1.0 } else { 0.0 }),
            Rounding::Surrogate => self.value(x).mapv(|e| sigmoid(slope * (e - ROUND_THRESHOLD))),
        };
        self.push(v, Op::SteRound { x, slope })
    }

    /// `relu(lo − x)² + relu(x − hi)²`, the one-sided squared violation.
    pub fn clamp_penalty(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let below = self.neg(x);
        let below = self.offset(below, lo);
        let below = self.relu(below);
        let below = self.square(below);
        let above = self.offset(x, -hi);
        let above = self.relu(above);
        let above = self.square(above);
        self.add(below, above)
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        self.check()?;
        if self.shape(out) != (1, 1) {
            return Err(Error::Usage(format!(
                "backward needs a 1 x 1 output, got {:?}; reduce it with sum first",
                self.shape(out)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; out.0 + 1];
        grads[out.0] = Some(Tensor::ones((1, 1)));

        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = None;
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.propagate(i, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.acc(grads, *a, || g.clone());
                self.acc(grads, *b, || g.clone());
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, || g.clone());
                self.acc(grads, *b, || -g);
            }
            Op::Mul(a, b) => {
                self.acc(grads, *a, || g * self.value(*b));
                self.acc(grads, *b, || g * self.value(*a));
            }
            Op::Div(a, b) => {
                self.acc(grads, *a, || g / self.value(*b));
                self.acc(grads, *b, || -(g * &node.value) / self.value(*b));
            }
            Op::Neg(a) => self.acc(grads, *a, || -g),
            Op::Scale(a, c) => self.acc(grads, *a, || g * *c),
            Op::Offset(a) => self.acc(grads, *a, || g.clone()),
            Op::Square(a) => self.acc(grads, *a, || g * &self.value(*a).mapv(|x| 2.0 * x)),
            Op::Cube(a) => self.acc(grads, *a, || g * &self.value(*a).mapv(|x| 3.0 * x * x)),
            Op::Sigmoid(a) => self.acc(grads, *a, || g * &node.value.mapv(|y| y * (1.0 - y))),
            Op::Relu(a) => self.acc(grads, *a, || {
                let mut d = g.clone();
                d.zip_mut_with(&node.value, |d, &y| {
                    if y <= 0.0 {
                        *d = 0.0
                    }
                });
                d
            }),
            Op::Affine { x, w, b } => {
                self.acc(grads, *x, || g.dot(self.value(*w)));
                self.acc(grads, *w, || g.t().dot(self.value(*x)));
                self.acc(grads, *b, || g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::Sum(a) => {
                let s = g[[0, 0]];
                self.acc(grads, *a, || Tensor::from_elem(self.shape(*a), s));
            }
            Op::SumCols(a) => self.acc(grads, *a, || {
                let (r, c) = self.shape(*a);
                let col = g.column(0);
                Tensor::from_shape_fn((r, c), |(i, _)| col[i])
            }),
            Op::Column(a, j) => {
                if self.wants(*a) {
                    let slot = grads[a.0].get_or_insert_with(|| Tensor::zeros(self.shape(*a)));
                    let mut col = slot.slice_mut(s![.., *j..*j + 1]);
                    col += g;
                }
            }
            Op::Concat(parts) => {
                let mut at = 0;
                for p in parts {
                    let w = self.shape(*p).1;
                    self.acc(grads, *p, || g.slice(s![.., at..at + w]).to_owned());
                    at += w;
                }
            }
            Op::Clamp { x, lo, hi } => self.acc(grads, *x, || {
                let mut d = g.clone();
                d.zip_mut_with(self.value(*x), |d, &e| {
                    if e < *lo || e > *hi {
                        *d = 0.0
                    }
                });
                d
            }),
            Op::Maximum(a, b) => self.select(grads, g, *a, *b, |x, y| x >= y),
            Op::Minimum(a, b) => self.select(grads, g, *a, *b, |x, y| x <= y),
            Op::SteRound { x, slope } => {
                self.acc(grads, *x, || g * &self.value(*x).mapv(|e| surrogate_slope(e, *slope)))
            }
        }
    }

    /// Routes the adjoint to `a` where `pick_a(a, b)` holds, else to `b`.
    fn select(&self, grads: &mut [Option<Tensor>], g: &Tensor, a: Var, b: Var, pick_a: impl Fn(f64, f64) -> bool) {
        let (va, vb) = (self.value(a), self.value(b));
        let mask = Tensor::from_shape_fn(va.dim(), |ix| if pick_a(va[ix], vb[ix]) { 1.0 } else { 0.0 });
        self.acc(grads, a, || g * &mask);
        self.acc(grads, b, || g * &mask.mapv(|m| 1.0 - m));
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, f: impl FnOnce() -> Tensor) {
        if !self.wants(v) {
            return;
        }
        let d = f();
        match &mut grads[v.0] {
            Some(slot) => *slot += &d,
            slot @ None => *slot = Some(d),
        }
    }

    /// Debug dump of the graph structure (no values beyond shapes).
    pub fn to_json(&self) -> serde_json::Value {
        let nodes: Vec<serde_json::Value> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                serde_json::json!({
                    "id": i,
                    "op": n.op.name(),
                    "shape": [n.value.nrows(), n.value.ncols()],
                    "parents": n.op.parents().iter().map(|p| p.0).collect::<Vec<_>>(),
                    "requires_grad": n.requires_grad,
                })
            })
            .collect();
        serde_json::json!({ "rounding": self.rounding, "nodes": nodes, "fault": self.fault })
    }
}

/// Adjoints of one backward sweep.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Adjoint of `v`, zeros of `shape` if nothing reached it.
    pub fn take_or_zeros(&mut self, v: Var, shape: (usize, usize)) -> Tensor {
        self.grads
            .get_mut(v.0)
            .and_then(Option::take)
            .unwrap_or_else(|| Tensor::zeros(shape))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn scalar(g: &mut Graph, x: f64) -> Var {
        g.leaf(array![[x]])
    }

    #[test]
    fn forward_values() {
        let mut g = Graph::new();
        let a = scalar(&mut g, 2.0);
        let b = scalar(&mut g, 3.0);
        let c = scalar(&mut g, 4.0);
        let s = g.add(a, b);
        let p = g.mul(s, c);
        assert_eq!(g.scalar(p), 20.0);

        let z = scalar(&mut g, 0.0);
        let sg = g.sigmoid(z);
        assert_eq!(g.scalar(sg), 0.5);

        let x = g.leaf(array![[1.5, -2.0, 0.25]]);
        let w = g.constant(Tensor::eye(3));
        let b = g.constant(Tensor::zeros((1, 3)));
        let y = g.affine(x, w, b);
        assert_eq!(g.value(y), g.value(x));
    }

    #[test]
    fn simple_derivatives() {
        let mut g = Graph::new();
        let x = scalar(&mut g, 3.0);
        let y = g.square(x);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap()[[0, 0]], 6.0);

        let mut g = Graph::new();
        let m = scalar(&mut g, 10.0);
        let y = g.cube(m);
        let grads = g.backward(y).unwrap();
        assert!((grads.get(m).unwrap()[[0, 0]] - 300.0).abs() < 1e-12);
    }

    #[test]
    fn ste_round_forward_and_backward() {
        let mut g = Graph::new();
        let x = g.leaf(array![[0.7, 0.5, 0.2]]);
        let d = g.ste_round(x, 1.0);
        assert_eq!(g.value(d), &array![[1.0, 0.0, 0.0]]);
        let s = g.sum(d);
        let grads = g.backward(s).unwrap();
        let gx = grads.get(x).unwrap();
        assert!((gx[[0, 1]] - 0.25).abs() < 1e-15);
        assert!((gx[[0, 0]] - surrogate_slope(0.7, 1.0)).abs() < 1e-15);
    }

    #[test]
    fn clamp_penalty_values_and_slopes() {
        for (x, val, slope) in [(1.0, 0.0, 0.0), (5.0, 4.0, 4.0), (-1.0, 1.0, -2.0)] {
            let mut g = Graph::new();
            let v = scalar(&mut g, x);
            let p = g.clamp_penalty(v, 0.0, 3.0);
            assert_eq!(g.scalar(p), val);
            let grads = g.backward(p).unwrap();
            assert_eq!(grads.get(v).unwrap()[[0, 0]], slope);
        }
    }

    #[test]
    fn backward_rejects_vector_output() {
        let mut g = Graph::new();
        let x = g.leaf(array![[1.0, 2.0]]);
        let y = g.square(x);
        assert!(matches!(g.backward(y), Err(Error::Usage(_))));
    }

    #[test]
    fn non_finite_values_are_reported_with_path() {
        let mut g = Graph::new();
        g.push_scope("rollout");
        g.push_scope("k=3");
        let a = scalar(&mut g, 1.0);
        let z = scalar(&mut g, 0.0);
        let q = g.div(a, z);
        g.pop_scope();
        let _ = g.square(q);
        let f = g.fault().unwrap();
        assert_eq!(f.op, "div");
        assert_eq!(f.path, "rollout/k=3");
        assert!(matches!(g.backward(q), Err(Error::NumericFault { op: "div", .. })));
    }

    #[test]
    fn repeated_backward_is_identical() {
        let mut g = Graph::new();
        let x = g.leaf(array![[0.3, -1.2], [2.0, 0.1]]);
        let w = g.leaf(array![[0.5, -0.25], [1.0, 2.0], [0.0, 1.0]]);
        let b = g.leaf(array![[0.1, 0.2, 0.3]]);
        let h = g.affine(x, w, b);
        let h = g.relu(h);
        let s = g.sum(h);
        let g1 = g.backward(s).unwrap();
        let g2 = g.backward(s).unwrap();
        for v in [x, w, b] {
            assert_eq!(g1.get(v), g2.get(v));
        }
    }

    #[test]
    fn constants_receive_no_adjoint() {
        let mut g = Graph::new();
        let c = g.constant(array![[2.0]]);
        let x = scalar(&mut g, 1.5);
        let y = g.mul(c, x);
        let grads = g.backward(y).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(x).unwrap()[[0, 0]], 2.0);
    }

    #[test]
    fn json_dump_lists_nodes() {
        let mut g = Graph::new();
        let x = scalar(&mut g, 1.0);
        let _ = g.cube(x);
        let j = g.to_json();
        assert_eq!(j["nodes"][1]["op"], "cube");
        assert_eq!(j["nodes"][1]["parents"][0], 0);
    }
}
