use super::{Graph, Var};

/// Arithmetic shared by plain `f64` evaluation and graph recording.
///
/// The plant model is written once against this trait so the numeric
/// simulator and the differentiable rollouts run the same formulas.
pub trait Arith {
    type V: Clone;

    fn add(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn sub(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn mul(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn div(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn scale(&mut self, a: &Self::V, c: f64) -> Self::V;
    fn offset(&mut self, a: &Self::V, c: f64) -> Self::V;
    fn square(&mut self, a: &Self::V) -> Self::V;
    fn cube(&mut self, a: &Self::V) -> Self::V;
    /// `max(a, c)` with the adjoint passing only where `a >= c`.
    fn floor(&mut self, a: &Self::V, c: f64) -> Self::V;
    /// `min(max(x, lo), hi)` with node-valued bounds.
    fn clamp_between(&mut self, x: &Self::V, lo: &Self::V, hi: &Self::V) -> Self::V;

    fn sum_all(&mut self, xs: &[Self::V]) -> Self::V {
        let mut acc = xs[0].clone();
        for x in &xs[1..] {
            acc = self.add(&acc, x);
        }
        acc
    }
}

/// Plain double-precision evaluation of a single sample.
#[derive(Clone, Copy, Debug, Default)]
pub struct Scalar;

impl Arith for Scalar {
    type V = f64;

    fn add(&mut self, a: &f64, b: &f64) -> f64 {
        a + b
    }
    fn sub(&mut self, a: &f64, b: &f64) -> f64 {
        a - b
    }
    fn mul(&mut self, a: &f64, b: &f64) -> f64 {
        a * b
    }
    fn div(&mut self, a: &f64, b: &f64) -> f64 {
        a / b
    }
    fn scale(&mut self, a: &f64, c: f64) -> f64 {
        a * c
    }
    fn offset(&mut self, a: &f64, c: f64) -> f64 {
        a + c
    }
    fn square(&mut self, a: &f64) -> f64 {
        a * a
    }
    fn cube(&mut self, a: &f64) -> f64 {
        a * a * a
    }
    fn floor(&mut self, a: &f64, c: f64) -> f64 {
        a.clamp(c, f64::INFINITY)
    }
    fn clamp_between(&mut self, x: &f64, lo: &f64, hi: &f64) -> f64 {
        x.max(*lo).min(*hi)
    }
}

impl Arith for Graph {
    type V = Var;

    fn add(&mut self, a: &Var, b: &Var) -> Var {
        Graph::add(self, *a, *b)
    }
    fn sub(&mut self, a: &Var, b: &Var) -> Var {
        Graph::sub(self, *a, *b)
    }
    fn mul(&mut self, a: &Var, b: &Var) -> Var {
        Graph::mul(self, *a, *b)
    }
    fn div(&mut self, a: &Var, b: &Var) -> Var {
        Graph::div(self, *a, *b)
    }
    fn scale(&mut self, a: &Var, c: f64) -> Var {
        Graph::scale(self, *a, c)
    }
    fn offset(&mut self, a: &Var, c: f64) -> Var {
        Graph::offset(self, *a, c)
    }
    fn square(&mut self, a: &Var) -> Var {
        Graph::square(self, *a)
    }
    fn cube(&mut self, a: &Var) -> Var {
        Graph::cube(self, *a)
    }
    fn floor(&mut self, a: &Var, c: f64) -> Var {
        self.clamp(*a, c, f64::INFINITY)
    }
    fn clamp_between(&mut self, x: &Var, lo: &Var, hi: &Var) -> Var {
        let m = self.maximum(*x, *lo);
        self.minimum(m, *hi)
    }
}
