use crate::error::{Error, Result};

/// Adaptive-moment first-order optimizer over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

pub fn global_norm(grads: &[f64]) -> f64 {
    grads.iter().map(|g| g * g).sum::<f64>().sqrt()
}

/// Rescales `grads` in place so that `‖g‖₂ ≤ max_norm` and returns the
/// norm before clipping.
pub fn clip_gradients(grads: &mut [f64], max_norm: f64) -> Result<f64> {
    if !(max_norm > 0.0) {
        return Err(Error::Usage(format!("clip norm must be positive, got {max_norm}")));
    }
    let norm = global_norm(grads);
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    Ok(norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clip_examples() {
        let mut g = vec![30.0, 40.0];
        assert_eq!(clip_gradients(&mut g, 100.0).unwrap(), 50.0);
        assert_eq!(g, vec![30.0, 40.0]);

        let mut g = vec![60.0, 80.0];
        clip_gradients(&mut g, 100.0).unwrap();
        assert_eq!(g, vec![60.0, 80.0]);

        let mut g = vec![120.0, 160.0];
        assert_eq!(clip_gradients(&mut g, 100.0).unwrap(), 200.0);
        assert!((g[0] - 60.0).abs() < 1e-12 && (g[1] - 80.0).abs() < 1e-12);

        let mut g = vec![150.0, 200.0];
        assert_eq!(clip_gradients(&mut g, 100.0).unwrap(), 250.0);
        assert!((global_norm(&g) - 100.0).abs() < 1e-12);

        assert!(clip_gradients(&mut g, 0.0).is_err());
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut p = vec![1.0, -2.0, 3.5];
        let mut opt = Adam::new(3, 0.0);
        for _ in 0..5 {
            opt.step(&mut p, &[0.3, -10.0, 7.0]);
        }
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn first_step_moves_by_lr_against_the_gradient_sign() {
        let mut p = vec![0.0, 0.0];
        let mut opt = Adam::new(2, 0.006);
        opt.step(&mut p, &[5.0, -0.01]);
        assert!((p[0] + 0.006).abs() < 1e-9);
        assert!((p[1] - 0.006).abs() < 1e-6);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = vec![3.0, -4.0];
        let mut opt = Adam::new(2, 0.05);
        for _ in 0..2000 {
            let g = vec![2.0 * p[0], 2.0 * p[1]];
            opt.step(&mut p, &g);
        }
        assert!(p[0].abs() < 1e-3 && p[1].abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn clipping_preserves_direction(g in prop::collection::vec(-500.0f64..500.0, 1..20), max in 0.1f64..200.0) {
            let mut c = g.clone();
            let before = clip_gradients(&mut c, max).unwrap();
            prop_assert!(global_norm(&c) <= max * (1.0 + 1e-12) || before <= max);
            if before > 0.0 {
                let ratio = global_norm(&c) / before;
                prop_assert!(ratio > 0.0);
                for (a, b) in g.iter().zip(&c) {
                    prop_assert!((a * ratio - b).abs() <= 1e-9 * (1.0 + a.abs()));
                }
            }
        }
    }
}
