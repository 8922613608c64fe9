//! Numeric evaluation of the control objective for a fixed input sequence.

use serde::Serialize;

use super::rbc::{rbc_step, RbcConfig, RbcState};
use crate::error::{Error, Result};
use crate::plant::{self, ControlInput, PlantParams, PlantState};
use crate::policy::PolicySet;
use crate::scenario::SampledContext;
use crate::trainer::{LossComponents, LossWeights};

/// Objective terms of one sequence plus its state-bound violations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SequenceCost {
    pub components: LossComponents,
    pub total: f64,
    /// Simulated states (excluding the initial one) outside their bounds.
    pub violating_states: usize,
    pub max_violation: f64,
    pub t_r: Vec<f64>,
    pub t_s: Vec<Vec<f64>>,
}

fn excess(v: f64, lo: f64, hi: f64) -> f64 {
    (lo - v).max(v - hi).max(0.0)
}

fn state_excess(s: &PlantState, p: &PlantParams) -> (f64, f64) {
    let mut sq = excess(s.t_r, p.t_r_min, p.t_r_max).powi(2);
    let mut worst = excess(s.t_r, p.t_r_min, p.t_r_max);
    for t in &s.t_s {
        let e = excess(*t, p.t_s_min, p.t_s_max);
        sq += e * e;
        worst = worst.max(e);
    }
    (sq, worst)
}

/// Simulates `controls` from the context's initial state and sums the same
/// terms as the training loss: power, weighted switching of the applied
/// decisions, load tracking, and squared state and input violations. The
/// decisions are binary, so there is no binary-variance term.
pub fn evaluate_sequence(
    ctx: &SampledContext,
    controls: &[ControlInput],
    p: &PlantParams,
    w: &LossWeights,
) -> Result<SequenceCost> {
    let n = controls.len();
    if ctx.preview.len() < n + 1 {
        return Err(Error::Usage(format!(
            "context preview of {} samples cannot score {n} steps",
            ctx.preview.len()
        )));
    }
    let mut c = LossComponents::default();
    let mut s = ctx.initial_state();
    let (sq, _) = state_excess(&s, p);
    c.state_penalty += w.state * sq;
    let mut out = SequenceCost {
        components: c,
        total: 0.0,
        violating_states: 0,
        max_violation: 0.0,
        t_r: vec![s.t_r],
        t_s: vec![s.t_s.clone()],
    };
    let mut prev: Option<&ControlInput> = None;
    for (k, u) in controls.iter().enumerate() {
        u.validate(p)?;
        let c = &mut out.components;
        if let Some(pu) = prev {
            let flips = u.delta.iter().zip(&pu.delta).filter(|(a, b)| a != b).count();
            c.switching += w.switching * flips as f64;
        }
        for i in 0..p.num_chillers {
            c.input_penalty += w.input
                * (excess(u.mdot[i], p.mdot_min, p.mdot_max).powi(2) + excess(u.t_e[i], p.t_e_min, p.t_e_max).powi(2));
        }
        let (next, pw) = plant::step(&s, u, p, ctx.preview[k + 1]).map_err(|e| e.at_step(k))?;
        c.power += pw.total();
        c.tracking += w.tracking * (pw.q_total - ctx.preview[k]).powi(2);
        let (sq, worst) = state_excess(&next, p);
        c.state_penalty += w.state * sq;
        if worst > 0.0 {
            out.violating_states += 1;
            out.max_violation = out.max_violation.max(worst);
        }
        out.t_r.push(next.t_r);
        out.t_s.push(next.t_s.clone());
        s = next;
        prev = Some(u);
    }
    out.total = out.components.total();
    Ok(out)
}

/// RBC controls over `n` steps of the context, starting from one chiller.
pub fn rbc_sequence(ctx: &SampledContext, p: &PlantParams, cfg: &RbcConfig, n: usize) -> Result<Vec<ControlInput>> {
    let mut rs = RbcState::default();
    let mut s = ctx.initial_state();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let u = rbc_step(&mut rs, &s, cfg, p)?;
        s = plant::step(&s, &u, p, ctx.preview[k + 1]).map_err(|e| e.at_step(k))?.0;
        out.push(u);
    }
    Ok(out)
}

/// Inference-mode policy controls over `n` steps of the context.
pub fn policy_sequence(
    ctx: &SampledContext,
    policy: &PolicySet,
    p: &PlantParams,
    n: usize,
) -> Result<Vec<ControlInput>> {
    let h = policy.horizon;
    if ctx.preview.len() < n - 1 + h {
        return Err(Error::Usage(format!(
            "context preview of {} samples too short for {n} steps of a horizon-{h} policy",
            ctx.preview.len()
        )));
    }
    let mut s = ctx.initial_state();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let (u, _) = policy.act(&s, &ctx.preview[k..k + h], p)?;
        s = plant::step(&s, &u, p, ctx.preview[k + 1]).map_err(|e| e.at_step(k))?.0;
        out.push(u);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffengine::{Graph, Var};
    use crate::policy::{FeatureScaling, GraphHeads};
    use crate::trainer::{rollout_loss, GraphPolicy, RolloutBatch};
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Fixed(Vec<ControlInput>);

    impl GraphPolicy for Fixed {
        fn heads(&mut self, g: &mut Graph, x: Var, k: usize) -> GraphHeads {
            let b = g.shape(x).0;
            let u = &self.0[k];
            let mut row = |v: Vec<f64>| g.constant(Array2::from_shape_fn((b, v.len()), |(_, j)| v[j]));
            GraphHeads {
                mdot: row(u.mdot.clone()),
                t_e: row(u.t_e.clone()),
                relaxed: row(vec![if u.delta[0] { 1.0 } else { 0.0 }]),
            }
        }
    }

    #[test]
    fn agrees_with_the_training_loss_on_binary_sequences() {
        let p = PlantParams::reference(2);
        let w = LossWeights::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let ctx = crate::scenario::sample_context(&p, 4, &mut rng).unwrap();
            let us = rbc_sequence(&ctx, &p, &RbcConfig::default(), 4).unwrap();
            let cost = evaluate_sequence(&ctx, &us, &p, &w).unwrap();
            let batch = RolloutBatch::from_contexts(&[&ctx], &p, 4).unwrap();
            let mut g = Graph::new();
            let r = rollout_loss(
                &mut g,
                &mut Fixed(us),
                &FeatureScaling::for_plant(&p, 4),
                &batch,
                &p,
                &w,
            )
            .unwrap();
            for (a, b) in cost.components.values().iter().zip(r.components.values()) {
                assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
            }
            assert!((r.row_loss[0] - cost.total).abs() <= 1e-9 * cost.total);
        }
    }

    #[test]
    fn switching_and_violations_are_counted() {
        let p = PlantParams::reference(2);
        let ctx = SampledContext {
            t_r0: 39.5,
            t_s0: vec![10.0; 2],
            load_history0: vec![700.0; 6],
            preview: vec![700.0; 6],
            last_cooling0: None,
        };
        let on = |d0| ControlInput {
            delta: vec![d0, true],
            t_e: vec![10.0; 2],
            mdot: vec![5.0; 2],
        };
        let cost = evaluate_sequence(&ctx, &[on(false), on(true), on(false)], &p, &LossWeights::default()).unwrap();
        assert_eq!(cost.components.switching, 40.0);
        assert!(cost.violating_states > 0 && cost.max_violation > 0.0);
        assert_eq!(cost.t_r.len(), 4);
        assert!(evaluate_sequence(&ctx, &vec![on(true); 6], &p, &LossWeights::default()).is_err());
    }
}
