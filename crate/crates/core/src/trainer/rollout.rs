//! Batched closed-loop rollouts through the differentiable plant.

use ndarray::{s, Array2, Axis};

use super::LossWeights;
use crate::diffengine::{Arith, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::plant::model::{self, ChillerInputs, Thermal};
use crate::plant::PlantParams;
use crate::policy::{switched_chillers, BoundPolicy, FeatureScaling, GraphHeads, HARDWIRED_CHILLER};
use crate::scenario::{preview_len, SampledContext};

/// Anything that can emit the three head outputs inside a graph.
///
/// The trained networks ignore `step`; scripted control sequences (the
/// oracle's decision variables, test fixtures) use it to index their plan.
pub trait GraphPolicy {
    fn heads(&mut self, g: &mut Graph, features: Var, step: usize) -> GraphHeads;
}

impl GraphPolicy for BoundPolicy {
    fn heads(&mut self, g: &mut Graph, features: Var, _step: usize) -> GraphHeads {
        self.forward(g, features)
    }
}

/// Contexts stacked row-wise.
#[derive(Clone, Debug)]
pub struct RolloutBatch {
    pub horizon: usize,
    /// `B x 1`
    pub t_r0: Tensor,
    /// `B x M`
    pub t_s0: Tensor,
    /// Raw load samples, `B x 2N`, column `k` is the load at step `k`.
    pub loads: Tensor,
    /// Filtered load driving step `k`, `B x N`.
    pub q_tilde: Tensor,
    /// Previous-step cooling for ramp-limited plants, `B x M`.
    pub last_cooling0: Option<Tensor>,
    /// Divisor of every loss component. Equal to the row count for a whole
    /// batch; micro-batches use the size of the batch they belong to.
    pub norm: f64,
}

impl RolloutBatch {
    pub fn from_contexts(ctxs: &[&SampledContext], p: &PlantParams, horizon: usize) -> Result<Self> {
        Self::with_norm(ctxs, p, horizon, ctxs.len() as f64)
    }

    pub fn with_norm(ctxs: &[&SampledContext], p: &PlantParams, horizon: usize, norm: f64) -> Result<Self> {
        let b = ctxs.len();
        let m = p.num_chillers;
        let hl = p.history_len();
        let pl = preview_len(horizon);
        if b == 0 {
            return Err(Error::Usage("empty rollout batch".into()));
        }
        for c in ctxs {
            if c.preview.len() < pl || c.load_history0.len() != hl || c.t_s0.len() != m {
                return Err(Error::Usage(format!(
                    "context does not support a {horizon}-step rollout for {m} chillers"
                )));
            }
            if p.ramp_limit.is_some() && c.last_cooling0.as_ref().is_none_or(|v| v.len() != m) {
                return Err(Error::Usage(
                    "ramp-limited plant needs previous cooling in every context".into(),
                ));
            }
        }
        let t_r0 = Array2::from_shape_fn((b, 1), |(r, _)| ctxs[r].t_r0);
        let t_s0 = Array2::from_shape_fn((b, m), |(r, i)| ctxs[r].t_s0[i]);
        let loads = Array2::from_shape_fn((b, pl), |(r, k)| ctxs[r].preview[k]);
        // History at step k, newest first: preview[k], .., preview[0], then
        // the older samples carried by the context.
        let sample = |c: &SampledContext, k: usize, j: usize| {
            if j <= k {
                c.preview[k - j]
            } else {
                c.load_history0[j - k]
            }
        };
        let q_tilde = Array2::from_shape_fn((b, horizon), |(r, k)| {
            (0..hl).map(|j| p.fir_coeffs[j] * sample(ctxs[r], k, j)).sum()
        });
        let last_cooling0 = p
            .ramp_limit
            .map(|_| Array2::from_shape_fn((b, m), |(r, i)| ctxs[r].last_cooling0.as_ref().unwrap()[i]));
        Ok(Self {
            horizon,
            t_r0,
            t_s0,
            loads,
            q_tilde,
            last_cooling0,
            norm,
        })
    }

    pub fn rows(&self) -> usize {
        self.t_r0.nrows()
    }
}

/// Batch-mean loss terms, already multiplied by their weights.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize)]
pub struct LossComponents {
    pub power: f64,
    pub switching: f64,
    pub tracking: f64,
    pub state_penalty: f64,
    pub input_penalty: f64,
    pub bvr: f64,
}

impl LossComponents {
    pub const NAMES: [&'static str; 6] = [
        "power",
        "switching",
        "tracking",
        "state_penalty",
        "input_penalty",
        "bvr",
    ];

    pub fn values(&self) -> [f64; 6] {
        [
            self.power,
            self.switching,
            self.tracking,
            self.state_penalty,
            self.input_penalty,
            self.bvr,
        ]
    }

    pub fn total(&self) -> f64 {
        self.values().iter().sum()
    }

    pub fn add_scaled(&mut self, other: &Self, w: f64) {
        self.power += w * other.power;
        self.switching += w * other.switching;
        self.tracking += w * other.tracking;
        self.state_penalty += w * other.state_penalty;
        self.input_penalty += w * other.input_penalty;
        self.bvr += w * other.bvr;
    }
}

/// Per-step values of every row, for inspection and plotting.
#[derive(Clone, Debug, Default)]
pub struct RolloutTrace {
    /// `B x (M - 1)` relaxed decisions per step.
    pub relaxed: Vec<Tensor>,
    /// `B x M` rounded decisions per step.
    pub delta: Vec<Tensor>,
    /// `B x M` delivered cooling per step.
    pub cooling: Vec<Tensor>,
    /// `B x 1` return temperature, `N + 1` entries.
    pub t_r: Vec<Tensor>,
}

pub struct Rollout {
    pub loss: Var,
    pub components: LossComponents,
    /// Weighted loss of each row, not divided by the batch norm.
    pub row_loss: Vec<f64>,
    pub trace: RolloutTrace,
}

fn accumulate(g: &mut Graph, acc: &mut Option<Var>, term: Var) {
    *acc = Some(match *acc {
        Some(a) => g.add(a, term),
        None => term,
    });
}

fn finish(g: &mut Graph, acc: Option<Var>, weight: f64, norm: f64) -> Var {
    match acc {
        Some(v) => {
            let s = g.sum(v);
            g.scale(s, weight / norm)
        }
        None => g.full(1, 1, 0.0),
    }
}

/// Records an `N`-step single-shooting rollout of `policy` from every
/// context in `batch` and assembles the training loss.
///
/// Per step: the policy sees the current simulated state and the shifted
/// load preview, its outputs become unclipped controls with hard-rounded
/// on/off decisions, and the plant advances by one RK4 step. The loss sums
/// chiller and pump power, the weighted squared change of the rounded
/// decisions between consecutive steps, squared load-tracking error,
/// squared state and input bound violations, and the binary-variance term
/// `(δ̃ (1 − δ̃))²`.
pub fn rollout_loss<P: GraphPolicy>(
    g: &mut Graph,
    policy: &mut P,
    scaling: &FeatureScaling,
    batch: &RolloutBatch,
    p: &PlantParams,
    w: &LossWeights,
) -> Result<Rollout> {
    let m = p.num_chillers;
    let n = batch.horizon;
    let b = batch.rows();
    if scaling.len() != m + 2 + n {
        return Err(Error::Usage(format!(
            "policy input width {} does not match M={m}, N={n}",
            scaling.len()
        )));
    }

    let mut x = Thermal {
        t_r: g.constant(batch.t_r0.clone()),
        t_s: (0..m)
            .map(|i| g.constant(batch.t_s0.slice(s![.., i..i + 1]).to_owned()))
            .collect(),
    };
    let mut prev: Option<Vec<Var>> = batch.last_cooling0.as_ref().map(|c| {
        (0..m)
            .map(|i| g.constant(c.slice(s![.., i..i + 1]).to_owned()))
            .collect()
    });
    let ones = g.full(b, 1, 1.0);

    let (mut power, mut switching, mut tracking, mut state_pen, mut input_pen, mut bvr) =
        (None, None, None, None, None, None);
    let mut prev_delta: Option<Vec<Var>> = None;
    let mut trace = RolloutTrace::default();

    let state_penalty = |g: &mut Graph, x: &Thermal<Var>| {
        let mut acc = g.clamp_penalty(x.t_r, p.t_r_min, p.t_r_max);
        for ts in &x.t_s {
            let v = g.clamp_penalty(*ts, p.t_s_min, p.t_s_max);
            acc = g.add(acc, v);
        }
        acc
    };
    let v0 = state_penalty(g, &x);
    accumulate(g, &mut state_pen, v0);
    trace.t_r.push(g.value(x.t_r).clone());

    for k in 0..n {
        g.push_scope(format!("rollout/k={k}"));

        // features: scaled temperatures, then the fixed load block
        let mut parts = Vec::with_capacity(m + 2);
        for (i, ts) in x.t_s.iter().enumerate() {
            let (a, c) = scaling.coefficients(i);
            let v = g.scale(*ts, a);
            parts.push(g.offset(v, c));
        }
        let (a, c) = scaling.coefficients(m);
        let v = g.scale(x.t_r, a);
        parts.push(g.offset(v, c));
        let mut block = Array2::zeros((b, n + 1));
        for r in 0..b {
            let (a, c) = scaling.coefficients(m + 1);
            block[[r, 0]] = batch.q_tilde[[r, k]] * a + c;
            for j in 0..n {
                let (a, c) = scaling.coefficients(m + 2 + j);
                block[[r, j + 1]] = batch.loads[[r, k + j]] * a + c;
            }
        }
        parts.push(g.constant(block));
        let features = g.concat(&parts);

        let heads = policy.heads(g, features, k);
        let mdot: Vec<Var> = (0..m).map(|i| g.column(heads.mdot, i)).collect();
        let t_e: Vec<Var> = (0..m).map(|i| g.column(heads.t_e, i)).collect();
        let mut delta = vec![ones; m];
        let mut relaxed = Vec::with_capacity(m - 1);
        for (j, i) in switched_chillers(m).enumerate() {
            let r = g.column(heads.relaxed, j);
            relaxed.push(r);
            delta[i] = g.ste_round(r, w.mu);
        }
        debug_assert_eq!(delta[HARDWIRED_CHILLER], ones);

        for i in 0..m {
            let a = g.clamp_penalty(mdot[i], p.mdot_min, p.mdot_max);
            let c = g.clamp_penalty(t_e[i], p.t_e_min, p.t_e_max);
            let s = g.add(a, c);
            accumulate(g, &mut input_pen, s);
        }
        for r in &relaxed {
            let r2 = g.square(*r);
            let var = g.sub(*r, r2);
            let v = g.square(var);
            accumulate(g, &mut bvr, v);
        }
        if let Some(pd) = &prev_delta {
            for i in switched_chillers(m) {
                let d = g.sub(delta[i], pd[i]);
                let v = g.square(d);
                accumulate(g, &mut switching, v);
            }
        }

        let inputs = ChillerInputs {
            delta: delta.clone(),
            t_e,
            mdot,
        };
        let q = model::cooling(g, p, &x, &inputs, prev.as_deref());
        let pw = model::power(g, p, &q, &inputs);
        for i in 0..m {
            let s = g.add(pw.chiller[i], pw.pump[i]);
            accumulate(g, &mut power, s);
        }
        let total_q = g.sum_all(&q);
        let load = g.constant(batch.loads.slice(s![.., k..k + 1]).to_owned());
        let err = g.sub(total_q, load);
        let v = g.square(err);
        accumulate(g, &mut tracking, v);

        let q_tilde = g.constant(batch.q_tilde.slice(s![.., k..k + 1]).to_owned());
        x = model::rk4(g, p, &x, &inputs, &q_tilde, prev.as_deref(), p.dt);
        let v = state_penalty(g, &x);
        accumulate(g, &mut state_pen, v);

        trace.relaxed.push(if relaxed.is_empty() {
            Tensor::zeros((b, 0))
        } else {
            let rv: Vec<_> = relaxed.iter().map(|r| g.value(*r).view()).collect();
            ndarray::concatenate(Axis(1), &rv).unwrap()
        });
        let dv: Vec<_> = delta.iter().map(|d| g.value(*d).view()).collect();
        trace.delta.push(ndarray::concatenate(Axis(1), &dv).unwrap());
        let qv: Vec<_> = q.iter().map(|d| g.value(*d).view()).collect();
        trace.cooling.push(ndarray::concatenate(Axis(1), &qv).unwrap());
        trace.t_r.push(g.value(x.t_r).clone());

        if p.ramp_limit.is_some() {
            prev = Some(q);
        }
        prev_delta = Some(delta);
        g.pop_scope();
    }

    let norm = batch.norm;
    let mut row_loss = vec![0.0; b];
    for (acc, wt) in [
        (power, 1.0),
        (switching, w.switching),
        (tracking, w.tracking),
        (state_pen, w.state),
        (input_pen, w.input),
        (bvr, w.bvr),
    ] {
        if let Some(v) = acc {
            for (r, x) in row_loss.iter_mut().zip(g.value(v).iter()) {
                *r += wt * x;
            }
        }
    }
    let terms = [
        finish(g, power, 1.0, norm),
        finish(g, switching, w.switching, norm),
        finish(g, tracking, w.tracking, norm),
        finish(g, state_pen, w.state, norm),
        finish(g, input_pen, w.input, norm),
        finish(g, bvr, w.bvr, norm),
    ];
    let mut loss = terms[0];
    for t in &terms[1..] {
        loss = g.add(loss, *t);
    }
    g.check()?;
    let v: Vec<f64> = terms.iter().map(|t| g.scalar(*t)).collect();
    let components = LossComponents {
        power: v[0],
        switching: v[1],
        tracking: v[2],
        state_penalty: v[3],
        input_penalty: v[4],
        bvr: v[5],
    };
    if !components.total().is_finite() {
        return Err(Error::NumericFault {
            op: "rollout_loss",
            node: loss.index(),
            path: "rollout/total".into(),
        });
    }
    Ok(Rollout {
        loss,
        components,
        row_loss,
        trace,
    })
}
