//! Binary-variance ablation: policies trained with different weights are
//! driven through the same load step and their relaxed decisions compared.

use std::io::Write;
use std::path::Path;

use super::{train_from, LossWeights, TrainConfig, TrainOutcome};
use crate::error::Result;
use crate::plant::{self, PlantParams, PlantState};
use crate::policy::PolicySet;
use crate::scenario::Dataset;

pub const STEP_LOW_KW: f64 = 150.0;
pub const STEP_HIGH_KW: f64 = 500.0;
/// Step index at which the load jumps.
pub const STEP_AT: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct StepResponse {
    pub loads: Vec<f64>,
    /// Relaxed decisions per step, one entry per switched chiller.
    pub relaxed: Vec<Vec<f64>>,
    pub delta: Vec<Vec<bool>>,
    pub t_r: Vec<f64>,
}

impl StepResponse {
    /// Mean over steps and chillers of the distance from the nearest of 0
    /// and 1.
    pub fn mean_polarity_distance(&self) -> f64 {
        let d: Vec<f64> = self
            .relaxed
            .iter()
            .flatten()
            .map(|v| v.abs().min((v - 1.0).abs()))
            .collect();
        d.iter().sum::<f64>() / d.len() as f64
    }

    pub fn switches(&self) -> usize {
        self.delta
            .windows(2)
            .map(|w| w[0].iter().zip(&w[1]).filter(|(a, b)| a != b).count())
            .sum()
    }
}

/// Closed-loop response to a load step from [`STEP_LOW_KW`] to
/// [`STEP_HIGH_KW`] at [`STEP_AT`], run for `2 * STEP_AT` steps.
pub fn step_response(policy: &PolicySet, p: &PlantParams) -> Result<StepResponse> {
    let steps = 2 * STEP_AT;
    let n = policy.horizon;
    let load = |k: usize| if k < STEP_AT { STEP_LOW_KW } else { STEP_HIGH_KW };
    let loads: Vec<f64> = (0..steps + n).map(load).collect();
    let mut state = PlantState::uniform(p, 20.0, 10.0, STEP_LOW_KW);
    let mut out = StepResponse {
        loads: loads[..steps].to_vec(),
        relaxed: Vec::with_capacity(steps),
        delta: Vec::with_capacity(steps),
        t_r: Vec::with_capacity(steps),
    };
    for k in 0..steps {
        let (u, raw) = policy.act(&state, &loads[k..k + n], p)?;
        out.relaxed.push(raw.relaxed);
        out.delta.push(u.delta.clone());
        out.t_r.push(state.t_r);
        state = plant::step(&state, &u, p, loads[k + 1]).map_err(|e| e.at_step(k))?.0;
    }
    Ok(out)
}

pub struct AblationRun {
    pub bvr_weight: f64,
    pub outcome: TrainOutcome,
    pub response: StepResponse,
}

/// Trains one policy per binary-variance weight (same seed and data, all
/// other weights fixed) and records each step response.
pub fn bvr_ablation(
    p: &PlantParams,
    cfg: &TrainConfig,
    w: &LossWeights,
    weights: &[f64],
    data: &Dataset,
) -> Result<Vec<AblationRun>> {
    weights
        .iter()
        .map(|&bvr| {
            let init = PolicySet::new(p, cfg.horizon, cfg.seed)?;
            let outcome = train_from(init, p, cfg, &w.with_bvr(bvr), data)?;
            let response = step_response(&outcome.policy, p)?;
            Ok(AblationRun {
                bvr_weight: bvr,
                outcome,
                response,
            })
        })
        .collect()
}

/// One row per weight and step: load, relaxed and rounded decisions.
pub fn write_ablation_csv(runs: &[AblationRun], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let switched = runs.first().map_or(0, |r| r.response.relaxed[0].len());
    write!(f, "lambda,step,q_load_kw,t_r_c")?;
    for j in 0..switched {
        write!(f, ",delta_relaxed_{j}")?;
    }
    for j in 0..switched {
        write!(f, ",delta_{j}")?;
    }
    writeln!(f)?;
    for run in runs {
        let r = &run.response;
        for k in 0..r.loads.len() {
            write!(f, "{},{},{},{}", run.bvr_weight, k, r.loads[k], r.t_r[k])?;
            for v in &r.relaxed[k] {
                write!(f, ",{v}")?;
            }
            for (i, d) in r.delta[k].iter().enumerate() {
                if i != crate::policy::HARDWIRED_CHILLER {
                    write!(f, ",{}", u8::from(*d))?;
                }
            }
            writeln!(f)?;
        }
    }
    Ok(())
}
