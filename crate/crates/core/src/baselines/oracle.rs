//! Exhaustive mixed-integer reference solutions for short horizons.
//!
//! Every on/off sequence of the switched chillers is enumerated; for each,
//! the continuous inputs are optimized by projected gradient steps through
//! the differentiable plant on variables normalized to `[0, 1]`.

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::objective::{evaluate_sequence, policy_sequence, SequenceCost};
use crate::diffengine::{Graph, Var};
use crate::error::{Error, Result};
use crate::plant::{ControlInput, PlantParams};
use crate::policy::{switched_chillers, FeatureScaling, GraphHeads, PolicySet};
use crate::scenario::{sample_context, SampledContext};
use crate::trainer::{rollout_loss, Adam, GraphPolicy, LossWeights, RolloutBatch};

pub const MAX_ORACLE_HORIZON: usize = 6;
pub const MAX_ORACLE_CHILLERS: usize = 3;

/// Binary sequences the largest admissible problem enumerates.
pub fn sequence_budget() -> u64 {
    1 << ((MAX_ORACLE_CHILLERS - 1) * MAX_ORACLE_HORIZON)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleOptions {
    pub iterations: usize,
    pub restarts: usize,
    /// Step length in normalized input units.
    pub step: f64,
    pub seed: u64,
    /// Sequences optimized together in one graph.
    pub chunk: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            iterations: 400,
            restarts: 3,
            step: 3e-2,
            seed: 0,
            chunk: 256,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleSolution {
    /// Decisions of the switched chillers per step.
    pub sequence: Vec<Vec<bool>>,
    pub controls: Vec<ControlInput>,
    pub cost: f64,
    pub detail: SequenceCost,
    pub sequences_evaluated: usize,
}

impl OracleSolution {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Decisions of sequence `index`, step-major with the first step in the
/// most significant bits so numeric and lexicographic order coincide.
pub fn decode_sequence(index: usize, m: usize, n: usize) -> Vec<Vec<bool>> {
    let w = m - 1;
    let bits = w * n;
    (0..n)
        .map(|k| (0..w).map(|j| index >> (bits - 1 - (k * w + j)) & 1 == 1).collect())
        .collect()
}

/// Normalized continuous inputs as leaves, decisions as constants.
struct Plan {
    /// Per step: `rows x M` for ṁ and for T_e, values in `[0, 1]`.
    mdot: Vec<Var>,
    t_e: Vec<Var>,
    relaxed: Vec<Var>,
    mdot_range: (f64, f64),
    t_e_range: (f64, f64),
}

impl GraphPolicy for Plan {
    fn heads(&mut self, g: &mut Graph, _features: Var, k: usize) -> GraphHeads {
        let (lo, hi) = self.mdot_range;
        let m = g.scale(self.mdot[k], hi - lo);
        let mdot = g.offset(m, lo);
        let (lo, hi) = self.t_e_range;
        let t = g.scale(self.t_e[k], hi - lo);
        let t_e = g.offset(t, lo);
        GraphHeads {
            mdot,
            t_e,
            relaxed: self.relaxed[k],
        }
    }
}

fn controls_of(
    z_mdot: &[Array2<f64>],
    z_te: &[Array2<f64>],
    seq: &[Vec<bool>],
    row: usize,
    p: &PlantParams,
) -> Vec<ControlInput> {
    let m = p.num_chillers;
    (0..seq.len())
        .map(|k| {
            let mut delta = vec![true; m];
            for (j, i) in switched_chillers(m).enumerate() {
                delta[i] = seq[k][j];
            }
            ControlInput {
                delta,
                mdot: (0..m)
                    .map(|i| p.mdot_min + z_mdot[k][[row, i]] * (p.mdot_max - p.mdot_min))
                    .collect(),
                t_e: (0..m)
                    .map(|i| p.t_e_min + z_te[k][[row, i]] * (p.t_e_max - p.t_e_min))
                    .collect(),
            }
            .clipped(p)
        })
        .collect()
}

/// Best binary sequence and continuous inputs for `n` steps from `ctx`.
///
/// Ties in cost go to the lexicographically smallest sequence.
pub fn oracle_solve(
    ctx: &SampledContext,
    p: &PlantParams,
    w: &LossWeights,
    n: usize,
    opts: &OracleOptions,
) -> Result<OracleSolution> {
    let m = p.num_chillers;
    if n == 0 || m < 2 {
        return Err(Error::Usage("oracle needs n >= 1 and at least two chillers".into()));
    }
    if n > MAX_ORACLE_HORIZON || m > MAX_ORACLE_CHILLERS {
        let required = 1u128 << ((m - 1) * n).min(127);
        return Err(Error::OracleBudget {
            required: required.min(u64::MAX as u128) as u64,
            limit: sequence_budget(),
        });
    }
    if opts.restarts == 0 || opts.chunk == 0 {
        return Err(Error::Usage(
            "oracle needs at least one restart and a nonempty chunk".into(),
        ));
    }
    let total = 1usize << ((m - 1) * n);
    let r = opts.restarts;
    let scaling = FeatureScaling::for_plant(p, n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut best: Option<(f64, usize, Vec<ControlInput>)> = None;
    for start in (0..total).step_by(opts.chunk) {
        let seqs: Vec<usize> = (start..(start + opts.chunk).min(total)).collect();
        let rows = seqs.len() * r;
        let decoded: Vec<_> = seqs.iter().map(|s| decode_sequence(*s, m, n)).collect();
        let init = |rng: &mut ChaCha8Rng| -> Vec<Array2<f64>> {
            (0..n)
                .map(|_| Array2::from_shape_fn((rows, m), |(row, _)| if row % r == 0 { 0.5 } else { rng.random() }))
                .collect()
        };
        let mut z_mdot = init(&mut rng);
        let mut z_te = init(&mut rng);
        let relaxed: Vec<Array2<f64>> = (0..n)
            .map(|k| Array2::from_shape_fn((rows, m - 1), |(row, j)| f64::from(u8::from(decoded[row / r][k][j]))))
            .collect();
        let ctxs = vec![ctx; rows];
        let batch = RolloutBatch::from_contexts(&ctxs, p, n)?;
        let nvar = 2 * n * rows * m;
        let mut opt = Adam::new(nvar, opts.step);
        let mut row_best = vec![(f64::INFINITY, Vec::new()); rows];

        for it in 0..=opts.iterations {
            let mut g = Graph::new();
            let mut plan = Plan {
                mdot: z_mdot.iter().map(|z| g.leaf(z.clone())).collect(),
                t_e: z_te.iter().map(|z| g.leaf(z.clone())).collect(),
                relaxed: relaxed.iter().map(|d| g.constant(d.clone())).collect(),
                mdot_range: (p.mdot_min, p.mdot_max),
                t_e_range: (p.t_e_min, p.t_e_max),
            };
            let roll = rollout_loss(&mut g, &mut plan, &scaling, &batch, p, w)?;
            for (row, cost) in roll.row_loss.iter().enumerate() {
                if *cost < row_best[row].0 {
                    row_best[row] = (*cost, controls_of(&z_mdot, &z_te, &decoded[row / r], row, p));
                }
            }
            if it == opts.iterations {
                break;
            }
            let grads = g.backward(roll.loss)?;
            let mut flat: Vec<f64> = Vec::with_capacity(nvar);
            let mut params: Vec<f64> = Vec::with_capacity(nvar);
            for (v, z) in plan.mdot.iter().zip(&z_mdot).chain(plan.t_e.iter().zip(&z_te)) {
                flat.extend(grads.get(*v).expect("leaf adjoint").iter());
                params.extend(z.iter());
            }
            opt.step(&mut params, &flat);
            let mut at = 0;
            for z in z_mdot.iter_mut().chain(z_te.iter_mut()) {
                for v in z.iter_mut() {
                    *v = params[at].clamp(0.0, 1.0);
                    at += 1;
                }
            }
        }

        for (si, s) in seqs.iter().enumerate() {
            for (cost, controls) in &row_best[si * r..(si + 1) * r] {
                let better = match &best {
                    None => true,
                    Some((bc, bs, _)) => *cost < *bc || (*cost == *bc && *s < *bs),
                };
                if better {
                    best = Some((*cost, *s, controls.clone()));
                }
            }
        }
    }

    let (_, index, controls) = best.expect("at least one sequence");
    let detail = evaluate_sequence(ctx, &controls, p, w)?;
    Ok(OracleSolution {
        sequence: decode_sequence(index, m, n),
        controls,
        cost: detail.total,
        detail,
        sequences_evaluated: total,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GapStats {
    pub policy_costs: Vec<f64>,
    pub oracle_costs: Vec<f64>,
    /// `(policy − oracle) / oracle` per context.
    pub gaps: Vec<f64>,
    pub mean_gap: f64,
    pub max_gap: f64,
}

/// Relative cost gap of `policy` to the oracle over `n`-step sub-horizons
/// of `n_contexts` sampled contexts.
pub fn oracle_gap(
    policy: &PolicySet,
    p: &PlantParams,
    w: &LossWeights,
    n: usize,
    n_contexts: usize,
    seed: u64,
    opts: &OracleOptions,
) -> Result<GapStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = policy.horizon.max(n);
    let mut stats = GapStats {
        policy_costs: Vec::new(),
        oracle_costs: Vec::new(),
        gaps: Vec::new(),
        mean_gap: 0.0,
        max_gap: f64::NEG_INFINITY,
    };
    for _ in 0..n_contexts {
        let ctx = sample_context(p, horizon, &mut rng)?;
        let oracle = oracle_solve(&ctx, p, w, n, opts)?;
        let us = policy_sequence(&ctx, policy, p, n)?;
        let pc = evaluate_sequence(&ctx, &us, p, w)?.total;
        let gap = (pc - oracle.cost) / oracle.cost;
        stats.policy_costs.push(pc);
        stats.oracle_costs.push(oracle.cost);
        stats.max_gap = stats.max_gap.max(gap);
        stats.gaps.push(gap);
    }
    stats.mean_gap = stats.gaps.iter().sum::<f64>() / stats.gaps.len().max(1) as f64;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{rbc_sequence, RbcConfig};

    fn flat_ctx(p: &PlantParams, n: usize, t_r: f64, load: f64) -> SampledContext {
        SampledContext {
            t_r0: t_r,
            t_s0: vec![10.0; p.num_chillers],
            load_history0: vec![load; p.history_len()],
            preview: vec![load; 2 * n],
            last_cooling0: None,
        }
    }

    #[test]
    fn sequence_decoding() {
        assert_eq!(decode_sequence(0b110, 2, 3), vec![vec![true], vec![true], vec![false]]);
        assert_eq!(
            decode_sequence(0b1001, 3, 2),
            vec![vec![true, false], vec![false, true]]
        );
        let all: Vec<_> = (0..8).map(|i| decode_sequence(i, 2, 3)).collect();
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(all, sorted);
    }

    #[test]
    fn low_load_runs_one_chiller() {
        let p = PlantParams::reference(2);
        let ctx = flat_ctx(&p, 1, 15.0, 100.0);
        let sol = oracle_solve(&ctx, &p, &LossWeights::default(), 1, &OracleOptions::default()).unwrap();
        assert_eq!(sol.sequence, vec![vec![false]]);
        assert_eq!(sol.controls[0].delta, vec![false, true]);
        assert_eq!(sol.sequences_evaluated, 2);
    }

    #[test]
    fn enumerates_every_sequence_and_refuses_large_problems() {
        let p = PlantParams::reference(2);
        let ctx = flat_ctx(&p, 3, 18.0, 300.0);
        let opts = OracleOptions {
            iterations: 20,
            ..Default::default()
        };
        let sol = oracle_solve(&ctx, &p, &LossWeights::default(), 3, &opts).unwrap();
        assert_eq!(sol.sequences_evaluated, 8);
        match oracle_solve(&flat_ctx(&p, 7, 18.0, 300.0), &p, &LossWeights::default(), 7, &opts) {
            Err(Error::OracleBudget { required, limit }) => assert_eq!((required, limit), (128, 4096)),
            other => panic!("expected refusal, got {other:?}"),
        }
        let p4 = PlantParams::reference(4);
        assert!(matches!(
            oracle_solve(&flat_ctx(&p4, 2, 18.0, 300.0), &p4, &LossWeights::default(), 2, &opts),
            Err(Error::OracleBudget { .. })
        ));
    }

    #[test]
    fn never_worse_than_rbc() {
        let p = PlantParams::reference(2);
        let w = LossWeights::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..4 {
            let ctx = sample_context(&p, 3, &mut rng).unwrap();
            let sol = oracle_solve(&ctx, &p, &w, 3, &OracleOptions::default()).unwrap();
            let rbc =
                evaluate_sequence(&ctx, &rbc_sequence(&ctx, &p, &RbcConfig::default(), 3).unwrap(), &p, &w).unwrap();
            assert!(sol.cost <= rbc.total, "oracle {} rbc {}", sol.cost, rbc.total);
        }
    }

    #[test]
    fn solution_exports_json() {
        let p = PlantParams::reference(2);
        let ctx = flat_ctx(&p, 1, 15.0, 200.0);
        let opts = OracleOptions {
            iterations: 5,
            ..Default::default()
        };
        let sol = oracle_solve(&ctx, &p, &LossWeights::default(), 1, &opts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("o.json");
        sol.write_json(&path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert!(v["cost"].as_f64().unwrap() > 0.0);
        assert_eq!(v["controls"].as_array().unwrap().len(), 1);
    }
}
