//! Self-supervised policy training through differentiable plant rollouts.

mod ablation;
mod optim;
mod rollout;

pub use ablation::{
    bvr_ablation, step_response, write_ablation_csv, AblationRun, StepResponse, STEP_AT, STEP_HIGH_KW, STEP_LOW_KW,
};
pub use optim::{clip_gradients, global_norm, Adam};
pub use rollout::{rollout_loss, GraphPolicy, LossComponents, Rollout, RolloutBatch, RolloutTrace};

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffengine::{Graph, Rounding};
use crate::error::{Error, Result};
use crate::plant::PlantParams;
use crate::policy::PolicySet;
use crate::scenario::{Dataset, SampledContext};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// Penalty on each change of a rounded on/off decision.
    #[serde(rename = "R")]
    pub switching: f64,
    /// Squared load-tracking error weight, kW⁻².
    #[serde(rename = "lambda_W")]
    pub tracking: f64,
    #[serde(rename = "lambda_x")]
    pub state: f64,
    #[serde(rename = "lambda_u")]
    pub input: f64,
    /// Binary-variance weight.
    #[serde(rename = "Lambda")]
    pub bvr: f64,
    /// Slope of the straight-through sigmoid.
    pub mu: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            switching: 20.0,
            tracking: 0.001,
            state: 10.0,
            input: 10.0,
            bvr: 200.0,
            mu: 1.0,
        }
    }
}

impl LossWeights {
    pub fn with_bvr(mut self, bvr: f64) -> Self {
        self.bvr = bvr;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.switching, self.tracking, self.state, self.input, self.bvr, self.mu];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("loss weights must be finite and nonnegative".into()));
        }
        if self.mu == 0.0 {
            return Err(Error::Config("sigmoid slope mu must be positive".into()));
        }
        Ok(())
    }

    /// Training additionally needs a positive binary-variance weight:
    /// without it the relaxed decisions settle near the rounding threshold.
    pub fn validate_for_training(&self) -> Result<()> {
        self.validate()?;
        if self.bvr <= 0.0 {
            return Err(Error::Config("training requires Lambda > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a new best dev loss before stopping.
    pub patience: usize,
    pub clip_norm: f64,
    pub horizon: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_dev: usize,
    /// Rows recorded per graph. Bounds memory; does not change results
    /// beyond floating-point summation order.
    pub micro_batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk_scale(10)
    }
}

impl TrainConfig {
    pub fn desk_scale(horizon: usize) -> Self {
        Self {
            learning_rate: 0.006,
            batch_size: 1000,
            max_epochs: 400,
            patience: 50,
            clip_norm: 100.0,
            horizon,
            seed: 0,
            n_train: 3000,
            n_dev: 1000,
            micro_batch: 250,
        }
    }

    pub fn paper_scale(horizon: usize) -> Self {
        Self {
            batch_size: 10_000,
            n_train: 30_000,
            n_dev: 10_000,
            ..Self::desk_scale(horizon)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.batch_size == 0 || self.batch_size > self.n_train {
            return Err(Error::Config(format!(
                "batch size {} must be in 1..={}",
                self.batch_size, self.n_train
            )));
        }
        if self.n_dev == 0 || self.micro_batch == 0 {
            return Err(Error::Config("dev set and micro-batch must be nonempty".into()));
        }
        if !(self.clip_norm > 0.0) || !(self.learning_rate >= 0.0) {
            return Err(Error::Config(
                "clip norm must be positive and learning rate nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Loss and flat parameter gradient of `policy` over `ctxs`, the loss being
/// the mean over the rows. Rows are recorded `micro` at a time and their
/// adjoints summed in order.
pub fn loss_and_grad(
    policy: &PolicySet,
    ctxs: &[&SampledContext],
    p: &PlantParams,
    w: &LossWeights,
    micro: usize,
    rounding: Rounding,
) -> Result<(LossComponents, Vec<f64>)> {
    let norm = ctxs.len() as f64;
    let mut comps = LossComponents::default();
    let mut grad = vec![0.0; policy.param_count()];
    for chunk in ctxs.chunks(micro.max(1)) {
        let batch = RolloutBatch::with_norm(chunk, p, policy.horizon, norm)?;
        let mut g = Graph::with_rounding(rounding);
        let mut bound = policy.bind(&mut g);
        let r = rollout_loss(&mut g, &mut bound, &policy.scaling, &batch, p, w)?;
        let mut grads = g.backward(r.loss)?;
        let mut at = 0;
        for v in bound.params().collect::<Vec<_>>() {
            let t = grads.take_or_zeros(v, g.shape(v));
            for (dst, src) in grad[at..at + t.len()].iter_mut().zip(t.iter()) {
                *dst += src;
            }
            at += t.len();
        }
        comps.add_scaled(&r.components, 1.0);
    }
    Ok((comps, grad))
}

/// Forward-only mean loss over `ctxs`.
pub fn evaluate(
    policy: &PolicySet,
    ctxs: &[SampledContext],
    p: &PlantParams,
    w: &LossWeights,
    micro: usize,
) -> Result<LossComponents> {
    let refs: Vec<&SampledContext> = ctxs.iter().collect();
    let norm = ctxs.len() as f64;
    let mut comps = LossComponents::default();
    for chunk in refs.chunks(micro.max(1)) {
        let batch = RolloutBatch::with_norm(chunk, p, policy.horizon, norm)?;
        let mut g = Graph::new();
        let mut bound = policy.bind(&mut g);
        let r = rollout_loss(&mut g, &mut bound, &policy.scaling, &batch, p, w)?;
        comps.add_scaled(&r.components, 1.0);
    }
    Ok(comps)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    /// Mean training components over the epoch.
    pub components: LossComponents,
    /// Mean pre-clip gradient norm over the epoch's batches.
    pub grad_norm: f64,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum StopReason {
    MaxEpochs,
    EarlyStopped,
    Diverged { epoch: usize, detail: String },
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters with the lowest dev loss seen.
    pub policy: PolicySet,
    pub initial_dev_loss: f64,
    pub best_dev_loss: f64,
    pub best_epoch: usize,
    pub history: Vec<EpochLog>,
    pub stop: StopReason,
    /// Batches skipped because their loss or gradient was not finite.
    pub aborted_batches: usize,
    pub wall_time_s: f64,
}

impl TrainOutcome {
    /// The divergence as an error, for callers that treat it as fatal.
    pub fn diverged(&self) -> Option<Error> {
        match &self.stop {
            StopReason::Diverged { epoch, detail } => Some(Error::Diverged {
                epoch: *epoch,
                detail: detail.clone(),
            }),
            _ => None,
        }
    }

    pub fn write_log_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(f, "epoch,train_loss,dev_loss")?;
        for n in LossComponents::NAMES {
            write!(f, ",{n}")?;
        }
        writeln!(f, ",grad_norm,wall_time_s")?;
        for e in &self.history {
            write!(f, "{},{},{}", e.epoch, e.train_loss, e.dev_loss)?;
            for v in e.components.values() {
                write!(f, ",{v}")?;
            }
            writeln!(f, ",{},{}", e.grad_norm, e.wall_time_s)?;
        }
        Ok(())
    }
}

/// Number of consecutive epochs above [`DIVERGENCE_FACTOR`] times the
/// initial dev loss that count as divergence.
pub const DIVERGENCE_EPOCHS: usize = 5;
pub const DIVERGENCE_FACTOR: f64 = 10.0;

/// Trains a freshly initialized policy on `data`.
pub fn train(p: &PlantParams, cfg: &TrainConfig, w: &LossWeights, data: &Dataset) -> Result<TrainOutcome> {
    w.validate_for_training()?;
    let init = PolicySet::new(p, cfg.horizon, cfg.seed)?;
    train_from(init, p, cfg, w, data)
}

/// Minibatch training from the given parameters with dev-loss early
/// stopping. Only the weights' basic validity is checked, so ablations can
/// run with a zero binary-variance weight.
pub fn train_from(
    mut policy: PolicySet,
    p: &PlantParams,
    cfg: &TrainConfig,
    w: &LossWeights,
    data: &Dataset,
) -> Result<TrainOutcome> {
    w.validate()?;
    let cfg = TrainConfig {
        n_train: data.train.len(),
        n_dev: data.dev.len(),
        ..cfg.clone()
    };
    cfg.validate()?;
    if policy.horizon != cfg.horizon || data.manifest.horizon < cfg.horizon {
        return Err(Error::Config(format!(
            "policy horizon {}, dataset horizon {} and config horizon {} disagree",
            policy.horizon, data.manifest.horizon, cfg.horizon
        )));
    }

    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let mut params = policy.flat_params();
    let mut opt = Adam::new(params.len(), cfg.learning_rate);

    let initial_dev_loss = evaluate(&policy, &data.dev, p, w, cfg.micro_batch)?.total();
    let mut best = (initial_dev_loss, 0usize, params.clone());
    let mut history = Vec::new();
    let mut stop = StopReason::MaxEpochs;
    let mut aborted = 0;
    let mut bad_epochs = 0;
    let mut order: Vec<usize> = (0..data.train.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut comps = LossComponents::default();
        let mut norm_sum = 0.0;
        let mut seen = 0usize;
        let mut batches = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            let ctxs: Vec<&SampledContext> = idx.iter().map(|i| &data.train[*i]).collect();
            let (c, mut grad) = match loss_and_grad(&policy, &ctxs, p, w, cfg.micro_batch, Rounding::Straight) {
                Ok(r) => r,
                Err(e) if e.is_numeric() => {
                    aborted += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            if grad.iter().any(|g| !g.is_finite()) {
                aborted += 1;
                continue;
            }
            norm_sum += clip_gradients(&mut grad, cfg.clip_norm)?;
            opt.step(&mut params, &grad);
            policy.set_flat_params(&params)?;
            comps.add_scaled(&c, idx.len() as f64);
            seen += idx.len();
            batches += 1;
        }
        if seen > 0 {
            comps = {
                let mut m = LossComponents::default();
                m.add_scaled(&comps, 1.0 / seen as f64);
                m
            };
        }
        let dev_loss = match evaluate(&policy, &data.dev, p, w, cfg.micro_batch) {
            Ok(c) => c.total(),
            Err(e) if e.is_numeric() => f64::NAN,
            Err(e) => return Err(e),
        };
        history.push(EpochLog {
            epoch,
            train_loss: if seen > 0 { comps.total() } else { f64::NAN },
            dev_loss,
            components: comps,
            grad_norm: if batches > 0 {
                norm_sum / batches as f64
            } else {
                f64::NAN
            },
            wall_time_s: start.elapsed().as_secs_f64(),
        });

        if dev_loss.is_nan() {
            stop = StopReason::Diverged {
                epoch,
                detail: "dev loss is not a number".into(),
            };
            break;
        }
        if dev_loss > DIVERGENCE_FACTOR * initial_dev_loss {
            bad_epochs += 1;
            if bad_epochs >= DIVERGENCE_EPOCHS {
                stop = StopReason::Diverged {
                    epoch,
                    detail: format!(
                        "dev loss {dev_loss:.4e} above {DIVERGENCE_FACTOR}x initial {initial_dev_loss:.4e} for {DIVERGENCE_EPOCHS} epochs"
                    ),
                };
                break;
            }
        } else {
            bad_epochs = 0;
        }
        if dev_loss < best.0 {
            best = (dev_loss, epoch, params.clone());
        } else if epoch - best.1 >= cfg.patience {
            stop = StopReason::EarlyStopped;
            break;
        }
    }

    policy.set_flat_params(&best.2)?;
    Ok(TrainOutcome {
        policy,
        initial_dev_loss,
        best_dev_loss: best.0,
        best_epoch: best.1,
        history,
        stop,
        aborted_batches: aborted,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
