//! Neural control policies: three disjoint MLP heads for mass flow,
//! evaporator setpoint and the relaxed on/off decisions.
//!
//! Every head maps the same normalized feature vector
//!
//! ```text
//! [T_s^1 .. T_s^M, T_r, Q̃_load, Q_load(k) .. Q_load(k+N-1)]
//! ```
//!
//! through three ReLU hidden layers of width 200 to a linear output. The
//! on/off head has `M - 1` outputs: the chiller at [`HARDWIRED_CHILLER`]
//! always runs, which keeps at least one unit active by construction.

mod checkpoint;

pub use checkpoint::{CheckpointHeader, CHECKPOINT_FORMAT};

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffengine::{Graph, Var};
use crate::error::{Error, Result};
use crate::plant::{ControlInput, PlantParams, PlantState};

pub const HIDDEN_WIDTH: usize = 200;
pub const HIDDEN_LAYERS: usize = 3;
/// Index of the chiller whose on/off decision is fixed to 1.
pub const HARDWIRED_CHILLER: usize = 1;

/// Width of the feature vector for `m` chillers and an `n`-sample preview.
pub fn input_dim(m: usize, n: usize) -> usize {
    m + 2 + n
}

/// Trainable parameters of the three heads, in closed form.
pub fn param_count_formula(m: usize, n: usize) -> usize {
    let d = input_dim(m, n);
    let h = HIDDEN_WIDTH;
    [m, m, m - 1]
        .iter()
        .map(|out| d * h + h + 2 * (h * h + h) + h * out + out)
        .sum()
}

/// Chillers driven by the relaxed head, in output order.
pub fn switched_chillers(m: usize) -> impl Iterator<Item = usize> {
    (0..m).filter(|i| *i != HARDWIRED_CHILLER)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `out x in`, row-major.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Feed-forward net with ReLU between layers and a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// Hidden layers use fan-in scaled uniform (Kaiming) weights and zero
    /// biases; the output layer is small with its bias at `head_bias`.
    fn init<R: Rng>(sizes: &[usize], head_bias: f64, rng: &mut R) -> Self {
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(li, w)| {
                let (fan_in, out) = (w[0], w[1]);
                let bound = if li == last {
                    1.0 / (fan_in as f64).sqrt()
                } else {
                    (6.0 / fan_in as f64).sqrt()
                };
                let weight = Array2::from_shape_fn((out, fan_in), |_| rng.random_range(-bound..bound));
                let bias = Array1::from_elem(out, if li == last { head_bias } else { 0.0 });
                Dense { weight, bias }
            })
            .collect();
        Self { layers }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].weight.ncols()];
        s.extend(self.layers.iter().map(|l| l.weight.nrows()));
        s
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn forward(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let last = self.layers.len() - 1;
        let mut h = x.to_owned();
        for (li, l) in self.layers.iter().enumerate() {
            h = l.weight.dot(&h) + &l.bias;
            if li < last {
                h.mapv_inplace(|v| v.max(0.0));
            }
        }
        h
    }
}

/// Fixed affine `[lo, hi] -> [0, 1]` map per feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaling {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl FeatureScaling {
    pub fn for_plant(p: &PlantParams, horizon: usize) -> Self {
        let m = p.num_chillers;
        let cap = p.total_capacity();
        let mut lo = vec![p.t_s_min; m];
        let mut hi = vec![p.t_s_max; m];
        lo.push(p.t_r_min);
        hi.push(p.t_r_max);
        lo.extend(std::iter::repeat_n(0.0, horizon + 1));
        hi.extend(std::iter::repeat_n(cap, horizon + 1));
        Self { lo, hi }
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    /// `(scale, shift)` such that `normalized = raw * scale + shift`.
    pub fn coefficients(&self, j: usize) -> (f64, f64) {
        let scale = 1.0 / (self.hi[j] - self.lo[j]);
        (scale, -self.lo[j] * scale)
    }

    pub fn normalize(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .enumerate()
            .map(|(j, v)| {
                let (a, b) = self.coefficients(j);
                v * a + b
            })
            .collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(j, v)| self.lo[j] + v * (self.hi[j] - self.lo[j]))
            .collect()
    }
}

/// Normalized policy input.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

/// Unnormalized features in policy input order.
pub fn raw_features(state: &PlantState, preview: &[f64], p: &PlantParams) -> Vec<f64> {
    let mut raw = state.t_s.clone();
    raw.push(state.t_r);
    raw.push(state.filtered_load(p));
    raw.extend_from_slice(preview);
    raw
}

pub fn build_features(
    state: &PlantState,
    preview: &[f64],
    p: &PlantParams,
    scaling: &FeatureScaling,
) -> Result<FeatureVector> {
    let n = scaling.len() - p.num_chillers - 2;
    if preview.len() != n {
        return Err(Error::Usage(format!(
            "policy expects a {n}-sample load preview, got {}",
            preview.len()
        )));
    }
    Ok(FeatureVector(scaling.normalize(&raw_features(state, preview, p))))
}

/// Head outputs before rounding and clipping.
#[derive(Clone, Debug, PartialEq)]
pub struct RawOutputs {
    pub mdot: Vec<f64>,
    pub t_e: Vec<f64>,
    /// Relaxed on/off values for [`switched_chillers`].
    pub relaxed: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Continuous inputs pass through unclipped (they are penalized).
    Train,
    /// Continuous inputs are clipped to their bounds.
    Infer,
}

/// Rounds the relaxed decisions at 0.5 (strictly greater is on), forces
/// the hard-wired chiller on and, in [`Mode::Infer`], clips `ṁ` and `T_e`.
pub fn to_control(raw: &RawOutputs, p: &PlantParams, mode: Mode) -> ControlInput {
    let m = p.num_chillers;
    let mut delta = vec![true; m];
    for (j, i) in switched_chillers(m).enumerate() {
        delta[i] = raw.relaxed[j] > crate::diffengine::ROUND_THRESHOLD;
    }
    let u = ControlInput {
        delta,
        t_e: raw.t_e.clone(),
        mdot: raw.mdot.clone(),
    };
    match mode {
        Mode::Train => u,
        Mode::Infer => u.clipped(p),
    }
}

/// The three policy heads plus their input normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicySet {
    pub num_chillers: usize,
    pub horizon: usize,
    pub mdot: Mlp,
    pub t_e: Mlp,
    pub relaxed: Mlp,
    pub scaling: FeatureScaling,
    pub plant_hash: String,
    pub seed: u64,
}

impl PolicySet {
    pub fn new(p: &PlantParams, horizon: usize, seed: u64) -> Result<Self> {
        p.validate()?;
        if p.num_chillers < 2 {
            return Err(Error::Config("policies need at least two chillers".into()));
        }
        if horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        let m = p.num_chillers;
        let d = input_dim(m, horizon);
        let sizes = |out| {
            let mut s = vec![d];
            s.extend(std::iter::repeat_n(HIDDEN_WIDTH, HIDDEN_LAYERS));
            s.push(out);
            s
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdot = Mlp::init(&sizes(m), 0.5 * (p.mdot_min + p.mdot_max), &mut rng);
        let t_e = Mlp::init(&sizes(m), 0.5 * (p.t_e_min + p.t_e_max), &mut rng);
        let relaxed = Mlp::init(&sizes(m - 1), crate::diffengine::ROUND_THRESHOLD, &mut rng);
        Ok(Self {
            num_chillers: m,
            horizon,
            mdot,
            t_e,
            relaxed,
            scaling: FeatureScaling::for_plant(p, horizon),
            plant_hash: p.fingerprint(),
            seed,
        })
    }

    pub fn input_dim(&self) -> usize {
        input_dim(self.num_chillers, self.horizon)
    }

    pub fn heads(&self) -> [&Mlp; 3] {
        [&self.mdot, &self.t_e, &self.relaxed]
    }

    fn heads_mut(&mut self) -> [&mut Mlp; 3] {
        [&mut self.mdot, &mut self.t_e, &mut self.relaxed]
    }

    pub fn param_count(&self) -> usize {
        self.heads().iter().map(|h| h.param_count()).sum()
    }

    pub fn forward(&self, features: &FeatureVector) -> Result<RawOutputs> {
        if features.0.len() != self.input_dim() {
            return Err(Error::Usage(format!(
                "feature vector has length {}, policy expects {}",
                features.0.len(),
                self.input_dim()
            )));
        }
        let x = ArrayView1::from(&features.0[..]);
        Ok(RawOutputs {
            mdot: self.mdot.forward(x).to_vec(),
            t_e: self.t_e.forward(x).to_vec(),
            relaxed: self.relaxed.forward(x).to_vec(),
        })
    }

    /// Features, forward pass and inference-mode control in one call.
    pub fn act(&self, state: &PlantState, preview: &[f64], p: &PlantParams) -> Result<(ControlInput, RawOutputs)> {
        let f = build_features(state, preview, p, &self.scaling)?;
        let raw = self.forward(&f)?;
        Ok((to_control(&raw, p, Mode::Infer), raw))
    }

    /// All parameters in canonical order: heads (ṁ, T_e, δ̃), layers, then
    /// weight (row-major) before bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for h in self.heads() {
            for l in &h.layers {
                out.extend(l.weight.iter());
                out.extend(l.bias.iter());
            }
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Usage(format!(
                "{} parameters supplied, policy has {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut at = 0;
        for h in self.heads_mut() {
            for l in &mut h.layers {
                for v in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                    *v = flat[at];
                    at += 1;
                }
            }
        }
        Ok(())
    }

    /// Records every weight and bias as a differentiable leaf.
    pub fn bind(&self, g: &mut Graph) -> BoundPolicy {
        let mut bind_head = |h: &Mlp| {
            h.layers
                .iter()
                .map(|l| {
                    let w = g.leaf(l.weight.clone());
                    let b = g.leaf(l.bias.clone().insert_axis(ndarray::Axis(0)));
                    (w, b)
                })
                .collect::<Vec<_>>()
        };
        BoundPolicy {
            heads: [bind_head(&self.mdot), bind_head(&self.t_e), bind_head(&self.relaxed)],
        }
    }
}

/// Graph handles of a [`PolicySet`]'s parameters.
pub struct BoundPolicy {
    heads: [Vec<(Var, Var)>; 3],
}

/// Head outputs as graph nodes, `B x M`, `B x M`, `B x (M - 1)`.
pub struct GraphHeads {
    pub mdot: Var,
    pub t_e: Var,
    pub relaxed: Var,
}

impl BoundPolicy {
    pub fn forward(&self, g: &mut Graph, features: Var) -> GraphHeads {
        let mut run = |layers: &[(Var, Var)]| {
            let mut h = features;
            for (li, (w, b)) in layers.iter().enumerate() {
                h = g.affine(h, *w, *b);
                if li + 1 < layers.len() {
                    h = g.relu(h);
                }
            }
            h
        };
        GraphHeads {
            mdot: run(&self.heads[0]),
            t_e: run(&self.heads[1]),
            relaxed: run(&self.heads[2]),
        }
    }

    /// Parameter nodes in the order of [`PolicySet::flat_params`].
    pub fn params(&self) -> impl Iterator<Item = Var> + '_ {
        self.heads.iter().flatten().flat_map(|(w, b)| [*w, *b])
    }
}
