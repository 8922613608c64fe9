//! Receding-horizon closed-loop evaluation, run persistence and metrics.

pub mod cli;
mod metrics;
mod ramp;

pub use metrics::{compare, compute_metrics, Comparison, RunMetrics, Violation};
pub use ramp::{ramp_plant, ramp_profile, ramp_scenario, RampReport, RampSpec, RAMP_LIMIT_KW};

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{rbc_step, RbcConfig, RbcState};
use crate::error::{Error, Result};
use crate::plant::{self, ControlInput, PlantParams, PlantState};
use crate::policy::{PolicySet, HARDWIRED_CHILLER};
use crate::scenario::{steps_per_day, LoadProfile};

/// Initial return and supply temperatures of every closed-loop run.
pub const INITIAL_T_R: f64 = 20.0;
pub const INITIAL_T_S: f64 = 10.0;

pub struct Decision {
    pub control: ControlInput,
    /// Relaxed on/off values, for learned policies.
    pub relaxed: Option<Vec<f64>>,
}

/// A closed-loop controller: sees the current state and the load preview,
/// returns the inputs applied for one sampling period.
pub trait Controller {
    fn name(&self) -> String;
    /// Preview samples requested per step.
    fn horizon(&self) -> usize;
    /// Whether per-step decision time is measured. Rule-based staging has
    /// no inference to time and reports none.
    fn timed(&self) -> bool;
    fn reset(&mut self);
    fn act(&mut self, state: &PlantState, preview: &[f64], p: &PlantParams) -> Result<Decision>;
}

pub struct PolicyController {
    pub policy: PolicySet,
}

impl Controller for PolicyController {
    fn name(&self) -> String {
        format!("mi-dpc(N={})", self.policy.horizon)
    }
    fn horizon(&self) -> usize {
        self.policy.horizon
    }
    fn timed(&self) -> bool {
        true
    }
    fn reset(&mut self) {}
    fn act(&mut self, state: &PlantState, preview: &[f64], p: &PlantParams) -> Result<Decision> {
        let (control, raw) = self.policy.act(state, preview, p)?;
        Ok(Decision {
            control,
            relaxed: Some(raw.relaxed),
        })
    }
}

pub struct RbcController {
    pub config: RbcConfig,
    state: RbcState,
}

impl RbcController {
    pub fn new(config: RbcConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            state: RbcState::default(),
        })
    }
}

impl Controller for RbcController {
    fn name(&self) -> String {
        "rbc".into()
    }
    fn horizon(&self) -> usize {
        0
    }
    fn timed(&self) -> bool {
        false
    }
    fn reset(&mut self) {
        self.state = RbcState::default();
    }
    fn act(&mut self, state: &PlantState, _preview: &[f64], p: &PlantParams) -> Result<Decision> {
        Ok(Decision {
            control: rbc_step(&mut self.state, state, &self.config, p)?,
            relaxed: None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub time_s: f64,
    pub q_load_kw: f64,
    pub q_tilde_kw: f64,
    pub t_r: f64,
    pub t_s: Vec<f64>,
    pub delta: Vec<bool>,
    pub t_e: Vec<f64>,
    pub mdot: Vec<f64>,
    /// Delivered cooling per chiller.
    pub q: Vec<f64>,
    pub p_chiller_kw: f64,
    pub p_pump_kw: f64,
    pub infer_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relaxed: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub controller: String,
    pub plant: PlantParams,
    pub plant_hash: String,
    pub steps: usize,
    pub horizon: usize,
    pub profile_seed: u64,
    pub profile_hash: String,
    pub initial_state: PlantState,
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub config: RunConfig,
    pub trace: Vec<TraceRow>,
    pub metrics: RunMetrics,
    /// Whole-run wall time, plant stepping included.
    pub wall_time_s: f64,
}

/// Digest of the first `steps` load samples and the sampling period: the
/// load a run of that length actually simulates.
pub fn profile_hash(profile: &LoadProfile, steps: usize) -> String {
    let mut h = Sha256::new();
    for q in profile.samples.iter().take(steps) {
        h.update(q.to_le_bytes());
    }
    h.update(profile.dt.to_le_bytes());
    hex::encode(h.finalize())
}

/// The state every closed-loop run starts from: fixed temperatures and the
/// first profile sample filling the load history.
pub fn default_initial_state(p: &PlantParams, profile: &LoadProfile) -> PlantState {
    PlantState::uniform(p, INITIAL_T_R, INITIAL_T_S, profile.at(0))
}

/// Closed-loop run over `days` of `profile`.
pub fn simulate(
    controller: &mut dyn Controller,
    p: &PlantParams,
    profile: &LoadProfile,
    days: usize,
) -> Result<RunRecord> {
    let steps = days * steps_per_day(p.dt);
    simulate_steps(controller, p, profile, steps, default_initial_state(p, profile))
}

/// Closed-loop run of `steps` steps from `initial`. Previews past the end of
/// the profile repeat its last sample.
pub fn simulate_steps(
    controller: &mut dyn Controller,
    p: &PlantParams,
    profile: &LoadProfile,
    steps: usize,
    initial: PlantState,
) -> Result<RunRecord> {
    p.validate()?;
    initial.validate(p)?;
    if profile.is_empty() || steps == 0 {
        return Err(Error::Usage(
            "simulation needs a nonempty profile and at least one step".into(),
        ));
    }
    if (profile.dt - p.dt).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "profile sampled every {} s, plant steps every {} s",
            profile.dt, p.dt
        )));
    }
    let start = Instant::now();
    controller.reset();
    let n = controller.horizon();
    let mut state = initial.clone();
    let mut trace = Vec::with_capacity(steps);
    for k in 0..steps {
        let preview = profile.window(k, n);
        let t0 = Instant::now();
        let d = controller.act(&state, &preview, p)?;
        let infer = if controller.timed() {
            t0.elapsed().as_secs_f64()
        } else {
            0.0
        };
        d.control.validate(p)?;
        if !d.control.delta[HARDWIRED_CHILLER] {
            return Err(Error::Usage(format!(
                "{} switched off the hard-wired chiller at step {k}",
                controller.name()
            )));
        }
        let (next, pw) = plant::step(&state, &d.control, p, profile.at(k + 1)).map_err(|e| e.at_step(k))?;
        trace.push(TraceRow {
            step: k,
            time_s: k as f64 * p.dt,
            q_load_kw: state.current_load(),
            q_tilde_kw: state.filtered_load(p),
            t_r: state.t_r,
            t_s: state.t_s.clone(),
            delta: d.control.delta,
            t_e: d.control.t_e,
            mdot: d.control.mdot,
            p_chiller_kw: pw.chiller_total(),
            p_pump_kw: pw.pump_total(),
            q: pw.q,
            infer_time_s: infer,
            relaxed: d.relaxed,
        });
        state = next;
    }
    let metrics = compute_metrics(&trace, p, controller.timed())?;
    Ok(RunRecord {
        config: RunConfig {
            controller: controller.name(),
            plant: p.clone(),
            plant_hash: p.fingerprint(),
            steps,
            horizon: n,
            profile_seed: profile.seed,
            profile_hash: profile_hash(profile, steps),
            initial_state: initial,
        },
        trace,
        metrics,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

impl RunRecord {
    /// Writes `config.json`, `trace.csv` and `metrics.json` into `dir`, plus
    /// the wall-clock figures in `timing.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(&self.config)?)?;
        std::fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&self.metrics)?)?;
        std::fs::write(
            dir.join("timing.json"),
            serde_json::to_string_pretty(&serde_json::json!({ "wall_time_s": self.wall_time_s }))?,
        )?;
        self.write_trace_csv(&dir.join("trace.csv"))
    }

    /// Per-step trace; per-chiller delivered cooling follows the timing
    /// column so metrics can be recomputed from the file.
    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        let m = self.config.plant.num_chillers;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let cols = |prefix: &str, suffix: &str| (1..=m).map(|i| format!(",{prefix}{i}{suffix}")).collect::<String>();
        writeln!(
            f,
            "step,time_s,q_load_kw,q_tilde_kw,t_r_c{}{}{}{},p_chiller_kw,p_pump_kw,infer_time_s{}",
            cols("t_s_", "_c"),
            cols("delta_", ""),
            cols("t_e_", "_c"),
            cols("mdot_", ""),
            cols("q_", "_kw"),
        )?;
        for r in &self.trace {
            write!(f, "{},{},{},{},{}", r.step, r.time_s, r.q_load_kw, r.q_tilde_kw, r.t_r)?;
            for v in &r.t_s {
                write!(f, ",{v}")?;
            }
            for d in &r.delta {
                write!(f, ",{}", u8::from(*d))?;
            }
            for v in r.t_e.iter().chain(&r.mdot) {
                write!(f, ",{v}")?;
            }
            write!(f, ",{},{},{}", r.p_chiller_kw, r.p_pump_kw, r.infer_time_s)?;
            for v in &r.q {
                write!(f, ",{v}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }

    /// Reads back the configuration and metrics of a saved run.
    pub fn load_summary(dir: &Path) -> Result<(RunConfig, RunMetrics)> {
        let read = |name: &str| {
            std::fs::read_to_string(dir.join(name))
                .map_err(|e| Error::Config(format!("{}: {e}", dir.join(name).display())))
        };
        Ok((
            serde_json::from_str(&read("config.json")?)?,
            serde_json::from_str(&read("metrics.json")?)?,
        ))
    }
}
