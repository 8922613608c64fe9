//! Steep load increase on a plant whose chillers can only change their
//! output gradually.

use serde::{Deserialize, Serialize};

use super::{default_initial_state, simulate_steps, Controller, PolicyController, RbcController, RunRecord};
use crate::baselines::RbcConfig;
use crate::error::{Error, Result};
use crate::plant::PlantParams;
use crate::policy::PolicySet;
use crate::scenario::LoadProfile;

/// Per-chiller cooling change allowed per step in the ramp scenario, kW.
pub const RAMP_LIMIT_KW: f64 = 100.0;

/// Three 1 MW chillers whose cooling output is ramp limited.
pub fn ramp_plant() -> PlantParams {
    PlantParams::reference(3)
        .with_q_max(1000.0)
        .with_ramp_limit(RAMP_LIMIT_KW)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RampSpec {
    pub base_kw: f64,
    pub peak_kw: f64,
    /// Step at which the load starts rising.
    pub start: usize,
    /// Steps from base to peak.
    pub rise: usize,
    pub steps: usize,
}

impl Default for RampSpec {
    fn default() -> Self {
        Self {
            base_kw: 500.0,
            peak_kw: 2000.0,
            start: 20,
            rise: 10,
            steps: 80,
        }
    }
}

/// Flat base load, linear rise, flat peak; `tail` extra peak samples.
pub fn ramp_profile(spec: &RampSpec, dt: f64, tail: usize) -> LoadProfile {
    let samples = (0..spec.steps + tail)
        .map(|k| {
            if k < spec.start {
                spec.base_kw
            } else if k >= spec.start + spec.rise {
                spec.peak_kw
            } else {
                let s = (k - spec.start + 1) as f64 / spec.rise as f64;
                spec.base_kw + s * (spec.peak_kw - spec.base_kw)
            }
        })
        .collect();
    LoadProfile {
        samples,
        dt,
        days: 0,
        seed: 0,
    }
}

#[derive(Clone, Debug)]
pub struct RampReport {
    pub policy_limited: RunRecord,
    pub rbc_limited: RunRecord,
    pub policy_free: RunRecord,
    pub rbc_free: RunRecord,
}

impl RampReport {
    fn upper(r: &RunRecord) -> usize {
        r.metrics.violation("t_r").map_or(0, |v| v.upper_steps)
    }

    /// Steps with the return temperature above its upper bound:
    /// `(policy, rbc)` with the ramp limit, then without.
    pub fn upper_violations(&self) -> [(usize, usize); 2] {
        [
            (Self::upper(&self.policy_limited), Self::upper(&self.rbc_limited)),
            (Self::upper(&self.policy_free), Self::upper(&self.rbc_free)),
        ]
    }

    pub fn summary(&self) -> serde_json::Value {
        let [lim, free] = self.upper_violations();
        let peak = |r: &RunRecord| r.trace.iter().map(|t| t.t_r).fold(f64::NEG_INFINITY, f64::max);
        serde_json::json!({
            "ramp_limited": {
                "policy_upper_violation_steps": lim.0,
                "rbc_upper_violation_steps": lim.1,
                "policy_peak_t_r": peak(&self.policy_limited),
                "rbc_peak_t_r": peak(&self.rbc_limited),
            },
            "unlimited": {
                "policy_upper_violation_steps": free.0,
                "rbc_upper_violation_steps": free.1,
                "policy_peak_t_r": peak(&self.policy_free),
                "rbc_peak_t_r": peak(&self.rbc_free),
            },
        })
    }
}

/// Runs the policy and RBC through the same steep ramp twice: on `plant`
/// as given (which must carry a ramp limit) and with the limit removed.
pub fn ramp_scenario(plant: &PlantParams, policy: &PolicySet, rbc: &RbcConfig, spec: &RampSpec) -> Result<RampReport> {
    if plant.ramp_limit.is_none() {
        return Err(Error::Config("ramp scenario needs a plant with a ramp limit".into()));
    }
    let free = PlantParams {
        ramp_limit: None,
        ..plant.clone()
    };
    let profile = ramp_profile(spec, plant.dt, policy.horizon);
    let run = |p: &PlantParams, c: &mut dyn Controller| {
        simulate_steps(c, p, &profile, spec.steps, default_initial_state(p, &profile))
    };
    let mut pc = PolicyController { policy: policy.clone() };
    let mut rc = RbcController::new(*rbc)?;
    Ok(RampReport {
        policy_limited: run(plant, &mut pc)?,
        rbc_limited: run(plant, &mut rc)?,
        policy_free: run(&free, &mut pc)?,
        rbc_free: run(&free, &mut rc)?,
    })
}
