use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RunConfig, TraceRow};
use crate::error::{Error, Result};
use crate::plant::PlantParams;

/// kW·s in one MWh.
const KWS_PER_MWH: f64 = 3.6e6;

/// Bound excursions of one state over a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub state: String,
    /// Largest distance outside the bounds, °C.
    pub max_excess: f64,
    pub steps: usize,
    pub percent_steps: f64,
    /// Steps above the upper bound only.
    pub upper_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub steps: usize,
    pub ec_total: f64,
    pub ec_chillers: f64,
    pub ec_pumps: f64,
    pub ec_cop: f64,
    pub n_switches: usize,
    /// Percent.
    pub mean_rce: f64,
    /// Mean per-step decision time, seconds. Absent for untimed controllers.
    pub mit: Option<f64>,
    pub violations: Vec<Violation>,
}

impl RunMetrics {
    pub fn violation(&self, state: &str) -> Option<&Violation> {
        self.violations.iter().find(|v| v.state == state)
    }
}

fn violation(name: String, values: impl Iterator<Item = f64>, lo: f64, hi: f64, steps: usize) -> Violation {
    let mut v = Violation {
        state: name,
        max_excess: 0.0,
        steps: 0,
        percent_steps: 0.0,
        upper_steps: 0,
    };
    for x in values {
        let e = (lo - x).max(x - hi);
        if e > 0.0 {
            v.steps += 1;
            v.max_excess = v.max_excess.max(e);
            if x > hi {
                v.upper_steps += 1;
            }
        }
    }
    v.percent_steps = 100.0 * v.steps as f64 / steps as f64;
    v
}

pub fn compute_metrics(trace: &[TraceRow], p: &PlantParams, timed: bool) -> Result<RunMetrics> {
    if trace.is_empty() {
        return Err(Error::Usage("metrics need a nonempty trace".into()));
    }
    let n = trace.len();
    let ec_chillers = trace.iter().map(|r| r.p_chiller_kw).sum::<f64>() * p.dt / KWS_PER_MWH;
    let ec_pumps = trace.iter().map(|r| r.p_pump_kw).sum::<f64>() * p.dt / KWS_PER_MWH;
    let cooling: f64 = trace.iter().flat_map(|r| &r.q).sum();
    let chiller_power: f64 = trace.iter().map(|r| r.p_chiller_kw).sum();
    let n_switches = trace
        .windows(2)
        .map(|w| w[0].delta.iter().zip(&w[1].delta).filter(|(a, b)| a != b).count())
        .sum();
    let rce: Vec<f64> = trace
        .iter()
        .filter(|r| r.q_load_kw > 0.0)
        .map(|r| 100.0 * (r.q_load_kw - r.q.iter().sum::<f64>()).abs() / r.q_load_kw)
        .collect();
    let mean_rce = if rce.is_empty() {
        0.0
    } else {
        rce.iter().sum::<f64>() / rce.len() as f64
    };
    let mut violations = vec![violation(
        "t_r".into(),
        trace.iter().map(|r| r.t_r),
        p.t_r_min,
        p.t_r_max,
        n,
    )];
    for i in 0..p.num_chillers {
        violations.push(violation(
            format!("t_s_{}", i + 1),
            trace.iter().map(|r| r.t_s[i]),
            p.t_s_min,
            p.t_s_max,
            n,
        ));
    }
    Ok(RunMetrics {
        steps: n,
        ec_total: ec_chillers + ec_pumps,
        ec_chillers,
        ec_pumps,
        ec_cop: if chiller_power > 0.0 {
            cooling / chiller_power
        } else {
            0.0
        },
        n_switches,
        mean_rce,
        mit: timed.then(|| trace.iter().map(|r| r.infer_time_s).sum::<f64>() / n as f64),
        violations,
    })
}

/// Side-by-side metrics of a candidate run against a baseline run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub candidate: String,
    pub baseline: String,
    /// Energy saved by the candidate relative to the baseline, percent.
    pub savings_pct: f64,
    /// `(metric, candidate, baseline)`
    pub rows: Vec<(String, f64, f64)>,
}

/// `savings = (EC_baseline − EC_candidate) / EC_baseline · 100`. Both runs
/// must share the plant and the load profile.
pub fn compare(candidate: (&RunConfig, &RunMetrics), baseline: (&RunConfig, &RunMetrics)) -> Result<Comparison> {
    let (ca, ma) = candidate;
    let (cb, mb) = baseline;
    if ca.plant_hash != cb.plant_hash || ca.profile_hash != cb.profile_hash || ca.steps != cb.steps {
        return Err(Error::Usage(
            "runs differ in plant, profile or length and cannot be compared".into(),
        ));
    }
    let opt = |v: Option<f64>| v.unwrap_or(f64::NAN);
    let rows = vec![
        ("ec_total_mwh".into(), ma.ec_total, mb.ec_total),
        ("ec_chillers_mwh".into(), ma.ec_chillers, mb.ec_chillers),
        ("ec_pumps_mwh".into(), ma.ec_pumps, mb.ec_pumps),
        ("ec_cop".into(), ma.ec_cop, mb.ec_cop),
        ("n_switches".into(), ma.n_switches as f64, mb.n_switches as f64),
        ("mean_rce_pct".into(), ma.mean_rce, mb.mean_rce),
        ("mit_s".into(), opt(ma.mit), opt(mb.mit)),
    ];
    Ok(Comparison {
        candidate: ca.controller.clone(),
        baseline: cb.controller.clone(),
        savings_pct: (mb.ec_total - ma.ec_total) / mb.ec_total * 100.0,
        rows,
    })
}

impl Comparison {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "metric,{},{}", self.candidate, self.baseline)?;
        for (name, a, b) in &self.rows {
            writeln!(f, "{name},{a},{b}")?;
        }
        writeln!(f, "savings_pct,{},", self.savings_pct)?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
