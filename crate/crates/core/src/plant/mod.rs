//! Discrete-time multi-chiller plant: thermal dynamics, power model and
//! the FIR load filter.
//!
//! Chillers run in parallel on a shared return loop. Each loop `i` has a
//! supply temperature `T_s[i]` driven toward its evaporator setpoint; the
//! return temperature `T_r` integrates the filtered server load minus the
//! total delivered cooling. The ODE is advanced with classic RK4 over one
//! sampling period, with the filtered load held constant inside the step.

pub mod model;

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffengine::Scalar;
use crate::error::{Error, Result};
use model::{ChillerInputs, Thermal};

/// Physical constants and operating bounds of one plant. Serialized names
/// follow the customary symbols (`c_p`, `C`, `C_r`, `Q_max`, ...).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantParams {
    #[serde(rename = "M")]
    pub num_chillers: usize,
    /// Specific heat of water, kJ/(kg·°C).
    pub c_p: f64,
    /// Thermal capacitance of each chiller loop, kJ/°C.
    #[serde(rename = "C")]
    pub c_loop: f64,
    /// Thermal capacitance of the return loop, kJ/°C.
    #[serde(rename = "C_r")]
    pub c_return: f64,
    /// Base power of a running chiller, kW.
    pub rho: f64,
    /// Rated cooling per chiller, kW.
    #[serde(rename = "Q_max")]
    pub q_max: f64,
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub eta_s: f64,
    pub eta_r: f64,
    /// Pump coefficient, kW·s³/kg³.
    pub gamma: f64,
    pub mdot_min: f64,
    pub mdot_max: f64,
    #[serde(rename = "T_s_min")]
    pub t_s_min: f64,
    #[serde(rename = "T_s_max")]
    pub t_s_max: f64,
    #[serde(rename = "T_e_min")]
    pub t_e_min: f64,
    #[serde(rename = "T_e_max")]
    pub t_e_max: f64,
    #[serde(rename = "T_r_min")]
    pub t_r_min: f64,
    #[serde(rename = "T_r_max")]
    pub t_r_max: f64,
    /// FIR coefficients `h_0..h_L`, newest sample first.
    pub fir_coeffs: Vec<f64>,
    /// Sampling period, s.
    pub dt: f64,
    /// Maximum change of delivered cooling per step and chiller, kW.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ramp_limit: Option<f64>,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self::reference(2)
    }
}

impl PlantParams {
    /// The reference plant with `m` identical chillers.
    pub fn reference(m: usize) -> Self {
        Self {
            num_chillers: m,
            c_p: 4.184,
            c_loop: 14644.0,
            c_return: 29288.0,
            rho: 10.0,
            q_max: 500.0,
            a0: 1.0,
            a1: 19.33,
            a2: -18.33,
            eta_s: 0.7,
            eta_r: 0.75,
            gamma: 9.62e-4,
            mdot_min: 5.0,
            mdot_max: 20.0,
            t_s_min: 8.0,
            t_s_max: 12.0,
            t_e_min: 8.0,
            t_e_max: 12.0,
            t_r_min: 8.0,
            t_r_max: 40.0,
            fir_coeffs: vec![0.45, 0.2, 0.15, 0.1, 0.05, 0.05],
            dt: 180.0,
            ramp_limit: None,
        }
    }

    pub fn with_q_max(mut self, q_max: f64) -> Self {
        self.q_max = q_max;
        self
    }

    pub fn with_ramp_limit(mut self, limit: f64) -> Self {
        self.ramp_limit = Some(limit);
        self
    }

    /// Number of load samples the filter needs (`L + 1`).
    pub fn history_len(&self) -> usize {
        self.fir_coeffs.len()
    }

    pub fn total_capacity(&self) -> f64 {
        self.q_max * self.num_chillers as f64
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.num_chillers == 0 {
            return fail("M must be positive".into());
        }
        if self.fir_coeffs.is_empty() || self.fir_coeffs.iter().any(|h| *h <= 0.0) {
            return fail("fir_coeffs must be non-empty and strictly positive".into());
        }
        let sum: f64 = self.fir_coeffs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return fail(format!("fir_coeffs sum to {sum}, expected 1"));
        }
        for (name, v) in [
            ("c_p", self.c_p),
            ("C", self.c_loop),
            ("C_r", self.c_return),
            ("Q_max", self.q_max),
            ("dt", self.dt),
            ("gamma", self.gamma),
        ] {
            if !(v > 0.0) {
                return fail(format!("{name} must be strictly positive, got {v}"));
            }
        }
        if self.rho < 0.0 {
            return fail(format!("rho must be nonnegative, got {}", self.rho));
        }
        for (name, v) in [("eta_s", self.eta_s), ("eta_r", self.eta_r)] {
            if !(v > 0.0 && v < 1.0) {
                return fail(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        for (name, lo, hi) in [
            ("mdot", self.mdot_min, self.mdot_max),
            ("T_s", self.t_s_min, self.t_s_max),
            ("T_e", self.t_e_min, self.t_e_max),
            ("T_r", self.t_r_min, self.t_r_max),
        ] {
            if !(lo < hi) {
                return fail(format!("{name} bounds must satisfy min < max, got [{lo}, {hi}]"));
            }
        }
        if let Some(r) = self.ramp_limit {
            if !(r > 0.0) {
                return fail(format!("ramp_limit must be positive, got {r}"));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let p: Self = toml::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("plant parameters serialize to toml")
    }

    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("plant parameters serialize to json");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// `Σ_l h_l · history[l]`, newest sample first.
pub fn filtered_load(history: &[f64], coeffs: &[f64]) -> Result<f64> {
    if history.len() != coeffs.len() {
        return Err(Error::Config(format!(
            "load history has {} samples, filter expects {}",
            history.len(),
            coeffs.len()
        )));
    }
    Ok(history.iter().zip(coeffs).map(|(q, h)| q * h).sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub t_r: f64,
    pub t_s: Vec<f64>,
    /// Last `L + 1` raw load samples, kW, newest first.
    pub load_history: Vec<f64>,
    /// Cooling delivered in the previous step, used by the ramp limit.
    #[serde(default)]
    pub last_cooling: Option<Vec<f64>>,
}

impl PlantState {
    pub fn new(p: &PlantParams, t_r: f64, t_s: Vec<f64>, load_history: Vec<f64>) -> Result<Self> {
        let s = Self {
            t_r,
            t_s,
            load_history,
            last_cooling: None,
        };
        s.validate(p)?;
        Ok(s)
    }

    /// Every chiller loop at `t_s`, history filled with `load`.
    pub fn uniform(p: &PlantParams, t_r: f64, t_s: f64, load: f64) -> Self {
        Self {
            t_r,
            t_s: vec![t_s; p.num_chillers],
            load_history: vec![load; p.history_len()],
            last_cooling: None,
        }
    }

    pub fn validate(&self, p: &PlantParams) -> Result<()> {
        if self.t_s.len() != p.num_chillers {
            return Err(Error::Config(format!(
                "state has {} supply temperatures for {} chillers",
                self.t_s.len(),
                p.num_chillers
            )));
        }
        if self.load_history.len() != p.history_len() {
            return Err(Error::Config(format!(
                "load history has {} samples, filter expects {}",
                self.load_history.len(),
                p.history_len()
            )));
        }
        if self.load_history.iter().any(|q| !(*q >= 0.0)) {
            return Err(Error::Config("load history must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn filtered_load(&self, p: &PlantParams) -> f64 {
        self.load_history.iter().zip(&p.fir_coeffs).map(|(q, h)| q * h).sum()
    }

    pub fn current_load(&self) -> f64 {
        self.load_history[0]
    }

    pub(crate) fn thermal(&self) -> Thermal<f64> {
        Thermal {
            t_r: self.t_r,
            t_s: self.t_s.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub delta: Vec<bool>,
    /// Evaporator setpoints, °C.
    pub t_e: Vec<f64>,
    /// Mass flows, kg/s.
    pub mdot: Vec<f64>,
}

impl ControlInput {
    pub fn validate(&self, p: &PlantParams) -> Result<()> {
        let m = p.num_chillers;
        if self.delta.len() != m || self.t_e.len() != m || self.mdot.len() != m {
            return Err(Error::Usage(format!("control vectors must have length {m}")));
        }
        if !self.delta.iter().any(|d| *d) {
            return Err(Error::Usage("at least one chiller must be active".into()));
        }
        Ok(())
    }

    /// Elementwise clip of the continuous inputs to their bounds.
    pub fn clipped(mut self, p: &PlantParams) -> Self {
        for v in &mut self.mdot {
            *v = v.clamp(p.mdot_min, p.mdot_max);
        }
        for v in &mut self.t_e {
            *v = v.clamp(p.t_e_min, p.t_e_max);
        }
        self
    }

    pub fn active_count(&self) -> usize {
        self.delta.iter().filter(|d| **d).count()
    }

    pub(crate) fn inputs(&self) -> ChillerInputs<f64> {
        ChillerInputs {
            delta: self.delta.iter().map(|d| if *d { 1.0 } else { 0.0 }).collect(),
            t_e: self.t_e.clone(),
            mdot: self.mdot.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerBreakdown {
    pub q: Vec<f64>,
    pub cop: Vec<f64>,
    pub p_chiller: Vec<f64>,
    pub p_pump: Vec<f64>,
    pub q_total: f64,
}

impl PowerBreakdown {
    pub fn chiller_total(&self) -> f64 {
        self.p_chiller.iter().sum()
    }

    pub fn pump_total(&self) -> f64 {
        self.p_pump.iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.chiller_total() + self.pump_total()
    }
}

pub fn delivered_cooling(state: &PlantState, u: &ControlInput, p: &PlantParams) -> Vec<f64> {
    model::cooling(
        &mut Scalar,
        p,
        &state.thermal(),
        &u.inputs(),
        state.last_cooling.as_deref(),
    )
}

pub fn cop(q: f64, p: &PlantParams) -> f64 {
    model::cop(&mut Scalar, p, &q)
}

pub fn power(state: &PlantState, u: &ControlInput, p: &PlantParams) -> PowerBreakdown {
    let inputs = u.inputs();
    let q = delivered_cooling(state, u, p);
    let terms = model::power(&mut Scalar, p, &q, &inputs);
    PowerBreakdown {
        q_total: q.iter().sum(),
        q,
        cop: terms.cop,
        p_chiller: terms.chiller,
        p_pump: terms.pump,
    }
}

/// `(dT_r/dt, dT_s/dt)` at the given state and filtered load.
pub fn derivatives(state: &PlantState, u: &ControlInput, q_tilde: f64, p: &PlantParams) -> (f64, Vec<f64>) {
    let d = model::derivatives(
        &mut Scalar,
        p,
        &state.thermal(),
        &u.inputs(),
        &q_tilde,
        state.last_cooling.as_deref(),
    );
    (d.t_r, d.t_s)
}

/// Integrates the temperatures over `h` seconds with `n` RK4 substeps.
/// Used for convergence studies; [`step`] is the single-substep case.
pub fn integrate(state: &PlantState, u: &ControlInput, p: &PlantParams, h: f64, n: usize) -> (f64, Vec<f64>) {
    let q_tilde = state.filtered_load(p);
    let inputs = u.inputs();
    let mut x = state.thermal();
    for _ in 0..n {
        x = model::rk4(
            &mut Scalar,
            p,
            &x,
            &inputs,
            &q_tilde,
            state.last_cooling.as_deref(),
            h / n as f64,
        );
    }
    (x.t_r, x.t_s)
}

/// Advances the plant by one sampling period and shifts `next_load` into
/// the load history. Power is evaluated at the start of the step.
pub fn step(
    state: &PlantState,
    u: &ControlInput,
    p: &PlantParams,
    next_load: f64,
) -> Result<(PlantState, PowerBreakdown)> {
    let breakdown = power(state, u, p);
    let (t_r, t_s) = integrate(state, u, p, p.dt, 1);
    if !t_r.is_finite() || t_s.iter().any(|v| !v.is_finite()) {
        return Err(Error::SimulationFault {
            step: 0,
            detail: format!("non-finite temperatures after step: T_r={t_r}, T_s={t_s:?}, controls={u:?}"),
        });
    }
    let mut load_history = Vec::with_capacity(state.load_history.len());
    load_history.push(next_load.max(0.0));
    load_history.extend_from_slice(&state.load_history[..state.load_history.len() - 1]);
    let next = PlantState {
        t_r,
        t_s,
        load_history,
        last_cooling: Some(breakdown.q.clone()),
    };
    Ok((next, breakdown))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn on(m: usize) -> ControlInput {
        ControlInput {
            delta: vec![true; m],
            t_e: vec![10.0; m],
            mdot: vec![10.0; m],
        }
    }

    #[test]
    fn filtered_load_examples() {
        let h = PlantParams::reference(2).fir_coeffs;
        assert!((filtered_load(&[300.0; 6], &h).unwrap() - 300.0).abs() < 1e-12);
        let v = filtered_load(&[400.0, 300.0, 300.0, 300.0, 300.0, 300.0], &h).unwrap();
        assert!((v - 345.0).abs() < 1e-12);
        assert_eq!(filtered_load(&[0.0; 6], &h).unwrap(), 0.0);
        assert!(filtered_load(&[1.0; 5], &h).is_err());
    }

    #[test]
    fn one_hot_filter_picks_sample() {
        let hist = [3.0, 5.0, 7.0, 11.0];
        for j in 0..4 {
            let mut c = [0.0; 4];
            c[j] = 1.0;
            assert_eq!(filtered_load(&hist, &c).unwrap(), hist[j]);
        }
    }

    #[test]
    fn delivered_cooling_examples() {
        let p = PlantParams::reference(1);
        let mut s = PlantState::uniform(&p, 20.0, 10.0, 0.0);
        let mut u = on(1);
        let q = delivered_cooling(&s, &u, &p)[0];
        assert!((q - 313.8).abs() < 1e-9);
        u.delta[0] = false;
        assert_eq!(delivered_cooling(&s, &u, &p)[0], 0.0);
        u.delta[0] = true;
        s.t_r = 10.0;
        assert_eq!(delivered_cooling(&s, &u, &p)[0], 0.0);
    }

    #[test]
    fn ramp_limit_clamps_change() {
        let p = PlantParams::reference(1).with_ramp_limit(50.0);
        let mut s = PlantState::uniform(&p, 20.0, 10.0, 0.0);
        s.last_cooling = Some(vec![100.0]);
        assert!((delivered_cooling(&s, &on(1), &p)[0] - 150.0).abs() < 1e-12);
        s.last_cooling = Some(vec![400.0]);
        assert!((delivered_cooling(&s, &on(1), &p)[0] - 350.0).abs() < 1e-12);
    }

    #[test]
    fn cop_examples() {
        let p = PlantParams::reference(2);
        assert_eq!(cop(0.0, &p), 1.0);
        assert!((cop(250.0, &p) - 6.0825).abs() < 1e-12);
        assert!((cop(500.0, &p) - 2.0).abs() < 1e-12);
        assert_eq!(cop(600.0, &p), model::COP_FLOOR);
    }

    #[test]
    fn power_examples() {
        let p = PlantParams::reference(1);
        // T_r - T_s chosen so that Q = 250 kW at mdot = 10.
        let lift = 250.0 / (p.eta_r * p.c_p * 10.0);
        let s = PlantState::uniform(&p, 10.0 + lift, 10.0, 0.0);
        let b = power(&s, &on(1), &p);
        assert!((b.q[0] - 250.0).abs() < 1e-9);
        assert!((b.p_chiller[0] - (250.0 / 6.0825 + 10.0)).abs() < 1e-9);
        assert!((b.p_chiller[0] - 51.10).abs() < 5e-3);
        assert!((b.p_pump[0] - 0.962).abs() < 1e-12);

        let mut off = on(1);
        off.delta[0] = false;
        let b = power(&s, &off, &p);
        assert_eq!((b.p_chiller[0], b.p_pump[0]), (0.0, 0.0));
    }

    #[test]
    fn derivative_examples() {
        let p = PlantParams::reference(1);
        let s = PlantState::uniform(&p, 20.0, 10.0, 0.0);
        let (dtr, _) = derivatives(&s, &on(1), 300.0, &p);
        assert!((dtr - (300.0 - 313.8) / 29288.0).abs() < 1e-12);
        assert!((dtr + 4.712e-4).abs() < 1e-6);

        let s = PlantState::uniform(&p, 20.0, 12.0, 0.0);
        let mut u = on(1);
        u.t_e[0] = 8.0;
        let (_, dts) = derivatives(&s, &u, 0.0, &p);
        assert!((dts[0] + 8.0e-3).abs() < 1e-12);

        u.delta[0] = false;
        let (_, dts) = derivatives(&s, &u, 0.0, &p);
        assert_eq!(dts[0], 0.0);
    }

    #[test]
    fn step_with_all_chillers_off_is_linear_in_time() {
        let p = PlantParams::reference(2);
        let s = PlantState::uniform(&p, 20.0, 10.0, 300.0);
        let u = ControlInput {
            delta: vec![false; 2],
            t_e: vec![10.0; 2],
            mdot: vec![10.0; 2],
        };
        let (next, b) = step(&s, &u, &p, 300.0).unwrap();
        assert!((next.t_r - 20.0 - 1.84376).abs() < 1e-5);
        assert!((next.t_r - 20.0 - 300.0 * 180.0 / 29288.0).abs() < 1e-12);
        assert_eq!(next.t_s, vec![10.0, 10.0]);
        assert_eq!(b.total(), 0.0);
    }

    #[test]
    fn zero_load_zero_cooling_is_stationary() {
        let p = PlantParams::reference(2);
        let s = PlantState::uniform(&p, 20.0, 10.0, 0.0);
        let mut u = on(2);
        u.delta = vec![false, false];
        let (next, _) = step(&s, &u, &p, 0.0).unwrap();
        assert_eq!(next.t_r, s.t_r);
        assert_eq!(next.t_s, s.t_s);
        assert_eq!(next.load_history, s.load_history);
    }

    #[test]
    fn step_shifts_history() {
        let p = PlantParams::reference(2);
        let s = PlantState::new(&p, 20.0, vec![10.0, 10.0], vec![6.0, 5.0, 4.0, 3.0, 2.0, 1.0]).unwrap();
        let (next, _) = step(&s, &on(2), &p, 7.0).unwrap();
        assert_eq!(next.load_history, vec![7.0, 6.0, 5.0, 4.0, 3.0, 2.0]);
    }

    #[test]
    fn non_finite_state_is_a_fault() {
        let p = PlantParams::reference(1);
        let s = PlantState::uniform(&p, 20.0, 10.0, 300.0);
        let mut u = on(1);
        u.mdot[0] = f64::NAN;
        assert!(matches!(step(&s, &u, &p, 300.0), Err(Error::SimulationFault { .. })));
    }

    #[test]
    fn rk4_converges_at_fourth_order() {
        let p = PlantParams::reference(3);
        let s = PlantState::new(&p, 35.0, vec![8.5, 11.0, 9.0], vec![900.0; 6]).unwrap();
        let u = ControlInput {
            delta: vec![true, true, false],
            t_e: vec![8.0, 12.0, 9.0],
            mdot: vec![20.0, 14.0, 7.0],
        };
        let horizon = 1800.0;
        let (reference, _) = integrate(&s, &u, &p, horizon, 4096);
        let err = |n| (integrate(&s, &u, &p, horizon, n).0 - reference).abs();
        let (e1, e2, e3) = (err(16), err(32), err(64));
        for ratio in [e1 / e2, e2 / e3] {
            assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn params_validate_and_roundtrip_toml() {
        let p = PlantParams::reference(3).with_ramp_limit(40.0);
        p.validate().unwrap();
        let text = p.to_toml_string();
        assert!(text.contains("Q_max = 500.0"));
        assert_eq!(PlantParams::from_toml_str(&text).unwrap(), p);

        let partial = PlantParams::from_toml_str("M = 3\nQ_max = 1000.0\n").unwrap();
        assert_eq!(partial.num_chillers, 3);
        assert_eq!(partial.c_p, 4.184);

        assert!(PlantParams::from_toml_str("fir_coeffs = [0.5, 0.4]").is_err());
        assert!(PlantParams::from_toml_str("eta_s = 1.2").is_err());
        assert!(PlantParams::from_toml_str("mdot_min = 30.0").is_err());
        assert!(PlantParams::from_toml_str("bogus = 1").is_err());
        assert_ne!(p.fingerprint(), PlantParams::reference(3).fingerprint());
    }

    fn arb_case() -> impl Strategy<Value = (PlantState, ControlInput)> {
        (
            8.0..40.0f64,
            prop::collection::vec(8.0..12.0f64, 3),
            prop::collection::vec(any::<bool>(), 3),
            prop::collection::vec(8.0..12.0f64, 3),
            prop::collection::vec(5.0..20.0f64, 3),
            prop::collection::vec(0.0..1500.0f64, 6),
        )
            .prop_map(|(t_r, t_s, delta, t_e, mdot, hist)| {
                (
                    PlantState {
                        t_r,
                        t_s,
                        load_history: hist,
                        last_cooling: None,
                    },
                    ControlInput { delta, t_e, mdot },
                )
            })
    }

    proptest! {
        #[test]
        fn power_breakdown_invariants((s, u) in arb_case()) {
            let p = PlantParams::reference(3);
            let b = power(&s, &u, &p);
            for i in 0..3 {
                let d = if u.delta[i] { 1.0 } else { 0.0 };
                prop_assert!(b.p_chiller[i] >= p.rho * d);
                if !u.delta[i] {
                    prop_assert_eq!(b.q[i], 0.0);
                    prop_assert_eq!(b.p_pump[i], 0.0);
                    prop_assert_eq!(b.p_chiller[i], 0.0);
                }
            }
        }

        #[test]
        fn stopped_chiller_is_neutral((s, u) in arb_case(), which in 0usize..3) {
            let p = PlantParams::reference(3);
            let mut u = u;
            u.delta[which] = false;
            let (next, b) = step(&s, &u, &p, 100.0).unwrap();
            prop_assert_eq!(next.t_s[which], s.t_s[which]);
            prop_assert_eq!(b.q[which], 0.0);
            prop_assert_eq!(b.p_chiller[which] + b.p_pump[which], 0.0);
        }
    }
}
