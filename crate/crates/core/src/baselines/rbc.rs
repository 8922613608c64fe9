//! Threshold staging controller with fixed flows and setpoints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{self, ControlInput, PlantParams, PlantState};
use crate::policy::HARDWIRED_CHILLER;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RbcConfig {
    /// Stage down below this part-load ratio.
    pub t_lo: f64,
    /// Stage up above this part-load ratio.
    pub t_hi: f64,
    pub mdot: f64,
    pub t_e: f64,
}

impl Default for RbcConfig {
    fn default() -> Self {
        Self {
            t_lo: 0.15,
            t_hi: 0.6,
            mdot: 10.0,
            t_e: 10.0,
        }
    }
}

impl RbcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.t_lo && self.t_lo < self.t_hi && self.t_hi < 1.0) {
            return Err(Error::Config(format!(
                "staging thresholds must satisfy 0 < t_lo < t_hi < 1, got {} and {}",
                self.t_lo, self.t_hi
            )));
        }
        Ok(())
    }
}

/// Running chiller count.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RbcState {
    pub active: usize,
    /// Decisions applied in the previous step, paired with the plant's
    /// measured cooling when computing the next part-load ratio.
    pub last_delta: Option<Vec<bool>>,
}

impl Default for RbcState {
    fn default() -> Self {
        Self {
            active: 1,
            last_delta: None,
        }
    }
}

/// Delivered cooling over the rated capacity of the running chillers.
pub fn plr(q: &[f64], delta: &[bool], p: &PlantParams) -> Result<f64> {
    let running = delta.iter().filter(|d| **d).count();
    if running == 0 {
        return Err(Error::Usage("part-load ratio undefined with every chiller off".into()));
    }
    let total: f64 = q.iter().zip(delta).filter(|(_, d)| **d).map(|(q, _)| q).sum();
    Ok(total / (p.q_max * running as f64))
}

/// Order in which chillers are switched on: the always-on unit first, then
/// the rest by index.
pub fn staging_order(m: usize) -> Vec<usize> {
    std::iter::once(HARDWIRED_CHILLER)
        .chain((0..m).filter(|i| *i != HARDWIRED_CHILLER))
        .collect()
}

/// On/off pattern with the first `active` chillers of [`staging_order`]
/// running.
pub fn staged_delta(active: usize, m: usize) -> Vec<bool> {
    let mut d = vec![false; m];
    for i in staging_order(m).into_iter().take(active) {
        d[i] = true;
    }
    d
}

/// One hysteresis update of the running count.
pub fn stage(active: usize, plr: f64, cfg: &RbcConfig, m: usize) -> usize {
    if plr > cfg.t_hi {
        (active + 1).min(m)
    } else if plr < cfg.t_lo {
        active.saturating_sub(1).max(1)
    } else {
        active
    }
}

/// Stages on the measured cooling of the previous step (or, before the
/// first step, on the cooling the current stage would deliver at the
/// present temperatures) and returns fixed-setpoint controls.
pub fn rbc_step(rs: &mut RbcState, state: &PlantState, cfg: &RbcConfig, p: &PlantParams) -> Result<ControlInput> {
    let m = p.num_chillers;
    let ratio = match (&state.last_cooling, &rs.last_delta) {
        (Some(q), Some(d)) => plr(q, d, p)?,
        _ => {
            let u = fixed_controls(staged_delta(rs.active, m), cfg);
            plr(&plant::delivered_cooling(state, &u, p), &u.delta, p)?
        }
    };
    rs.active = stage(rs.active, ratio, cfg, m);
    let u = fixed_controls(staged_delta(rs.active, m), cfg);
    rs.last_delta = Some(u.delta.clone());
    Ok(u)
}

fn fixed_controls(delta: Vec<bool>, cfg: &RbcConfig) -> ControlInput {
    let m = delta.len();
    ControlInput {
        delta,
        t_e: vec![cfg.t_e; m],
        mdot: vec![cfg.mdot; m],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plr_examples() {
        let p = PlantParams::reference(2);
        assert_eq!(plr(&[250.0, 0.0], &[true, false], &p).unwrap(), 0.5);
        assert_eq!(plr(&[0.0, 0.0], &[true, true], &p).unwrap(), 0.0);
        assert_eq!(plr(&[500.0, 500.0], &[true, true], &p).unwrap(), 1.0);
        assert!(plr(&[1.0, 1.0], &[false, false], &p).is_err());
    }

    #[test]
    fn staging_examples() {
        let c = RbcConfig::default();
        assert_eq!(stage(1, 0.65, &c, 2), 2);
        assert_eq!(staged_delta(2, 2), vec![true, true]);
        assert_eq!(stage(2, 0.10, &c, 2), 1);
        assert_eq!(stage(1, 0.10, &c, 2), 1);
        assert_eq!(stage(2, 0.65, &c, 2), 2);
        // thresholds are strict
        assert_eq!(stage(1, 0.6, &c, 2), 1);
        assert_eq!(stage(2, 0.15, &c, 2), 2);
    }

    #[test]
    fn hardwired_chiller_is_staged_first() {
        assert_eq!(staging_order(3), vec![1, 0, 2]);
        assert_eq!(staged_delta(1, 2), vec![false, true]);
        assert_eq!(staged_delta(2, 3), vec![true, true, false]);
    }

    #[test]
    fn first_step_uses_initial_temperatures() {
        let p = PlantParams::reference(2);
        let c = RbcConfig::default();
        // one chiller, 10 K lift at 10 kg/s: 313.8 kW, ratio 0.63
        let s = PlantState::uniform(&p, 20.0, 10.0, 300.0);
        let mut rs = RbcState::default();
        let u = rbc_step(&mut rs, &s, &c, &p).unwrap();
        assert_eq!(u.delta, vec![true, true]);
        assert_eq!(u.mdot, vec![10.0, 10.0]);
        // measured cooling of 2 x 40 kW over two units: 0.08, stage down
        let s = PlantState {
            last_cooling: Some(vec![40.0, 40.0]),
            ..s
        };
        let u = rbc_step(&mut rs, &s, &c, &p).unwrap();
        assert_eq!(u.delta, vec![false, true]);
    }

    #[test]
    fn thresholds_are_validated() {
        assert!(RbcConfig::default().validate().is_ok());
        assert!(RbcConfig {
            t_lo: 0.7,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    proptest! {
        #[test]
        fn count_stays_in_range(plrs in prop::collection::vec(0.0f64..1.2, 1..60), m in 2usize..5) {
            let c = RbcConfig::default();
            let mut s = 1;
            for r in plrs {
                s = stage(s, r, &c, m);
                prop_assert!((1..=m).contains(&s));
            }
        }

        #[test]
        fn hysteresis_band_holds_the_count(plrs in prop::collection::vec(0.15f64..=0.6, 1..60), s0 in 1usize..4) {
            let c = RbcConfig::default();
            let mut s = s0;
            for r in plrs {
                s = stage(s, r, &c, 3);
                prop_assert_eq!(s, s0);
            }
        }
    }
}
