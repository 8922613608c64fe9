//! Plant equations written once over [`Arith`], shared by the numeric
//! simulator and the differentiable rollouts.

use super::PlantParams;
use crate::diffengine::Arith;

/// Lower bound applied to the quadratic COP curve. The parabola crosses
/// zero slightly above full load, and the simulator has to stay finite when
/// a controller overshoots the rated capacity.
pub const COP_FLOOR: f64 = 0.1;

/// Per-chiller control values (`delta` as 0/1 reals).
#[derive(Clone, Debug)]
pub struct ChillerInputs<V> {
    pub delta: Vec<V>,
    pub t_e: Vec<V>,
    pub mdot: Vec<V>,
}

/// Return and supply temperatures.
#[derive(Clone, Debug)]
pub struct Thermal<V> {
    pub t_r: V,
    pub t_s: Vec<V>,
}

#[derive(Clone, Debug)]
pub struct PowerTerms<V> {
    pub cop: Vec<V>,
    pub chiller: Vec<V>,
    pub pump: Vec<V>,
}

/// Delivered cooling `η_r c_p ṁ δ (T_r − T_s)` per chiller, never negative.
/// With a ramp limit the running value is clamped to `prev ± limit` before
/// gating by `δ`, so a stopped chiller always delivers zero.
pub fn cooling<A: Arith>(
    a: &mut A,
    p: &PlantParams,
    x: &Thermal<A::V>,
    u: &ChillerInputs<A::V>,
    prev: Option<&[A::V]>,
) -> Vec<A::V> {
    (0..p.num_chillers)
        .map(|i| {
            let lift = a.sub(&x.t_r, &x.t_s[i]);
            let raw = a.mul(&u.mdot[i], &lift);
            let raw = a.scale(&raw, p.eta_r * p.c_p);
            let mut raw = a.floor(&raw, 0.0);
            if let (Some(prev), Some(limit)) = (prev, p.ramp_limit) {
                let lo = a.offset(&prev[i], -limit);
                let hi = a.offset(&prev[i], limit);
                raw = a.clamp_between(&raw, &lo, &hi);
            }
            a.mul(&raw, &u.delta[i])
        })
        .collect()
}

/// Part-load COP curve `a0 + a1 r + a2 r²`, `r = Q / Q_max`, floored at
/// [`COP_FLOOR`].
pub fn cop<A: Arith>(a: &mut A, p: &PlantParams, q: &A::V) -> A::V {
    let r = a.scale(q, 1.0 / p.q_max);
    let r2 = a.square(&r);
    let lin = a.scale(&r, p.a1);
    let quad = a.scale(&r2, p.a2);
    let c = a.add(&lin, &quad);
    let c = a.offset(&c, p.a0);
    a.floor(&c, COP_FLOOR)
}

pub fn power<A: Arith>(a: &mut A, p: &PlantParams, q: &[A::V], u: &ChillerInputs<A::V>) -> PowerTerms<A::V> {
    let mut out = PowerTerms {
        cop: Vec::with_capacity(q.len()),
        chiller: Vec::with_capacity(q.len()),
        pump: Vec::with_capacity(q.len()),
    };
    for (i, qi) in q.iter().enumerate() {
        let c = cop(a, p, qi);
        let compressor = a.div(qi, &c);
        let base = a.scale(&u.delta[i], p.rho);
        let chiller = a.add(&compressor, &base);
        let flow = a.mul(&u.mdot[i], &u.delta[i]);
        let flow3 = a.cube(&flow);
        let pump = a.scale(&flow3, p.gamma);
        out.cop.push(c);
        out.chiller.push(chiller);
        out.pump.push(pump);
    }
    out
}

/// Time derivatives of the return and supply temperatures.
pub fn derivatives<A: Arith>(
    a: &mut A,
    p: &PlantParams,
    x: &Thermal<A::V>,
    u: &ChillerInputs<A::V>,
    q_tilde: &A::V,
    prev: Option<&[A::V]>,
) -> Thermal<A::V> {
    let q = cooling(a, p, x, u, prev);
    let total = a.sum_all(&q);
    let imbalance = a.sub(q_tilde, &total);
    let t_r = a.scale(&imbalance, 1.0 / p.c_return);
    let k = -p.c_p * p.eta_s / p.c_loop;
    let t_s = (0..p.num_chillers)
        .map(|i| {
            let gap = a.sub(&x.t_s[i], &u.t_e[i]);
            let flow = a.mul(&u.delta[i], &u.mdot[i]);
            let rate = a.mul(&flow, &gap);
            a.scale(&rate, k)
        })
        .collect();
    Thermal { t_r, t_s }
}

fn axpy<A: Arith>(a: &mut A, x: &Thermal<A::V>, d: &Thermal<A::V>, h: f64) -> Thermal<A::V> {
    let dr = a.scale(&d.t_r, h);
    let t_r = a.add(&x.t_r, &dr);
    let t_s = x
        .t_s
        .iter()
        .zip(&d.t_s)
        .map(|(s, ds)| {
            let ds = a.scale(ds, h);
            a.add(s, &ds)
        })
        .collect();
    Thermal { t_r, t_s }
}

/// One classic Runge-Kutta step of length `h` with the filtered load and
/// the controls held constant across the step.
pub fn rk4<A: Arith>(
    a: &mut A,
    p: &PlantParams,
    x: &Thermal<A::V>,
    u: &ChillerInputs<A::V>,
    q_tilde: &A::V,
    prev: Option<&[A::V]>,
    h: f64,
) -> Thermal<A::V> {
    let k1 = derivatives(a, p, x, u, q_tilde, prev);
    let x2 = axpy(a, x, &k1, h / 2.0);
    let k2 = derivatives(a, p, &x2, u, q_tilde, prev);
    let x3 = axpy(a, x, &k2, h / 2.0);
    let k3 = derivatives(a, p, &x3, u, q_tilde, prev);
    let x4 = axpy(a, x, &k3, h);
    let k4 = derivatives(a, p, &x4, u, q_tilde, prev);

    // x + h/6 (k1 + 2 k2 + 2 k3 + k4)
    let combine = |a: &mut A, d1: &A::V, d2: &A::V, d3: &A::V, d4: &A::V| {
        let s = a.add(d2, d3);
        let s = a.scale(&s, 2.0);
        let s = a.add(&s, d1);
        a.add(&s, d4)
    };
    let dr = combine(a, &k1.t_r, &k2.t_r, &k3.t_r, &k4.t_r);
    let dr = a.scale(&dr, h / 6.0);
    let t_r = a.add(&x.t_r, &dr);
    let t_s = (0..p.num_chillers)
        .map(|i| {
            let d = combine(a, &k1.t_s[i], &k2.t_s[i], &k3.t_s[i], &k4.t_s[i]);
            let d = a.scale(&d, h / 6.0);
            a.add(&x.t_s[i], &d)
        })
        .collect();
    Thermal { t_r, t_s }
}
