//! Synthetic server-load profiles and sampled rollout contexts.
//!
//! A day alternates a night plateau and a day plateau, each with its own
//! uniformly drawn amplitude, joined by 4 h raised-cosine transitions:
//!
//! ```text
//!  00:00-06:00 night   06:00-10:00 rise   10:00-18:00 day
//!  18:00-22:00 fall    22:00-24:00 next night
//! ```
//!
//! Gaussian noise with a standard deviation of 2% of the current level is
//! added on top, and every sample is clamped to `[0, Σ Q_max]`.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{PlantParams, PlantState};

pub const NIGHT_LOAD_KW: (f64, f64) = (100.0, 350.0);
pub const DAY_LOAD_MIN_KW: f64 = 300.0;
/// Upper day amplitude as a fraction of the installed capacity.
pub const DAY_LOAD_CAPACITY_FRACTION: f64 = 0.75;
pub const NOISE_FRACTION: f64 = 0.02;
const TRANSITION_HOURS: f64 = 4.0;
const RISE_START_H: f64 = 6.0;
const FALL_START_H: f64 = 18.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadProfile {
    /// Raw server load, kW, one sample per `dt`.
    pub samples: Vec<f64>,
    pub dt: f64,
    pub days: usize,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct ProfileRow {
    timestamp_s: f64,
    q_load_kw: f64,
}

pub fn steps_per_day(dt: f64) -> usize {
    (86_400.0 / dt).round() as usize
}

fn raised_cosine(from: f64, to: f64, s: f64) -> f64 {
    from + (to - from) * 0.5 * (1.0 - (PI * s).cos())
}

impl LoadProfile {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample `k`, holding the last value past the end.
    pub fn at(&self, k: usize) -> f64 {
        self.samples[k.min(self.samples.len() - 1)]
    }

    /// `n` samples starting at `k`, padded with the last sample.
    pub fn window(&self, k: usize, n: usize) -> Vec<f64> {
        (k..k + n).map(|j| self.at(j)).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for (k, q) in self.samples.iter().enumerate() {
            w.serialize(ProfileRow {
                timestamp_s: k as f64 * self.dt,
                q_load_kw: *q,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a `timestamp_s,q_load_kw` file. The sampling period is taken
    /// from the first two timestamps.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let rows: Vec<ProfileRow> = r.deserialize().collect::<std::result::Result<_, _>>()?;
        if rows.len() < 2 {
            return Err(Error::Config(format!("{}: need at least two samples", path.display())));
        }
        let dt = rows[1].timestamp_s - rows[0].timestamp_s;
        if !(dt > 0.0) {
            return Err(Error::Config(format!("{}: timestamps must increase", path.display())));
        }
        if rows.iter().any(|r| !(r.q_load_kw >= 0.0)) {
            return Err(Error::Config(format!("{}: loads must be nonnegative", path.display())));
        }
        let samples: Vec<f64> = rows.iter().map(|r| r.q_load_kw).collect();
        Ok(Self {
            days: samples.len() / steps_per_day(dt),
            samples,
            dt,
            seed: 0,
        })
    }
}

/// `days` full days of load, plus `tail` extra samples continuing the
/// pattern (used as the preview horizon at the end of a run).
pub fn generate_profile_with_tail(days: usize, tail: usize, plant: &PlantParams, seed: u64) -> Result<LoadProfile> {
    if days == 0 {
        return Err(Error::Config("profile needs at least one day".into()));
    }
    let cap = plant.total_capacity();
    let day_hi = DAY_LOAD_CAPACITY_FRACTION * cap;
    if day_hi <= DAY_LOAD_MIN_KW || cap < NIGHT_LOAD_KW.1 {
        return Err(Error::Config(format!(
            "installed capacity {cap} kW too small for the load generator"
        )));
    }
    let spd = steps_per_day(plant.dt);
    let n = days * spd + tail;
    let level_days = n.div_ceil(spd);

    // Levels and noise come from separate streams, drawn in time order, so a
    // longer tail leaves the earlier samples unchanged.
    let mut rng = split_rng(seed, LEVEL_STREAM);
    let mut nights = Vec::with_capacity(level_days + 1);
    let mut peaks = Vec::with_capacity(level_days);
    nights.push(rng.random_range(NIGHT_LOAD_KW.0..NIGHT_LOAD_KW.1));
    for _ in 0..level_days {
        peaks.push(rng.random_range(DAY_LOAD_MIN_KW..day_hi));
        nights.push(rng.random_range(NIGHT_LOAD_KW.0..NIGHT_LOAD_KW.1));
    }
    let mut rng = split_rng(seed, NOISE_STREAM);

    let samples = (0..n)
        .map(|k| {
            let t = k as f64 * plant.dt;
            let d = (t / 86_400.0).floor() as usize;
            let h = (t - d as f64 * 86_400.0) / 3600.0;
            let level = if h < RISE_START_H {
                nights[d]
            } else if h < RISE_START_H + TRANSITION_HOURS {
                raised_cosine(nights[d], peaks[d], (h - RISE_START_H) / TRANSITION_HOURS)
            } else if h < FALL_START_H {
                peaks[d]
            } else if h < FALL_START_H + TRANSITION_HOURS {
                raised_cosine(peaks[d], nights[d + 1], (h - FALL_START_H) / TRANSITION_HOURS)
            } else {
                nights[d + 1]
            };
            let z: f64 = StandardNormal.sample(&mut rng);
            (level * (1.0 + NOISE_FRACTION * z)).clamp(0.0, cap)
        })
        .collect();

    Ok(LoadProfile {
        samples,
        dt: plant.dt,
        days,
        seed,
    })
}

pub fn generate_profile(days: usize, plant: &PlantParams, seed: u64) -> Result<LoadProfile> {
    generate_profile_with_tail(days, 0, plant, seed)
}

/// Initial condition and exogenous load seen by one training rollout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledContext {
    pub t_r0: f64,
    pub t_s0: Vec<f64>,
    /// `L + 1` raw load samples, newest first; `load_history0[0]` is the
    /// load at the first rollout step.
    pub load_history0: Vec<f64>,
    /// Raw load from the first rollout step onward, `2N` samples, so every
    /// step of an `N`-step rollout sees a full `N`-sample window.
    pub preview: Vec<f64>,
    /// Previous-step cooling per chiller, only for ramp-limited plants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_cooling0: Option<Vec<f64>>,
}

impl SampledContext {
    pub fn initial_state(&self) -> PlantState {
        PlantState {
            t_r: self.t_r0,
            t_s: self.t_s0.clone(),
            load_history: self.load_history0.clone(),
            last_cooling: self.last_cooling0.clone(),
        }
    }
}

pub fn preview_len(horizon: usize) -> usize {
    2 * horizon
}

pub fn sample_context<R: Rng + ?Sized>(plant: &PlantParams, horizon: usize, rng: &mut R) -> Result<SampledContext> {
    if horizon == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    let t_r0 = rng.random_range(plant.t_r_min..plant.t_r_max);
    let t_s0 = (0..plant.num_chillers)
        .map(|_| rng.random_range(plant.t_s_min..plant.t_s_max))
        .collect();
    let hist = plant.history_len();
    let ahead = preview_len(horizon);
    let spd = steps_per_day(plant.dt);
    let days = 2 + (hist + ahead) / spd;
    let profile = generate_profile(days, plant, rng.random())?;
    let offset = rng.random_range(hist - 1..=profile.len() - ahead);
    let load_history0 = (0..hist).map(|l| profile.samples[offset - l]).collect();
    let preview = profile.samples[offset..offset + ahead].to_vec();
    let last_cooling0 = plant.ramp_limit.map(|_| {
        (0..plant.num_chillers)
            .map(|_| rng.random_range(0.0..plant.q_max))
            .collect()
    });
    Ok(SampledContext {
        t_r0,
        t_s0,
        load_history0,
        preview,
        last_cooling0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub horizon: usize,
    pub n_train: usize,
    pub n_dev: usize,
    pub plant_hash: String,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: Vec<SampledContext>,
    pub dev: Vec<SampledContext>,
    pub manifest: DatasetManifest,
}

const TRAIN_STREAM: u64 = 0;
const DEV_STREAM: u64 = 1;
const LEVEL_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;

fn split_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Training and development contexts from disjoint random streams of one
/// seed.
pub fn build_dataset(plant: &PlantParams, horizon: usize, n_train: usize, n_dev: usize, seed: u64) -> Result<Dataset> {
    if n_train == 0 || n_dev == 0 {
        return Err(Error::Config("dataset sizes must be at least 1".into()));
    }
    let draw = |stream, n| -> Result<Vec<SampledContext>> {
        let mut rng = split_rng(seed, stream);
        (0..n).map(|_| sample_context(plant, horizon, &mut rng)).collect()
    };
    Ok(Dataset {
        train: draw(TRAIN_STREAM, n_train)?,
        dev: draw(DEV_STREAM, n_dev)?,
        manifest: DatasetManifest {
            seed,
            horizon,
            n_train,
            n_dev,
            plant_hash: plant.fingerprint(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_is_bounded_and_deterministic() {
        let p = PlantParams::reference(2);
        let a = generate_profile(7, &p, 11).unwrap();
        let b = generate_profile(7, &p, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3360);
        assert!(a.samples.iter().all(|q| (0.0..=1000.0).contains(q)));
        assert_ne!(a, generate_profile(7, &p, 12).unwrap());
    }

    #[test]
    fn tail_extends_without_changing_the_days() {
        let p = PlantParams::reference(2);
        let a = generate_profile(2, &p, 5).unwrap();
        for tail in [1, 15, 500] {
            let b = generate_profile_with_tail(2, tail, &p, 5).unwrap();
            assert_eq!(b.len(), a.len() + tail);
            assert_eq!(&b.samples[..a.len()], &a.samples[..]);
        }
    }

    #[test]
    fn day_plateau_respects_capacity_fraction() {
        let p = PlantParams::reference(2);
        for seed in 0..20 {
            let prof = generate_profile(3, &p, seed).unwrap();
            let spd = steps_per_day(p.dt);
            for d in 0..3 {
                // 14:00 is mid-plateau; allow 5 sigma of noise
                let q = prof.samples[d * spd + spd * 14 / 24];
                assert!(q <= 750.0 * (1.0 + 5.0 * NOISE_FRACTION));
                assert!(q >= 300.0 * (1.0 - 5.0 * NOISE_FRACTION));
            }
        }
    }

    #[test]
    fn tail_extends_the_pattern() {
        let p = PlantParams::reference(2);
        let a = generate_profile_with_tail(2, 10, &p, 5).unwrap();
        assert_eq!(a.len(), 2 * 480 + 10);
        assert_eq!(a.window(a.len() - 2, 4)[3], *a.samples.last().unwrap());
    }

    #[test]
    fn autocorrelation_peaks_at_one_day() {
        let p = PlantParams::reference(2);
        let prof = generate_profile(6, &p, 3).unwrap();
        let x = &prof.samples;
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let ac = |lag: usize| -> f64 {
            (0..x.len() - lag)
                .map(|i| (x[i] - mean) * (x[i + lag] - mean))
                .sum::<f64>()
                / (x.len() - lag) as f64
        };
        let spd = steps_per_day(p.dt);
        let best = (spd / 2..3 * spd / 2).max_by(|a, b| ac(*a).total_cmp(&ac(*b))).unwrap();
        assert!((best as i64 - spd as i64).abs() <= 40, "peak at lag {best}");
    }

    #[test]
    fn csv_roundtrip() {
        let p = PlantParams::reference(2);
        let prof = generate_profile(1, &p, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("load.csv");
        prof.write_csv(&path).unwrap();
        let back = LoadProfile::read_csv(&path).unwrap();
        assert_eq!(back.samples, prof.samples);
        assert_eq!(back.dt, 180.0);
        assert_eq!(back.days, 1);
    }

    #[test]
    fn contexts_cover_the_initial_ranges() {
        let p = PlantParams::reference(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (mut lo, mut hi) = (f64::MAX, f64::MIN);
        for _ in 0..10_000 {
            let t = rng.random_range(p.t_r_min..p.t_r_max);
            lo = lo.min(t);
            hi = hi.max(t);
        }
        assert!(lo >= 8.0 && hi <= 40.0 && (hi - lo) >= 0.9 * 32.0);

        let ctx = sample_context(&p, 5, &mut rng).unwrap();
        assert_eq!(ctx.preview.len(), 10);
        assert_eq!(ctx.load_history0.len(), 6);
        assert_eq!(ctx.load_history0[0], ctx.preview[0]);
        assert!(ctx.t_s0.iter().all(|t| (8.0..12.0).contains(t)));
        assert!(ctx.last_cooling0.is_none());

        let again = sample_context(&p, 5, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        assert_eq!(
            again,
            sample_context(&p, 5, &mut ChaCha8Rng::seed_from_u64(77)).unwrap()
        );
    }

    #[test]
    fn dataset_splits_are_disjoint_and_reproducible() {
        let p = PlantParams::reference(2);
        let d = build_dataset(&p, 5, 40, 20, 3).unwrap();
        assert_eq!((d.train.len(), d.dev.len()), (40, 20));
        for c in &d.dev {
            assert!(!d.train.contains(c));
        }
        assert_eq!(d.train, build_dataset(&p, 5, 40, 20, 3).unwrap().train);
        let one = build_dataset(&p, 5, 1, 1, 3).unwrap();
        one.train[0].initial_state().validate(&p).unwrap();
        assert!(build_dataset(&p, 5, 0, 1, 3).is_err());
    }

    #[test]
    fn ramp_limited_plants_carry_previous_cooling() {
        let p = PlantParams::reference(3).with_q_max(1000.0).with_ramp_limit(50.0);
        let ctx = sample_context(&p, 4, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(ctx.last_cooling0.as_ref().map(Vec::len), Some(3));
    }
}
