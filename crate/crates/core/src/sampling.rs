//! Observation-time schemes: generation, validation, and the theoretical
//! waiting-time laws of independent Poisson sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Process, Result};
use crate::sync::build_sync_grid;

/// How observation times are produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SchemeKind {
    /// Two independent homogeneous Poisson processes with mean waiting
    /// times `theta1 / n` and `theta2 / n`.
    PoissonPair { theta1: f64, theta2: f64 },
    /// Both processes observed at `i T / n`.
    EquidistantSync,
    /// X at `i T / n`, Y at `0` and `(j + 1/2) T / n`.
    Intermeshed,
    /// User supplied times.
    Explicit { times_x: Vec<f64>, times_y: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    #[serde(flatten)]
    pub kind: SchemeKind,
    /// Length of the observation window `[0, T]`.
    pub horizon: f64,
    /// Intensity scale `n`.
    pub intensity: u64,
}

impl SchemeSpec {
    pub fn poisson(theta1: f64, theta2: f64, n: u64, horizon: f64) -> Self {
        Self {
            kind: SchemeKind::PoissonPair { theta1, theta2 },
            horizon,
            intensity: n,
        }
    }

    pub fn equidistant(n: u64, horizon: f64) -> Self {
        Self {
            kind: SchemeKind::EquidistantSync,
            horizon,
            intensity: n,
        }
    }

    pub fn intermeshed(n: u64, horizon: f64) -> Self {
        Self {
            kind: SchemeKind::Intermeshed,
            horizon,
            intensity: n,
        }
    }

    pub fn explicit(times_x: Vec<f64>, times_y: Vec<f64>, horizon: f64) -> Self {
        Self {
            kind: SchemeKind::Explicit { times_x, times_y },
            horizon,
            intensity: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidParameter {
                name: "horizon",
                reason: format!("must be positive and finite, got {}", self.horizon),
            });
        }
        if self.intensity == 0 {
            return Err(Error::InvalidParameter {
                name: "intensity",
                reason: "must be at least 1".into(),
            });
        }
        match &self.kind {
            SchemeKind::PoissonPair { theta1, theta2 } => {
                check_theta("theta1", *theta1)?;
                check_theta("theta2", *theta2)?;
            }
            SchemeKind::Explicit { times_x, times_y } => {
                validate_times(Process::X, times_x, self.horizon)?;
                validate_times(Process::Y, times_y, self.horizon)?;
            }
            SchemeKind::EquidistantSync | SchemeKind::Intermeshed => {}
        }
        Ok(())
    }
}

fn check_theta(name: &'static str, theta: f64) -> Result<()> {
    if theta.is_finite() && theta > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be in (0, inf), got {theta}"),
        })
    }
}

/// Observation times of both processes on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemePair {
    pub times_x: Vec<f64>,
    pub times_y: Vec<f64>,
    pub horizon: f64,
}

impl SchemePair {
    /// Validates and wraps two time lists.
    pub fn new(times_x: Vec<f64>, times_y: Vec<f64>, horizon: f64) -> Result<Self> {
        let pair = Self {
            times_x,
            times_y,
            horizon,
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidParameter {
                name: "horizon",
                reason: format!("must be positive and finite, got {}", self.horizon),
            });
        }
        validate_times(Process::X, &self.times_x, self.horizon)?;
        validate_times(Process::Y, &self.times_y, self.horizon)
    }

    pub fn times(&self, process: Process) -> &[f64] {
        match process {
            Process::X => &self.times_x,
            Process::Y => &self.times_y,
        }
    }
}

/// Checks strict monotonicity, finiteness and range of one process's times.
pub fn validate_times(process: Process, times: &[f64], horizon: f64) -> Result<()> {
    for (index, &t) in times.iter().enumerate() {
        if !t.is_finite() {
            return Err(Error::NonFinite { process, index });
        }
        if !(0.0..=horizon).contains(&t) {
            return Err(Error::OutOfRange {
                process,
                index,
                time: t,
                horizon,
            });
        }
        if index > 0 && times[index - 1] >= t {
            return Err(Error::Unsorted {
                process,
                index,
                prev: times[index - 1],
                next: t,
            });
        }
    }
    Ok(())
}

/// Produces an observation scheme. Deterministic in `(spec, seed)`.
pub fn generate(spec: &SchemeSpec, seed: u64) -> Result<SchemePair> {
    spec.validate()?;
    let horizon = spec.horizon;
    let n = spec.intensity;
    let (times_x, times_y) = match &spec.kind {
        SchemeKind::PoissonPair { theta1, theta2 } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = poisson_arrivals(&mut rng, theta1 / n as f64, horizon);
            let y = poisson_arrivals(&mut rng, theta2 / n as f64, horizon);
            (x, y)
        }
        SchemeKind::EquidistantSync => {
            let grid = equidistant(n, horizon);
            (grid.clone(), grid)
        }
        SchemeKind::Intermeshed => {
            let x = equidistant(n, horizon);
            let step = horizon / n as f64;
            let y = std::iter::once(0.0)
                .chain((0..n).map(|j| (j as f64 + 0.5) * step))
                .collect();
            (x, y)
        }
        SchemeKind::Explicit { times_x, times_y } => (times_x.clone(), times_y.clone()),
    };
    for (process, times) in [(Process::X, &times_x), (Process::Y, &times_y)] {
        if times.len() < 2 {
            return Err(Error::TooFewObservations {
                process,
                count: times.len(),
                required: 2,
            });
        }
    }
    Ok(SchemePair {
        times_x,
        times_y,
        horizon,
    })
}

fn equidistant(n: u64, horizon: f64) -> Vec<f64> {
    let step = horizon / n as f64;
    (0..=n)
        .map(|i| if i == n { horizon } else { i as f64 * step })
        .collect()
}

/// Arrival times on `[0, horizon]`; the first arrival is itself an
/// exponential waiting time from 0.
fn poisson_arrivals(rng: &mut ChaCha8Rng, mean_wait: f64, horizon: f64) -> Vec<f64> {
    let exp = Exp::new(1.0 / mean_wait).expect("positive rate");
    let mut times = Vec::with_capacity((horizon / mean_wait * 1.1) as usize + 8);
    let mut t = 0.0;
    loop {
        t += exp.sample(rng);
        if t > horizon {
            break;
        }
        // Identical consecutive draws are impossible in exact arithmetic;
        // drop the rare floating-point collision to keep strict order.
        if times.last().is_some_and(|&last| last >= t) {
            continue;
        }
        times.push(t);
    }
    times
}

/// CDF of a refresh waiting time, the maximum of two independent
/// exponential waiting times with means `theta1 / n` and `theta2 / n`.
pub fn refresh_waiting_cdf(theta1: f64, theta2: f64, n: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    // 1 - a - b + ab factored as (1 - a)(1 - b), without the cancellation.
    let first = -(-t * n / theta1).exp_m1();
    let second = -(-t * n / theta2).exp_m1();
    first * second
}

/// Expected refresh interval and interpolation offsets under independent
/// Poisson sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeMoments {
    /// `E[T_{i+1} - T_i]`
    pub e_dt: f64,
    /// `E[g_i - T_i]`
    pub e_next_x: f64,
    /// `E[gamma_i - T_i]`
    pub e_next_y: f64,
    /// `E[T_i - l_{i+1}]`
    pub e_prev_x: f64,
    /// `E[T_i - lambda_{i+1}]`
    pub e_prev_y: f64,
}

pub fn expected_scheme_stats(theta1: f64, theta2: f64, n: f64) -> SchemeMoments {
    let s = theta1 + theta2;
    SchemeMoments {
        e_dt: (s - theta1 * theta2 / s) / n,
        e_next_x: theta1 / n * theta2 / s,
        e_next_y: theta2 / n * theta1 / s,
        // backward recurrence of X seen from a Y tick: X density, Y survival
        e_prev_x: theta1 * theta2 * theta2 / (s * s) / n,
        e_prev_y: theta1 * theta1 * theta2 / (s * s) / n,
    }
}

/// Maximal gaps of each scheme (edge gaps included) and of the refresh grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRegularity {
    pub delta_x: f64,
    pub delta_y: f64,
    pub delta_sync: f64,
}

pub fn grid_regularity(pair: &SchemePair) -> Result<GridRegularity> {
    let delta = |process: Process| -> Result<f64> {
        let times = pair.times(process);
        if times.len() < 2 {
            return Err(Error::TooFewObservations {
                process,
                count: times.len(),
                required: 2,
            });
        }
        let inner = times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        let edges = times[0].max(pair.horizon - times[times.len() - 1]);
        Ok(inner.max(edges))
    };
    let delta_x = delta(Process::X)?;
    let delta_y = delta(Process::Y)?;
    let grid = build_sync_grid(pair)?;
    let delta_sync = grid
        .refresh_times()
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max);
    Ok(GridRegularity {
        delta_x,
        delta_y,
        delta_sync,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equidistant_sync_scheme() {
        let pair = generate(&SchemeSpec::equidistant(4, 1.0), 0).unwrap();
        assert_eq!(pair.times_x, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(pair.times_y, pair.times_x);
    }

    #[test]
    fn intermeshed_scheme() {
        let pair = generate(&SchemeSpec::intermeshed(4, 1.0), 0).unwrap();
        assert_eq!(pair.times_x, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(pair.times_y, vec![0.0, 0.125, 0.375, 0.625, 0.875]);
    }

    #[test]
    fn poisson_generation_is_deterministic() {
        let spec = SchemeSpec::poisson(1.0, 0.5, 500, 1.0);
        assert_eq!(generate(&spec, 9).unwrap(), generate(&spec, 9).unwrap());
        assert_ne!(generate(&spec, 9).unwrap(), generate(&spec, 10).unwrap());
    }

    #[test]
    fn poisson_mean_waiting_time() {
        let pair = generate(&SchemeSpec::poisson(1.0, 1.0, 10_000, 1.0), 2024).unwrap();
        for times in [&pair.times_x, &pair.times_y] {
            let waits: Vec<f64> = std::iter::once(times[0])
                .chain(times.windows(2).map(|w| w[1] - w[0]))
                .collect();
            let k = waits.len() as f64;
            let mean = waits.iter().sum::<f64>() / k;
            // Exponential: standard deviation equals the mean.
            let se = 1e-4 / k.sqrt();
            assert!((mean - 1e-4).abs() < 3.0 * se, "mean {mean}, se {se}");
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(generate(&SchemeSpec::poisson(0.0, 1.0, 10, 1.0), 0).is_err());
        assert!(generate(&SchemeSpec::poisson(1.0, f64::INFINITY, 10, 1.0), 0).is_err());
        assert!(generate(&SchemeSpec::equidistant(0, 1.0), 0).is_err());
        assert!(generate(&SchemeSpec::equidistant(4, -1.0), 0).is_err());
        let unsorted = SchemeSpec::explicit(vec![0.0, 2.0, 1.0], vec![0.0, 1.0], 2.0);
        assert!(matches!(
            generate(&unsorted, 0),
            Err(Error::Unsorted { process: Process::X, index: 2, .. })
        ));
        let outside = SchemeSpec::explicit(vec![0.0, 3.0], vec![0.0, 1.0], 2.0);
        assert!(matches!(generate(&outside, 0), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn sparse_poisson_scheme_is_reported() {
        // Mean waiting time far beyond the horizon.
        let spec = SchemeSpec::poisson(1e6, 1e6, 1, 1.0);
        assert!(matches!(
            generate(&spec, 1),
            Err(Error::TooFewObservations { .. })
        ));
    }

    #[test]
    fn refresh_cdf_values() {
        assert_eq!(refresh_waiting_cdf(1.0, 1.0, 1.0, 0.0), 0.0);
        let direct = 1.0 - 2.0 * (-1.0f64).exp() + (-2.0f64).exp();
        assert!((refresh_waiting_cdf(1.0, 1.0, 1.0, 1.0) - direct).abs() < 1e-15);
        assert!((direct - 0.399_576_4).abs() < 1e-6);
        assert!((refresh_waiting_cdf(1.0, 0.5, 3.0, 1e3) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn refresh_cdf_matches_simulated_maxima() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e1 = Exp::new(1.0).unwrap();
        let e2 = Exp::new(2.0).unwrap();
        let draws = 200_000;
        let hits = (0..draws)
            .filter(|_| {
                let a: f64 = e1.sample(&mut rng);
                let b: f64 = e2.sample(&mut rng);
                a.max(b) <= 0.8
            })
            .count();
        let p = refresh_waiting_cdf(1.0, 0.5, 1.0, 0.8);
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((hits as f64 / draws as f64 - p).abs() < 4.0 * se);
    }

    #[test]
    fn expected_stats_closed_forms() {
        let m = expected_scheme_stats(1.0, 1.0, 1.0);
        assert_eq!(m.e_dt, 1.5);
        assert_eq!(m.e_next_x, 0.5);
        assert_eq!(m.e_next_y, 0.5);
        assert_eq!(m.e_prev_x, 0.25);
        assert_eq!(m.e_prev_y, 0.25);
        let m = expected_scheme_stats(1.0, 0.5, 1.0);
        assert!((m.e_dt - (1.5 - 1.0 / 3.0)).abs() < 1e-15);
        // asymmetric case pins which recurrence belongs to which series
        assert!((m.e_prev_x - 1.0 / 9.0).abs() < 1e-15);
        assert!((m.e_prev_y - 2.0 / 9.0).abs() < 1e-15);
        let scaled = expected_scheme_stats(1.0, 0.5, 100.0);
        assert!((scaled.e_dt * 100.0 - m.e_dt).abs() < 1e-15);
    }

    #[test]
    fn regularity_of_deterministic_schemes() {
        let sync = generate(&SchemeSpec::equidistant(4, 1.0), 0).unwrap();
        let r = grid_regularity(&sync).unwrap();
        assert_eq!((r.delta_x, r.delta_y, r.delta_sync), (0.25, 0.25, 0.25));

        let meshed = generate(&SchemeSpec::intermeshed(4, 1.0), 0).unwrap();
        assert_eq!(grid_regularity(&meshed).unwrap().delta_sync, 0.25);

        let example = SchemePair::new(
            vec![0., 1., 2., 3., 4., 5., 6., 8., 9., 11., 13.],
            vec![0., 2.5, 2.7, 3., 5.5, 7., 8.5, 8.7, 10., 12., 13.],
            13.0,
        )
        .unwrap();
        assert_eq!(grid_regularity(&example).unwrap().delta_x, 2.0);
    }

    #[test]
    fn regularity_needs_two_observations() {
        let pair = SchemePair {
            times_x: vec![0.5],
            times_y: vec![0.0, 1.0],
            horizon: 1.0,
        };
        assert!(grid_regularity(&pair).is_err());
    }
}
