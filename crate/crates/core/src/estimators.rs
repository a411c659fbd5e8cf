//! Covariation estimators built on the joint grid, the O(nm) overlap double
//! sum they are checked against, the interpolation-based comparators, and
//! the exact split of the Hayashi-Yoshida error into its synchronous and
//! asynchronous parts.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Process, Result};
use crate::numeric::NeumaierSum;
use crate::sampling::SchemePair;
use crate::simulate::{CoefficientPiece, CoefficientSpec, PathBundle};
use crate::sync::{build_sync_grid, SyncGrid};

fn check_values(pair: &SchemePair, x_values: &[f64], y_values: &[f64]) -> Result<()> {
    for (process, times, values) in [
        (Process::X, &pair.times_x, x_values),
        (Process::Y, &pair.times_y, y_values),
    ] {
        if times.len() != values.len() {
            return Err(Error::LengthMismatch {
                process,
                times: times.len(),
                values: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { process, index });
        }
        if values.len() < 2 {
            return Err(Error::TooFewObservations {
                process,
                count: values.len(),
                required: 2,
            });
        }
    }
    Ok(())
}

/// The addends `(X_g - X_l)(Y_gamma - Y_lambda)` for steps `1..=N`.
pub fn hy_addends(grid: &SyncGrid, x_values: &[f64], y_values: &[f64]) -> Vec<f64> {
    grid.active_steps()
        .iter()
        .map(|s| (x_values[s.mu] - x_values[s.l_index]) * (y_values[s.w] - y_values[s.lambda_index]))
        .collect()
}

/// Hayashi-Yoshida estimate over an already built grid.
pub fn hy_from_grid(grid: &SyncGrid, x_values: &[f64], y_values: &[f64]) -> f64 {
    grid.active_steps()
        .iter()
        .map(|s| (x_values[s.mu] - x_values[s.l_index]) * (y_values[s.w] - y_values[s.lambda_index]))
        .collect::<NeumaierSum>()
        .value()
}

/// Hayashi-Yoshida estimate in telescoping form.
pub fn hy_estimate(pair: &SchemePair, x_values: &[f64], y_values: &[f64]) -> Result<f64> {
    check_values(pair, x_values, y_values)?;
    let grid = build_sync_grid(pair)?;
    Ok(hy_from_grid(&grid, x_values, y_values))
}

/// Hayashi-Yoshida estimate as the sum over all pairs of increments whose
/// observation intervals overlap. Quadratic cost; used as a reference.
pub fn hy_bruteforce(pair: &SchemePair, x_values: &[f64], y_values: &[f64]) -> Result<f64> {
    pair.validate()?;
    check_values(pair, x_values, y_values)?;
    let (t, tau) = (&pair.times_x, &pair.times_y);
    let mut acc = NeumaierSum::new();
    for i in 1..t.len() {
        let dx = x_values[i] - x_values[i - 1];
        for j in 1..tau.len() {
            if t[i].min(tau[j]) > t[i - 1].max(tau[j - 1]) {
                acc.add(dx * (y_values[j] - y_values[j - 1]));
            }
        }
    }
    Ok(acc.value())
}

/// Realized covariance of synchronously observed values.
pub fn realized_covariance(x_values: &[f64], y_values: &[f64]) -> f64 {
    x_values
        .windows(2)
        .zip(y_values.windows(2))
        .map(|(a, b)| (a[1] - a[0]) * (b[1] - b[0]))
        .collect::<NeumaierSum>()
        .value()
}

/// Index of the last time `<= t`, or 0 when `t` precedes every observation.
fn previous_tick_index(times: &[f64], t: f64) -> usize {
    times.partition_point(|&s| s <= t).saturating_sub(1)
}

/// A product of one X increment and one Y increment, by observation index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncrementProduct {
    pub x_hi: usize,
    pub x_lo: usize,
    pub y_hi: usize,
    pub y_lo: usize,
}

impl fmt::Display for IncrementProduct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(X[t{}]-X[t{}])(Y[τ{}]-Y[τ{}])",
            self.x_hi, self.x_lo, self.y_hi, self.y_lo
        )
    }
}

/// Symbolic addends of the Hayashi-Yoshida estimator.
pub fn hy_terms(grid: &SyncGrid) -> Vec<IncrementProduct> {
    grid.active_steps()
        .iter()
        .map(|s| IncrementProduct {
            x_hi: s.mu,
            x_lo: s.l_index,
            y_hi: s.w,
            y_lo: s.lambda_index,
        })
        .collect()
}

/// Symbolic addends of the refresh-time previous-tick realized covariance.
pub fn refresh_previous_tick_terms(pair: &SchemePair, grid: &SyncGrid) -> Vec<IncrementProduct> {
    let idx: Vec<(usize, usize)> = grid
        .steps
        .iter()
        .map(|s| {
            (
                previous_tick_index(&pair.times_x, s.refresh),
                previous_tick_index(&pair.times_y, s.refresh),
            )
        })
        .collect();
    idx.windows(2)
        .map(|w| IncrementProduct {
            x_hi: w[1].0,
            x_lo: w[0].0,
            y_hi: w[1].1,
            y_lo: w[0].1,
        })
        .collect()
}

/// Realized covariance of previous-tick values sampled at the refresh times.
pub fn refresh_previous_tick(pair: &SchemePair, x_values: &[f64], y_values: &[f64]) -> Result<f64> {
    check_values(pair, x_values, y_values)?;
    let grid = build_sync_grid(pair)?;
    Ok(refresh_previous_tick_from_grid(pair, &grid, x_values, y_values))
}

pub fn refresh_previous_tick_from_grid(
    pair: &SchemePair,
    grid: &SyncGrid,
    x_values: &[f64],
    y_values: &[f64],
) -> f64 {
    refresh_previous_tick_terms(pair, grid)
        .iter()
        .map(|p| (x_values[p.x_hi] - x_values[p.x_lo]) * (y_values[p.y_hi] - y_values[p.y_lo]))
        .collect::<NeumaierSum>()
        .value()
}

/// Realized covariance of previous-tick values on the grid `{k * width}`.
pub fn fixed_grid_previous_tick(pair: &SchemePair, x_values: &[f64], y_values: &[f64], width: f64) -> Result<f64> {
    check_values(pair, x_values, y_values)?;
    if !(width.is_finite() && width > 0.0 && width <= pair.horizon) {
        return Err(Error::InvalidParameter {
            name: "grid_width",
            reason: format!("must lie in (0, {}], got {width}", pair.horizon),
        });
    }
    let points = (pair.horizon / width * (1.0 + 1e-12)).floor() as usize;
    let (t, tau) = (&pair.times_x, &pair.times_y);
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = (x_values[0], y_values[0]);
    let mut acc = NeumaierSum::new();
    for k in 1..=points {
        let s = (k as f64 * width).min(pair.horizon);
        while i + 1 < t.len() && t[i + 1] <= s {
            i += 1;
        }
        while j + 1 < tau.len() && tau[j + 1] <= s {
            j += 1;
        }
        let cur = (x_values[i], y_values[j]);
        acc.add((cur.0 - prev.0) * (cur.1 - prev.1));
        prev = cur;
    }
    Ok(acc.value())
}

/// Split of one step's increments around the refresh interval
/// `[T_{i-1}, T_i]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepComponents {
    /// `X_g - X_T`, next-tick interpolation error.
    pub x_plus: f64,
    /// `X_{T_{i-1}} - X_l`, previous-tick interpolation error.
    pub x_minus: f64,
    /// `X_T - X_{T_{i-1}}`
    pub x_sync: f64,
    pub y_plus: f64,
    pub y_minus: f64,
    pub y_sync: f64,
}

impl StepComponents {
    pub fn async_part(&self) -> f64 {
        self.x_plus * (self.y_sync + self.y_minus)
            + self.y_plus * (self.x_sync + self.x_minus)
            + self.x_minus * self.y_sync
            + self.y_minus * self.x_sync
    }
}

/// `HY - [X, Y]_T = d_term + a_term`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub hy: f64,
    pub truth: f64,
    /// Synchronous discretization error at the refresh times, edge integrals included.
    pub d_term: f64,
    /// Error from the next- and previous-tick interpolations.
    pub a_term: f64,
    /// `-(integral over [0, T_0]) - (integral over [T_N, T])` of the covolatility.
    pub edge_term: f64,
    /// Sum of absolute addends; the scale for identity checks.
    pub magnitude: f64,
    pub components: Vec<StepComponents>,
}

impl Decomposition {
    /// `|(HY - truth) - (D + A)|`
    pub fn identity_residual(&self) -> f64 {
        ((self.hy - self.truth) - (self.d_term + self.a_term)).abs()
    }
}

/// Exact error decomposition of a simulated path. Needs latent values at the
/// refresh times, which the simulated union grid always contains.
pub fn decompose_error(grid: &SyncGrid, bundle: &PathBundle, coeffs: &CoefficientSpec) -> Result<Decomposition> {
    let x = |t: f64| bundle.x_at(t);
    let y = |t: f64| bundle.y_at(t);
    let mut components = Vec::with_capacity(grid.n_intervals());
    let mut hy = NeumaierSum::new();
    let mut sync_sum = NeumaierSum::new();
    let mut a_sum = NeumaierSum::new();
    let mut magnitude = NeumaierSum::new();
    for w in grid.steps.windows(2) {
        let (prev, s) = (&w[0], &w[1]);
        let (xt, xt0) = (x(s.refresh)?, x(prev.refresh)?);
        let (yt, yt0) = (y(s.refresh)?, y(prev.refresh)?);
        let c = StepComponents {
            x_plus: x(s.g)? - xt,
            x_minus: xt0 - x(s.l)?,
            x_sync: xt - xt0,
            y_plus: y(s.gamma)? - yt,
            y_minus: yt0 - y(s.lambda)?,
            y_sync: yt - yt0,
        };
        let addend = (x(s.g)? - x(s.l)?) * (y(s.gamma)? - y(s.lambda)?);
        hy.add(addend);
        magnitude.add(addend.abs());
        sync_sum.add(c.x_sync * c.y_sync);
        a_sum.add(c.async_part());
        components.push(c);
    }
    let first = grid.steps[0].refresh;
    let last = grid.steps[grid.n_intervals()].refresh;
    let horizon = grid.horizon;
    let truth = coeffs.true_quadratic_covariation(horizon)?;
    let edge_term = -coeffs.integrate(0.0, first, CoefficientPiece::covolatility)
        - coeffs.integrate(last, horizon, CoefficientPiece::covolatility);
    Ok(Decomposition {
        hy: hy.value(),
        truth,
        d_term: sync_sum.value() - truth,
        a_term: a_sum.value(),
        edge_term,
        magnitude: magnitude.value() + truth.abs(),
        components,
    })
}

/// The asynchronicity error written with the refresh-time indicator
/// functions instead of the interpolation components.
pub fn a_term_indicator_form(grid: &SyncGrid, bundle: &PathBundle) -> Result<f64> {
    let x = |t: f64| bundle.x_at(t);
    let y = |t: f64| bundle.y_at(t);
    let mut acc = NeumaierSum::new();
    for w in grid.steps.windows(2) {
        let (prev, s) = (&w[0], &w[1]);
        let (t1, t0) = (s.refresh, prev.refresh);
        if t1 == s.gamma {
            acc.add((y(s.gamma)? - y(s.lambda)?) * (x(s.g)? - x(t1)?));
        }
        if t0 == s.lambda {
            acc.add((y(t1)? - y(t0)?) * (x(t0)? - x(s.l)?));
        }
        if t1 == s.g {
            acc.add((x(t1)? - x(s.l)?) * (y(s.gamma)? - y(t1)?));
        }
        if t0 == s.l {
            acc.add((x(t1)? - x(t0)?) * (y(t0)? - y(s.lambda)?));
        }
    }
    Ok(acc.value())
}
