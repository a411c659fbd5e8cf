//! Exact simulation of a bivariate continuous Itô process with deterministic,
//! piecewise-constant drift, volatility and correlation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::NeumaierSum;
use crate::sampling::SchemePair;

/// Coefficients on one interval between breakpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientPiece {
    #[serde(default)]
    pub mu_x: f64,
    #[serde(default)]
    pub mu_y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub rho: f64,
}

impl CoefficientPiece {
    pub fn new(sigma_x: f64, sigma_y: f64, rho: f64) -> Self {
        Self {
            mu_x: 0.0,
            mu_y: 0.0,
            sigma_x,
            sigma_y,
            rho,
        }
    }

    pub fn with_drift(self, mu_x: f64, mu_y: f64) -> Self {
        Self { mu_x, mu_y, ..self }
    }

    /// `rho * sigma_x * sigma_y`, the density of the quadratic covariation.
    pub fn covolatility(&self) -> f64 {
        self.rho * self.sigma_x * self.sigma_y
    }
}

/// Piecewise-constant coefficient functions on `[0, horizon]`.
///
/// `breakpoints` are the interior switch times; piece `k` applies on
/// `[breakpoints[k-1], breakpoints[k])` with the outer bounds 0 and `horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    pub horizon: f64,
    #[serde(default)]
    pub breakpoints: Vec<f64>,
    pub pieces: Vec<CoefficientPiece>,
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub y0: f64,
}

/// Closed-form integrals of the coefficients over one interval.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IntervalMoments {
    pub mean_x: f64,
    pub mean_y: f64,
    pub var_x: f64,
    pub var_y: f64,
    pub cov: f64,
    /// Every piece touching the interval has `|rho| = 1`.
    pub perfectly_correlated: bool,
}

impl CoefficientSpec {
    pub fn constant(horizon: f64, piece: CoefficientPiece) -> Self {
        Self {
            horizon,
            breakpoints: Vec::new(),
            pieces: vec![piece],
            x0: 0.0,
            y0: 0.0,
        }
    }

    pub fn piecewise(horizon: f64, breakpoints: Vec<f64>, pieces: Vec<CoefficientPiece>) -> Result<Self> {
        let spec = Self {
            horizon,
            breakpoints,
            pieces,
            x0: 0.0,
            y0: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_start(self, x0: f64, y0: f64) -> Self {
        Self { x0, y0, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |name, reason: String| Err(Error::InvalidParameter { name, reason });
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return invalid("horizon", format!("must be positive, got {}", self.horizon));
        }
        if self.pieces.len() != self.breakpoints.len() + 1 {
            return invalid(
                "pieces",
                format!(
                    "{} breakpoints need {} pieces, got {}",
                    self.breakpoints.len(),
                    self.breakpoints.len() + 1,
                    self.pieces.len()
                ),
            );
        }
        let mut prev = 0.0;
        for &b in &self.breakpoints {
            if !(b > prev && b < self.horizon) {
                return invalid(
                    "breakpoints",
                    format!("must be strictly increasing inside (0, {}), got {b}", self.horizon),
                );
            }
            prev = b;
        }
        for p in &self.pieces {
            if ![p.mu_x, p.mu_y, p.sigma_x, p.sigma_y, p.rho].iter().all(|v| v.is_finite()) {
                return invalid("pieces", "coefficients must be finite".into());
            }
            if p.sigma_x < 0.0 || p.sigma_y < 0.0 {
                return invalid("sigma", "volatilities must be nonnegative".into());
            }
            if p.rho.abs() > 1.0 {
                return invalid("rho", format!("correlation must lie in [-1, 1], got {}", p.rho));
            }
        }
        if !(self.x0.is_finite() && self.y0.is_finite()) {
            return invalid("x0", "initial values must be finite".into());
        }
        Ok(())
    }

    fn piece_start(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.breakpoints[k - 1]
        }
    }

    fn piece_end(&self, k: usize) -> f64 {
        self.breakpoints.get(k).copied().unwrap_or(self.horizon)
    }

    /// Index of the piece in force at time `t`.
    fn piece_at(&self, t: f64) -> usize {
        self.breakpoints.partition_point(|&b| b <= t)
    }

    /// Coefficients in force at time `t`.
    pub fn coefficients_at(&self, t: f64) -> &CoefficientPiece {
        &self.pieces[self.piece_at(t)]
    }

    /// `integral over [a, b] of f(piece(t)) dt`, starting the scan at piece `k`.
    fn integrate_from(&self, mut k: usize, a: f64, b: f64, f: impl Fn(&CoefficientPiece) -> f64) -> f64 {
        let mut acc = NeumaierSum::new();
        let mut lo = a;
        while lo < b {
            let hi = self.piece_end(k).min(b);
            if hi > lo {
                acc.add(f(&self.pieces[k]) * (hi - lo));
            }
            lo = hi;
            if k + 1 >= self.pieces.len() {
                break;
            }
            k += 1;
        }
        acc.value()
    }

    /// Integral of an arbitrary function of the coefficients over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(&CoefficientPiece) -> f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        self.integrate_from(self.piece_at(a), a, b, f)
    }

    /// Mean vector and covariance of the increment over `[a, b]`.
    pub fn interval_moments(&self, a: f64, b: f64) -> IntervalMoments {
        let mut m = IntervalMoments {
            perfectly_correlated: true,
            ..Default::default()
        };
        if b <= a {
            return m;
        }
        let mut k = self.piece_at(a);
        let mut lo = a;
        loop {
            let hi = self.piece_end(k).min(b);
            let p = &self.pieces[k];
            if hi > lo {
                let dt = hi - lo;
                m.mean_x += p.mu_x * dt;
                m.mean_y += p.mu_y * dt;
                m.var_x += p.sigma_x * p.sigma_x * dt;
                m.var_y += p.sigma_y * p.sigma_y * dt;
                m.cov += p.covolatility() * dt;
                m.perfectly_correlated &= p.rho.abs() == 1.0;
            }
            lo = hi;
            if lo >= b || k + 1 >= self.pieces.len() {
                break;
            }
            k += 1;
        }
        m
    }

    /// `[X, Y]_t`, the integral of `rho sigma_x sigma_y` over `[0, t]`.
    pub fn true_quadratic_covariation(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::InvalidParameter {
                name: "t",
                reason: format!("{t} is outside [0, {}]", self.horizon),
            });
        }
        Ok(self.integrate(0.0, t, CoefficientPiece::covolatility))
    }

    /// Breakpoint-aligned start times of each piece, for callers that need to
    /// integrate piecewise on their own.
    pub fn piece_intervals(&self) -> impl Iterator<Item = (f64, f64, &CoefficientPiece)> {
        self.pieces
            .iter()
            .enumerate()
            .map(|(k, p)| (self.piece_start(k), self.piece_end(k), p))
    }
}

/// Simulated paths on the union of both observation grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathBundle {
    /// Sorted union of both schemes' times, 0 and the horizon.
    pub union_grid: Vec<f64>,
    pub x_values: Vec<f64>,
    pub y_values: Vec<f64>,
    /// `[X, Y]_t` on the union grid.
    pub true_qcov: Vec<f64>,
    pub true_qcov_total: f64,
    /// Position of each X observation time in `union_grid`.
    pub x_positions: Vec<usize>,
    /// Position of each Y observation time in `union_grid`.
    pub y_positions: Vec<usize>,
}

impl PathBundle {
    fn position(&self, t: f64) -> Result<usize> {
        self.union_grid
            .binary_search_by(|probe| probe.total_cmp(&t))
            .map_err(|_| Error::MissingGridTime { time: t })
    }

    /// Latent value of X at a grid time.
    pub fn x_at(&self, t: f64) -> Result<f64> {
        Ok(self.x_values[self.position(t)?])
    }

    /// Latent value of Y at a grid time.
    pub fn y_at(&self, t: f64) -> Result<f64> {
        Ok(self.y_values[self.position(t)?])
    }

    /// X values at the X observation times.
    pub fn observed_x(&self) -> Vec<f64> {
        self.x_positions.iter().map(|&k| self.x_values[k]).collect()
    }

    /// Y values at the Y observation times.
    pub fn observed_y(&self) -> Vec<f64> {
        self.y_positions.iter().map(|&k| self.y_values[k]).collect()
    }
}

/// Merges two sorted lists into their sorted union, also returning the
/// position of every input element in the union.
fn merge_union(a: &[f64], b: &[f64], horizon: f64) -> (Vec<f64>, Vec<usize>, Vec<usize>) {
    let mut union = Vec::with_capacity(a.len() + b.len() + 2);
    let mut pos_a = Vec::with_capacity(a.len());
    let mut pos_b = Vec::with_capacity(b.len());
    let push = |union: &mut Vec<f64>, t: f64| {
        if union.last() != Some(&t) {
            union.push(t);
        }
        union.len() - 1
    };
    push(&mut union, 0.0);
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let take_a = j >= b.len() || (i < a.len() && a[i] <= b[j]);
        if take_a {
            let t = a[i];
            let k = push(&mut union, t);
            pos_a.push(k);
            if j < b.len() && b[j] == t {
                pos_b.push(k);
                j += 1;
            }
            i += 1;
        } else {
            let k = push(&mut union, b[j]);
            pos_b.push(k);
            j += 1;
        }
    }
    push(&mut union, horizon);
    (union, pos_a, pos_b)
}

/// Draws exact Gaussian increments over every union-grid interval.
/// Deterministic in `(pair, coeffs, seed)`.
pub fn simulate_paths(pair: &SchemePair, coeffs: &CoefficientSpec, seed: u64) -> Result<PathBundle> {
    coeffs.validate()?;
    pair.validate()?;
    if coeffs.horizon < pair.horizon {
        return Err(Error::CoefficientCoverage {
            covered: coeffs.horizon,
            required: pair.horizon,
        });
    }
    let (union_grid, x_positions, y_positions) = merge_union(&pair.times_x, &pair.times_y, pair.horizon);
    let len = union_grid.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x_values = Vec::with_capacity(len);
    let mut y_values = Vec::with_capacity(len);
    let mut true_qcov = Vec::with_capacity(len);
    x_values.push(coeffs.x0);
    y_values.push(coeffs.y0);
    true_qcov.push(0.0);
    let mut qcov = NeumaierSum::new();
    let (mut x, mut y) = (coeffs.x0, coeffs.y0);
    for w in union_grid.windows(2) {
        let m = coeffs.interval_moments(w[0], w[1]);
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let (dx, dy) = correlated_increment(&m, z1, z2);
        x += dx;
        y += dy;
        qcov.add(m.cov);
        x_values.push(x);
        y_values.push(y);
        true_qcov.push(qcov.value());
    }
    let true_qcov_total = coeffs.true_quadratic_covariation(pair.horizon)?;
    Ok(PathBundle {
        union_grid,
        x_values,
        y_values,
        true_qcov,
        true_qcov_total,
        x_positions,
        y_positions,
    })
}

/// Maps two independent standard normals to an increment with the given
/// moments via the lower-triangular square root of the 2x2 covariance.
fn correlated_increment(m: &IntervalMoments, z1: f64, z2: f64) -> (f64, f64) {
    if m.var_x <= 0.0 {
        return (m.mean_x, m.mean_y + m.var_y.max(0.0).sqrt() * z2);
    }
    let sx = m.var_x.sqrt();
    let dx = m.mean_x + sx * z1;
    let dy = if m.perfectly_correlated {
        m.mean_y + m.cov.signum() * m.var_y.sqrt() * z1
    } else {
        let l21 = m.cov / sx;
        let l22 = (m.var_y - l21 * l21).max(0.0).sqrt();
        m.mean_y + l21 * z1 + l22 * z2
    };
    (dx, dy)
}
