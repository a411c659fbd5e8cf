//! Quadratic (co-)variations of times: the scheme-only curves `G`, `F`, `H`,
//! their slopes, the closed-form Poisson limits and the asymptotic variance
//! they feed into.
//!
//! Slopes are always `d/dt` of the curve itself. For a homogeneous scheme
//! the curve `G^N(t)` grows like `t * E[dT^2] / E[dT]^2`, independent of the
//! horizon, and the asymptotic variance is `T * integral(G' ...)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::NeumaierSum;
use crate::simulate::{CoefficientPiece, CoefficientSpec};
use crate::sync::SyncGrid;

/// Step functions `G^N`, `F^N`, `H^N` evaluated at the refresh times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcvCurves {
    pub eval_times: Vec<f64>,
    pub g_curve: Vec<f64>,
    pub f_curve: Vec<f64>,
    pub h_curve: Vec<f64>,
    pub n_sync: usize,
    pub horizon: f64,
}

impl QcvCurves {
    pub fn len(&self) -> usize {
        self.eval_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eval_times.is_empty()
    }

    /// `G^N` at an arbitrary time (right-continuous step function).
    pub fn g_at(&self, t: f64) -> f64 {
        let k = self.eval_times.partition_point(|&s| s <= t);
        if k == 0 {
            0.0
        } else {
            self.g_curve[k - 1]
        }
    }

    pub fn g_total(&self) -> f64 {
        *self.g_curve.last().unwrap_or(&0.0)
    }
}

pub fn qcv_curves(grid: &SyncGrid) -> Result<QcvCurves> {
    let n = grid.n_intervals();
    if n < 2 {
        return Err(Error::TooFewIntervals { needed: 2, available: n });
    }
    let scale = n as f64 / grid.horizon;
    let s = &grid.steps;
    let mut eval_times = Vec::with_capacity(n + 1);
    let mut g_curve = Vec::with_capacity(n + 1);
    let mut f_curve = Vec::with_capacity(n + 1);
    let mut h_curve = Vec::with_capacity(n + 1);
    let (mut g, mut f, mut h) = (NeumaierSum::new(), NeumaierSum::new(), NeumaierSum::new());
    eval_times.push(s[0].refresh);
    g_curve.push(0.0);
    f_curve.push(0.0);
    h_curve.push(0.0);
    for k in 1..=n {
        let (cur, prev) = (&s[k], &s[k - 1]);
        let t = prev.refresh;
        let dt = cur.refresh - t;
        g.add(dt * dt);
        // Summand with index i = k - 1, counted once T_{i+1} = T_k is reached.
        f.add(
            (t - prev.lambda) * (prev.g - t)
                + (t - prev.l) * (prev.gamma - t)
                + dt * (t - cur.l)
                + dt * (t - cur.lambda),
        );
        h.add((t - cur.l) * (prev.g - t) + (t - cur.lambda) * (prev.gamma - t));
        eval_times.push(cur.refresh);
        g_curve.push(scale * g.value());
        f_curve.push(scale * f.value());
        h_curve.push(scale * h.value());
    }
    Ok(QcvCurves {
        eval_times,
        g_curve,
        f_curve,
        h_curve,
        n_sync: n,
        horizon: grid.horizon,
    })
}

/// Constant slopes `(G', F', H')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QcvSlopes {
    pub g_slope: f64,
    pub f_slope: f64,
    pub h_slope: f64,
}

impl QcvSlopes {
    pub fn new(g_slope: f64, f_slope: f64, h_slope: f64) -> Self {
        Self { g_slope, f_slope, h_slope }
    }

    /// Synchronous sampling: `G' = 1`, `F' = H' = 0`.
    pub fn synchronous() -> Self {
        Self::new(1.0, 0.0, 0.0)
    }

    fn as_array(&self) -> [f64; 3] {
        [self.g_slope, self.f_slope, self.h_slope]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SlopeFit {
    /// Least squares with intercept on the interior points; the first and
    /// last evaluation points carry edge effects and are dropped.
    #[default]
    GlobalFit,
    /// Least squares through the origin of the shifted time `t - T_0`.
    ThroughOrigin,
}

pub fn qcv_slopes(curves: &QcvCurves, fit: SlopeFit) -> Result<QcvSlopes> {
    let (lo, hi) = match fit {
        SlopeFit::GlobalFit => (1, curves.len().saturating_sub(1)),
        SlopeFit::ThroughOrigin => (0, curves.len()),
    };
    if hi < lo + 2 {
        return Err(Error::TooFewIntervals {
            needed: 3,
            available: curves.n_sync,
        });
    }
    let t0 = curves.eval_times[0];
    let t: Vec<f64> = curves.eval_times[lo..hi].iter().map(|&s| s - t0).collect();
    let fit_one = |y: &[f64]| -> f64 {
        let y = &y[lo..hi];
        match fit {
            SlopeFit::GlobalFit => {
                let m = t.len() as f64;
                let mt = t.iter().sum::<f64>() / m;
                let my = y.iter().sum::<f64>() / m;
                let sxy: NeumaierSum = t.iter().zip(y).map(|(a, b)| (a - mt) * (b - my)).collect();
                let sxx: NeumaierSum = t.iter().map(|a| (a - mt) * (a - mt)).collect();
                sxy.value() / sxx.value()
            }
            SlopeFit::ThroughOrigin => {
                let sxy: NeumaierSum = t.iter().zip(y).map(|(a, b)| a * b).collect();
                let sxx: NeumaierSum = t.iter().map(|a| a * a).collect();
                sxy.value() / sxx.value()
            }
        }
    };
    let slopes = QcvSlopes::new(
        fit_one(&curves.g_curve),
        fit_one(&curves.f_curve),
        fit_one(&curves.h_curve),
    );
    if slopes.as_array().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "curves",
            reason: "evaluation times are degenerate".into(),
        });
    }
    Ok(slopes)
}

/// Difference quotient of the three curves over one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSlope {
    pub start: f64,
    pub end: f64,
    pub slopes: QcvSlopes,
}

pub const DEFAULT_WINDOW: usize = 50;

/// Difference quotients over consecutive windows of `window` refresh
/// intervals. A short remainder is folded into the last window.
pub fn windowed_slopes(curves: &QcvCurves, window: usize) -> Result<Vec<WindowSlope>> {
    if window == 0 {
        return Err(Error::InvalidParameter {
            name: "window",
            reason: "must be positive".into(),
        });
    }
    let n = curves.n_sync;
    if n < window {
        return Err(Error::TooFewIntervals { needed: window, available: n });
    }
    let mut cuts: Vec<usize> = (0..=n / window).map(|k| k * window).collect();
    if *cuts.last().unwrap() != n {
        *cuts.last_mut().unwrap() = n;
    }
    let q = |c: &[f64], a: usize, b: usize| (c[b] - c[a]) / (curves.eval_times[b] - curves.eval_times[a]);
    Ok(cuts
        .windows(2)
        .map(|w| WindowSlope {
            start: curves.eval_times[w[0]],
            end: curves.eval_times[w[1]],
            slopes: QcvSlopes::new(
                q(&curves.g_curve, w[0], w[1]),
                q(&curves.f_curve, w[0], w[1]),
                q(&curves.h_curve, w[0], w[1]),
            ),
        })
        .collect())
}

fn poisson_theta(theta1: f64, theta2: f64) -> f64 {
    theta1 + theta2 - theta1 * theta2 / (theta1 + theta2)
}

/// Limiting slopes of the three curves under independent homogeneous
/// Poisson sampling with mean waiting times `theta1 / n`, `theta2 / n`.
pub fn poisson_qcv_limits(theta1: f64, theta2: f64) -> QcvSlopes {
    let (a, b) = (theta1, theta2);
    let s = a + b;
    let th = poisson_theta(a, b);
    let ab2 = a * a * b * b;
    let g = 2.0 * (1.0 - 2.0 * ab2 / (ab2 + (a * a + b * b) * s * s));
    let h = 2.0 * ab2 / (th * th * s * s);
    let f = 2.0 * a * b / (a * a + a * b + b * b) + 2.0 * h;
    QcvSlopes::new(g, f, h)
}

/// Slope input for the asymptotic variance: constant, or piecewise over
/// windows (extended flat beyond the first and last window).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SlopeProfile {
    Constant(QcvSlopes),
    Windowed(Vec<WindowSlope>),
}

impl SlopeProfile {
    fn at(&self, t: f64) -> QcvSlopes {
        match self {
            SlopeProfile::Constant(s) => *s,
            SlopeProfile::Windowed(w) => {
                let k = w.partition_point(|x| x.end <= t).min(w.len() - 1);
                w[k].slopes
            }
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            SlopeProfile::Constant(_) => Vec::new(),
            SlopeProfile::Windowed(w) => w.iter().map(|x| x.end).collect(),
        }
    }
}

impl From<QcvSlopes> for SlopeProfile {
    fn from(s: QcvSlopes) -> Self {
        SlopeProfile::Constant(s)
    }
}

/// Asymptotic variance of `sqrt(N) (HY - [X, Y]_T)`, split into the
/// synchronous part `v_d` and the interpolation part `v_a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalAvar {
    pub v_d: f64,
    pub v_a: f64,
    pub total: f64,
}

pub fn theoretical_avar(coeffs: &CoefficientSpec, slopes: &SlopeProfile) -> Result<TheoreticalAvar> {
    coeffs.validate()?;
    if let SlopeProfile::Windowed(w) = slopes {
        if w.is_empty() {
            return Err(Error::InvalidParameter {
                name: "slopes",
                reason: "no windows supplied".into(),
            });
        }
    }
    let horizon = coeffs.horizon;
    let mut cuts = vec![0.0, horizon];
    cuts.extend(coeffs.breakpoints.iter().copied());
    cuts.extend(slopes.breakpoints().into_iter().filter(|&b| b > 0.0 && b < horizon));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let (mut vd, mut va) = (NeumaierSum::new(), NeumaierSum::new());
    for w in cuts.windows(2) {
        let len = w[1] - w[0];
        if len <= 0.0 {
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        let p = coeffs.coefficients_at(mid);
        let s = slopes.at(mid);
        let ss = (p.sigma_x * p.sigma_y).powi(2);
        let c2 = p.covolatility().powi(2);
        vd.add(len * s.g_slope * (ss + c2));
        va.add(len * (s.f_slope * ss + 2.0 * s.h_slope * c2));
    }
    let v_d = horizon * vd.value();
    let v_a = horizon * va.value();
    Ok(TheoreticalAvar { v_d, v_a, total: v_d + v_a })
}

/// Closed-form variance for Poisson schemes in its published form (no
/// horizon factor), kept for comparison with [`theoretical_avar`].
pub fn poisson_closed_form_avar(theta1: f64, theta2: f64, coeffs: &CoefficientSpec) -> f64 {
    let th = poisson_theta(theta1, theta2);
    let horizon = coeffs.horizon;
    let c2 = coeffs.integrate(0.0, horizon, |p: &CoefficientPiece| p.covolatility().powi(2));
    let ss = coeffs.integrate(0.0, horizon, |p: &CoefficientPiece| (p.sigma_x * p.sigma_y).powi(2));
    2.0 * c2 + (2.0 * theta1 * theta2 / (th * (theta1 + theta2)) + 1.0) * ss
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{generate, SchemePair, SchemeSpec};
    use crate::sync::build_sync_grid;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn synchronous_curves() {
        let pair = generate(&SchemeSpec::equidistant(4, 1.0), 0).unwrap();
        let c = qcv_curves(&build_sync_grid(&pair).unwrap()).unwrap();
        assert!(close(c.g_total(), 1.0, 1e-15));
        assert!(c.f_curve.iter().chain(&c.h_curve).all(|&v| v == 0.0));
    }

    #[test]
    fn worked_example_g_total() {
        let pair = SchemePair::new(
            vec![0., 1., 2., 3., 4., 5., 6., 8., 9., 11., 13.],
            vec![0., 2.5, 2.7, 3., 5.5, 7., 8.5, 8.7, 10., 12., 13.],
            13.0,
        )
        .unwrap();
        let c = qcv_curves(&build_sync_grid(&pair).unwrap()).unwrap();
        let dts = [2.5, 0.5, 2.5, 1.5, 1.5, 0.5, 2.0, 2.0];
        let direct: f64 = dts.iter().map(|d| d * d).sum::<f64>() * 8.0 / 13.0;
        assert!(close(c.g_total(), direct, 1e-15));
        assert!(close(c.g_total(), 8.0 / 13.0 * 25.5, 1e-15));
        for v in [&c.g_curve, &c.f_curve, &c.h_curve] {
            assert!(v.windows(2).all(|w| w[1] >= w[0]) && v[0] >= 0.0);
        }
    }

    #[test]
    fn intermeshed_slopes_are_exact() {
        for n in [10u64, 101, 1000] {
            let pair = generate(&SchemeSpec::intermeshed(n, 1.0), 0).unwrap();
            let c = qcv_curves(&build_sync_grid(&pair).unwrap()).unwrap();
            let s = qcv_slopes(&c, SlopeFit::GlobalFit).unwrap();
            assert!(close(s.g_slope, 1.0, 1e-9), "{s:?}");
            assert!(close(s.f_slope, 1.0, 1e-9), "{s:?}");
            assert!(close(s.h_slope, 0.25, 1e-9), "{s:?}");
        }
    }

    #[test]
    fn through_origin_matches_endpoint_ratio_on_linear_curve() {
        let curves = QcvCurves {
            eval_times: vec![0.0, 0.25, 0.5, 1.0],
            g_curve: vec![0.0, 0.5, 1.0, 2.0],
            f_curve: vec![0.0; 4],
            h_curve: vec![0.0, 0.1, 0.2, 0.4],
            n_sync: 3,
            horizon: 1.0,
        };
        let s = qcv_slopes(&curves, SlopeFit::ThroughOrigin).unwrap();
        assert!(close(s.g_slope, 2.0, 1e-15));
        assert!(close(s.h_slope, 0.4, 1e-15));
    }

    #[test]
    fn poisson_limits_reference_values() {
        let s = poisson_qcv_limits(1.0, 1.0);
        assert!(close(s.g_slope, 14.0 / 9.0, 1e-14));
        assert!(close(s.f_slope, 10.0 / 9.0, 1e-14));
        assert!(close(s.h_slope, 2.0 / 9.0, 1e-14));
        let s = poisson_qcv_limits(1.0, 0.5);
        assert!(close(s.g_slope, 82.0 / 49.0, 1e-14));
        assert!(close(s.f_slope, 44.0 / 49.0, 1e-14));
        assert!(close(s.h_slope, 8.0 / 49.0, 1e-14));
        for (a, b) in [(0.3, 2.0), (1.0, 7.5), (4.0, 0.01)] {
            assert_eq!(poisson_qcv_limits(a, b), poisson_qcv_limits(b, a));
        }
    }

    #[test]
    fn poisson_g_limit_matches_waiting_time_moments() {
        // Oracle: E[dT^2] / E[dT]^2 from the refresh-time law
        // P(dT <= t) = (1 - e^{-t/a})(1 - e^{-t/b}) with n = 1, which has
        // E[dT] = a + b - ab/(a+b) and E[dT^2] = 2(a^2 + b^2 - (ab/(a+b))^2).
        for (a, b) in [(1.0, 1.0), (1.0, 0.5), (0.2, 3.0)] {
            let c = a * b / (a + b);
            let m1 = a + b - c;
            let m2 = 2.0 * (a * a + b * b - c * c);
            assert!(close(poisson_qcv_limits(a, b).g_slope, m2 / (m1 * m1), 1e-13));
        }
    }

    #[test]
    fn theorem_variance_reference_values() {
        let lim: SlopeProfile = poisson_qcv_limits(1.0, 1.0).into();
        let zero = CoefficientSpec::constant(1.0, CoefficientPiece::new(1.0, 1.0, 0.0));
        let v = theoretical_avar(&zero, &lim).unwrap();
        assert!(close(v.total, 8.0 / 3.0, 1e-14));
        let half = CoefficientSpec::constant(1.0, CoefficientPiece::new(1.0, 1.0, 0.5));
        let v = theoretical_avar(&half, &lim).unwrap();
        assert!(close(v.total, 2.0 * 0.25 + 8.0 / 3.0, 1e-14));
        assert!(close(poisson_closed_form_avar(1.0, 1.0, &zero), 5.0 / 3.0, 1e-14));
    }

    #[test]
    fn renewal_oracle_for_uncorrelated_case() {
        // For rho = 0, Var(HY | scheme) = sum_i |I_i| * sum_{J_j overlapping I_i} |J_j|.
        // Averaged over Poisson schemes, N * Var tends to T^2 (2a + 2b) / theta.
        let (a, b) = (1.0, 1.0);
        let th = poisson_theta(a, b);
        let oracle = (2.0 * a + 2.0 * b) / th;
        let lim: SlopeProfile = poisson_qcv_limits(a, b).into();
        let zero = CoefficientSpec::constant(1.0, CoefficientPiece::new(1.0, 1.0, 0.0));
        assert!(close(theoretical_avar(&zero, &lim).unwrap().total, oracle, 1e-14));

        let mut acc = 0.0;
        let seeds = 5;
        for seed in 0..seeds {
            let pair = generate(&SchemeSpec::poisson(a, b, 20_000, 1.0), seed).unwrap();
            let n = build_sync_grid(&pair).unwrap().n_intervals() as f64;
            let (t, tau) = (&pair.times_x, &pair.times_y);
            let mut var = 0.0;
            let mut j0 = 1;
            for i in 1..t.len() {
                while j0 < tau.len() && tau[j0] <= t[i - 1] {
                    j0 += 1;
                }
                let mut j = j0;
                let mut overlap = 0.0;
                while j < tau.len() && tau[j - 1] < t[i] {
                    overlap += tau[j] - tau[j - 1];
                    j += 1;
                }
                var += (t[i] - t[i - 1]) * overlap;
            }
            acc += n * var;
        }
        let mean = acc / seeds as f64;
        assert!(close(mean, oracle, 0.03), "{mean} vs {oracle}");
    }

    #[test]
    fn synchronous_variance_scales_with_horizon() {
        for horizon in [1.0, 2.0] {
            let coeffs = CoefficientSpec::constant(horizon, CoefficientPiece::new(1.0, 1.0, 0.3));
            let v = theoretical_avar(&coeffs, &QcvSlopes::synchronous().into()).unwrap();
            assert!(close(v.total, horizon * horizon * (1.0 + 0.09), 1e-14));
            assert_eq!(v.v_a, 0.0);
        }
    }

    #[test]
    fn refining_breakpoints_does_not_change_variance() {
        let piece = CoefficientPiece::new(1.3, 0.7, -0.2);
        let a = CoefficientSpec::constant(2.0, piece);
        let b = CoefficientSpec::piecewise(2.0, vec![0.5, 1.1], vec![piece; 3]).unwrap();
        let s: SlopeProfile = poisson_qcv_limits(1.0, 0.5).into();
        let (va, vb) = (theoretical_avar(&a, &s).unwrap(), theoretical_avar(&b, &s).unwrap());
        assert!(close(va.total, vb.total, 1e-14));
    }

    #[test]
    fn windowed_profile_with_equal_windows_matches_constant() {
        let coeffs = CoefficientSpec::piecewise(
            1.0,
            vec![0.3],
            vec![CoefficientPiece::new(1.0, 2.0, 0.4), CoefficientPiece::new(0.5, 1.0, -0.6)],
        )
        .unwrap();
        let s = poisson_qcv_limits(1.0, 1.0);
        let windows = vec![
            WindowSlope { start: 0.0, end: 0.45, slopes: s },
            WindowSlope { start: 0.45, end: 1.0, slopes: s },
        ];
        let a = theoretical_avar(&coeffs, &s.into()).unwrap();
        let b = theoretical_avar(&coeffs, &SlopeProfile::Windowed(windows)).unwrap();
        assert!(close(a.total, b.total, 1e-14));
    }

    #[test]
    fn windowed_slopes_on_intermeshed_interior() {
        let pair = generate(&SchemeSpec::intermeshed(500, 1.0), 0).unwrap();
        let c = qcv_curves(&build_sync_grid(&pair).unwrap()).unwrap();
        let w = windowed_slopes(&c, DEFAULT_WINDOW).unwrap();
        assert!(w.len() >= 9);
        for x in &w[1..w.len() - 1] {
            assert!(close(x.slopes.g_slope, 1.0, 1e-9));
            assert!(close(x.slopes.h_slope, 0.25, 1e-9));
        }
        assert!(windowed_slopes(&c, 0).is_err());
    }

    #[test]
    fn too_short_grid_is_rejected() {
        let pair = SchemePair::new(vec![0.0, 1.0], vec![0.0, 1.0], 1.0).unwrap();
        assert!(qcv_curves(&build_sync_grid(&pair).unwrap()).is_err());
    }
}
