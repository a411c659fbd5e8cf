//! WebAssembly bindings for the demo page in `www/`.
//!
//! Every export returns a JSON string; failures come back as
//! `{"error": "..."}` so the page needs no exception handling, and the
//! functions stay callable (and testable) on native targets.

use hycov::estimators::{hy_terms, refresh_previous_tick_terms};
use hycov::mc::{epps_study, McStudySpec};
use hycov::sampling::{generate, SchemePair, SchemeSpec};
use hycov::simulate::{CoefficientPiece, CoefficientSpec};
use hycov::sync::build_sync_grid;
use hycov::timescales::{poisson_qcv_limits, qcv_curves, qcv_slopes, QcvSlopes, SlopeFit};
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Most points sent back for one curve; longer curves are thinned.
const MAX_POINTS: usize = 2000;

fn respond<T: Serialize>(result: Result<T, hycov::Error>) -> String {
    match result {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(e) => error_json(&e.to_string()),
    }
}

fn error_json(message: &str) -> String {
    json!({ "error": message }).to_string()
}

#[derive(Serialize)]
struct GridView {
    times_x: Vec<f64>,
    times_y: Vec<f64>,
    /// `[q, mu, r, w]` per set.
    sets: Vec<[usize; 4]>,
    refresh_times: Vec<f64>,
    hy_terms: Vec<String>,
    previous_tick_terms: Vec<String>,
}

/// Joint grid of two observation schemes on `[0, horizon]`.
#[wasm_bindgen]
pub fn sync_grid(times_x: Vec<f64>, times_y: Vec<f64>, horizon: f64) -> String {
    respond((|| {
        let pair = SchemePair::new(times_x, times_y, horizon)?;
        let grid = build_sync_grid(&pair)?;
        Ok(GridView {
            sets: grid.steps.iter().map(|s| [s.q, s.mu, s.r, s.w]).collect(),
            refresh_times: grid.refresh_times(),
            hy_terms: hy_terms(&grid).iter().map(|t| t.to_string()).collect(),
            previous_tick_terms: refresh_previous_tick_terms(&pair, &grid).iter().map(|t| t.to_string()).collect(),
            times_x: pair.times_x,
            times_y: pair.times_y,
        })
    })())
}

fn scheme(kind: &str, theta1: f64, theta2: f64, intensity: u32) -> Result<SchemeSpec, hycov::Error> {
    let n = u64::from(intensity);
    let spec = match kind {
        "poisson" => SchemeSpec::poisson(theta1, theta2, n, 1.0),
        "intermeshed" => SchemeSpec::intermeshed(n, 1.0),
        "equidistant" => SchemeSpec::equidistant(n, 1.0),
        other => {
            return Err(hycov::Error::InvalidParameter {
                name: "scheme",
                reason: format!("unknown scheme `{other}`"),
            })
        }
    };
    spec.validate()?;
    Ok(spec)
}

#[derive(Serialize)]
struct CurvesView {
    t: Vec<f64>,
    g: Vec<f64>,
    f: Vec<f64>,
    h: Vec<f64>,
    n_sync: usize,
    slopes: QcvSlopes,
    /// Closed-form limits, known for Poisson pairs only.
    limits: Option<QcvSlopes>,
}

/// `G`, `F`, `H` of one simulated scheme on `[0, 1]`, with fitted slopes.
#[wasm_bindgen]
pub fn qcv(kind: &str, theta1: f64, theta2: f64, intensity: u32, seed: u32) -> String {
    respond((|| {
        let spec = scheme(kind, theta1, theta2, intensity)?;
        let pair = generate(&spec, u64::from(seed))?;
        let curves = qcv_curves(&build_sync_grid(&pair)?)?;
        let slopes = qcv_slopes(&curves, SlopeFit::GlobalFit)?;
        let stride = curves.len().div_ceil(MAX_POINTS).max(1);
        let thin = |v: &[f64]| v.iter().step_by(stride).copied().collect::<Vec<_>>();
        Ok(CurvesView {
            t: thin(&curves.eval_times),
            g: thin(&curves.g_curve),
            f: thin(&curves.f_curve),
            h: thin(&curves.h_curve),
            n_sync: curves.n_sync,
            slopes,
            limits: (kind == "poisson").then(|| poisson_qcv_limits(theta1, theta2)),
        })
    })())
}

/// `points` grid widths spaced evenly in log scale from `T` down to `T / 10^decades`.
fn log_widths(points: u32, decades: f64) -> Vec<f64> {
    let k = points.max(2);
    (0..k)
        .map(|i| 10f64.powf(-decades * f64::from(i) / f64::from(k - 1)))
        .collect()
}

/// Mean fixed-grid previous-tick estimate against the grid width for a
/// Poisson pair with unit volatilities and correlation `rho`.
#[wasm_bindgen]
pub fn epps(theta1: f64, theta2: f64, intensity: u32, rho: f64, replications: u32, seed: u32) -> String {
    respond((|| {
        let scheme = scheme("poisson", theta1, theta2, intensity)?;
        let coeffs = CoefficientSpec::constant(1.0, CoefficientPiece::new(1.0, 1.0, rho));
        let spec = McStudySpec::new(scheme, coeffs, replications as usize, u64::from(seed));
        let decades = (f64::from(intensity) * 2.0).log10().max(1.0);
        epps_study(&spec, &log_widths(12, decades))
    })())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths_are_decreasing_and_start_at_horizon() {
        let w = log_widths(5, 2.0);
        assert_eq!(w[0], 1.0);
        assert!((w[4] - 0.01).abs() < 1e-15);
        assert!(w.windows(2).all(|p| p[1] < p[0]));
    }

    #[test]
    fn unknown_scheme_is_reported() {
        let v: serde_json::Value = serde_json::from_str(&qcv("bogus", 1.0, 1.0, 10, 0)).unwrap();
        assert!(v["error"].as_str().unwrap().contains("bogus"));
    }
}
