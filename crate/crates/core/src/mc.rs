//! Monte Carlo studies: replication runner, CLT diagnostics, estimator
//! comparisons, Epps curves and slope convergence of the time covariations.
//!
//! Replication `i` draws its scheme from `derive_seed(base, 2i)` and its path
//! from `derive_seed(base, 2i + 1)`, so results do not depend on scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, on the rayon pool when available.
fn map_indices<T: Send>(n: u64, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    decompose_error, fixed_grid_previous_tick, hy_from_grid, refresh_previous_tick_from_grid,
};
use crate::inference::{avar_estimate, feasible_ci, studentize, AvarConfig};
use crate::numeric::{derive_seed, normal_quantile, NeumaierSum};
use crate::sampling::{generate, SchemeKind, SchemeSpec};
use crate::simulate::{simulate_paths, CoefficientSpec};
use crate::sync::build_sync_grid;
use crate::timescales::{
    poisson_closed_form_avar, poisson_qcv_limits, qcv_curves, qcv_slopes, theoretical_avar, QcvSlopes, SlopeFit,
    TheoreticalAvar,
};

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McStudySpec {
    pub scheme: SchemeSpec,
    pub coeffs: CoefficientSpec,
    pub replications: usize,
    pub base_seed: u64,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub avar: AvarConfig,
    /// Also compute the refresh-time previous-tick estimator.
    #[serde(default)]
    pub refresh_previous_tick: bool,
    /// Grid widths for the fixed-grid previous-tick estimator.
    #[serde(default)]
    pub fixed_grid_widths: Vec<f64>,
    /// Compute the exact D/A error split per replication.
    #[serde(default)]
    pub decomposition: bool,
    /// Fit the time-covariation slopes per replication.
    #[serde(default)]
    pub qcv_slopes: bool,
}

impl McStudySpec {
    pub fn new(scheme: SchemeSpec, coeffs: CoefficientSpec, replications: usize, base_seed: u64) -> Self {
        Self {
            scheme,
            coeffs,
            replications,
            base_seed,
            level: default_level(),
            avar: AvarConfig::default(),
            refresh_previous_tick: false,
            fixed_grid_widths: Vec::new(),
            decomposition: false,
            qcv_slopes: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scheme.validate()?;
        self.coeffs.validate()?;
        if self.replications == 0 {
            return Err(Error::InvalidParameter {
                name: "replications",
                reason: "must be at least 1".into(),
            });
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidParameter {
                name: "level",
                reason: format!("must lie in (0, 1), got {}", self.level),
            });
        }
        if (self.coeffs.horizon - self.scheme.horizon).abs() > 1e-12 * self.scheme.horizon {
            return Err(Error::CoefficientCoverage {
                covered: self.coeffs.horizon,
                required: self.scheme.horizon,
            });
        }
        for &w in &self.fixed_grid_widths {
            if !(w > 0.0 && w <= self.scheme.horizon) {
                return Err(Error::InvalidParameter {
                    name: "fixed_grid_widths",
                    reason: format!("width {w} outside (0, {}]", self.scheme.horizon),
                });
            }
        }
        Ok(())
    }

    /// Seeds used by replication `index`: (scheme, path).
    pub fn replication_seeds(&self, index: usize) -> (u64, u64) {
        let i = index as u64;
        (derive_seed(self.base_seed, 2 * i), derive_seed(self.base_seed, 2 * i + 1))
    }
}

/// Everything recorded for one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub n_sync: usize,
    pub truth: f64,
    pub hy: f64,
    pub avar_hat: f64,
    pub covered: bool,
    pub avar_histogram: f64,
    pub avar_lag_corrected: f64,
    /// Coverage of the interval built from the lag-corrected estimate.
    pub covered_lag_corrected: bool,
    pub studentized: Option<f64>,
    pub refresh_previous_tick: Option<f64>,
    pub fixed_grid: Vec<f64>,
    pub d_term: Option<f64>,
    pub a_term: Option<f64>,
    /// `|(HY - truth) - (D + A)|` relative to the addend magnitude.
    pub identity_residual: Option<f64>,
    pub slopes: Option<QcvSlopes>,
}

pub fn run_replication(spec: &McStudySpec, index: usize) -> Result<Replication> {
    let (scheme_seed, path_seed) = spec.replication_seeds(index);
    let pair = generate(&spec.scheme, scheme_seed)?;
    let bundle = simulate_paths(&pair, &spec.coeffs, path_seed)?;
    let grid = build_sync_grid(&pair)?;
    let (x, y) = (bundle.observed_x(), bundle.observed_y());
    let n = grid.n_intervals();
    let hy = hy_from_grid(&grid, &x, &y);
    let truth = bundle.true_qcov_total;
    let av = avar_estimate(&grid, &x, &y, &spec.avar)?;
    let avar = av.avar;
    let ci = feasible_ci(hy, avar, n, spec.level)?;
    let ci_lag = feasible_ci(hy, av.avar_lag_corrected, n, spec.level)?;
    let rpt = spec
        .refresh_previous_tick
        .then(|| refresh_previous_tick_from_grid(&pair, &grid, &x, &y));
    let fixed_grid = spec
        .fixed_grid_widths
        .iter()
        .map(|&w| fixed_grid_previous_tick(&pair, &x, &y, w))
        .collect::<Result<Vec<_>>>()?;
    let dec = if spec.decomposition {
        Some(decompose_error(&grid, &bundle, &spec.coeffs)?)
    } else {
        None
    };
    let slopes = if spec.qcv_slopes {
        Some(qcv_slopes(&qcv_curves(&grid)?, SlopeFit::GlobalFit)?)
    } else {
        None
    };
    Ok(Replication {
        index,
        n_sync: n,
        truth,
        hy,
        avar_hat: avar,
        covered: ci.contains(truth),
        avar_histogram: av.avar_histogram,
        avar_lag_corrected: av.avar_lag_corrected,
        covered_lag_corrected: ci_lag.contains(truth),
        studentized: studentize(hy, truth, avar, n),
        refresh_previous_tick: rpt,
        fixed_grid,
        d_term: dec.as_ref().map(|d| d.d_term),
        a_term: dec.as_ref().map(|d| d.a_term),
        identity_residual: dec.as_ref().map(|d| d.identity_residual() / d.magnitude),
        slopes,
    })
}

/// Mean and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn of(values: &[f64]) -> Self {
        let m = values.len() as f64;
        let mean = values.iter().copied().collect::<NeumaierSum>().value() / m;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).collect::<NeumaierSum>().value() / (m - 1.0)
        } else {
            0.0
        };
        Self { mean, se: (var / m).sqrt() }
    }
}

/// Sample variance with the standard error `sqrt((m4 - s^4) / M)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceSe {
    pub variance: f64,
    pub se: f64,
}

impl VarianceSe {
    pub fn of(values: &[f64]) -> Self {
        let m = values.len() as f64;
        let mean = values.iter().sum::<f64>() / m;
        if values.len() < 2 {
            return Self { variance: 0.0, se: 0.0 };
        }
        let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / m;
        Self {
            variance,
            se: ((m4 - variance * variance).max(0.0) / m).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    /// Estimate minus truth.
    pub error: MeanSe,
    /// Variance of `sqrt(N) * (estimate - truth)`.
    pub scaled_error_variance: VarianceSe,
}

impl EstimatorSummary {
    fn from_errors(errors: &[(f64, usize)]) -> Self {
        let raw: Vec<f64> = errors.iter().map(|e| e.0).collect();
        let scaled: Vec<f64> = errors.iter().map(|e| e.0 * (e.1 as f64).sqrt()).collect();
        Self {
            error: MeanSe::of(&raw),
            scaled_error_variance: VarianceSe::of(&scaled),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedGridSummary {
    pub width: f64,
    pub estimate: MeanSe,
    pub summary: EstimatorSummary,
}

/// Normality diagnostics of the studentized errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentizedSummary {
    pub count: usize,
    pub mean: f64,
    pub variance: VarianceSe,
    pub skewness: f64,
    pub kurtosis: f64,
    pub jarque_bera: f64,
    /// Asymptotic chi-square(2) p-value of the Jarque-Bera score.
    pub jarque_bera_p: f64,
    /// `(normal quantile, empirical quantile)` pairs.
    pub qq_points: Vec<(f64, f64)>,
}

impl StudentizedSummary {
    pub fn of(values: &[f64]) -> Self {
        let m = values.len() as f64;
        let mean = values.iter().sum::<f64>() / m;
        let moment = |k: i32| values.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / m;
        let (m2, m3, m4) = (moment(2), moment(3), moment(4));
        let skewness = m3 / m2.powf(1.5);
        let kurtosis = m4 / (m2 * m2);
        let jarque_bera = m / 6.0 * (skewness * skewness + (kurtosis - 3.0).powi(2) / 4.0);
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q = values.len().min(100);
        let qq_points = (0..q)
            .map(|k| {
                let p = (k as f64 + 0.5) / q as f64;
                let pos = ((p * m) as usize).min(values.len() - 1);
                (normal_quantile(p), sorted[pos])
            })
            .collect();
        Self {
            count: values.len(),
            mean,
            variance: VarianceSe::of(values),
            skewness,
            kurtosis,
            jarque_bera,
            jarque_bera_p: (-jarque_bera / 2.0).exp(),
            qq_points,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSummary {
    pub corr_d_a: f64,
    pub corr_se: f64,
    pub d_scaled_variance: f64,
    pub a_scaled_variance: f64,
    pub max_identity_residual: f64,
}

pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let m = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / m, b.iter().sum::<f64>() / m);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeSummary {
    pub g: MeanSe,
    pub f: MeanSe,
    pub h: MeanSe,
}

impl SlopeSummary {
    pub fn of(slopes: &[QcvSlopes]) -> Self {
        let col = |f: fn(&QcvSlopes) -> f64| MeanSe::of(&slopes.iter().map(f).collect::<Vec<_>>());
        Self {
            g: col(|s| s.g_slope),
            f: col(|s| s.f_slope),
            h: col(|s| s.h_slope),
        }
    }

    pub fn means(&self) -> QcvSlopes {
        QcvSlopes::new(self.g.mean, self.f.mean, self.h.mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub replications: usize,
    pub failures: usize,
    pub mean_n_sync: f64,
    pub truth: f64,
    pub hy: EstimatorSummary,
    pub refresh_previous_tick: Option<EstimatorSummary>,
    pub fixed_grid: Vec<FixedGridSummary>,
    pub avar_hat: MeanSe,
    pub negative_avar: usize,
    pub coverage: MeanSe,
    pub avar_histogram: MeanSe,
    pub avar_lag_corrected: MeanSe,
    pub coverage_lag_corrected: MeanSe,
    pub level: f64,
    pub studentized: StudentizedSummary,
    pub decomposition: Option<DecompositionSummary>,
    pub qcv_slopes: Option<SlopeSummary>,
    /// Variance from the limit theorem with the scheme's limiting slopes,
    /// where those are known in closed form.
    pub theoretical_avar: Option<TheoreticalAvar>,
    pub poisson_closed_form_avar: Option<f64>,
}

/// Limiting slopes of a scheme family, where known in closed form.
pub fn scheme_limit_slopes(scheme: &SchemeSpec) -> Option<QcvSlopes> {
    match &scheme.kind {
        SchemeKind::PoissonPair { theta1, theta2 } => Some(poisson_qcv_limits(*theta1, *theta2)),
        SchemeKind::EquidistantSync => Some(QcvSlopes::synchronous()),
        SchemeKind::Intermeshed => Some(QcvSlopes::new(1.0, 1.0, 0.25)),
        SchemeKind::Explicit { .. } => None,
    }
}

/// Runs all replications in parallel, in index order.
pub fn run_replications(spec: &McStudySpec) -> Result<(Vec<Replication>, usize)> {
    spec.validate()?;
    let results = map_indices(spec.replications as u64, |i| run_replication(spec, i as usize));
    let failed: Vec<&Error> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    if failed.len() * 100 > spec.replications {
        return Err(Error::ReplicationFailures {
            failed: failed.len(),
            total: spec.replications,
            first: failed[0].to_string(),
        });
    }
    let failures = failed.len();
    Ok((results.into_iter().filter_map(|r| r.ok()).collect(), failures))
}

pub fn run_study(spec: &McStudySpec) -> Result<McSummary> {
    let (reps, failures) = run_replications(spec)?;
    summarize(spec, &reps, failures)
}

pub fn summarize(spec: &McStudySpec, reps: &[Replication], failures: usize) -> Result<McSummary> {
    if reps.is_empty() {
        return Err(Error::ReplicationFailures {
            failed: failures,
            total: spec.replications,
            first: "no replication succeeded".into(),
        });
    }
    let errors = |f: &dyn Fn(&Replication) -> f64| -> Vec<(f64, usize)> {
        reps.iter().map(|r| (f(r) - r.truth, r.n_sync)).collect()
    };
    let hy = EstimatorSummary::from_errors(&errors(&|r| r.hy));
    let refresh_previous_tick = spec
        .refresh_previous_tick
        .then(|| EstimatorSummary::from_errors(&errors(&|r| r.refresh_previous_tick.unwrap_or(f64::NAN))));
    let fixed_grid = spec
        .fixed_grid_widths
        .iter()
        .enumerate()
        .map(|(k, &width)| FixedGridSummary {
            width,
            estimate: MeanSe::of(&reps.iter().map(|r| r.fixed_grid[k]).collect::<Vec<_>>()),
            summary: EstimatorSummary::from_errors(&errors(&|r| r.fixed_grid[k])),
        })
        .collect();
    let avars: Vec<f64> = reps.iter().map(|r| r.avar_hat).collect();
    let covered: Vec<f64> = reps.iter().map(|r| f64::from(u8::from(r.covered))).collect();
    let studentized: Vec<f64> = reps.iter().filter_map(|r| r.studentized).collect();
    let decomposition = spec.decomposition.then(|| {
        let scale = |v: f64, r: &Replication| v * (r.n_sync as f64).sqrt();
        let d: Vec<f64> = reps.iter().map(|r| scale(r.d_term.unwrap_or(f64::NAN), r)).collect();
        let a: Vec<f64> = reps.iter().map(|r| scale(r.a_term.unwrap_or(f64::NAN), r)).collect();
        let corr = correlation(&d, &a);
        DecompositionSummary {
            corr_d_a: corr,
            corr_se: (1.0 - corr * corr) / ((reps.len() as f64 - 1.0).max(1.0)).sqrt(),
            d_scaled_variance: VarianceSe::of(&d).variance,
            a_scaled_variance: VarianceSe::of(&a).variance,
            max_identity_residual: reps
                .iter()
                .filter_map(|r| r.identity_residual)
                .fold(0.0, f64::max),
        }
    });
    let qcv_slopes = spec
        .qcv_slopes
        .then(|| SlopeSummary::of(&reps.iter().filter_map(|r| r.slopes).collect::<Vec<_>>()));
    let limits = scheme_limit_slopes(&spec.scheme);
    let theoretical = match limits {
        Some(s) => Some(theoretical_avar(&spec.coeffs, &s.into())?),
        None => None,
    };
    let closed_form = match spec.scheme.kind {
        SchemeKind::PoissonPair { theta1, theta2 } => Some(poisson_closed_form_avar(theta1, theta2, &spec.coeffs)),
        _ => None,
    };
    Ok(McSummary {
        replications: spec.replications,
        failures,
        mean_n_sync: reps.iter().map(|r| r.n_sync as f64).sum::<f64>() / reps.len() as f64,
        truth: reps[0].truth,
        hy,
        refresh_previous_tick,
        fixed_grid,
        avar_hat: MeanSe::of(&avars),
        negative_avar: avars.iter().filter(|&&v| v < 0.0).count(),
        coverage: MeanSe::of(&covered),
        avar_histogram: MeanSe::of(&reps.iter().map(|r| r.avar_histogram).collect::<Vec<_>>()),
        avar_lag_corrected: MeanSe::of(&reps.iter().map(|r| r.avar_lag_corrected).collect::<Vec<_>>()),
        coverage_lag_corrected: MeanSe::of(
            &reps
                .iter()
                .map(|r| f64::from(u8::from(r.covered_lag_corrected)))
                .collect::<Vec<_>>(),
        ),
        level: spec.level,
        studentized: StudentizedSummary::of(&studentized),
        decomposition,
        qcv_slopes,
        theoretical_avar: theoretical,
        poisson_closed_form_avar: closed_form,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EppsPoint {
    pub width: f64,
    pub mean: MeanSe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EppsCurve {
    pub truth: f64,
    pub points: Vec<EppsPoint>,
    /// Hayashi-Yoshida mean over the same replications; it does not depend
    /// on the grid width.
    pub hy: MeanSe,
}

/// Mean fixed-grid previous-tick estimate against the grid width.
pub fn epps_study(spec: &McStudySpec, widths: &[f64]) -> Result<EppsCurve> {
    if widths.is_empty() || widths.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter {
            name: "widths",
            reason: "must be a non-empty strictly decreasing list".into(),
        });
    }
    let mut spec = spec.clone();
    spec.fixed_grid_widths = widths.to_vec();
    let (reps, _) = run_replications(&spec)?;
    let points = widths
        .iter()
        .enumerate()
        .map(|(k, &width)| EppsPoint {
            width,
            mean: MeanSe::of(&reps.iter().map(|r| r.fixed_grid[k]).collect::<Vec<_>>()),
        })
        .collect();
    Ok(EppsCurve {
        truth: reps[0].truth,
        points,
        hy: MeanSe::of(&reps.iter().map(|r| r.hy).collect::<Vec<_>>()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeConvergence {
    pub intensity: u64,
    pub slopes: SlopeSummary,
    pub limit: Option<QcvSlopes>,
}

/// Fitted slopes of the time covariations over `seeds` independent schemes.
pub fn qcv_slope_study(scheme: &SchemeSpec, seeds: usize, base_seed: u64) -> Result<SlopeSummary> {
    scheme.validate()?;
    let slopes = map_indices(seeds as u64, |i| {
        let pair = generate(scheme, derive_seed(base_seed, i))?;
        qcv_slopes(&qcv_curves(&build_sync_grid(&pair)?)?, SlopeFit::GlobalFit)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(SlopeSummary::of(&slopes))
}

/// Slope estimates for increasing intensities of a Poisson pair.
pub fn qcv_convergence_study(
    theta1: f64,
    theta2: f64,
    intensities: &[u64],
    seeds: usize,
    base_seed: u64,
) -> Result<Vec<SlopeConvergence>> {
    if intensities.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter {
            name: "intensities",
            reason: "must be strictly increasing".into(),
        });
    }
    intensities
        .iter()
        .map(|&n| {
            let scheme = SchemeSpec::poisson(theta1, theta2, n, 1.0);
            Ok(SlopeConvergence {
                intensity: n,
                slopes: qcv_slope_study(&scheme, seeds, base_seed)?,
                limit: Some(poisson_qcv_limits(theta1, theta2)),
            })
        })
        .collect()
}
