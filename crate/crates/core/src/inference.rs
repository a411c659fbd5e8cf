//! Feasible inference: the histogram estimator of the asymptotic variance,
//! confidence intervals and the studentized error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::hy_addends;
use crate::numeric::{normal_quantile, NeumaierSum};
use crate::sampling::{grid_regularity, GridRegularity, SchemePair};
use crate::sync::{build_sync_grid, SyncGrid, TailDiagnostics};
use crate::timescales::{qcv_curves, qcv_slopes, QcvSlopes, SlopeFit};

/// Number of histogram bins `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BinRule {
    /// `ceil(N^(1/3))`
    #[default]
    Auto,
    Fixed(usize),
}

impl BinRule {
    pub fn bins(&self, n_sync: usize) -> usize {
        match *self {
            BinRule::Auto => (n_sync as f64).cbrt().ceil().max(1.0) as usize,
            BinRule::Fixed(k) => k,
        }
    }
}

/// Which end of a refresh interval decides its bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BinAnchor {
    #[default]
    Right,
    Left,
}

/// Form of the subtracted bias term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AvarMethod {
    /// `3 T I_1` with `I_1` the histogram estimate of `integral (rho sigma sigma)^2 G'`.
    #[default]
    Histogram,
    /// Weights each bin by `(N/T) sum (dT_r^2 + 2 dT_r dT_{r+1})` instead of
    /// `3 G^N(T) / K`. Agrees with `Histogram` for equidistant refresh times
    /// and removes its bias of `-2 T integral (G' - 1)(rho sigma sigma)^2`
    /// when refresh intervals vary in length.
    LagCorrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct AvarConfig {
    pub bins: BinRule,
    pub anchor: BinAnchor,
    pub method: AvarMethod,
}

/// One (possibly merged) histogram bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvarBin {
    pub start: f64,
    pub end: f64,
    /// Hayashi-Yoshida estimate restricted to the bin.
    pub hy: f64,
    /// Number of equispaced `G` cells the bin covers after merging.
    pub cells: usize,
    /// `sum (dT_r^2 + 2 dT_r dT_{r+1})` over the bin's intervals.
    pub lag_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvarEstimate {
    /// Estimate under the configured method.
    pub avar: f64,
    pub avar_histogram: f64,
    pub avar_lag_corrected: f64,
    pub k_bins: usize,
    /// Histogram estimate of `integral (rho sigma sigma)^2 G'(t) dt`.
    pub i1: f64,
    pub bins: Vec<AvarBin>,
}

/// Bin boundaries: `b_0 = T_0`, `b_K = T_N`, and `b_j` the first refresh
/// time at which `G^N` reaches `j G^N(T) / K`.
fn bin_boundaries(refresh: &[f64], k: usize) -> Vec<f64> {
    let mut g = Vec::with_capacity(refresh.len());
    let mut acc = NeumaierSum::new();
    g.push(0.0);
    for w in refresh.windows(2) {
        acc.add((w[1] - w[0]).powi(2));
        g.push(acc.value());
    }
    let total = *g.last().unwrap();
    let mut b = Vec::with_capacity(k + 1);
    b.push(refresh[0]);
    for j in 1..k {
        let level = total * j as f64 / k as f64;
        let idx = g.partition_point(|&v| v < level).min(refresh.len() - 1);
        b.push(refresh[idx]);
    }
    b.push(*refresh.last().unwrap());
    b
}

pub fn avar_estimate(grid: &SyncGrid, x_values: &[f64], y_values: &[f64], cfg: &AvarConfig) -> Result<AvarEstimate> {
    let n = grid.n_intervals();
    let k = cfg.bins.bins(n);
    if k == 0 {
        return Err(Error::InvalidParameter {
            name: "bins",
            reason: "must be positive".into(),
        });
    }
    if n < 2 * k {
        return Err(Error::TooManyBins {
            bins: k,
            needed: 2 * k,
            available: n,
            suggested: (n / 2).max(1),
        });
    }
    let p = hy_addends(grid, x_values, y_values);
    let refresh = grid.refresh_times();
    let boundaries = bin_boundaries(&refresh, k);

    let mut cell_hy = vec![NeumaierSum::new(); k];
    let mut cell_weight = vec![NeumaierSum::new(); k];
    let mut cell_count = vec![0usize; k];
    for (r, &pr) in p.iter().enumerate() {
        let dt = refresh[r + 1] - refresh[r];
        let dt_next = refresh.get(r + 2).map_or(0.0, |t| t - refresh[r + 1]);
        let anchor = match cfg.anchor {
            BinAnchor::Right => refresh[r + 1],
            BinAnchor::Left => refresh[r],
        };
        let j = boundaries[1..k].partition_point(|&b| b <= anchor);
        cell_hy[j].add(pr);
        cell_weight[j].add(dt * (dt + 2.0 * dt_next));
        cell_count[j] += 1;
    }

    // Empty or zero-width cells are merged forward; a trailing run joins the
    // last bin.
    let mut bins: Vec<AvarBin> = Vec::with_capacity(k);
    let mut pending = 0usize;
    let mut pending_steps = 0usize;
    let mut pending_hy = NeumaierSum::new();
    let mut pending_weight = NeumaierSum::new();
    let mut start = boundaries[0];
    for j in 0..k {
        pending += 1;
        pending_steps += cell_count[j];
        pending_hy.add(cell_hy[j].value());
        pending_weight.add(cell_weight[j].value());
        let end = boundaries[j + 1];
        if pending_steps == 0 || end <= start {
            continue;
        }
        bins.push(AvarBin {
            start,
            end,
            hy: pending_hy.value(),
            cells: pending,
            lag_weight: pending_weight.value(),
        });
        pending = 0;
        pending_steps = 0;
        pending_hy = NeumaierSum::new();
        pending_weight = NeumaierSum::new();
        start = end;
    }
    if pending > 0 {
        let last = bins.last_mut().expect("refresh times span a positive interval");
        last.end = boundaries[k];
        last.hy += pending_hy.value();
        last.cells += pending;
        last.lag_weight += pending_weight.value();
    }

    let g_total = n as f64 / grid.horizon
        * refresh
            .windows(2)
            .map(|w| (w[1] - w[0]).powi(2))
            .collect::<NeumaierSum>()
            .value();
    let cell_mass = g_total / k as f64;
    let i1 = bins
        .iter()
        .map(|b| (b.hy / (b.end - b.start)).powi(2) * b.cells as f64 * cell_mass)
        .collect::<NeumaierSum>()
        .value();

    let lag = p
        .windows(2)
        .map(|w| w[0] * (w[0] + 2.0 * w[1]))
        .collect::<NeumaierSum>()
        .value();
    let lag_term = bins
        .iter()
        .map(|b| (b.hy / (b.end - b.start)).powi(2) * b.lag_weight)
        .collect::<NeumaierSum>()
        .value();
    let avar_histogram = n as f64 * lag - 3.0 * grid.horizon * i1;
    let avar_lag_corrected = n as f64 * (lag - lag_term);
    let avar = match cfg.method {
        AvarMethod::Histogram => avar_histogram,
        AvarMethod::LagCorrected => avar_lag_corrected,
    };
    Ok(AvarEstimate {
        avar,
        avar_histogram,
        avar_lag_corrected,
        k_bins: k,
        i1,
        bins,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub low: f64,
    pub high: f64,
    pub level: f64,
    /// The variance estimate was negative and a floor was used instead.
    pub floored: bool,
}

impl ConfidenceInterval {
    pub fn contains(&self, value: f64) -> bool {
        self.low <= value && value <= self.high
    }
}

/// Relative floor applied to a negative variance estimate, in units of `hy^2`.
pub const AVAR_FLOOR: f64 = 1e-12;

/// `hy +- z * sqrt(avar / N)` with `z` the `(1 + level) / 2` normal quantile.
pub fn feasible_ci(hy: f64, avar_hat: f64, n_sync: usize, level: f64) -> Result<ConfidenceInterval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter {
            name: "level",
            reason: format!("must lie in (0, 1), got {level}"),
        });
    }
    if n_sync == 0 {
        return Err(Error::TooFewIntervals { needed: 1, available: 0 });
    }
    let floored = avar_hat < 0.0;
    let v = if floored { AVAR_FLOOR * hy * hy } else { avar_hat };
    let half = normal_quantile(0.5 * (1.0 + level)) * (v / n_sync as f64).sqrt();
    Ok(ConfidenceInterval {
        low: hy - half,
        high: hy + half,
        level,
        floored,
    })
}

/// `sqrt(N) (hy - truth) / sqrt(avar)`, or `None` when the variance estimate
/// is not positive.
pub fn studentize(hy: f64, truth: f64, avar_hat: f64, n_sync: usize) -> Option<f64> {
    (avar_hat > 0.0).then(|| (n_sync as f64).sqrt() * (hy - truth) / avar_hat.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateOptions {
    pub level: f64,
    pub avar: AvarConfig,
    pub slope_fit: SlopeFit,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            level: 0.95,
            avar: AvarConfig::default(),
            slope_fit: SlopeFit::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub hy: f64,
    pub n_sync: usize,
    pub avar_hat: f64,
    pub k_bins: usize,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub avar_floored: bool,
    /// Only available when the true covariation is known.
    pub studentized: Option<f64>,
    /// `None` when the grid is too short to fit slopes.
    pub qcv_slopes: Option<QcvSlopes>,
    pub regularity: GridRegularity,
    pub tail: TailDiagnostics,
}

/// Point estimate, variance estimate and confidence interval in one pass.
pub fn estimate(
    pair: &SchemePair,
    x_values: &[f64],
    y_values: &[f64],
    truth: Option<f64>,
    opts: &EstimateOptions,
) -> Result<EstimateReport> {
    let hy = crate::estimators::hy_estimate(pair, x_values, y_values)?;
    let grid = build_sync_grid(pair)?;
    let n = grid.n_intervals();
    let av = avar_estimate(&grid, x_values, y_values, &opts.avar)?;
    let ci = feasible_ci(hy, av.avar, n, opts.level)?;
    let qcv = qcv_curves(&grid).and_then(|c| qcv_slopes(&c, opts.slope_fit)).ok();
    Ok(EstimateReport {
        hy,
        n_sync: n,
        avar_hat: av.avar,
        k_bins: av.k_bins,
        ci_low: ci.low,
        ci_high: ci.high,
        level: opts.level,
        avar_floored: ci.floored,
        studentized: truth.and_then(|t| studentize(hy, t, av.avar, n)),
        qcv_slopes: qcv,
        regularity: grid_regularity(pair)?,
        tail: grid.tail,
    })
}
