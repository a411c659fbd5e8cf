//! Pseudo-aggregation of two asynchronous observation schemes into a joint
//! grid of index sets, and the refresh times that the grid induces.
//!
//! Step `i` groups the X times `t_q ..= t_mu` and the Y times
//! `tau_r ..= tau_w`. With `g = t_mu`, `l = t_{q-1}`, `gamma = tau_w` and
//! `lambda = tau_{r-1}` the Hayashi-Yoshida estimator becomes the plain sum
//! of `(X_g - X_l)(Y_gamma - Y_lambda)` over steps `1..=N`, and the refresh
//! time of step `i` is `T_i = min(g_i, gamma_i)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Process, Result};
use crate::sampling::SchemePair;

/// One aggregation step: the sets `H^i = {t_q, ..., t_mu}` and
/// `G^i = {tau_r, ..., tau_w}` with their boundary times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncStep {
    pub q: usize,
    pub mu: usize,
    pub r: usize,
    pub w: usize,
    /// Index of `l_i` in the X times (`q - 1`, or 0 on step 0).
    pub l_index: usize,
    /// Index of `lambda_i` in the Y times (`r - 1`, or 0 on step 0).
    pub lambda_index: usize,
    pub g: f64,
    pub l: f64,
    pub gamma: f64,
    pub lambda: f64,
    /// `T_i = min(g_i, gamma_i)`
    pub refresh: f64,
}

impl SyncStep {
    fn new(x: &[f64], y: &[f64], (q, mu): (usize, usize), (r, w): (usize, usize)) -> Self {
        let l_index = q.saturating_sub(1);
        let lambda_index = r.saturating_sub(1);
        let g = x[mu];
        let gamma = y[w];
        Self {
            q,
            mu,
            r,
            w,
            l_index,
            lambda_index,
            g,
            l: x[l_index],
            gamma,
            lambda: y[lambda_index],
            refresh: g.min(gamma),
        }
    }
}

/// Observations left outside the aggregated sets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TailDiagnostics {
    /// X observations after the last set.
    pub unpaired_x: usize,
    /// Y observations after the last set.
    pub unpaired_y: usize,
    /// The last set was closed by running out of observations of one
    /// process rather than by a matching time of the other one.
    pub truncated_final: bool,
}

/// The joint grid: `N + 1` aggregation steps, numbered from 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncGrid {
    pub steps: Vec<SyncStep>,
    pub horizon: f64,
    pub tail: TailDiagnostics,
}

impl SyncGrid {
    /// Number of synchronized intervals `N` (one less than the number of sets).
    pub fn n_intervals(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn n_sets(&self) -> usize {
        self.steps.len()
    }

    pub fn refresh_times(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.refresh).collect()
    }

    /// Steps `1..=N`, the ones that carry estimator addends.
    pub fn active_steps(&self) -> &[SyncStep] {
        &self.steps[1..]
    }
}

/// First index in `lo..times.len()` whose time is at least `target`.
fn first_at_least(times: &[f64], lo: usize, target: f64) -> Option<usize> {
    let offset = times[lo..].partition_point(|&t| t < target);
    let index = lo + offset;
    (index < times.len()).then_some(index)
}

/// Runs the aggregation over a validated pair of schemes.
///
/// Ties between X and Y times are detected by exact equality. When one
/// process runs out of observations while a set is still open, that final
/// set is closed at the last available observation: this keeps the
/// aggregated sum equal to the overlap double sum.
pub fn build_sync_grid(pair: &SchemePair) -> Result<SyncGrid> {
    pair.validate()?;
    let x = pair.times_x.as_slice();
    let y = pair.times_y.as_slice();
    for (process, times) in [(Process::X, x), (Process::Y, y)] {
        if times.len() < 2 {
            return Err(Error::TooFewObservations {
                process,
                count: times.len(),
                required: 2,
            });
        }
    }
    let n = x.len() - 1;
    let m = y.len() - 1;
    if x[n] < y[0] || y[m] < x[0] {
        return Err(Error::NoOverlap);
    }

    let mut steps = Vec::with_capacity(n.min(m) + 1);
    let mut tail = TailDiagnostics::default();

    // Step 0.
    let (mut q, mut r) = if x[0] < y[0] {
        let mu = first_at_least(x, 1, y[0]).ok_or(Error::NoOverlap)?;
        steps.push(SyncStep::new(x, y, (0, mu), (0, 0)));
        (if y[0] == x[mu] { mu + 1 } else { mu }, 1)
    } else if x[0] == y[0] {
        steps.push(SyncStep::new(x, y, (0, 0), (0, 0)));
        (1, 1)
    } else {
        let w = first_at_least(y, 1, x[0]).ok_or(Error::NoOverlap)?;
        steps.push(SyncStep::new(x, y, (0, 0), (0, w)));
        (1, if x[0] == y[w] { w + 1 } else { w })
    };

    while q <= n && r <= m {
        if x[q] < y[r] {
            match first_at_least(x, q + 1, y[r]) {
                Some(mu) => {
                    steps.push(SyncStep::new(x, y, (q, mu), (r, r)));
                    q = if y[r] == x[mu] { mu + 1 } else { mu };
                    r += 1;
                }
                None => {
                    steps.push(SyncStep::new(x, y, (q, n), (r, r)));
                    tail.truncated_final = true;
                    break;
                }
            }
        } else if x[q] == y[r] {
            steps.push(SyncStep::new(x, y, (q, q), (r, r)));
            q += 1;
            r += 1;
        } else {
            match first_at_least(y, r + 1, x[q]) {
                Some(w) => {
                    steps.push(SyncStep::new(x, y, (q, q), (r, w)));
                    r = if x[q] == y[w] { w + 1 } else { w };
                    q += 1;
                }
                None => {
                    steps.push(SyncStep::new(x, y, (q, q), (r, m)));
                    tail.truncated_final = true;
                    break;
                }
            }
        }
    }
    let last = steps.last().expect("step 0 is always emitted");
    tail.unpaired_x = n - last.mu;
    tail.unpaired_y = m - last.w;

    if steps.len() < 2 {
        return Err(Error::TooFewIntervals {
            needed: 1,
            available: 0,
        });
    }
    Ok(SyncGrid {
        steps,
        horizon: pair.horizon,
        tail,
    })
}

/// A broken structural property of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PartitionViolation {
    /// `min(g_i, gamma_i) != max(l_{i+1}, lambda_{i+1})`
    PartitionIdentity { step: usize, refresh: f64, next_left: f64 },
    /// `T_i <= T_{i-1}`
    NonIncreasingRefresh { step: usize },
    /// `q_i <= q_{i-1}` or `r_i <= r_{i-1}`
    RepeatedMinimum { step: usize },
    /// Neither `g_i` nor `gamma_i` equals `T_i`.
    RefreshNotObserved { step: usize },
}

/// Checks the partition identity, strictly increasing refresh times and
/// strictly increasing set minima. An empty result means the grid is sound.
pub fn validate_partition(grid: &SyncGrid) -> Vec<PartitionViolation> {
    let mut violations = Vec::new();
    let steps = &grid.steps;
    let n = steps.len() - 1;
    for (i, step) in steps.iter().enumerate() {
        if step.g != step.refresh && step.gamma != step.refresh {
            violations.push(PartitionViolation::RefreshNotObserved { step: i });
        }
        if i >= 1 {
            let prev = &steps[i - 1];
            if step.refresh <= prev.refresh {
                violations.push(PartitionViolation::NonIncreasingRefresh { step: i });
            }
            if step.q <= prev.q || step.r <= prev.r {
                violations.push(PartitionViolation::RepeatedMinimum { step: i });
            }
        }
        if (1..n).contains(&i) {
            let next_left = steps[i + 1].l.max(steps[i + 1].lambda);
            let refresh = step.g.min(step.gamma);
            if refresh != next_left {
                violations.push(PartitionViolation::PartitionIdentity {
                    step: i,
                    refresh,
                    next_left,
                });
            }
        }
    }
    violations
}

/// Next- and previous-tick interpolation offsets of step `i >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolationOffsets {
    /// `g_i - T_i`
    pub next_x: f64,
    /// `gamma_i - T_i`
    pub next_y: f64,
    /// `T_{i-1} - l_i`
    pub prev_x: f64,
    /// `T_{i-1} - lambda_i`
    pub prev_y: f64,
    /// `T_i - T_{i-1}`
    pub dt: f64,
}

/// Offsets for steps `1..=N` (entry `k` belongs to step `k + 1`).
pub fn interpolation_offsets(grid: &SyncGrid) -> Vec<InterpolationOffsets> {
    grid.steps
        .windows(2)
        .map(|w| {
            let (prev, cur) = (&w[0], &w[1]);
            InterpolationOffsets {
                next_x: cur.g - cur.refresh,
                next_y: cur.gamma - cur.refresh,
                prev_x: prev.refresh - cur.l,
                prev_y: prev.refresh - cur.lambda,
                dt: cur.refresh - prev.refresh,
            }
        })
        .collect()
}
