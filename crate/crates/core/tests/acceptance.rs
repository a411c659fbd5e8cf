//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use hycov::estimators::{hy_bruteforce, hy_estimate, hy_terms, refresh_previous_tick_terms, IncrementProduct};
use hycov::mc::{
    epps_study, qcv_slope_study, run_replications, summarize, McStudySpec, McSummary, MeanSe,
};
use hycov::numeric::derive_seed;
use hycov::sampling::{expected_scheme_stats, generate, SchemePair, SchemeSpec};
use hycov::simulate::{CoefficientPiece, CoefficientSpec};
use hycov::sync::{build_sync_grid, interpolation_offsets, validate_partition};
use hycov::timescales::{poisson_qcv_limits, qcv_curves, qcv_slopes, SlopeFit};

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn report(o: &Outcome) {
    println!(
        "criterion {:>2} {:<28} {}  [{:.2?}]  {}",
        o.id,
        o.name,
        if o.pass { "PASS" } else { "FAIL" },
        o.elapsed,
        o.detail
    );
}

fn timed(id: u32, name: &'static str, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (pass, detail) = f();
    Outcome {
        id,
        name,
        pass,
        detail,
        elapsed: start.elapsed(),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

// Worked example of the joint grid construction, as printed.
const PRINTED_SETS: &str = r"\mathcal{H}^0=\{t_0\},\mathcal{G}^0=\{\tau_0\},
\mathcal{H}^1=\{t_1,t_2,t_3\},\mathcal{G}^1=\{\tau_1\},
\mathcal{H}^2=\{t_3\},\mathcal{G}^2=\{\tau_2,\tau_3\},
\mathcal{H}^3=\{t_4,t_5,t_6\},\mathcal{G}^3=\{\tau_4\},
\mathcal{H}^4=\{t_6,t_7\},\mathcal{G}^4=\{\tau_5\},
\mathcal{H}^5=\{t_7,t_8\},\mathcal{G}^5=\{\tau_6\},
\mathcal{H}^6=\{t_8\},\mathcal{G}^6=\{\tau_7,\tau_8\},
\mathcal{H}^7=\{t_9\},\mathcal{G}^7=\{\tau_8,\tau_9\},
\mathcal{H}^8=\{t_{10}\},\mathcal{G}^8=\{\tau_9,\tau_{10}\}";

const PRINTED_PREVIOUS_TICK: &str = r"(X_{t_2}-X_{t_0})(Y_{\tau_1}-Y_{\tau_0})+(X_{t_3}-X_{t_2})(Y_{\tau_3}-Y_{\tau_1})+(X_{t_5}-X_{t_3})(Y_{\tau_4}-Y_{\tau_3})+\\(X_{t_6}-X_{t_5})(Y_{\tau_5}-Y_{\tau_4})+(X_{t_7}-X_{t_6})(Y_{\tau_6}-Y_{\tau_5})+(X_{t_8}-X_{t_7})(Y_{\tau_7}-Y_{\tau_6})+\\(X_{t_9}-X_{t_8})(Y_{\tau_8}-Y_{\tau_7})+(X_{t_{10}}-X_{t_9})(Y_{\tau_{10}}-Y_{\tau_8})";

const PRINTED_HY: &str = r"(X_{t_3}-X_{t_0})(Y_{\tau_1}-Y_{\tau_0})+(X_{t_3}-X_{t_2})(Y_{\tau_3}-Y_{\tau_1})+(X_{t_6}-X_{t_3})(Y_{\tau_4}-Y_{\tau_3})+\\(X_{t_7}-X_{t_5})(Y_{\tau_5}-Y_{\tau_4})+(X_{t_8}-X_{t_6})(Y_{\tau_6}-Y_{\tau_5})+(X_{t_8}-X_{t_7})(Y_{\tau_8}-Y_{\tau_6})+\\(X_{t_9}-X_{t_8})(Y_{\tau_9}-Y_{\tau_7})+(X_{t_{10}}-X_{t_9})(Y_{\tau_{10}}-Y_{\tau_8})";

/// Indices following each `t_` / `\tau_` in order of appearance.
fn latex_indices(s: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut rest = s;
    while let Some(pos) = rest.find("_") {
        let before = &rest[..pos];
        rest = &rest[pos + 1..];
        if !(before.ends_with('t') || before.ends_with("tau")) {
            continue;
        }
        let digits: String = rest
            .trim_start_matches('{')
            .chars()
            .take_while(|c| c.is_ascii_digit())
            .collect();
        if let Ok(v) = digits.parse() {
            out.push(v);
        }
    }
    out
}

fn printed_terms(s: &str) -> Vec<IncrementProduct> {
    latex_indices(s)
        .chunks(4)
        .map(|c| IncrementProduct {
            x_hi: c[0],
            x_lo: c[1],
            y_hi: c[2],
            y_lo: c[3],
        })
        .collect()
}

/// `((q, mu), (r, w))` per set from the printed listing.
fn printed_sets() -> Vec<((usize, usize), (usize, usize))> {
    PRINTED_SETS
        .split("\\mathcal{H}^")
        .skip(1)
        .map(|chunk| {
            let (h, g) = chunk.split_once("\\mathcal{G}^").unwrap();
            let hi = latex_indices(h);
            let gi = latex_indices(g);
            (
                (*hi.first().unwrap(), *hi.last().unwrap()),
                (*gi.first().unwrap(), *gi.last().unwrap()),
            )
        })
        .collect()
}

fn worked_example() -> SchemePair {
    SchemePair::new(
        vec![0., 1., 2., 3., 4., 5., 6., 8., 9., 11., 13.],
        vec![0., 2.5, 2.7, 3., 5.5, 7., 8.5, 8.7, 10., 12., 13.],
        13.0,
    )
    .unwrap()
}

fn criterion_1() -> Outcome {
    let pair = worked_example();
    let expected_sets = printed_sets();
    let expected_hy: Vec<String> = printed_terms(PRINTED_HY).iter().map(|t| t.to_string()).collect();
    let expected_rpt: Vec<String> = printed_terms(PRINTED_PREVIOUS_TICK).iter().map(|t| t.to_string()).collect();
    let start = Instant::now();
    let grid = build_sync_grid(&pair).unwrap();
    let sets: Vec<_> = grid.steps.iter().map(|s| ((s.q, s.mu), (s.r, s.w))).collect();
    let hy: Vec<String> = hy_terms(&grid).iter().map(|t| t.to_string()).collect();
    let rpt: Vec<String> = refresh_previous_tick_terms(&pair, &grid).iter().map(|t| t.to_string()).collect();
    let elapsed = start.elapsed();
    let ok = sets == expected_sets && hy == expected_hy && rpt == expected_rpt && expected_sets.len() == 9;
    Outcome {
        id: 1,
        name: "joint grid worked example",
        pass: ok && elapsed < Duration::from_millis(1),
        detail: format!(
            "sets {}/9, HY terms {}/8, previous-tick terms {}/8, construction {:?} (< 1 ms)",
            sets.iter().zip(&expected_sets).filter(|(a, b)| a == b).count(),
            hy.iter().zip(&expected_hy).filter(|(a, b)| a == b).count(),
            rpt.iter().zip(&expected_rpt).filter(|(a, b)| a == b).count(),
            elapsed
        ),
        elapsed,
    }
}

const RANDOM_GRIDS: u64 = 10_000;

fn criteria_2_3() -> (Outcome, Outcome) {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut violations = 0usize;
    let mut grids = 0usize;
    for seed in 0..RANDOM_GRIDS {
        let mut rng = common::rng(derive_seed(2, seed));
        let pair = common::random_pair(&mut rng, 200, 1.0);
        let x = common::random_values(&mut rng, pair.times_x.len());
        let y = common::random_values(&mut rng, pair.times_y.len());
        let (Ok(a), Ok(b)) = (hy_estimate(&pair, &x, &y), hy_bruteforce(&pair, &x, &y)) else {
            continue;
        };
        grids += 1;
        let mag = common::overlap_magnitude(&pair, &x, &y).max(f64::MIN_POSITIVE);
        worst = worst.max((a - b).abs() / mag);
        violations += validate_partition(&build_sync_grid(&pair).unwrap()).len();
    }
    let elapsed = start.elapsed();
    (
        Outcome {
            id: 2,
            name: "dual-form identity",
            pass: worst <= 1e-12 && grids as u64 == RANDOM_GRIDS && elapsed < Duration::from_secs(30),
            detail: format!("{grids} grids, max |telescoping - double sum| / magnitude = {worst:.2e} (<= 1e-12)"),
            elapsed,
        },
        Outcome {
            id: 3,
            name: "partition identity",
            pass: violations == 0 && grids as u64 == RANDOM_GRIDS,
            detail: format!("{violations} violations over {grids} grids"),
            elapsed,
        },
    )
}

fn criterion_5() -> Outcome {
    timed(5, "Poisson slope limits", || {
        let mut ok = true;
        let mut parts = Vec::new();
        for (a, b) in [(1.0, 1.0), (1.0, 0.5)] {
            let s = qcv_slope_study(&SchemeSpec::poisson(a, b, 30_000, 1.0), 20, 5).unwrap();
            let lim = poisson_qcv_limits(a, b);
            let errs = [
                rel(s.g.mean, lim.g_slope),
                rel(s.f.mean, lim.f_slope),
                rel(s.h.mean, lim.h_slope),
            ];
            ok &= errs.iter().all(|&e| e < 0.03);
            parts.push(format!(
                "theta=({a},{b}): ({:.4}, {:.4}, {:.4}) vs ({:.4}, {:.4}, {:.4}), max rel err {:.2}%",
                s.g.mean,
                s.f.mean,
                s.h.mean,
                lim.g_slope,
                lim.f_slope,
                lim.h_slope,
                100.0 * errs.iter().cloned().fold(0.0, f64::max)
            ));
        }
        (ok, parts.join("; "))
    })
}

fn criterion_6() -> Outcome {
    timed(6, "intermeshed exactness", || {
        let mut worst = 0.0f64;
        for n in [50u64, 500, 5000] {
            let pair = generate(&SchemeSpec::intermeshed(n, 1.0), 0).unwrap();
            let s = qcv_slopes(&qcv_curves(&build_sync_grid(&pair).unwrap()).unwrap(), SlopeFit::GlobalFit).unwrap();
            worst = worst.max(rel(s.g_slope, 1.0)).max(rel(s.f_slope, 1.0)).max(rel(s.h_slope, 0.25));
        }
        let mut sync_zero = true;
        let mut g_slopes = Vec::new();
        for n in [10u64, 100, 1000] {
            let pair = generate(&SchemeSpec::equidistant(n, 1.0), 0).unwrap();
            let c = qcv_curves(&build_sync_grid(&pair).unwrap()).unwrap();
            sync_zero &= c.f_curve.iter().chain(&c.h_curve).all(|&v| v == 0.0);
            g_slopes.push(qcv_slopes(&c, SlopeFit::GlobalFit).unwrap().g_slope);
        }
        let g_ok = g_slopes.iter().all(|g| (g - 1.0).abs() < 1e-9);
        (
            worst < 1e-9 && sync_zero && g_ok,
            format!(
                "intermeshed max rel deviation from (1, 1, 1/4) = {worst:.1e}; synchronous F = H = 0: {sync_zero}; G slopes {g_slopes:.12?}"
            ),
        )
    })
}

fn poisson_spec(rho: f64, n: u64, m: usize, seed: u64) -> McStudySpec {
    McStudySpec::new(
        SchemeSpec::poisson(1.0, 1.0, n, 1.0),
        CoefficientSpec::constant(1.0, CoefficientPiece::new(1.0, 1.0, rho)),
        m,
        seed,
    )
}

struct CltRun {
    rho: f64,
    summary: McSummary,
    elapsed: Duration,
}

fn clt_run(rho: f64, seed: u64) -> CltRun {
    let start = Instant::now();
    let mut spec = poisson_spec(rho, 20_000, 2000, seed);
    spec.decomposition = true;
    let (reps, failures) = run_replications(&spec).unwrap();
    let summary = summarize(&spec, &reps, failures).unwrap();
    CltRun {
        rho,
        summary,
        elapsed: start.elapsed(),
    }
}

fn criterion_4(main: &CltRun) -> Outcome {
    timed(4, "decomposition identity", || {
        let d = main.summary.decomposition.unwrap();
        // A vanishes on synchronous schemes.
        let mut spec = McStudySpec::new(
            SchemeSpec::equidistant(2000, 1.0),
            CoefficientSpec::constant(1.0, CoefficientPiece::new(1.0, 1.0, 0.5)),
            50,
            4,
        );
        spec.decomposition = true;
        let (reps, _) = run_replications(&spec).unwrap();
        let a_zero = reps.iter().all(|r| r.a_term == Some(0.0));
        let sync_residual = reps.iter().filter_map(|r| r.identity_residual).fold(0.0, f64::max);
        let residual = d.max_identity_residual.max(sync_residual);
        let corr_ok = d.corr_d_a.abs() < 3.0 * d.corr_se;
        (
            residual <= 1e-12 && a_zero && corr_ok,
            format!(
                "max relative residual {residual:.2e} over {} paths; A = 0 on all synchronous paths: {a_zero}; corr(D, A) = {:.4} (3 SE = {:.4})",
                main.summary.replications + reps.len(),
                d.corr_d_a,
                3.0 * d.corr_se
            ),
        )
    })
}

fn criterion_7(runs: &[CltRun]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    let mut elapsed = Duration::ZERO;
    for r in runs {
        let v = r.summary.hy.scaled_error_variance;
        let th = r.summary.theoretical_avar.unwrap().total;
        let err = rel(v.variance, th);
        ok &= err < 0.05;
        elapsed += r.elapsed;
        parts.push(format!(
            "rho={}: Var = {:.4} +- {:.4} vs {:.4} ({:+.2}%)",
            r.rho,
            v.variance,
            v.se,
            th,
            100.0 * (v.variance - th) / th
        ));
    }
    Outcome {
        id: 7,
        name: "CLT variance",
        pass: ok && elapsed < Duration::from_secs(600),
        detail: parts.join("; "),
        elapsed,
    }
}

fn criterion_8(main: &CltRun) -> Outcome {
    let s = &main.summary;
    let c = s.coverage.mean;
    Outcome {
        id: 8,
        name: "feasible CI coverage",
        pass: (0.935..=0.965).contains(&c),
        detail: format!(
            "rho={}: 95% coverage {:.2}% +- {:.2}% (lag-corrected variance: {:.2}%); studentized mean {:.3}, variance {:.3}",
            main.rho,
            100.0 * c,
            100.0 * s.coverage.se,
            100.0 * s.coverage_lag_corrected.mean,
            s.studentized.mean,
            s.studentized.variance.variance
        ),
        elapsed: Duration::ZERO,
    }
}

fn criterion_9(runs: &[CltRun]) -> Outcome {
    let start = Instant::now();
    let spec = McStudySpec::new(
        SchemeSpec::equidistant(20_000, 1.0),
        CoefficientSpec::constant(1.0, CoefficientPiece::new(1.0, 1.0, 0.0)),
        500,
        9,
    );
    let (reps, failures) = run_replications(&spec).unwrap();
    let sync = summarize(&spec, &reps, failures).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    let mut check = |label: String, avar: MeanSe, lag: MeanSe, target: f64| {
        let err = rel(avar.mean, target);
        ok &= err < 0.10;
        parts.push(format!(
            "{label}: {:.4} +- {:.4} vs {:.4} ({:+.2}%; lag-corrected {:.4})",
            avar.mean,
            avar.se,
            target,
            100.0 * (avar.mean - target) / target,
            lag.mean
        ));
    };
    for r in runs {
        check(
            format!("Poisson rho={}", r.rho),
            r.summary.avar_hat,
            r.summary.avar_lag_corrected,
            r.summary.theoretical_avar.unwrap().total,
        );
    }
    check("synchronous rho=0".into(), sync.avar_hat, sync.avar_lag_corrected, 1.0);
    Outcome {
        id: 9,
        name: "AVAR consistency",
        pass: ok,
        detail: parts.join("; "),
        elapsed: start.elapsed(),
    }
}

fn criterion_10() -> Outcome {
    timed(10, "bias ordering", || {
        let mut spec = poisson_spec(0.7, 5000, 500, 10);
        spec.refresh_previous_tick = true;
        let (reps, failures) = run_replications(&spec).unwrap();
        let s = summarize(&spec, &reps, failures).unwrap();
        let rpt = s.refresh_previous_tick.unwrap().error;
        let hy = s.hy.error;
        (
            rpt.mean < -3.0 * rpt.se && hy.mean.abs() < 3.0 * hy.se,
            format!(
                "previous-tick error {:.5} (SE {:.5}); HY error {:.5} (SE {:.5})",
                rpt.mean, rpt.se, hy.mean, hy.se
            ),
        )
    })
}

fn criterion_11() -> Outcome {
    timed(11, "Epps attenuation", || {
        let spec = poisson_spec(0.7, 2000, 500, 11);
        let widths = [1.0, 1.0 / 50.0, 1.0 / 200.0, 1.0 / 1000.0, 1.0 / 4000.0];
        let curve = epps_study(&spec, &widths).unwrap();
        let coarse = curve.points[1].mean.mean;
        let fine = curve.points[4].mean.mean;
        let one_bin = curve.points[0].mean;
        let hy_flat = (curve.hy.mean - curve.truth).abs() < 3.0 * curve.hy.se;
        let one_bin_ok = (one_bin.mean - curve.truth).abs() < 3.0 * one_bin.se;
        let means: Vec<String> = curve.points.iter().map(|p| format!("{:.4}", p.mean.mean)).collect();
        (
            fine < 0.5 * coarse && hy_flat,
            format!(
                "means at h = T, T/50, T/200, T/1000, T/4000: [{}]; ratio T/4000 : T/50 = {:.3}; HY {:.4} +- {:.4} vs truth {}; h = T within 3 SE: {one_bin_ok}",
                means.join(", "),
                fine / coarse,
                curve.hy.mean,
                curve.hy.se,
                curve.truth
            ),
        )
    })
}

fn criterion_12() -> Outcome {
    timed(12, "scheme statistics", || {
        let (a, b, n) = (1.0, 0.5, 5000u64);
        let seeds = 50u64;
        let mut cols: [Vec<f64>; 5] = Default::default();
        for seed in 0..seeds {
            let pair = generate(&SchemeSpec::poisson(a, b, n, 1.0), derive_seed(12, seed)).unwrap();
            let off = interpolation_offsets(&build_sync_grid(&pair).unwrap());
            // Drop the edge steps, whose law differs from the stationary one.
            let inner = &off[1..off.len() - 1];
            let m = inner.len() as f64;
            cols[0].push(inner.iter().map(|o| o.dt).sum::<f64>() / m);
            cols[1].push(inner.iter().map(|o| o.next_x).sum::<f64>() / m);
            cols[2].push(inner.iter().map(|o| o.next_y).sum::<f64>() / m);
            // Previous-tick offsets of step i + 1 refer to T_i.
            cols[3].push(inner.iter().map(|o| o.prev_x).sum::<f64>() / m);
            cols[4].push(inner.iter().map(|o| o.prev_y).sum::<f64>() / m);
        }
        let e = expected_scheme_stats(a, b, n as f64);
        let expected = [e.e_dt, e.e_next_x, e.e_next_y, e.e_prev_x, e.e_prev_y];
        let names = ["dT", "g-T", "gamma-T", "T-l", "T-lambda"];
        let mut ok = true;
        let mut parts = Vec::new();
        for k in 0..5 {
            let m = MeanSe::of(&cols[k]);
            let z = (m.mean - expected[k]) / m.se;
            ok &= z.abs() < 3.0;
            parts.push(format!("{} z={:+.2}", names[k], z));
        }
        (ok, format!("theta=({a},{b}), n={n}, {seeds} schemes: {}", parts.join(", ")))
    })
}

fn main() {
    println!("acceptance suite");
    let mut outcomes = vec![criterion_1()];
    let (c2, c3) = criteria_2_3();
    outcomes.push(c2);
    outcomes.push(c3);
    for o in &outcomes {
        report(o);
    }

    let runs = vec![clt_run(0.5, 1), clt_run(0.0, 2)];
    let later = vec![
        criterion_4(&runs[0]),
        criterion_5(),
        criterion_6(),
        criterion_7(&runs),
        criterion_8(&runs[0]),
        criterion_9(&runs),
        criterion_10(),
        criterion_11(),
        criterion_12(),
    ];
    for o in &later {
        report(o);
    }
    outcomes.extend(later);

    println!();
    println!("general limit variance vs Poisson closed form:");
    let mut supports_theorem = true;
    for r in &runs {
        let v = r.summary.hy.scaled_error_variance;
        let th = r.summary.theoretical_avar.unwrap().total;
        let co = r.summary.poisson_closed_form_avar.unwrap();
        let (zt, zc) = ((v.variance - th) / v.se, (v.variance - co) / v.se);
        supports_theorem &= zt.abs() < zc.abs();
        println!(
            "  rho={}: empirical {:.4} +- {:.4}; general {:.4} (z={:+.2}); closed form {:.4} (z={:+.2})",
            r.rho, v.variance, v.se, th, zt, co, zc
        );
    }
    println!(
        "  verdict: the data support the {} formula",
        if supports_theorem { "general limit" } else { "Poisson closed-form" }
    );

    let jb = &runs[0].summary.studentized;
    println!(
        "studentized errors (rho={}): skewness {:.3}, kurtosis {:.3}, Jarque-Bera p = {:.3}",
        runs[0].rho, jb.skewness, jb.kurtosis, jb.jarque_bera_p
    );
    let drift = {
        let mut spec = poisson_spec(0.5, 20_000, 500, 13);
        spec.coeffs.pieces[0] = spec.coeffs.pieces[0].with_drift(0.5, 0.5);
        hycov::mc::run_study(&spec).unwrap()
    };
    println!(
        "drift 0.5 robustness (M=500): Var = {:.4} +- {:.4} vs {:.4}",
        drift.hy.scaled_error_variance.variance,
        drift.hy.scaled_error_variance.se,
        drift.theoretical_avar.unwrap().total
    );

    let failed: Vec<u32> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    println!();
    if failed.is_empty() {
        println!("all {} criteria passed", outcomes.len());
    } else {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
