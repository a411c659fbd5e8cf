mod config;
mod ticks;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use hycov::estimators::{hy_terms, refresh_previous_tick_terms};
use hycov::inference::{estimate, EstimateOptions};
use hycov::mc::{run_replications, summarize, McStudySpec, Replication};
use hycov::numeric::derive_seed;
use hycov::sampling::{generate, SchemePair};
use hycov::simulate::simulate_paths;
use hycov::sync::{build_sync_grid, interpolation_offsets, validate_partition, SyncGrid};
use hycov::timescales::{qcv_curves, qcv_slopes, windowed_slopes, QcvCurves, SlopeFit, DEFAULT_WINDOW};

use crate::config::{describe_scheme, BinsSetting, RunConfig};
use crate::ticks::TickData;

/// User input that cannot be processed (exit code 1).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Invalid(pub String);

#[derive(Parser)]
#[command(name = "hycov", version, about = "Covariance estimation from asynchronous tick data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the joint grid of two tick series and dump it
    Sync(SyncArgs),
    /// Hayashi-Yoshida estimate with a feasible confidence interval
    Estimate(EstimateArgs),
    /// Simulate a sampling scheme and paths, writing tick files
    Simulate(SimulateArgs),
    /// Monte Carlo study of the estimators
    Mc(McArgs),
    /// Quadratic (co)variations of time of a grid
    Qcv(QcvArgs),
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Tick file of X (`time,value`)
    #[arg(long, requires = "y", conflicts_with = "input")]
    x: Option<PathBuf>,
    /// Tick file of Y (`time,value`)
    #[arg(long, requires = "x")]
    y: Option<PathBuf>,
    /// Single tick file with columns `time,value,series`
    #[arg(long)]
    input: Option<PathBuf>,
    /// End of the observation window, defaults to the last tick
    #[arg(long)]
    horizon: Option<f64>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct SyncArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Write into this directory instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Config file; only its [inference] section is used
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    level: Option<f64>,
    /// Variance bins: `auto` or a count
    #[arg(long)]
    bins: Option<BinsSetting>,
    /// Known true covariation, adds the studentized error to the report
    #[arg(long)]
    truth: Option<f64>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for x.csv, y.csv and run.json
    #[arg(long)]
    out: PathBuf,
    /// Also write ticks.csv with a series column
    #[arg(long)]
    combined: bool,
}

#[derive(Args)]
struct McArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    bins: Option<BinsSetting>,
    /// json: summary; csv: one row per replication
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Write summary.json, replications.csv and curve files here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct QcvArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Generate the grid from the [scheme] section instead of reading ticks
    #[arg(long, conflicts_with_all = ["x", "input"])]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// csv: the curves; json: curves with fitted slopes
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Output file instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Common header of every JSON document.
#[derive(Serialize)]
struct Envelope<C: Serialize, R: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: Option<u64>,
    config: C,
    result: R,
}

fn envelope<C: Serialize, R: Serialize>(command: &'static str, seed: Option<u64>, config: C, result: R) -> Envelope<C, R> {
    Envelope {
        tool: "hycov",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed,
        config,
        result,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Sync(a) => cmd_sync(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Mc(a) => cmd_mc(a),
        Command::Qcv(a) => cmd_qcv(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use hycov::Error as E;
    for cause in err.chain() {
        if cause.is::<Invalid>() || cause.is::<ticks::TickError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::ReplicationFailures { .. } | E::MissingGridTime { .. } => 2,
                _ => 1,
            };
        }
    }
    2
}

fn read_ticks(input: &InputArgs) -> Result<(TickData, SchemePair)> {
    let data = match (&input.x, &input.y, &input.input) {
        (Some(x), Some(y), None) => ticks::read_pair(x, y)?,
        (None, None, Some(f)) => ticks::read_combined(f)?,
        _ => return Err(Invalid("give either --x and --y, or --input".into()).into()),
    };
    let horizon = input.horizon.unwrap_or_else(|| data.last_time());
    if horizon < data.last_time() {
        return Err(Invalid(format!("--horizon {horizon} ends before the last tick at {}", data.last_time())).into());
    }
    let pair = SchemePair::new(data.x.times.clone(), data.y.times.clone(), horizon)?;
    Ok((data, pair))
}

#[derive(Serialize)]
struct InputEcho {
    x: Option<PathBuf>,
    y: Option<PathBuf>,
    input: Option<PathBuf>,
    horizon: f64,
    /// Timestamp of time zero when the input used ISO-8601 times.
    origin: Option<String>,
    ticks_x: usize,
    ticks_y: usize,
}

fn input_echo(input: &InputArgs, data: &TickData, pair: &SchemePair) -> InputEcho {
    InputEcho {
        x: input.x.clone(),
        y: input.y.clone(),
        input: input.input.clone(),
        horizon: pair.horizon,
        origin: data.origin.clone(),
        ticks_x: pair.times_x.len(),
        ticks_y: pair.times_y.len(),
    }
}

/// Writes `contents` to `dir/name`, or to stdout when no directory is given.
fn emit(out: Option<&Path>, name: &str, contents: &str) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(name);
            fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(contents.as_bytes())?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?)?)
}

#[derive(Serialize)]
struct SetDump {
    index: usize,
    /// `[q, mu]`: X observations `t_q..=t_mu`
    h: [usize; 2],
    /// `[r, w]`: Y observations `tau_r..=tau_w`
    g: [usize; 2],
    g_time: f64,
    l: f64,
    gamma: f64,
    lambda: f64,
    refresh: f64,
}

#[derive(Serialize)]
struct GridDump {
    n_sync: usize,
    sets: Vec<SetDump>,
    refresh_times: Vec<f64>,
    offsets: Vec<hycov::sync::InterpolationOffsets>,
    partition_violations: Vec<hycov::sync::PartitionViolation>,
    tail: hycov::sync::TailDiagnostics,
    hy_terms: Vec<String>,
    previous_tick_terms: Vec<String>,
}

fn grid_dump(pair: &SchemePair, grid: &SyncGrid) -> GridDump {
    GridDump {
        n_sync: grid.n_intervals(),
        sets: grid
            .steps
            .iter()
            .enumerate()
            .map(|(index, s)| SetDump {
                index,
                h: [s.q, s.mu],
                g: [s.r, s.w],
                g_time: s.g,
                l: s.l,
                gamma: s.gamma,
                lambda: s.lambda,
                refresh: s.refresh,
            })
            .collect(),
        refresh_times: grid.refresh_times(),
        offsets: interpolation_offsets(grid),
        partition_violations: validate_partition(grid),
        tail: grid.tail,
        hy_terms: hy_terms(grid).iter().map(|t| t.to_string()).collect(),
        previous_tick_terms: refresh_previous_tick_terms(pair, grid).iter().map(|t| t.to_string()).collect(),
    }
}

fn cmd_sync(args: SyncArgs) -> Result<()> {
    let (data, pair) = read_ticks(&args.input)?;
    let grid = build_sync_grid(&pair)?;
    let out = args.out.as_deref();
    match args.format {
        Format::Json => {
            let doc = envelope("sync", None, input_echo(&args.input, &data, &pair), grid_dump(&pair, &grid));
            emit(out, "grid.json", &to_json(&doc)?)
        }
        Format::Csv => {
            let header = ["index", "q", "mu", "r", "w", "g", "l", "gamma", "lambda", "refresh"];
            let rows = grid.steps.iter().enumerate().map(|(i, s)| {
                let mut row: Vec<String> = [i, s.q, s.mu, s.r, s.w].iter().map(|v| v.to_string()).collect();
                row.extend([s.g, s.l, s.gamma, s.lambda, s.refresh].map(num));
                row
            });
            emit(out, "grid.csv", &csv_table(&header, rows)?)
        }
    }
}

fn inference_section(config: Option<&Path>, level: Option<f64>, bins: Option<BinsSetting>) -> Result<config::InferenceSection> {
    let mut section = match config {
        Some(path) => RunConfig::load(path)?.inference,
        None => Default::default(),
    };
    if let Some(level) = level {
        section.level = level;
    }
    if let Some(bins) = bins {
        section.bins = bins;
    }
    if !(section.level > 0.0 && section.level < 1.0) {
        return Err(Invalid(format!("level must lie in (0, 1), got {}", section.level)).into());
    }
    Ok(section)
}

fn curves_csv(c: &QcvCurves) -> Result<String> {
    let rows = (0..c.len()).map(|k| {
        vec![
            num(c.eval_times[k]),
            num(c.g_curve[k]),
            num(c.f_curve[k]),
            num(c.h_curve[k]),
        ]
    });
    csv_table(&["time", "g", "f", "h"], rows)
}

fn cmd_estimate(args: EstimateArgs) -> Result<()> {
    let inference = inference_section(args.config.as_deref(), args.level, args.bins)?;
    let (data, pair) = read_ticks(&args.input)?;
    let opts = EstimateOptions {
        level: inference.level,
        avar: inference.avar(),
        slope_fit: SlopeFit::GlobalFit,
    };
    let report = estimate(&pair, &data.x.values, &data.y.values, args.truth, &opts)?;
    let out = args.out.as_deref();
    if out.is_some() {
        if let Ok(curves) = qcv_curves(&build_sync_grid(&pair)?) {
            emit(out, "qcv.csv", &curves_csv(&curves)?)?;
        }
    }
    #[derive(Serialize)]
    struct Config {
        input: InputEcho,
        inference: config::InferenceSection,
        truth: Option<f64>,
    }
    let config = Config {
        input: input_echo(&args.input, &data, &pair),
        inference,
        truth: args.truth,
    };
    match args.format {
        Format::Json => emit(out, "report.json", &to_json(&envelope("estimate", None, config, &report))?),
        Format::Csv => {
            let header = ["hy", "n_sync", "avar_hat", "k_bins", "ci_low", "ci_high", "level", "avar_floored"];
            let row = vec![
                num(report.hy),
                report.n_sync.to_string(),
                num(report.avar_hat),
                report.k_bins.to_string(),
                num(report.ci_low),
                num(report.ci_high),
                num(report.level),
                report.avar_floored.to_string(),
            ];
            emit(out, "report.csv", &csv_table(&header, [row])?)
        }
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let cfg = RunConfig::load(&args.config)?;
    let scheme = cfg.scheme_spec()?;
    let coeffs = cfg.coefficient_spec(scheme.horizon)?;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    // same streams as replication 0 of an mc run with this seed
    let (scheme_seed, path_seed) = (derive_seed(seed, 0), derive_seed(seed, 1));
    let pair = generate(&scheme, scheme_seed)?;
    let bundle = simulate_paths(&pair, &coeffs, path_seed)?;
    let (x, y) = (bundle.observed_x(), bundle.observed_y());
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    ticks::write_series(&args.out.join("x.csv"), &pair.times_x, &x)?;
    ticks::write_series(&args.out.join("y.csv"), &pair.times_y, &y)?;
    if args.combined {
        let mut rows: Vec<(f64, f64, &str)> = pair.times_x.iter().zip(&x).map(|(t, v)| (*t, *v, "X")).collect();
        rows.extend(pair.times_y.iter().zip(&y).map(|(t, v)| (*t, *v, "Y")));
        rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(b.2)));
        let table = csv_table(
            &["time", "value", "series"],
            rows.into_iter().map(|(t, v, s)| vec![num(t), num(v), s.to_string()]),
        )?;
        emit(Some(&args.out), "ticks.csv", &table)?;
    }
    #[derive(Serialize)]
    struct Config {
        scheme: serde_json::Value,
        coefficients: hycov::simulate::CoefficientSpec,
        scheme_seed: u64,
        path_seed: u64,
    }
    #[derive(Serialize)]
    struct Result {
        ticks_x: usize,
        ticks_y: usize,
        true_covariation: f64,
    }
    let doc = envelope(
        "simulate",
        Some(seed),
        Config {
            scheme: describe_scheme(&scheme),
            coefficients: coeffs,
            scheme_seed,
            path_seed,
        },
        Result {
            ticks_x: x.len(),
            ticks_y: y.len(),
            true_covariation: bundle.true_qcov_total,
        },
    );
    emit(Some(&args.out), "run.json", &to_json(&doc)?)
}

fn replications_csv(reps: &[Replication], widths: &[f64]) -> Result<String> {
    let mut header: Vec<String> = [
        "index",
        "n_sync",
        "truth",
        "hy",
        "avar_hat",
        "covered",
        "avar_histogram",
        "avar_lag_corrected",
        "studentized",
        "refresh_previous_tick",
        "d_term",
        "a_term",
    ]
    .map(String::from)
    .to_vec();
    header.extend(widths.iter().map(|w| format!("fixed_grid_{w}")));
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    let rows = reps.iter().map(|r| {
        let mut row = vec![
            r.index.to_string(),
            r.n_sync.to_string(),
            num(r.truth),
            num(r.hy),
            num(r.avar_hat),
            r.covered.to_string(),
            num(r.avar_histogram),
            num(r.avar_lag_corrected),
            opt(r.studentized),
            opt(r.refresh_previous_tick),
            opt(r.d_term),
            opt(r.a_term),
        ];
        row.extend(r.fixed_grid.iter().copied().map(num));
        row
    });
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_table(&header, rows)
}

fn cmd_mc(args: McArgs) -> Result<()> {
    let cfg = RunConfig::load(&args.config)?;
    let scheme = cfg.scheme_spec()?;
    let coeffs = cfg.coefficient_spec(scheme.horizon)?;
    let inference = inference_section(None, args.level.or(Some(cfg.inference.level)), args.bins.or(Some(cfg.inference.bins)))?;
    let inference = config::InferenceSection {
        anchor: cfg.inference.anchor,
        method: cfg.inference.method,
        ..inference
    };
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let mut spec = McStudySpec::new(scheme, coeffs, args.replications.unwrap_or(cfg.mc.replications), seed);
    spec.level = inference.level;
    spec.avar = inference.avar();
    spec.refresh_previous_tick = cfg.mc.refresh_previous_tick;
    spec.fixed_grid_widths = cfg.mc.fixed_grid_widths.clone();
    spec.decomposition = cfg.mc.decomposition;
    spec.qcv_slopes = cfg.mc.qcv_slopes;
    spec.validate().map_err(|e| Invalid(format!("mc: {e}")))?;

    let (reps, failures) = run_replications(&spec)?;
    let summary = summarize(&spec, &reps, failures)?;
    let out = args.out.as_deref().or(cfg.output.dir.as_deref());

    #[derive(Serialize)]
    struct Config<'a> {
        scheme: serde_json::Value,
        coefficients: &'a hycov::simulate::CoefficientSpec,
        inference: config::InferenceSection,
        mc: &'a McStudySpec,
        /// (scheme, path) seeds of the first replication.
        first_replication_seeds: (u64, u64),
    }
    let config = Config {
        scheme: describe_scheme(&spec.scheme),
        coefficients: &spec.coeffs,
        inference,
        mc: &spec,
        first_replication_seeds: spec.replication_seeds(0),
    };
    let json = to_json(&envelope("mc", Some(seed), config, &summary))?;
    let table = replications_csv(&reps, &spec.fixed_grid_widths)?;
    if let Some(dir) = out {
        emit(Some(dir), "summary.json", &json)?;
        emit(Some(dir), "replications.csv", &table)?;
        let qq = summary.studentized.qq_points.iter().map(|(a, b)| vec![num(*a), num(*b)]);
        emit(Some(dir), "studentized_qq.csv", &csv_table(&["normal", "empirical"], qq)?)?;
        if !summary.fixed_grid.is_empty() {
            let rows = summary
                .fixed_grid
                .iter()
                .map(|f| vec![num(f.width), num(f.estimate.mean), num(f.estimate.se)]);
            emit(Some(dir), "epps.csv", &csv_table(&["width", "mean", "se"], rows)?)?;
        }
    }
    match args.format {
        Format::Json => emit(None, "", &json),
        Format::Csv => emit(None, "", &table),
    }
}

fn cmd_qcv(args: QcvArgs) -> Result<()> {
    #[derive(Serialize)]
    #[serde(untagged)]
    enum Source {
        Ticks(InputEcho),
        Scheme { scheme: serde_json::Value, scheme_seed: u64 },
    }
    let (source, seed, pair) = match &args.config {
        Some(path) => {
            let cfg = RunConfig::load(path)?;
            let scheme = cfg.scheme_spec()?;
            let seed = args.seed.or(cfg.seed).unwrap_or(0);
            let scheme_seed = derive_seed(seed, 0);
            let pair = generate(&scheme, scheme_seed)?;
            let source = Source::Scheme {
                scheme: describe_scheme(&scheme),
                scheme_seed,
            };
            (source, Some(seed), pair)
        }
        None => {
            let (data, pair) = read_ticks(&args.input)?;
            (Source::Ticks(input_echo(&args.input, &data, &pair)), None, pair)
        }
    };
    let curves = qcv_curves(&build_sync_grid(&pair)?)?;
    let write = |contents: &str| -> Result<()> {
        match &args.out {
            Some(path) => fs::write(path, contents).with_context(|| format!("writing {}", path.display())),
            None => emit(None, "", contents),
        }
    };
    match args.format {
        Format::Csv => write(&curves_csv(&curves)?),
        Format::Json => {
            #[derive(Serialize)]
            struct Result<'a> {
                slopes: hycov::timescales::QcvSlopes,
                slopes_through_origin: hycov::timescales::QcvSlopes,
                windows: Vec<hycov::timescales::WindowSlope>,
                curves: &'a QcvCurves,
            }
            let result = Result {
                slopes: qcv_slopes(&curves, SlopeFit::GlobalFit)?,
                slopes_through_origin: qcv_slopes(&curves, SlopeFit::ThroughOrigin)?,
                windows: windowed_slopes(&curves, DEFAULT_WINDOW).unwrap_or_default(),
                curves: &curves,
            };
            write(&to_json(&envelope("qcv", seed, source, result))?)
        }
    }
}
