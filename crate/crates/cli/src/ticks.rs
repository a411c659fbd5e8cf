//! Tick-file ingestion.
//!
//! Two layouts are accepted: one file per process with header `time,value`,
//! or a single file with header `time,value,series` where `series` is `X` or
//! `Y`. Times are decimal seconds or ISO-8601 timestamps; timestamps are
//! converted to seconds from the earliest tick across both series.

use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime};
use hycov::Process;

#[derive(Debug, thiserror::Error)]
pub enum TickError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Line {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
}

/// Parsed time stamp before conversion to seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Stamp {
    Seconds(f64),
    /// Nanoseconds since the Unix epoch.
    Instant(i64),
}

#[derive(Debug, Clone)]
struct RawSeries {
    stamps: Vec<(Stamp, u64)>,
    values: Vec<f64>,
}

/// Times and values of one process.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickData {
    pub x: Series,
    pub y: Series,
    /// Set when the input used timestamps: the epoch offset of time zero.
    pub origin: Option<String>,
}

impl TickData {
    /// Latest observation time over both series.
    pub fn last_time(&self) -> f64 {
        let last = |s: &Series| s.times.last().copied().unwrap_or(0.0);
        last(&self.x).max(last(&self.y))
    }
}

fn parse_stamp(s: &str) -> Option<Stamp> {
    if let Ok(v) = s.parse::<f64>() {
        return Some(Stamp::Seconds(v));
    }
    let nanos = |dt: NaiveDateTime| dt.and_utc().timestamp_nanos_opt();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return dt.timestamp_nanos_opt().map(Stamp::Instant);
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return nanos(dt).map(Stamp::Instant);
        }
    }
    None
}

/// Lower-cased header and `(line, record)` rows.
type Rows = (Vec<String>, Vec<(u64, csv::StringRecord)>);

fn read_rows(path: &Path) -> Result<Rows, TickError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        rows.push((line, record));
    }
    Ok((header, rows))
}

fn csv_error(path: &Path, e: csv::Error) -> TickError {
    let line = e.position().map(|p| p.line());
    match (e.into_kind(), line) {
        (csv::ErrorKind::Io(source), _) => TickError::Io {
            path: path.to_path_buf(),
            source,
        },
        (kind, Some(line)) => TickError::Line {
            path: path.to_path_buf(),
            line,
            message: format!("{kind:?}"),
        },
        (kind, None) => TickError::File {
            path: path.to_path_buf(),
            message: format!("{kind:?}"),
        },
    }
}

fn column(path: &Path, header: &[String], name: &str) -> Result<usize, TickError> {
    header.iter().position(|h| h == name).ok_or_else(|| TickError::File {
        path: path.to_path_buf(),
        message: format!("missing `{name}` column (header is `{}`)", header.join(",")),
    })
}

fn parse_row(path: &Path, line: u64, record: &csv::StringRecord, tcol: usize, vcol: usize) -> Result<(Stamp, f64), TickError> {
    let bad = |message: String| TickError::Line {
        path: path.to_path_buf(),
        line,
        message,
    };
    let field = |i: usize| record.get(i).ok_or_else(|| bad(format!("expected at least {} fields", i + 1)));
    let t = field(tcol)?;
    let stamp = parse_stamp(t).ok_or_else(|| bad(format!("cannot parse time `{t}`")))?;
    if let Stamp::Seconds(s) = stamp {
        if !s.is_finite() {
            return Err(bad(format!("non-finite time `{t}`")));
        }
    }
    let v = field(vcol)?;
    let value: f64 = v.parse().map_err(|_| bad(format!("cannot parse value `{v}`")))?;
    if !value.is_finite() {
        return Err(bad(format!("non-finite value `{v}`")));
    }
    Ok((stamp, value))
}

fn read_series_file(path: &Path) -> Result<RawSeries, TickError> {
    let (header, rows) = read_rows(path)?;
    let (tcol, vcol) = (column(path, &header, "time")?, column(path, &header, "value")?);
    let mut raw = RawSeries {
        stamps: Vec::with_capacity(rows.len()),
        values: Vec::with_capacity(rows.len()),
    };
    for (line, record) in &rows {
        let (stamp, value) = parse_row(path, *line, record, tcol, vcol)?;
        raw.stamps.push((stamp, *line));
        raw.values.push(value);
    }
    Ok(raw)
}

fn read_combined_file(path: &Path) -> Result<(RawSeries, RawSeries), TickError> {
    let (header, rows) = read_rows(path)?;
    let tcol = column(path, &header, "time")?;
    let vcol = column(path, &header, "value")?;
    let scol = column(path, &header, "series")?;
    let empty = || RawSeries {
        stamps: Vec::new(),
        values: Vec::new(),
    };
    let (mut x, mut y) = (empty(), empty());
    for (line, record) in &rows {
        let (stamp, value) = parse_row(path, *line, record, tcol, vcol)?;
        let target = match record.get(scol).unwrap_or("") {
            "X" | "x" => &mut x,
            "Y" | "y" => &mut y,
            other => {
                return Err(TickError::Line {
                    path: path.to_path_buf(),
                    line: *line,
                    message: format!("series must be X or Y, got `{other}`"),
                })
            }
        };
        target.stamps.push((stamp, *line));
        target.values.push(value);
    }
    Ok((x, y))
}

/// Converts stamps to seconds and checks ordering per series.
fn finish(path_x: &Path, path_y: &Path, x: RawSeries, y: RawSeries) -> Result<TickData, TickError> {
    let all = x.stamps.iter().chain(&y.stamps);
    let instants = all.clone().filter(|(s, _)| matches!(s, Stamp::Instant(_))).count();
    let total = x.stamps.len() + y.stamps.len();
    if instants != 0 && instants != total {
        return Err(TickError::File {
            path: path_x.to_path_buf(),
            message: "times mix decimal seconds and timestamps".into(),
        });
    }
    let origin = all
        .filter_map(|(s, _)| match s {
            Stamp::Instant(n) => Some(*n),
            Stamp::Seconds(_) => None,
        })
        .min();
    let convert = |path: &Path, process: Process, raw: RawSeries| -> Result<Series, TickError> {
        if raw.stamps.len() < 2 {
            return Err(TickError::File {
                path: path.to_path_buf(),
                message: format!("series {process} has {} ticks, at least 2 are needed", raw.stamps.len()),
            });
        }
        let mut times = Vec::with_capacity(raw.stamps.len());
        for (k, (stamp, line)) in raw.stamps.iter().enumerate() {
            let t = match (*stamp, origin) {
                (Stamp::Seconds(s), _) => s,
                (Stamp::Instant(n), Some(o)) => (n - o) as f64 * 1e-9,
                (Stamp::Instant(_), None) => unreachable!("origin exists whenever timestamps do"),
            };
            if t < 0.0 {
                return Err(TickError::Line {
                    path: path.to_path_buf(),
                    line: *line,
                    message: format!("negative time {t}"),
                });
            }
            if k > 0 && t <= times[k - 1] {
                let what = if t == times[k - 1] { "duplicate" } else { "decreasing" };
                return Err(TickError::Line {
                    path: path.to_path_buf(),
                    line: *line,
                    message: format!("{what} time in series {process}: {t} after {}", times[k - 1]),
                });
            }
            times.push(t);
        }
        Ok(Series {
            times,
            values: raw.values,
        })
    };
    Ok(TickData {
        x: convert(path_x, Process::X, x)?,
        y: convert(path_y, Process::Y, y)?,
        origin: origin.map(|n| DateTime::from_timestamp_nanos(n).to_rfc3339()),
    })
}

pub fn read_pair(path_x: &Path, path_y: &Path) -> Result<TickData, TickError> {
    let x = read_series_file(path_x)?;
    let y = read_series_file(path_y)?;
    finish(path_x, path_y, x, y)
}

pub fn read_combined(path: &Path) -> Result<TickData, TickError> {
    let (x, y) = read_combined_file(path)?;
    finish(path, path, x, y)
}

/// Writes `time,value` with 17 significant digits, enough to read back the
/// same bits.
pub fn write_series(path: &Path, times: &[f64], values: &[f64]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["time", "value"])?;
    for (t, v) in times.iter().zip(values) {
        w.write_record([format!("{t:.16e}"), format!("{v:.16e}")])?;
    }
    w.flush()
}
