use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, TimeDelta};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::frame::SeriesFrame;

/// What to do with missing cells and missing timestamps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FillPolicy {
    Reject,
    #[default]
    ForwardFill,
}

impl std::str::FromStr for FillPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reject" => Ok(FillPolicy::Reject),
            "ffill" | "forward-fill" => Ok(FillPolicy::ForwardFill),
            _ => Err(Error::Config(format!("unknown fill policy {s:?} (expected reject or ffill)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub has_header: bool,
    /// Zero-based column holding ISO-8601 timestamps.
    pub timestamp_column: Option<usize>,
    pub fill: FillPolicy,
    /// Sampling rate. Inferred from timestamps when `None`, else 1.
    pub samples_per_hour: Option<usize>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            delimiter: b',',
            has_header: true,
            timestamp_column: Some(0),
            fill: FillPolicy::ForwardFill,
            samples_per_hour: None,
        }
    }
}

fn ingest_err(row: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Ingest {
        row,
        column,
        message: message.into(),
    }
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.naive_local());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t);
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok().and_then(|d| d.and_hms_opt(0, 0, 0))
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim().to_ascii_lowercase().as_str(), "" | "na" | "nan" | "null")
}

/// Reads a numeric CSV. Rows and columns in errors are 1-based file positions.
pub fn load_csv(path: &Path, options: &CsvOptions) -> Result<SeriesFrame> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(options.has_header)
        .flexible(false)
        .from_reader(std::io::BufReader::new(file));

    let mut names: Option<Vec<String>> = None;
    if options.has_header {
        let header = reader.headers()?.clone();
        names = Some(
            header
                .iter()
                .enumerate()
                .filter(|&(k, _)| Some(k) != options.timestamp_column)
                .map(|(_, h)| h.trim().to_string())
                .collect(),
        );
    }

    let mut stamps = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    // file line of each accepted row, for diagnostics
    let mut lines = Vec::new();
    let mut ffilled = 0usize;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if columns.is_empty() {
            let n_vars = record.len() - usize::from(options.timestamp_column.is_some());
            if n_vars == 0 {
                return Err(ingest_err(line, 1, "no numeric columns"));
            }
            columns = vec![Vec::new(); n_vars];
        }
        let mut var = 0;
        for (k, cell) in record.iter().enumerate() {
            if Some(k) == options.timestamp_column {
                let t = parse_timestamp(cell)
                    .ok_or_else(|| ingest_err(line, k + 1, format!("unparseable timestamp {cell:?}")))?;
                stamps.push(t);
                continue;
            }
            let value = if is_missing(cell) {
                match (options.fill, columns[var].last()) {
                    (FillPolicy::ForwardFill, Some(&prev)) => {
                        ffilled += 1;
                        prev
                    }
                    (FillPolicy::ForwardFill, None) => {
                        return Err(ingest_err(line, k + 1, "missing value with nothing to forward-fill from"))
                    }
                    (FillPolicy::Reject, _) => return Err(ingest_err(line, k + 1, "missing value")),
                }
            } else {
                cell.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| ingest_err(line, k + 1, format!("unparseable number {cell:?}")))?
            };
            columns[var].push(value);
            var += 1;
        }
        lines.push(line);
    }
    if columns.is_empty() {
        return Err(Error::Config(format!("{}: no data rows", path.display())));
    }

    let ts_col = options.timestamp_column.map_or(0, |c| c + 1);
    let mut samples_per_hour = options.samples_per_hour.unwrap_or(1);
    let timestamps = if options.timestamp_column.is_some() {
        for w in 1..stamps.len() {
            if stamps[w] <= stamps[w - 1] {
                let what = if stamps[w] == stamps[w - 1] { "duplicate" } else { "decreasing" };
                return Err(ingest_err(lines[w], ts_col, format!("{what} timestamp {}", stamps[w])));
            }
        }
        if options.samples_per_hour.is_none() && stamps.len() >= 2 {
            let step = (stamps[1] - stamps[0]).num_seconds();
            if step <= 0 || 3600 % step != 0 {
                return Err(ingest_err(lines[1], ts_col, format!("spacing of {step} s does not divide an hour")));
            }
            samples_per_hour = (3600 / step) as usize;
        }
        let step = TimeDelta::seconds(3600 / samples_per_hour as i64);
        let (stamps, filled) = regularize(&stamps, &columns, &lines, step, options.fill, ts_col)?;
        if let Some(filled) = filled {
            columns = filled;
        }
        Some(stamps)
    } else {
        None
    };
    if ffilled > 0 {
        log::warn!("{}: forward-filled {ffilled} missing cells", path.display());
    }

    let variable_names = names.unwrap_or_else(|| (0..columns.len()).map(|k| format!("v{k}")).collect());
    let frame = SeriesFrame {
        name: path.file_stem().map_or_else(|| "series".into(), |s| s.to_string_lossy().into_owned()),
        timestamps,
        columns,
        samples_per_hour,
        variable_names,
    };
    frame.validate()?;
    Ok(frame)
}

type Regularized = (Vec<NaiveDateTime>, Option<Vec<Vec<f64>>>);

/// Checks constant spacing. Gaps of whole steps are forward-filled under
/// that policy; anything else is an error.
fn regularize(
    stamps: &[NaiveDateTime],
    columns: &[Vec<f64>],
    lines: &[usize],
    step: TimeDelta,
    fill: FillPolicy,
    ts_col: usize,
) -> Result<Regularized> {
    let step_s = step.num_seconds();
    let mut regular = true;
    for w in 1..stamps.len() {
        let gap = (stamps[w] - stamps[w - 1]).num_seconds();
        if gap == step_s {
            continue;
        }
        regular = false;
        if fill == FillPolicy::Reject || gap % step_s != 0 {
            return Err(ingest_err(
                lines[w],
                ts_col,
                format!("irregular spacing: {gap} s after {}, expected {step_s} s", stamps[w - 1]),
            ));
        }
    }
    if regular {
        return Ok((stamps.to_vec(), None));
    }
    let mut out_stamps = vec![stamps[0]];
    let mut out: Vec<Vec<f64>> = columns.iter().map(|c| vec![c[0]]).collect();
    let mut inserted = 0usize;
    for w in 1..stamps.len() {
        let mut t = stamps[w - 1] + step;
        while t < stamps[w] {
            out_stamps.push(t);
            for (o, c) in out.iter_mut().zip(columns) {
                o.push(c[w - 1]);
            }
            inserted += 1;
            t += step;
        }
        out_stamps.push(stamps[w]);
        for (o, c) in out.iter_mut().zip(columns) {
            o.push(c[w]);
        }
    }
    log::warn!("forward-filled {inserted} missing rows");
    Ok((out_stamps, Some(out)))
}
