use std::hash::{DefaultHasher, Hash, Hasher};
use std::path::Path;

use chrono::{NaiveDateTime, Timelike};

use crate::error::{contract, Error, Result};
use crate::training::PhaseClock;

/// A multivariate series sampled `samples_per_hour` times per hour.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesFrame {
    pub name: String,
    pub timestamps: Option<Vec<NaiveDateTime>>,
    /// One vector per variable, all of equal length.
    pub columns: Vec<Vec<f64>>,
    pub samples_per_hour: usize,
    pub variable_names: Vec<String>,
}

impl SeriesFrame {
    /// Frame without timestamps. Variables are named `v0`, `v1`, ...
    pub fn from_columns(name: impl Into<String>, samples_per_hour: usize, columns: Vec<Vec<f64>>) -> Result<Self> {
        let variable_names = (0..columns.len()).map(|k| format!("v{k}")).collect();
        let frame = SeriesFrame {
            name: name.into(),
            timestamps: None,
            columns,
            samples_per_hour,
            variable_names,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<()> {
        contract!(self.samples_per_hour >= 1, "samples per hour must be >= 1");
        contract!(!self.columns.is_empty(), "frame has no variables");
        contract!(
            self.variable_names.len() == self.columns.len(),
            "{} names for {} variables",
            self.variable_names.len(),
            self.columns.len()
        );
        let len = self.len();
        contract!(self.columns.iter().all(|c| c.len() == len), "columns differ in length");
        if let Some(ts) = &self.timestamps {
            contract!(ts.len() == len, "{} timestamps for {len} rows", ts.len());
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn period(&self) -> usize {
        24 * self.samples_per_hour
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.variable_names
            .iter()
            .position(|n| n == name)
            .map(|k| self.columns[k].as_slice())
    }

    /// Clock whose offset 0 is midnight. Without timestamps the first row is
    /// taken to be midnight.
    pub fn clock(&self) -> PhaseClock {
        let base_offset = self.timestamps.as_ref().and_then(|ts| ts.first()).map_or(0, |t| {
            let minutes = t.hour() as usize * 60 + t.minute() as usize;
            minutes * self.samples_per_hour / 60
        });
        PhaseClock {
            base_offset: base_offset % self.period(),
            period: self.period(),
        }
    }

    /// Content hash over names, timestamps and value bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.name.hash(&mut h);
        self.samples_per_hour.hash(&mut h);
        self.variable_names.hash(&mut h);
        self.timestamps.hash(&mut h);
        for c in &self.columns {
            for v in c {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    /// Writes the frame as CSV with a header; timestamps first if present.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        let mut header = Vec::with_capacity(self.dim() + 1);
        if self.timestamps.is_some() {
            header.push("timestamp".to_string());
        }
        header.extend(self.variable_names.iter().cloned());
        w.write_record(&header)?;
        for row in 0..self.len() {
            let mut rec = Vec::with_capacity(header.len());
            if let Some(ts) = &self.timestamps {
                rec.push(ts[row].format("%Y-%m-%dT%H:%M:%S").to_string());
            }
            rec.extend(self.columns.iter().map(|c| c[row].to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Writes `(header, rows)` as CSV.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
