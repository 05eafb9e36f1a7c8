//! Configuration assembly and data loading shared by the subcommands.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use mssd::data::{load_csv, RunConfig, SeriesFrame};

use crate::Common;

/// A `KEY=VALUE` override with a dotted key path.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub path: Vec<String>,
    pub value: toml::Value,
}

pub fn parse_assignment(s: &str) -> std::result::Result<Assignment, String> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| format!("expected KEY=VALUE, got {s:?}"))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_owned).collect();
    if path.iter().any(String::is_empty) {
        return Err(format!("malformed key {key:?}"));
    }
    // Bare words are taken as strings so paths need no quoting.
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
    Ok(Assignment { path, value })
}

fn assign(config: &RunConfig, assignments: &[Assignment]) -> Result<RunConfig> {
    if assignments.is_empty() {
        return Ok(config.clone());
    }
    let mut root = toml::Table::try_from(config)?;
    for a in assignments {
        let (leaf, parents) = a.path.split_last().expect("non-empty path");
        let mut table = &mut root;
        for p in parents {
            table = table
                .entry(p.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| anyhow!("{} is not a section", a.path.join(".")))?;
        }
        table.insert(leaf.clone(), a.value.clone());
    }
    Ok(RunConfig::from_toml_str(&toml::to_string(&root)?)?)
}

/// Config file, then `--set` overrides, then named flags.
pub fn build_config(c: &Common) -> Result<RunConfig> {
    let mut config = match &c.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => {
            let mut d = RunConfig::default();
            d.apply_env()?;
            d
        }
    };
    config = assign(&config, &c.assignments)?;
    let d = &mut config.data;
    if c.data.is_some() {
        d.path.clone_from(&c.data);
    }
    if c.samples_per_hour.is_some() {
        d.samples_per_hour = c.samples_per_hour;
    }
    if let Some(v) = c.delimiter {
        d.delimiter = v;
    }
    if c.no_header {
        d.header = false;
    }
    if let Some(v) = c.timestamp_column {
        d.timestamp_column = v;
    }
    if let Some(v) = &c.fill {
        d.fill = v.parse()?;
    }
    let m = &mut config.model;
    m.input_len = c.input_len.unwrap_or(m.input_len);
    m.horizon = c.horizon.unwrap_or(m.horizon);
    let t = &mut config.train;
    t.epochs = c.epochs.unwrap_or(t.epochs);
    t.batch_size = c.batch_size.unwrap_or(t.batch_size);
    t.lr = c.lr.unwrap_or(t.lr);
    t.patience = c.patience.unwrap_or(t.patience);
    t.stride = c.stride.unwrap_or(t.stride);
    t.seed = c.seed.unwrap_or(t.seed);
    if let Some(o) = &c.out {
        config.output_dir.clone_from(o);
    }
    if config.model.input_len == 0 || config.model.horizon == 0 {
        bail!("input length and horizon must be positive");
    }
    config.train.validate()?;
    config.check_paths()?;
    Ok(config)
}

pub fn load_frame(config: &RunConfig) -> Result<SeriesFrame> {
    let path = config
        .data
        .path
        .as_deref()
        .ok_or_else(|| anyhow!("no input data (use --data or set data.path)"))?;
    load_csv(path, &config.data.csv_options()?).with_context(|| format!("reading {}", path.display()))
}

/// The output directory, created if missing.
pub fn out_dir(config: &RunConfig) -> Result<PathBuf> {
    let dir = if config.output_dir.as_os_str().is_empty() {
        PathBuf::from(".")
    } else {
        config.output_dir.clone()
    };
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

pub fn pick_variable<'a>(frame: &'a SeriesFrame, name: Option<&'a str>) -> Result<(&'a str, &'a [f64])> {
    match name {
        None => Ok((&frame.variable_names[0], &frame.columns[0])),
        Some(n) => frame
            .column(n)
            .map(|c| (n, c))
            .ok_or_else(|| anyhow!("no variable {n:?}; have {}", frame.variable_names.join(", "))),
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
