use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{MssdConfig, SdnetConfig};
use crate::training::TrainConfig;

use super::ingest::{CsvOptions, FillPolicy};
use super::synth::SynthComponents;

/// Environment variable overriding every seed in a loaded configuration.
pub const SEED_ENV: &str = "MSSD_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    pub samples_per_hour: Option<usize>,
    pub delimiter: char,
    pub header: bool,
    /// Zero-based timestamp column; negative for none.
    pub timestamp_column: i64,
    pub fill: FillPolicy,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            path: None,
            samples_per_hour: None,
            delimiter: ',',
            header: true,
            timestamp_column: 0,
            fill: FillPolicy::ForwardFill,
        }
    }
}

impl DataConfig {
    pub fn csv_options(&self) -> Result<CsvOptions> {
        if !self.delimiter.is_ascii() {
            return Err(Error::Config(format!("delimiter {:?} is not a single byte", self.delimiter)));
        }
        Ok(CsvOptions {
            delimiter: self.delimiter as u8,
            has_header: self.header,
            timestamp_column: usize::try_from(self.timestamp_column).ok(),
            fill: self.fill,
            samples_per_hour: self.samples_per_hour,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input_len: usize,
    pub horizon: usize,
    pub sdnet: SdnetConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_len: 96,
            horizon: 24,
            sdnet: SdnetConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub horizons: Vec<usize>,
    pub noise_ratios: Vec<f64>,
    pub sigma_scale: f64,
    pub input_lens: Vec<usize>,
    pub bench_lengths: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            horizons: vec![24, 48, 96],
            noise_ratios: vec![0.0, 0.05, 0.10, 0.20],
            sigma_scale: 1.0,
            input_lens: vec![48, 96, 192, 336],
            bench_lengths: vec![96, 192, 384, 768, 1536],
        }
    }
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub synth: SynthComponents,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| {
            let at = e.span().map(|s| format!("line {}: ", text[..s.start].matches('\n').count() + 1));
            Error::Config(format!("{}{}", at.unwrap_or_default(), e.message()))
        })?;
        config.check_lengths()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a file, applies the seed override from the environment and
    /// checks that referenced paths exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_str(&text)?;
        config.apply_env()?;
        config.check_paths()?;
        Ok(config)
    }

    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            let seed = raw
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={raw:?} is not an unsigned integer")))?;
            self.train.seed = seed;
        }
        Ok(())
    }

    fn check_lengths(&self) -> Result<()> {
        if self.model.input_len == 0 || self.model.horizon == 0 {
            return Err(Error::Config("input length and horizon must be positive".into()));
        }
        Ok(())
    }

    pub fn check_paths(&self) -> Result<()> {
        match &self.data.path {
            Some(p) if !p.exists() => Err(Error::Config(format!("data file {} does not exist", p.display()))),
            _ => Ok(()),
        }
    }

    pub fn mssd_config(&self, samples_per_hour: usize) -> MssdConfig {
        MssdConfig {
            samples_per_hour,
            input_len: self.model.input_len,
            horizon: self.model.horizon,
            seed: self.train.seed,
            sdnet: self.model.sdnet.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig::default();
        c.data.path = Some("x.csv".into());
        c.model.sdnet.causal_tcn = false;
        c.eval.noise_ratios = vec![0.0, 0.3];
        let text = c.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn partial_file_takes_defaults() {
        let c = RunConfig::from_toml_str("[model]\nhorizon = 48\n").unwrap();
        assert_eq!(c.model.horizon, 48);
        assert_eq!(c.model.input_len, 96);
        assert_eq!(c.train, TrainConfig::default());
        assert!(RunConfig::from_toml_str("[model]\nhorizon = 0\n").is_err());
        let err = RunConfig::from_toml_str("[model]\nbogus = 1\n").unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("bogus") && !err.contains('\n'), "{err}");
    }
}
