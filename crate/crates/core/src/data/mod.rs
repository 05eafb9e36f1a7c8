//! Series frames, CSV ingestion, synthetic data and run configuration.

mod config;
mod frame;
mod ingest;
mod synth;

pub use config::{DataConfig, EvalConfig, ModelConfig, RunConfig, SEED_ENV};
pub use frame::{write_table, SeriesFrame};
pub use ingest::{load_csv, parse_timestamp, CsvOptions, FillPolicy};
pub use synth::{daily_profile, synth_seasonal, SynthComponents};
