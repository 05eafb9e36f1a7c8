//! Seasonal forecasting by phase decomposition.
//!
//! Each day is split into three equal phases: a rising third, a peak third
//! and a falling third. The rising and falling phases are forecast by linear
//! maps, the peak phase by SDNet, a small multi-scale convolutional network,
//! and the three forecasts are summed back into one series.
//!
//! Everything runs on a self-contained numeric core with reverse-mode
//! differentiation in [`numcore`].

pub mod data;
pub mod decompose;
mod error;
pub mod evalbench;
pub mod models;
pub mod numcore;
pub mod training;

pub use error::{Error, Result};
