use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

use super::frame::SeriesFrame;

/// Shape of the generated daily cycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthComponents {
    pub level: f64,
    /// Height of the daily peak above the overnight level.
    pub amplitude: f64,
    /// Change of level per day.
    pub trend_slope: f64,
    pub noise_std: f64,
    /// Exponent of the midday bump; larger is narrower.
    pub peak_sharpness: f64,
}

impl Default for SynthComponents {
    fn default() -> Self {
        SynthComponents {
            level: 1.0,
            amplitude: 1.0,
            trend_slope: 0.002,
            noise_std: 0.1,
            peak_sharpness: 4.0,
        }
    }
}

/// Noise-free daily profile at fraction `u` of the day, in `[0, 1]`.
///
/// Rises linearly to one half over the first third, adds a bump peaking at
/// noon over the middle third and falls back linearly over the last third.
pub fn daily_profile(u: f64, sharpness: f64) -> f64 {
    let s = 3.0 * u;
    if s < 1.0 {
        0.5 * s
    } else if s < 2.0 {
        0.5 + 0.5 * (std::f64::consts::PI * (s - 1.0)).sin().powf(sharpness)
    } else {
        0.5 * (3.0 - s)
    }
}

/// Deterministic seasonal series of `days` days starting at midnight.
pub fn synth_seasonal(days: usize, samples_per_hour: usize, c: &SynthComponents, seed: u64) -> Result<SeriesFrame> {
    contract!(days >= 2, "synthetic series needs at least two days, got {days}");
    contract!(samples_per_hour >= 1, "samples per hour must be >= 1");
    contract!(c.noise_std >= 0.0 && c.noise_std.is_finite(), "noise std must be finite and >= 0");
    let period = 24 * samples_per_hour;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, c.noise_std).expect("validated std");
    let values = (0..days * period)
        .map(|t| {
            let u = (t % period) as f64 / period as f64;
            let trend = c.trend_slope * t as f64 / period as f64;
            let eps = if c.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            c.level + c.amplitude * daily_profile(u, c.peak_sharpness) + trend + eps
        })
        .collect();
    let mut frame = SeriesFrame::from_columns("synthetic", samples_per_hour, vec![values])?;
    frame.variable_names = vec!["load".into()];
    let start = chrono::NaiveDate::from_ymd_opt(2020, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid date");
    let step = chrono::TimeDelta::seconds(3600 / samples_per_hour as i64);
    frame.timestamps = Some((0..frame.len()).map(|k| start + step * k as i32).collect());
    Ok(frame)
}
