use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
            return Err(Error::Config(format!(
                "split fractions must all be positive, got {parts:?}"
            )));
        }
        let total: f64 = parts.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions sum to {total}, not 1")));
        }
        Ok(())
    }
}

/// Contiguous train / validation / test ranges in time order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

/// Splits `[0, len)` chronologically. Every split must hold at least
/// `min_split_len` positions (typically one full window).
pub fn chronological_split(len: usize, fractions: &SplitFractions, min_split_len: usize) -> Result<Splits> {
    fractions.validate()?;
    let train_end = (len as f64 * fractions.train).round() as usize;
    let val_end = ((len as f64 * (fractions.train + fractions.val)).round() as usize).min(len);
    let splits = Splits {
        train: 0..train_end,
        val: train_end..val_end,
        test: val_end..len,
    };
    for (name, r) in [("train", &splits.train), ("validation", &splits.val), ("test", &splits.test)] {
        if r.len() < min_split_len.max(1) {
            return Err(Error::Config(format!(
                "series of length {len} is too short: {name} split has {} positions, needs {}",
                r.len(),
                min_split_len.max(1)
            )));
        }
    }
    Ok(splits)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub input_len: usize,
    pub horizon: usize,
    pub stride: usize,
}

impl WindowSpec {
    pub fn new(input_len: usize, horizon: usize) -> Self {
        WindowSpec {
            input_len,
            horizon,
            stride: 1,
        }
    }

    pub fn span(&self) -> usize {
        self.input_len + self.horizon
    }

    /// Number of windows fitting in `len` positions.
    pub fn count(&self, len: usize) -> usize {
        if len < self.span() || self.stride == 0 {
            0
        } else {
            (len - self.span()) / self.stride + 1
        }
    }
}

/// Position of samples within the daily cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseClock {
    /// Offset of position 0.
    pub base_offset: usize,
    pub period: usize,
}

impl PhaseClock {
    pub fn offset_at(&self, pos: usize) -> usize {
        (self.base_offset + pos) % self.period
    }
}

/// One input/target pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window<'a> {
    /// Absolute position of the first input value.
    pub start: usize,
    pub input: &'a [f64],
    pub target: &'a [f64],
    /// Daily phase offset of the first input value.
    pub offset: usize,
}

/// Sliding windows lying entirely inside `range` of `series`.
pub fn make_windows<'a>(
    series: &'a [f64],
    range: Range<usize>,
    spec: WindowSpec,
    clock: PhaseClock,
) -> impl Iterator<Item = Window<'a>> + 'a {
    let range = range.start..range.end.min(series.len());
    let count = spec.count(range.len());
    (0..count).map(move |k| {
        let start = range.start + k * spec.stride;
        let mid = start + spec.input_len;
        Window {
            start,
            input: &series[start..mid],
            target: &series[mid..mid + spec.horizon],
            offset: clock.offset_at(start),
        }
    })
}
