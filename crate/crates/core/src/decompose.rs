//! Daily phase decomposition.
//!
//! Each day of `24 * samples_per_hour` positions is cut into three equal
//! thirds: Ascending, Peak and Descending. A series is split into three
//! full-length components, each holding the original values on its own
//! phase and zero elsewhere, so the components always sum back to the input.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// One third of the daily cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    Ascending,
    Peak,
    Descending,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Ascending, Phase::Peak, Phase::Descending];

    /// Single-letter tag: U, P or D.
    pub fn tag(self) -> char {
        match self {
            Phase::Ascending => 'U',
            Phase::Peak => 'P',
            Phase::Descending => 'D',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Ascending => "ascending",
            Phase::Peak => "peak",
            Phase::Descending => "descending",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "u" | "ascending" => Ok(Phase::Ascending),
            "p" | "peak" => Ok(Phase::Peak),
            "d" | "descending" => Ok(Phase::Descending),
            other => Err(Error::Config(format!("unknown phase {other:?}"))),
        }
    }
}

/// Length of the daily cycle for a given sampling rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PeriodSpec {
    samples_per_hour: usize,
    period: usize,
    phase_len: usize,
}

/// `period = 24 * samples_per_hour`, `phase_len = period / 3`.
pub fn make_period_spec(samples_per_hour: usize) -> Result<PeriodSpec> {
    contract!(samples_per_hour >= 1, "samples_per_hour must be >= 1");
    let period = 24 * samples_per_hour;
    Ok(PeriodSpec {
        samples_per_hour,
        period,
        phase_len: period / 3,
    })
}

impl PeriodSpec {
    pub fn samples_per_hour(&self) -> usize {
        self.samples_per_hour
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn phase_len(&self) -> usize {
        self.phase_len
    }

    /// Phase of the position `pos` samples after a series start that sits
    /// `offset` samples into the daily cycle.
    pub fn label(&self, pos: usize, offset: usize) -> Phase {
        match ((pos + offset) % self.period) / self.phase_len {
            0 => Phase::Ascending,
            1 => Phase::Peak,
            _ => Phase::Descending,
        }
    }

    pub fn labels(&self, len: usize, offset: usize) -> Vec<Phase> {
        (0..len).map(|p| self.label(p, offset)).collect()
    }

    /// Positions in `[0, len)` carrying `phase`, ascending.
    pub fn positions(&self, len: usize, offset: usize, phase: Phase) -> Vec<usize> {
        (0..len).filter(|&p| self.label(p, offset) == phase).collect()
    }

    pub fn count(&self, len: usize, offset: usize, phase: Phase) -> usize {
        (0..len).filter(|&p| self.label(p, offset) == phase).count()
    }

    fn check_offset(&self, offset: usize) -> Result<()> {
        contract!(
            offset < self.period,
            "phase offset {offset} must be below the period {}",
            self.period
        );
        Ok(())
    }
}

/// Full-length masked components of a series.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseDecomposition {
    pub ascending: Vec<f64>,
    pub peak: Vec<f64>,
    pub descending: Vec<f64>,
    pub labels: Vec<Phase>,
    pub spec: PeriodSpec,
    pub offset: usize,
}

impl PhaseDecomposition {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn component(&self, phase: Phase) -> &[f64] {
        match phase {
            Phase::Ascending => &self.ascending,
            Phase::Peak => &self.peak,
            Phase::Descending => &self.descending,
        }
    }

    /// Elementwise sum of the three components.
    pub fn recompose(&self) -> Vec<f64> {
        (0..self.len())
            .map(|t| self.ascending[t] + self.peak[t] + self.descending[t])
            .collect()
    }
}

/// Splits `series` into masked Ascending/Peak/Descending components.
///
/// `offset` is how far into the daily cycle the first sample lies. The
/// series need not cover whole days.
pub fn decompose(series: &[f64], spec: &PeriodSpec, offset: usize) -> Result<PhaseDecomposition> {
    contract!(!series.is_empty(), "cannot decompose an empty series");
    spec.check_offset(offset)?;
    let labels = spec.labels(series.len(), offset);
    let mask = |phase: Phase| -> Vec<f64> {
        series
            .iter()
            .zip(&labels)
            .map(|(&v, &l)| if l == phase { v } else { 0.0 })
            .collect()
    };
    Ok(PhaseDecomposition {
        ascending: mask(Phase::Ascending),
        peak: mask(Phase::Peak),
        descending: mask(Phase::Descending),
        labels,
        spec: *spec,
        offset,
    })
}

/// Maximal contiguous runs of `phase` in time order. Runs never cross a
/// day boundary; only the first and last may be shorter than `phase_len`.
pub fn extract_phase_windows(decomp: &PhaseDecomposition, phase: Phase) -> Vec<Vec<f64>> {
    let values = decomp.component(phase);
    let mut segments: Vec<Vec<f64>> = Vec::new();
    let mut prev: Option<usize> = None;
    for (t, &label) in decomp.labels.iter().enumerate() {
        if label != phase {
            continue;
        }
        match (prev, segments.last_mut()) {
            (Some(p), Some(seg)) if p + 1 == t => seg.push(values[t]),
            _ => segments.push(vec![values[t]]),
        }
        prev = Some(t);
    }
    segments
}

/// Builds a forecast of length `horizon` from three masked phase forecasts.
///
/// Position `t` takes its value from the forecast owning the phase of
/// `t + start_offset`; values a forecast carries outside its own phase are
/// ignored.
pub fn reassemble(
    y_u: &[f64],
    y_p: &[f64],
    y_d: &[f64],
    horizon: usize,
    spec: &PeriodSpec,
    start_offset: usize,
) -> Result<Vec<f64>> {
    spec.check_offset(start_offset)?;
    for (name, y) in [("ascending", y_u), ("peak", y_p), ("descending", y_d)] {
        contract!(
            y.len() == horizon,
            "{name} forecast has {} values for horizon {horizon}",
            y.len()
        );
    }
    Ok((0..horizon)
        .map(|t| match spec.label(t, start_offset) {
            Phase::Ascending => y_u[t],
            Phase::Peak => y_p[t],
            Phase::Descending => y_d[t],
        })
        .collect())
}

/// Like [`reassemble`] but each forecast holds only its own phase's values,
/// in time order.
pub fn reassemble_compact(
    y_u: &[f64],
    y_p: &[f64],
    y_d: &[f64],
    horizon: usize,
    spec: &PeriodSpec,
    start_offset: usize,
) -> Result<Vec<f64>> {
    spec.check_offset(start_offset)?;
    let mut out = vec![0.0; horizon];
    for (phase, y) in [(Phase::Ascending, y_u), (Phase::Peak, y_p), (Phase::Descending, y_d)] {
        let pos = spec.positions(horizon, start_offset, phase);
        contract!(
            pos.len() == y.len(),
            "{phase} forecast has {} values but the horizon has {} {phase} positions",
            y.len(),
            pos.len()
        );
        for (&p, &v) in pos.iter().zip(y) {
            out[p] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn period_specs() {
        let s1 = make_period_spec(1).unwrap();
        assert_eq!((s1.period(), s1.phase_len()), (24, 8));
        let s4 = make_period_spec(4).unwrap();
        assert_eq!((s4.period(), s4.phase_len()), (96, 32));
        let s2 = make_period_spec(2).unwrap();
        assert_eq!((s2.period(), s2.phase_len()), (48, 16));
        assert!(make_period_spec(0).is_err());
    }

    #[test]
    fn one_day_split_by_thirds() {
        let spec = make_period_spec(1).unwrap();
        let x: Vec<f64> = (1..=24).map(f64::from).collect();
        let d = decompose(&x, &spec, 0).unwrap();
        let nonzero = |c: &[f64]| c.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect::<Vec<_>>();
        assert_eq!(nonzero(&d.ascending), (0..8).collect::<Vec<_>>());
        assert_eq!(nonzero(&d.peak), (8..16).collect::<Vec<_>>());
        assert_eq!(nonzero(&d.descending), (16..24).collect::<Vec<_>>());
    }

    #[test]
    fn ones_split_evenly_over_whole_days() {
        let spec = make_period_spec(1).unwrap();
        for days in 1..5 {
            let x = vec![1.0; 24 * days];
            let d = decompose(&x, &spec, 0).unwrap();
            for phase in Phase::ALL {
                let brute = (0..x.len()).filter(|&t| (t % 24) / 8 == phase as usize).count();
                assert_eq!(d.component(phase).iter().filter(|&&v| v == 1.0).count(), brute);
                assert_eq!(brute, x.len() / 3);
            }
        }
    }

    #[test]
    fn offset_must_be_inside_period() {
        let spec = make_period_spec(1).unwrap();
        assert!(decompose(&[1.0; 5], &spec, 24).is_err());
        assert!(decompose(&[], &spec, 0).is_err());
    }

    #[test]
    fn peak_windows_of_two_days() {
        let spec = make_period_spec(1).unwrap();
        let x: Vec<f64> = (0..48).map(f64::from).collect();
        let d = decompose(&x, &spec, 0).unwrap();
        let w = extract_phase_windows(&d, Phase::Peak);
        assert_eq!(w, vec![(8..16).map(f64::from).collect::<Vec<_>>(), (32..40).map(f64::from).collect()]);
    }

    #[test]
    fn descending_windows_with_partial_tail() {
        let spec = make_period_spec(1).unwrap();
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        let d = decompose(&x, &spec, 0).unwrap();
        // positions 24..30 are 0..6 into the next day: U and P only
        assert!((24..30).all(|t| spec.label(t, 0) != Phase::Descending));
        let w = extract_phase_windows(&d, Phase::Descending);
        assert_eq!(w, vec![(16..24).map(f64::from).collect::<Vec<_>>()]);

        let short = decompose(&[1.0; 4], &spec, 0).unwrap();
        assert!(extract_phase_windows(&short, Phase::Descending).is_empty());
    }

    #[test]
    fn reassemble_masked_day() {
        let spec = make_period_spec(1).unwrap();
        let masked = |lo: usize, hi: usize, v: f64| (0..24).map(|t| if (lo..hi).contains(&t) { v } else { 0.0 }).collect::<Vec<_>>();
        let y = reassemble(&masked(0, 8, 1.0), &masked(8, 16, 2.0), &masked(16, 24, 3.0), 24, &spec, 0).unwrap();
        let expected: Vec<f64> = [1.0; 8].iter().chain(&[2.0; 8]).chain(&[3.0; 8]).copied().collect();
        assert_eq!(y, expected);
        assert!(reassemble(&[0.0; 3], &[0.0; 24], &[0.0; 24], 24, &spec, 0).is_err());
    }

    #[test]
    fn reassemble_with_offset_follows_clock() {
        let spec = make_period_spec(1).unwrap();
        let horizon = 36;
        let offset = 12;
        let y_u = vec![1.0; horizon];
        let y_p = vec![2.0; horizon];
        let y_d = vec![3.0; horizon];
        let y = reassemble(&y_u, &y_p, &y_d, horizon, &spec, offset).unwrap();
        for (t, v) in y.iter().enumerate() {
            let clock = (t + offset) % 24;
            let expected = if clock < 8 { 1.0 } else if clock < 16 { 2.0 } else { 3.0 };
            assert_eq!(*v, expected, "position {t}");
        }
        assert_eq!(&y[..4], &[2.0; 4]);
        assert_eq!(&y[4..12], &[3.0; 8]);
    }

    #[test]
    fn compact_matches_masked() {
        let spec = make_period_spec(1).unwrap();
        let x: Vec<f64> = (0..50).map(|v| (v as f64).sin()).collect();
        let d = decompose(&x, &spec, 7).unwrap();
        let compact = |phase| -> Vec<f64> {
            spec.positions(x.len(), 7, phase).iter().map(|&p| x[p]).collect()
        };
        let y = reassemble_compact(
            &compact(Phase::Ascending),
            &compact(Phase::Peak),
            &compact(Phase::Descending),
            x.len(),
            &spec,
            7,
        )
        .unwrap();
        assert_eq!(y, x);
        assert_eq!(d.recompose(), x);
    }
}
