use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::MssdModel;
use crate::training::{chronological_split, NormStats, PhaseClock, Splits, TrainConfig};

use super::protocol::{evaluate, fit_prepared, EvalReport, PreparedSeries};

/// Additive gaussian perturbation of a fraction of training positions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Fraction of positions perturbed, in `[0, 1)`.
    pub ratio: f64,
    /// Noise std as a multiple of the training std.
    pub sigma_scale: f64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.ratio) {
            return Err(Error::Config(format!("noise ratio {} is outside [0, 1)", self.ratio)));
        }
        if !(self.sigma_scale >= 0.0 && self.sigma_scale.is_finite()) {
            return Err(Error::Config(format!("sigma scale {} is invalid", self.sigma_scale)));
        }
        Ok(())
    }

    /// Number of perturbed positions among `n`.
    pub fn count(&self, n: usize) -> usize {
        (self.ratio * n as f64).round() as usize
    }
}

/// Perturbs positions of `range` in a copy of `raw` and returns it with the
/// sorted perturbed positions.
///
/// Positions are taken from the front of one seeded permutation and each
/// position always draws the same noise value, so a larger ratio perturbs a
/// superset of the positions of a smaller one.
pub fn perturb(raw: &[f64], range: std::ops::Range<usize>, spec: &NoiseSpec, std: f64, seed: u64) -> Result<(Vec<f64>, Vec<usize>)> {
    spec.validate()?;
    let n = range.len();
    let mut order: Vec<usize> = range.clone().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let noise: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut noise_rng)).collect();
    let sigma = spec.sigma_scale * std;
    let mut out = raw.to_vec();
    let mut mask = order[..spec.count(n)].to_vec();
    for &pos in &mask {
        out[pos] += sigma * noise[pos - range.start];
    }
    mask.sort_unstable();
    Ok((out, mask))
}

/// Outcome of one noise level.
#[derive(Clone, Debug)]
pub struct RobustnessPoint {
    pub ratio: f64,
    pub report: EvalReport,
    pub perturbed: usize,
}

/// Retrains a fresh model per noise ratio on perturbed training data and
/// scores it on the clean test split. All runs share the clean training
/// statistics, so scores are on one scale.
pub fn robustness_sweep(
    factory: impl Fn() -> Result<MssdModel>,
    raw: &[f64],
    clock: PhaseClock,
    ratios: &[f64],
    sigma_scale: f64,
    train: &TrainConfig,
    dataset: &str,
) -> Result<Vec<RobustnessPoint>> {
    if ratios.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("noise ratios must be sorted ascending".into()));
    }
    let probe = factory()?;
    let span = probe.config.input_len + probe.config.horizon;
    let splits: Splits = chronological_split(raw.len(), &train.split, span)?;
    let clean = NormStats::fit(&raw[splits.train.clone()]);
    ratios
        .iter()
        .map(|&ratio| {
            let spec = NoiseSpec { ratio, sigma_scale };
            let (noisy, mask) = perturb(raw, splits.train.clone(), &spec, clean.std, train.seed)?;
            let series = PreparedSeries::with_norm(&noisy, clock, splits.clone(), clean);
            let mut model = factory()?;
            fit_prepared(&mut model, &series, train)?;
            model.norm = Some(clean);
            let report = evaluate(&model, dataset, &format!("zeta={ratio}"), series.test_view())?;
            Ok(RobustnessPoint {
                ratio,
                report,
                perturbed: mask.len(),
            })
        })
        .collect()
}
