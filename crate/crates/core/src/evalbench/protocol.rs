use std::ops::Range;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Forecaster, GlobalLinear, MssdConfig, MssdModel, SdnetConfig, Trainable};
use crate::numcore::mem;
use crate::training::{
    chronological_split, fit, make_windows, NormStats, PhaseClock, SplitFractions, SplitView, Splits, TrainConfig,
    TrainLog, WindowSpec,
};

use super::metrics::ErrorAccumulator;

/// Test-split scores of one model on one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub variant: String,
    pub input_len: usize,
    pub horizon: usize,
    pub mse: f64,
    pub mae: f64,
    pub n_windows: usize,
    pub wall_ms: f64,
    pub peak_mem_bytes: usize,
}

impl EvalReport {
    /// Equality of everything except timing and memory.
    pub fn same_scores(&self, other: &EvalReport) -> bool {
        self.input_len == other.input_len
            && self.horizon == other.horizon
            && self.n_windows == other.n_windows
            && self.mse.to_bits() == other.mse.to_bits()
            && self.mae.to_bits() == other.mae.to_bits()
    }
}

/// A univariate series split chronologically and normalized with
/// training-split statistics.
#[derive(Clone, Debug)]
pub struct PreparedSeries {
    pub normalized: Vec<f64>,
    pub norm: NormStats,
    pub splits: Splits,
    pub clock: PhaseClock,
}

impl PreparedSeries {
    /// Splits `raw` so that every split holds at least `min_span` positions.
    pub fn new(raw: &[f64], clock: PhaseClock, fractions: &SplitFractions, min_span: usize) -> Result<Self> {
        let splits = chronological_split(raw.len(), fractions, min_span)?;
        let norm = NormStats::fit(&raw[splits.train.clone()]);
        Ok(Self::with_norm(raw, clock, splits, norm))
    }

    /// Uses given splits and statistics instead of fitting them.
    pub fn with_norm(raw: &[f64], clock: PhaseClock, splits: Splits, norm: NormStats) -> Self {
        PreparedSeries {
            normalized: norm.normalize(raw),
            norm,
            splits,
            clock,
        }
    }

    pub fn view(&self, range: Range<usize>) -> SplitView<'_> {
        SplitView::new(
            &self.normalized[range.clone()],
            PhaseClock {
                base_offset: self.clock.offset_at(range.start),
                ..self.clock
            },
        )
    }

    pub fn train_view(&self) -> SplitView<'_> {
        self.view(self.splits.train.clone())
    }

    pub fn val_view(&self) -> SplitView<'_> {
        self.view(self.splits.val.clone())
    }

    pub fn test_view(&self) -> SplitView<'_> {
        self.view(self.splits.test.clone())
    }
}

fn score<F: Forecaster + ?Sized>(model: &F, split: SplitView) -> Result<ErrorAccumulator> {
    let spec = WindowSpec::new(model.input_len(), model.horizon());
    let mut acc = ErrorAccumulator::default();
    for w in make_windows(split.values, 0..split.values.len(), spec, split.clock) {
        acc.push(&model.forecast(w.input, w.offset)?, w.target)?;
    }
    if acc.count() == 0 {
        return Err(Error::Config(format!(
            "test split of {} positions holds no window of {} + {}",
            split.values.len(),
            model.input_len(),
            model.horizon()
        )));
    }
    Ok(acc)
}

fn report(
    dataset: &str,
    variant: &str,
    input_len: usize,
    horizon: usize,
    acc: &ErrorAccumulator,
    started: Instant,
    peak: usize,
) -> Result<EvalReport> {
    let (mse, mae) = acc.finish()?;
    Ok(EvalReport {
        dataset: dataset.into(),
        variant: variant.into(),
        input_len,
        horizon,
        mse,
        mae,
        n_windows: acc.count() / horizon,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
        peak_mem_bytes: peak,
    })
}

/// Scores `model` on every stride-1 window of a normalized split.
pub fn evaluate<F: Forecaster + ?Sized>(model: &F, dataset: &str, variant: &str, split: SplitView) -> Result<EvalReport> {
    let started = Instant::now();
    let (acc, peak) = mem::measure(|| score(model, split));
    report(dataset, variant, model.input_len(), model.horizon(), &acc?, started, peak)
}

/// Channel-independent scores: one model per variable, errors pooled over
/// variables and windows.
pub fn evaluate_multivariate<F: Forecaster>(
    models: &[F],
    series: &[PreparedSeries],
    dataset: &str,
    variant: &str,
) -> Result<EvalReport> {
    if models.len() != series.len() || models.is_empty() {
        return Err(Error::Config(format!(
            "{} models for {} variables",
            models.len(),
            series.len()
        )));
    }
    let started = Instant::now();
    let (acc, peak) = mem::measure(|| -> Result<ErrorAccumulator> {
        let mut total = ErrorAccumulator::default();
        for (m, s) in models.iter().zip(series) {
            total.merge(&score(m, s.test_view())?);
        }
        Ok(total)
    });
    let first = &models[0];
    let mut out = report(dataset, variant, first.input_len(), first.horizon(), &acc?, started, peak)?;
    out.n_windows /= models.len();
    Ok(out)
}

/// Fits any trainable model on the prepared train and validation splits.
pub fn fit_prepared<M: Trainable>(model: &mut M, series: &PreparedSeries, config: &TrainConfig) -> Result<TrainLog> {
    fit(model, series.train_view(), series.val_view(), config)
}

/// A trained model with its training log and test report.
#[derive(Clone, Debug)]
pub struct UnivariateRun {
    pub model: MssdModel,
    pub log: TrainLog,
    pub report: EvalReport,
}

/// Builds, trains and scores one MSSD model.
pub fn run_univariate(
    series: &PreparedSeries,
    config: &MssdConfig,
    train: &TrainConfig,
    dataset: &str,
    variant: &str,
) -> Result<UnivariateRun> {
    let mut model = MssdModel::new(config.clone())?;
    let log = fit_prepared(&mut model, series, train)?;
    model.norm = Some(series.norm);
    let report = evaluate(&model, dataset, variant, series.test_view())?;
    Ok(UnivariateRun { model, log, report })
}

/// Trains and scores the single global linear map on the same protocol.
pub fn run_global_linear(series: &PreparedSeries, config: &MssdConfig, train: &TrainConfig, dataset: &str) -> Result<EvalReport> {
    let mut model = GlobalLinear::new(config.input_len, config.horizon, config.seed);
    fit_prepared(&mut model, series, train)?;
    evaluate(&model, dataset, "global-linear", series.test_view())
}

/// One model per input length at a fixed horizon. All lengths share the
/// same splits, sized for the longest input.
pub fn input_length_sweep(
    raw: &[f64],
    clock: PhaseClock,
    base: &MssdConfig,
    input_lens: &[usize],
    train: &TrainConfig,
    dataset: &str,
) -> Result<Vec<EvalReport>> {
    let configs = input_lens
        .iter()
        .map(|&i| {
            let c = MssdConfig {
                input_len: i,
                ..base.clone()
            };
            c.validate().map(|_| c)
        })
        .collect::<Result<Vec<_>>>()?;
    let longest = input_lens.iter().max().copied().unwrap_or(0);
    let series = PreparedSeries::new(raw, clock, &train.split, longest + base.horizon)?;
    configs
        .iter()
        .map(|c| run_univariate(&series, c, train, dataset, &format!("I={}", c.input_len)).map(|r| r.report))
        .collect()
}

/// Architecture toggles for ablations and timing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationSwitches {
    /// Off replaces the dilated causal stack with plain same-padded convs.
    pub causal_conv: bool,
    pub global_block: bool,
    /// Include the naive attention layer in timing runs.
    pub attention_reference: bool,
}

impl Default for AblationSwitches {
    fn default() -> Self {
        AblationSwitches {
            causal_conv: true,
            global_block: true,
            attention_reference: true,
        }
    }
}

impl AblationSwitches {
    pub fn apply(&self, sdnet: &SdnetConfig) -> SdnetConfig {
        SdnetConfig {
            causal_tcn: self.causal_conv,
            global_block: self.global_block,
            ..sdnet.clone()
        }
    }

    pub fn label(&self) -> String {
        format!(
            "causal_conv={},global_block={}",
            on_off(self.causal_conv),
            on_off(self.global_block)
        )
    }
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

/// Default and variant model trained on identical data and seeds.
#[derive(Clone, Debug)]
pub struct AblationPair {
    pub horizon: usize,
    pub default: EvalReport,
    pub variant: EvalReport,
    pub default_params: usize,
    pub variant_params: usize,
}

pub fn ablation_run(
    raw: &[f64],
    clock: PhaseClock,
    base: &MssdConfig,
    switches: &AblationSwitches,
    horizons: &[usize],
    train: &TrainConfig,
    dataset: &str,
) -> Result<Vec<AblationPair>> {
    let longest = horizons.iter().max().copied().unwrap_or(0);
    let series = PreparedSeries::new(raw, clock, &train.split, base.input_len + longest)?;
    horizons
        .iter()
        .map(|&horizon| {
            let default_cfg = MssdConfig {
                horizon,
                sdnet: AblationSwitches::default().apply(&base.sdnet),
                ..base.clone()
            };
            let variant_cfg = MssdConfig {
                sdnet: switches.apply(&base.sdnet),
                ..default_cfg.clone()
            };
            let d = run_univariate(&series, &default_cfg, train, dataset, "default")?;
            let v = run_univariate(&series, &variant_cfg, train, dataset, &switches.label())?;
            Ok(AblationPair {
                horizon,
                default_params: d.model.params.num_scalars(),
                variant_params: v.model.params.num_scalars(),
                default: d.report,
                variant: v.report,
            })
        })
        .collect()
}
