use std::io::Write;
use std::ops::Range;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::models::{Forward, MssdModel, Params, Trainable};
use crate::numcore::{adam_step, AdamConfig, AdamState, Tensor};

use super::norm::NormStats;
use super::windows::{chronological_split, make_windows, PhaseClock, SplitFractions, Splits, WindowSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub split: SplitFractions,
    /// Step between consecutive training windows.
    pub stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            lr: 1e-3,
            patience: 10,
            seed: 42,
            split: SplitFractions::default(),
            stride: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.stride == 0 {
            return Err(Error::Config("batch size and stride must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} is not a finite non-negative number", self.lr)));
        }
        self.split.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub stopped_early: bool,
}

impl TrainLog {
    /// One JSON object per epoch.
    pub fn write_ndjson(&self, mut out: impl Write) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Equality of everything except wall-clock timings.
    pub fn same_trajectory(&self, other: &TrainLog) -> bool {
        self.best_epoch == other.best_epoch
            && self.stopped_early == other.stopped_early
            && self.best_val_mse.to_bits() == other.best_val_mse.to_bits()
            && self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.train_mse.to_bits() == b.train_mse.to_bits()
                    && a.val_mse.to_bits() == b.val_mse.to_bits()
            })
    }
}

/// A normalized slice of the series plus its clock.
#[derive(Clone, Copy, Debug)]
pub struct SplitView<'a> {
    pub values: &'a [f64],
    pub clock: PhaseClock,
}

impl<'a> SplitView<'a> {
    pub fn new(values: &'a [f64], clock: PhaseClock) -> Self {
        SplitView { values, clock }
    }
}

fn window_tensor(values: &[f64]) -> Result<Tensor> {
    Tensor::new(vec![values.len()], values.to_vec())
}

/// Mean squared error over every window of `split` (stride 1), in eval mode.
pub fn window_mse<M: Trainable>(model: &M, split: SplitView) -> Result<f64> {
    let spec = WindowSpec::new(model.input_len(), model.horizon());
    let mut total = 0.0;
    let mut count = 0usize;
    for w in make_windows(split.values, 0..split.values.len(), spec, split.clock) {
        let mut fwd = Forward::eval(model.params());
        let x = fwd.tape.constant(window_tensor(w.input)?);
        let y = model.forward_window(&mut fwd, x, w.offset)?;
        let pred = fwd.tape.value(y).data();
        total += pred.iter().zip(w.target).map(|(p, t)| (p - t).powi(2)).sum::<f64>();
        count += w.target.len();
    }
    if count == 0 {
        return Err(Error::EmptyOutput("split holds no complete window".into()));
    }
    Ok(total / count as f64)
}

/// Mini-batch Adam on mean squared error with early stopping on the
/// validation split. The parameters of the best validation epoch are kept.
pub fn fit<M: Trainable>(model: &mut M, train: SplitView, val: SplitView, config: &TrainConfig) -> Result<TrainLog> {
    config.validate()?;
    let spec = WindowSpec {
        input_len: model.input_len(),
        horizon: model.horizon(),
        stride: config.stride,
    };
    let starts: Vec<_> = make_windows(train.values, 0..train.values.len(), spec, train.clock)
        .map(|w| w.start)
        .collect();
    if starts.is_empty() {
        return Err(Error::EmptyOutput("training split holds no complete window".into()));
    }
    contract!(
        spec.count(val.values.len()) > 0,
        "validation split holds no complete window"
    );

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_d40f);
    let adam = AdamConfig::with_lr(config.lr);
    let mut state = AdamState::new();
    let mut order = starts;
    let mut log = TrainLog {
        best_val_mse: f64::INFINITY,
        ..TrainLog::default()
    };
    let mut best: Option<Params> = None;
    let mut stale = 0usize;

    for epoch in 0..config.epochs {
        let clock = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut sq_sum = 0.0;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let (loss_value, grads) = {
                let mut fwd = Forward::train(model.params(), Some(&mut dropout_rng));
                let mut acc = None;
                for &start in batch {
                    let mid = start + spec.input_len;
                    let x = fwd.tape.constant(window_tensor(&train.values[start..mid])?);
                    let t = fwd.tape.constant(window_tensor(&train.values[mid..mid + spec.horizon])?);
                    let y = model.forward_window(&mut fwd, x, train.clock.offset_at(start))?;
                    let l = fwd.tape.mse_loss(y, t)?;
                    acc = Some(match acc {
                        None => l,
                        Some(a) => fwd.tape.add(a, l)?,
                    });
                }
                let loss = fwd.tape.scale(acc.expect("non-empty batch"), 1.0 / batch.len() as f64);
                let value = fwd.tape.value(loss).data()[0];
                if !value.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        batch: batch_idx,
                    });
                }
                (value, fwd.backward(loss)?)
            };
            sq_sum += loss_value * batch.len() as f64;
            adam_step(model.params_mut().tensors_mut(), &grads, &mut state, &adam)?;
        }
        let train_mse = sq_sum / order.len() as f64;
        let val_mse = window_mse(model, val)?;
        let wall_ms = clock.elapsed().as_secs_f64() * 1e3;
        log::info!("epoch {epoch}: train_mse {train_mse:.6} val_mse {val_mse:.6} ({wall_ms:.0} ms)");
        log.records.push(EpochRecord {
            epoch,
            train_mse,
            val_mse,
            wall_ms,
        });
        if val_mse < log.best_val_mse {
            log.best_val_mse = val_mse;
            log.best_epoch = epoch;
            best = Some(model.params().clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    if let Some(best) = best {
        model.params_mut().load_from(&best)?;
    }
    Ok(log)
}

/// Read access to a univariate series by position range.
pub trait SeriesAccess {
    fn len(&self) -> usize;
    fn read(&self, range: Range<usize>) -> Vec<f64>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl SeriesAccess for [f64] {
    fn len(&self) -> usize {
        <[f64]>::len(self)
    }

    fn read(&self, range: Range<usize>) -> Vec<f64> {
        self[range].to_vec()
    }
}

impl SeriesAccess for Vec<f64> {
    fn len(&self) -> usize {
        Vec::len(self)
    }

    fn read(&self, range: Range<usize>) -> Vec<f64> {
        self[range].to_vec()
    }
}

/// Outcome of [`train_model`].
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub log: TrainLog,
    pub splits: Splits,
    pub norm: NormStats,
}

/// Splits the series, fits normalization on the training split, trains and
/// stores the statistics in the model. Only training and validation
/// positions are ever read.
pub fn train_model<S: SeriesAccess + ?Sized>(
    model: &mut MssdModel,
    series: &S,
    clock: PhaseClock,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let span = model.config.input_len + model.config.horizon;
    let splits = chronological_split(series.len(), &config.split, span)?;
    let train_raw = series.read(splits.train.clone());
    let norm = NormStats::fit(&train_raw);
    let train = norm.normalize(&train_raw);
    let val = norm.normalize(&series.read(splits.val.clone()));
    let val_clock = PhaseClock {
        base_offset: clock.offset_at(splits.val.start),
        ..clock
    };
    let log = fit(
        model,
        SplitView::new(&train, clock),
        SplitView::new(&val, val_clock),
        config,
    )?;
    model.norm = Some(norm);
    Ok(TrainOutcome { log, splits, norm })
}

/// Original-scale forecast for one raw window.
pub fn predict(model: &MssdModel, window: &[f64], start_offset: usize) -> Result<Vec<f64>> {
    model.predict(window, start_offset)
}
