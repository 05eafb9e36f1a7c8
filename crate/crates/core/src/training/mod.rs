//! Splitting, windowing, normalization and the training loop.

mod fit;
mod norm;
mod windows;

pub use fit::{
    fit, predict, train_model, window_mse, EpochRecord, SeriesAccess, SplitView, TrainConfig, TrainLog, TrainOutcome,
};
pub use norm::{NormStats, MIN_STD};
pub use windows::{chronological_split, make_windows, PhaseClock, SplitFractions, Splits, Window, WindowSpec};
