//! Phase predictors, SDNet and their composition into the full model.

mod baselines;
mod checkpoint;
mod layers;
mod mssd;
mod params;
mod sdnet;

pub use baselines::{GlobalLinear, SeasonalNaive};
pub use checkpoint::{load_checkpoint, save_checkpoint, NamedModel, CHECKPOINT_VERSION};
pub use layers::{ChannelNorm, Conv1dLayer, Conv2dLayer, Dense};
pub use mssd::{LinearPhasePredictor, MssdConfig, MssdModel};
pub use params::{Forward, ParamId, Params};
pub use sdnet::{Branch, GlobalBlock, LocalBlock, Sdnet, SdnetConfig, TcnBlock, TcnStack};

use crate::error::Result;
use crate::numcore::Var;

/// A model whose parameters can be fitted by gradient descent.
pub trait Trainable {
    fn params(&self) -> &Params;
    fn params_mut(&mut self) -> &mut Params;
    fn input_len(&self) -> usize;
    fn horizon(&self) -> usize;
    /// Records the forecast for one normalized window on the pass's tape.
    fn forward_window(&self, fwd: &mut Forward, window: Var, start_offset: usize) -> Result<Var>;
}

/// Anything that maps a normalized input window to a normalized forecast.
pub trait Forecaster {
    fn input_len(&self) -> usize;
    fn horizon(&self) -> usize;
    fn forecast(&self, window: &[f64], start_offset: usize) -> Result<Vec<f64>>;
}
