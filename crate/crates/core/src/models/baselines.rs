//! Reference forecasters used to judge MSSD.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{contract, dim_err, Result};
use crate::numcore::{Tensor, Var};

use super::layers::Dense;
use super::params::{Forward, Params};
use super::{Forecaster, Trainable};

/// Repeats the most recent full period of the window.
#[derive(Clone, Debug)]
pub struct SeasonalNaive {
    pub period: usize,
    pub input_len: usize,
    pub horizon: usize,
}

impl SeasonalNaive {
    pub fn new(period: usize, input_len: usize, horizon: usize) -> Result<Self> {
        contract!(period >= 1 && input_len >= period, "seasonal naive needs at least one full period of input");
        Ok(SeasonalNaive {
            period,
            input_len,
            horizon,
        })
    }
}

impl Forecaster for SeasonalNaive {
    fn input_len(&self) -> usize {
        self.input_len
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn forecast(&self, window: &[f64], _start_offset: usize) -> Result<Vec<f64>> {
        if window.len() != self.input_len {
            return Err(dim_err!("window has {} values, expected {}", window.len(), self.input_len));
        }
        let last = &window[self.input_len - self.period..];
        Ok((0..self.horizon).map(|t| last[t % self.period]).collect())
    }
}

/// One affine map from the whole window to the whole horizon.
#[derive(Clone, Debug)]
pub struct GlobalLinear {
    pub params: Params,
    pub map: Dense,
    pub input_len: usize,
    pub horizon: usize,
}

impl GlobalLinear {
    pub fn new(input_len: usize, horizon: usize, seed: u64) -> Self {
        let mut params = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = Dense::new(&mut params, "global", input_len, horizon, &mut rng);
        GlobalLinear {
            params,
            map,
            input_len,
            horizon,
        }
    }
}

impl Trainable for GlobalLinear {
    fn params(&self) -> &Params {
        &self.params
    }

    fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    fn input_len(&self) -> usize {
        self.input_len
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn forward_window(&self, fwd: &mut Forward, window: Var, _start_offset: usize) -> Result<Var> {
        self.map.forward(fwd, window)
    }
}

impl Forecaster for GlobalLinear {
    fn input_len(&self) -> usize {
        self.input_len
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn forecast(&self, window: &[f64], start_offset: usize) -> Result<Vec<f64>> {
        let mut fwd = Forward::eval(&self.params);
        let x = fwd.tape.constant(Tensor::new(vec![window.len()], window.to_vec())?);
        let y = self.forward_window(&mut fwd, x, start_offset)?;
        Ok(fwd.tape.value(y).to_vec())
    }
}
