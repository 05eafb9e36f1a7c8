use rand_chacha::ChaCha8Rng;

use crate::error::{dim_err, Result};
use crate::numcore::{Conv1dOpts, Padding2d, Tensor, Var};

use super::params::{Forward, ParamId, Params};

pub(crate) const NORM_EPS: f64 = 1e-5;

/// Affine map `[n_in] -> [n_out]`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub n_in: usize,
    pub n_out: usize,
}

impl Dense {
    pub(crate) fn new(params: &mut Params, name: &str, n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (n_in as f64).sqrt();
        Dense {
            weight: params.add_uniform(format!("{name}.weight"), vec![n_out, n_in], bound, rng),
            bias: params.add_uniform(format!("{name}.bias"), vec![n_out], bound, rng),
            n_in,
            n_out,
        }
    }

    pub fn forward(&self, fwd: &mut Forward, x: Var) -> Result<Var> {
        let (w, b) = (fwd.param(self.weight), fwd.param(self.bias));
        fwd.tape.linear(x, w, b)
    }
}

/// 1-D convolution layer over `[channels, len]`.
#[derive(Clone, Debug)]
pub struct Conv1dLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub opts: Conv1dOpts,
}

impl Conv1dLayer {
    pub(crate) fn new(
        params: &mut Params,
        name: &str,
        (cin, cout, kernel): (usize, usize, usize),
        opts: Conv1dOpts,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let bound = 1.0 / ((cin * kernel) as f64).sqrt();
        Conv1dLayer {
            weight: params.add_uniform(format!("{name}.weight"), vec![cout, cin, kernel], bound, rng),
            bias: params.add_uniform(format!("{name}.bias"), vec![cout], bound, rng),
            opts,
        }
    }

    pub fn forward(&self, fwd: &mut Forward, x: Var) -> Result<Var> {
        let (w, b) = (fwd.param(self.weight), fwd.param(self.bias));
        fwd.tape.conv1d(x, w, b, self.opts)
    }
}

/// Same-padded 2-D convolution over `[channels, rows, cols]`.
#[derive(Clone, Debug)]
pub struct Conv2dLayer {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Conv2dLayer {
    pub(crate) fn new(
        params: &mut Params,
        name: &str,
        (cin, cout, kernel): (usize, usize, usize),
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let bound = 1.0 / ((cin * kernel * kernel) as f64).sqrt();
        Conv2dLayer {
            weight: params.add_uniform(format!("{name}.weight"), vec![cout, cin, kernel, kernel], bound, rng),
            bias: params.add_uniform(format!("{name}.bias"), vec![cout], bound, rng),
        }
    }

    pub fn forward(&self, fwd: &mut Forward, x: Var) -> Result<Var> {
        let (w, b) = (fwd.param(self.weight), fwd.param(self.bias));
        fwd.tape.conv2d(x, w, b, Padding2d::Same)
    }
}

/// Per-position normalization across channels with learned scale and shift.
#[derive(Clone, Debug)]
pub struct ChannelNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl ChannelNorm {
    pub(crate) fn new(params: &mut Params, name: &str, channels: usize) -> Self {
        ChannelNorm {
            gamma: params.add_full(format!("{name}.gamma"), vec![channels], 1.0),
            beta: params.add_full(format!("{name}.beta"), vec![channels], 0.0),
        }
    }

    pub fn forward(&self, fwd: &mut Forward, x: Var) -> Result<Var> {
        let (g, b) = (fwd.param(self.gamma), fwd.param(self.beta));
        fwd.tape.layer_norm(x, g, b, NORM_EPS)
    }
}

/// Right-pads the last axis of a `[channels, len]` value with zeros up to `target`.
pub(crate) fn pad_right(fwd: &mut Forward, x: Var, target: usize) -> Result<Var> {
    let &[c, len] = fwd.tape.shape(x) else {
        return Err(dim_err!("pad_right expects [channels, len], got {:?}", fwd.tape.shape(x)));
    };
    if target == len {
        return Ok(x);
    }
    if target < len {
        return Err(dim_err!("cannot pad length {len} down to {target}"));
    }
    let zeros = fwd.tape.constant(Tensor::zeros(vec![c, target - len])?);
    fwd.tape.concat(&[x, zeros], 1)
}

/// Left-pads the last axis of a `[channels, len]` value with `count` zeros.
pub(crate) fn pad_left(fwd: &mut Forward, x: Var, count: usize) -> Result<Var> {
    let &[c, _] = fwd.tape.shape(x) else {
        return Err(dim_err!("pad_left expects [channels, len], got {:?}", fwd.tape.shape(x)));
    };
    if count == 0 {
        return Ok(x);
    }
    let zeros = fwd.tape.constant(Tensor::zeros(vec![c, count])?);
    fwd.tape.concat(&[zeros, x], 1)
}
