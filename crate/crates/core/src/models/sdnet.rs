//! Multi-scale convolutional predictor for the Peak phase.
//!
//! The input is duplicated across `num_heads` branches. Each branch embeds
//! the series into channels, compresses it with a strided convolution whose
//! kernel and stride equal the branch scale, mixes the compressed sequence
//! through a 2-D convolution over a rows-by-columns reshape, then runs a
//! stack of dilated causal convolutions before projecting to the horizon.
//! Branch outputs are concatenated and merged by a final affine map.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, dim_err, Result};
use crate::numcore::{Conv1dOpts, Var};

use super::layers::{pad_left, pad_right, ChannelNorm, Conv1dLayer, Conv2dLayer, Dense};
use super::params::{Forward, Params};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdnetConfig {
    pub num_heads: usize,
    /// Kernel size and stride of each head's compressing convolution.
    pub kernel_scales: Vec<usize>,
    pub tcn_layers: usize,
    pub tcn_kernel: usize,
    pub tcn_channels: usize,
    pub grid_rows: usize,
    pub global_kernel: usize,
    pub dropout: f64,
    /// Dilated causal convolutions in the temporal stack; when off each block
    /// is a plain same-padded convolution without normalization.
    pub causal_tcn: bool,
    pub global_block: bool,
}

impl Default for SdnetConfig {
    fn default() -> Self {
        SdnetConfig {
            num_heads: 2,
            kernel_scales: vec![2, 3],
            tcn_layers: 3,
            tcn_kernel: 3,
            tcn_channels: 16,
            grid_rows: 4,
            global_kernel: 3,
            dropout: 0.05,
            causal_tcn: true,
            global_block: true,
        }
    }
}

impl SdnetConfig {
    pub fn validate(&self, input_len: usize) -> Result<()> {
        contract!(self.num_heads >= 1, "num_heads must be >= 1");
        contract!(
            self.kernel_scales.len() == self.num_heads,
            "{} kernel scales for {} heads",
            self.kernel_scales.len(),
            self.num_heads
        );
        for &s in &self.kernel_scales {
            contract!(
                (1..=input_len).contains(&s),
                "kernel scale {s} must lie in [1, {input_len}]"
            );
        }
        contract!(self.tcn_layers >= 1, "tcn_layers must be >= 1");
        contract!(self.tcn_kernel >= 1, "tcn_kernel must be >= 1");
        contract!(self.tcn_channels >= 1, "tcn_channels must be >= 1");
        contract!(self.grid_rows >= 1, "grid_rows must be >= 1");
        contract!(self.global_kernel % 2 == 1, "global_kernel must be odd");
        contract!((0.0..1.0).contains(&self.dropout), "dropout must lie in [0, 1)");
        Ok(())
    }
}

/// Strided compression: conv with kernel = stride = scale, then norm and ReLU.
/// The input is left-padded to a multiple of the scale so the last window
/// ends on the most recent value.
#[derive(Clone, Debug)]
pub struct LocalBlock {
    pub conv: Conv1dLayer,
    pub norm: ChannelNorm,
    pub scale: usize,
}

impl LocalBlock {
    fn new(params: &mut Params, name: &str, channels: usize, scale: usize, rng: &mut ChaCha8Rng) -> Self {
        LocalBlock {
            conv: Conv1dLayer::new(params, &format!("{name}.conv"), (channels, channels, scale), Conv1dOpts::valid(scale, 1), rng),
            norm: ChannelNorm::new(params, &format!("{name}.norm"), channels),
            scale,
        }
    }

    /// `[c, len] -> [c, ceil(len / scale)]`
    pub fn forward(&self, fwd: &mut Forward, x: Var) -> Result<Var> {
        let len = fwd.tape.shape(x).last().copied().unwrap_or(0);
        let x = pad_left(fwd, x, len.div_ceil(self.scale) * self.scale - len)?;
        let h = self.conv.forward(fwd, x)?;
        let h = self.norm.forward(fwd, h)?;
        Ok(fwd.tape.relu(h))
    }
}

/// 2-D convolution over a `grid_rows x ceil(len / grid_rows)` reshape with a
/// residual connection. Length preserving.
#[derive(Clone, Debug)]
pub struct GlobalBlock {
    pub conv: Conv2dLayer,
    pub grid_rows: usize,
}

impl GlobalBlock {
    fn new(params: &mut Params, name: &str, channels: usize, kernel: usize, grid_rows: usize, rng: &mut ChaCha8Rng) -> Self {
        GlobalBlock {
            conv: Conv2dLayer::new(params, &format!("{name}.conv"), (channels, channels, kernel), rng),
            grid_rows,
        }
    }

    pub fn forward(&self, fwd: &mut Forward, x: Var) -> Result<Var> {
        let &[c, len] = fwd.tape.shape(x) else {
            return Err(dim_err!("global block expects [channels, len], got {:?}", fwd.tape.shape(x)));
        };
        let cols = len.div_ceil(self.grid_rows);
        let padded = pad_right(fwd, x, cols * self.grid_rows)?;
        let grid = fwd.tape.reshape(padded, vec![c, self.grid_rows, cols])?;
        let mixed = self.conv.forward(fwd, grid)?;
        let mixed = fwd.tape.relu(mixed);
        let flat = fwd.tape.reshape(mixed, vec![c, self.grid_rows * cols])?;
        let trimmed = fwd.tape.narrow(flat, 1, 0, len)?;
        fwd.tape.add(x, trimmed)
    }
}

/// Residual block: `x + dropout(relu(norm(conv(x))))`.
#[derive(Clone, Debug)]
pub struct TcnBlock {
    pub conv: Conv1dLayer,
    pub norm: Option<ChannelNorm>,
}

/// Stack of residual blocks with dilations 1, 2, 4, ... Length preserving.
#[derive(Clone, Debug)]
pub struct TcnStack {
    pub blocks: Vec<TcnBlock>,
    pub dropout: f64,
}

impl TcnStack {
    fn new(params: &mut Params, name: &str, channels: usize, config: &SdnetConfig, rng: &mut ChaCha8Rng) -> Self {
        let blocks = (0..config.tcn_layers)
            .map(|layer| {
                let opts = if config.causal_tcn {
                    Conv1dOpts::causal(1, 1 << layer)
                } else {
                    Conv1dOpts::same()
                };
                let block_name = format!("{name}.{layer}");
                TcnBlock {
                    conv: Conv1dLayer::new(
                        params,
                        &format!("{block_name}.conv"),
                        (channels, channels, config.tcn_kernel),
                        opts,
                        rng,
                    ),
                    norm: config
                        .causal_tcn
                        .then(|| ChannelNorm::new(params, &format!("{block_name}.norm"), channels)),
                }
            })
            .collect();
        TcnStack {
            blocks,
            dropout: config.dropout,
        }
    }

    pub fn forward(&self, fwd: &mut Forward, x: Var) -> Result<Var> {
        let mut h = x;
        for block in &self.blocks {
            let mut y = block.conv.forward(fwd, h)?;
            if let Some(norm) = &block.norm {
                y = norm.forward(fwd, y)?;
            }
            let y = fwd.tape.relu(y);
            let y = fwd.dropout(y, self.dropout)?;
            h = fwd.tape.add(h, y)?;
        }
        Ok(h)
    }

    /// Past positions that can influence one output: `1 + (k - 1)(2^L - 1)`
    /// for the causal stack.
    pub fn receptive_field(kernel: usize, layers: usize) -> usize {
        1 + (kernel - 1) * ((1 << layers) - 1)
    }
}

/// One head: embed, local compression, global mixing, temporal stack, projection.
#[derive(Clone, Debug)]
pub struct Branch {
    pub embed: Conv1dLayer,
    pub local: LocalBlock,
    pub global: Option<GlobalBlock>,
    pub tcn: TcnStack,
    pub head: Dense,
}

impl Branch {
    /// Channel features `[C, L']` ahead of the projection.
    pub fn features(&self, fwd: &mut Forward, x: Var) -> Result<Var> {
        let n = fwd.tape.value(x).numel();
        let x = fwd.tape.reshape(x, vec![1, n])?;
        let h = self.embed.forward(fwd, x)?;
        let h = self.local.forward(fwd, h)?;
        let h = match &self.global {
            Some(g) => g.forward(fwd, h)?,
            None => h,
        };
        self.tcn.forward(fwd, h)
    }

    pub fn forward(&self, fwd: &mut Forward, x: Var) -> Result<Var> {
        let h = self.features(fwd, x)?;
        let flat_len = fwd.tape.value(h).numel();
        let flat = fwd.tape.reshape(h, vec![flat_len])?;
        self.head.forward(fwd, flat)
    }
}

#[derive(Clone, Debug)]
pub struct Sdnet {
    pub config: SdnetConfig,
    pub input_len: usize,
    pub output_len: usize,
    pub branches: Vec<Branch>,
    pub merge: Dense,
}

impl Sdnet {
    /// Registers all parameters under `prefix` and draws their initial values.
    pub fn new(
        params: &mut Params,
        prefix: &str,
        config: &SdnetConfig,
        input_len: usize,
        output_len: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        config.validate(input_len)?;
        contract!(output_len >= 1, "SDNet output length must be >= 1");
        let c = config.tcn_channels;
        let branches = config
            .kernel_scales
            .iter()
            .enumerate()
            .map(|(h, &scale)| {
                let name = format!("{prefix}.head{h}");
                // each head draws from its own stream so heads are independent of each other's size
                let mut hrng = ChaCha8Rng::from_rng(rng);
                let embed = Conv1dLayer::new(params, &format!("{name}.embed"), (1, c, 1), Conv1dOpts::valid(1, 1), &mut hrng);
                let local = LocalBlock::new(params, &format!("{name}.local"), c, scale, &mut hrng);
                let global = config.global_block.then(|| {
                    GlobalBlock::new(params, &format!("{name}.global"), c, config.global_kernel, config.grid_rows, &mut hrng)
                });
                let tcn = TcnStack::new(params, &format!("{name}.tcn"), c, config, &mut hrng);
                let compressed = input_len.div_ceil(scale);
                let head = Dense::new(params, &format!("{name}.proj"), c * compressed, output_len, &mut hrng);
                Branch {
                    embed,
                    local,
                    global,
                    tcn,
                    head,
                }
            })
            .collect();
        let merge = Dense::new(params, &format!("{prefix}.merge"), config.num_heads * output_len, output_len, rng);
        Ok(Sdnet {
            config: config.clone(),
            input_len,
            output_len,
            branches,
            merge,
        })
    }

    /// Routes the same input to every head.
    pub fn multi_head_split(&self, x: Var) -> Vec<Var> {
        vec![x; self.branches.len()]
    }

    pub fn forward(&self, fwd: &mut Forward, x: Var) -> Result<Var> {
        let n = fwd.tape.value(x).numel();
        if n != self.input_len {
            return Err(dim_err!("SDNet expects {} inputs, got {n}", self.input_len));
        }
        let heads = self
            .multi_head_split(x)
            .into_iter()
            .zip(&self.branches)
            .map(|(xi, branch)| branch.forward(fwd, xi))
            .collect::<Result<Vec<_>>>()?;
        let joined = fwd.tape.concat(&heads, 0)?;
        self.merge.forward(fwd, joined)
    }
}
