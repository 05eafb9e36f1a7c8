use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::models::{Forward, Params, Sdnet, SdnetConfig};
use crate::numcore::{mem, Tape, Tensor};

use super::protocol::AblationSwitches;

pub const CONV_MODULE: &str = "local-global+tcn";
pub const ATTENTION_MODULE: &str = "self-attention";

/// One timing measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub length: usize,
    pub module: String,
    /// Median wall time of one forward and backward pass.
    pub wall_ms: f64,
    /// Transient peak of tensor allocations during one pass.
    pub bytes: usize,
    /// Sum of the forward output, to check that timing leaves results alone.
    pub checksum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
    /// Least-squares slope of log time against log length, per module.
    pub slopes: Vec<(String, f64)>,
}

impl BenchTable {
    pub fn slope(&self, module: &str) -> Option<f64> {
        self.slopes.iter().find(|(m, _)| m == module).map(|(_, s)| *s)
    }

    pub fn row(&self, module: &str, length: usize) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.module == module && r.length == length)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchOptions {
    pub channels: usize,
    pub seed: u64,
    /// Each length is repeated until this much time has been spent.
    pub min_time: Duration,
    pub min_runs: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            channels: 16,
            seed: 42,
            min_time: Duration::from_millis(200),
            min_runs: 3,
        }
    }
}

/// Slope of the least-squares line through `(ln x, ln y)`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn random_input(len: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    Tensor::new(vec![len], (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// One SDNet head up to its temporal stack output.
struct ConvBranch {
    params: Params,
    net: Sdnet,
}

impl ConvBranch {
    fn new(len: usize, config: &SdnetConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut params = Params::new();
        let net = Sdnet::new(&mut params, "bench", config, len, 1, rng)?;
        Ok(ConvBranch { params, net })
    }

    fn run(&self, x: &Tensor) -> Result<f64> {
        let mut fwd = Forward::train(&self.params, None);
        let xv = fwd.tape.constant(x.clone());
        let h = self.net.branches[0].features(&mut fwd, xv)?;
        let loss = fwd.tape.mean(h);
        let out = fwd.tape.value(h).data().iter().sum();
        fwd.backward(loss)?;
        Ok(out)
    }
}

/// Single-head scaled dot-product self-attention over a scalar sequence
/// embedded to `channels` features.
struct Attention {
    embed: Tensor,
    wq: Tensor,
    wk: Tensor,
    wv: Tensor,
    channels: usize,
}

impl Attention {
    fn new(channels: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let bound = 1.0 / (channels as f64).sqrt();
        let mut mat = |rows: usize, cols: usize| {
            Tensor::new(
                vec![rows, cols],
                (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect(),
            )
        };
        Ok(Attention {
            embed: mat(1, channels)?,
            wq: mat(channels, channels)?,
            wk: mat(channels, channels)?,
            wv: mat(channels, channels)?,
            channels,
        })
    }

    fn run(&self, x: &Tensor) -> Result<f64> {
        let mut tape = Tape::new();
        let n = x.numel();
        let xv = tape.constant(x.reshape(vec![n, 1])?);
        let e = tape.leaf(self.embed.clone());
        let wq = tape.leaf(self.wq.clone());
        let wk = tape.leaf(self.wk.clone());
        let wv = tape.leaf(self.wv.clone());
        let h = tape.matmul(xv, e)?;
        let q = tape.matmul(h, wq)?;
        let k = tape.matmul(h, wk)?;
        let v = tape.matmul(h, wv)?;
        let kt = tape.transpose(k)?;
        let scores = tape.matmul(q, kt)?;
        let scores = tape.scale(scores, 1.0 / (self.channels as f64).sqrt());
        let attn = tape.softmax_rows(scores)?;
        let out = tape.matmul(attn, v)?;
        let loss = tape.mean(out);
        let sum = tape.value(out).data().iter().sum();
        tape.backward(loss)?;
        Ok(sum)
    }
}

fn time_runs(opts: &BenchOptions, mut run: impl FnMut() -> Result<f64>) -> Result<(f64, usize, f64)> {
    // warm-up pass doubles as the memory measurement
    let (checksum, bytes) = mem::measure(&mut run);
    let checksum = checksum?;
    let mut times = Vec::new();
    let start = Instant::now();
    while times.len() < opts.min_runs || start.elapsed() < opts.min_time {
        let t = Instant::now();
        let c = run()?;
        times.push(t.elapsed().as_secs_f64() * 1e3);
        debug_assert_eq!(c.to_bits(), checksum.to_bits());
    }
    times.sort_by(f64::total_cmp);
    Ok((times[times.len() / 2], bytes, checksum))
}

/// Times forward plus backward of the convolutional peak branch and, when
/// switched on, a naive self-attention layer of equal width, for each
/// sequence length. Runs on the calling thread only.
pub fn efficiency_bench(lengths: &[usize], switches: &AblationSwitches, opts: &BenchOptions) -> Result<BenchTable> {
    contract!(!lengths.is_empty(), "no lengths to benchmark");
    contract!(lengths.windows(2).all(|w| w[0] < w[1]), "lengths must be strictly ascending");
    let config = switches.apply(&SdnetConfig {
        num_heads: 1,
        kernel_scales: vec![2],
        tcn_channels: opts.channels,
        ..SdnetConfig::default()
    });
    let mut rows = Vec::new();
    for &len in lengths {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let x = random_input(len, &mut rng)?;
        let branch = ConvBranch::new(len, &config, &mut rng)?;
        let (wall_ms, bytes, checksum) = time_runs(opts, || branch.run(&x))?;
        rows.push(BenchRow {
            length: len,
            module: CONV_MODULE.into(),
            wall_ms,
            bytes,
            checksum,
        });
        if switches.attention_reference {
            let attn = Attention::new(opts.channels, &mut rng)?;
            let (wall_ms, bytes, checksum) = time_runs(opts, || attn.run(&x))?;
            rows.push(BenchRow {
                length: len,
                module: ATTENTION_MODULE.into(),
                wall_ms,
                bytes,
                checksum,
            });
        }
    }
    let mut slopes = Vec::new();
    if lengths.len() >= 2 {
        for module in [CONV_MODULE, ATTENTION_MODULE] {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.module == module)
                .map(|r| (r.length as f64, r.wall_ms))
                .collect();
            if pts.len() >= 2 {
                slopes.push((module.to_string(), loglog_slope(&pts)));
            }
        }
    }
    Ok(BenchTable { rows, slopes })
}
