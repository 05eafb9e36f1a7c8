use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decompose::{make_period_spec, PeriodSpec, Phase};
use crate::error::{contract, dim_err, Error, Result};
use crate::numcore::{Tensor, Var};
use crate::training::NormStats;

use super::layers::Dense;
use super::params::{Forward, Params};
use super::sdnet::{Sdnet, SdnetConfig};
use super::{Forecaster, Trainable};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MssdConfig {
    pub samples_per_hour: usize,
    pub input_len: usize,
    pub horizon: usize,
    pub seed: u64,
    pub sdnet: SdnetConfig,
}

impl MssdConfig {
    pub fn new(samples_per_hour: usize, input_len: usize, horizon: usize) -> Self {
        MssdConfig {
            samples_per_hour,
            input_len,
            horizon,
            seed: 42,
            sdnet: SdnetConfig::default(),
        }
    }

    /// Checks that input and horizon cover whole days, so every window has
    /// the same number of positions per phase whatever its clock offset.
    pub fn validate(&self) -> Result<PeriodSpec> {
        let spec = make_period_spec(self.samples_per_hour)?;
        let t = spec.period();
        if self.input_len < t {
            return Err(Error::Config(format!(
                "input length {} is shorter than one period ({t}); some phase would have no inputs",
                self.input_len
            )));
        }
        for (what, len) in [("input length", self.input_len), ("horizon", self.horizon)] {
            if len == 0 || len % t != 0 {
                return Err(Error::Config(format!(
                    "{what} {len} must be a positive multiple of the period {t}"
                )));
            }
        }
        self.sdnet.validate(self.input_len / 3)?;
        Ok(spec)
    }
}

/// Affine map from a window's phase-labeled inputs to the horizon's
/// phase-labeled outputs, both in time order.
#[derive(Clone, Debug)]
pub struct LinearPhasePredictor {
    pub phase: Phase,
    pub map: Dense,
}

impl LinearPhasePredictor {
    pub fn forward(&self, fwd: &mut Forward, phase_values: Var) -> Result<Var> {
        self.map.forward(fwd, phase_values)
    }
}

/// Two linear phase predictors plus SDNet for the Peak phase.
#[derive(Clone, Debug)]
pub struct MssdModel {
    pub config: MssdConfig,
    pub spec: PeriodSpec,
    pub params: Params,
    pub predictor_u: LinearPhasePredictor,
    pub predictor_d: LinearPhasePredictor,
    pub sdnet: Sdnet,
    pub norm: Option<NormStats>,
}

impl MssdModel {
    /// Builds the model with parameters drawn from `config.seed`.
    pub fn new(config: MssdConfig) -> Result<Self> {
        let spec = config.validate()?;
        let n_in = config.input_len / 3;
        let n_out = config.horizon / 3;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = Params::new();
        let mut u_rng = ChaCha8Rng::from_rng(&mut rng);
        let mut d_rng = ChaCha8Rng::from_rng(&mut rng);
        let mut p_rng = ChaCha8Rng::from_rng(&mut rng);
        let predictor_u = LinearPhasePredictor {
            phase: Phase::Ascending,
            map: Dense::new(&mut params, "ascending", n_in, n_out, &mut u_rng),
        };
        let predictor_d = LinearPhasePredictor {
            phase: Phase::Descending,
            map: Dense::new(&mut params, "descending", n_in, n_out, &mut d_rng),
        };
        let sdnet = Sdnet::new(&mut params, "peak", &config.sdnet, n_in, n_out, &mut p_rng)?;
        Ok(MssdModel {
            config,
            spec,
            params,
            predictor_u,
            predictor_d,
            sdnet,
            norm: None,
        })
    }

    /// Offset of the first forecast position given the window's offset.
    pub fn horizon_offset(&self, start_offset: usize) -> usize {
        (start_offset + self.config.input_len) % self.spec.period()
    }

    /// Decomposes the window, runs each phase predictor on its own inputs and
    /// places the results at the horizon positions of the matching phase.
    pub fn forward(&self, fwd: &mut Forward, window: Var, start_offset: usize) -> Result<Var> {
        let (i_len, o_len) = (self.config.input_len, self.config.horizon);
        if fwd.tape.value(window).numel() != i_len {
            return Err(dim_err!(
                "window has {} values, model expects {i_len}",
                fwd.tape.value(window).numel()
            ));
        }
        contract!(
            start_offset < self.spec.period(),
            "start offset {start_offset} must be below the period {}",
            self.spec.period()
        );
        let out_offset = self.horizon_offset(start_offset);
        let mut parts = Vec::with_capacity(3);
        for phase in Phase::ALL {
            let inputs = self.spec.positions(i_len, start_offset, phase);
            let x = fwd.tape.gather(window, &inputs)?;
            let y = match phase {
                Phase::Ascending => self.predictor_u.forward(fwd, x)?,
                Phase::Peak => self.sdnet.forward(fwd, x)?,
                Phase::Descending => self.predictor_d.forward(fwd, x)?,
            };
            let outputs = self.spec.positions(o_len, out_offset, phase);
            parts.push(fwd.tape.scatter(y, &outputs, o_len)?);
        }
        let partial = fwd.tape.add(parts[0], parts[1])?;
        fwd.tape.add(partial, parts[2])
    }

    /// Forecast for a window already on the normalized scale.
    pub fn forecast_normalized(&self, window: &[f64], start_offset: usize) -> Result<Vec<f64>> {
        let mut fwd = Forward::eval(&self.params);
        let x = fwd.tape.constant(Tensor::new(vec![window.len()], window.to_vec())?);
        let y = self.forward(&mut fwd, x, start_offset)?;
        Ok(fwd.tape.value(y).to_vec())
    }

    /// Forecast in original units: normalize, run, denormalize.
    pub fn predict(&self, window: &[f64], start_offset: usize) -> Result<Vec<f64>> {
        let norm = self
            .norm
            .as_ref()
            .ok_or_else(|| Error::Contract("model has no normalization statistics".into()))?;
        let scaled = norm.normalize(window);
        let y = self.forecast_normalized(&scaled, start_offset)?;
        Ok(norm.denormalize(&y))
    }
}

impl Trainable for MssdModel {
    fn params(&self) -> &Params {
        &self.params
    }

    fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    fn input_len(&self) -> usize {
        self.config.input_len
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn forward_window(&self, fwd: &mut Forward, window: Var, start_offset: usize) -> Result<Var> {
        self.forward(fwd, window, start_offset)
    }
}

impl Forecaster for MssdModel {
    fn input_len(&self) -> usize {
        self.config.input_len
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn forecast(&self, window: &[f64], start_offset: usize) -> Result<Vec<f64>> {
        self.forecast_normalized(window, start_offset)
    }
}
