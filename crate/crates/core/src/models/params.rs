use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{contract, dim_err, Result};
use crate::numcore::{Gradients, Tape, Tensor, Var};

/// Index of a tensor in a [`Params`] store.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered, named collection of trainable tensors.
#[derive(Clone, Debug, Default)]
pub struct Params {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl Params {
    pub fn new() -> Self {
        Params::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    /// Adds a tensor drawn from `U(-bound, bound)`.
    pub(crate) fn add_uniform(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        bound: f64,
        rng: &mut ChaCha8Rng,
    ) -> ParamId {
        let numel = shape.iter().product();
        let data = (0..numel).map(|_| rng.random_range(-bound..=bound)).collect();
        self.add(name, Tensor::new(shape, data).expect("positive dims"))
    }

    pub(crate) fn add_full(&mut self, name: impl Into<String>, shape: Vec<usize>, value: f64) -> ParamId {
        self.add(name, Tensor::full(shape, value).expect("positive dims"))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    /// Replaces a tensor with one of the same shape.
    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let slot = &mut self.tensors[id.0];
        if slot.shape() != value.shape() {
            return Err(dim_err!(
                "parameter {} has shape {:?}, got {:?}",
                self.names[id.0],
                slot.shape(),
                value.shape()
            ));
        }
        *slot = value;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Copies every tensor from `other`, which must have identical names and shapes.
    pub fn load_from(&mut self, other: &Params) -> Result<()> {
        contract!(self.names == other.names, "parameter sets have different layouts");
        for (i, t) in other.tensors.iter().enumerate() {
            self.set(ParamId(i), t.clone())?;
        }
        Ok(())
    }

    /// Bitwise equality of names, shapes and values.
    pub fn bit_eq(&self, other: &Params) -> bool {
        self.names == other.names && self.tensors.iter().zip(&other.tensors).all(|(a, b)| a.bit_eq(b))
    }
}

/// One forward pass: a tape plus the parameters bound onto it.
///
/// Parameters are recorded on first use. With `track` set they become
/// differentiation targets, otherwise constants. A dropout generator turns
/// on training behaviour for dropout layers.
pub struct Forward<'a> {
    pub tape: Tape,
    params: &'a Params,
    bound: Vec<Option<Var>>,
    track: bool,
    dropout_rng: Option<&'a mut ChaCha8Rng>,
}

impl<'a> Forward<'a> {
    /// Inference pass: no gradients, no dropout.
    pub fn eval(params: &'a Params) -> Self {
        Forward {
            tape: Tape::new(),
            params,
            bound: vec![None; params.len()],
            track: false,
            dropout_rng: None,
        }
    }

    /// Pass recording parameter gradients; dropout active when `rng` is given.
    pub fn train(params: &'a Params, rng: Option<&'a mut ChaCha8Rng>) -> Self {
        Forward {
            tape: Tape::new(),
            params,
            bound: vec![None; params.len()],
            track: true,
            dropout_rng: rng,
        }
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let value = self.params.get(id).clone();
        let v = if self.track {
            self.tape.leaf(value)
        } else {
            self.tape.constant(value)
        };
        self.bound[id.0] = Some(v);
        v
    }

    /// Inverted dropout: zeroes each element with probability `p` and scales
    /// survivors by `1 / (1 - p)`. Identity outside training.
    pub fn dropout(&mut self, x: Var, p: f64) -> Result<Var> {
        let Some(rng) = self.dropout_rng.as_deref_mut() else {
            return Ok(x);
        };
        if p <= 0.0 {
            return Ok(x);
        }
        let shape = self.tape.shape(x).to_vec();
        let numel = shape.iter().product();
        let keep = 1.0 / (1.0 - p);
        let mask = (0..numel)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let mask = self.tape.constant(Tensor::new(shape, mask)?);
        self.tape.mul(x, mask)
    }

    /// Runs backward from `loss` and returns one gradient slot per parameter.
    pub fn backward(self, loss: Var) -> Result<Vec<Option<Tensor>>> {
        let bound = self.bound;
        let grads: Gradients = self.tape.backward(loss)?;
        Ok(bound
            .into_iter()
            .map(|v| v.and_then(|v| grads.get(v).cloned()))
            .collect())
    }
}
