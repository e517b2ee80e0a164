//! Fully-connected networks over the tape.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::params::{Bound, ParameterStore};
use crate::autodiff::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Sigmoid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub hidden_activation: Activation,
    pub output_activation: OutputActivation,
}

impl MlpSpec {
    pub fn new(input: usize, hidden: &[usize], output: usize) -> Self {
        Self {
            input,
            hidden: hidden.to_vec(),
            output,
            hidden_activation: Activation::Tanh,
            output_activation: OutputActivation::Identity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.output == 0 || self.hidden.contains(&0) {
            return Err(Error::Config(format!("MLP widths must be >= 1: {self:?}")));
        }
        Ok(())
    }

    /// Layer widths including input and output.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input);
        w.extend_from_slice(&self.hidden);
        w.push(self.output);
        w
    }

    pub fn parameter_count(&self) -> usize {
        self.widths().windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }
}

/// An MLP whose weights live in a [`ParameterStore`] under `prefix`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub prefix: String,
    pub spec: MlpSpec,
}

impl Mlp {
    pub fn new(prefix: impl Into<String>, spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            prefix: prefix.into(),
            spec,
        })
    }

    fn weight_name(&self, layer: usize) -> String {
        format!("{}.l{layer}.w", self.prefix)
    }

    fn bias_name(&self, layer: usize) -> String {
        format!("{}.l{layer}.b", self.prefix)
    }

    pub fn parameter_names(&self) -> Vec<String> {
        (0..self.spec.hidden.len() + 1)
            .flat_map(|l| [self.weight_name(l), self.bias_name(l)])
            .collect()
    }

    /// Weights uniform in `±sqrt(1/fan_in)`, biases zero.
    pub fn initialize(&self, store: &mut ParameterStore, rng: &mut impl Rng) {
        for (layer, pair) in self.spec.widths().windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (1.0 / fan_in as f64).sqrt();
            let w = Tensor::from_fn(fan_in, fan_out, |_, _| rng.random_range(-bound..bound));
            store.insert(self.weight_name(layer), w);
            store.insert(self.bias_name(layer), Tensor::zeros(1, fan_out));
        }
    }

    pub fn forward(&self, tape: &mut Tape, params: &Bound, input: Var) -> Result<Var> {
        let layers = self.spec.hidden.len() + 1;
        let mut h = input;
        for layer in 0..layers {
            let w = params.get(&self.weight_name(layer))?;
            let b = params.get(&self.bias_name(layer))?;
            let lin = tape.matmul(h, w)?;
            h = tape.add_row(lin, b)?;
            h = if layer + 1 < layers {
                match self.spec.hidden_activation {
                    Activation::Tanh => tape.tanh(h)?,
                    Activation::Relu => tape.relu(h)?,
                }
            } else {
                match self.spec.output_activation {
                    OutputActivation::Identity => h,
                    OutputActivation::Sigmoid => tape.sigmoid(h)?,
                }
            };
        }
        Ok(h)
    }

    /// Tape-free forward pass; values match [`Mlp::forward`] exactly.
    pub fn eval(&self, store: &ParameterStore, input: &Tensor) -> Result<Tensor> {
        let layers = self.spec.hidden.len() + 1;
        let mut h = input.clone();
        for layer in 0..layers {
            let w = store.get(&self.weight_name(layer))?;
            let b = store.get(&self.bias_name(layer))?;
            h = h.matmul(w)?.add_row(b)?;
            if layer + 1 < layers {
                match self.spec.hidden_activation {
                    Activation::Tanh => h.values_mut().iter_mut().for_each(|v| *v = v.tanh()),
                    Activation::Relu => h.values_mut().iter_mut().for_each(|v| *v = v.max(0.0)),
                }
            } else if self.spec.output_activation == OutputActivation::Sigmoid {
                h = h.map(crate::autodiff::tape::sigmoid);
            }
        }
        Ok(h)
    }
}

/// Builds a standalone MLP and its freshly initialized parameters.
pub fn build_mlp(spec: MlpSpec, seed: u64) -> Result<(Mlp, ParameterStore)> {
    let mlp = Mlp::new("mlp", spec)?;
    let mut store = ParameterStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    mlp.initialize(&mut store, &mut rng);
    Ok((mlp, store))
}
