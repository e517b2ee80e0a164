//! Named parameters, their Adam moments, and binding onto a tape.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::tape::{Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub type GradientMap = BTreeMap<String, Tensor>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub first_moment: Tensor,
    pub second_moment: Tensor,
}

impl Moments {
    fn zeros_like(t: &Tensor) -> Self {
        let zeros = t.map(|_| 0.0);
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore {
    values: BTreeMap<String, Tensor>,
    moments: BTreeMap<String, Moments>,
    step: u64,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a store from checkpointed parts; moments must shape-match.
    pub fn from_parts(values: BTreeMap<String, Tensor>, moments: BTreeMap<String, Moments>, step: u64) -> Result<Self> {
        for (name, value) in &values {
            let m = moments
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing optimizer state for `{name}`")))?;
            if m.first_moment.shape() != value.shape() || m.second_moment.shape() != value.shape() {
                return Err(Error::Checkpoint(format!("moment shape mismatch for `{name}`")));
            }
        }
        if moments.len() != values.len() {
            return Err(Error::Checkpoint(
                "optimizer state names do not match parameters".into(),
            ));
        }
        Ok(Self { values, moments, step })
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let name = name.into();
        self.moments.insert(name.clone(), Moments::zeros_like(&value));
        self.values.insert(name, value);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.values
            .get(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.values
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn moments(&self, name: &str) -> Option<&Moments> {
        self.moments.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn values(&self) -> &BTreeMap<String, Tensor> {
        &self.values
    }

    pub fn all_moments(&self) -> &BTreeMap<String, Moments> {
        &self.moments
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar weights.
    pub fn parameter_count(&self) -> usize {
        self.values.values().map(Tensor::len).sum()
    }

    /// Records every parameter as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound {
            vars: self
                .values
                .iter()
                .map(|(k, v)| (k.clone(), tape.variable(v.clone())))
                .collect(),
        }
    }

    /// Records every parameter as a constant leaf.
    pub fn bind_frozen(&self, tape: &mut Tape) -> Bound {
        Bound {
            vars: self
                .values
                .iter()
                .map(|(k, v)| (k.clone(), tape.constant(v.clone())))
                .collect(),
        }
    }

    /// One bias-corrected Adam update. Parameters absent from `grads` are left
    /// untouched; the step counter advances once per call.
    pub fn adam_step(&mut self, grads: &GradientMap, cfg: &AdamConfig) -> Result<()> {
        for (name, g) in grads {
            let value = self.get(name)?;
            if value.shape() != g.shape() {
                return Err(Error::Shape {
                    op: "adam_step",
                    lhs: value.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - cfg.beta1.powi(t);
        let bias2 = 1.0 - cfg.beta2.powi(t);
        for (name, g) in grads {
            let moments = self.moments.get_mut(name).expect("moments track values");
            let value = self.values.get_mut(name).expect("checked above");
            let m = moments.first_moment.values_mut();
            let v = moments.second_moment.values_mut();
            for (i, (p, &gi)) in value.values_mut().iter_mut().zip(g.values()).enumerate() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
        Ok(())
    }
}

/// Parameter name → tape variable for one recorded computation.
#[derive(Clone, Debug, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    /// Rebinds `name` to `var`, e.g. a leaf under gradient check.
    pub fn insert(&mut self, name: impl Into<String>, var: Var) {
        self.vars.insert(name.into(), var);
    }

    /// Extracts per-parameter gradients from a backward pass.
    pub fn gradients(&self, grads: &Gradients) -> GradientMap {
        self.vars.iter().map(|(k, &v)| (k.clone(), grads.wrt(v))).collect()
    }
}
