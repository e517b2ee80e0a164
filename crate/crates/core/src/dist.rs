//! Diagonal Gaussians, Bernoulli and categorical likelihoods.
//!
//! Value-level types work on plain tensors. The [`terms`] submodule records the
//! same quantities row-wise on a tape so the model can mask and sum them.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::tape::{sigmoid, softplus};
use crate::data::schema::{AttributeKind, AttributeSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Bounds applied to every log-variance head before exponentiation.
pub const LOG_VARIANCE_MIN: f64 = -10.0;
pub const LOG_VARIANCE_MAX: f64 = 10.0;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn shape_check(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// Batch of diagonal Gaussians, one per row, each of dimension `cols`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagGaussian {
    pub mean: Tensor,
    pub log_variance: Tensor,
}

impl DiagGaussian {
    pub fn new(mean: Tensor, log_variance: Tensor) -> Result<Self> {
        shape_check("diag_gaussian", &mean, &log_variance)?;
        Ok(Self { mean, log_variance })
    }

    /// `n` copies of `N(0, I_d)`.
    pub fn standard(n: usize, d: usize) -> Self {
        Self {
            mean: Tensor::zeros(n, d),
            log_variance: Tensor::zeros(n, d),
        }
    }

    pub fn rows(&self) -> usize {
        self.mean.rows()
    }

    pub fn dim(&self) -> usize {
        self.mean.cols()
    }

    /// `KL(q || N(0, I))` summed over every row and dimension.
    pub fn kl_to_standard_normal(&self) -> Result<f64> {
        Ok(self.kl_per_row()?.iter().sum())
    }

    pub fn kl_per_row(&self) -> Result<Vec<f64>> {
        if !self.mean.all_finite() || !self.log_variance.all_finite() {
            return Err(Error::NonFinite("kl_to_standard_normal".into()));
        }
        Ok((0..self.rows())
            .map(|r| {
                let mu = self.mean.row_slice(r);
                let lv = self.log_variance.row_slice(r);
                0.5 * mu.iter().zip(lv).map(|(&m, &l)| m * m + l.exp() - 1.0 - l).sum::<f64>()
            })
            .collect())
    }

    /// `μ + exp(½ log σ²) ⊙ noise`.
    pub fn rsample(&self, noise: &Tensor) -> Result<Tensor> {
        shape_check("rsample", &self.mean, noise)?;
        let mut out = self.mean.clone();
        for ((o, &lv), &e) in out
            .values_mut()
            .iter_mut()
            .zip(self.log_variance.values())
            .zip(noise.values())
        {
            *o += (0.5 * lv).exp() * e;
        }
        Ok(out)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Tensor {
        let noise = standard_normal(self.rows(), self.dim(), rng);
        self.rsample(&noise).expect("noise drawn with matching shape")
    }

    /// Log density of `z` summed over every row and dimension.
    pub fn log_prob(&self, z: &Tensor) -> Result<f64> {
        shape_check("log_prob", &self.mean, z)?;
        Ok(z.values()
            .iter()
            .zip(self.mean.values().iter().zip(self.log_variance.values()))
            .map(|(&x, (&m, &lv))| -0.5 * (LN_2PI + lv + (x - m).powi(2) / lv.exp()))
            .sum())
    }
}

/// Draws an `(n, d)` matrix of independent standard normals.
pub fn standard_normal(n: usize, d: usize, rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(n, d, |_, _| rng.sample(StandardNormal))
}

/// Independent Bernoulli coordinates parameterized by logits.
#[derive(Clone, Debug, PartialEq)]
pub struct BernoulliVec {
    pub logits: Tensor,
}

impl BernoulliVec {
    pub fn new(logits: Tensor) -> Self {
        Self { logits }
    }

    pub fn probabilities(&self) -> Tensor {
        self.logits.map(sigmoid)
    }

    /// `Σ m·log σ(ℓ) + (1−m)·log(1−σ(ℓ))`, computed as `m·ℓ − softplus(ℓ)`.
    pub fn log_prob(&self, target: &Tensor) -> Result<f64> {
        shape_check("bernoulli_log_prob", &self.logits, target)?;
        if let Some(bad) = target.values().iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::Mask(format!("target must be binary, found {bad}")));
        }
        Ok(self
            .logits
            .values()
            .iter()
            .zip(target.values())
            .map(|(&l, &m)| m * l - softplus(l))
            .sum())
    }
}

/// Softmax over `k` classes per row.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalHead {
    pub logits: Tensor,
}

impl CategoricalHead {
    pub fn new(logits: Tensor) -> Self {
        Self { logits }
    }

    pub fn log_probabilities(&self) -> Tensor {
        let mut out = self.logits.clone();
        for r in 0..out.rows() {
            log_softmax_in_place(out.row_slice_mut(r));
        }
        out
    }

    pub fn probabilities(&self) -> Tensor {
        self.log_probabilities().map(f64::exp)
    }

    /// Draws one class index per row.
    pub fn sample(&self, rng: &mut impl Rng) -> Vec<usize> {
        let probs = self.probabilities();
        (0..probs.rows())
            .map(|r| {
                let row = probs.row_slice(r);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (k, &p) in row.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return k;
                    }
                }
                row.len() - 1
            })
            .collect()
    }
}

pub(crate) fn log_softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter_mut().for_each(|v| *v -= lse);
}

/// Negative log-likelihood of `target` under an attribute's decoder output,
/// summed over rows. Numerical: squared error against the predicted mean.
/// Categorical: cross-entropy of the logits against a one-hot (or soft) target.
pub fn reconstruction_loss(spec: &AttributeSpec, prediction: &Tensor, target: &Tensor) -> Result<f64> {
    let width = spec.encoded_width();
    if prediction.cols() != width {
        return Err(Error::Shape {
            op: "reconstruction_loss",
            lhs: prediction.shape().to_vec(),
            rhs: vec![prediction.rows(), width],
        });
    }
    shape_check("reconstruction_loss", prediction, target)?;
    Ok(match spec.kind {
        AttributeKind::Numerical => prediction
            .values()
            .iter()
            .zip(target.values())
            .map(|(p, t)| (p - t).powi(2))
            .sum(),
        AttributeKind::Categorical { .. } => -CategoricalHead::new(prediction.clone())
            .log_probabilities()
            .values()
            .iter()
            .zip(target.values())
            .map(|(lp, t)| lp * t)
            .sum::<f64>(),
    })
}

/// Binary cross-entropy of mask logits against a binary target.
pub fn binary_cross_entropy(logits: &Tensor, target: &Tensor) -> Result<f64> {
    Ok(-BernoulliVec::new(logits.clone()).log_prob(target)?)
}

/// The same quantities recorded on a tape, one value per row (`(n,1)`).
pub mod terms {
    use crate::autodiff::tape::{Tape, Var};
    use crate::error::Result;

    /// `½ Σ_d (μ² + exp(lv) − 1 − lv)` per row.
    pub fn kl_standard_normal(tape: &mut Tape, mean: Var, log_variance: Var) -> Result<Var> {
        let mu2 = tape.square(mean)?;
        let var = tape.exp(log_variance)?;
        let a = tape.add(mu2, var)?;
        let b = tape.sub(a, log_variance)?;
        let c = tape.add_scalar(b, -1.0)?;
        let s = tape.sum_cols(c)?;
        tape.scale(s, 0.5)
    }

    pub fn rsample(tape: &mut Tape, mean: Var, log_variance: Var, noise: Var) -> Result<Var> {
        let half = tape.scale(log_variance, 0.5)?;
        let std = tape.exp(half)?;
        let eps = tape.mul(std, noise)?;
        tape.add(mean, eps)
    }

    /// Squared error summed per row.
    pub fn squared_error(tape: &mut Tape, prediction: Var, target: Var) -> Result<Var> {
        let d = tape.sub(prediction, target)?;
        let d2 = tape.square(d)?;
        tape.sum_cols(d2)
    }

    /// `−Σ_k t_k log softmax(ℓ)_k` per row.
    pub fn cross_entropy(tape: &mut Tape, logits: Var, target: Var) -> Result<Var> {
        let lp = tape.log_softmax(logits)?;
        let prod = tape.mul(lp, target)?;
        let s = tape.sum_cols(prod)?;
        tape.neg(s)
    }

    /// `Σ_i m_i ℓ_i − softplus(ℓ_i)` per row.
    pub fn bernoulli_log_prob(tape: &mut Tape, logits: Var, target: Var) -> Result<Var> {
        let ml = tape.mul(logits, target)?;
        let sp = tape.softplus(logits)?;
        let d = tape.sub(ml, sp)?;
        tape.sum_cols(d)
    }
}
