//! The training objective.
//!
//! Per row: observed log-likelihood + expected log-likelihood of the
//! unobserved attributes under the E-step completions + mask log-likelihood −
//! Σ_i KL(q(z_i|·) ‖ N(0, I)). Everything is averaged over rows.
//!
//! The completions enter only through their per-cell mean and variance: the
//! average squared error over `S` samples is `(p − x̄)² + var`, and the average
//! cross-entropy against `S` one-hot samples is the cross-entropy against
//! their mean.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bound, ParameterStore, Tape, Var};
use crate::dist::{standard_normal, terms};
use crate::error::{Error, Result};
use crate::mask::MaskMatrix;
use crate::model::network::VsaeNetwork;
use crate::tensor::Tensor;

/// Per-cell mean and population variance of the E-step completions, `(n, W)`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnobservedTargets {
    pub mean: Tensor,
    pub variance: Tensor,
}

/// Row-averaged objective terms. `observed`, `unobserved` and `mask` are
/// log-likelihoods; `kl` enters with a minus sign.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ElboTerms {
    pub observed: f64,
    pub unobserved: f64,
    pub mask: f64,
    pub kl: f64,
}

impl ElboTerms {
    pub fn elbo(&self) -> f64 {
        self.observed + self.unobserved + self.mask - self.kl
    }

    pub fn is_finite(&self) -> bool {
        [self.observed, self.unobserved, self.mask, self.kl]
            .iter()
            .all(|v| v.is_finite())
    }

    pub(crate) fn scaled_add(&mut self, other: &ElboTerms, w: f64) {
        self.observed += w * other.observed;
        self.unobserved += w * other.unobserved;
        self.mask += w * other.mask;
        self.kl += w * other.kl;
    }
}

/// Tape handles of one objective evaluation; all scalars `(1,1)`.
#[derive(Clone, Debug)]
pub struct ElboVars {
    /// `−ELBO`, the quantity minimized.
    pub loss: Var,
    pub observed: Var,
    pub unobserved: Option<Var>,
    pub mask: Option<Var>,
    pub kl: Var,
    /// Row-averaged KL of each attribute's latent.
    pub kl_per_attribute: Vec<Var>,
    /// Row-summed data log-likelihood per attribute, observed and unobserved
    /// cells separately (the latter zero-weighted when absent).
    pub data_ll_per_attribute: Vec<(Var, Option<Var>)>,
}

impl ElboVars {
    pub fn terms(&self, tape: &Tape) -> ElboTerms {
        let v = |x: Option<Var>| x.map_or(0.0, |x| tape.value(x).item());
        ElboTerms {
            observed: tape.value(self.observed).item(),
            unobserved: v(self.unobserved),
            mask: v(self.mask),
            kl: tape.value(self.kl).item(),
        }
    }
}

/// Standard-normal reparameterization noise, one `(n, M·d)` draw per
/// Monte-Carlo sample.
pub fn draw_elbo_noise(net: &VsaeNetwork, rows: usize, rng: &mut ChaCha8Rng) -> Vec<Tensor> {
    let width = net.attributes() * net.latent_dim();
    (0..net.config.mc_samples)
        .map(|_| standard_normal(rows, width, rng))
        .collect()
}

impl VsaeNetwork {
    /// Records the objective for a batch. `x` is the noise-filled encoding.
    pub fn elbo_vars(
        &self,
        tape: &mut Tape,
        params: &Bound,
        x: &Tensor,
        mask: &MaskMatrix,
        targets: Option<&UnobservedTargets>,
        noise: &[Tensor],
    ) -> Result<ElboVars> {
        let n = x.rows();
        let m = self.attributes();
        if mask.rows() != n || mask.cols() != m {
            return Err(Error::Shape {
                op: "elbo",
                lhs: x.shape().to_vec(),
                rhs: mask.as_tensor().shape().to_vec(),
            });
        }
        if noise.is_empty() {
            return Err(Error::Config("elbo needs at least one noise draw".into()));
        }
        let any_unobserved = mask.missing_count() > 0;
        let use_unobserved = self.config.variant.uses_em() && any_unobserved;
        if use_unobserved && targets.is_none() {
            return Err(Error::Config(
                "unobserved attributes present but no completions were provided".into(),
            ));
        }
        if let Some(t) = targets {
            if t.mean.shape() != x.shape() || t.variance.shape() != x.shape() {
                return Err(Error::Shape {
                    op: "elbo",
                    lhs: x.shape().to_vec(),
                    rhs: t.mean.shape().to_vec(),
                });
            }
        }

        let xv = tape.constant(x.clone());
        let mv = tape.constant(mask.as_tensor().clone());
        let attributive = self.encode_attributive_vars(tape, params, xv)?;
        let collective = self.encode_collective_vars(tape, params, xv, mv)?;
        let post = self.select_vars(tape, mask, &attributive, &collective)?;

        let mut kl_rows = Vec::with_capacity(m);
        let mut kl_per_attribute = Vec::with_capacity(m);
        for i in 0..m {
            let k = terms::kl_standard_normal(tape, post.mean[i], post.log_variance[i])?;
            kl_per_attribute.push(tape.mean(k)?);
            kl_rows.push(k);
        }
        let kl = {
            let all = tape.concat(&kl_rows)?;
            let s = tape.sum(all)?;
            tape.scale(s, 1.0 / n as f64)?
        };

        let inv_two_var = 1.0 / (2.0 * self.config.numerical_variance);
        let observed_cols: Vec<Var> = (0..m).map(|i| tape.constant(mask.column(i))).collect();
        let unobserved_cols: Vec<Var> = (0..m).map(|i| tape.constant(mask.column(i).map(|v| 1.0 - v))).collect();
        let mc = noise.len() as f64;

        let mut observed_acc: Option<Var> = None;
        let mut unobserved_acc: Option<Var> = None;
        let mut mask_acc: Option<Var> = None;
        let mut data_ll_per_attribute: Vec<(Option<Var>, Option<Var>)> = vec![(None, None); m];
        let accumulate = |tape: &mut Tape, acc: &mut Option<Var>, v: Var| -> Result<()> {
            *acc = Some(match *acc {
                Some(a) => tape.add(a, v)?,
                None => v,
            });
            Ok(())
        };

        for eps in noise {
            let eps = tape.constant(eps.clone());
            let d = self.latent_dim();
            let mut zs = Vec::with_capacity(m);
            for i in 0..m {
                let e = tape.slice_cols(eps, i * d, d)?;
                zs.push(terms::rsample(tape, post.mean[i], post.log_variance[i], e)?);
            }
            let z = tape.concat(&zs)?;
            let logits = self.decode_mask_var(tape, params, z)?;
            let condition = if self.config.variant.models_mask() {
                let ll = terms::bernoulli_log_prob(tape, logits, mv)?;
                let s = tape.sum(ll)?;
                let s = tape.scale(s, 1.0 / (n as f64 * mc))?;
                accumulate(tape, &mut mask_acc, s)?;
                tape.sigmoid(logits)?
            } else {
                mv
            };
            let dec_in = tape.concat(&[z, condition])?;

            for i in 0..m {
                let spec = self.schema.attribute(i);
                let (off, w) = (self.schema.offset(i), spec.encoded_width());
                let out = self.decode_attribute_var(tape, params, i, dec_in)?;
                let target = tape.constant(x.cols_range(off, w));
                let nll = if spec.is_numerical() {
                    let se = terms::squared_error(tape, out, target)?;
                    tape.scale(se, inv_two_var)?
                } else {
                    terms::cross_entropy(tape, out, target)?
                };
                let weighted = tape.mul(nll, observed_cols[i])?;
                let s = tape.sum(weighted)?;
                let ll = tape.scale(s, -1.0 / mc)?;
                accumulate(tape, &mut data_ll_per_attribute[i].0, ll)?;

                if use_unobserved {
                    let t = targets.expect("checked above");
                    let mean = tape.constant(t.mean.cols_range(off, w));
                    let nll = if spec.is_numerical() {
                        let se = terms::squared_error(tape, out, mean)?;
                        let var = tape.constant(t.variance.cols_range(off, w));
                        let var_sum = tape.sum_cols(var)?;
                        let total = tape.add(se, var_sum)?;
                        tape.scale(total, inv_two_var)?
                    } else {
                        terms::cross_entropy(tape, out, mean)?
                    };
                    let weighted = tape.mul(nll, unobserved_cols[i])?;
                    let s = tape.sum(weighted)?;
                    let ll = tape.scale(s, -1.0 / mc)?;
                    accumulate(tape, &mut data_ll_per_attribute[i].1, ll)?;
                }
            }
        }

        let per_attr: Vec<(Var, Option<Var>)> = data_ll_per_attribute
            .into_iter()
            .map(|(o, u)| (o.expect("at least one noise draw"), u))
            .collect();
        for (o, u) in &per_attr {
            accumulate(tape, &mut observed_acc, *o)?;
            if let Some(u) = u {
                accumulate(tape, &mut unobserved_acc, *u)?;
            }
        }
        let observed = tape.scale(observed_acc.expect("M >= 2"), 1.0 / n as f64)?;
        let unobserved = unobserved_acc.map(|u| tape.scale(u, 1.0 / n as f64)).transpose()?;

        let mut elbo = tape.sub(observed, kl)?;
        if let Some(u) = unobserved {
            elbo = tape.add(elbo, u)?;
        }
        if let Some(mk) = mask_acc {
            elbo = tape.add(elbo, mk)?;
        }
        let loss = tape.neg(elbo)?;
        Ok(ElboVars {
            loss,
            observed,
            unobserved,
            mask: mask_acc,
            kl,
            kl_per_attribute,
            data_ll_per_attribute: per_attr,
        })
    }

    /// Evaluates the objective without recording gradients.
    pub fn elbo(
        &self,
        store: &ParameterStore,
        x: &Tensor,
        mask: &MaskMatrix,
        targets: Option<&UnobservedTargets>,
        noise_seed: u64,
    ) -> Result<ElboTerms> {
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let noise = draw_elbo_noise(self, x.rows(), &mut rng);
        let mut tape = Tape::new();
        let bound = store.bind_frozen(&mut tape);
        let vars = self.elbo_vars(&mut tape, &bound, x, mask, targets, &noise)?;
        Ok(vars.terms(&tape))
    }
}
