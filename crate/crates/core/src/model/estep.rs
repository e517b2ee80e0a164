//! Completion of unobserved attributes with frozen parameters.
//!
//! Latents of observed attributes come from their attributive posteriors,
//! latents of unobserved ones from the prior (or, if configured, from the
//! collective posterior). Numerical completions take the decoder mean;
//! categorical completions are classes drawn from the decoder softmax,
//! one-hot encoded. Nothing here touches a tape.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::ParameterStore;
use crate::dist::CategoricalHead;
use crate::error::Result;
use crate::mask::MaskMatrix;
use crate::model::config::{EStepLatents, Variant};
use crate::model::elbo::UnobservedTargets;
use crate::model::network::VsaeNetwork;
use crate::tensor::Tensor;

/// `S` completed copies of the encoded batch. Observed columns hold the input
/// unchanged; unobserved columns hold the completion.
#[derive(Clone, Debug, PartialEq)]
pub struct Completions {
    pub samples: Vec<Tensor>,
}

impl Completions {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Per-cell mean and population variance over the samples.
    pub fn targets(&self) -> UnobservedTargets {
        let s = self.samples.len() as f64;
        let first = &self.samples[0];
        let mut mean = Tensor::zeros(first.rows(), first.cols());
        for t in &self.samples {
            for (m, v) in mean.values_mut().iter_mut().zip(t.values()) {
                *m += v;
            }
        }
        mean.values_mut().iter_mut().for_each(|m| *m /= s);
        let mut variance = Tensor::zeros(first.rows(), first.cols());
        for t in &self.samples {
            for ((acc, v), m) in variance.values_mut().iter_mut().zip(t.values()).zip(mean.values()) {
                *acc += (v - m).powi(2);
            }
        }
        variance.values_mut().iter_mut().for_each(|v| *v /= s);
        UnobservedTargets { mean, variance }
    }
}

impl VsaeNetwork {
    /// Draws `count` completions of every unobserved attribute of `x`.
    pub fn sample_unobserved(
        &self,
        store: &ParameterStore,
        x: &Tensor,
        mask: &MaskMatrix,
        count: usize,
        seed: u64,
    ) -> Result<Completions> {
        let count = count.max(1);
        let (n, m, d) = (x.rows(), self.attributes(), self.latent_dim());
        let mut samples = vec![x.clone(); count];
        if mask.missing_count() == 0 {
            return Ok(Completions { samples });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let collective_only = self.config.variant == Variant::CollectiveOnly;
        let need_collective = collective_only || self.config.estep_latents == EStepLatents::Collective;
        let attributive = if collective_only {
            Vec::new()
        } else {
            self.encode_attributive_all(store, x)?
        };
        let collective = if need_collective {
            self.encode_collective(store, x, mask)?
        } else {
            Vec::new()
        };

        let mut z = Tensor::zeros(count * n, m * d);
        for s in 0..count {
            for r in 0..n {
                let row = z.row_slice_mut(s * n + r);
                for i in 0..m {
                    let source = if mask.is_observed(r, i) {
                        Some(if collective_only {
                            &collective[i]
                        } else {
                            &attributive[i]
                        })
                    } else if self.config.estep_latents == EStepLatents::Collective {
                        Some(&collective[i])
                    } else {
                        None
                    };
                    for k in 0..d {
                        let e: f64 = rng.sample(StandardNormal);
                        row[i * d + k] = match source {
                            Some(g) => g.mean.get(r, k) + (0.5 * g.log_variance.get(r, k)).exp() * e,
                            None => e,
                        };
                    }
                }
            }
        }

        let condition = if self.config.variant.models_mask() {
            self.decode_mask_probabilities(store, &z)?
        } else {
            let rows: Vec<usize> = (0..count).flat_map(|_| 0..n).collect();
            mask.as_tensor().select_rows(&rows)
        };
        let inputs = Tensor::concat_cols(&[&z, &condition])?;

        for i in 0..m {
            let picked: Vec<usize> = (0..count)
                .flat_map(|s| (0..n).filter(move |&r| !mask.is_observed(r, i)).map(move |r| s * n + r))
                .collect();
            if picked.is_empty() {
                continue;
            }
            let spec = self.schema.attribute(i);
            let off = self.schema.offset(i);
            let out = self.data_decoder(i).eval(store, &inputs.select_rows(&picked))?;
            if spec.is_numerical() {
                for (j, &row) in picked.iter().enumerate() {
                    samples[row / n].set(row % n, off, out.get(j, 0));
                }
            } else {
                let classes = CategoricalHead::new(out).sample(&mut rng);
                for (&row, &c) in picked.iter().zip(&classes) {
                    let target = samples[row / n].row_slice_mut(row % n);
                    target[off..off + spec.encoded_width()]
                        .iter_mut()
                        .for_each(|v| *v = 0.0);
                    target[off + c] = 1.0;
                }
            }
        }
        Ok(Completions { samples })
    }
}
