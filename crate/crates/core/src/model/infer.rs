//! Imputation and joint data + mask generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::ParameterStore;
use crate::dist::{standard_normal, CategoricalHead};
use crate::error::Result;
use crate::mask::MaskMatrix;
use crate::model::network::{aggregate, VsaeNetwork};
use crate::tensor::Tensor;

impl VsaeNetwork {
    fn condition(&self, store: &ParameterStore, z: &Tensor, mask: &Tensor) -> Result<Tensor> {
        if self.config.variant.models_mask() {
            self.decode_mask_probabilities(store, z)
        } else {
            Ok(mask.clone())
        }
    }

    /// Fills every unobserved attribute of `x` from the selected proposals.
    ///
    /// Numerical cells receive the decoder mean and categorical blocks the
    /// decoder's class probabilities; observed cells are copied from `x`.
    /// With `use_mean` the latents are the proposal means and `seed` is unused.
    pub fn impute(
        &self,
        store: &ParameterStore,
        x: &Tensor,
        mask: &MaskMatrix,
        seed: u64,
        use_mean: bool,
    ) -> Result<Tensor> {
        let bundle = self.proposals(store, x, mask)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let latents: Vec<Tensor> = bundle
            .distributions
            .iter()
            .map(|g| if use_mean { g.mean.clone() } else { g.sample(&mut rng) })
            .collect();
        let z = aggregate(&latents)?;
        let condition = self.condition(store, &z, mask.as_tensor())?;
        let mut out = x.clone();
        for i in 0..self.attributes() {
            let rows: Vec<usize> = (0..x.rows()).filter(|&r| !mask.is_observed(r, i)).collect();
            if rows.is_empty() {
                continue;
            }
            let spec = self.schema.attribute(i);
            let off = self.schema.offset(i);
            let dec = self.decode_attribute(store, i, &z.select_rows(&rows), &condition.select_rows(&rows))?;
            let dec = if spec.is_numerical() {
                dec
            } else {
                CategoricalHead::new(dec).probabilities()
            };
            for (j, &r) in rows.iter().enumerate() {
                out.row_slice_mut(r)[off..off + spec.encoded_width()].copy_from_slice(dec.row_slice(j));
            }
        }
        Ok(out)
    }

    /// Draws `n` rows from the model: `z ~ N(0, I)`, a mask from the mask
    /// decoder, then every attribute conditioned on `z` and the mask
    /// probabilities. Categorical attributes are sampled and one-hot encoded.
    pub fn generate(&self, store: &ParameterStore, n: usize, seed: u64) -> Result<(Tensor, MaskMatrix)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = standard_normal(n, self.attributes() * self.latent_dim(), &mut rng);
        let probs = self.decode_mask_probabilities(store, &z)?;
        let mut mask = MaskMatrix::ones(n, self.attributes());
        for r in 0..n {
            for i in 0..self.attributes() {
                if rng.random::<f64>() >= probs.get(r, i) {
                    mask.set(r, i, false);
                }
            }
        }
        let condition = if self.config.variant.models_mask() {
            probs
        } else {
            mask.as_tensor().clone()
        };
        let mut out = Tensor::zeros(n, self.schema.encoded_width());
        for i in 0..self.attributes() {
            let spec = self.schema.attribute(i);
            let off = self.schema.offset(i);
            let dec = self.decode_attribute(store, i, &z, &condition)?;
            if spec.is_numerical() {
                for r in 0..n {
                    out.set(r, off, dec.get(r, 0));
                }
            } else {
                for (r, c) in CategoricalHead::new(dec).sample(&mut rng).into_iter().enumerate() {
                    out.set(r, off + c, 1.0);
                }
            }
        }
        Ok((out, mask))
    }
}
