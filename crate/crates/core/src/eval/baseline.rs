//! A plain VAE with one joint encoder and one joint decoder, trained on the
//! observed cells only.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{AdamConfig, Bound, Mlp, MlpSpec, ParameterStore, Tape, Var};
use crate::data::{expand_mask, DatasetSchema, NormalizationStats};
use crate::dist::{standard_normal, terms, CategoricalHead, LOG_VARIANCE_MAX, LOG_VARIANCE_MIN};
use crate::error::{Error, Result};
use crate::mask::MaskMatrix;
use crate::model::{ElboTerms, EpochRecord, MaskedData, VsaeConfig};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct BaselineVae {
    pub schema: DatasetSchema,
    pub stats: NormalizationStats,
    pub config: VsaeConfig,
    pub latent_width: usize,
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub store: ParameterStore,
}

fn specs(schema: &DatasetSchema, config: &VsaeConfig, width: usize) -> (MlpSpec, MlpSpec) {
    let w = schema.encoded_width();
    let latent = schema.len() * config.latent_dim;
    let layers = config.encoder_hidden.len().max(1);
    let mut enc = MlpSpec::new(w, &vec![width; layers], 2 * latent);
    let mut dec = MlpSpec::new(latent, &vec![width; layers], w);
    enc.hidden_activation = config.hidden_activation;
    dec.hidden_activation = config.hidden_activation;
    (enc, dec)
}

/// Smallest hidden width whose encoder + decoder hold at least `target`
/// parameters.
pub fn width_for_parameter_budget(schema: &DatasetSchema, config: &VsaeConfig, target: usize) -> usize {
    let mut width = 1;
    loop {
        let (e, d) = specs(schema, config, width);
        if e.parameter_count() + d.parameter_count() >= target {
            return width;
        }
        width += 1;
    }
}

impl BaselineVae {
    /// Sized to at least `min_parameters` weights.
    pub fn new(
        schema: DatasetSchema,
        stats: NormalizationStats,
        config: VsaeConfig,
        min_parameters: usize,
    ) -> Result<Self> {
        config.validate()?;
        let width = width_for_parameter_budget(&schema, &config, min_parameters);
        let (e, d) = specs(&schema, &config, width);
        let encoder = Mlp::new("enc", e)?;
        let decoder = Mlp::new("dec", d)?;
        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        encoder.initialize(&mut store, &mut rng);
        decoder.initialize(&mut store, &mut rng);
        Ok(Self {
            latent_width: schema.len() * config.latent_dim,
            schema,
            stats,
            config,
            encoder,
            decoder,
            store,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.store.parameter_count()
    }

    fn loss_vars(&self, tape: &mut Tape, bound: &Bound, data: &MaskedData, noise: &Tensor) -> Result<(Var, ElboTerms)> {
        let n = data.rows();
        let l = self.latent_width;
        let x = tape.constant(data.x.clone());
        let h = self.encoder.forward(tape, bound, x)?;
        let mu = tape.slice_cols(h, 0, l)?;
        let lv = tape.slice_cols(h, l, l)?;
        let lv = tape.clamp(lv, LOG_VARIANCE_MIN, LOG_VARIANCE_MAX)?;
        let eps = tape.constant(noise.clone());
        let z = terms::rsample(tape, mu, lv, eps)?;
        let out = self.decoder.forward(tape, bound, z)?;

        let inv_two_var = 1.0 / (2.0 * self.config.numerical_variance);
        let mut nll_parts = Vec::new();
        for (i, spec) in self.schema.attributes().iter().enumerate() {
            let (off, w) = (self.schema.offset(i), spec.encoded_width());
            let o = tape.slice_cols(out, off, w)?;
            let t = tape.constant(data.x.cols_range(off, w));
            let nll = if spec.is_numerical() {
                let se = terms::squared_error(tape, o, t)?;
                tape.scale(se, inv_two_var)?
            } else {
                terms::cross_entropy(tape, o, t)?
            };
            let m = tape.constant(data.mask.column(i));
            nll_parts.push(tape.mul(nll, m)?);
        }
        let all = tape.concat(&nll_parts)?;
        let s = tape.sum(all)?;
        let observed = tape.scale(s, -1.0 / n as f64)?;
        let kl_rows = terms::kl_standard_normal(tape, mu, lv)?;
        let kl = tape.mean(kl_rows)?;
        let elbo = tape.sub(observed, kl)?;
        let loss = tape.neg(elbo)?;
        let terms = ElboTerms {
            observed: tape.value(observed).item(),
            kl: tape.value(kl).item(),
            ..Default::default()
        };
        Ok((loss, terms))
    }

    fn objective(&self, store: &ParameterStore, data: &MaskedData, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = standard_normal(data.rows(), self.latent_width, &mut rng);
        let mut tape = Tape::new();
        let bound = store.bind_frozen(&mut tape);
        Ok(-self.loss_vars(&mut tape, &bound, data, &noise)?.1.elbo())
    }

    /// Same optimizer, batch size, epoch budget and early stopping as the
    /// main model.
    pub fn train(&mut self, train: &MaskedData, validation: Option<&MaskedData>) -> Result<Vec<EpochRecord>> {
        let cfg = self.config.clone();
        let adam = AdamConfig::with_learning_rate(cfg.learning_rate);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xba5e);
        let score_data = validation.unwrap_or(train);
        let val_seed = cfg.seed ^ 0x7e57;
        let mut store = self.store.clone();
        let first = self.objective(&store, score_data, val_seed)?;
        let mut history = vec![EpochRecord {
            epoch: 0,
            elbo_terms: ElboTerms::default(),
            elbo: -first,
            validation_loss: first,
        }];
        let mut best = (store.clone(), 0, first);
        let mut order: Vec<usize> = (0..train.rows()).collect();
        for epoch in 1..=cfg.max_epochs {
            order.shuffle(&mut rng);
            let mut terms = ElboTerms::default();
            for chunk in order.chunks(cfg.batch_size) {
                let batch = train.select_rows(chunk);
                let noise = standard_normal(batch.rows(), self.latent_width, &mut rng);
                let mut tape = Tape::new();
                let bound = store.bind(&mut tape);
                let (loss, t) = self.loss_vars(&mut tape, &bound, &batch, &noise)?;
                if !t.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        observed: t.observed,
                        unobserved: 0.0,
                        mask: 0.0,
                        kl: t.kl,
                    });
                }
                let grads = bound.gradients(&tape.backward(loss)?);
                store.adam_step(&grads, &adam)?;
                terms.scaled_add(&t, chunk.len() as f64 / train.rows() as f64);
            }
            let val = self.objective(&store, score_data, val_seed)?;
            history.push(EpochRecord {
                epoch,
                elbo_terms: terms,
                elbo: terms.elbo(),
                validation_loss: val,
            });
            if val < best.2 {
                best = (store.clone(), epoch, val);
            } else if epoch - best.1 >= cfg.patience {
                break;
            }
        }
        self.store = best.0;
        Ok(history)
    }

    /// Decodes from the posterior mean; observed cells pass through.
    pub fn impute(&self, x: &Tensor, mask: &MaskMatrix) -> Result<Tensor> {
        let h = self.encoder.eval(&self.store, x)?;
        let mu = h.cols_range(0, self.latent_width);
        let out = self.decoder.eval(&self.store, &mu)?;
        let observed = expand_mask(mask, &self.schema);
        let mut done = x.clone();
        for (i, spec) in self.schema.attributes().iter().enumerate() {
            let (off, w) = (self.schema.offset(i), spec.encoded_width());
            let block = out.cols_range(off, w);
            let block = if spec.is_numerical() {
                block
            } else {
                CategoricalHead::new(block).probabilities()
            };
            for r in 0..x.rows() {
                if observed.get(r, off) == 0.0 {
                    done.row_slice_mut(r)[off..off + w].copy_from_slice(block.row_slice(r));
                }
            }
        }
        Ok(done)
    }
}
