//! Alternating E-step / gradient-step training with early stopping.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, ParameterStore, Tape};
use crate::data::refill_unobserved;
use crate::error::{Error, Result};
use crate::mask::MaskMatrix;
use crate::model::elbo::{draw_elbo_noise, ElboTerms};
use crate::model::network::VsaeNetwork;
use crate::tensor::Tensor;

/// Noise-filled encoding plus its mask.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedData {
    pub x: Tensor,
    pub mask: MaskMatrix,
}

impl MaskedData {
    pub fn new(x: Tensor, mask: MaskMatrix) -> Result<Self> {
        if x.rows() != mask.rows() {
            return Err(Error::Shape {
                op: "masked_data",
                lhs: x.shape().to_vec(),
                rhs: mask.as_tensor().shape().to_vec(),
            });
        }
        Ok(Self { x, mask })
    }

    pub fn rows(&self) -> usize {
        self.x.rows()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(rows),
            mask: self.mask.select_rows(rows),
        }
    }
}

/// One history line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub elbo_terms: ElboTerms,
    pub elbo: f64,
    pub validation_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters at the best validation epoch.
    pub store: ParameterStore,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
}

pub fn write_history(path: impl AsRef<Path>, history: &[EpochRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for rec in history {
        out.push_str(&serde_json::to_string(rec)?);
        out.push('\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

fn validation_seed(base: u64) -> u64 {
    base ^ 0x5eed_0f7a_11da_7e00
}

impl VsaeNetwork {
    /// E-step for one batch, skipped when the variant or the batch has no
    /// unobserved term.
    fn batch_targets(
        &self,
        store: &ParameterStore,
        data: &MaskedData,
        seed: u64,
    ) -> Result<Option<crate::model::elbo::UnobservedTargets>> {
        if !self.config.variant.uses_em() || data.mask.missing_count() == 0 {
            return Ok(None);
        }
        let c = self.sample_unobserved(store, &data.x, &data.mask, self.config.effective_em_samples(), seed)?;
        Ok(Some(c.targets()))
    }

    /// Row-weighted objective over `data` in batches, no updates.
    pub fn evaluate_objective(&self, store: &ParameterStore, data: &MaskedData, seed: u64) -> Result<ElboTerms> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut total = ElboTerms::default();
        let n = data.rows();
        let bs = self.config.batch_size;
        for start in (0..n).step_by(bs) {
            let rows: Vec<usize> = (start..(start + bs).min(n)).collect();
            let batch = data.select_rows(&rows);
            let targets = self.batch_targets(store, &batch, rng.random())?;
            let noise = draw_elbo_noise(self, batch.rows(), &mut rng);
            let mut tape = Tape::new();
            let bound = store.bind_frozen(&mut tape);
            let vars = self.elbo_vars(&mut tape, &bound, &batch.x, &batch.mask, targets.as_ref(), &noise)?;
            total.scaled_add(&vars.terms(&tape), rows.len() as f64 / n as f64);
        }
        Ok(total)
    }

    /// One E-step followed by one Adam step on a batch; returns the terms
    /// evaluated before the update.
    pub fn train_step(
        &self,
        store: &mut ParameterStore,
        batch: &MaskedData,
        adam: &AdamConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<ElboTerms> {
        let targets = self.batch_targets(store, batch, rng.random())?;
        let noise = draw_elbo_noise(self, batch.rows(), rng);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let vars = self.elbo_vars(&mut tape, &bound, &batch.x, &batch.mask, targets.as_ref(), &noise)?;
        let terms = vars.terms(&tape);
        if !terms.is_finite() {
            return Err(diverged(0, &terms));
        }
        let grads = bound.gradients(&tape.backward(vars.loss)?);
        store.adam_step(&grads, adam)?;
        Ok(terms)
    }

    /// Trains from `store`. Epoch 0 records the untrained model; each later
    /// epoch is one shuffled pass. Stops after `patience` epochs without a
    /// better validation loss (training loss when no validation set is given).
    pub fn train(
        &self,
        mut store: ParameterStore,
        train: &MaskedData,
        validation: Option<&MaskedData>,
    ) -> Result<TrainOutcome> {
        if train.rows() == 0 {
            return Err(Error::Empty("training set".into()));
        }
        let cfg = &self.config;
        let adam = AdamConfig::with_learning_rate(cfg.learning_rate);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let val_seed = validation_seed(cfg.seed);

        let score = |store: &ParameterStore, train_terms: &ElboTerms| -> Result<f64> {
            match validation {
                Some(v) => Ok(-self.evaluate_objective(store, v, val_seed)?.elbo()),
                None => Ok(-train_terms.elbo()),
            }
        };

        let initial = self.evaluate_objective(&store, train, rng.random())?;
        if !initial.is_finite() {
            return Err(diverged(0, &initial));
        }
        let initial_val = score(&store, &initial)?;
        let mut history = vec![EpochRecord {
            epoch: 0,
            elbo_terms: initial,
            elbo: initial.elbo(),
            validation_loss: initial_val,
        }];
        let mut best = (store.clone(), 0, initial_val);

        let mut order: Vec<usize> = (0..train.rows()).collect();
        for epoch in 1..=cfg.max_epochs {
            order.shuffle(&mut rng);
            let mut terms = ElboTerms::default();
            for chunk in order.chunks(cfg.batch_size) {
                let mut batch = train.select_rows(chunk);
                if cfg.refill_noise {
                    refill_unobserved(&mut batch.x, &self.schema, &batch.mask, &mut rng);
                }
                let t = self
                    .train_step(&mut store, &batch, &adam, &mut rng)
                    .map_err(|e| match e {
                        Error::Diverged {
                            observed,
                            unobserved,
                            mask,
                            kl,
                            ..
                        } => Error::Diverged {
                            epoch,
                            observed,
                            unobserved,
                            mask,
                            kl,
                        },
                        other => other,
                    })?;
                terms.scaled_add(&t, chunk.len() as f64 / train.rows() as f64);
            }
            let val = score(&store, &terms)?;
            if !val.is_finite() {
                return Err(diverged(epoch, &terms));
            }
            log::debug!("epoch {epoch}: elbo {:.5} validation loss {val:.5}", terms.elbo());
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
        Ok(TrainOutcome {
            store: best.0,
            history,
            best_epoch: best.1,
            best_validation_loss: best.2,
        })
    }
}

fn diverged(epoch: usize, t: &ElboTerms) -> Error {
    Error::Diverged {
        epoch,
        observed: t.observed,
        unobserved: t.unobserved,
        mask: t.mask,
        kl: t.kl,
    }
}
