//! Scoring an imputer on a masked test split.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{decode, encode, encode_complete, DatasetSchema, NormalizationStats, RecordBatch};
use crate::error::{Error, Result};
use crate::eval::baseline::BaselineVae;
use crate::eval::metrics::{feature_stds, nrmse, nrmse_pooled, pfc};
use crate::mask::{MaskMatrix, MechanismSpec};
use crate::model::TrainedModel;
use crate::tensor::Tensor;

/// Anything that fills unobserved cells of a noise-filled encoding.
pub trait Imputer {
    fn schema(&self) -> &DatasetSchema;
    fn stats(&self) -> &NormalizationStats;
    fn impute_encoded(&self, x: &Tensor, mask: &MaskMatrix, seed: u64) -> Result<Tensor>;
}

/// The main model, imputing from proposal means or from a sampled latent.
pub struct VsaeImputer<'a> {
    pub model: &'a TrainedModel,
    pub use_mean: bool,
}

impl Imputer for VsaeImputer<'_> {
    fn schema(&self) -> &DatasetSchema {
        self.model.schema()
    }
    fn stats(&self) -> &NormalizationStats {
        &self.model.stats
    }
    fn impute_encoded(&self, x: &Tensor, mask: &MaskMatrix, seed: u64) -> Result<Tensor> {
        self.model
            .network
            .impute(&self.model.store, x, mask, seed, self.use_mean)
    }
}

impl Imputer for BaselineVae {
    fn schema(&self) -> &DatasetSchema {
        &self.schema
    }
    fn stats(&self) -> &NormalizationStats {
        &self.stats
    }
    fn impute_encoded(&self, x: &Tensor, mask: &MaskMatrix, _seed: u64) -> Result<Tensor> {
        self.impute(x, mask)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeError {
    pub name: String,
    pub kind: String,
    pub imputed_cells: usize,
    /// `RMSE / σ` for numerical attributes, misclassification rate otherwise.
    pub error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputationReport {
    pub per_attribute: Vec<AttributeError>,
    pub nrmse: Option<f64>,
    /// Pooled alternative: one RMSE over all masked numerical cells in the
    /// min-max space, divided by their deviation.
    pub nrmse_pooled: Option<f64>,
    pub pfc: Option<f64>,
    pub imputed_cells: usize,
    pub excluded_features: Vec<String>,
    pub mechanism: Option<MechanismSpec>,
    pub missing_ratio: f64,
    pub seed: u64,
}

/// Encodes `test` under `mask` (noise seeded by `seed`), imputes, decodes and
/// scores the masked cells.
pub fn evaluate_imputation(
    imputer: &dyn Imputer,
    test: &RecordBatch,
    mask: &MaskMatrix,
    mechanism: Option<&MechanismSpec>,
    seed: u64,
) -> Result<ImputationReport> {
    let schema = imputer.schema();
    let stats = imputer.stats();
    let x = encode(test, schema, stats, mask, seed)?;
    let completed = imputer.impute_encoded(&x, mask, seed)?;
    let imputed = decode(&completed, schema, stats)?;
    score_imputation(schema, stats, test, &imputed, &completed, mask, mechanism, seed)
}

#[allow(clippy::too_many_arguments)]
pub fn score_imputation(
    schema: &DatasetSchema,
    stats: &NormalizationStats,
    truth: &RecordBatch,
    imputed: &RecordBatch,
    completed: &Tensor,
    mask: &MaskMatrix,
    mechanism: Option<&MechanismSpec>,
    seed: u64,
) -> Result<ImputationReport> {
    let stds = feature_stds(truth);
    let num = match nrmse(truth, imputed, mask, schema, &stds) {
        Ok(r) => Some(r),
        Err(Error::NothingToScore(_)) => None,
        Err(e) => return Err(e),
    };
    let cat = match pfc(truth, imputed, mask, schema) {
        Ok(r) => Some(r),
        Err(Error::NothingToScore(_)) => None,
        Err(e) => return Err(e),
    };
    if num.is_none() && cat.is_none() {
        return Err(Error::NothingToScore("no masked cells"));
    }

    let clean = encode_complete(truth, schema, stats)?;
    let (mut t_cells, mut p_cells) = (Vec::new(), Vec::new());
    for i in schema.numerical_indices() {
        let off = schema.offset(i);
        for r in (0..truth.rows()).filter(|&r| !mask.is_observed(r, i)) {
            t_cells.push(clean.get(r, off));
            p_cells.push(completed.get(r, off));
        }
    }
    let pooled = nrmse_pooled(&t_cells, &p_cells).ok();

    let scores: Vec<_> = num
        .iter()
        .chain(cat.iter())
        .flat_map(|m| m.per_feature.iter().map(|f| (f.attribute, f.score)))
        .collect();
    let per_attribute = schema
        .attributes()
        .iter()
        .enumerate()
        .map(|(i, a)| AttributeError {
            name: a.name.clone(),
            kind: if a.is_numerical() { "numerical" } else { "categorical" }.into(),
            imputed_cells: (0..mask.rows()).filter(|&r| !mask.is_observed(r, i)).count(),
            error: scores.iter().find(|s| s.0 == i).map(|s| s.1),
        })
        .collect();
    Ok(ImputationReport {
        per_attribute,
        nrmse: num.as_ref().map(|r| r.value),
        nrmse_pooled: pooled,
        pfc: cat.as_ref().map(|r| r.value),
        imputed_cells: mask.missing_count(),
        excluded_features: num
            .map(|r| r.excluded.iter().map(|&i| schema.attribute(i).name.clone()).collect())
            .unwrap_or_default(),
        mechanism: mechanism.cloned(),
        missing_ratio: mask.stats().missing_proportion,
        seed,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

impl fmt::Display for ImputationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .per_attribute
            .iter()
            .map(|a| a.name.len())
            .max()
            .unwrap_or(9)
            .max(9);
        writeln!(
            f,
            "{:<width$}  {:<11}  {:>7}  {:>8}",
            "attribute", "kind", "cells", "error"
        )?;
        for a in &self.per_attribute {
            writeln!(
                f,
                "{:<width$}  {:<11}  {:>7}  {:>8}",
                a.name,
                a.kind,
                a.imputed_cells,
                opt(a.error)
            )?;
        }
        writeln!(
            f,
            "nrmse {}  nrmse_pooled {}  pfc {}",
            opt(self.nrmse),
            opt(self.nrmse_pooled),
            opt(self.pfc)
        )?;
        write!(
            f,
            "imputed cells {}  missing ratio {:.4}  seed {}",
            self.imputed_cells, self.missing_ratio, self.seed
        )
    }
}

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std, n })
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.mean, self.std)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{fit_normalizer, AttributeSpec};

    struct Oracle(DatasetSchema, NormalizationStats, Tensor);

    impl Imputer for Oracle {
        fn schema(&self) -> &DatasetSchema {
            &self.0
        }
        fn stats(&self) -> &NormalizationStats {
            &self.1
        }
        fn impute_encoded(&self, _x: &Tensor, _m: &MaskMatrix, _s: u64) -> Result<Tensor> {
            Ok(self.2.clone())
        }
    }

    #[test]
    fn perfect_imputer_scores_zero_and_renders() {
        let schema = DatasetSchema::new(vec![
            AttributeSpec::numerical("a"),
            AttributeSpec::categorical("b", ["x", "y"]),
        ])
        .unwrap();
        let truth = RecordBatch::new(Tensor::matrix(4, 2, vec![0.0, 0.0, 1.0, 1.0, 2.0, 1.0, 3.0, 0.0]).unwrap());
        let stats = fit_normalizer(&truth, &schema, None).unwrap();
        let clean = encode_complete(&truth, &schema, &stats).unwrap();
        let mask =
            MaskMatrix::new(Tensor::matrix(4, 2, vec![0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0]).unwrap()).unwrap();
        let r = evaluate_imputation(&Oracle(schema, stats, clean), &truth, &mask, None, 3).unwrap();
        assert_eq!(r.nrmse, Some(0.0));
        assert_eq!(r.pfc, Some(0.0));
        assert_eq!(r.imputed_cells, 4);
        assert!(r.to_string().contains("nrmse 0.0000"));
    }

    #[test]
    fn summary_mean_std() {
        let s = Summary::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.std), (2.0, 1.0));
        assert!(Summary::of(&[]).is_none());
    }
}
