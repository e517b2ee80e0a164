//! Imputation error metrics. Only cells whose mask bit is 0 are scored.

use serde::{Deserialize, Serialize};

use crate::data::{DatasetSchema, RecordBatch};
use crate::error::{Error, Result};
use crate::mask::MaskMatrix;

/// Features whose ground-truth deviation is below this are skipped.
pub const MIN_FEATURE_STD: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub attribute: usize,
    pub cells: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub value: f64,
    pub per_feature: Vec<FeatureScore>,
    /// Numerical features left out because their deviation is ~0.
    pub excluded: Vec<usize>,
}

/// Population standard deviation of one column.
pub fn column_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Ground-truth deviation of every attribute over the rows of `truth`.
pub fn feature_stds(truth: &RecordBatch) -> Vec<f64> {
    (0..truth.attributes()).map(|i| column_std(&truth.column(i))).collect()
}

fn masked_rows(mask: &MaskMatrix, i: usize) -> Vec<usize> {
    (0..mask.rows()).filter(|&r| !mask.is_observed(r, i)).collect()
}

fn check(truth: &RecordBatch, imputed: &RecordBatch, mask: &MaskMatrix) -> Result<()> {
    if truth.values().shape() != imputed.values().shape() || truth.values().shape() != mask.as_tensor().shape() {
        return Err(Error::Shape {
            op: "metric",
            lhs: truth.values().shape().to_vec(),
            rhs: imputed.values().shape().to_vec(),
        });
    }
    Ok(())
}

/// Mean over numerical features of `RMSE_f / σ_f`, RMSE over masked cells.
pub fn nrmse(
    truth: &RecordBatch,
    imputed: &RecordBatch,
    mask: &MaskMatrix,
    schema: &DatasetSchema,
    stds: &[f64],
) -> Result<MetricResult> {
    check(truth, imputed, mask)?;
    let mut per_feature = Vec::new();
    let mut excluded = Vec::new();
    for i in schema.numerical_indices() {
        let rows = masked_rows(mask, i);
        if rows.is_empty() {
            continue;
        }
        if stds[i] < MIN_FEATURE_STD {
            excluded.push(i);
            continue;
        }
        let mse = rows
            .iter()
            .map(|&r| (truth.get(r, i) - imputed.get(r, i)).powi(2))
            .sum::<f64>()
            / rows.len() as f64;
        per_feature.push(FeatureScore {
            attribute: i,
            cells: rows.len(),
            score: mse.sqrt() / stds[i],
        });
    }
    if per_feature.is_empty() {
        return Err(Error::NothingToScore("no masked numerical cells"));
    }
    let value = per_feature.iter().map(|f| f.score).sum::<f64>() / per_feature.len() as f64;
    Ok(MetricResult {
        value,
        per_feature,
        excluded,
    })
}

/// Single pooled ratio: RMSE over every masked numerical cell in the encoded
/// (min-max) space divided by the deviation of those cells' ground truth.
pub fn nrmse_pooled(truth_encoded: &[f64], imputed_encoded: &[f64]) -> Result<f64> {
    if truth_encoded.is_empty() {
        return Err(Error::NothingToScore("no masked numerical cells"));
    }
    let n = truth_encoded.len() as f64;
    let mse = truth_encoded
        .iter()
        .zip(imputed_encoded)
        .map(|(t, p)| (t - p).powi(2))
        .sum::<f64>()
        / n;
    let std = column_std(truth_encoded);
    if std < MIN_FEATURE_STD {
        return Err(Error::NothingToScore("masked numerical cells have zero deviation"));
    }
    Ok(mse.sqrt() / std)
}

/// Mean over categorical features of the misclassification rate.
pub fn pfc(
    truth: &RecordBatch,
    imputed: &RecordBatch,
    mask: &MaskMatrix,
    schema: &DatasetSchema,
) -> Result<MetricResult> {
    check(truth, imputed, mask)?;
    let mut per_feature = Vec::new();
    for i in schema.categorical_indices() {
        let rows = masked_rows(mask, i);
        if rows.is_empty() {
            continue;
        }
        let wrong = rows.iter().filter(|&&r| truth.get(r, i) != imputed.get(r, i)).count();
        per_feature.push(FeatureScore {
            attribute: i,
            cells: rows.len(),
            score: wrong as f64 / rows.len() as f64,
        });
    }
    if per_feature.is_empty() {
        return Err(Error::NothingToScore("no masked categorical cells"));
    }
    let value = per_feature.iter().map(|f| f.score).sum::<f64>() / per_feature.len() as f64;
    Ok(MetricResult {
        value,
        per_feature,
        excluded: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::AttributeSpec;
    use crate::tensor::Tensor;
    use proptest::prelude::*;

    fn num_schema() -> DatasetSchema {
        DatasetSchema::new(vec![AttributeSpec::numerical("a"), AttributeSpec::numerical("b")]).unwrap()
    }

    fn batch(cols: &[&[f64]]) -> RecordBatch {
        let n = cols[0].len();
        RecordBatch::new(Tensor::from_fn(n, cols.len(), |r, c| cols[c][r]))
    }

    fn mask(cols: &[&[f64]]) -> MaskMatrix {
        MaskMatrix::new(batch(cols).values().clone()).unwrap()
    }

    #[test]
    fn perfect_imputation_scores_zero() {
        let t = batch(&[&[0.0, 2.0], &[1.0, 3.0]]);
        let m = mask(&[&[0.0, 0.0], &[0.0, 1.0]]);
        let r = nrmse(&t, &t, &m, &num_schema(), &feature_stds(&t)).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn hand_computed_unit_nrmse() {
        let t = batch(&[&[0.0, 2.0], &[5.0, 5.0]]);
        let p = batch(&[&[1.0, 1.0], &[5.0, 5.0]]);
        let m = mask(&[&[0.0, 0.0], &[1.0, 1.0]]);
        let stds = feature_stds(&t);
        assert_eq!(stds[0], 1.0);
        let r = nrmse(&t, &p, &m, &num_schema(), &stds).unwrap();
        assert_eq!(r.value, 1.0);
        assert!(r.excluded.is_empty());
    }

    #[test]
    fn zero_deviation_feature_is_excluded() {
        let t = batch(&[&[0.0, 2.0], &[5.0, 5.0]]);
        let p = batch(&[&[1.0, 1.0], &[4.0, 6.0]]);
        let m = MaskMatrix::zeros(2, 2);
        let r = nrmse(&t, &p, &m, &num_schema(), &feature_stds(&t)).unwrap();
        assert_eq!(r.excluded, vec![1]);
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn nothing_masked_is_an_error() {
        let t = batch(&[&[0.0, 2.0], &[1.0, 3.0]]);
        let err = nrmse(&t, &t, &MaskMatrix::ones(2, 2), &num_schema(), &feature_stds(&t)).unwrap_err();
        assert!(err.to_string().contains("nothing to score"));
    }

    fn cat_schema() -> DatasetSchema {
        DatasetSchema::new(vec![
            AttributeSpec::categorical("a", ["x", "y"]),
            AttributeSpec::categorical("b", ["x", "y", "z"]),
        ])
        .unwrap()
    }

    #[test]
    fn pfc_examples() {
        let t = batch(&[&[0.0, 1.0, 0.0, 1.0, 0.0], &[2.0, 2.0, 1.0, 0.0, 0.0]]);
        let m = MaskMatrix::zeros(5, 2);
        assert_eq!(pfc(&t, &t, &m, &cat_schema()).unwrap().value, 0.0);
        let wrong = batch(&[&[1.0, 0.0, 1.0, 0.0, 1.0], &[0.0, 0.0, 0.0, 1.0, 1.0]]);
        assert_eq!(pfc(&t, &wrong, &m, &cat_schema()).unwrap().value, 1.0);
        // feature a: one of five wrong (0.2); feature b: two of five wrong (0.4)
        let some = batch(&[&[1.0, 1.0, 0.0, 1.0, 0.0], &[2.0, 2.0, 1.0, 1.0, 1.0]]);
        let r = pfc(&t, &some, &m, &cat_schema()).unwrap();
        assert!((r.value - 0.3).abs() < 1e-15);
        assert!(pfc(&t, &t, &MaskMatrix::ones(5, 2), &cat_schema()).is_err());
    }

    #[test]
    fn pooled_ratio() {
        assert_eq!(nrmse_pooled(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!(nrmse_pooled(&[], &[]).is_err());
    }

    proptest! {
        #[test]
        fn affine_invariance(
            vals in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..30),
            scale in 0.1f64..50.0,
            shift in -100.0f64..100.0,
        ) {
            let t: Vec<f64> = vals.iter().map(|v| v.0).collect();
            let p: Vec<f64> = vals.iter().map(|v| v.1).collect();
            let other = vec![1.0; t.len()];
            let m = MaskMatrix::new(Tensor::from_fn(t.len(), 2, |_, c| c as f64)).unwrap();
            let tb = batch(&[&t, &other]);
            let pb = batch(&[&p, &other]);
            prop_assume!(column_std(&t) > 1e-6);
            let a = nrmse(&tb, &pb, &m, &num_schema(), &feature_stds(&tb)).unwrap().value;
            let ts: Vec<f64> = t.iter().map(|v| v * scale + shift).collect();
            let ps: Vec<f64> = p.iter().map(|v| v * scale + shift).collect();
            let tsb = batch(&[&ts, &other]);
            let b = nrmse(&tsb, &batch(&[&ps, &other]), &m, &num_schema(), &feature_stds(&tsb)).unwrap().value;
            prop_assert!((a - b).abs() < 1e-9 * a.max(1.0));
        }

        #[test]
        fn observed_cells_do_not_affect_scores(noise in prop::collection::vec(-5.0f64..5.0, 6)) {
            let t = batch(&[&[0.0, 1.0, 2.0], &[3.0, 1.0, 0.5]]);
            let p = batch(&[&[0.5, 1.5, 1.0], &[2.0, 2.0, 2.0]]);
            let m = mask(&[&[0.0, 1.0, 0.0], &[1.0, 0.0, 1.0]]);
            let base = nrmse(&t, &p, &m, &num_schema(), &feature_stds(&t)).unwrap();
            let mut q = p.clone();
            let mut k = 0;
            for r in 0..3 {
                for c in 0..2 {
                    if m.is_observed(r, c) {
                        q.set(r, c, noise[k]);
                        k += 1;
                    }
                }
            }
            prop_assert_eq!(base, nrmse(&t, &q, &m, &num_schema(), &feature_stds(&t)).unwrap());
        }
    }
}
