//! Per-attribute statistics fit on the training split.

use serde::{Deserialize, Serialize};

use crate::data::schema::DatasetSchema;
use crate::data::RecordBatch;
use crate::error::{Error, Result};
use crate::mask::MaskMatrix;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
    pub degenerate: bool,
}

impl ColumnStats {
    pub fn normalize(&self, v: f64) -> f64 {
        if self.degenerate {
            0.0
        } else {
            (v - self.min) / (self.max - self.min)
        }
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        if self.degenerate {
            self.min
        } else {
            v * (self.max - self.min) + self.min
        }
    }

    pub fn standardize(&self, v: f64) -> f64 {
        if self.std > 0.0 {
            (v - self.mean) / self.std
        } else {
            0.0
        }
    }
}

/// Input transform used by the data-dependent mask mechanisms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    #[default]
    MinMax,
    ZScore,
}

/// `None` for categorical attributes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub columns: Vec<Option<ColumnStats>>,
}

/// Fits min/max (and mean/std) per numerical attribute. With `observed`, only
/// cells whose mask bit is 1 count.
pub fn fit_normalizer(
    batch: &RecordBatch,
    schema: &DatasetSchema,
    observed: Option<&MaskMatrix>,
) -> Result<NormalizationStats> {
    if batch.rows() == 0 {
        return Err(Error::Empty("fit_normalizer".into()));
    }
    let columns = schema
        .attributes()
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            if !spec.is_numerical() {
                return Ok(None);
            }
            let vals: Vec<f64> = (0..batch.rows())
                .filter(|&r| observed.is_none_or(|m| m.is_observed(r, i)))
                .map(|r| batch.get(r, i))
                .collect();
            if vals.is_empty() {
                return Err(Error::Config(format!(
                    "numerical attribute `{}` has no observed training values",
                    spec.name
                )));
            }
            let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
            Ok(Some(ColumnStats {
                min,
                max,
                mean,
                std,
                degenerate: max == min,
            }))
        })
        .collect::<Result<_>>()?;
    Ok(NormalizationStats { columns })
}

impl NormalizationStats {
    pub fn column(&self, attribute: usize) -> Option<&ColumnStats> {
        self.columns.get(attribute).and_then(Option::as_ref)
    }

    /// One scalar per attribute, shape `(n, M)`: numerical values min-max or
    /// z-scored, categorical indices as `idx / (k−1)`.
    pub fn scaled(&self, batch: &RecordBatch, schema: &DatasetSchema, scaling: Scaling) -> Tensor {
        Tensor::from_fn(batch.rows(), schema.len(), |r, i| {
            let v = batch.get(r, i);
            match self.column(i) {
                Some(c) => match scaling {
                    Scaling::MinMax => c.normalize(v),
                    Scaling::ZScore => c.standardize(v),
                },
                None => v / (schema.attribute(i).encoded_width() - 1) as f64,
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::schema::AttributeSpec;

    fn schema() -> DatasetSchema {
        DatasetSchema::new(vec![AttributeSpec::numerical("a"), AttributeSpec::numerical("b")]).unwrap()
    }

    fn batch(rows: &[[f64; 2]]) -> RecordBatch {
        RecordBatch::new(Tensor::matrix(rows.len(), 2, rows.iter().flatten().copied().collect()).unwrap())
    }

    #[test]
    fn extrema_and_degenerate_flag() {
        let b = batch(&[[0.0, 4.0], [5.0, 4.0], [10.0, 4.0]]);
        let s = fit_normalizer(&b, &schema(), None).unwrap();
        let a = s.column(0).unwrap();
        assert_eq!((a.min, a.max, a.degenerate), (0.0, 10.0, false));
        let c = s.column(1).unwrap();
        assert_eq!((c.min, c.max, c.degenerate), (4.0, 4.0, true));
        assert_eq!(c.normalize(4.0), 0.0);
        assert_eq!(c.denormalize(0.0), 4.0);
    }

    #[test]
    fn stats_are_not_affected_by_appended_rows() {
        let train = batch(&[[0.0, 1.0], [2.0, 3.0]]);
        let s = fit_normalizer(&train, &schema(), None).unwrap();
        let before = s.clone();
        let _all = train.append(&batch(&[[100.0, -100.0]])).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn all_missing_column_is_an_error() {
        let b = batch(&[[0.0, 1.0], [2.0, 3.0]]);
        let mask = MaskMatrix::new(Tensor::matrix(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap()).unwrap();
        assert!(fit_normalizer(&b, &schema(), Some(&mask)).is_err());
    }
}
