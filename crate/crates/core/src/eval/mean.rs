//! Marginal-mean imputation: the observed training mean of every encoded
//! column, so categorical blocks receive observed class frequencies.

use crate::data::{DatasetSchema, NormalizationStats};
use crate::error::{Error, Result};
use crate::eval::report::Imputer;
use crate::mask::MaskMatrix;
use crate::model::MaskedData;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct MeanImputer {
    pub schema: DatasetSchema,
    pub stats: NormalizationStats,
    /// Encoded row `(1, W)`.
    pub fill: Tensor,
}

impl MeanImputer {
    pub fn fit(schema: DatasetSchema, stats: NormalizationStats, train: &MaskedData) -> Result<Self> {
        let mut fill = Tensor::zeros(1, schema.encoded_width());
        for (i, spec) in schema.attributes().iter().enumerate() {
            let rows: Vec<usize> = (0..train.rows()).filter(|&r| train.mask.is_observed(r, i)).collect();
            if rows.is_empty() {
                return Err(Error::Empty(format!("observed values of `{}`", spec.name)));
            }
            let off = schema.offset(i);
            for c in off..off + spec.encoded_width() {
                let s: f64 = rows.iter().map(|&r| train.x.get(r, c)).sum();
                fill.set(0, c, s / rows.len() as f64);
            }
        }
        Ok(Self { schema, stats, fill })
    }
}

impl Imputer for MeanImputer {
    fn schema(&self) -> &DatasetSchema {
        &self.schema
    }
    fn stats(&self) -> &NormalizationStats {
        &self.stats
    }
    fn impute_encoded(&self, x: &Tensor, mask: &MaskMatrix, _seed: u64) -> Result<Tensor> {
        let mut out = x.clone();
        for r in 0..x.rows() {
            for (i, spec) in self.schema.attributes().iter().enumerate() {
                if !mask.is_observed(r, i) {
                    let off = self.schema.offset(i);
                    let w = spec.encoded_width();
                    out.row_slice_mut(r)[off..off + w].copy_from_slice(&self.fill.row_slice(0)[off..off + w]);
                }
            }
        }
        Ok(out)
    }
}
