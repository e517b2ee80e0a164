//! Heterogeneous tables: schema, ingestion, normalization, encoding, splits.

pub mod encode;
pub mod load;
pub mod normalize;
pub mod schema;
pub mod split;

pub use encode::{decode, encode, encode_complete, expand_mask, refill_unobserved};
pub use load::{format_cell, load_csv, load_masked_csv, read_csv, write_csv};
pub use normalize::{fit_normalizer, ColumnStats, NormalizationStats, Scaling};
pub use schema::{AttributeKind, AttributeSpec, DatasetSchema};
pub use split::{split, Split};

use crate::tensor::Tensor;

/// Raw records, shape `(n, M)`: numbers for numerical attributes, class
/// indices for categorical ones.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordBatch {
    values: Tensor,
}

impl RecordBatch {
    pub fn new(values: Tensor) -> Self {
        Self { values }
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn attributes(&self) -> usize {
        self.values.cols()
    }

    pub fn get(&self, row: usize, attribute: usize) -> f64 {
        self.values.get(row, attribute)
    }

    pub fn set(&mut self, row: usize, attribute: usize, value: f64) {
        self.values.set(row, attribute, value)
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn column(&self, attribute: usize) -> Vec<f64> {
        (0..self.rows()).map(|r| self.get(r, attribute)).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self::new(self.values.select_rows(rows))
    }

    pub fn append(&self, other: &RecordBatch) -> crate::Result<Self> {
        Ok(Self::new(Tensor::concat_rows(&[&self.values, &other.values])?))
    }
}
