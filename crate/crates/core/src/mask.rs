//! Missingness masks and the MCAR / MAR / NMAR synthesizers.
//!
//! A mask bit of 1 means the attribute is observed. The data-dependent
//! mechanisms take one scaled scalar per attribute, as produced by
//! [`NormalizationStats::scaled`](crate::data::NormalizationStats::scaled).

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::tape::sigmoid;
use crate::data::Scaling;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Binary `(n, M)` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskMatrix {
    values: Tensor,
}

impl MaskMatrix {
    pub fn new(values: Tensor) -> Result<Self> {
        if let Some(v) = values.values().iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::Mask(format!("entries must be 0 or 1, found {v}")));
        }
        Ok(Self { values })
    }

    pub fn ones(n: usize, m: usize) -> Self {
        Self {
            values: Tensor::filled(n, m, 1.0),
        }
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            values: Tensor::zeros(n, m),
        }
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }

    pub fn is_observed(&self, row: usize, attribute: usize) -> bool {
        self.values.get(row, attribute) == 1.0
    }

    pub fn set(&mut self, row: usize, attribute: usize, observed: bool) {
        self.values.set(row, attribute, if observed { 1.0 } else { 0.0 });
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.values
    }

    pub fn column(&self, attribute: usize) -> Tensor {
        self.values.cols_range(attribute, 1)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            values: self.values.select_rows(rows),
        }
    }

    pub fn missing_count(&self) -> usize {
        self.values.values().iter().filter(|&&v| v == 0.0).count()
    }

    pub fn stats(&self) -> MaskStats {
        mask_stats(self)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
        for r in 0..self.rows() {
            w.write_record(
                self.values
                    .row_slice(r)
                    .iter()
                    .map(|&v| if v == 1.0 { "1" } else { "0" }),
            )?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
        let mut values = Vec::new();
        let mut cols = None;
        let mut rows = 0;
        for rec in rdr.records() {
            let rec = rec?;
            let width = *cols.get_or_insert(rec.len());
            if rec.len() != width {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    row: rows + 1,
                    column: 0,
                    message: format!("expected {width} fields, found {}", rec.len()),
                });
            }
            for (c, cell) in rec.iter().enumerate() {
                let v = match cell.trim() {
                    "0" => 0.0,
                    "1" => 1.0,
                    other => {
                        return Err(Error::Parse {
                            path: path.display().to_string(),
                            row: rows + 1,
                            column: c + 1,
                            message: format!("mask entries must be 0 or 1, found `{other}`"),
                        })
                    }
                };
                values.push(v);
            }
            rows += 1;
        }
        if rows == 0 {
            return Err(Error::Empty(path.display().to_string()));
        }
        Self::new(Tensor::matrix(rows, cols.unwrap_or(0), values)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskStats {
    pub missing_proportion: f64,
    pub per_attribute: Vec<f64>,
}

pub fn mask_stats(mask: &MaskMatrix) -> MaskStats {
    let n = mask.rows().max(1) as f64;
    let per_attribute = (0..mask.cols())
        .map(|i| (0..mask.rows()).filter(|&r| !mask.is_observed(r, i)).count() as f64 / n)
        .collect();
    let cells = (mask.rows() * mask.cols()).max(1) as f64;
    MaskStats {
        missing_proportion: mask.missing_count() as f64 / cells,
        per_attribute,
    }
}

/// What `sigmoid(·)` in the MAR/NMAR rules is the probability of.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmoidDirection {
    #[default]
    Missing,
    Observed,
}

impl SigmoidDirection {
    fn missing_probability(self, x: f64) -> f64 {
        match self {
            SigmoidDirection::Missing => sigmoid(x),
            SigmoidDirection::Observed => 1.0 - sigmoid(x),
        }
    }
}

/// Denominator of the MAR row statistic.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarDivisor {
    /// Mean over the default-observed attributes.
    #[default]
    Observed,
    /// Sum over the default-observed attributes divided by `M`.
    Attributes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mechanism {
    Mcar { missing_ratio: f64 },
    Mar { default_observed_fraction: f64 },
    Nmar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    #[serde(flatten)]
    pub mechanism: Mechanism,
    #[serde(default)]
    pub direction: SigmoidDirection,
    #[serde(default)]
    pub scaling: Scaling,
    #[serde(default)]
    pub mar_divisor: MarDivisor,
    /// When set, permutes which attributes are default-observed under MAR.
    #[serde(default)]
    pub default_observed_seed: Option<u64>,
}

impl MechanismSpec {
    pub fn mcar(missing_ratio: f64) -> Self {
        Self::with(Mechanism::Mcar { missing_ratio })
    }

    pub fn mar() -> Self {
        Self::with(Mechanism::Mar {
            default_observed_fraction: 0.25,
        })
    }

    pub fn nmar() -> Self {
        Self::with(Mechanism::Nmar)
    }

    fn with(mechanism: Mechanism) -> Self {
        Self {
            mechanism,
            direction: SigmoidDirection::default(),
            scaling: Scaling::default(),
            mar_divisor: MarDivisor::default(),
            default_observed_seed: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mechanism {
            Mechanism::Mcar { missing_ratio: r } if !(0.0..=1.0).contains(&r) => {
                Err(Error::Mask(format!("missing ratio must lie in [0,1], got {r}")))
            }
            Mechanism::Mar {
                default_observed_fraction: f,
            } if !(0.0..=1.0).contains(&f) => Err(Error::Mask(format!(
                "default-observed fraction must lie in [0,1], got {f}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match self.mechanism {
            Mechanism::Mcar { missing_ratio } => format!("mcar-{missing_ratio}"),
            Mechanism::Mar { .. } => "mar".into(),
            Mechanism::Nmar => "nmar".into(),
        }
    }

    /// Samples a mask for `scaled`, one scalar per attribute per row.
    pub fn sample(&self, scaled: &Tensor, seed: u64) -> Result<MaskMatrix> {
        self.validate()?;
        Ok(match self.mechanism {
            Mechanism::Mcar { missing_ratio } => sample_mcar(scaled.rows(), scaled.cols(), missing_ratio, seed)?,
            Mechanism::Mar {
                default_observed_fraction,
            } => {
                let observed = default_observed(scaled.cols(), default_observed_fraction, self.default_observed_seed);
                sample_mar_with(scaled, &observed, self.direction, self.mar_divisor, seed)
            }
            Mechanism::Nmar => sample_nmar_with(scaled, self.direction, seed),
        })
    }
}

/// Each entry independently missing with probability `ratio`.
pub fn sample_mcar(n: usize, m: usize, ratio: f64, seed: u64) -> Result<MaskMatrix> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Mask(format!("missing ratio must lie in [0,1], got {ratio}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = Tensor::from_fn(n, m, |_, _| if rng.random::<f64>() < ratio { 0.0 } else { 1.0 });
    MaskMatrix::new(values)
}

/// Attribute indices that MAR never masks: the first `⌈fraction·M⌉`, or a
/// seeded random choice of that many.
pub fn default_observed(m: usize, fraction: f64, permutation_seed: Option<u64>) -> Vec<usize> {
    let k = ((fraction * m as f64).ceil() as usize).min(m);
    let mut order: Vec<usize> = (0..m).collect();
    if let Some(s) = permutation_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(s));
    }
    let mut chosen = order[..k].to_vec();
    chosen.sort_unstable();
    chosen
}

/// MAR with the default settings: first quarter of attributes always
/// observed, the rest missing with probability `sigmoid(mean of those)`.
pub fn sample_mar(scaled: &Tensor, seed: u64) -> MaskMatrix {
    let observed = default_observed(scaled.cols(), 0.25, None);
    sample_mar_with(scaled, &observed, SigmoidDirection::Missing, MarDivisor::Observed, seed)
}

pub fn sample_mar_with(
    scaled: &Tensor,
    default_observed: &[usize],
    direction: SigmoidDirection,
    divisor: MarDivisor,
    seed: u64,
) -> MaskMatrix {
    let (n, m) = (scaled.rows(), scaled.cols());
    let denom = match divisor {
        MarDivisor::Observed => default_observed.len().max(1) as f64,
        MarDivisor::Attributes => m as f64,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = MaskMatrix::ones(n, m);
    for r in 0..n {
        let stat = default_observed.iter().map(|&i| scaled.get(r, i)).sum::<f64>() / denom;
        let p = direction.missing_probability(stat);
        for i in (0..m).filter(|i| !default_observed.contains(i)) {
            if rng.random::<f64>() < p {
                mask.set(r, i, false);
            }
        }
    }
    mask
}

/// Each entry missing with probability `sigmoid(x_i)`.
pub fn sample_nmar(scaled: &Tensor, seed: u64) -> MaskMatrix {
    sample_nmar_with(scaled, SigmoidDirection::Missing, seed)
}

pub fn sample_nmar_with(scaled: &Tensor, direction: SigmoidDirection, seed: u64) -> MaskMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = Tensor::from_fn(scaled.rows(), scaled.cols(), |r, i| {
        if rng.random::<f64>() < direction.missing_probability(scaled.get(r, i)) {
            0.0
        } else {
            1.0
        }
    });
    MaskMatrix { values }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mcar_boundaries() {
        assert_eq!(sample_mcar(5, 3, 0.0, 1).unwrap(), MaskMatrix::ones(5, 3));
        assert_eq!(sample_mcar(5, 3, 1.0, 1).unwrap(), MaskMatrix::zeros(5, 3));
        assert!(sample_mcar(5, 3, 1.5, 1).is_err());
    }

    #[test]
    fn mcar_half_within_binomial_bound() {
        let m = sample_mcar(1000, 10, 0.5, 7).unwrap();
        assert!((m.stats().missing_proportion - 0.5).abs() < 0.015);
    }

    #[test]
    fn mar_zero_inputs_give_half() {
        let data = Tensor::zeros(5000, 4);
        let m = sample_mar(&data, 3);
        assert!((0..5000).all(|r| m.is_observed(r, 0)));
        let s = m.stats();
        assert_eq!(s.per_attribute[0], 0.0);
        for p in &s.per_attribute[1..] {
            assert!((p - 0.5).abs() < 0.03, "{p}");
        }
        assert_eq!(sample_mar(&data, 3), m);
    }

    #[test]
    fn default_observed_is_ceil_quarter() {
        assert_eq!(default_observed(8, 0.25, None), vec![0, 1]);
        assert_eq!(default_observed(11, 0.25, None), vec![0, 1, 2]);
        let p = default_observed(11, 0.25, Some(5));
        assert_eq!(p.len(), 3);
    }

    #[test]
    fn nmar_saturation_and_range() {
        let big = Tensor::filled(200, 2, 50.0);
        assert_eq!(sample_nmar(&big, 1).missing_count(), 400);
        let zero = Tensor::zeros(10_000, 1);
        assert!((sample_nmar(&zero, 2).stats().missing_proportion - 0.5).abs() < 0.02);
        let flipped = sample_nmar_with(&big, SigmoidDirection::Observed, 1);
        assert_eq!(flipped.missing_count(), 0);
    }

    #[test]
    fn stats_counting() {
        assert_eq!(MaskMatrix::ones(2, 2).stats().missing_proportion, 0.0);
        assert_eq!(MaskMatrix::zeros(2, 2).stats().missing_proportion, 1.0);
        let m = MaskMatrix::new(Tensor::matrix(2, 2, vec![1.0, 0.0, 1.0, 1.0]).unwrap()).unwrap();
        assert_eq!(m.stats().missing_proportion, 0.25);
        assert_eq!(m.stats().per_attribute, vec![0.0, 0.5]);
    }

    #[test]
    fn rejects_non_binary() {
        assert!(MaskMatrix::new(Tensor::row(vec![0.0, 0.5])).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = sample_mcar(7, 3, 0.4, 9).unwrap();
        m.write_csv(&path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 7);
        assert_eq!(MaskMatrix::read_csv(&path).unwrap(), m);
    }

    #[test]
    fn mechanism_spec_json() {
        let s: MechanismSpec = serde_json::from_str(r#"{"kind":"mcar","missing_ratio":0.3}"#).unwrap();
        assert_eq!(s, MechanismSpec::mcar(0.3));
        let back = serde_json::to_string(&MechanismSpec::nmar()).unwrap();
        assert_eq!(
            serde_json::from_str::<MechanismSpec>(&back).unwrap(),
            MechanismSpec::nmar()
        );
    }
}
