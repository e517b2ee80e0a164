//! Raw records ⇄ the `(n, W)` model encoding.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::normalize::NormalizationStats;
use crate::data::schema::{AttributeKind, DatasetSchema};
use crate::data::RecordBatch;
use crate::error::{Error, Result};
use crate::mask::MaskMatrix;
use crate::tensor::Tensor;

/// Encodes without any mask: min-max numerical columns and one-hot
/// categorical blocks.
pub fn encode_complete(batch: &RecordBatch, schema: &DatasetSchema, stats: &NormalizationStats) -> Result<Tensor> {
    let mut out = Tensor::zeros(batch.rows(), schema.encoded_width());
    for (i, spec) in schema.attributes().iter().enumerate() {
        let off = schema.offset(i);
        for r in 0..batch.rows() {
            let v = batch.get(r, i);
            match &spec.kind {
                AttributeKind::Numerical => {
                    let c = stats
                        .column(i)
                        .ok_or_else(|| Error::Config(format!("no statistics for `{}`", spec.name)))?;
                    out.set(r, off, c.normalize(v));
                }
                AttributeKind::Categorical { classes } => {
                    if v < 0.0 || v.fract() != 0.0 || v as usize >= classes.len() {
                        return Err(Error::UnknownCategory {
                            attribute: spec.name.clone(),
                            label: format!("{v}"),
                        });
                    }
                    out.set(r, off + v as usize, 1.0);
                }
            }
        }
    }
    Ok(out)
}

/// [`encode_complete`], then every encoded column of an unobserved attribute
/// is overwritten with a standard-normal draw. Draws are taken row-major
/// from a stream seeded by `noise_seed`.
pub fn encode(
    batch: &RecordBatch,
    schema: &DatasetSchema,
    stats: &NormalizationStats,
    mask: &MaskMatrix,
    noise_seed: u64,
) -> Result<Tensor> {
    check_mask(batch, schema, mask)?;
    let mut out = encode_complete(batch, schema, stats)?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    for r in 0..batch.rows() {
        for (i, spec) in schema.attributes().iter().enumerate() {
            if !mask.is_observed(r, i) {
                let off = schema.offset(i);
                for c in off..off + spec.encoded_width() {
                    out.set(r, c, StandardNormal.sample(&mut rng));
                }
            }
        }
    }
    Ok(out)
}

/// Overwrites every encoded column of an unobserved attribute with a fresh
/// standard-normal draw, in the same order as [`encode`].
pub fn refill_unobserved<R: rand::Rng>(x: &mut Tensor, schema: &DatasetSchema, mask: &MaskMatrix, rng: &mut R) {
    for r in 0..x.rows() {
        for (i, spec) in schema.attributes().iter().enumerate() {
            if !mask.is_observed(r, i) {
                let off = schema.offset(i);
                for c in off..off + spec.encoded_width() {
                    x.set(r, c, StandardNormal.sample(rng));
                }
            }
        }
    }
}

fn check_mask(batch: &RecordBatch, schema: &DatasetSchema, mask: &MaskMatrix) -> Result<()> {
    if mask.rows() != batch.rows() || mask.cols() != schema.len() {
        return Err(Error::Shape {
            op: "encode",
            lhs: vec![batch.rows(), schema.len()],
            rhs: vec![mask.rows(), mask.cols()],
        });
    }
    Ok(())
}

/// Repeats each attribute's mask bit over its encoded columns: `(n,M) → (n,W)`.
pub fn expand_mask(mask: &MaskMatrix, schema: &DatasetSchema) -> Tensor {
    let mut out = Tensor::zeros(mask.rows(), schema.encoded_width());
    for r in 0..mask.rows() {
        for (i, spec) in schema.attributes().iter().enumerate() {
            if mask.is_observed(r, i) {
                let off = schema.offset(i);
                for c in off..off + spec.encoded_width() {
                    out.set(r, c, 1.0);
                }
            }
        }
    }
    out
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Inverse of [`encode_complete`]; categorical blocks decode by [`argmax`].
pub fn decode(encoded: &Tensor, schema: &DatasetSchema, stats: &NormalizationStats) -> Result<RecordBatch> {
    if encoded.cols() != schema.encoded_width() {
        return Err(Error::Shape {
            op: "decode",
            lhs: encoded.shape().to_vec(),
            rhs: vec![encoded.rows(), schema.encoded_width()],
        });
    }
    let mut out = Tensor::zeros(encoded.rows(), schema.len());
    for (i, spec) in schema.attributes().iter().enumerate() {
        let off = schema.offset(i);
        for r in 0..encoded.rows() {
            let row = encoded.row_slice(r);
            let v = match stats.column(i) {
                Some(c) => c.denormalize(row[off]),
                None => argmax(&row[off..off + spec.encoded_width()]) as f64,
            };
            out.set(r, i, v);
        }
    }
    Ok(RecordBatch::new(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::normalize::fit_normalizer;
    use crate::data::schema::AttributeSpec;
    use proptest::prelude::*;

    fn schema() -> DatasetSchema {
        DatasetSchema::new(vec![
            AttributeSpec::numerical("a"),
            AttributeSpec::categorical("b", ["x", "y", "z"]),
        ])
        .unwrap()
    }

    fn raw(rows: &[(f64, f64)]) -> RecordBatch {
        RecordBatch::new(Tensor::matrix(rows.len(), 2, rows.iter().flat_map(|&(a, b)| [a, b]).collect()).unwrap())
    }

    #[test]
    fn midpoint_and_one_hot() {
        let train = raw(&[(0.0, 0.0), (10.0, 1.0)]);
        let s = fit_normalizer(&train, &schema(), None).unwrap();
        let e = encode_complete(&raw(&[(5.0, 2.0)]), &schema(), &s).unwrap();
        assert_eq!(e.values(), &[0.5, 0.0, 0.0, 1.0]);
        assert!(encode_complete(&raw(&[(5.0, 3.0)]), &schema(), &s).is_err());
    }

    #[test]
    fn noise_fill_is_seeded_and_only_touches_unobserved() {
        let train = raw(&[(0.0, 0.0), (10.0, 1.0), (4.0, 2.0)]);
        let s = fit_normalizer(&train, &schema(), None).unwrap();
        let mask = MaskMatrix::new(Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap()).unwrap();
        let a = encode(&train, &schema(), &s, &mask, 3).unwrap();
        let b = encode(&train, &schema(), &s, &mask, 3).unwrap();
        let c = encode(&train, &schema(), &s, &mask, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let clean = encode_complete(&train, &schema(), &s).unwrap();
        assert_eq!(a.get(0, 0), clean.get(0, 0));
        assert_eq!(a.row_slice(1)[1..], clean.row_slice(1)[1..]);
        assert_eq!(a.row_slice(2), clean.row_slice(2));
        assert_ne!(a.row_slice(0)[1..], clean.row_slice(0)[1..]);
    }

    #[test]
    fn decode_examples() {
        let train = raw(&[(0.0, 0.0), (10.0, 1.0)]);
        let s = fit_normalizer(&train, &schema(), None).unwrap();
        let e = Tensor::matrix(2, 4, vec![0.5, 0.2, 0.5, 0.3, 1.0, 0.5, 0.5, 0.0]).unwrap();
        let d = decode(&e, &schema(), &s).unwrap();
        assert_eq!(d.get(0, 0), 5.0);
        assert_eq!(d.get(0, 1), 1.0);
        assert_eq!(d.get(1, 1), 0.0);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn test_values_outside_training_range_are_not_clipped() {
        let train = raw(&[(0.0, 0.0), (10.0, 1.0)]);
        let s = fit_normalizer(&train, &schema(), None).unwrap();
        let e = encode_complete(&raw(&[(15.0, 0.0), (-5.0, 0.0)]), &schema(), &s).unwrap();
        assert_eq!(e.get(0, 0), 1.5);
        assert_eq!(e.get(1, 0), -0.5);
    }

    proptest! {
        #[test]
        fn round_trip_and_ranges(values in prop::collection::vec((-1e3f64..1e3, 0usize..3), 2..40)) {
            let rows: Vec<(f64, f64)> = values.iter().map(|&(a, b)| (a, b as f64)).collect();
            let b = raw(&rows);
            let s = fit_normalizer(&b, &schema(), None).unwrap();
            let e = encode_complete(&b, &schema(), &s).unwrap();
            let degenerate = s.column(0).unwrap().degenerate;
            for r in 0..b.rows() {
                let x = e.get(r, 0);
                prop_assert!((0.0..=1.0).contains(&x));
                let hot = &e.row_slice(r)[1..];
                prop_assert_eq!(hot.iter().filter(|&&v| v == 1.0).count(), 1);
                prop_assert_eq!(hot.iter().filter(|&&v| v == 0.0).count(), 2);
            }
            let d = decode(&e, &schema(), &s).unwrap();
            for r in 0..b.rows() {
                if !degenerate {
                    prop_assert!((d.get(r, 0) - b.get(r, 0)).abs() < 1e-9);
                }
                prop_assert_eq!(d.get(r, 1), b.get(r, 1));
            }
        }
    }
}
