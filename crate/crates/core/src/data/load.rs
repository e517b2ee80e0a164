//! CSV ingestion and export.

use std::path::Path;

use crate::data::schema::{AttributeKind, DatasetSchema};
use crate::data::RecordBatch;
use crate::error::{Error, Result};
use crate::mask::MaskMatrix;
use crate::tensor::Tensor;

/// Reads a headered CSV whose columns are exactly the schema's attributes in
/// order. Numerical cells become numbers, categorical cells class indices.
pub fn load_csv(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<RecordBatch> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, &path.display().to_string(), schema)
}

pub fn read_csv<R: std::io::Read>(reader: R, source: &str, schema: &DatasetSchema) -> Result<RecordBatch> {
    read_records(reader, source, schema, None).map(|(b, _)| b)
}

/// Like [`load_csv`], but cells the mask marks unobserved are left unparsed
/// (they may be empty) and read as 0. Also returns every cell's raw text.
pub fn load_masked_csv(
    path: impl AsRef<Path>,
    schema: &DatasetSchema,
    mask: &MaskMatrix,
) -> Result<(RecordBatch, Vec<Vec<String>>)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let (batch, raw) = read_records(file, &path.display().to_string(), schema, Some(mask))?;
    if batch.rows() != mask.rows() {
        return Err(Error::Mask(format!(
            "mask has {} rows but {} has {}",
            mask.rows(),
            path.display(),
            batch.rows()
        )));
    }
    Ok((batch, raw))
}

fn read_records<R: std::io::Read>(
    reader: R,
    source: &str,
    schema: &DatasetSchema,
    mask: Option<&MaskMatrix>,
) -> Result<(RecordBatch, Vec<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let expected: Vec<&str> = schema.names().collect();
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Parse {
            path: source.to_string(),
            row: 1,
            column: 0,
            message: format!("header {got:?} does not match schema {expected:?}"),
        });
    }
    if let Some(mask) = mask {
        if mask.cols() != schema.len() {
            return Err(Error::Mask(format!(
                "mask has {} columns, schema has {}",
                mask.cols(),
                schema.len()
            )));
        }
    }

    let m = schema.len();
    let mut values = Vec::new();
    let mut raw = Vec::new();
    let mut rows = 0;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(rows + 2, |p| p.line() as usize);
        if record.len() != m {
            return Err(Error::Parse {
                path: source.to_string(),
                row: line,
                column: record.len().min(m) + 1,
                message: format!("expected {m} fields, found {}", record.len()),
            });
        }
        for (i, (cell, spec)) in record.iter().zip(schema.attributes()).enumerate() {
            let cell = cell.trim();
            let observed = mask.is_none_or(|k| rows >= k.rows() || k.is_observed(rows, i));
            let v = match &spec.kind {
                _ if !observed => 0.0,
                AttributeKind::Numerical => match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => v,
                    _ => {
                        return Err(Error::Parse {
                            path: source.to_string(),
                            row: line,
                            column: i + 1,
                            message: format!("`{cell}` is not a finite number"),
                        })
                    }
                },
                AttributeKind::Categorical { .. } => spec.class_index(cell).ok_or_else(|| Error::UnknownCategory {
                    attribute: spec.name.clone(),
                    label: cell.to_string(),
                })? as f64,
            };
            values.push(v);
        }
        if mask.is_some() {
            raw.push(record.iter().map(str::to_string).collect());
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Empty(source.to_string()));
    }
    Ok((RecordBatch::new(Tensor::matrix(rows, m, values)?), raw))
}

/// Formats one raw cell the way [`load_csv`] reads it back.
pub fn format_cell(schema: &DatasetSchema, attribute: usize, value: f64) -> String {
    let spec = schema.attribute(attribute);
    match &spec.kind {
        AttributeKind::Numerical => format!("{value}"),
        AttributeKind::Categorical { classes } => classes[value as usize].clone(),
    }
}

pub fn write_csv(path: impl AsRef<Path>, schema: &DatasetSchema, batch: &RecordBatch) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(schema.names())?;
    for r in 0..batch.rows() {
        w.write_record((0..schema.len()).map(|i| format_cell(schema, i, batch.get(r, i))))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::schema::AttributeSpec;

    fn schema() -> DatasetSchema {
        DatasetSchema::new(vec![
            AttributeSpec::numerical("a"),
            AttributeSpec::categorical("b", ["x", "y"]),
        ])
        .unwrap()
    }

    #[test]
    fn reads_three_rows() {
        let b = read_csv("a,b\n1.5,x\n2,y\n-3,x\n".as_bytes(), "t.csv", &schema()).unwrap();
        assert_eq!(b.rows(), 3);
        assert_eq!(b.get(1, 0), 2.0);
        assert_eq!(b.get(1, 1), 1.0);
    }

    #[test]
    fn malformed_cell_reports_position() {
        let err = read_csv("a,b\n1,x\nabc,y\n".as_bytes(), "t.csv", &schema()).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => assert_eq!((row, column), (3, 1)),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn masked_cells_may_be_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "a,b\n1.50,\n,y\n").unwrap();
        let mask = MaskMatrix::new(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap()).unwrap();
        let (b, raw) = load_masked_csv(&p, &schema(), &mask).unwrap();
        assert_eq!(b.get(0, 0), 1.5);
        assert_eq!(b.get(1, 1), 1.0);
        assert_eq!(raw[0][0], "1.50");
        assert!(read_csv("a,b\n1.50,\n".as_bytes(), "t.csv", &schema()).is_err());
    }

    #[test]
    fn empty_file_has_no_data_rows() {
        let err = read_csv("a,b\n".as_bytes(), "empty.csv", &schema()).unwrap_err();
        assert!(err.to_string().contains("no data rows"));
    }

    #[test]
    fn unknown_label_is_named() {
        let err = read_csv("a,b\n1,q\n".as_bytes(), "t.csv", &schema()).unwrap_err();
        assert!(err.to_string().contains("`q`"));
    }

    #[test]
    fn write_then_read_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let b = read_csv("a,b\n0.1,y\n7,x\n".as_bytes(), "t.csv", &schema()).unwrap();
        write_csv(&path, &schema(), &b).unwrap();
        assert_eq!(load_csv(&path, &schema()).unwrap(), b);
    }
}
