//! The feature table: one CSV row per sample, fixed column order.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::dataset::ClassLabel;
use crate::morphometry::{FeatureVector, FEATURE_NAMES};

#[derive(Debug, Error)]
pub enum TableError {
    #[error("header mismatch: expected `{expected}`, found `{found}`")]
    SchemaMismatch { expected: String, found: String },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("feature table has no rows")]
    EmptyInput,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub id: String,
    pub label: ClassLabel,
    pub features: FeatureVector,
}

pub fn header() -> Vec<&'static str> {
    let mut h = vec!["id", "class"];
    h.extend(FEATURE_NAMES);
    h.push("degenerate");
    h
}

pub fn write_rows<W: Write>(out: W, rows: &[FeatureRow]) -> Result<(), TableError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header())?;
    for r in rows {
        let mut rec = vec![r.id.clone(), r.label.to_string()];
        let f = &r.features;
        for (name, v) in FEATURE_NAMES.iter().zip(f.values()) {
            // the integer columns print without a fraction
            rec.push(match *name {
                "cspi" | "ens" => format!("{}", v as u64),
                _ => format!("{v}"),
            });
        }
        rec.push(f.degenerate.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| TableError::Io {
        path: "<table>".into(),
        source: e,
    })?;
    Ok(())
}

pub fn to_string(rows: &[FeatureRow]) -> Result<String, TableError> {
    let mut buf = Vec::new();
    write_rows(&mut buf, rows)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<FeatureRow>, TableError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let expected = header();
    let found = rdr.headers()?.clone();
    if found.iter().ne(expected.iter().copied()) {
        return Err(TableError::SchemaMismatch {
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| TableError::Parse { line, message };
        let label: ClassLabel = rec[1].parse().map_err(bad)?;
        let mut vals = [0.0; 18];
        for (i, v) in vals.iter_mut().enumerate() {
            let cell = &rec[i + 2];
            *v = cell
                .parse()
                .map_err(|_| bad(format!("column {}: not a number: {cell:?}", FEATURE_NAMES[i])))?;
        }
        let degenerate = match &rec[20] {
            "true" => true,
            "false" => false,
            other => return Err(bad(format!("degenerate must be true or false, got {other:?}"))),
        };
        rows.push(FeatureRow {
            id: rec[0].to_string(),
            label,
            features: FeatureVector::from_values(&vals, degenerate),
        });
    }
    if rows.is_empty() {
        return Err(TableError::EmptyInput);
    }
    Ok(rows)
}

pub fn read_table(path: &Path) -> Result<Vec<FeatureRow>, TableError> {
    let file = std::fs::File::open(path).map_err(|e| TableError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    read_rows(file)
}
