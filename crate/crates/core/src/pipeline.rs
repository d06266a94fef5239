//! Dataset-level steps shared by the command line and the C interface:
//! batch extraction, table-to-matrix conversion, training and scoring.

use std::collections::BTreeSet;

use rayon::prelude::*;
use thiserror::Error;

use crate::classifier::{self, ClassifierError, ClassifierModel, TrainConfig, TrainReport};
use crate::dataset::{load_sample_mask, ClassLabel, DatasetError, DatasetIndex, SampleRecord, Split};
use crate::metrics::{self, MetricReport, MetricsError};
use crate::morphometry::{analyze, Diagnostics, ExtractOptions};
use crate::table::FeatureRow;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("split refers to id {0:?}, which is not in the feature table")]
    UnknownId(String),
    #[error("no usable rows: {0}")]
    EmptyInput(String),
    #[error("cannot start {0} worker threads: {1}")]
    ThreadPool(usize, String),
}

pub struct Extracted {
    pub row: FeatureRow,
    pub diagnostics: Diagnostics,
}

fn extract_one(sample: &SampleRecord, opts: &ExtractOptions, threshold: u8) -> Result<Extracted, DatasetError> {
    let mask = load_sample_mask(sample, threshold)?;
    let (features, diagnostics) = analyze(&mask, opts);
    Ok(Extracted {
        row: FeatureRow {
            id: sample.id.clone(),
            label: sample.class_label,
            features,
        },
        diagnostics,
    })
}

/// Features for every sample, in index (id) order whatever `jobs` is.
pub fn extract_dataset(
    index: &DatasetIndex,
    opts: &ExtractOptions,
    threshold: u8,
    jobs: usize,
) -> Result<Vec<Extracted>, PipelineError> {
    let run = || -> Result<Vec<Extracted>, DatasetError> {
        index.samples.par_iter().map(|s| extract_one(s, opts, threshold)).collect()
    };
    let out = if jobs <= 1 {
        index
            .samples
            .iter()
            .map(|s| extract_one(s, opts, threshold))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| PipelineError::ThreadPool(jobs, e.to_string()))?
            .install(run)?
    };
    Ok(out)
}

/// Model inputs and label indices of the non-degenerate rows among `ids`.
pub fn model_matrix(rows: &[FeatureRow], ids: &[String]) -> Result<(Vec<Vec<f64>>, Vec<usize>), PipelineError> {
    let wanted: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    let known: BTreeSet<&str> = rows.iter().map(|r| r.id.as_str()).collect();
    if let Some(missing) = wanted.iter().find(|id| !known.contains(*id)) {
        return Err(PipelineError::UnknownId((*missing).to_string()));
    }
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for r in rows.iter().filter(|r| wanted.contains(r.id.as_str()) && !r.features.degenerate) {
        x.push(r.features.model_input().to_vec());
        y.push(r.label.index());
    }
    Ok((x, y))
}

/// Splits the table by id, drops degenerate rows, and trains.
pub fn train_on_rows(
    rows: &[FeatureRow],
    split: &Split,
    cfg: &TrainConfig,
) -> Result<(ClassifierModel, TrainReport), PipelineError> {
    let (tx, ty) = model_matrix(rows, &split.train_ids)?;
    let (vx, vy) = model_matrix(rows, &split.validation_ids)?;
    if tx.is_empty() {
        return Err(PipelineError::EmptyInput("every training row is degenerate".into()));
    }
    Ok(classifier::train(&tx, &ty, &vx, &vy, cfg)?)
}

/// Degenerate rows carry no shape and are called Normal; the rest go
/// through the model.
pub fn predict_rows(model: &ClassifierModel, rows: &[FeatureRow]) -> Result<Vec<ClassLabel>, PipelineError> {
    let live: Vec<Vec<f64>> = rows
        .iter()
        .filter(|r| !r.features.degenerate)
        .map(|r| r.features.model_input().to_vec())
        .collect();
    let mut preds = model.predict(&live)?.into_iter();
    Ok(rows
        .iter()
        .map(|r| {
            if r.features.degenerate {
                ClassLabel::Normal
            } else {
                ClassLabel::from_index(preds.next().expect("one prediction per live row")).expect("three classes")
            }
        })
        .collect())
}

pub fn evaluate_rows(model: &ClassifierModel, rows: &[FeatureRow]) -> Result<MetricReport, PipelineError> {
    if rows.is_empty() {
        return Err(PipelineError::EmptyInput("no rows to score".into()));
    }
    let predicted: Vec<usize> = predict_rows(model, rows)?.into_iter().map(ClassLabel::index).collect();
    let actual: Vec<usize> = rows.iter().map(|r| r.label.index()).collect();
    let names = ClassLabel::ALL.map(ClassLabel::as_str);
    Ok(metrics::report(&metrics::confuse(&names, &actual, &predicted)?))
}

/// Rows whose id is in `ids`, in table order.
pub fn select_rows(rows: &[FeatureRow], ids: &[String]) -> Vec<FeatureRow> {
    let wanted: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    rows.iter().filter(|r| wanted.contains(r.id.as_str())).cloned().collect()
}
