//! Dataset ingestion: `root/{normal,benign,malignant}/*.png`, where
//! `<id>.png` is the image and `<id>_mask.png` / `<id>_mask_<k>.png` are its
//! lesion masks.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imgproc::{binarize, decode_gray, ImageError, MaskImage};
use crate::rng::SeededRng;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset root {0} does not exist")]
    MissingRoot(PathBuf),
    #[error("no normal/benign/malignant directories under {0}")]
    EmptyDataset(PathBuf),
    #[error("sample id {id:?} appears in both {first} and {second}")]
    DuplicateId {
        id: String,
        first: ClassLabel,
        second: ClassLabel,
    },
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("class {class} has {count} samples, too few for a {fraction} split")]
    ClassTooSmall {
        class: ClassLabel,
        count: usize,
        fraction: f64,
    },
    #[error("mask {path} is {actual_w}x{actual_h}, expected {expected_w}x{expected_h}")]
    DimensionMismatch {
        path: PathBuf,
        expected_w: usize,
        expected_h: usize,
        actual_w: usize,
        actual_h: usize,
    },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Normal,
    Benign,
    Malignant,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [ClassLabel::Normal, ClassLabel::Benign, ClassLabel::Malignant];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Normal => "normal",
            ClassLabel::Benign => "benign",
            ClassLabel::Malignant => "malignant",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" => Ok(ClassLabel::Normal),
            "benign" => Ok(ClassLabel::Benign),
            "malignant" => Ok(ClassLabel::Malignant),
            other => Err(format!("unknown class {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub class_label: ClassLabel,
    pub image_path: PathBuf,
    pub mask_paths: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanWarning {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub root: PathBuf,
    /// Sorted by id.
    pub samples: Vec<SampleRecord>,
    pub counts_per_class: BTreeMap<ClassLabel, usize>,
    pub warnings: Vec<ScanWarning>,
}

impl DatasetIndex {
    pub fn labelled_ids(&self) -> Vec<(String, ClassLabel)> {
        self.samples.iter().map(|s| (s.id.clone(), s.class_label)).collect()
    }

    pub fn split(&self, seed: u64, train_fraction: f64) -> Result<Split, DatasetError> {
        stratified_split(&self.labelled_ids(), seed, train_fraction)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("index serializes")
    }
}

enum FileRole {
    Image(String),
    Mask(String),
}

fn classify_png(stem: &str) -> Option<FileRole> {
    match stem.rfind("_mask") {
        None => Some(FileRole::Image(stem.to_string())),
        Some(pos) => {
            let base = &stem[..pos];
            let rest = &stem[pos + "_mask".len()..];
            let suffix_ok = rest.is_empty()
                || rest
                    .strip_prefix('_')
                    .is_some_and(|k| !k.is_empty() && k.bytes().all(|b| b.is_ascii_digit()));
            (suffix_ok && !base.is_empty()).then(|| FileRole::Mask(base.to_string()))
        }
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let mut entries = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(io_err(dir))?;
    entries.sort();
    Ok(entries)
}

/// Indexes `root`. Files that fit neither naming convention, and masks with
/// no matching image, become warnings rather than errors.
pub fn scan_dataset(root: &Path) -> Result<DatasetIndex, DatasetError> {
    if !root.is_dir() {
        return Err(DatasetError::MissingRoot(root.to_path_buf()));
    }
    let mut class_dirs = Vec::new();
    for entry in sorted_entries(root)? {
        if !entry.is_dir() {
            continue;
        }
        let name = entry.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Ok(label) = name.parse::<ClassLabel>() {
            class_dirs.push((label, entry));
        }
    }
    if class_dirs.is_empty() {
        return Err(DatasetError::EmptyDataset(root.to_path_buf()));
    }

    let mut samples = Vec::new();
    let mut warnings = Vec::new();
    let mut seen: HashMap<String, ClassLabel> = HashMap::new();
    for (label, dir) in class_dirs {
        let mut images: BTreeMap<String, PathBuf> = BTreeMap::new();
        let mut masks: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
        for path in sorted_entries(&dir)? {
            let is_png = path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("png"));
            if path.is_dir() || !is_png {
                warnings.push(ScanWarning {
                    path,
                    reason: "not a PNG file".into(),
                });
                continue;
            }
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            match classify_png(&stem) {
                Some(FileRole::Image(id)) => {
                    images.insert(id, path);
                }
                Some(FileRole::Mask(id)) => masks.entry(id).or_default().push(path),
                None => warnings.push(ScanWarning {
                    path,
                    reason: "name matches neither <id>.png nor <id>_mask[_k].png".into(),
                }),
            }
        }
        for (id, paths) in &masks {
            if !images.contains_key(id) {
                for p in paths {
                    warnings.push(ScanWarning {
                        path: p.clone(),
                        reason: format!("mask has no image named {id}.png"),
                    });
                }
            }
        }
        for (id, image_path) in images {
            if let Some(&first) = seen.get(&id) {
                return Err(DatasetError::DuplicateId {
                    id,
                    first,
                    second: label,
                });
            }
            seen.insert(id.clone(), label);
            let mut mask_paths = masks.remove(&id).unwrap_or_default();
            mask_paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
            samples.push(SampleRecord {
                id,
                class_label: label,
                image_path,
                mask_paths,
            });
        }
    }
    samples.sort_by(|a, b| a.id.cmp(&b.id));
    let mut counts_per_class = BTreeMap::new();
    for s in &samples {
        *counts_per_class.entry(s.class_label).or_insert(0) += 1;
    }
    Ok(DatasetIndex {
        root: root.to_path_buf(),
        samples,
        counts_per_class,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub train_fraction: f64,
    pub train_ids: Vec<String>,
    pub validation_ids: Vec<String>,
}

/// Per-class seeded shuffle, then the first `round(fraction * n)` ids of each
/// class go to training. Classes are visited in label order with a single
/// generator, and ids are sorted before shuffling so input order is irrelevant.
/// Classes with no samples are skipped.
pub fn stratified_split(
    samples: &[(String, ClassLabel)],
    seed: u64,
    train_fraction: f64,
) -> Result<Split, DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::InvalidFraction(train_fraction));
    }
    let mut rng = SeededRng::new(seed);
    let mut train_ids = Vec::new();
    let mut validation_ids = Vec::new();
    for class in ClassLabel::ALL {
        let mut ids: Vec<&String> = samples.iter().filter(|(_, c)| *c == class).map(|(id, _)| id).collect();
        if ids.is_empty() {
            continue;
        }
        ids.sort();
        let n = ids.len();
        let n_train = (train_fraction * n as f64).round() as usize;
        if n_train == 0 || n_train == n {
            return Err(DatasetError::ClassTooSmall {
                class,
                count: n,
                fraction: train_fraction,
            });
        }
        rng.shuffle(&mut ids);
        train_ids.extend(ids[..n_train].iter().map(|s| (*s).clone()));
        validation_ids.extend(ids[n_train..].iter().map(|s| (*s).clone()));
    }
    train_ids.sort();
    validation_ids.sort();
    Ok(Split {
        seed,
        train_fraction,
        train_ids,
        validation_ids,
    })
}

/// Pixelwise OR of the given masks, each thresholded at `threshold`.
pub fn merge_masks(
    mask_paths: &[PathBuf],
    dims: (usize, usize),
    threshold: u8,
) -> Result<MaskImage, DatasetError> {
    let (w, h) = dims;
    let mut merged = MaskImage::empty(w, h)?;
    for path in mask_paths {
        let mask = binarize(&decode_gray(path)?, threshold);
        merge_into(&mut merged, &mask, path)?;
    }
    Ok(merged)
}

/// OR `mask` into `acc`; dimensions must agree.
pub fn merge_into(acc: &mut MaskImage, mask: &MaskImage, path: &Path) -> Result<(), DatasetError> {
    if (mask.width(), mask.height()) != (acc.width(), acc.height()) {
        return Err(DatasetError::DimensionMismatch {
            path: path.to_path_buf(),
            expected_w: acc.width(),
            expected_h: acc.height(),
            actual_w: mask.width(),
            actual_h: mask.height(),
        });
    }
    for (x, y) in mask.foreground().collect::<Vec<_>>() {
        acc.set(x, y, true);
    }
    Ok(())
}

/// Reads the image header for dimensions, then merges the sample's masks.
pub fn load_sample_mask(sample: &SampleRecord, threshold: u8) -> Result<MaskImage, DatasetError> {
    let (w, h) = image::image_dimensions(&sample.image_path).map_err(|e| {
        DatasetError::Image(ImageError::Decode {
            path: sample.image_path.clone(),
            reason: e.to_string(),
        })
    })?;
    Ok(merge_masks(&sample.mask_paths, (w as usize, h as usize), threshold)?.with_source(&sample.image_path))
}
