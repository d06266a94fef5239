//! Defaults for every tunable, and the `key=value` override file.
//!
//! Keys are the long flag names without dashes (`k`, `epochs`,
//! `learning-rate`, ...). Blank lines and lines starting with `#` are
//! ignored. Values from the file win over command-line flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

pub const DEFAULT_WORKING_SIZE: usize = 256;
pub const DEFAULT_K: usize = 5;
pub const DEFAULT_SMOOTH_THRESHOLD: f64 = 40.0;
pub const DEFAULT_CONNECTIVITY: u8 = 8;
pub const DEFAULT_BINARIZE_THRESHOLD: u8 = 128;
pub const DEFAULT_EPOCHS: usize = 5;
pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_LEARNING_RATE: f64 = 0.001;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;
pub const DEFAULT_SYNTH_PER_CLASS: usize = 30;
/// Environment variable naming the dataset root when `--dataset` is absent.
pub const DATASET_ENV: &str = "LESIONMORPH_DATASET";

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{path}:{line}: expected key=value, got {text:?}")]
    Syntax { path: String, line: usize, text: String },
    #[error("{path}:{line}: key {key:?} given twice")]
    Duplicate { path: String, line: usize, key: String },
    #[error("cannot read {path}: {reason}")]
    Read { path: String, reason: String },
}

pub fn parse_overrides(text: &str, origin: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                path: origin.into(),
                line: i + 1,
                text: line.into(),
            });
        };
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                path: origin.into(),
                line: i + 1,
                text: line.into(),
            });
        }
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(ConfigError::Duplicate {
                path: origin.into(),
                line: i + 1,
                key,
            });
        }
    }
    Ok(out)
}

pub fn load_overrides(path: &Path) -> Result<BTreeMap<String, String>, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_overrides(&text, &path.display().to_string())
}
