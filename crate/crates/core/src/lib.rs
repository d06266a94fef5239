//! Morphometric shape features of lesion masks, a small classification head
//! trained on them, and the evaluation metrics around it.

pub mod classifier;
pub mod cli;
pub mod config;
pub mod contour;
pub mod dataset;
pub mod imgproc;
pub mod manifest;
pub mod metrics;
pub mod morphometry;
pub mod pipeline;
pub mod rng;
pub mod synthkit;
pub mod table;
