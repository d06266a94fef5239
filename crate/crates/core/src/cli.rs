//! The `lesionmorph` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
//! Fatal errors print one line, `lesionmorph: error[<kind>]: <message>`, on
//! stderr.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::classifier::{self, ClassifierError, ModelMetadata, Optimizer, TrainConfig};
use crate::config::{self, load_overrides};
use crate::dataset::{load_sample_mask, scan_dataset, stratified_split, ClassLabel, DatasetError, Split};
use crate::imgproc::{save_gray_png, Connectivity};
use crate::manifest::{write_atomic, RunManifest};
use crate::metrics::save_heat_grid;
use crate::morphometry::{render_overlay, working_mask, ExtractOptions, RoundnessDiameter, Suppression, FEATURE_NAMES, MODEL_INPUT_DIM};
use crate::pipeline::{self, PipelineError};
use crate::synthkit::{synth_corpus, SynthError};
use crate::table::{self, TableError};

#[derive(Debug, Parser)]
#[command(name = "lesionmorph", version, about = "Shape features, classification and metrics for lesion masks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic three-class mask corpus in the dataset layout.
    Synth(SynthArgs),
    /// Compute the feature table for a dataset.
    Extract(ExtractArgs),
    /// Train the classifier on a feature table.
    Train(TrainArgs),
    /// Score a trained model on a feature table.
    Eval(EvalArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Output directory; class folders are created inside it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = config::DEFAULT_SYNTH_PER_CLASS)]
    pub per_class: usize,
    #[arg(long, default_value_t = config::DEFAULT_SEED)]
    pub seed: u64,
    /// key=value file; its values override flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ExtractArgs {
    /// Dataset root with one folder per class.
    #[arg(long, env = config::DATASET_ENV)]
    pub dataset: Option<PathBuf>,
    /// Feature table to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Working grid side in pixels, or `raw` to keep each mask's own grid.
    #[arg(long, default_value = "256")]
    pub size: String,
    /// Step between the points that define each curvature angle.
    #[arg(long, default_value_t = config::DEFAULT_K)]
    pub k: usize,
    /// Turning angles at or below this many degrees count as smooth.
    #[arg(long, default_value_t = config::DEFAULT_SMOOTH_THRESHOLD)]
    pub smooth_threshold: f64,
    /// Foreground connectivity, 4 or 8.
    #[arg(long, default_value_t = config::DEFAULT_CONNECTIVITY)]
    pub connectivity: u8,
    /// Gray level at or above which a mask pixel is foreground.
    #[arg(long, default_value_t = config::DEFAULT_BINARIZE_THRESHOLD)]
    pub binarize_threshold: u8,
    /// Diameter used for roundness: `ellipse` (major axis) or `hull`.
    #[arg(long, default_value = "ellipse")]
    pub roundness: String,
    /// Curvature run merging: `windowed` or `global`.
    #[arg(long, default_value = "windowed")]
    pub suppression: String,
    /// Worker threads; output is identical for any value.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Directory for per-sample diagnostics JSON.
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
    /// Directory for per-sample convex/concave overlay PNGs.
    #[arg(long)]
    pub overlays: Option<PathBuf>,
    /// key=value file; its values override flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub features: PathBuf,
    /// Model file to write.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = config::DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = config::DEFAULT_TRAIN_FRACTION)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = config::DEFAULT_EPOCHS)]
    pub epochs: usize,
    #[arg(long, default_value_t = config::DEFAULT_BATCH_SIZE)]
    pub batch_size: usize,
    #[arg(long, default_value_t = config::DEFAULT_LEARNING_RATE)]
    pub learning_rate: f64,
    /// `adam` or `sgd`.
    #[arg(long, default_value = "adam")]
    pub optimizer: String,
    /// Where to write the train/validation id lists (default: beside the model).
    #[arg(long)]
    pub split_out: Option<PathBuf>,
    /// Per-epoch log (default: beside the model).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// key=value file; its values override flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Split file written by `train`; restricts scoring to `--subset`.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// `validation`, `train` or `all`.
    #[arg(long, default_value = "validation")]
    pub subset: String,
    /// Metric report JSON to write.
    #[arg(long)]
    pub report: PathBuf,
    /// Confusion-matrix heat grid PNG.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// key=value file; its values override flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    fn line(&self) -> String {
        let (kind, msg) = match self {
            CliError::Usage(m) => ("usage", m),
            CliError::Data(m) => ("data", m),
            CliError::Internal(m) => ("internal", m),
        };
        format!("lesionmorph: error[{kind}]: {}", msg.replace('\n', " "))
    }
}

fn io_fail(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Internal(format!("{}: {e}", path.display()))
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TableError> for CliError {
    fn from(e: TableError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ClassifierError> for CliError {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            ClassifierError::Io { .. } => CliError::Internal(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Classifier(c) => c.into(),
            PipelineError::ThreadPool(..) => CliError::Internal(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidSpec(_) => CliError::Usage(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("config key {key}: cannot parse {value:?}")))
}

fn apply_config(path: &Option<PathBuf>, mut set: impl FnMut(&str, &str) -> Result<bool, CliError>) -> Result<(), CliError> {
    let Some(path) = path else { return Ok(()) };
    let overrides = load_overrides(path).map_err(|e| CliError::Usage(e.to_string()))?;
    for (k, v) in &overrides {
        if !set(k, v)? {
            return Err(CliError::Usage(format!("{}: unknown key {k:?}", path.display())));
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = std::panic::catch_unwind(|| dispatch(cli)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(CliError::Internal(msg))
    });
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.line());
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
    }
}

fn options_json<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).expect("arguments serialize")
}

pub fn cmd_synth(mut a: SynthArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let config = a.config.clone();
    apply_config(&config, |k, v| {
        match k {
            "per-class" => a.per_class = parse_value(k, v)?,
            "seed" => a.seed = parse_value(k, v)?,
            "out" => a.out = PathBuf::from(v),
            _ => return Ok(false),
        }
        Ok(true)
    })?;
    let index = synth_corpus(&a.out, a.per_class, a.seed)?;
    println!("wrote {} samples to {}", index.samples.len(), a.out.display());
    let mut m = RunManifest::new("synth", options_json(&a));
    m.seeds.push(a.seed);
    m.outputs.push(a.out.clone());
    m.wall_time_secs = started.elapsed().as_secs_f64();
    m.write_beside(&a.out).map_err(io_fail(&a.out))?;
    Ok(())
}

fn extract_options(a: &ExtractArgs) -> Result<ExtractOptions, CliError> {
    let working_size = match a.size.as_str() {
        "raw" => None,
        s => match s.parse::<usize>() {
            Ok(n) if n >= 8 => Some(n),
            _ => return Err(CliError::Usage(format!("--size must be `raw` or an integer >= 8, got {s:?}"))),
        },
    };
    let connectivity = match a.connectivity {
        4 => Connectivity::Four,
        8 => Connectivity::Eight,
        c => return Err(CliError::Usage(format!("--connectivity must be 4 or 8, got {c}"))),
    };
    let roundness = match a.roundness.as_str() {
        "ellipse" => RoundnessDiameter::EllipseMajor,
        "hull" => RoundnessDiameter::HullDiameter,
        r => return Err(CliError::Usage(format!("--roundness must be `ellipse` or `hull`, got {r:?}"))),
    };
    let suppression = match a.suppression.as_str() {
        "windowed" => Suppression::Windowed,
        "global" => Suppression::Global,
        s => return Err(CliError::Usage(format!("--suppression must be `windowed` or `global`, got {s:?}"))),
    };
    if a.k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    if !(0.0..=180.0).contains(&a.smooth_threshold) {
        return Err(CliError::Usage("--smooth-threshold must lie in [0, 180]".into()));
    }
    Ok(ExtractOptions {
        working_size,
        k: a.k,
        smooth_threshold: a.smooth_threshold,
        connectivity,
        roundness,
        suppression,
    })
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

pub fn cmd_extract(mut a: ExtractArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let config = a.config.clone();
    apply_config(&config, |k, v| {
        match k {
            "dataset" => a.dataset = Some(PathBuf::from(v)),
            "out" => a.out = PathBuf::from(v),
            "size" => a.size = v.to_string(),
            "k" => a.k = parse_value(k, v)?,
            "smooth-threshold" => a.smooth_threshold = parse_value(k, v)?,
            "connectivity" => a.connectivity = parse_value(k, v)?,
            "binarize-threshold" => a.binarize_threshold = parse_value(k, v)?,
            "roundness" => a.roundness = v.to_string(),
            "suppression" => a.suppression = v.to_string(),
            "jobs" => a.jobs = parse_value(k, v)?,
            "diagnostics" => a.diagnostics = Some(PathBuf::from(v)),
            "overlays" => a.overlays = Some(PathBuf::from(v)),
            _ => return Ok(false),
        }
        Ok(true)
    })?;
    let opts = extract_options(&a)?;
    let root = a.dataset.clone().ok_or_else(|| {
        CliError::Usage(format!("no dataset root: pass --dataset or set {}", config::DATASET_ENV))
    })?;
    let index = scan_dataset(&root)?;
    for w in &index.warnings {
        eprintln!("warning: {}: {}", w.path.display(), w.reason);
    }
    let extracted = pipeline::extract_dataset(&index, &opts, a.binarize_threshold, a.jobs.max(1))?;
    for (e, s) in extracted.iter().zip(&index.samples) {
        if s.mask_paths.is_empty() {
            eprintln!("warning: {}: no mask, row zeroed", e.row.id);
        } else if e.row.features.degenerate {
            eprintln!("warning: {}: degenerate region ({})", e.row.id, e.diagnostics.notes.join("; "));
        }
    }
    let rows: Vec<_> = extracted.iter().map(|e| e.row.clone()).collect();
    let csv = table::to_string(&rows)?;
    write_atomic(&a.out, csv.as_bytes()).map_err(io_fail(&a.out))?;
    let mut outputs = vec![a.out.clone()];
    if let Some(dir) = &a.diagnostics {
        fs::create_dir_all(dir).map_err(io_fail(dir))?;
        for e in &extracted {
            let p = dir.join(format!("{}.json", file_safe(&e.row.id)));
            let doc = json!({ "id": e.row.id, "class": e.row.label, "features": e.row.features, "diagnostics": e.diagnostics });
            let text = serde_json::to_string_pretty(&doc).expect("diagnostics serialize");
            fs::write(&p, text).map_err(io_fail(&p))?;
        }
        outputs.push(dir.clone());
    }
    if let Some(dir) = &a.overlays {
        fs::create_dir_all(dir).map_err(io_fail(dir))?;
        for (e, s) in extracted.iter().zip(&index.samples) {
            let mask = working_mask(&load_sample_mask(s, a.binarize_threshold)?, &opts);
            let img = render_overlay(&mask, &e.diagnostics).map_err(|err| CliError::Internal(err.to_string()))?;
            let p = dir.join(format!("{}.png", file_safe(&e.row.id)));
            save_gray_png(&img, &p).map_err(|err| CliError::Internal(err.to_string()))?;
        }
        outputs.push(dir.clone());
    }
    let degenerate = rows.iter().filter(|r| r.features.degenerate).count();
    println!("extracted {} rows ({} degenerate) to {}", rows.len(), degenerate, a.out.display());
    let mut m = RunManifest::new("extract", options_json(&a));
    m.inputs.push(root);
    m.outputs = outputs;
    m.results = json!({ "rows": rows.len(), "degenerate": degenerate, "scan_warnings": index.warnings.len() });
    m.wall_time_secs = started.elapsed().as_secs_f64();
    m.write_beside(&a.out).map_err(io_fail(&a.out))?;
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

pub fn cmd_train(mut a: TrainArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let config = a.config.clone();
    apply_config(&config, |k, v| {
        match k {
            "features" => a.features = PathBuf::from(v),
            "model" => a.model = PathBuf::from(v),
            "seed" => a.seed = parse_value(k, v)?,
            "train-fraction" => a.train_fraction = parse_value(k, v)?,
            "epochs" => a.epochs = parse_value(k, v)?,
            "batch-size" => a.batch_size = parse_value(k, v)?,
            "learning-rate" => a.learning_rate = parse_value(k, v)?,
            "optimizer" => a.optimizer = v.to_string(),
            "split-out" => a.split_out = Some(PathBuf::from(v)),
            "log" => a.log = Some(PathBuf::from(v)),
            _ => return Ok(false),
        }
        Ok(true)
    })?;
    let optimizer: Optimizer = a.optimizer.parse().map_err(CliError::Usage)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.learning_rate,
        optimizer,
        seed: a.seed,
    };
    cfg.validate()?;
    if !(a.train_fraction > 0.0 && a.train_fraction < 1.0) {
        return Err(CliError::Usage(format!("--train-fraction must lie in (0, 1), got {}", a.train_fraction)));
    }
    let rows = table::read_table(&a.features)?;
    let labelled: Vec<(String, ClassLabel)> = rows.iter().map(|r| (r.id.clone(), r.label)).collect();
    let split = stratified_split(&labelled, a.seed, a.train_fraction)?;
    let (model, report) = pipeline::train_on_rows(&rows, &split, &cfg)?;

    let log_path = a.log.clone().unwrap_or_else(|| sibling(&a.model, ".log"));
    let split_path = a.split_out.clone().unwrap_or_else(|| sibling(&a.model, ".split.json"));
    let lines = report.log_lines();
    for l in &lines {
        println!("{l}");
    }
    let mut log = lines.join("\n");
    log.push('\n');
    write_atomic(&log_path, log.as_bytes()).map_err(io_fail(&log_path))?;
    let split_text = serde_json::to_string_pretty(&split).expect("split serializes") + "\n";
    write_atomic(&split_path, split_text.as_bytes()).map_err(io_fail(&split_path))?;
    let metadata = ModelMetadata {
        feature_names: FEATURE_NAMES[..MODEL_INPUT_DIM].iter().map(|s| s.to_string()).collect(),
        train_config: Some(cfg),
        param_count: model.param_count(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
    };
    write_atomic(&a.model, classifier::model_to_string(&model, &metadata).as_bytes()).map_err(io_fail(&a.model))?;

    let last = report.last().expect("epochs >= 1");
    let mut m = RunManifest::new("train", options_json(&a));
    m.seeds.push(a.seed);
    m.inputs.push(a.features.clone());
    m.outputs = vec![a.model.clone(), log_path, split_path];
    m.results = json!({
        "accuracy": last.train_acc,
        "val_accuracy": last.val_acc,
        "loss": last.train_loss,
        "val_loss": last.val_loss,
        "param_count": model.param_count(),
        "train_rows": split.train_ids.len(),
        "validation_rows": split.validation_ids.len(),
        "degenerate_rows": rows.iter().filter(|r| r.features.degenerate).count(),
    });
    m.wall_time_secs = started.elapsed().as_secs_f64();
    m.write_beside(&a.model).map_err(io_fail(&a.model))?;
    println!(
        "accuracy: {:.4}, val_accuracy: {:.4}, loss: {:.4}",
        last.train_acc, last.val_acc, last.train_loss
    );
    Ok(())
}

pub fn cmd_eval(mut a: EvalArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let config = a.config.clone();
    apply_config(&config, |k, v| {
        match k {
            "model" => a.model = PathBuf::from(v),
            "features" => a.features = PathBuf::from(v),
            "split" => a.split = Some(PathBuf::from(v)),
            "subset" => a.subset = v.to_string(),
            "report" => a.report = PathBuf::from(v),
            "grid" => a.grid = Some(PathBuf::from(v)),
            _ => return Ok(false),
        }
        Ok(true)
    })?;
    let (model, _) = classifier::load_model(&a.model)?;
    let rows = table::read_table(&a.features)?;
    let rows = match &a.split {
        None => rows,
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            let split: Split =
                serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            match a.subset.as_str() {
                "validation" => pipeline::select_rows(&rows, &split.validation_ids),
                "train" => pipeline::select_rows(&rows, &split.train_ids),
                "all" => rows,
                s => return Err(CliError::Usage(format!("--subset must be validation, train or all, got {s:?}"))),
            }
        }
    };
    let report = pipeline::evaluate_rows(&model, &rows)?;
    print!("{}", report.to_table());
    write_atomic(&a.report, report.to_json().as_bytes()).map_err(io_fail(&a.report))?;
    let mut outputs = vec![a.report.clone()];
    if let Some(g) = &a.grid {
        save_heat_grid(&report.confusion, g).map_err(|e| CliError::Internal(e.to_string()))?;
        outputs.push(g.clone());
    }
    let mut m = RunManifest::new("eval", options_json(&a));
    m.inputs = vec![a.model.clone(), a.features.clone()];
    m.outputs = outputs;
    m.results = json!({
        "accuracy": report.accuracy,
        "macro_f1": report.macro_f1,
        "rows": rows.len(),
        "degenerate_rows": rows.iter().filter(|r| r.features.degenerate).count(),
    });
    m.wall_time_secs = started.elapsed().as_secs_f64();
    m.write_beside(&a.report).map_err(io_fail(&a.report))?;
    Ok(())
}
