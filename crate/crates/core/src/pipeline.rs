//! End-to-end orchestration: ingest or synthesize, align, window, split,
//! standardize, select, train, evaluate and write artifacts.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use ndarray::{Array2, ArrayView2};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datafusion::{
    align, correlation_matrix, distinct_rows, fit_scaler, fnirs_channel_names, load_labels, load_stream, split, window, windows_to_batch,
    AlignedDataset, LabelTrack, Scaler, SplitMode, Stream, StreamSchema, Window, DRIVING_CHANNELS, FNIRS_CHANNELS, TIMESTAMP_COLUMN,
};
use crate::error::{Error, Result};
use crate::evalmetrics::{render_report, Averaging, Fingerprint, MetricsReport};
use crate::featsel::{fit_selector, FeatureMatrix, Selection, SelectorConfig, SelectorKind};
use crate::nncore::{checkpoint, fit, predict, FitResult, ModelParams, TrainConfig, MIN_TIME};
use crate::synthgen::{generate_dataset, session_dir_name, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    #[default]
    Synth,
    Dir,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    /// Directory of `session_XX/` folders when `source = "dir"`.
    pub input_dir: Option<PathBuf>,
    /// fNIRS channels kept during alignment; all 204 when absent.
    pub fnirs_channels: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub length: usize,
    pub stride: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { length: 16, stride: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub ratio: f64,
    pub mode: SplitMode,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            ratio: 0.8,
            mode: SplitMode::Random,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub averaging: Averaging,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: Option<PathBuf>,
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub selector: SelectorConfig,
    pub window: WindowConfig,
    pub split: SplitConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

/// Applies one `dotted.key=value` override to a TOML table. The value is
/// parsed as a TOML literal when possible and taken as a string otherwise.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} must look like section.key=value")))?;
    let value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key {key:?} is malformed")));
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        table = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {p} is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(config_err)?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table).try_into().map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML file (or defaults when `path` is `None`) and applies
    /// `--set` style overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Number of fused feature columns, when known before ingesting.
    pub fn expected_features(&self) -> Option<usize> {
        let fnirs = self.data.fnirs_channels.as_ref().map_or(FNIRS_CHANNELS, Vec::len);
        match self.data.source {
            DataSource::Synth => Some(fnirs + self.synth.eye_channels.len() + DRIVING_CHANNELS.len()),
            DataSource::Dir => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let min_len = MIN_TIME.max(5);
        if self.window.length < min_len {
            return Err(Error::Config(format!("window.length must be at least {min_len}, got {}", self.window.length)));
        }
        if self.window.stride == 0 {
            return Err(Error::Config("window.stride must be at least 1".into()));
        }
        if !(self.split.ratio > 0.0 && self.split.ratio < 1.0) {
            return Err(Error::Config(format!("split.ratio must lie in (0, 1), got {}", self.split.ratio)));
        }
        self.train.validate()?;
        let nf = self.expected_features();
        self.selector.extra_trees.validate(nf.unwrap_or(usize::MAX))?;
        if self.selector.k == 0 {
            return Err(Error::Config("selector.k must be at least 1".into()));
        }
        if let Some(nf) = nf {
            if self.selector.k > nf {
                return Err(Error::Config(format!("selector.k = {} exceeds the {nf} available features", self.selector.k)));
            }
        }
        match self.data.source {
            DataSource::Synth => self.synth.validate().map_err(|e| Error::Config(e.to_string()))?,
            DataSource::Dir => {
                if self.data.input_dir.is_none() {
                    return Err(Error::Config("data.source = \"dir\" needs data.input_dir".into()));
                }
            }
        }
        if let Some(chs) = &self.data.fnirs_channels {
            let known: BTreeSet<String> = fnirs_channel_names().into_iter().collect();
            if let Some(bad) = chs.iter().find(|c| !known.contains(*c)) {
                return Err(Error::Config(format!("data.fnirs_channels: unknown channel {bad:?}")));
            }
        }
        Ok(())
    }

    pub fn fingerprint(&self, selector: &str, k: usize) -> Fingerprint {
        Fingerprint {
            selector: selector.to_string(),
            k,
            window_length: self.window.length,
            window_stride: self.window.stride,
            split: self.split.mode,
            seed: self.train.seed,
        }
    }
}

/// Raw streams of one recording session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionStreams {
    pub index: usize,
    pub fnirs: Stream,
    pub eye: Stream,
    pub driving: Stream,
    pub labels: LabelTrack,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> Result<FileHash> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(FileHash {
        path: path.to_path_buf(),
        sha256: sha256_hex(&bytes),
    })
}

fn eye_schema_from_header(path: &Path) -> Result<StreamSchema> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Header {
            path: path.to_path_buf(),
            msg: format!("{other:?}"),
        },
    })?;
    let headers = reader.headers().map_err(|e| Error::Header {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let mut cols = headers.iter().map(str::trim);
    if cols.next() != Some(TIMESTAMP_COLUMN) {
        return Err(Error::Header {
            path: path.to_path_buf(),
            msg: format!("first column must be {TIMESTAMP_COLUMN}"),
        });
    }
    StreamSchema::eye(&cols.map(String::from).collect::<Vec<_>>())
}

/// Reads every `session_XX/` folder under `dir` in name order.
pub fn load_session_dir(dir: &Path) -> Result<(Vec<SessionStreams>, Vec<FileHash>)> {
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("session_")))
        .collect();
    subdirs.sort();
    if subdirs.is_empty() {
        return Err(Error::Validation(format!("{} contains no session_XX directories", dir.display())));
    }
    let mut sessions = Vec::new();
    let mut hashes = Vec::new();
    for (index, sub) in subdirs.iter().enumerate() {
        let files = ["fnirs.csv", "eye.csv", "driving.csv", "labels.csv"].map(|f| sub.join(f));
        for f in &files {
            hashes.push(hash_file(f)?);
        }
        sessions.push(SessionStreams {
            index,
            fnirs: load_stream(&files[0], &StreamSchema::fnirs())?,
            eye: load_stream(&files[1], &eye_schema_from_header(&files[1])?)?,
            driving: load_stream(&files[2], &StreamSchema::driving())?,
            labels: load_labels(&files[3])?,
        });
    }
    Ok((sessions, hashes))
}

/// Synthesizes or reads the raw sessions named by the config.
pub fn ingest(cfg: &RunConfig) -> Result<(Vec<SessionStreams>, Vec<FileHash>)> {
    match cfg.data.source {
        DataSource::Synth => {
            let sessions = generate_dataset(&cfg.synth)?
                .into_iter()
                .map(|s| SessionStreams {
                    index: s.index,
                    fnirs: s.fnirs,
                    eye: s.eye,
                    driving: s.driving,
                    labels: s.labels,
                })
                .collect();
            Ok((sessions, Vec::new()))
        }
        DataSource::Dir => load_session_dir(cfg.data.input_dir.as_deref().expect("validated")),
    }
}

/// Aligns each session onto its fNIRS clock.
pub fn fuse(cfg: &RunConfig, sessions: &[SessionStreams]) -> Result<Vec<AlignedDataset>> {
    let selected = cfg.data.fnirs_channels.clone().unwrap_or_else(fnirs_channel_names);
    sessions
        .iter()
        .map(|s| {
            let mut d = align(&s.fnirs, &s.eye, &s.driving, &s.labels, &selected)?;
            d.session_id = s.index;
            Ok(d)
        })
        .collect()
}

/// Windows split into train and test, standardized with a scaler fitted on
/// the training rows.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub names: Vec<String>,
    pub train: Vec<Window>,
    pub test: Vec<Window>,
    pub scaler: Scaler,
    /// Distinct raw training rows and their labels.
    pub train_rows_raw: Array2<f64>,
    /// The same rows standardized.
    pub train_rows: Array2<f64>,
    pub train_row_labels: Vec<usize>,
}

fn standardize_window(scaler: &Scaler, w: &Window) -> Result<Window> {
    Ok(Window {
        data: scaler.apply(w.data.t())?.reversed_axes(),
        ..w.clone()
    })
}

pub fn prepare(cfg: &RunConfig, datasets: &[AlignedDataset]) -> Result<Prepared> {
    let names = datasets.first().ok_or_else(|| Error::Validation("no aligned sessions".into()))?.names.clone();
    if let Some(d) = datasets.iter().find(|d| d.names != names) {
        return Err(Error::Validation(format!("session {} has different feature columns", d.session_id)));
    }
    let mut windows = Vec::new();
    for d in datasets {
        windows.extend(window(d, cfg.window.length, cfg.window.stride).map_err(|e| e.in_stage("window"))?);
    }
    info!("{} windows of length {} from {} sessions", windows.len(), cfg.window.length, datasets.len());
    let (train, test) = split(windows, cfg.split.ratio, cfg.split.seed, cfg.split.mode).map_err(|e| e.in_stage("split"))?;
    info!("split: {} train / {} test windows ({})", train.len(), test.len(), cfg.split.mode);
    let scale = || -> Result<Prepared> {
        let (raw, labels) = distinct_rows(&train);
        let scaler = fit_scaler(raw.view(), &names)?;
        let train_rows = scaler.apply(raw.view())?;
        let train = train.iter().map(|w| standardize_window(&scaler, w)).collect::<Result<Vec<_>>>()?;
        let test = test.iter().map(|w| standardize_window(&scaler, w)).collect::<Result<Vec<_>>>()?;
        Ok(Prepared {
            names: names.clone(),
            train,
            test,
            scaler,
            train_rows_raw: raw,
            train_rows,
            train_row_labels: labels,
        })
    };
    scale().map_err(|e| e.in_stage("scale"))
}

/// Fits the configured selector on the training rows. The variance
/// threshold scores raw rows, since standardized columns all have variance 1;
/// the other selectors score standardized rows.
pub fn select_features(cfg: &SelectorConfig, prepared: &Prepared) -> Result<Selection> {
    let nf = prepared.names.len();
    if cfg.k > nf {
        return Err(Error::Config(format!("selector.k = {} exceeds the {nf} available features", cfg.k)));
    }
    let rows = match cfg.kind {
        SelectorKind::VarianceThreshold => &prepared.train_rows_raw,
        _ => &prepared.train_rows,
    };
    let x = FeatureMatrix::new(rows.clone(), prepared.names.clone())?;
    fit_selector(cfg, &x, &prepared.train_row_labels)
}

/// Applies a row reducer `(n, F) -> (n, k)` to every window.
fn reduce_windows(windows: &[Window], reduce: RowReducer) -> Result<Vec<Window>> {
    windows
        .iter()
        .map(|w| {
            Ok(Window {
                data: reduce(w.data.t())?.reversed_axes(),
                ..w.clone()
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub fit: FitResult,
    pub report: MetricsReport,
}

type RowReducer<'a> = &'a dyn Fn(ArrayView2<f64>) -> Result<Array2<f64>>;

/// Trains a fresh model on the reduced training windows.
pub fn train_reduced(cfg: &RunConfig, prepared: &Prepared, reduce: RowReducer) -> Result<FitResult> {
    let train = reduce_windows(&prepared.train, reduce).map_err(|e| e.in_stage("select"))?;
    (|| {
        let batch = windows_to_batch(&train)?;
        let init = ModelParams::init(batch.channels(), cfg.train.seed);
        fit(&batch, &cfg.train, init)
    })()
    .map_err(|e| e.in_stage("train"))
}

/// Evaluates `params` on the reduced test windows.
pub fn evaluate_reduced(cfg: &RunConfig, prepared: &Prepared, reduce: RowReducer, params: &ModelParams, label: &str, fingerprint: Fingerprint) -> Result<MetricsReport> {
    let test = reduce_windows(&prepared.test, reduce).map_err(|e| e.in_stage("select"))?;
    (|| {
        let batch = windows_to_batch(&test)?;
        let pred = predict(batch.data.view(), params)?;
        MetricsReport::evaluate(label, &batch.labels, &pred.labels, pred.scores.view(), cfg.eval.averaging, fingerprint)
    })()
    .map_err(|e| e.in_stage("evaluate"))
}

/// Reduces windows, trains a fresh model and evaluates it on the test side.
pub fn train_and_evaluate(cfg: &RunConfig, prepared: &Prepared, reduce: RowReducer, label: &str, fingerprint: Fingerprint) -> Result<Trained> {
    let fit_result = train_reduced(cfg, prepared, reduce)?;
    let report = evaluate_reduced(cfg, prepared, reduce, &fit_result.params, label, fingerprint)?;
    info!("{label}: accuracy {:.4}", report.accuracy);
    Ok(Trained { fit: fit_result, report })
}

/// Selects with `cfg.selector`, then trains and evaluates.
pub fn run_selector(cfg: &RunConfig, selector: &SelectorConfig, prepared: &Prepared) -> Result<(Selection, Trained)> {
    let selection = select_features(selector, prepared).map_err(|e| e.in_stage("select"))?;
    let fingerprint = cfg.fingerprint(selector.kind.id(), selection.n_outputs());
    let trained = train_and_evaluate(cfg, prepared, &|rows| selection.apply(rows), selector.kind.label(), fingerprint)?;
    Ok((selection, trained))
}

/// Baseline rows: `draws` models, each on `k` uniformly drawn feature columns.
pub fn random_control(cfg: &RunConfig, prepared: &Prepared, k: usize, draws: usize, seed: u64) -> Result<Vec<MetricsReport>> {
    let nf = prepared.names.len();
    if k == 0 || k > nf {
        return Err(Error::Config(format!("random control k = {k} outside 1..={nf}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..draws)
        .map(|d| {
            let mut cols = index::sample(&mut rng, nf, k).into_vec();
            cols.sort_unstable();
            let fp = cfg.fingerprint(&format!("random_control_{d}"), k);
            let label = format!("Random {k} features #{}", d + 1);
            Ok(train_and_evaluate(cfg, prepared, &|rows| Ok(rows.select(ndarray::Axis(1), &cols)), &label, fp)?.report)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub millis: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: RunConfig,
    pub seeds: Seeds,
    /// Hashes of input files, or of the fused datasets for synthetic runs.
    pub data_fingerprints: Vec<FileHash>,
    pub artifacts: Vec<FileHash>,
    pub timings: Vec<StageTiming>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub synth: u64,
    pub split: u64,
    pub train: u64,
    pub extra_trees: u64,
}

impl Seeds {
    pub fn of(cfg: &RunConfig) -> Self {
        Self {
            synth: cfg.synth.seed,
            split: cfg.split.seed,
            train: cfg.train.seed,
            extra_trees: cfg.selector.extra_trees.seed,
        }
    }
}

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";

/// Writes `contents` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Hashes the artifacts and writes the run manifest atomically.
pub fn write_manifest(
    out_dir: &Path,
    command: &str,
    cfg: &RunConfig,
    data_fingerprints: Vec<FileHash>,
    artifacts: &[PathBuf],
    timings: Vec<StageTiming>,
) -> Result<PathBuf> {
    let artifacts = artifacts.iter().map(|p| hash_file(p)).collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        command: command.to_string(),
        config: cfg.clone(),
        seeds: Seeds::of(cfg),
        data_fingerprints,
        artifacts,
        timings,
    };
    let path = out_dir.join(RUN_MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Validation(format!("manifest serialization: {e}")))?;
    write_atomic(&path, (text + "\n").as_bytes())?;
    Ok(path)
}

pub fn load_manifest(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        msg: e.to_string(),
    })
}

/// Stage timer that records wall-clock durations for the manifest.
#[derive(Debug, Default)]
pub struct Timer {
    pub timings: Vec<StageTiming>,
}

impl Timer {
    pub fn time<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| e.in_stage(stage));
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            millis: start.elapsed().as_millis(),
        });
        out
    }
}

/// Ingests and fuses, returning the aligned sessions and data fingerprints
/// (input file hashes, or hashes of the fused CSV text for synthetic data).
pub fn load_aligned(cfg: &RunConfig, timer: &mut Timer) -> Result<(Vec<AlignedDataset>, Vec<FileHash>)> {
    let (sessions, mut hashes) = timer.time("ingest", || ingest(cfg))?;
    let datasets = timer.time("align", || fuse(cfg, &sessions))?;
    if hashes.is_empty() {
        for d in &datasets {
            let mut buf = Vec::new();
            d.write_csv(&mut buf)?;
            hashes.push(FileHash {
                path: PathBuf::from(format!("<synthetic>/{}", session_dir_name(d.session_id))),
                sha256: sha256_hex(&buf),
            });
        }
    }
    Ok((datasets, hashes))
}

pub fn fused_file_name(session: usize) -> String {
    format!("aligned_{}.csv", session_dir_name(session))
}

/// Writes one `aligned_session_XX.csv` per session.
pub fn write_fused(datasets: &[AlignedDataset], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    datasets
        .iter()
        .map(|d| {
            let p = dir.join(fused_file_name(d.session_id));
            d.save_csv(&p)?;
            Ok(p)
        })
        .collect()
}

/// Reads every `aligned_session_XX.csv` under `dir` in name order.
pub fn load_fused_dir(dir: &Path) -> Result<(Vec<AlignedDataset>, Vec<FileHash>)> {
    let mut files: Vec<(usize, PathBuf)> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter_map(|p| {
            let name = p.file_name()?.to_str()?;
            let idx = name.strip_prefix("aligned_session_")?.strip_suffix(".csv")?.parse().ok()?;
            Some((idx, p))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Validation(format!("{} contains no aligned_session_XX.csv files", dir.display())));
    }
    let mut out = Vec::new();
    let mut hashes = Vec::new();
    for (idx, p) in files {
        hashes.push(hash_file(&p)?);
        out.push(AlignedDataset::load_csv(&p, idx)?);
    }
    Ok((out, hashes))
}

/// Correlation over every aligned row of every session.
pub fn fused_correlation(datasets: &[AlignedDataset]) -> Result<crate::datafusion::CorrelationMatrix> {
    let views: Vec<ArrayView2<f64>> = datasets.iter().map(|d| d.features.view()).collect();
    let rows = ndarray::concatenate(ndarray::Axis(0), &views).map_err(|e| Error::Validation(format!("sessions disagree on columns: {e}")))?;
    correlation_matrix(rows.view(), &datasets[0].names)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: MetricsReport,
    pub selection: Selection,
    pub fit: FitResult,
    pub artifacts: Vec<PathBuf>,
    pub manifest: PathBuf,
}

pub const CHECKPOINT_FILE: &str = "checkpoint.txt";

/// The full pipeline with the configured selector.
pub fn run_pipeline(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut timer = Timer::default();
    let (datasets, data_hashes) = load_aligned(cfg, &mut timer)?;
    let prepared = timer.time("prepare", || prepare(cfg, &datasets))?;
    let (selection, trained) = timer.time("train", || run_selector(cfg, &cfg.selector, &prepared))?;

    let mut artifacts = timer.time("report", || {
        let mut paths = Vec::new();
        let ckpt = out_dir.join(CHECKPOINT_FILE);
        checkpoint::save(&ckpt, &trained.fit.params, cfg.train.seed)?;
        paths.push(ckpt);
        let ranking = out_dir.join(format!("ranking_{}.csv", selection.kind.id()));
        selection.ranking.save_csv(&ranking)?;
        paths.push(ranking);
        paths.extend(write_selected_correlation(&prepared, &selection, out_dir)?);
        paths.extend(render_report(std::slice::from_ref(&trained.report), &[], out_dir)?);
        Ok(paths)
    })?;
    artifacts.sort();
    let manifest = write_manifest(out_dir, "pipeline", cfg, data_hashes, &artifacts, timer.timings)?;
    Ok(RunOutcome {
        report: trained.report,
        selection,
        fit: trained.fit,
        artifacts,
        manifest,
    })
}

/// Correlation of the selected features over the standardized training rows.
fn write_selected_correlation(prepared: &Prepared, selection: &Selection, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let rows = selection.apply(prepared.train_rows.view())?;
    let corr = correlation_matrix(rows.view(), &selection.output_names())?;
    let csv = out_dir.join("correlation.csv");
    let svg = out_dir.join("correlation.svg");
    corr.save_csv(&csv)?;
    corr.save_svg(&svg)?;
    Ok(vec![csv, svg])
}

#[derive(Debug)]
pub struct CompareOutcome {
    pub reports: Vec<MetricsReport>,
    /// `(selector label, error)` for selectors that failed.
    pub failures: Vec<(String, String)>,
    pub errors: Vec<Error>,
    pub artifacts: Vec<PathBuf>,
    pub manifest: PathBuf,
}

/// Runs every selector on the same split and seeds and writes one
/// comparison report. A failing selector is recorded and the rest still run.
pub fn compare_selectors(cfg: &RunConfig, out_dir: &Path) -> Result<CompareOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut timer = Timer::default();
    let (datasets, data_hashes) = load_aligned(cfg, &mut timer)?;
    let prepared = timer.time("prepare", || prepare(cfg, &datasets))?;
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    let mut errors = Vec::new();
    let mut artifacts = Vec::new();
    for kind in SelectorKind::ALL {
        let sel_cfg = SelectorConfig { kind, ..cfg.selector.clone() };
        let start = Instant::now();
        let outcome = run_selector(cfg, &sel_cfg, &prepared).and_then(|(selection, trained)| {
            let ranking = out_dir.join(format!("ranking_{}.csv", kind.id()));
            selection.ranking.save_csv(&ranking)?;
            artifacts.push(ranking);
            Ok(trained.report)
        });
        timer.timings.push(StageTiming {
            stage: format!("selector:{}", kind.id()),
            millis: start.elapsed().as_millis(),
        });
        match outcome {
            Ok(r) => reports.push(r),
            Err(e) => {
                log::error!("{} failed: {e}", kind.label());
                failures.push((kind.label().to_string(), e.to_string()));
                errors.push(e);
            }
        }
    }
    artifacts.extend(timer.time("report", || render_report(&reports, &failures, out_dir))?);
    artifacts.sort();
    let manifest = write_manifest(out_dir, "compare-selectors", cfg, data_hashes, &artifacts, timer.timings)?;
    Ok(CompareOutcome {
        reports,
        failures,
        errors,
        artifacts,
        manifest,
    })
}
