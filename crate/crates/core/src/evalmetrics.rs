//! Confusion matrices, precision/recall/F1, one-vs-rest ROC AUC and the
//! selector comparison report.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::datafusion::SplitMode;
use crate::error::{dim_check, Error, Result};
use crate::nncore::NUM_CLASSES;
use crate::svg::{heatmap, HeatmapStyle};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|c| self.counts[c][c]).sum()
    }

    /// Row sums.
    pub fn support(&self) -> [u64; NUM_CLASSES] {
        self.counts.map(|row| row.iter().sum())
    }

    /// Column sums.
    pub fn predicted(&self) -> [u64; NUM_CLASSES] {
        std::array::from_fn(|p| self.counts.iter().map(|row| row[p]).sum())
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    /// `true,pred_0,pred_1,pred_2` with one row per true class.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["true".to_string()];
        header.extend((0..NUM_CLASSES).map(|p| format!("pred_{p}")));
        w.write_record(&header).map_err(csv_err)?;
        for (t, row) in self.counts.iter().enumerate() {
            let mut rec = vec![t.to_string()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Validation(format!("csv flush failed: {e}")))
    }

    pub fn to_svg(&self, title: &str) -> String {
        let values = Array2::from_shape_fn((NUM_CLASSES, NUM_CLASSES), |(t, p)| self.counts[t][p] as f64);
        let rows: Vec<String> = (0..NUM_CLASSES).map(|c| format!("true {c}-back")).collect();
        let cols: Vec<String> = (0..NUM_CLASSES).map(|c| format!("pred {c}-back")).collect();
        heatmap(&values.view(), &rows, &cols, title, HeatmapStyle::Sequential)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Validation(format!("csv write failed: {e}"))
}

fn check_class_labels(labels: &[usize], what: &str) -> Result<()> {
    match labels.iter().find(|&&l| l >= NUM_CLASSES) {
        Some(l) => Err(Error::Validation(format!("{what} label {l} outside 0..{NUM_CLASSES}"))),
        None => Ok(()),
    }
}

pub fn confusion(true_labels: &[usize], predicted: &[usize]) -> Result<ConfusionMatrix> {
    if true_labels.len() != predicted.len() {
        return Err(Error::Validation(format!(
            "{} true labels but {} predictions",
            true_labels.len(),
            predicted.len()
        )));
    }
    check_class_labels(true_labels, "true")?;
    check_class_labels(predicted, "predicted")?;
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in true_labels.iter().zip(predicted) {
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    Macro,
    #[default]
    Weighted,
}

impl Averaging {
    pub fn id(self) -> &'static str {
        match self {
            Self::Macro => "macro",
            Self::Weighted => "weighted",
        }
    }
}

impl fmt::Display for Averaging {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Averaging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "macro" => Ok(Self::Macro),
            "weighted" => Ok(Self::Weighted),
            _ => Err(Error::Config(format!("unknown averaging {s:?}; expected macro or weighted"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub averaging: Averaging,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class and averaged precision, recall and F1. A class nobody
/// predicted has precision 0. Macro averaging takes the unweighted mean over
/// classes that occur among the true or predicted labels; weighted averaging
/// weights each class by its support.
pub fn classification_metrics(cm: &ConfusionMatrix, averaging: Averaging) -> Result<ClassificationMetrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Validation("confusion matrix is empty".into()));
    }
    let support = cm.support();
    let predicted = cm.predicted();
    let per_class: Vec<ClassMetrics> = (0..NUM_CLASSES)
        .map(|c| {
            let tp = cm.counts[c][c];
            let precision = ratio(tp, predicted[c]);
            let recall = ratio(tp, support[c]);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                class: c,
                precision,
                recall,
                f1,
                support: support[c],
            }
        })
        .collect();
    let weights: Vec<f64> = match averaging {
        Averaging::Macro => (0..NUM_CLASSES)
            .map(|c| if support[c] + predicted[c] > 0 { 1.0 } else { 0.0 })
            .collect(),
        Averaging::Weighted => support.iter().map(|&s| s as f64).collect(),
    };
    let wsum: f64 = weights.iter().sum();
    let avg = |f: fn(&ClassMetrics) -> f64| per_class.iter().zip(&weights).map(|(m, w)| w * f(m)).sum::<f64>() / wsum;
    Ok(ClassificationMetrics {
        accuracy: cm.accuracy(),
        precision: avg(|m| m.precision),
        recall: avg(|m| m.recall),
        f1: avg(|m| m.f1),
        averaging,
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucResult {
    pub auc: f64,
    /// One-vs-rest AUC per class; `None` when the class was excluded.
    pub per_class: Vec<Option<f64>>,
    /// Classes lacking positives or negatives.
    pub excluded: Vec<usize>,
}

/// Mann-Whitney AUC of `scores` for `positive` against the rest, with tied
/// scores counting one half.
fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of midranks (1-based) of positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// One-vs-rest ROC AUC from per-class scores `(n, 3)`. Classes without
/// positives or without negatives are excluded with a warning; the rest are
/// averaged per `averaging` (weighted by support for `Weighted`).
pub fn roc_auc(scores: ArrayView2<f64>, true_labels: &[usize], averaging: Averaging) -> Result<AucResult> {
    dim_check("score rows", true_labels.len(), scores.nrows())?;
    dim_check("score classes", NUM_CLASSES, scores.ncols())?;
    check_class_labels(true_labels, "true")?;
    if scores.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("scores contain NaN".into()));
    }
    let mut per_class = Vec::with_capacity(NUM_CLASSES);
    let mut excluded = Vec::new();
    let (mut num, mut den) = (0.0, 0.0);
    for c in 0..NUM_CLASSES {
        let col: Vec<f64> = scores.column(c).to_vec();
        let pos: Vec<bool> = true_labels.iter().map(|&l| l == c).collect();
        match binary_auc(&col, &pos) {
            Some(a) => {
                let w = match averaging {
                    Averaging::Macro => 1.0,
                    Averaging::Weighted => pos.iter().filter(|&&p| p).count() as f64,
                };
                num += w * a;
                den += w;
                per_class.push(Some(a));
            }
            None => {
                warn!("class {c} has no positives or no negatives; excluded from AUC");
                excluded.push(c);
                per_class.push(None);
            }
        }
    }
    if den == 0.0 {
        return Err(Error::Validation("no class has both positives and negatives; AUC undefined".into()));
    }
    Ok(AucResult {
        auc: num / den,
        per_class,
        excluded,
    })
}

/// What produced a report row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub selector: String,
    pub k: usize,
    pub window_length: usize,
    pub window_stride: usize,
    pub split: SplitMode,
    pub seed: u64,
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "selector={} k={} window={}/{} split={} seed={}",
            self.selector, self.k, self.window_length, self.window_stride, self.split, self.seed
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Table row label.
    pub label: String,
    pub accuracy: f64,
    pub f1: f64,
    pub auc: f64,
    pub precision: f64,
    pub recall: f64,
    pub averaging: Averaging,
    pub per_class: Vec<ClassMetrics>,
    pub per_class_auc: Vec<Option<f64>>,
    pub auc_excluded: Vec<usize>,
    pub confusion: ConfusionMatrix,
    pub fingerprint: Fingerprint,
}

impl MetricsReport {
    /// Evaluates predictions against the truth.
    pub fn evaluate(label: impl Into<String>, true_labels: &[usize], predicted: &[usize], scores: ArrayView2<f64>, averaging: Averaging, fingerprint: Fingerprint) -> Result<Self> {
        let cm = confusion(true_labels, predicted)?;
        let m = classification_metrics(&cm, averaging)?;
        let auc = roc_auc(scores, true_labels, averaging)?;
        Ok(Self {
            label: label.into(),
            accuracy: m.accuracy,
            f1: m.f1,
            auc: auc.auc,
            precision: m.precision,
            recall: m.recall,
            averaging,
            per_class: m.per_class,
            per_class_auc: auc.per_class,
            auc_excluded: auc.excluded,
            confusion: cm,
            fingerprint,
        })
    }
}

pub const TABLE_COLUMNS: [&str; 5] = ["Accuracy", "F1-score", "AUC", "Precision", "Recall"];

/// Aligned comparison table, one row per report, metrics to 4 decimals.
pub fn render_table(reports: &[MetricsReport]) -> String {
    let method_w = reports.iter().map(|r| r.label.len()).max().unwrap_or(0).max("Method".len());
    let col_w: Vec<usize> = TABLE_COLUMNS.iter().map(|c| c.len().max(6)).collect();
    let mut out = format!("{:<method_w$}", "Method");
    for (c, w) in TABLE_COLUMNS.iter().zip(&col_w) {
        out.push_str(&format!("  {c:>w$}"));
    }
    out.push('\n');
    for r in reports {
        out.push_str(&format!("{:<method_w$}", r.label));
        for (v, w) in [r.accuracy, r.f1, r.auc, r.precision, r.recall].iter().zip(&col_w) {
            out.push_str(&format!("  {v:>w$.4}"));
        }
        out.push('\n');
    }
    out
}

fn report_text(reports: &[MetricsReport]) -> String {
    let mut out = render_table(reports);
    out.push('\n');
    for r in reports {
        let excluded = if r.auc_excluded.is_empty() {
            String::new()
        } else {
            format!(" auc_excluded_classes={:?}", r.auc_excluded)
        };
        out.push_str(&format!("{}: {} averaging={} n_test={}{excluded}\n", r.label, r.fingerprint, r.averaging, r.confusion.total()));
    }
    out
}

pub const CSV_HEADER: [&str; 12] = [
    "method", "selector", "accuracy", "f1", "auc", "precision", "recall", "averaging", "k", "window_length", "window_stride", "split",
];

pub fn write_report_csv<W: Write>(reports: &[MetricsReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = CSV_HEADER.to_vec();
    header.push("seed");
    w.write_record(&header).map_err(csv_err)?;
    for r in reports {
        let f = &r.fingerprint;
        w.write_record([
            r.label.clone(),
            f.selector.clone(),
            r.accuracy.to_string(),
            r.f1.to_string(),
            r.auc.to_string(),
            r.precision.to_string(),
            r.recall.to_string(),
            r.averaging.to_string(),
            f.k.to_string(),
            f.window_length.to_string(),
            f.window_stride.to_string(),
            f.split.to_string(),
            f.seed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Validation(format!("csv flush failed: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub reports: Vec<MetricsReport>,
    /// Rows that failed, as `(label, error message)`.
    pub failures: Vec<(String, String)>,
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `report.txt`, `report.csv`, `report.json` and
/// `confusion_<selector>.csv/.svg` under `dir`; returns the paths written.
pub fn render_report(reports: &[MetricsReport], failures: &[(String, String)], dir: &Path) -> Result<Vec<PathBuf>> {
    if reports.is_empty() && failures.is_empty() {
        return Err(Error::Validation("nothing to report".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();

    let mut text = report_text(reports);
    for (label, msg) in failures {
        text.push_str(&format!("{label}: FAILED: {msg}\n"));
    }
    let p = dir.join("report.txt");
    write_file(&p, text)?;
    paths.push(p);

    let p = dir.join("report.csv");
    let mut buf = Vec::new();
    write_report_csv(reports, &mut buf)?;
    write_file(&p, buf)?;
    paths.push(p);

    let p = dir.join("report.json");
    let file = ReportFile {
        reports: reports.to_vec(),
        failures: failures.to_vec(),
    };
    let json = serde_json::to_string_pretty(&file).map_err(|e| Error::Validation(format!("report serialization: {e}")))?;
    write_file(&p, json + "\n")?;
    paths.push(p);

    for r in reports {
        let stem = format!("confusion_{}", r.fingerprint.selector);
        let p = dir.join(format!("{stem}.csv"));
        let mut buf = Vec::new();
        r.confusion.write_csv(&mut buf)?;
        write_file(&p, buf)?;
        paths.push(p);
        let p = dir.join(format!("{stem}.svg"));
        write_file(&p, r.confusion.to_svg(&format!("Confusion matrix: {}", r.label)))?;
        paths.push(p);
    }
    Ok(paths)
}
