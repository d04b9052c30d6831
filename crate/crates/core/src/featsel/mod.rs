//! Feature selection: variance threshold, PCA, one-way ANOVA F and
//! extra-trees Gini importance, plus the shared ranking type.

pub mod anova;
pub mod extra_trees;
pub mod pca;
pub mod selector;
pub mod variance;

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};

pub use anova::anova_f;
pub use extra_trees::{fit_extra_trees, gini_impurity, ExtraTreesConfig, Forest};
pub use pca::{pca_fit, PcaModel};
pub use selector::{fit_selector, Selection, SelectorConfig, SelectorKind};
pub use variance::{population_variances, variance_threshold};

/// Named tabular features, `(n_samples, n_features)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Array2<f64>,
    pub names: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(values: Array2<f64>, names: Vec<String>) -> Result<Self> {
        dim_check("feature names", values.ncols(), names.len())?;
        if values.nrows() < 2 {
            return Err(Error::Validation(format!("need at least 2 samples, got {}", values.nrows())));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::Validation(format!("duplicate feature name {dup:?}")));
        }
        if let Some((i, _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite value in feature {:?}", names[i.1])));
        }
        Ok(Self { values, names })
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Validates labels against a sample count; supervised selectors need at
/// least two distinct classes.
pub fn check_supervised_labels(labels: &[usize], n_samples: usize) -> Result<()> {
    dim_check("labels", n_samples, labels.len())?;
    crate::nncore::model::check_labels(labels, crate::nncore::NUM_CLASSES)?;
    let distinct: HashSet<_> = labels.iter().collect();
    if distinct.len() < 2 {
        return Err(Error::Validation("supervised selection needs at least two classes".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub name: String,
    pub score: f64,
}

/// Features sorted by descending score; equal scores are ordered by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRanking {
    pub method: String,
    pub entries: Vec<RankEntry>,
}

impl ImportanceRanking {
    pub fn from_scores(method: impl Into<String>, names: &[String], scores: &[f64]) -> Result<Self> {
        dim_check("scores", names.len(), scores.len())?;
        if let Some(bad) = scores.iter().find(|s| s.is_nan() || **s < 0.0) {
            return Err(Error::Numeric(format!("invalid importance score {bad}")));
        }
        let mut entries: Vec<RankEntry> = names
            .iter()
            .zip(scores)
            .map(|(n, &s)| RankEntry {
                name: n.clone(),
                score: s,
            })
            .collect();
        entries.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.name.cmp(&b.name)));
        Ok(Self {
            method: method.into(),
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn score_of(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.score)
    }

    pub fn rank_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }

    /// CSV with columns `rank,feature_name,score,method`; ranks start at 1.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let wrap = |e: csv::Error| Error::Validation(format!("csv write failed: {e}"));
        w.write_record(["rank", "feature_name", "score", "method"]).map_err(wrap)?;
        for (i, e) in self.entries.iter().enumerate() {
            w.write_record([(i + 1).to_string(), e.name.clone(), e.score.to_string(), self.method.clone()])
                .map_err(wrap)?;
        }
        w.flush().map_err(|e| Error::Validation(format!("csv flush failed: {e}")))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// The first `k` names of a ranking.
pub fn select_top_k(ranking: &ImportanceRanking, k: usize) -> Result<Vec<String>> {
    if k == 0 || k > ranking.len() {
        return Err(Error::Validation(format!("cannot select top {k} of {} ranked features", ranking.len())));
    }
    Ok(ranking.entries[..k].iter().map(|e| e.name.clone()).collect())
}
