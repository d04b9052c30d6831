//! The four selectors behind one interface: each ranks the input columns and
//! reduces rows to `k` output features.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{
    anova_f, check_supervised_labels, fit_extra_trees, pca_fit, population_variances, select_top_k, ExtraTreesConfig, FeatureMatrix,
    ImportanceRanking, PcaModel,
};
use crate::error::{dim_check, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorKind {
    VarianceThreshold,
    Pca,
    Anova,
    ExtraTrees,
}

impl SelectorKind {
    /// Comparison-table order.
    pub const ALL: [SelectorKind; 4] = [Self::VarianceThreshold, Self::Pca, Self::Anova, Self::ExtraTrees];

    pub fn id(self) -> &'static str {
        match self {
            Self::VarianceThreshold => "variance_threshold",
            Self::Pca => "pca",
            Self::Anova => "anova",
            Self::ExtraTrees => "extra_trees",
        }
    }

    /// Row label in rendered comparison tables.
    pub fn label(self) -> &'static str {
        match self {
            Self::VarianceThreshold => "Variance threshold",
            Self::Pca => "PCA",
            Self::Anova => "ANOVA",
            Self::ExtraTrees => "Extra tree features",
        }
    }
}

impl fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for SelectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| Error::Config(format!("unknown selector {s:?}; expected one of variance_threshold, pca, anova, extra_trees")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorConfig {
    pub kind: SelectorKind,
    pub k: usize,
    /// Variance threshold `tau`; columns at or below it are never selected.
    pub variance_tau: f64,
    pub extra_trees: ExtraTreesConfig,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            kind: SelectorKind::ExtraTrees,
            k: 20,
            variance_tau: 0.0,
            extra_trees: ExtraTreesConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reducer {
    /// Keep these input columns, in ranking order.
    Columns { names: Vec<String>, indices: Vec<usize> },
    /// Project onto principal components.
    Projection(PcaModel),
}

/// A fitted selector.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub kind: SelectorKind,
    pub ranking: ImportanceRanking,
    pub reducer: Reducer,
    pub input_names: Vec<String>,
}

impl Selection {
    pub fn output_names(&self) -> Vec<String> {
        match &self.reducer {
            Reducer::Columns { names, .. } => names.clone(),
            Reducer::Projection(m) => m.component_names(),
        }
    }

    pub fn n_outputs(&self) -> usize {
        match &self.reducer {
            Reducer::Columns { indices, .. } => indices.len(),
            Reducer::Projection(m) => m.n_components(),
        }
    }

    /// Reduces rows `(n, n_inputs)` to `(n, k)`.
    pub fn apply(&self, rows: ArrayView2<f64>) -> Result<Array2<f64>> {
        dim_check("selector input features", self.input_names.len(), rows.ncols())?;
        match &self.reducer {
            Reducer::Columns { indices, .. } => Ok(rows.select(Axis(1), indices)),
            Reducer::Projection(m) => m.transform(rows),
        }
    }
}

/// Fits `cfg.kind` on training rows. `x` is what the selector scores: the
/// pipeline passes standardized rows, except for the variance threshold,
/// which is meaningless after standardization and scores raw rows.
pub fn fit_selector(cfg: &SelectorConfig, x: &FeatureMatrix, y: &[usize]) -> Result<Selection> {
    let nf = x.n_features();
    if cfg.k == 0 || cfg.k > nf {
        return Err(Error::Config(format!("selector k = {} outside 1..={nf}", cfg.k)));
    }
    let columns = |ranking: ImportanceRanking| -> Result<Selection> {
        let names = select_top_k(&ranking, cfg.k)?;
        let indices = names.iter().map(|n| x.column_index(n).expect("ranked name exists")).collect();
        Ok(Selection {
            kind: cfg.kind,
            ranking,
            reducer: Reducer::Columns { names, indices },
            input_names: x.names.clone(),
        })
    };
    match cfg.kind {
        SelectorKind::VarianceThreshold => {
            let variances = population_variances(x);
            let kept = variances.iter().filter(|&&v| v > cfg.variance_tau).count();
            if kept < cfg.k {
                return Err(Error::Validation(format!(
                    "only {kept} features exceed the variance threshold {}; need {}",
                    cfg.variance_tau, cfg.k
                )));
            }
            let scores: Vec<f64> = variances.iter().map(|&v| if v > cfg.variance_tau { v } else { 0.0 }).collect();
            columns(ImportanceRanking::from_scores("variance_threshold", &x.names, &scores)?)
        }
        SelectorKind::Anova => {
            let scores = anova_f(x, y)?;
            columns(ImportanceRanking::from_scores("anova", &x.names, &scores)?)
        }
        SelectorKind::ExtraTrees => {
            let (_, ranking) = fit_extra_trees(x, y, &cfg.extra_trees)?;
            columns(ranking)
        }
        SelectorKind::Pca => {
            check_supervised_labels(y, x.n_samples())?;
            let model = pca_fit(x, cfg.k)?;
            let ranking = ImportanceRanking::from_scores("pca", &x.names, &model.feature_scores())?;
            Ok(Selection {
                kind: cfg.kind,
                ranking,
                reducer: Reducer::Projection(model),
                input_names: x.names.clone(),
            })
        }
    }
}
