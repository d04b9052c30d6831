//! Extremely randomized trees, used only for Gini (mean decrease impurity)
//! feature importance.
//!
//! Every random draw comes from a counter-based stream keyed by the master
//! seed, the tree index, a hash of the node's path and a hash of the feature
//! name. Nothing depends on column positions, so permuting the columns of
//! the input permutes the importances and changes nothing else.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_supervised_labels, FeatureMatrix, ImportanceRanking};
use crate::error::{Error, Result};
use crate::nncore::NUM_CLASSES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtraTreesConfig {
    pub n_trees: usize,
    /// Candidate features per split; `None` means `ceil(sqrt(n_features))`.
    pub k_features: Option<usize>,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for ExtraTreesConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            k_features: None,
            min_samples_split: 2,
            max_depth: None,
            seed: 0,
        }
    }
}

impl ExtraTreesConfig {
    pub fn resolved_k(&self, n_features: usize) -> usize {
        self.k_features.unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("extra trees: n_trees must be at least 1".into()));
        }
        let k = self.resolved_k(n_features);
        if k == 0 || k > n_features {
            return Err(Error::Config(format!("extra trees: k_features {k} outside 1..={n_features}")));
        }
        if self.min_samples_split < 2 {
            return Err(Error::Config("extra trees: min_samples_split must be at least 2".into()));
        }
        if self.max_depth == Some(0) {
            return Err(Error::Config("extra trees: max_depth must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        n_samples: usize,
        /// Weighted Gini decrease credited to `feature`.
        importance: f64,
    },
    Leaf {
        n_samples: usize,
        counts: [usize; NUM_CLASSES],
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_splits(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Split { .. })).count()
    }
}

/// The fitted ensemble. Feature indices refer to `feature_names`.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub feature_names: Vec<String>,
}

/// `1 - sum_c p_c^2` over the labels of a node.
pub fn gini_impurity(labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Validation("gini impurity of an empty node".into()));
    }
    let mut counts = [0usize; NUM_CLASSES];
    for &l in labels {
        if l >= NUM_CLASSES {
            return Err(Error::Validation(format!("label {l} outside 0..{NUM_CLASSES}")));
        }
        counts[l] += 1;
    }
    Ok(gini_counts(&counts, labels.len()))
}

fn gini_counts(counts: &[usize; NUM_CLASSES], n: usize) -> f64 {
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

fn child_key(node: u64, side: u64) -> u64 {
    splitmix64(node ^ splitmix64(side.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

/// A draw in the open interval (0, 1).
fn open_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) / (1u64 << 52) as f64
}

struct Builder<'a> {
    x: &'a FeatureMatrix,
    /// Column-major copy of `x`.
    cols: Vec<Vec<f64>>,
    y: &'a [usize],
    name_keys: Vec<u64>,
    k: usize,
    cfg: &'a ExtraTreesConfig,
    n_total: usize,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    decrease: f64,
    n_left: usize,
}

impl Builder<'_> {
    fn build(&self, tree_index: usize) -> Tree {
        let tree_key = splitmix64(self.cfg.seed ^ splitmix64(tree_index as u64 ^ 0x7472_6565));
        let mut samples: Vec<usize> = (0..self.x.n_samples()).collect();
        let mut nodes = Vec::new();
        // (slot, range start, range end, depth, path key)
        let mut stack = vec![(0usize, 0usize, samples.len(), 0usize, tree_key)];
        nodes.push(Node::Leaf {
            n_samples: 0,
            counts: [0; NUM_CLASSES],
        });
        while let Some((slot, lo, hi, depth, key)) = stack.pop() {
            let idx = &mut samples[lo..hi];
            let mut counts = [0usize; NUM_CLASSES];
            for &s in idx.iter() {
                counts[self.y[s]] += 1;
            }
            let n = hi - lo;
            let leaf = Node::Leaf { n_samples: n, counts };
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            let depth_capped = self.cfg.max_depth.is_some_and(|d| depth >= d);
            if pure || n < self.cfg.min_samples_split || depth_capped {
                nodes[slot] = leaf;
                continue;
            }
            let Some(best) = self.best_split(idx, &counts, key) else {
                nodes[slot] = leaf;
                continue;
            };
            // partition: rows with value <= threshold first
            let col = &self.cols[best.feature];
            idx.sort_by_key(|&s| col[s] > best.threshold);
            debug_assert!(idx[..best.n_left].iter().all(|&s| col[s] <= best.threshold));
            let left = nodes.len();
            let right = left + 1;
            nodes.push(leaf.clone());
            nodes.push(leaf);
            nodes[slot] = Node::Split {
                feature: best.feature,
                threshold: best.threshold,
                left,
                right,
                n_samples: n,
                importance: n as f64 / self.n_total as f64 * best.decrease,
            };
            let mid = lo + best.n_left;
            stack.push((right, mid, hi, depth + 1, child_key(key, 1)));
            stack.push((left, lo, mid, depth + 1, child_key(key, 0)));
        }
        Tree { nodes }
    }

    fn best_split(&self, idx: &[usize], counts: &[usize; NUM_CLASSES], key: u64) -> Option<Candidate> {
        let n = idx.len();
        let parent = gini_counts(counts, n);
        // the k non-constant features with the smallest keyed draws
        let names = &self.x.names;
        let mut keyed: Vec<(u64, usize)> = (0..self.x.n_features()).map(|f| (splitmix64(key ^ self.name_keys[f]), f)).collect();
        keyed.sort_unstable_by(|a, b| a.0.cmp(&b.0).then_with(|| names[a.1].cmp(&names[b.1])));
        let mut ranked: Vec<(u64, usize, f64, f64)> = Vec::with_capacity(self.k);
        for &(draw, f) in &keyed {
            let col = &self.cols[f];
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &s in idx {
                lo = lo.min(col[s]);
                hi = hi.max(col[s]);
            }
            if lo < hi {
                ranked.push((draw, f, lo, hi));
                if ranked.len() == self.k {
                    break;
                }
            }
        }
        if ranked.is_empty() {
            return None;
        }

        let mut best: Option<Candidate> = None;
        for &(draw, f, lo, hi) in &ranked {
            let mut threshold = lo + open_unit(splitmix64(draw ^ 0x6375_74)) * (hi - lo);
            if threshold <= lo || threshold >= hi {
                threshold = lo + 0.5 * (hi - lo);
                if threshold <= lo || threshold >= hi {
                    continue;
                }
            }
            let col = &self.cols[f];
            let mut left = [0usize; NUM_CLASSES];
            for &s in idx {
                if col[s] <= threshold {
                    left[self.y[s]] += 1;
                }
            }
            let nl: usize = left.iter().sum();
            let nr = n - nl;
            let mut right = *counts;
            for c in 0..NUM_CLASSES {
                right[c] -= left[c];
            }
            let decrease = parent
                - nl as f64 / n as f64 * gini_counts(&left, nl)
                - nr as f64 / n as f64 * gini_counts(&right, nr);
            let better = match &best {
                None => true,
                Some(b) => decrease > b.decrease || (decrease == b.decrease && names[f] < names[b.feature]),
            };
            if better {
                best = Some(Candidate {
                    feature: f,
                    threshold,
                    decrease,
                    n_left: nl,
                });
            }
        }
        best
    }
}

/// Builds the forest and ranks features by normalized Gini importance.
pub fn fit_extra_trees(x: &FeatureMatrix, y: &[usize], cfg: &ExtraTreesConfig) -> Result<(Forest, ImportanceRanking)> {
    check_supervised_labels(y, x.n_samples())?;
    cfg.validate(x.n_features())?;
    let builder = Builder {
        x,
        cols: x.values.columns().into_iter().map(|c| c.to_vec()).collect(),
        y,
        name_keys: x.names.iter().map(|n| splitmix64(fnv1a(n))).collect(),
        k: cfg.resolved_k(x.n_features()),
        cfg,
        n_total: x.n_samples(),
    };
    let trees: Vec<Tree> = (0..cfg.n_trees).into_par_iter().map(|t| builder.build(t)).collect();

    let nf = x.n_features();
    let mut importance = vec![0.0; nf];
    for tree in &trees {
        let mut per_tree = vec![0.0; nf];
        for node in &tree.nodes {
            if let Node::Split { feature, importance, .. } = node {
                per_tree[*feature] += importance;
            }
        }
        for (acc, v) in importance.iter_mut().zip(per_tree) {
            *acc += v;
        }
    }
    for v in importance.iter_mut() {
        *v /= cfg.n_trees as f64;
    }
    // sum in name order so the total does not depend on column order
    let mut order: Vec<usize> = (0..nf).collect();
    order.sort_by(|&a, &b| x.names[a].cmp(&x.names[b]));
    let total: f64 = order.iter().map(|&f| importance[f]).sum();
    if total > 0.0 {
        for v in importance.iter_mut() {
            *v /= total;
        }
    } else {
        warn!("extra trees made no splits; every importance is zero");
    }
    let ranking = ImportanceRanking::from_scores("extra_trees", &x.names, &importance)?;
    Ok((
        Forest {
            trees,
            feature_names: x.names.clone(),
        },
        ranking,
    ))
}
