//! Sliding windows inside label blocks and train/test splitting.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use log::warn;
use ndarray::{s, Array2, Array3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::align::AlignedDataset;
use crate::error::{dim_check, Error, Result};
use crate::nncore::{SampleBatch, MIN_TIME};

/// A labelled slice of consecutive aligned rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// `(features, length)`
    pub data: Array2<f64>,
    pub label: usize,
    pub block_id: usize,
    pub session: usize,
    /// Index of the first row in the source dataset.
    pub start_row: usize,
}

impl Window {
    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }
}

/// Half-open runs `[start, end)` of equal block id.
fn block_runs(block_ids: &[usize]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=block_ids.len() {
        if i == block_ids.len() || block_ids[i] != block_ids[start] {
            if i > start {
                runs.push((start, i));
            }
            start = i;
        }
    }
    runs
}

/// Windows of `length` rows every `stride` rows inside each run of equal
/// block id. A block shorter than `length` yields no window and a warning.
pub fn window(dataset: &AlignedDataset, length: usize, stride: usize) -> Result<Vec<Window>> {
    if length < MIN_TIME.max(5) {
        return Err(Error::Config(format!("window length must be at least {}, got {length}", MIN_TIME.max(5))));
    }
    if stride == 0 {
        return Err(Error::Config("window stride must be at least 1".into()));
    }
    let mut out = Vec::new();
    for (start, end) in block_runs(&dataset.block_ids) {
        let block = dataset.block_ids[start];
        if end - start < length {
            warn!("block {block} of session {} has {} rows, fewer than the window length {length}; skipped", dataset.session_id, end - start);
            continue;
        }
        let mut s0 = start;
        while s0 + length <= end {
            out.push(Window {
                data: dataset.features.slice(s![s0..s0 + length, ..]).t().to_owned(),
                label: dataset.labels[s0],
                block_id: block,
                session: dataset.session_id,
                start_row: s0,
            });
            s0 += stride;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    #[default]
    Random,
    ByBlock,
}

impl SplitMode {
    pub fn id(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::ByBlock => "by_block",
        }
    }
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "by_block" => Ok(Self::ByBlock),
            _ => Err(Error::Config(format!("unknown split mode {s:?}; expected random or by_block"))),
        }
    }
}

/// Allocates `round(ratio * n)` of `n` items over groups of the given sizes.
/// Each group starts at its floor share, clamped to `[lo(c), hi(c)]`; the
/// remaining units go to groups by decreasing fractional remainder (or are
/// taken from groups by increasing remainder) while staying within bounds.
fn largest_remainder(sizes: &[usize], ratio: f64, bounds: impl Fn(usize) -> (usize, usize)) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    let target = (ratio * n as f64).round() as usize;
    let exact: Vec<f64> = sizes.iter().map(|&c| ratio * c as f64).collect();
    let mut alloc: Vec<usize> = sizes.iter().zip(&exact).map(|(&c, e)| {
        let (lo, hi) = bounds(c);
        (e.floor() as usize).clamp(lo, hi)
    }).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - alloc[b] as f64).total_cmp(&(exact[a] - alloc[a] as f64)).then(a.cmp(&b)));
    loop {
        let total: usize = alloc.iter().sum();
        let step = if total < target {
            order.iter().find(|&&i| alloc[i] < bounds(sizes[i]).1).map(|&i| (i, true))
        } else if total > target {
            order.iter().rev().find(|&&i| alloc[i] > bounds(sizes[i]).0).map(|&i| (i, false))
        } else {
            None
        };
        match step {
            Some((i, true)) => alloc[i] += 1,
            Some((i, false)) => alloc[i] -= 1,
            None => return alloc,
        }
        order.sort_by(|&a, &b| (exact[b] - alloc[b] as f64).total_cmp(&(exact[a] - alloc[a] as f64)).then(a.cmp(&b)));
    }
}

/// Partitions windows into `(train, test)`.
///
/// `Random` stratifies by label: each class contributes about `ratio` of its
/// windows to training and at least one window to each side. `ByBlock`
/// keeps every block on one side, stratifying blocks by their level.
pub fn split(windows: Vec<Window>, ratio: f64, seed: u64, mode: SplitMode) -> Result<(Vec<Window>, Vec<Window>)> {
    if windows.len() < 2 {
        return Err(Error::Validation(format!("need at least 2 windows to split, got {}", windows.len())));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_mask = vec![false; windows.len()];
    match mode {
        SplitMode::Random => {
            let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (i, w) in windows.iter().enumerate() {
                by_class.entry(w.label).or_default().push(i);
            }
            if let Some((c, m)) = by_class.iter().find(|(_, m)| m.len() < 2) {
                return Err(Error::Validation(format!(
                    "class {c} has {} window(s); stratified splitting needs at least 2 so it appears on both sides",
                    m.len()
                )));
            }
            let sizes: Vec<usize> = by_class.values().map(Vec::len).collect();
            let alloc = largest_remainder(&sizes, ratio, |c| (1, c - 1));
            for (members, &a) in by_class.values_mut().zip(&alloc) {
                members.shuffle(&mut rng);
                for &i in &members[..a] {
                    train_mask[i] = true;
                }
            }
        }
        SplitMode::ByBlock => {
            let mut blocks: BTreeMap<usize, BTreeSet<(usize, usize)>> = BTreeMap::new();
            for w in &windows {
                blocks.entry(w.label).or_default().insert((w.session, w.block_id));
            }
            let mut train_blocks = HashSet::new();
            for (level, set) in &blocks {
                let mut ids: Vec<(usize, usize)> = set.iter().copied().collect();
                ids.shuffle(&mut rng);
                let n = ids.len();
                let take = if n == 1 {
                    warn!("level {level} occurs in a single block; it goes entirely to training");
                    1
                } else {
                    ((ratio * n as f64).round() as usize).clamp(1, n - 1)
                };
                train_blocks.extend(ids[..take].iter().copied());
            }
            for (m, w) in train_mask.iter_mut().zip(&windows) {
                *m = train_blocks.contains(&(w.session, w.block_id));
            }
            if train_mask.iter().all(|&m| m) {
                return Err(Error::Validation("block split left the test side empty; need at least two blocks of some level".into()));
            }
        }
    }
    let (mut train, mut test): (Vec<(bool, Window)>, Vec<(bool, Window)>) = train_mask.into_iter().zip(windows).partition(|(m, _)| *m);
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok((train.into_iter().map(|(_, w)| w).collect(), test.into_iter().map(|(_, w)| w).collect()))
}

/// Stacks windows into a `(batch, features, length)` training batch.
pub fn windows_to_batch(windows: &[Window]) -> Result<SampleBatch> {
    let first = windows.first().ok_or_else(|| Error::Validation("no windows to batch".into()))?;
    let (f, l) = first.data.dim();
    let mut data = Array3::zeros((windows.len(), f, l));
    for (mut slot, w) in data.axis_iter_mut(Axis(0)).zip(windows) {
        dim_check("window features", f, w.data.nrows())?;
        dim_check("window length", l, w.data.ncols())?;
        slot.assign(&w.data);
    }
    SampleBatch::new(data, windows.iter().map(|w| w.label).collect())
}

/// The distinct dataset rows covered by `windows`, `(n_rows, features)`,
/// with their labels, ordered by (session, row).
pub fn distinct_rows(windows: &[Window]) -> (Array2<f64>, Vec<usize>) {
    let mut rows: BTreeMap<(usize, usize), (usize, usize)> = BTreeMap::new();
    for (wi, w) in windows.iter().enumerate() {
        for t in 0..w.len() {
            rows.entry((w.session, w.start_row + t)).or_insert((wi, t));
        }
    }
    let f = windows.first().map_or(0, |w| w.data.nrows());
    let mut out = Array2::zeros((rows.len(), f));
    let mut labels = Vec::with_capacity(rows.len());
    for (mut dst, &(wi, t)) in out.rows_mut().into_iter().zip(rows.values()) {
        dst.assign(&windows[wi].data.column(t));
        labels.push(windows[wi].label);
    }
    (out, labels)
}
