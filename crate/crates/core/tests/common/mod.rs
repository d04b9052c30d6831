//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the crate's numerical paths except to read inputs
//! and parameters; every quantity is recomputed with plain scalar loops.

#![allow(dead_code)]

mod lanes;

#[allow(unused_imports)]
pub use lanes::tanh_inplace;

use std::ops::Range;

use cogload::nncore::{ModelParams, SampleBatch, CONV1_OUT, CONV2_OUT, HIDDEN, KERNEL, NUM_CLASSES};

/// Offsets of every tensor inside the flat parameter vector, in
/// `ModelParams::tensors` order.
#[derive(Debug, Clone)]
struct Layout {
    conv1_w: Range<usize>,
    conv1_b: Range<usize>,
    conv2_w: Range<usize>,
    conv2_b: Range<usize>,
    rnn: [(Range<usize>, Range<usize>, Range<usize>); 2],
    dense_w: Range<usize>,
    dense_b: Range<usize>,
}

impl Layout {
    fn new(input_channels: usize) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let conv1_w = take(CONV1_OUT * input_channels * KERNEL);
        let conv1_b = take(CONV1_OUT);
        let conv2_w = take(CONV2_OUT * CONV1_OUT * KERNEL);
        let conv2_b = take(CONV2_OUT);
        let l0 = (take(HIDDEN * CONV2_OUT), take(HIDDEN * HIDDEN), take(HIDDEN));
        let l1 = (take(HIDDEN * HIDDEN), take(HIDDEN * HIDDEN), take(HIDDEN));
        let dense_w = take(NUM_CLASSES * HIDDEN);
        let dense_b = take(NUM_CLASSES);
        Self {
            conv1_w,
            conv1_b,
            conv2_w,
            conv2_b,
            rnn: [l0, l1],
            dense_w,
            dense_b,
        }
    }

    /// First forward stage that reads parameter `i`.
    fn stage_of(&self, i: usize) -> usize {
        if i < self.conv1_b.end {
            0
        } else if i < self.conv2_b.end {
            1
        } else if i < self.rnn[0].2.end {
            2
        } else if i < self.rnn[1].2.end {
            3
        } else {
            4
        }
    }
}

/// Outputs of each forward stage for one evaluation.
#[derive(Debug, Clone)]
struct Stages {
    /// conv pre-activations and activations, `[b][o][t]`
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    /// per RNN layer: input projections `W_x x_t + b` and hidden states, `[b][t][h]`
    proj: [Vec<f64>; 2],
    h: [Vec<f64>; 2],
    loss: f64,
}

struct ConvStages {
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
}

/// Scalar-loop forward pass of the Conv-Conv-RNN-Dense model with mean
/// softmax cross-entropy, plus central finite differences over every
/// parameter.
pub struct ScalarModel {
    channels: usize,
    time: usize,
    batch: usize,
    x: Vec<f64>,
    labels: Vec<usize>,
    layout: Layout,
}

pub struct FdResult {
    pub numeric: Vec<f64>,
    /// Parameters whose perturbations moved some ReLU input across zero.
    pub kink_params: usize,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let mut i = 0;
    while i + 8 <= n {
        let x: &[f64; 8] = a[i..i + 8].try_into().unwrap();
        let y: &[f64; 8] = b[i..i + 8].try_into().unwrap();
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
        i += 8;
    }
    let mut tail = 0.0;
    while i < n {
        tail += a[i] * b[i];
        i += 1;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

impl ScalarModel {
    pub fn new(batch: &SampleBatch) -> Self {
        let (b, c, t) = batch.data.dim();
        Self {
            channels: c,
            time: t,
            batch: b,
            x: batch.data.iter().copied().collect(),
            labels: batch.labels.clone(),
            layout: Layout::new(c),
        }
    }

    pub fn flatten(params: &ModelParams) -> Vec<f64> {
        params.tensors().iter().flat_map(|(_, t)| t.iter().copied()).collect()
    }

    fn t1(&self) -> usize {
        self.time - KERNEL + 1
    }

    fn t2(&self) -> usize {
        self.t1() - KERNEL + 1
    }

    pub fn loss(&self, p: &[f64]) -> f64 {
        self.run(p, None).0.loss
    }

    /// Full forward pass. With `masks`, ReLU gates are frozen to the given
    /// pattern; the returned flag reports whether any gate would have flipped.
    fn run(&self, p: &[f64], masks: Option<(&[bool], &[bool])>) -> (Stages, bool) {
        let (conv, flipped) = self.conv_stages(p, masks);
        let seq = self.rnn_input(&conv.a2);
        let proj0 = self.project(p, 0, &seq, CONV2_OUT);
        let h0 = self.recur(p, 0, &proj0);
        let proj1 = self.project(p, 1, &h0, HIDDEN);
        let h1 = self.recur(p, 1, &proj1);
        let loss = self.head_loss(p, &h1);
        (
            Stages {
                z1: conv.z1,
                a1: conv.a1,
                z2: conv.z2,
                a2: conv.a2,
                proj: [proj0, proj1],
                h: [h0, h1],
                loss,
            },
            flipped,
        )
    }

    fn conv_stages(&self, p: &[f64], masks: Option<(&[bool], &[bool])>) -> (ConvStages, bool) {
        let (bn, cn, tn) = (self.batch, self.channels, self.time);
        let (t1, t2) = (self.t1(), self.t2());
        let l = &self.layout;
        let mut flipped = false;

        let mut z1 = vec![0.0; bn * CONV1_OUT * t1];
        let mut a1 = vec![0.0; z1.len()];
        for b in 0..bn {
            for o in 0..CONV1_OUT {
                for t in 0..t1 {
                    let mut acc = p[l.conv1_b.start + o];
                    for c in 0..cn {
                        for j in 0..KERNEL {
                            acc += self.x[(b * cn + c) * tn + t + j] * p[l.conv1_w.start + (o * cn + c) * KERNEL + j];
                        }
                    }
                    let idx = (b * CONV1_OUT + o) * t1 + t;
                    z1[idx] = acc;
                    a1[idx] = gate(acc, masks.map(|m| m.0[idx]), &mut flipped);
                }
            }
        }

        let mut z2 = vec![0.0; bn * CONV2_OUT * t2];
        let mut a2 = vec![0.0; z2.len()];
        for b in 0..bn {
            for o in 0..CONV2_OUT {
                for t in 0..t2 {
                    let mut acc = p[l.conv2_b.start + o];
                    for c in 0..CONV1_OUT {
                        for j in 0..KERNEL {
                            acc += a1[(b * CONV1_OUT + c) * t1 + t + j] * p[l.conv2_w.start + (o * CONV1_OUT + c) * KERNEL + j];
                        }
                    }
                    let idx = (b * CONV2_OUT + o) * t2 + t;
                    z2[idx] = acc;
                    a2[idx] = gate(acc, masks.map(|m| m.1[idx]), &mut flipped);
                }
            }
        }
        (ConvStages { z1, a1, z2, a2 }, flipped)
    }

    /// Conv output `[b][f][t]` rearranged to the RNN input layout `[b][t][f]`.
    fn rnn_input(&self, a2: &[f64]) -> Vec<f64> {
        let t2 = self.t2();
        let mut seq = vec![0.0; self.batch * t2 * CONV2_OUT];
        for b in 0..self.batch {
            for t in 0..t2 {
                for f in 0..CONV2_OUT {
                    seq[(b * t2 + t) * CONV2_OUT + f] = a2[(b * CONV2_OUT + f) * t2 + t];
                }
            }
        }
        seq
    }

    /// `W_x x_t + b` for every sample and step.
    fn project(&self, p: &[f64], layer: usize, seq: &[f64], input: usize) -> Vec<f64> {
        let (wx, _, bias) = &self.layout.rnn[layer];
        let rows = self.batch * self.t2();
        let mut out = vec![0.0; rows * HIDDEN];
        for r in 0..rows {
            let x = &seq[r * input..(r + 1) * input];
            for i in 0..HIDDEN {
                out[r * HIDDEN + i] = p[bias.start + i] + dot(&p[wx.start + i * input..wx.start + (i + 1) * input], x);
            }
        }
        out
    }

    /// `h_t = tanh(proj_t + W_h h_{t-1})` from a zero initial state.
    fn recur(&self, p: &[f64], layer: usize, proj: &[f64]) -> Vec<f64> {
        let (_, wh, _) = &self.layout.rnn[layer];
        let t2 = self.t2();
        let mut out = vec![0.0; self.batch * t2 * HIDDEN];
        let zero = [0.0; HIDDEN];
        for b in 0..self.batch {
            for t in 0..t2 {
                let at = (b * t2 + t) * HIDDEN;
                let (done, rest) = out.split_at_mut(at);
                let prev: &[f64] = if t == 0 { &zero } else { &done[at - HIDDEN..] };
                for i in 0..HIDDEN {
                    let pre = proj[at + i] + dot(&p[wh.start + i * HIDDEN..wh.start + (i + 1) * HIDDEN], prev);
                    rest[i] = pre.tanh();
                }
            }
        }
        out
    }

    fn head_loss(&self, p: &[f64], h1: &[f64]) -> f64 {
        let t2 = self.t2();
        let mut loss = 0.0;
        for b in 0..self.batch {
            loss += self.sample_loss(p, &h1[(b * t2 + t2 - 1) * HIDDEN..(b * t2 + t2) * HIDDEN], self.labels[b]);
        }
        loss / self.batch as f64
    }

    /// Cross-entropy of one sample from its last top-layer hidden state.
    fn sample_loss(&self, p: &[f64], last: &[f64], label: usize) -> f64 {
        let l = &self.layout;
        let mut logits = [0.0; NUM_CLASSES];
        for (k, logit) in logits.iter_mut().enumerate() {
            let mut acc = p[l.dense_b.start + k];
            for (j, hv) in last.iter().enumerate() {
                acc += p[l.dense_w.start + k * HIDDEN + j] * hv;
            }
            *logit = acc;
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        lse - logits[label]
    }

    /// Central-difference derivative of the loss for every parameter.
    ///
    /// `stencil` 2 is the quotient `(L(p + h) - L(p - h)) / 2h`; stencil 4 is
    /// the fourth-order `(-L(p + 2h) + 8 L(p + h) - 8 L(p - h) + L(p - 2h)) / 12h`.
    /// ReLU gates are held at the base point's pattern, so the quotient is
    /// taken on the smooth piece containing `p`; whenever no gate flips
    /// inside the stencil this equals the plain quotient exactly.
    pub fn central_differences(&self, params: &[f64], h: f64, stencil: usize) -> FdResult {
        let (base, _) = self.run(params, None);
        let m1: Vec<bool> = base.z1.iter().map(|&z| z > 0.0).collect();
        let m2: Vec<bool> = base.z2.iter().map(|&z| z > 0.0).collect();
        let masks = (&m1[..], &m2[..]);
        let taps: &[(f64, f64)] = match stencil {
            2 => &[(1.0, 0.5), (-1.0, -0.5)],
            4 => &[(2.0, -1.0 / 12.0), (1.0, 8.0 / 12.0), (-1.0, -8.0 / 12.0), (-2.0, 1.0 / 12.0)],
            _ => panic!("unsupported stencil {stencil}"),
        };
        let offsets: Vec<f64> = taps.iter().map(|t| t.0 * h).collect();
        let lanes = lanes::LaneModel::new(self, params, &base);
        let mut p = params.to_vec();
        let mut numeric = Vec::with_capacity(p.len());
        let mut kink_params = 0;
        for i in 0..p.len() {
            let (losses, flipped) = lanes.tap_losses(&mut p, i, &offsets, masks);
            if flipped {
                kink_params += 1;
            }
            let acc: f64 = taps.iter().zip(&losses).map(|(t, l)| t.1 * l).sum();
            numeric.push(acc / h);
        }
        FdResult { numeric, kink_params }
    }

    /// Loss at `params` through the multi-lane path with a zero offset; used
    /// to cross-check that path against [`Self::loss`].
    pub fn lane_loss(&self, params: &[f64], i: usize) -> f64 {
        let (base, _) = self.run(params, None);
        let m1: Vec<bool> = base.z1.iter().map(|&z| z > 0.0).collect();
        let m2: Vec<bool> = base.z2.iter().map(|&z| z > 0.0).collect();
        let lanes = lanes::LaneModel::new(self, params, &base);
        lanes.tap_losses(&mut params.to_vec(), i, &[0.0], (&m1, &m2)).0[0]
    }
}

fn gate(z: f64, frozen: Option<bool>, flipped: &mut bool) -> f64 {
    match frozen {
        Some(on) => {
            if on != (z > 0.0) {
                *flipped = true;
            }
            if on {
                z
            } else {
                0.0
            }
        }
        None => z.max(0.0),
    }
}

/// `|a - b| / max(|a|, |b|, floor)`
pub fn rel_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

// ---------------------------------------------------------------------------
// Statistics oracles
// ---------------------------------------------------------------------------

/// One-way ANOVA F computed from explicit group lists; SSW from the total
/// sum of squares minus the between-group part.
pub fn brute_anova(values: &[f64], labels: &[usize]) -> f64 {
    let mut groups: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
    for (&v, &l) in values.iter().zip(labels) {
        groups.entry(l).or_default().push(v);
    }
    let n = values.len() as f64;
    let c = groups.len() as f64;
    let grand = values.iter().sum::<f64>() / n;
    let sst: f64 = values.iter().map(|v| (v - grand).powi(2)).sum();
    let ssb: f64 = groups
        .values()
        .map(|g| {
            let m = g.iter().sum::<f64>() / g.len() as f64;
            g.len() as f64 * (m - grand).powi(2)
        })
        .sum();
    let ssw = sst - ssb;
    (ssb / (c - 1.0)) / (ssw / (n - c))
}

/// One-vs-rest AUC for `positive`: fraction of (positive, negative) pairs
/// ranked correctly, ties counting one half.
pub fn brute_auc(scores: &[f64], labels: &[usize], positive: usize) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != positive {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] == positive {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Pearson correlation as population covariance over the product of
/// population standard deviations, each from its own centered pass.
pub fn brute_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
    let sx = (x.iter().map(|a| (a - mx) * (a - mx)).sum::<f64>() / n).sqrt();
    let sy = (y.iter().map(|b| (b - my) * (b - my)).sum::<f64>() / n).sqrt();
    cov / (sx * sy)
}

/// Bucket means by scanning the whole source for every target.
pub fn brute_bucket_means(src_t: &[f64], src_v: &[f64], targets: &[f64], period: f64) -> Vec<f64> {
    targets
        .iter()
        .map(|&t| {
            let lo = t - period / 2.0;
            let hi = t + period / 2.0;
            let inside: Vec<f64> = src_t
                .iter()
                .zip(src_v)
                .filter(|(&s, _)| s >= lo && s < hi)
                .map(|(_, &v)| v)
                .collect();
            if inside.is_empty() {
                let nearest = src_t
                    .iter()
                    .enumerate()
                    .min_by(|a, b| (a.1 - t).abs().partial_cmp(&(b.1 - t).abs()).unwrap())
                    .unwrap()
                    .0;
                src_v[nearest]
            } else {
                inside.iter().sum::<f64>() / inside.len() as f64
            }
        })
        .collect()
}

/// Cyclic Jacobi eigenvalue iteration for a symmetric matrix (row-major).
/// Returns eigenvalues in descending order.
pub fn jacobi_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i * n + j].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
    eig
}
