//! Batched evaluation of perturbed losses for the finite-difference oracle.
//!
//! A lane is one (stencil tap, sample) pair. Every lane shares the base
//! weights; the single perturbed entry enters either through the conv
//! stages, through a shifted input projection, or as an explicit rank-one
//! correction to the recurrence. Lane buffers are time-major:
//! `[t][tap * batch + b][h]`.

use super::*;

pub(super) struct LaneModel<'a> {
    m: &'a ScalarModel,
    base: &'a Stages,
    /// transposed RNN weights, `(in, HIDDEN)` row-major
    wx_t: [Vec<f64>; 2],
    wh_t: [Vec<f64>; 2],
    bias: [Vec<f64>; 2],
    /// RNN input `[b][t][f]` at the base point
    seq0: Vec<f64>,
}

fn transposed(p: &[f64], range: &Range<usize>, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols * HIDDEN];
    for i in 0..HIDDEN {
        for j in 0..cols {
            out[j * HIDDEN + i] = p[range.start + i * cols + j];
        }
    }
    out
}

impl<'a> LaneModel<'a> {
    pub(super) fn new(m: &'a ScalarModel, p: &[f64], base: &'a Stages) -> Self {
        let l = &m.layout;
        Self {
            m,
            base,
            wx_t: [transposed(p, &l.rnn[0].0, CONV2_OUT), transposed(p, &l.rnn[1].0, HIDDEN)],
            wh_t: [transposed(p, &l.rnn[0].1, HIDDEN), transposed(p, &l.rnn[1].1, HIDDEN)],
            bias: [p[l.rnn[0].2.clone()].to_vec(), p[l.rnn[1].2.clone()].to_vec()],
            seq0: m.rnn_input(&base.a2),
        }
    }

    /// Losses with parameter `i` moved by each offset. `p` is restored on
    /// return. The flag reports a ReLU gate leaving the frozen pattern.
    pub(super) fn tap_losses(&self, p: &mut [f64], i: usize, offsets: &[f64], masks: (&[bool], &[bool])) -> (Vec<f64>, bool) {
        let m = self.m;
        let l = &m.layout;
        let taps = offsets.len();
        let nv = taps * m.batch;
        let orig = p[i];
        match l.stage_of(i) {
            0 | 1 => {
                let t2 = m.t2();
                let mut seq = vec![0.0; t2 * nv * CONV2_OUT];
                let mut flipped = false;
                for (k, off) in offsets.iter().enumerate() {
                    p[i] = orig + off;
                    let (conv, f) = m.conv_stages(p, Some(masks));
                    flipped |= f;
                    for b in 0..m.batch {
                        for t in 0..t2 {
                            for c in 0..CONV2_OUT {
                                seq[(t * nv + k * m.batch + b) * CONV2_OUT + c] = conv.a2[(b * CONV2_OUT + c) * t2 + t];
                            }
                        }
                    }
                }
                p[i] = orig;
                let proj0 = self.project(0, &seq, CONV2_OUT, nv, 0, None);
                let h0 = self.recur(0, proj0, nv, 0, None);
                let proj1 = self.project(1, &h0, HIDDEN, nv, 0, None);
                let h1 = self.recur(1, proj1, nv, 0, None);
                (self.losses(p, &h1, taps), flipped)
            }
            stage @ (2 | 3) => {
                let layer = stage - 2;
                let (wx, wh, bias) = &l.rnn[layer];
                let input = if layer == 0 { CONV2_OUT } else { HIDDEN };
                let mut proj = self.broadcast(&self.base.proj[layer], taps);
                let mut from = 0;
                let mut corr = None;
                if wx.contains(&i) {
                    let (row, col) = ((i - wx.start) / input, (i - wx.start) % input);
                    let x = if layer == 0 { &self.seq0 } else { &self.base.h[0] };
                    self.for_each_row(taps, |t, b, k, v| proj[v * HIDDEN + row] += offsets[k] * x[(b * m.t2() + t) * input + col]);
                } else if bias.contains(&i) {
                    let row = i - bias.start;
                    self.for_each_row(taps, |_, _, k, v| proj[v * HIDDEN + row] += offsets[k]);
                } else {
                    let (row, col) = ((i - wh.start) / HIDDEN, (i - wh.start) % HIDDEN);
                    // the initial state is zero, so W_h does not act on step 0
                    from = 1;
                    corr = Some((row, col, offsets));
                }
                let h = self.recur(layer, proj, nv, from, corr);
                let top = if layer == 0 {
                    let proj1 = self.project(1, &h, HIDDEN, nv, from, Some(&self.base.proj[1]));
                    self.recur(1, proj1, nv, from, None)
                } else {
                    h
                };
                (self.losses(p, &top, taps), false)
            }
            _ => {
                let mut out = Vec::with_capacity(taps);
                for off in offsets {
                    p[i] = orig + off;
                    out.push(m.head_loss(p, &self.base.h[1]));
                }
                p[i] = orig;
                (out, false)
            }
        }
    }

    /// Calls `f(t, b, tap, row)` for every row of a lane buffer.
    fn for_each_row(&self, taps: usize, mut f: impl FnMut(usize, usize, usize, usize)) {
        let nv = taps * self.m.batch;
        for t in 0..self.m.t2() {
            for k in 0..taps {
                for b in 0..self.m.batch {
                    f(t, b, k, t * nv + k * self.m.batch + b);
                }
            }
        }
    }

    /// Copies a `[b][t][h]` base buffer into every tap of a lane buffer.
    fn broadcast(&self, src: &[f64], taps: usize) -> Vec<f64> {
        let (t2, bn) = (self.m.t2(), self.m.batch);
        let mut out = vec![0.0; t2 * taps * bn * HIDDEN];
        self.for_each_row(taps, |t, b, _, v| {
            out[v * HIDDEN..(v + 1) * HIDDEN].copy_from_slice(&src[(b * t2 + t) * HIDDEN..(b * t2 + t + 1) * HIDDEN]);
        });
        out
    }

    /// `W_x x_t + b` for lane rows at steps `>= from`; earlier steps come
    /// from `base` (a `[b][t][h]` buffer) when given.
    fn project(&self, layer: usize, x: &[f64], input: usize, nv: usize, from: usize, base: Option<&[f64]>) -> Vec<f64> {
        let taps = nv / self.m.batch;
        let mut out = match base {
            Some(b) => self.broadcast(b, taps),
            None => vec![0.0; self.m.t2() * nv * HIDDEN],
        };
        let start = from * nv;
        let rows = self.m.t2() * nv - start;
        let tail = &mut out[start * HIDDEN..];
        for r in 0..rows {
            tail[r * HIDDEN..(r + 1) * HIDDEN].copy_from_slice(&self.bias[layer]);
        }
        gemm_acc(&x[start * input..], rows, input, &self.wx_t[layer], HIDDEN, tail);
        out
    }

    /// Runs the recurrence over a lane buffer of projections, reusing the
    /// base hidden states for steps before `from`. `corr = (row, col, d)`
    /// adds `d[tap]` to `W_h[row][col]`.
    fn recur(&self, layer: usize, proj: Vec<f64>, nv: usize, from: usize, corr: Option<(usize, usize, &[f64])>) -> Vec<f64> {
        let taps = nv / self.m.batch;
        let step = nv * HIDDEN;
        let mut h = proj;
        if from > 0 {
            let base = self.broadcast(&self.base.h[layer], taps);
            h[..from * step].copy_from_slice(&base[..from * step]);
        }
        for t in from..self.m.t2() {
            let (done, rest) = h.split_at_mut(t * step);
            let cur = &mut rest[..step];
            if t > 0 {
                let prev = &done[(t - 1) * step..];
                gemm_acc(prev, nv, HIDDEN, &self.wh_t[layer], HIDDEN, cur);
                if let Some((row, col, d)) = corr {
                    for v in 0..nv {
                        cur[v * HIDDEN + row] += d[v / self.m.batch] * prev[v * HIDDEN + col];
                    }
                }
            }
            tanh_inplace(cur);
        }
        h
    }

    fn losses(&self, p: &[f64], h1: &[f64], taps: usize) -> Vec<f64> {
        let m = self.m;
        let nv = taps * m.batch;
        let last = (m.t2() - 1) * nv;
        (0..taps)
            .map(|k| {
                let mut loss = 0.0;
                for b in 0..m.batch {
                    let v = last + k * m.batch + b;
                    loss += m.sample_loss(p, &h1[v * HIDDEN..(v + 1) * HIDDEN], m.labels[b]);
                }
                loss / m.batch as f64
            })
            .collect()
    }
}

#[inline(always)]
fn madd(a: f64, b: f64, c: f64) -> f64 {
    a * b + c
}

fn has_fma() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

/// `y[r][..n] += sum_j x[r][j] * wt[j][..n]` over `rows` rows.
fn gemm_acc(x: &[f64], rows: usize, k: usize, wt: &[f64], n: usize, y: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if has_fma() {
        // SAFETY: the required features were detected at runtime.
        unsafe { gemm_acc_fma(x, rows, k, wt, n, y) };
        return;
    }
    gemm_body(x, rows, k, wt, n, y)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
fn gemm_acc_fma(x: &[f64], rows: usize, k: usize, wt: &[f64], n: usize, y: &mut [f64]) {
    use std::arch::x86_64::*;
    assert!(n % 8 == 0 && x.len() >= rows * k && wt.len() >= k * n && y.len() >= rows * n);
    let blocks = rows / 4 * 4;
    for r in (0..blocks).step_by(4) {
        for ib in (0..n).step_by(8) {
            // SAFETY: every pointer offset below is inside the slices checked by the assert.
            unsafe {
                let mut acc = [_mm256_setzero_pd(); 8];
                for j in 0..k {
                    let w0 = _mm256_loadu_pd(wt.as_ptr().add(j * n + ib));
                    let w1 = _mm256_loadu_pd(wt.as_ptr().add(j * n + ib + 4));
                    for q in 0..4 {
                        let xv = _mm256_set1_pd(*x.get_unchecked((r + q) * k + j));
                        acc[2 * q] = _mm256_fmadd_pd(xv, w0, acc[2 * q]);
                        acc[2 * q + 1] = _mm256_fmadd_pd(xv, w1, acc[2 * q + 1]);
                    }
                }
                for q in 0..4 {
                    let out = y.as_mut_ptr().add((r + q) * n + ib);
                    _mm256_storeu_pd(out, _mm256_add_pd(_mm256_loadu_pd(out), acc[2 * q]));
                    _mm256_storeu_pd(out.add(4), _mm256_add_pd(_mm256_loadu_pd(out.add(4)), acc[2 * q + 1]));
                }
            }
        }
    }
    gemm_tail(x, blocks, rows, k, wt, n, y);
}

fn gemm_tail(x: &[f64], from: usize, rows: usize, k: usize, wt: &[f64], n: usize, y: &mut [f64]) {
    for r in from..rows {
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..k {
                acc += x[r * k + j] * wt[j * n + i];
            }
            y[r * n + i] += acc;
        }
    }
}

#[inline(always)]
fn gemm_body(x: &[f64], rows: usize, k: usize, wt: &[f64], n: usize, y: &mut [f64]) {
    assert!(n % 8 == 0 && x.len() >= rows * k && wt.len() >= k * n && y.len() >= rows * n);
    let mut r = 0;
    while r + 4 <= rows {
        let xs: [&[f64]; 4] = std::array::from_fn(|q| &x[(r + q) * k..(r + q + 1) * k]);
        for ib in (0..n).step_by(8) {
            let mut acc = [[0.0f64; 8]; 4];
            for j in 0..k {
                let w: &[f64; 8] = wt[j * n + ib..j * n + ib + 8].try_into().unwrap();
                for q in 0..4 {
                    let xv = xs[q][j];
                    for c in 0..8 {
                        acc[q][c] += xv * w[c];
                    }
                }
            }
            for (q, a) in acc.iter().enumerate() {
                for (c, v) in a.iter().enumerate() {
                    y[(r + q) * n + ib + c] += v;
                }
            }
        }
        r += 4;
    }
    gemm_tail(x, r, rows, k, wt, n, y);
}

/// In-place `tanh` through a branch-free `exp`; absolute error
/// stays at the 1e-16 level.
pub fn tanh_inplace(v: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if has_fma() {
        // SAFETY: the required features were detected at runtime.
        unsafe { tanh_fma(v) };
        return;
    }
    tanh_body(v)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
fn tanh_fma(v: &mut [f64]) {
    use std::arch::x86_64::*;
    let split = v.len() / 4 * 4;
    let (head, tail) = v.split_at_mut(split);
    // SAFETY: loads and stores stay within `head`, whose length is a multiple of 4.
    unsafe {
        let sign = _mm256_set1_pd(-0.0);
        let one = _mm256_set1_pd(1.0);
        let shift = _mm256_set1_pd(SHIFT);
        for chunk in head.chunks_exact_mut(4) {
            let x = _mm256_loadu_pd(chunk.as_ptr());
            let abs = _mm256_andnot_pd(sign, x);
            let a = _mm256_max_pd(_mm256_mul_pd(_mm256_set1_pd(-2.0), abs), _mm256_set1_pd(-700.0));
            let t = _mm256_fmadd_pd(a, _mm256_set1_pd(std::f64::consts::LOG2_E), shift);
            let n = _mm256_sub_pd(t, shift);
            let r = _mm256_fnmadd_pd(n, _mm256_set1_pd(LN2_LO), _mm256_fnmadd_pd(n, _mm256_set1_pd(LN2_HI), a));
            let mut poly = _mm256_set1_pd(INV_FACT[13]);
            for c in INV_FACT[..13].iter().rev() {
                poly = _mm256_fmadd_pd(poly, r, _mm256_set1_pd(*c));
            }
            let bits = _mm256_sub_epi64(_mm256_castpd_si256(t), _mm256_castpd_si256(shift));
            let scale = _mm256_castsi256_pd(_mm256_slli_epi64(_mm256_add_epi64(bits, _mm256_set1_epi64x(1023)), 52));
            let e = _mm256_mul_pd(poly, scale);
            let y = _mm256_div_pd(_mm256_sub_pd(one, e), _mm256_add_pd(one, e));
            _mm256_storeu_pd(chunk.as_mut_ptr(), _mm256_or_pd(y, _mm256_and_pd(sign, x)));
        }
    }
    tanh_body(tail)
}

// 1.5 * 2^52: adding it rounds to an integer held in the low mantissa bits
const SHIFT: f64 = 6755399441055744.0;
const LN2_HI: f64 = 0.693_147_180_369_123_816_49;
const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;

const INV_FACT: [f64; 14] = {
    let mut a = [1.0; 14];
    let mut k = 1;
    while k < 14 {
        a[k] = a[k - 1] / k as f64;
        k += 1;
    }
    a
};

#[inline(always)]
fn tanh_body(v: &mut [f64]) {
    for x in v.iter_mut() {
        let a = (-2.0 * x.abs()).max(-700.0);
        let t = madd(a, std::f64::consts::LOG2_E, SHIFT);
        let n = t - SHIFT;
        let r = madd(-n, LN2_LO, madd(-n, LN2_HI, a));
        let mut poly = INV_FACT[13];
        for c in INV_FACT[..13].iter().rev() {
            poly = madd(poly, r, *c);
        }
        let scale = f64::from_bits(t.to_bits().wrapping_sub(SHIFT.to_bits()).wrapping_add(1023) << 52);
        let e = poly * scale;
        *x = ((1.0 - e) / (1.0 + e)).copysign(*x);
    }
}
