//! Building blocks of the network: valid 1D convolution, elementwise
//! activations and a stacked Elman RNN with tanh units.

use ndarray::{s, Array, Array1, Array2, Array3, ArrayView, ArrayView2, ArrayView3, Axis, Dimension};
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1dParams {
    /// `(out_channels, in_channels, kernel)`
    pub weight: Array3<f64>,
    pub bias: Array1<f64>,
}

impl Conv1dParams {
    pub fn zeros(out_channels: usize, in_channels: usize, kernel: usize) -> Self {
        Self {
            weight: Array3::zeros((out_channels, in_channels, kernel)),
            bias: Array1::zeros(out_channels),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dim().0
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dim().1
    }

    pub fn kernel(&self) -> usize {
        self.weight.dim().2
    }

    /// Weight flattened to `(out, in * kernel)`; column `c * kernel + j` holds tap `j` of channel `c`.
    pub(crate) fn weight_matrix(&self) -> ArrayView2<'_, f64> {
        let (o, c, k) = self.weight.dim();
        self.weight
            .view()
            .into_shape_with_order((o, c * k))
            .expect("conv weight is in standard layout")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnLayerParams {
    /// `(hidden, input)`
    pub w_x: Array2<f64>,
    /// `(hidden, hidden)`
    pub w_h: Array2<f64>,
    pub bias: Array1<f64>,
}

impl RnnLayerParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        Self {
            w_x: Array2::zeros((hidden, input)),
            w_h: Array2::zeros((hidden, hidden)),
            bias: Array1::zeros(hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_h.nrows()
    }

    pub fn input(&self) -> usize {
        self.w_x.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnParams {
    pub layers: Vec<RnnLayerParams>,
}

impl RnnParams {
    pub fn zeros(input: usize, hidden: usize, num_layers: usize) -> Self {
        let layers = (0..num_layers)
            .map(|l| RnnLayerParams::zeros(hidden, if l == 0 { input } else { hidden }))
            .collect();
        Self { layers }
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden()
    }

    pub fn input(&self) -> usize {
        self.layers[0].input()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply_scalar(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }
}

/// Logistic function, evaluated without overflow for large `|x|`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn activation<D: Dimension>(kind: Activation, x: ArrayView<'_, f64, D>) -> Result<Array<f64, D>> {
    if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite activation input {bad}")));
    }
    Ok(x.mapv(|v| kind.apply_scalar(v)))
}

/// Unfolds a `(batch, time, channels)` sequence into rows of kernel patches:
/// row `b * t_out + t`, column `c * kernel + j` holds `x[b, t + j, c]`.
pub(crate) fn im2col(x: ArrayView3<'_, f64>, kernel: usize) -> Array2<f64> {
    let (batch, time, channels) = x.dim();
    let t_out = time + 1 - kernel;
    let mut patches = Array2::zeros((batch * t_out, channels * kernel));
    for b in 0..batch {
        for t in 0..t_out {
            let mut row = patches.row_mut(b * t_out + t);
            for j in 0..kernel {
                for c in 0..channels {
                    row[c * kernel + j] = x[[b, t + j, c]];
                }
            }
        }
    }
    patches
}

/// Adjoint of [`im2col`]: scatter-adds patch gradients back onto a
/// `(batch * time, channels)` buffer.
pub(crate) fn col2im(d_patches: ArrayView2<'_, f64>, batch: usize, time: usize, channels: usize, kernel: usize) -> Array2<f64> {
    let t_out = time + 1 - kernel;
    let mut out = Array2::zeros((batch * time, channels));
    for b in 0..batch {
        for t in 0..t_out {
            let row = d_patches.row(b * t_out + t);
            for j in 0..kernel {
                let mut dst = out.row_mut(b * time + t + j);
                for c in 0..channels {
                    dst[c] += row[c * kernel + j];
                }
            }
        }
    }
    out
}

/// Pre-activation output of a valid convolution over a `(batch, time, channels)`
/// sequence, as `(batch * t_out, out_channels)` rows, together with the patches.
pub(crate) fn conv_rows(x: ArrayView3<'_, f64>, params: &Conv1dParams) -> (Array2<f64>, Array2<f64>) {
    let patches = im2col(x, params.kernel());
    let mut z = patches.dot(&params.weight_matrix().t());
    z += &params.bias;
    (patches, z)
}

/// Valid (unpadded) convolution of a `(batch, channels, time)` input:
/// `y[o, i] = sum_c sum_j x[c, i + j] * w[o, c, j] + b[o]`.
pub fn conv1d_forward(input: ArrayView3<'_, f64>, params: &Conv1dParams) -> Result<Array3<f64>> {
    let (batch, channels, time) = input.dim();
    dim_check("input channels", params.in_channels(), channels)?;
    let kernel = params.kernel();
    if time < kernel {
        return Err(Error::Dimension {
            axis: "time (shorter than kernel)",
            expected: kernel,
            found: time,
        });
    }
    let t_out = time + 1 - kernel;
    let btc = input.permuted_axes([0, 2, 1]);
    let (_, z) = conv_rows(btc, params);
    let out = z
        .into_shape_with_order((batch, t_out, params.out_channels()))
        .expect("rows are contiguous");
    Ok(out.permuted_axes([0, 2, 1]).as_standard_layout().into_owned())
}

/// Runs one tanh layer over a time-major `(time, batch, features)` sequence
/// starting from a zero state; returns the hidden states `(time, batch, hidden)`.
pub(crate) fn rnn_layer_forward(xs: ArrayView3<'_, f64>, layer: &RnnLayerParams) -> Array3<f64> {
    let (time, batch, features) = xs.dim();
    let hidden = layer.hidden();
    let flat = xs
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((time * batch, features))
        .expect("standard layout");
    let mut proj = flat.dot(&layer.w_x.t());
    proj += &layer.bias;
    let mut states = proj
        .into_shape_with_order((time, batch, hidden))
        .expect("standard layout");
    for t in 0..time {
        if t > 0 {
            let (prev, mut cur) = states.view_mut().split_at(Axis(0), t);
            let h_prev = prev.index_axis(Axis(0), t - 1);
            let mut pre = cur.index_axis_mut(Axis(0), 0);
            ndarray::linalg::general_mat_mul(1.0, &h_prev, &layer.w_h.t(), 1.0, &mut pre);
        }
        states
            .index_axis_mut(Axis(0), t)
            .mapv_inplace(f64::tanh);
    }
    states
}

/// Backpropagation through time for one layer.
///
/// `d_states` is the loss gradient with respect to every emitted hidden
/// state. Accumulates parameter gradients into `grad` and returns the
/// gradient with respect to the layer input, time-major.
pub(crate) fn rnn_layer_backward(
    xs: ArrayView3<'_, f64>,
    states: ArrayView3<'_, f64>,
    d_states: ArrayView3<'_, f64>,
    layer: &RnnLayerParams,
    grad: &mut RnnLayerParams,
) -> Array3<f64> {
    let (time, batch, features) = xs.dim();
    let hidden = layer.hidden();
    let mut d_pre = Array3::<f64>::zeros((time, batch, hidden));
    let mut d_next = Array2::<f64>::zeros((batch, hidden));
    for t in (0..time).rev() {
        let mut dp = d_pre.index_axis_mut(Axis(0), t);
        dp.assign(&d_states.index_axis(Axis(0), t));
        dp += &d_next;
        dp.zip_mut_with(&states.index_axis(Axis(0), t), |g, &h| *g *= 1.0 - h * h);
        if t > 0 {
            d_next = dp.dot(&layer.w_h);
        }
    }
    let d_pre_flat = d_pre
        .into_shape_with_order((time * batch, hidden))
        .expect("standard layout");
    let xs_flat = xs
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((time * batch, features))
        .expect("standard layout");
    ndarray::linalg::general_mat_mul(1.0, &d_pre_flat.t(), &xs_flat, 1.0, &mut grad.w_x);
    if time > 1 {
        let later = d_pre_flat.slice(s![batch.., ..]);
        let states_flat = states
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((time * batch, hidden))
            .expect("standard layout");
        let earlier = states_flat.slice(s![..(time - 1) * batch, ..]);
        ndarray::linalg::general_mat_mul(1.0, &later.t(), &earlier, 1.0, &mut grad.w_h);
    }
    grad.bias += &d_pre_flat.sum_axis(Axis(0));
    d_pre_flat
        .dot(&layer.w_x)
        .into_shape_with_order((time, batch, features))
        .expect("standard layout")
}

#[derive(Debug, Clone)]
pub struct RnnOutput {
    /// Top-layer hidden states, `(batch, time, hidden)`.
    pub outputs: Array3<f64>,
    /// Final hidden state of every layer, `(layers, batch, hidden)`.
    pub final_hidden: Array3<f64>,
}

/// Stacked Elman recurrence `h_t = tanh(W_x x_t + W_h h_{t-1} + b)` over a
/// batch-first `(batch, time, features)` sequence with zero initial state.
pub fn rnn_forward(seq: ArrayView3<'_, f64>, params: &RnnParams) -> Result<RnnOutput> {
    let (batch, time, features) = seq.dim();
    dim_check("rnn input features", params.input(), features)?;
    if time == 0 {
        return Err(Error::Dimension {
            axis: "rnn time steps",
            expected: 1,
            found: 0,
        });
    }
    let hidden = params.hidden();
    let mut xs = seq.permuted_axes([1, 0, 2]).as_standard_layout().into_owned();
    let mut final_hidden = Array3::zeros((params.layers.len(), batch, hidden));
    for (l, layer) in params.layers.iter().enumerate() {
        let states = rnn_layer_forward(xs.view(), layer);
        final_hidden
            .index_axis_mut(Axis(0), l)
            .assign(&states.index_axis(Axis(0), time - 1));
        xs = states;
    }
    let outputs = xs.permuted_axes([1, 0, 2]).as_standard_layout().into_owned();
    Ok(RnnOutput {
        outputs,
        final_hidden,
    })
}
