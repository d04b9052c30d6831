use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{col2im, conv_rows, rnn_layer_backward, rnn_layer_forward, sigmoid, Conv1dParams, RnnParams};
use crate::error::{dim_check, Error, Result};

pub const KERNEL: usize = 3;
pub const CONV1_OUT: usize = 16;
pub const CONV2_OUT: usize = 32;
pub const HIDDEN: usize = 64;
pub const RNN_LAYERS: usize = 2;
pub const NUM_CLASSES: usize = 3;
/// Two kernel-3 valid convolutions need at least this many time steps.
pub const MIN_TIME: usize = 2 * (KERNEL - 1) + 1;

/// A batch of labelled windows, `(batch, channels, time)`.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub data: Array3<f64>,
    pub labels: Vec<usize>,
}

impl SampleBatch {
    pub fn new(data: Array3<f64>, labels: Vec<usize>) -> Result<Self> {
        let (batch, _, time) = data.dim();
        if batch == 0 {
            return Err(Error::Validation("sample batch is empty".into()));
        }
        dim_check("labels", batch, labels.len())?;
        check_time(time)?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("sample batch contains non-finite values".into()));
        }
        check_labels(&labels, NUM_CLASSES)?;
        Ok(Self { data, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.data.dim().1
    }

    pub fn time(&self) -> usize {
        self.data.dim().2
    }

    /// Gathers the given samples into a new batch, preserving order.
    pub fn select(&self, indices: &[usize]) -> SampleBatch {
        SampleBatch {
            data: self.data.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

fn check_time(time: usize) -> Result<()> {
    if time < MIN_TIME {
        Err(Error::Dimension {
            axis: "time (two kernel-3 convolutions need at least 5 steps)",
            expected: MIN_TIME,
            found: time,
        })
    } else {
        Ok(())
    }
}

pub(crate) fn check_labels(labels: &[usize], num_classes: usize) -> Result<()> {
    match labels.iter().find(|&&l| l >= num_classes) {
        Some(l) => Err(Error::Validation(format!("label {l} outside 0..{num_classes}"))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    /// `(num_classes, hidden)`
    pub weight: Array2<f64>,
    pub bias: ndarray::Array1<f64>,
}

/// Every weight of the Conv-Conv-RNN-Dense network.
///
/// Gradients use the same type, so optimizer code can zip the two.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub input_channels: usize,
    pub conv1: Conv1dParams,
    pub conv2: Conv1dParams,
    pub rnn: RnnParams,
    pub dense: DenseParams,
}

impl ModelParams {
    pub fn zeros(input_channels: usize) -> Self {
        Self {
            input_channels,
            conv1: Conv1dParams::zeros(CONV1_OUT, input_channels, KERNEL),
            conv2: Conv1dParams::zeros(CONV2_OUT, CONV1_OUT, KERNEL),
            rnn: RnnParams::zeros(CONV2_OUT, HIDDEN, RNN_LAYERS),
            dense: DenseParams {
                weight: Array2::zeros((NUM_CLASSES, HIDDEN)),
                bias: ndarray::Array1::zeros(NUM_CLASSES),
            },
        }
    }

    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization, tensor by
    /// tensor in [`ModelParams::tensors`] order, from a ChaCha8 stream.
    pub fn init(input_channels: usize, seed: u64) -> Self {
        let mut params = Self::zeros(input_channels);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fans = params.fan_ins();
        for ((_, values), fan_in) in params.tensors_mut().into_iter().zip(fans) {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in values.iter_mut() {
                *v = rng.random_range(-bound..bound);
            }
        }
        params
    }

    fn fan_ins(&self) -> Vec<usize> {
        let mut fans = vec![
            self.conv1.in_channels() * KERNEL,
            self.conv1.in_channels() * KERNEL,
            self.conv2.in_channels() * KERNEL,
            self.conv2.in_channels() * KERNEL,
        ];
        for layer in &self.rnn.layers {
            fans.extend([layer.input(), layer.hidden(), layer.hidden()]);
        }
        fans.extend([HIDDEN, HIDDEN]);
        fans
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_channels)
    }

    /// Named flat views of every tensor in a fixed declaration order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = vec![
            ("conv1.weight".into(), slice(self.conv1.weight.as_slice())),
            ("conv1.bias".into(), slice(self.conv1.bias.as_slice())),
            ("conv2.weight".into(), slice(self.conv2.weight.as_slice())),
            ("conv2.bias".into(), slice(self.conv2.bias.as_slice())),
        ];
        for (l, layer) in self.rnn.layers.iter().enumerate() {
            out.push((format!("rnn.l{l}.w_x"), slice(layer.w_x.as_slice())));
            out.push((format!("rnn.l{l}.w_h"), slice(layer.w_h.as_slice())));
            out.push((format!("rnn.l{l}.bias"), slice(layer.bias.as_slice())));
        }
        out.push(("dense.weight".into(), slice(self.dense.weight.as_slice())));
        out.push(("dense.bias".into(), slice(self.dense.bias.as_slice())));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = vec![
            ("conv1.weight".into(), slice_mut(self.conv1.weight.as_slice_mut())),
            ("conv1.bias".into(), slice_mut(self.conv1.bias.as_slice_mut())),
            ("conv2.weight".into(), slice_mut(self.conv2.weight.as_slice_mut())),
            ("conv2.bias".into(), slice_mut(self.conv2.bias.as_slice_mut())),
        ];
        for (l, layer) in self.rnn.layers.iter_mut().enumerate() {
            out.push((format!("rnn.l{l}.w_x"), slice_mut(layer.w_x.as_slice_mut())));
            out.push((format!("rnn.l{l}.w_h"), slice_mut(layer.w_h.as_slice_mut())));
            out.push((format!("rnn.l{l}.bias"), slice_mut(layer.bias.as_slice_mut())));
        }
        out.push(("dense.weight".into(), slice_mut(self.dense.weight.as_slice_mut())));
        out.push(("dense.bias".into(), slice_mut(self.dense.bias.as_slice_mut())));
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        dim_check("conv1 input channels", self.input_channels, self.conv1.in_channels())?;
        dim_check("conv1 output channels", CONV1_OUT, self.conv1.out_channels())?;
        dim_check("conv1 kernel", KERNEL, self.conv1.kernel())?;
        dim_check("conv2 input channels", CONV1_OUT, self.conv2.in_channels())?;
        dim_check("conv2 output channels", CONV2_OUT, self.conv2.out_channels())?;
        dim_check("conv2 kernel", KERNEL, self.conv2.kernel())?;
        dim_check("rnn layers", RNN_LAYERS, self.rnn.layers.len())?;
        for (l, layer) in self.rnn.layers.iter().enumerate() {
            let input = if l == 0 { CONV2_OUT } else { HIDDEN };
            dim_check("rnn input", input, layer.input())?;
            dim_check("rnn hidden", HIDDEN, layer.hidden())?;
            dim_check("rnn bias", HIDDEN, layer.bias.len())?;
        }
        dim_check("dense output", NUM_CLASSES, self.dense.weight.nrows())?;
        dim_check("dense input", HIDDEN, self.dense.weight.ncols())?;
        dim_check("dense bias", NUM_CLASSES, self.dense.bias.len())?;
        if self.tensors().iter().any(|(_, t)| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::Numeric("model parameters contain non-finite values".into()));
        }
        Ok(())
    }
}

fn slice(s: Option<&[f64]>) -> &[f64] {
    s.expect("parameters are kept in standard layout")
}

fn slice_mut(s: Option<&mut [f64]>) -> &mut [f64] {
    s.expect("parameters are kept in standard layout")
}

/// Intermediates of one forward pass, kept for the backward pass.
struct ForwardCache {
    batch: usize,
    t1: usize,
    t2: usize,
    patches1: Array2<f64>,
    z1: Array2<f64>,
    patches2: Array2<f64>,
    z2: Array2<f64>,
    /// Time-major RNN input `(t2, batch, CONV2_OUT)`.
    rnn_in: Array3<f64>,
    /// Time-major hidden states per layer.
    states: Vec<Array3<f64>>,
    logits: Array2<f64>,
}

fn relu_rows(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| v.max(0.0))
}

fn forward_cached(data: ArrayView3<'_, f64>, params: &ModelParams) -> Result<ForwardCache> {
    let (batch, channels, time) = data.dim();
    dim_check("input channels", params.input_channels, channels)?;
    check_time(time)?;
    let t1 = time + 1 - KERNEL;
    let t2 = t1 + 1 - KERNEL;

    let x = data.permuted_axes([0, 2, 1]);
    let (patches1, z1) = conv_rows(x, &params.conv1);
    let a1 = relu_rows(&z1)
        .into_shape_with_order((batch, t1, CONV1_OUT))
        .expect("standard layout");
    let (patches2, z2) = conv_rows(a1.view(), &params.conv2);
    let a2 = relu_rows(&z2)
        .into_shape_with_order((batch, t2, CONV2_OUT))
        .expect("standard layout");
    let rnn_in = a2.permuted_axes([1, 0, 2]).as_standard_layout().into_owned();

    let mut states = Vec::with_capacity(params.rnn.layers.len());
    for layer in &params.rnn.layers {
        let input = states.last().unwrap_or(&rnn_in);
        let out = rnn_layer_forward(input.view(), layer);
        states.push(out);
    }
    let last = states
        .last()
        .expect("at least one rnn layer")
        .index_axis(Axis(0), t2 - 1);
    let mut logits = last.dot(&params.dense.weight.t());
    logits += &params.dense.bias;

    Ok(ForwardCache {
        batch,
        t1,
        t2,
        patches1,
        z1,
        patches2,
        z2,
        rnn_in,
        states,
        logits,
    })
}

/// conv1 -> relu -> conv2 -> relu -> 2-layer RNN -> last top-layer state ->
/// dense. Returns raw logits `(batch, 3)`.
pub fn model_forward(data: ArrayView3<'_, f64>, params: &ModelParams) -> Result<Array2<f64>> {
    Ok(forward_cached(data, params)?.logits)
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy(logits: ArrayView2<'_, f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (batch, classes) = logits.dim();
    dim_check("labels", batch, labels.len())?;
    if batch == 0 {
        return Err(Error::Validation("cross-entropy over an empty batch".into()));
    }
    check_labels(labels, classes)?;
    let mut grad = Array2::zeros((batch, classes));
    let mut loss = 0.0;
    let scale = 1.0 / batch as f64;
    for ((row, mut g), &label) in logits.outer_iter().zip(grad.outer_iter_mut()).zip(labels) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[label];
        for (c, gc) in g.iter_mut().enumerate() {
            let p = (row[c] - log_z).exp();
            *gc = (p - if c == label { 1.0 } else { 0.0 }) * scale;
        }
    }
    Ok((loss * scale, grad))
}

/// Mean cross-entropy of `batch` and its exact gradient with respect to every
/// parameter (backpropagation through both convolutions and through time
/// across both recurrent layers).
pub fn model_backward(batch: &SampleBatch, params: &ModelParams) -> Result<(f64, ModelParams)> {
    let cache = forward_cached(batch.data.view(), params)?;
    let (loss, d_logits) = cross_entropy(cache.logits.view(), &batch.labels)?;
    let mut grad = params.zeros_like();
    let (b, t1, t2) = (cache.batch, cache.t1, cache.t2);

    let top = cache.states.last().expect("at least one rnn layer");
    let last = top.index_axis(Axis(0), t2 - 1);
    grad.dense.weight = d_logits.t().dot(&last);
    grad.dense.bias = d_logits.sum_axis(Axis(0));

    let mut d_states = Array3::<f64>::zeros((t2, b, HIDDEN));
    d_states
        .index_axis_mut(Axis(0), t2 - 1)
        .assign(&d_logits.dot(&params.dense.weight));
    for l in (0..params.rnn.layers.len()).rev() {
        let input = if l == 0 { &cache.rnn_in } else { &cache.states[l - 1] };
        d_states = rnn_layer_backward(
            input.view(),
            cache.states[l].view(),
            d_states.view(),
            &params.rnn.layers[l],
            &mut grad.rnn.layers[l],
        );
    }

    // d_states is now the gradient w.r.t. the conv2 activations, time-major
    let mut dz2 = d_states
        .permuted_axes([1, 0, 2])
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((b * t2, CONV2_OUT))
        .expect("standard layout");
    dz2.zip_mut_with(&cache.z2, |g, &z| {
        if z <= 0.0 {
            *g = 0.0
        }
    });
    conv_param_grads(&dz2, &cache.patches2, &mut grad.conv2);
    let d_patches2 = dz2.dot(&params.conv2.weight_matrix());
    let mut dz1 = col2im(d_patches2.view(), b, t1, CONV1_OUT, KERNEL);
    dz1.zip_mut_with(&cache.z1, |g, &z| {
        if z <= 0.0 {
            *g = 0.0
        }
    });
    conv_param_grads(&dz1, &cache.patches1, &mut grad.conv1);
    Ok((loss, grad))
}

fn conv_param_grads(dz: &Array2<f64>, patches: &Array2<f64>, grad: &mut Conv1dParams) {
    let (o, c, k) = grad.weight.dim();
    grad.weight = dz
        .t()
        .dot(patches)
        .into_shape_with_order((o, c, k))
        .expect("standard layout");
    grad.bias = dz.sum_axis(Axis(0));
}

/// Mean loss over a batch without computing gradients.
pub fn batch_loss(batch: &SampleBatch, params: &ModelParams) -> Result<f64> {
    let logits = model_forward(batch.data.view(), params)?;
    Ok(cross_entropy(logits.view(), &batch.labels)?.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<usize>,
    /// Elementwise sigmoid of the logits, `(batch, 3)`.
    pub scores: Array2<f64>,
    pub logits: Array2<f64>,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn predict(data: ArrayView3<'_, f64>, params: &ModelParams) -> Result<Prediction> {
    let logits = model_forward(data, params)?;
    Ok(prediction_from_logits(logits))
}

pub fn prediction_from_logits(logits: Array2<f64>) -> Prediction {
    let labels = logits
        .outer_iter()
        .map(|row| argmax(row.as_slice().expect("standard layout")))
        .collect();
    let scores = logits.mapv(sigmoid);
    Prediction {
        labels,
        scores,
        logits,
    }
}
