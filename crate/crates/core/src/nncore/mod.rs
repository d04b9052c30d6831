//! The fixed Conv-Conv-RNN-Dense classifier: forward pass, hand-derived
//! gradients, softmax cross-entropy, Adam and a deterministic training loop.

pub mod adam;
pub mod checkpoint;
pub mod layers;
pub mod model;
pub mod train;

pub use adam::{adam_step, AdamState};
pub use layers::{activation, conv1d_forward, rnn_forward, sigmoid, Activation, Conv1dParams, RnnLayerParams, RnnOutput, RnnParams};
pub use model::{
    argmax, batch_loss, cross_entropy, model_backward, model_forward, predict, DenseParams, ModelParams, Prediction, SampleBatch,
    CONV1_OUT, CONV2_OUT, HIDDEN, KERNEL, MIN_TIME, NUM_CLASSES, RNN_LAYERS,
};
pub use train::{dataset_loss, fit, FitResult, TrainConfig};
