//! Cognitive-load classification from fused fNIRS, eye-tracking and driving
//! telemetry.
//!
//! The crate is organised around the stages of the pipeline:
//!
//! * [`synthgen`] generates labelled multimodal sessions with known
//!   informative channels.
//! * [`datafusion`] loads streams, downsamples them onto the fNIRS clock,
//!   standardizes, windows and splits.
//! * [`featsel`] ranks features with variance threshold, PCA, ANOVA F and
//!   extra-trees Gini importance.
//! * [`nncore`] is the Conv-Conv-RNN-Dense classifier with hand-derived
//!   gradients and Adam.
//! * [`evalmetrics`] computes confusion matrices, precision/recall/F1 and
//!   one-vs-rest AUC and renders comparison reports.
//! * [`pipeline`] wires the stages together for the CLI.

pub mod datafusion;
pub mod error;
pub mod evalmetrics;
pub mod featsel;
pub mod nncore;
pub mod pipeline;
pub mod svg;
pub mod synthgen;

pub use error::{Error, ErrorKind, Result};
