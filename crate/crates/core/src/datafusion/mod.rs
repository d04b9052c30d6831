//! Stream ingestion, alignment onto a common clock, standardization,
//! correlation analysis, windowing and splitting.

pub mod align;
pub mod correlation;
pub mod scaler;
pub mod stream;
pub mod windowing;

pub use align::{align, downsample, downsample_with_skew, mean_period, AlignedDataset, Resampled};
pub use correlation::{correlation_matrix, CorrelationMatrix};
pub use scaler::{apply_scaler, fit_scaler, Scaler};
pub use stream::{
    fnirs_channel_names, load_labels, load_stream, read_stream, LabelInterval, LabelTrack, Modality, Stream, StreamSchema,
    DEFAULT_EYE_CHANNELS, DRIVING_CHANNELS, FNIRS_CHANNELS, TIMESTAMP_COLUMN,
};
pub use windowing::{distinct_rows, split, window, windows_to_batch, SplitMode, Window};
