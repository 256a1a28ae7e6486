//! Feature extraction: FFT magnitudes, robust quantile scaling, minimal
//! statistical features, snippetization and MFCCs.

mod features;
mod fft;
mod mfcc;
mod scaler;

pub use features::{kurtosis_excess, stat_features, std_population, FeatureMatrix, RowMeta, StatVariant};
pub use fft::{fft_magnitudes, rfft_magnitudes, Spectrum, SPECTRUM_BINS};
pub use mfcc::{hz_to_mel, mel_to_hz, mfcc, mfcc_sequence, snippetize, MfccConfig};
pub use scaler::{apply_scaler, fit_robust_scaler, quantile_linear, RobustScaler};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("bad input length: got {got}, expected {expected}")]
    BadLength { got: usize, expected: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("too few rows: got {got}, need at least {min}")]
    TooFewRows { got: usize, min: usize },
    #[error("zero variance in window {0}: kurtosis undefined")]
    ZeroVariance(usize),
    #[error("bad snippet params: len {snippet_len}, overlap {overlap} (need 0 <= overlap < len <= {max})")]
    BadParams {
        snippet_len: usize,
        overlap: usize,
        max: usize,
    },
    #[error("bad mfcc config: {0}")]
    BadConfig(String),
}
