//! Unbalance detection on rotating shafts from vibration data.
//!
//! The crate covers the full workflow at desk scale:
//!
//! - [`data`]: loading, trimming and windowing of five-column vibration
//!   recordings (`V_in`, `Measured_RPM`, `Vibration_1..3` at 4096 Hz).
//! - [`rigsim`]: a seed-deterministic simulator of the measurement rig, so
//!   every experiment can run without the published dataset.
//! - [`dsp`]: FFT magnitudes, robust quantile scaling, statistical features,
//!   snippetization and MFCCs.
//! - [`models`]: from-scratch learners (logistic regression, MLP, 1D CNN,
//!   random forest, Gaussian HMM).
//! - [`pipeline`]: experiment protocols, metrics, and reports.
//!
//! All randomness is derived from explicit `u64` seeds; identical seeds and
//! inputs produce bit-identical artifacts.

pub mod data;
pub mod dsp;
pub mod models;
pub mod pipeline;
pub mod rigsim;
mod rng;

pub use rng::stream_rng;

/// Fixed sampling rate of all recordings, in Hz.
pub const SAMPLE_RATE: u32 = 4096;

/// Samples per classification window (one second).
pub const WINDOW_LEN: usize = 4096;

/// Crate version stamped into reports and model containers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
