//! Real-input FFT magnitudes.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::DspError;
use crate::WINDOW_LEN;

/// Spectral bins kept per one-second window: the physically meaningful
/// half of a 4096-point real transform (DC kept, Nyquist dropped).
pub const SPECTRUM_BINS: usize = WINDOW_LEN / 2;

/// Magnitude spectrum of one window at 1 Hz bin resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub magnitudes: Vec<f64>,
}

impl Spectrum {
    pub const BIN_HZ: f64 = 1.0;

    /// Index of the largest magnitude, skipping the DC bin.
    pub fn peak_bin(&self) -> usize {
        self.magnitudes
            .iter()
            .enumerate()
            .skip(1)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len))
}

/// Complex DFT bins `0..=len/2` of a real signal (DC through Nyquist).
pub(crate) fn half_spectrum(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan(x.len()).process(&mut buf);
    buf.truncate(x.len() / 2 + 1);
    buf
}

/// Magnitudes of DFT bins `0..len/2` for a real signal of any even length.
///
/// Shared by the window spectra and the MFCC power spectrum; no taper is
/// applied here.
pub fn fft_magnitudes(x: &[f64]) -> Vec<f64> {
    let mut half = half_spectrum(x);
    half.truncate(x.len() / 2);
    half.iter().map(|c| c.norm()).collect()
}

/// Magnitude spectrum of one one-second window (4096 samples, no taper).
///
/// Returns the 2048 physically meaningful coefficients: bins 0..=2047 of
/// the real transform, dropping the Nyquist bin.
pub fn rfft_magnitudes(window: &[f64]) -> Result<Spectrum, DspError> {
    if window.len() != WINDOW_LEN {
        return Err(DspError::BadLength {
            got: window.len(),
            expected: WINDOW_LEN,
        });
    }
    if let Some(i) = window.iter().position(|v| !v.is_finite()) {
        return Err(DspError::NonFinite(i));
    }
    Ok(Spectrum {
        magnitudes: fft_magnitudes(window),
    })
}
