//! Snippetization and mel-frequency cepstral coefficients.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::fft::half_spectrum;
use super::DspError;
use crate::{SAMPLE_RATE, WINDOW_LEN};

/// MFCC extraction parameters. Snippet length and overlap are in samples;
/// the taper is a periodic Hann window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfccConfig {
    pub n_mfcc: usize,
    pub n_mels: usize,
    pub snippet_len: usize,
    pub overlap: usize,
    pub log_floor: f64,
}

impl MfccConfig {
    pub const DEFAULT_N_MELS: usize = 26;
    pub const DEFAULT_LOG_FLOOR: f64 = 1e-10;

    pub fn new(n_mfcc: usize, snippet_len: usize, overlap: usize) -> Result<Self, DspError> {
        let cfg = Self {
            n_mfcc,
            n_mels: Self::DEFAULT_N_MELS,
            snippet_len,
            overlap,
            log_floor: Self::DEFAULT_LOG_FLOOR,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), DspError> {
        if self.n_mfcc == 0 || self.n_mfcc > self.n_mels {
            return Err(DspError::BadConfig(format!(
                "need 0 < n_mfcc <= n_mels, got {} / {}",
                self.n_mfcc, self.n_mels
            )));
        }
        if self.overlap >= self.snippet_len || self.snippet_len == 0 {
            return Err(DspError::BadParams {
                snippet_len: self.snippet_len,
                overlap: self.overlap,
                max: WINDOW_LEN,
            });
        }
        if !(self.log_floor > 0.0) {
            return Err(DspError::BadConfig("log floor must be > 0".into()));
        }
        Ok(())
    }
}

/// Cut one window into frames of `snippet_len` samples at stride
/// `snippet_len - overlap`; a trailing partial frame is dropped.
pub fn snippetize(sample: &[f64], snippet_len: usize, overlap: usize) -> Result<Vec<Vec<f64>>, DspError> {
    if snippet_len == 0 || overlap >= snippet_len || snippet_len > sample.len() {
        return Err(DspError::BadParams {
            snippet_len,
            overlap,
            max: sample.len(),
        });
    }
    let stride = snippet_len - overlap;
    let count = (sample.len() - overlap) / stride;
    Ok((0..count)
        .map(|i| sample[i * stride..i * stride + snippet_len].to_vec())
        .collect())
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10.0f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank over DFT bins `0..=n_fft/2`, spanning 0 Hz to
/// Nyquist. Peaks are unit height (no area normalization).
pub(crate) fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: f64) -> Vec<Vec<f64>> {
    let n_bins = n_fft / 2 + 1;
    let mel_max = hz_to_mel(sample_rate / 2.0);
    let points: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate / n_fft as f64;
    (0..n_mels)
        .map(|m| {
            let (lo, center, hi) = (points[m], points[m + 1], points[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    let w = if f < center {
                        (f - lo) / (center - lo)
                    } else {
                        (hi - f) / (hi - center)
                    };
                    w.max(0.0)
                })
                .collect()
        })
        .collect()
}

thread_local! {
    static FILTERBANKS: RefCell<HashMap<(usize, usize, u32), Arc<Vec<Vec<f64>>>>> =
        RefCell::new(HashMap::new());
}

/// Memoized filterbank; repeated extraction under one config is hot.
fn cached_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32) -> Arc<Vec<Vec<f64>>> {
    FILTERBANKS.with(|cache| {
        cache
            .borrow_mut()
            .entry((n_mels, n_fft, sample_rate))
            .or_insert_with(|| Arc::new(mel_filterbank(n_mels, n_fft, f64::from(sample_rate))))
            .clone()
    })
}

/// Orthonormal DCT-II of `v`.
fn dct2_orthonormal(v: &[f64]) -> Vec<f64> {
    let m = v.len() as f64;
    (0..v.len())
        .map(|j| {
            let scale = if j == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
            let sum: f64 = v
                .iter()
                .enumerate()
                .map(|(i, &x)| x * (PI * j as f64 * (i as f64 + 0.5) / m).cos())
                .sum();
            scale * sum
        })
        .collect()
}

/// MFCCs of one snippet: Hann taper, power spectrum, triangular mel
/// filterbank, `log(energy + floor)`, orthonormal DCT-II, first `n_mfcc`
/// coefficients.
pub fn mfcc(frame: &[f64], cfg: &MfccConfig, sample_rate: u32) -> Result<Vec<f64>, DspError> {
    cfg.validate()?;
    if frame.len() != cfg.snippet_len {
        return Err(DspError::BadLength {
            got: frame.len(),
            expected: cfg.snippet_len,
        });
    }
    let n = frame.len();
    let tapered: Vec<f64> = frame
        .iter()
        .enumerate()
        .map(|(i, &x)| x * 0.5 * (1.0 - (TAU * i as f64 / n as f64).cos()))
        .collect();
    let power: Vec<f64> = half_spectrum(&tapered).iter().map(|c| c.norm_sqr()).collect();

    let filters = cached_filterbank(cfg.n_mels, n, sample_rate);
    let log_energies: Vec<f64> = filters
        .iter()
        .map(|f| {
            let e: f64 = f.iter().zip(&power).map(|(w, p)| w * p).sum();
            (e + cfg.log_floor).ln()
        })
        .collect();

    let mut coeffs = dct2_orthonormal(&log_energies);
    coeffs.truncate(cfg.n_mfcc);
    Ok(coeffs)
}

/// MFCC sequence of one window: one coefficient vector per snippet.
pub fn mfcc_sequence(window: &[f64], cfg: &MfccConfig) -> Result<Vec<Vec<f64>>, DspError> {
    snippetize(window, cfg.snippet_len, cfg.overlap)?
        .iter()
        .map(|frame| mfcc(frame, cfg, SAMPLE_RATE))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn snippet_counts() {
        let w = vec![0.0; 4096];
        assert_eq!(snippetize(&w, 512, 0).unwrap().len(), 8);
        assert_eq!(snippetize(&w, 512, 256).unwrap().len(), 15);
        assert_eq!(snippetize(&w, 4096, 0).unwrap().len(), 1);
    }

    #[test]
    fn snippet_param_validation() {
        let w = vec![0.0; 64];
        assert!(snippetize(&w, 0, 0).is_err());
        assert!(snippetize(&w, 16, 16).is_err());
        assert!(snippetize(&w, 128, 0).is_err());
    }

    #[test]
    fn snippets_respect_stride() {
        let w: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let frames = snippetize(&w, 16, 8).unwrap();
        assert_eq!(frames.len(), 7);
        assert_eq!(frames[1][0], 8.0);
        assert_eq!(frames[6][15], 63.0);
    }

    #[test]
    fn zero_frame_concentrates_in_coefficient_zero() {
        let cfg = MfccConfig::new(13, 256, 0).unwrap();
        let c = mfcc(&vec![0.0; 256], &cfg, 4096).unwrap();
        let expected_c0 = (cfg.n_mels as f64).sqrt() * cfg.log_floor.ln();
        assert_relative_eq!(c[0], expected_c0, epsilon = 1e-9);
        for v in &c[1..] {
            assert!(v.abs() < 1e-9, "higher coefficient {v}");
        }
    }

    #[test]
    fn tone_energy_lands_in_nearest_filter() {
        let cfg = MfccConfig::new(13, 512, 0).unwrap();
        let tone: Vec<f64> = (0..512)
            .map(|i| (TAU * 400.0 * i as f64 / 4096.0).sin())
            .collect();
        let tapered: Vec<f64> = tone
            .iter()
            .enumerate()
            .map(|(i, &x)| x * 0.5 * (1.0 - (TAU * i as f64 / 512.0).cos()))
            .collect();
        let power: Vec<f64> = half_spectrum(&tapered).iter().map(|c| c.norm_sqr()).collect();
        let filters = mel_filterbank(cfg.n_mels, 512, 4096.0);
        let energies: Vec<f64> = filters
            .iter()
            .map(|f| f.iter().zip(&power).map(|(w, p)| w * p).sum())
            .collect();
        let hottest = energies
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;

        // The filter whose peak response is nearest 400 Hz.
        let mel_max = hz_to_mel(2048.0);
        let centers: Vec<f64> = (1..=cfg.n_mels)
            .map(|i| mel_to_hz(mel_max * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let nearest = centers
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - 400.0).abs().total_cmp(&(b.1 - 400.0).abs()))
            .unwrap()
            .0;
        assert_eq!(hottest, nearest);
    }

    #[test]
    fn doubling_amplitude_moves_only_coefficient_zero() {
        let cfg = MfccConfig {
            n_mfcc: 13,
            n_mels: 26,
            snippet_len: 512,
            overlap: 0,
            log_floor: 1e-30,
        };
        let mut rng = crate::rng::stream_rng(8, "mfcc-scale");
        use rand::Rng;
        let frame: Vec<f64> = (0..512).map(|_| rng.gen_range(0.5..1.5)).collect();
        let doubled: Vec<f64> = frame.iter().map(|x| 2.0 * x).collect();
        let a = mfcc(&frame, &cfg, 4096).unwrap();
        let b = mfcc(&doubled, &cfg, 4096).unwrap();
        // log-mel energies all shift by log 4; the orthonormal DCT maps a
        // constant shift onto coefficient 0 alone.
        let shift = (cfg.n_mels as f64).sqrt() * 4.0f64.ln();
        assert_relative_eq!(b[0] - a[0], shift, epsilon = 1e-6);
        for (x, y) in a[1..].iter().zip(&b[1..]) {
            assert_relative_eq!(x, y, epsilon = 1e-6);
        }
    }

    #[test]
    fn identical_frames_identical_coefficients() {
        let cfg = MfccConfig::new(8, 256, 128).unwrap();
        let frame: Vec<f64> = (0..256).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(mfcc(&frame, &cfg, 4096).unwrap(), mfcc(&frame, &cfg, 4096).unwrap());
    }

    #[test]
    fn sequence_covers_window() {
        let cfg = MfccConfig::new(5, 1024, 512).unwrap();
        let window: Vec<f64> = (0..4096).map(|i| (i as f64 * 0.01).sin()).collect();
        let seq = mfcc_sequence(&window, &cfg).unwrap();
        assert_eq!(seq.len(), 7);
        assert!(seq.iter().all(|c| c.len() == 5));
    }
}
