//! Synthetic measurement-rig simulator.
//!
//! Emulates a motor-driven shaft with an attached unbalance weight: the
//! voltage-to-speed map of the motor controller, stepped voltage profiles,
//! the rotation-synchronous centrifugal signature `m·r·ω²` plus harmonics,
//! band-limited sensor noise, and resonance bands that degrade SNR at
//! specific speeds. Generation is seed-deterministic.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DatasetId, Recording, RecordingSource, Role};
use crate::rng::stream_rng;
use crate::SAMPLE_RATE;

/// Valid motor-controller input range, volts.
pub const V_MIN: f64 = 2.0;
pub const V_MAX: f64 = 10.05;

/// Speed at which the reference unbalance amplitude is anchored.
const NORM_RPM: f64 = 2300.0;
/// Factor (mm·g) of the strongest unbalance row.
const NORM_FACTOR: f64 = 152.1;
/// Synchronous amplitude produced by `NORM_FACTOR` at `NORM_RPM`.
const NORM_AMPLITUDE: f64 = 0.1;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("input voltage {0} V outside [{V_MIN}, {V_MAX}] V")]
    OutOfRange(f64),
    #[error("invalid simulator config: {0}")]
    InvalidConfig(String),
}

/// Motor speed as a function of controller input voltage.
///
/// Linear map measured on the rig: `rpm = 212·V + 209`.
pub fn rpm_from_voltage(v: f64) -> Result<f64, SimError> {
    if !(V_MIN..=V_MAX).contains(&v) {
        return Err(SimError::OutOfRange(v));
    }
    Ok(212.0 * v + 209.0)
}

/// Centrifugal force of a point mass `m` (kg) at radius `r` (m) rotating
/// at angular speed `omega` (rad/s): `|F| = m·r·ω²`.
pub fn centrifugal_force(m_kg: f64, r_m: f64, omega: f64) -> f64 {
    m_kg * r_m * omega * omega
}

/// Unbalance factor `m·r` in mm·g, the severity measure of a weight.
pub fn unbalance_factor(mass_g: f64, radius_mm: f64) -> f64 {
    mass_g * radius_mm
}

/// An unbalance weight: mass and mounting radius with their measurement
/// tolerances, and the derived factor `m·r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnbalanceSpec {
    pub mass_g: f64,
    pub mass_tol_g: f64,
    pub radius_mm: f64,
    pub radius_tol_mm: f64,
    /// `mass_g * radius_mm`, mm·g.
    pub factor: f64,
    /// Published uncertainty of the factor; stored verbatim, not derived.
    pub factor_tol: f64,
}

impl UnbalanceSpec {
    pub fn new(mass_g: f64, mass_tol_g: f64, radius_mm: f64, radius_tol_mm: f64, factor_tol: f64) -> Self {
        Self {
            mass_g,
            mass_tol_g,
            radius_mm,
            radius_tol_mm,
            factor: unbalance_factor(mass_g, radius_mm),
            factor_tol,
        }
    }

    /// A purely synthetic unbalance of the given factor (unit radius).
    pub fn from_factor(factor: f64) -> Self {
        Self {
            mass_g: factor,
            mass_tol_g: 0.0,
            radius_mm: if factor == 0.0 { 0.0 } else { 1.0 },
            radius_tol_mm: 0.0,
            factor,
            factor_tol: 0.0,
        }
    }

    /// The five measured unbalance configurations, by strength 0..4.
    ///
    /// Strengths 1..4 use weights of 3.281 g or 6.614 g at radii between
    /// 14 mm and 23 mm, giving factors of roughly 45.9, 60.7, 75.5 and
    /// 152.1 mm·g; strength 0 is the empty holder.
    pub fn for_strength(strength: u8) -> Self {
        match strength {
            0 => Self::new(0.0, 0.0, 0.0, 0.0, 0.0),
            1 => Self::new(3.281, 0.003, 14.0, 0.1, 1.4),
            2 => Self::new(3.281, 0.003, 18.5, 0.1, 1.9),
            3 => Self::new(3.281, 0.003, 23.0, 0.1, 2.3),
            4 => Self::new(6.614, 0.007, 23.0, 0.1, 2.3),
            _ => panic!("unbalance strength must be 0..=4, got {strength}"),
        }
    }
}

/// Stepped motor-voltage schedule: `(volts, seconds)` per step, run
/// `repetitions` times end to end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageProfile {
    pub steps: Vec<(f64, f64)>,
    pub repetitions: u32,
}

impl VoltageProfile {
    /// Constant voltage held for `secs`, one pass.
    pub fn constant(volts: f64, secs: f64) -> Self {
        Self {
            steps: vec![(volts, secs)],
            repetitions: 1,
        }
    }

    pub fn total_seconds(&self) -> f64 {
        self.steps.iter().map(|(_, d)| d).sum::<f64>() * f64::from(self.repetitions)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.steps.is_empty() || self.repetitions == 0 {
            return Err(SimError::InvalidConfig("empty voltage profile".into()));
        }
        for &(v, d) in &self.steps {
            if !(V_MIN..=V_MAX).contains(&v) {
                return Err(SimError::OutOfRange(v));
            }
            if !(d > 0.0) {
                return Err(SimError::InvalidConfig(format!("step duration {d} s must be > 0")));
            }
        }
        Ok(())
    }
}

/// The acquisition schedule used on the rig, with a configurable step
/// duration (20 s on the rig; shorter values give desk-scale data with the
/// same speed coverage).
///
/// Development: 2.0 V to 10.05 V in 0.05 V steps (162 steps), two passes.
/// Evaluation: 4.0 V to 8.1 V in 0.1 V steps (42 steps), two passes.
pub fn make_profile_with_step(role: Role, step_secs: f64) -> VoltageProfile {
    let steps = match role {
        Role::Development => (0..=161)
            .map(|i| ((200 + 5 * i) as f64 / 100.0, step_secs))
            .collect(),
        Role::Evaluation => (0..=41)
            .map(|i| ((400 + 10 * i) as f64 / 100.0, step_secs))
            .collect(),
    };
    VoltageProfile {
        steps,
        repetitions: 2,
    }
}

/// The full-length acquisition schedule (20 s per voltage step).
pub fn make_profile(role: Role) -> VoltageProfile {
    make_profile_with_step(role, 20.0)
}

/// A speed band in which structural resonance amplifies sensor noise,
/// lowering the SNR of the unbalance signature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceBand {
    pub center_rpm: f64,
    pub width_rpm: f64,
    /// Noise multiplier at the band center (decays as a Gaussian of the
    /// distance from the center, sigma = width/2).
    pub gain: f64,
}

impl ResonanceBand {
    fn multiplier(&self, rpm: f64) -> f64 {
        let sigma = self.width_rpm / 2.0;
        let z = (rpm - self.center_rpm) / sigma;
        1.0 + (self.gain - 1.0) * (-0.5 * z * z).exp()
    }
}

/// Full configuration of one simulated recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub unbalance: UnbalanceSpec,
    pub profile: VoltageProfile,
    /// Standard deviation of the band-limited sensor noise, amplitude units.
    pub base_noise_sigma: f64,
    /// Relative gains of the shaft harmonics 1ω, 2ω, 3ω, ...
    pub harmonic_gains: Vec<f64>,
    pub resonance_bands: Vec<ResonanceBand>,
    /// Fractional phase/gain perturbation applied to evaluation-role
    /// recordings, emulating dismantling and reassembly of the weight.
    pub remount_jitter: f64,
    /// Motor speed first-order lag time constant, seconds.
    pub rpm_lag_tau: f64,
    /// Standard deviation of the speed-counter measurement noise, RPM.
    pub rpm_noise_sigma: f64,
    pub seed: u64,
}

impl SimConfig {
    /// Defaults for one dataset of the rig study: the measured unbalance
    /// weight for `strength`, the stepped schedule for `role`, and the
    /// stock noise/harmonic/resonance model.
    pub fn for_dataset(strength: u8, role: Role, step_secs: f64, seed: u64) -> Self {
        Self {
            unbalance: UnbalanceSpec::for_strength(strength),
            profile: make_profile_with_step(role, step_secs),
            ..Self::base(seed)
        }
    }

    /// The stock signal model with a caller-supplied unbalance and profile.
    pub fn base(seed: u64) -> Self {
        Self {
            unbalance: UnbalanceSpec::from_factor(0.0),
            profile: VoltageProfile::constant(6.0, 4.0),
            base_noise_sigma: 0.005,
            harmonic_gains: vec![1.0, 0.3, 0.1],
            resonance_bands: vec![
                ResonanceBand { center_rpm: 1150.0, width_rpm: 100.0, gain: 3.0 },
                ResonanceBand { center_rpm: 1550.0, width_rpm: 100.0, gain: 3.0 },
            ],
            remount_jitter: 0.02,
            rpm_lag_tau: 1.0,
            rpm_noise_sigma: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.profile.validate()?;
        if !(self.base_noise_sigma >= 0.0) {
            return Err(SimError::InvalidConfig("noise sigma must be >= 0".into()));
        }
        if self.harmonic_gains.iter().any(|g| !(*g >= 0.0)) {
            return Err(SimError::InvalidConfig("harmonic gains must be >= 0".into()));
        }
        for b in &self.resonance_bands {
            if !(b.width_rpm > 0.0) {
                return Err(SimError::InvalidConfig("resonance width must be > 0".into()));
            }
            if !(b.gain >= 0.0) {
                return Err(SimError::InvalidConfig("resonance gain must be >= 0".into()));
            }
        }
        if !(self.rpm_lag_tau > 0.0) {
            return Err(SimError::InvalidConfig("rpm lag tau must be > 0".into()));
        }
        if !(self.rpm_noise_sigma >= 0.0) {
            return Err(SimError::InvalidConfig("rpm noise sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// Synchronous amplitude scale: `NORM_FACTOR` at `NORM_RPM` maps to
/// `NORM_AMPLITUDE` sensor units.
fn amplitude_per_factor_omega2() -> f64 {
    let omega = NORM_RPM * TAU / 60.0;
    NORM_AMPLITUDE / (NORM_FACTOR * omega * omega)
}

/// Per-channel, per-harmonic phases and channel gains for one recording.
struct ChannelGeometry {
    /// `phases[c][k]`: phase of harmonic k+1 on channel c.
    phases: [Vec<f64>; 3],
    gains: [f64; 3],
}

fn channel_geometry(cfg: &SimConfig, role: Role) -> ChannelGeometry {
    let n_harm = cfg.harmonic_gains.len();
    let mut rng = stream_rng(cfg.seed, "channel-geometry");
    let mut phases: [Vec<f64>; 3] = Default::default();
    let mut gains = [0.0f64; 3];
    // Gain spread stays well below the ratio of adjacent unbalance
    // factors, so sensor coupling never reorders the strengths.
    for c in 0..3 {
        phases[c] = (0..n_harm).map(|_| rng.gen_range(0.0..TAU)).collect();
        gains[c] = rng.gen_range(0.95..1.05);
    }
    // Reassembly between the development and evaluation measurements
    // perturbs mounting phase and coupling slightly.
    if role == Role::Evaluation {
        let mut jrng = stream_rng(cfg.seed, "remount");
        for c in 0..3 {
            for p in phases[c].iter_mut() {
                *p += cfg.remount_jitter * std::f64::consts::PI * jrng.gen_range(-1.0..1.0);
            }
            gains[c] *= 1.0 + cfg.remount_jitter * jrng.gen_range(-1.0..1.0);
        }
    }
    ChannelGeometry { phases, gains }
}

/// Band-limited Gaussian noise: white samples through a one-pole low-pass,
/// rescaled so the stationary standard deviation equals `sigma`.
fn band_limited_noise(seed: u64, label: &str, n: usize, sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; n];
    }
    // One-pole coefficient for an ~800 Hz cutoff at 4096 Hz sampling.
    let alpha = 1.0 - (-TAU * 800.0 / f64::from(SAMPLE_RATE)).exp();
    let white_scale = sigma * ((2.0 - alpha) / alpha).sqrt();
    let mut rng = stream_rng(seed, label);
    let mut state = 0.0f64;
    (0..n)
        .map(|_| {
            let w: f64 = rng.sample(StandardNormal);
            state += alpha * (white_scale * w - state);
            state
        })
        .collect()
}

/// Generate one recording under `cfg` for the given dataset id.
///
/// The role only controls the remount perturbation (and the label metadata);
/// the voltage schedule comes from `cfg.profile`. With `remount_jitter = 0`
/// a development and an evaluation run of the same config are identical.
pub fn simulate(cfg: &SimConfig, id: DatasetId) -> Result<Recording, SimError> {
    cfg.validate()?;
    let dt = 1.0 / f64::from(SAMPLE_RATE);
    let samples_per_step: Vec<usize> = cfg
        .profile
        .steps
        .iter()
        .map(|&(_, d)| (d * f64::from(SAMPLE_RATE)).round() as usize)
        .collect();
    let n: usize = samples_per_step.iter().sum::<usize>() * cfg.profile.repetitions as usize;

    let geo = channel_geometry(cfg, id.role);
    let amp_norm = amplitude_per_factor_omega2();
    let factor = cfg.unbalance.factor;

    let mut v_in = Vec::with_capacity(n);
    let mut measured_rpm = Vec::with_capacity(n);
    let mut vib: [Vec<f64>; 3] = [
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    ];

    let noise: [Vec<f64>; 3] = [
        band_limited_noise(cfg.seed, "noise-vib1", n, cfg.base_noise_sigma),
        band_limited_noise(cfg.seed, "noise-vib2", n, cfg.base_noise_sigma),
        band_limited_noise(cfg.seed, "noise-vib3", n, cfg.base_noise_sigma),
    ];
    let mut rpm_rng = stream_rng(cfg.seed, "rpm-noise");

    // Motor state: speed follows the setpoint with a first-order lag; the
    // shaft angle integrates the actual speed so phase stays continuous
    // across voltage steps.
    let mut rpm_true = rpm_from_voltage(cfg.profile.steps[0].0)?;
    let mut theta = 0.0f64;
    let lag = dt / cfg.rpm_lag_tau;

    let mut t = 0usize;
    for _rep in 0..cfg.profile.repetitions {
        for (step, &(volts, _)) in cfg.profile.steps.iter().enumerate() {
            let rpm_set = rpm_from_voltage(volts)?;
            for _ in 0..samples_per_step[step] {
                rpm_true += (rpm_set - rpm_true) * lag;
                let omega = rpm_true * TAU / 60.0;
                theta += omega * dt;

                let res_mult: f64 = cfg
                    .resonance_bands
                    .iter()
                    .map(|b| b.multiplier(rpm_true))
                    .product();
                let sync_amp = amp_norm * factor * omega * omega;
                for c in 0..3 {
                    let mut s = 0.0;
                    for (k, &g) in cfg.harmonic_gains.iter().enumerate() {
                        s += g * (theta * (k + 1) as f64 + geo.phases[c][k]).sin();
                    }
                    vib[c].push(geo.gains[c] * sync_amp * s + res_mult * noise[c][t]);
                }

                v_in.push(volts);
                let rpm_meas = if cfg.rpm_noise_sigma > 0.0 {
                    let g: f64 = rpm_rng.sample(StandardNormal);
                    (rpm_true + cfg.rpm_noise_sigma * g).max(0.0)
                } else {
                    rpm_true
                };
                measured_rpm.push(rpm_meas);
                t += 1;
            }
        }
    }

    let [vib1, vib2, vib3] = vib;
    Recording::new(
        v_in,
        measured_rpm,
        vib1,
        vib2,
        vib3,
        id,
        RecordingSource::Synthetic { seed: cfg.seed },
    )
    .map_err(|e| SimError::InvalidConfig(format!("generated recording invalid: {e}")))
}
