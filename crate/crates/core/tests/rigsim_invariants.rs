//! Simulator invariants that need whole recordings: schedule-level window
//! counts and the spectral physics of the synchronous peak.

use std::f64::consts::TAU;

use shaft_core::data::{prepare_windows, Channel, DatasetId, Role};
use shaft_core::dsp::rfft_magnitudes;
use shaft_core::rigsim::{make_profile, simulate, SimConfig, UnbalanceSpec, VoltageProfile};

/// Voltage that spins the motor at exactly `60·k` RPM, so the synchronous
/// tone is bin-centered and leakage-free.
fn bin_centered_voltage(k: u32) -> f64 {
    (60.0 * f64::from(k) - 209.0) / 212.0
}

fn steady_config(volts: f64, factor: f64, seed: u64) -> SimConfig {
    let mut cfg = SimConfig::base(seed);
    cfg.unbalance = UnbalanceSpec::from_factor(factor);
    cfg.profile = VoltageProfile::constant(volts, 3.0);
    cfg.base_noise_sigma = 0.0;
    cfg.rpm_noise_sigma = 0.0;
    cfg
}

fn steady_window_spectrum(cfg: &SimConfig) -> Vec<f64> {
    let rec = simulate(cfg, DatasetId::parse("3D").unwrap()).unwrap();
    // Second window, clear of any startup effects.
    rfft_magnitudes(&rec.vib1[4096..8192]).unwrap().magnitudes
}

#[test]
fn full_scale_development_run_yields_expected_window_count() {
    // Content does not matter for counting; strip the signal model so the
    // full-length run stays fast.
    let mut cfg = SimConfig::base(1);
    cfg.profile = make_profile(Role::Development);
    cfg.harmonic_gains.clear();
    cfg.base_noise_sigma = 0.0;
    cfg.rpm_noise_sigma = 0.0;
    let rec = simulate(&cfg, DatasetId::parse("0D").unwrap()).unwrap();
    assert_eq!(rec.len(), 2 * 162 * 20 * 4096);

    let windows = prepare_windows(&rec, Channel::Vib1).unwrap();
    // Step seconds minus the trimmed warm-up: 2*162*20 - 12.
    let expected = 2 * 162 * 20 - 12;
    let got = windows.len() as i64;
    assert!(
        (got - expected as i64).abs() <= 2,
        "window count {got} vs expected {expected}"
    );
}

#[test]
fn synchronous_peak_sits_in_the_rounded_speed_bin() {
    // 1481 RPM -> 24.68 Hz: off-center tone still peaks in bin 25.
    let cfg = steady_config(6.0, 75.5, 3);
    let mags = steady_window_spectrum(&cfg);
    let peak = mags
        .iter()
        .enumerate()
        .skip(1)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    assert_eq!(peak, (1481.0f64 / 60.0).round() as usize);
}

#[test]
fn peak_magnitude_scales_linearly_with_factor() {
    let v = bin_centered_voltage(25); // exactly 1500 RPM
    let weak = steady_window_spectrum(&steady_config(v, 45.9, 3));
    let strong = steady_window_spectrum(&steady_config(v, 152.1, 3));
    assert_eq!(weak.iter().skip(1).enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0, 24);
    let ratio = strong[25] / weak[25];
    let expected = 152.1 / 45.9;
    assert!(
        (ratio / expected - 1.0).abs() < 0.01,
        "factor scaling ratio {ratio} vs {expected}"
    );
}

#[test]
fn peak_magnitude_scales_quadratically_with_speed() {
    let slow = steady_window_spectrum(&steady_config(bin_centered_voltage(25), 75.5, 9));
    let fast = steady_window_spectrum(&steady_config(bin_centered_voltage(35), 75.5, 9));
    let ratio = fast[35] / slow[25];
    let expected = (2100.0f64 / 1500.0).powi(2);
    assert!(
        (ratio / expected - 1.0).abs() < 0.01,
        "speed scaling ratio {ratio} vs {expected}"
    );
}

#[test]
fn harmonics_appear_at_integer_multiples() {
    let v = bin_centered_voltage(25);
    let mags = steady_window_spectrum(&steady_config(v, 152.1, 5));
    // Default gains 1 / 0.3 / 0.1 at 25, 50, 75 Hz.
    assert!((mags[50] / mags[25] - 0.3).abs() < 0.01);
    assert!((mags[75] / mags[25] - 0.1).abs() < 0.01);
}

#[test]
fn window_phase_continuity_across_step_boundaries() {
    // A pure tone stays phase-continuous across voltage steps: windows on
    // either side of a boundary show the same peak frequency, and the
    // whole recording never jumps in amplitude.
    let mut cfg = SimConfig::base(13);
    cfg.unbalance = UnbalanceSpec::from_factor(75.5);
    cfg.profile = VoltageProfile {
        steps: vec![(6.0, 2.0), (6.0, 2.0)],
        repetitions: 1,
    };
    cfg.base_noise_sigma = 0.0;
    cfg.rpm_noise_sigma = 0.0;
    let rec = simulate(&cfg, DatasetId::parse("3D").unwrap()).unwrap();
    let boundary = 2 * 4096;
    let before = rec.vib1[boundary - 1];
    let after = rec.vib1[boundary];
    let step_rms = (rec.vib1.iter().map(|x| x * x).sum::<f64>() / rec.len() as f64).sqrt();
    assert!((after - before).abs() < 4.0 * step_rms * (TAU * 40.0 / 4096.0));
}
