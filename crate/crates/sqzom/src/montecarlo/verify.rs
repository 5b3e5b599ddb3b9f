//! Deterministic oracle harness: runs the canonical drive states through the
//! time-domain integrator, compares the estimated PSDs against the analytic
//! spectra (window-smeared to the exact Welch-bin expectation), extracts the
//! equilibrium occupancy, and emits a machine-readable pass/fail report.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::budget;
use crate::error::{Error, Result};
use crate::model::{weighted_cooperativity, DriveState, SystemParams};
use crate::spectra;

use super::welch::WelchAccumulator;
use super::{estimate_psd, integrate, total_segments, ModelKind, SimConfig};

/// PSD agreement threshold (relative RMS over ±10Γ).
pub const PSD_RMS_TOLERANCE: f64 = 0.03;
/// Occupancy agreement threshold (relative).
pub const OCCUPANCY_TOLERANCE: f64 = 0.05;

/// The six canonical verification cases {r ∈ {0, 1}} × {θ ∈ {0, π/2, π}}.
pub fn canonical_cases() -> Vec<(String, f64, f64)> {
    let mut cases = Vec::new();
    for (rn, r) in [("r0", 0.0), ("r1", 1.0)] {
        for (tn, th) in [("amp", 0.0), ("mid", FRAC_PI_2), ("phase", PI)] {
            cases.push((format!("{rn}_{tn}"), r, th));
        }
    }
    cases
}

/// Options for [`run_verification`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Target total Welch segments per case (sets the trajectory duration).
    pub segments: usize,
    pub cooperativity: f64,
    /// Use the adiabatic fast path (with an automatic short full-model
    /// validity check) instead of the full integrator.
    pub fast: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { seed: 1, segments: 2400, cooperativity: 70.0, fast: false }
    }
}

/// Per-case outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseReport {
    pub name: String,
    pub squeeze_r: f64,
    pub squeeze_phase: f64,
    pub segments: usize,
    /// Relative RMS deviation of the estimated PSD from the smeared
    /// analytic expectation over ±10Γ.
    pub psd_rms_rel: f64,
    pub occupancy_mc: f64,
    pub occupancy_expected: f64,
    pub occupancy_rel_dev: f64,
    pub pass: bool,
}

/// Fast-path validity check outcome (present in fast mode).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FastPathCheck {
    pub short_segments: usize,
    pub rms_rel: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Full verification report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub cooperativity: f64,
    pub seed: u64,
    pub mode: String,
    pub psd_tolerance: f64,
    pub occupancy_tolerance: f64,
    pub cases: Vec<CaseReport>,
    pub fast_path_check: Option<FastPathCheck>,
    pub pass: bool,
}

fn config_for_segments(params: &SystemParams, seed: u64, segments: usize, fast: bool) -> SimConfig {
    let mut cfg = SimConfig::for_params(params);
    cfg.seed = seed;
    cfg.model = if fast { ModelKind::AdiabaticBaseband } else { ModelKind::Full };
    let per_traj = (segments as f64 / cfg.n_trajectories as f64).ceil() as usize;
    let t_seg = cfg.segment_length as f64 / cfg.decimated_rate();
    cfg.duration = ((per_traj + 1) as f64 * t_seg / 2.0)
        .max(100.0 / params.total_mech_linewidth)
        .max(t_seg * 1.01);
    cfg
}

/// Expected Welch-bin values for a drive state: the analytic PSD convolved
/// with the exact spectral kernel of the estimator's window, evaluated at
/// the estimator's bins within ±`band_hz`.
fn smeared_expectation(
    drive: &DriveState,
    params: &SystemParams,
    offsets_hz: &[f64],
    segment_length: usize,
    sample_rate: f64,
    detect_angle: f64,
) -> Result<Vec<f64>> {
    let acc = WelchAccumulator::new(segment_length);
    let dt2 = 1.0 / sample_rate;
    let analytic = move |f: f64| -> f64 {
        spectra::output_psd(drive, params, &[f], detect_angle)
            .map(|s| s.psd[0])
            .unwrap_or(f64::NAN)
    };
    Ok(offsets_hz.iter().map(|&f| acc.smear(dt2, f, &analytic)).collect())
}

/// Occupancy from an estimated spectrum by direct area integration: the
/// floor is measured on the far wings, the excess is integrated over
/// ±10Γ, corrected for the finite capture fraction, and converted through
/// the analytic transduction gain.
fn occupancy_from_spectrum(
    spec: &crate::spectra::Spectrum,
    params: &SystemParams,
    cooperativity: f64,
) -> Result<f64> {
    let gamma_hz = params.total_mech_linewidth / TAU;
    let band = 10.0 * gamma_hz;
    let nyquist = spec.offsets_hz.last().copied().unwrap_or(0.0);
    let far_lo = (0.55 * nyquist).max(3.0 * band);
    let far: Vec<f64> = spec
        .offsets_hz
        .iter()
        .zip(&spec.psd)
        .filter(|(f, _)| f.abs() >= far_lo)
        .map(|(_, p)| *p)
        .collect();
    if far.len() < 8 {
        return Err(Error::domain("spectrum too narrow to estimate the floor"));
    }
    let floor = far.iter().sum::<f64>() / far.len() as f64;
    let df = spec.offsets_hz[1] - spec.offsets_hz[0];
    let area: f64 = spec
        .offsets_hz
        .iter()
        .zip(&spec.psd)
        .filter(|(f, _)| f.abs() <= band)
        .map(|(_, p)| (p - floor) * df)
        .sum();
    let capture = (2.0 / PI) * (2.0 * band / gamma_hz / 2.0).atan();
    let c_w = weighted_cooperativity(cooperativity, params)?;
    // area integrates to 2π·η_det·C̃·Γ_Hz·(n + 1/2) when fully captured
    Ok(area / capture / (params.detection_efficiency * c_w * params.total_mech_linewidth) - 0.5)
}

fn run_case(
    name: &str,
    r: f64,
    theta: f64,
    params: &SystemParams,
    opts: &VerifyOptions,
) -> Result<CaseReport> {
    let drive = DriveState::new(r, theta, 0.0, opts.cooperativity)?;
    let case_seed = super::derive_seed(opts.seed, crate::montecarlo::derive_seed(7, name.len() as u64) ^ name.bytes().map(u64::from).sum::<u64>());
    let cfg = config_for_segments(params, case_seed, opts.segments, opts.fast);
    let batch = integrate(&drive, params, &cfg)?;
    let spec = estimate_psd(&batch, FRAC_PI_2)?;
    let segments = total_segments(&batch);

    let band = 10.0 * params.total_mech_linewidth / TAU;
    let in_band: Vec<(f64, f64)> = spec
        .offsets_hz
        .iter()
        .zip(&spec.psd)
        .filter(|(f, _)| f.abs() <= band)
        .map(|(f, p)| (*f, *p))
        .collect();
    let bins: Vec<f64> = in_band.iter().map(|k| k.0).collect();
    let expected = smeared_expectation(
        &drive,
        params,
        &bins,
        cfg.segment_length,
        batch.sample_rate,
        FRAC_PI_2,
    )?;
    let mut ss = 0.0;
    for ((_, p), e) in in_band.iter().zip(&expected) {
        let rel = (p - e) / e;
        ss += rel * rel;
    }
    let psd_rms_rel = (ss / expected.len() as f64).sqrt();

    let occupancy_mc = occupancy_from_spectrum(&spec, params, opts.cooperativity)?;
    let b = budget::budget(&drive, params)?;
    let occupancy_expected = params.damped_thermal_occupancy + b.n_ba;
    let occupancy_rel_dev = (occupancy_mc - occupancy_expected).abs() / occupancy_expected;

    Ok(CaseReport {
        name: name.to_string(),
        squeeze_r: r,
        squeeze_phase: theta,
        segments,
        psd_rms_rel,
        occupancy_mc,
        occupancy_expected,
        occupancy_rel_dev,
        pass: psd_rms_rel < PSD_RMS_TOLERANCE && occupancy_rel_dev < OCCUPANCY_TOLERANCE,
    })
}

/// Short full-model run compared against the fast path; passes when they
/// agree within the short run's statistical resolution.
pub fn check_fast_path(params: &SystemParams, seed: u64) -> Result<FastPathCheck> {
    let drive = DriveState::amplitude_squeezed(1.0, 70.0)?;
    let short_segments = 64;
    let full_cfg = config_for_segments(params, derive(seed, 1), short_segments, false);
    let fast_cfg = config_for_segments(params, derive(seed, 2), short_segments * 16, true);
    let full = estimate_psd(&integrate(&drive, params, &full_cfg)?, FRAC_PI_2)?;
    let fast = estimate_psd(&integrate(&drive, params, &fast_cfg)?, FRAC_PI_2)?;
    let band = 10.0 * params.total_mech_linewidth / TAU;
    let mut ss = 0.0;
    let mut count = 0;
    for ((f, p), q) in full.offsets_hz.iter().zip(&full.psd).zip(&fast.psd) {
        if f.abs() <= band {
            let rel = (p - q) / q;
            ss += rel * rel;
            count += 1;
        }
    }
    let rms_rel = (ss / count as f64).sqrt();
    let threshold = 3.5 * (1.2 / short_segments as f64).sqrt() + 0.01;
    Ok(FastPathCheck { short_segments, rms_rel, threshold, pass: rms_rel < threshold })
}

fn derive(seed: u64, tag: u64) -> u64 {
    super::derive_seed(seed, 0xFA57_0000 + tag)
}

/// Run the full verification over the canonical cases.
pub fn run_verification(params: &SystemParams, opts: &VerifyOptions) -> Result<VerifyReport> {
    run_cases(params, opts, &canonical_cases())
}

/// Run the verification over a named subset of the canonical cases.
pub fn run_cases(
    params: &SystemParams,
    opts: &VerifyOptions,
    cases: &[(String, f64, f64)],
) -> Result<VerifyReport> {
    params.validate()?;
    let fast_path_check =
        if opts.fast { Some(check_fast_path(params, opts.seed)?) } else { None };
    let mut reports = Vec::new();
    for (name, r, theta) in cases {
        reports.push(run_case(name, *r, *theta, params, opts)?);
    }
    let pass = reports.iter().all(|c| c.pass)
        && fast_path_check.as_ref().map(|c| c.pass).unwrap_or(true);
    Ok(VerifyReport {
        cooperativity: opts.cooperativity,
        seed: opts.seed,
        mode: if opts.fast { "fast".into() } else { "full".into() },
        psd_tolerance: PSD_RMS_TOLERANCE,
        occupancy_tolerance: OCCUPANCY_TOLERANCE,
        cases: reports,
        fast_path_check,
        pass,
    })
}
