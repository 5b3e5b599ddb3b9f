//! Frequency-domain solver for the linearized input–output model: detected
//! output noise spectra normalized to shot noise, the QND check on the
//! amplitude quadrature, the phase-insensitive upper-sideband spectrum used
//! by tomography, and least-squares lineshape fitting.
//!
//! Model summary (resonant drive, perfectly overcoupled cavity): the
//! intracavity amplitude quadrature is decoupled from the mechanics, drives
//! it radiation-pressure-style, and the mechanical motion is re-encoded
//! purely in the phase quadrature. On reflection the carrier picks up an
//! all-pass phase, so the detected floor is flat, while the mechanical
//! response multiplies the cavity susceptibility at the sideband. Since the
//! mechanical line (Γ ≪ κ) is orders of magnitude narrower than any cavity
//! scale, the scale-κ factors are evaluated at Ω_m; only the mechanical
//! susceptibility varies across the grid. That keeps the detected spectrum
//! exactly of the Lorentzian-plus-dispersive form the linearized model
//! produces on a flat floor, and makes the spectrum/budget correspondence
//! exact. Input squeezing is white over the band, so cross-quadrature
//! correlations enter only through the static covariance; its v_xy element
//! is what interferes the mechanical signal with the noise floor at
//! intermediate squeeze phases (the Fano lineshape).

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{drive_covariance, weighted_cooperativity, DriveState, SystemParams};
use crate::numeric::{invert, solve_dense, Mat};

/// Detection flavor of a [`Spectrum`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpectrumKind {
    /// Single-quadrature homodyne detection at `quadrature_angle`.
    Homodyne,
    /// Phase-insensitive detection of the upper mechanical sideband.
    HeterodyneUpper,
}

/// A detected power spectral density, normalized so the far-from-resonance
/// shot-noise floor of an unsqueezed, lossless detection equals 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Frequency offsets from the mechanical resonance, Hz.
    pub offsets_hz: Vec<f64>,
    /// PSD relative to amplified shot noise.
    pub psd: Vec<f64>,
    /// Homodyne LO angle (rad); π/2 detects the phase quadrature. For
    /// heterodyne spectra this records π/2 by convention.
    pub quadrature_angle: f64,
    pub kind: SpectrumKind,
    /// Analytic flat noise floor the PSD approaches far from resonance.
    pub floor: f64,
    /// Per-bin 1σ statistical uncertainty (estimated spectra only).
    pub errors: Option<Vec<f64>>,
    /// Set when an estimated spectrum was averaged over too few (< 8)
    /// segments for the error bars to be trustworthy.
    pub low_statistics: bool,
}

impl Spectrum {
    /// Grid strictly increasing, PSD strictly positive.
    pub fn validate(&self) -> Result<()> {
        if self.offsets_hz.len() != self.psd.len() {
            return Err(Error::Invariant("grid/psd length mismatch".into()));
        }
        if self.offsets_hz.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invariant("frequency grid must be strictly increasing".into()));
        }
        if self.psd.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::Invariant("psd values must be strictly positive".into()));
        }
        Ok(())
    }

    /// Absolute frequencies (Hz) of the grid.
    pub fn absolute_hz(&self, params: &SystemParams) -> Vec<f64> {
        let f_m = params.mech_freq / TAU;
        self.offsets_hz.iter().map(|d| f_m + d).collect()
    }

    /// Signed asymmetry of the PSD about resonance:
    /// Σ sign(δ)·(psd − floor) / Σ |psd − floor|. Zero for a symmetric line.
    pub fn asymmetry_metric(&self) -> f64 {
        let mut signed = 0.0;
        let mut total = 0.0;
        for (&d, &p) in self.offsets_hz.iter().zip(&self.psd) {
            let e = p - self.floor;
            signed += d.signum() * e;
            total += e.abs();
        }
        if total == 0.0 {
            0.0
        } else {
            signed / total
        }
    }

    /// Trapezoidal integral of (psd − floor) over offsets within ±band/2,
    /// in units of (relative psd)·Hz.
    pub fn excess_power(&self, band_hz: f64) -> f64 {
        let half = band_hz / 2.0;
        let mut acc = 0.0;
        for (d, p) in self.offsets_hz.windows(2).zip(self.psd.windows(2)) {
            if d[0] >= -half && d[1] <= half {
                acc += 0.5 * ((p[0] - self.floor) + (p[1] - self.floor)) * (d[1] - d[0]);
            }
        }
        acc
    }
}

/// Cavity and mechanical susceptibilities at angular frequency `omega`
/// (measured in the frame rotating with the resonant drive):
/// χ_c(ω) = 1/(κ/2 − iω), χ_m(ω) = 1/(Γ/2 − i(ω − Ω_m)).
pub fn susceptibilities(params: &SystemParams, omega: f64) -> (Complex64, Complex64) {
    let chi_c = Complex64::new(params.cavity_linewidth / 2.0, -omega).inv();
    let chi_m =
        Complex64::new(params.total_mech_linewidth / 2.0, -(omega - params.mech_freq)).inv();
    (chi_c, chi_m)
}

/// Default measurement grid: 6000 bins of 50 Hz spanning 300 kHz centered on
/// the mechanical resonance (bin centers).
pub fn default_grid() -> Vec<f64> {
    (0..6000).map(|k| (k as f64 - 2999.5) * 50.0).collect()
}

/// Sideband coefficients of the detected-output model, with the scale-κ
/// factors frozen at the mechanical resonance.
struct SidebandModel {
    /// Reflection coefficient of the carrier at the sideband, |A| = 1.
    a_refl: Complex64,
    /// Coefficient multiplying χ_m(ω) in the mechanical transduction into
    /// the phase quadrature.
    b_pref: Complex64,
    /// |thermal transduction|² coefficient multiplying |χ_m|²·(n_th + 1/2).
    thermal_pref: f64,
    half_gamma: f64,
    n_th: f64,
}

impl SidebandModel {
    fn new(drive: &DriveState, params: &SystemParams) -> SidebandModel {
        let kappa = params.cavity_linewidth;
        let gamma = params.total_mech_linewidth;
        let omega_m = params.mech_freq;
        let g_sq = drive.cooperativity * kappa * gamma / 4.0;
        let chi_c = Complex64::new(kappa / 2.0, -omega_m).inv();
        let a_refl = Complex64::new(1.0, 0.0) - kappa * chi_c;
        let b_pref = Complex64::new(0.0, -2.0) * g_sq * kappa * chi_c * chi_c;
        let thermal_pref = kappa * gamma * g_sq * chi_c.norm_sqr();
        SidebandModel {
            a_refl,
            b_pref,
            thermal_pref,
            half_gamma: gamma / 2.0,
            n_th: params.damped_thermal_occupancy,
        }
    }

    /// Symmetrized output-field PSD at offset δ (rad/s) from the mechanical
    /// resonance, detected at quadrature angle θ_d (variance units,
    /// vacuum = 1/4).
    fn output_field_psd(&self, delta: f64, angle: f64, cov: &crate::model::QuadCovariance) -> f64 {
        let chi_m = Complex64::new(self.half_gamma, -delta).inv();
        let b = self.b_pref * chi_m;
        let (s, c) = angle.sin_cos();
        let g_x = self.a_refl * c + b * s;
        let g_y = self.a_refl * s;
        let thermal = self.thermal_pref * chi_m.norm_sqr() * (self.n_th + 0.5);
        g_x.norm_sqr() * cov.v_xx
            + g_y.norm_sqr() * cov.v_yy
            + 2.0 * (g_x * g_y.conj()).re * cov.v_xy
            + s * s * thermal
    }
}

fn detected(eta: f64, field_psd: f64) -> f64 {
    1.0 - eta + 4.0 * eta * field_psd
}

fn validate_grid(offsets_hz: &[f64]) -> Result<()> {
    if offsets_hz.is_empty() {
        return Err(Error::domain("frequency grid is empty"));
    }
    if offsets_hz.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("frequency grid must be strictly increasing"));
    }
    Ok(())
}

/// Homodyne output PSD at detection angle `detect_angle` over the offset
/// grid (Hz from Ω_m). `detect_angle` = π/2 detects the phase quadrature
/// carrying the mechanical signal; 0 detects the QND amplitude quadrature.
pub fn output_psd(
    drive: &DriveState,
    params: &SystemParams,
    offsets_hz: &[f64],
    detect_angle: f64,
) -> Result<Spectrum> {
    output_psd_detuned(drive, params, offsets_hz, detect_angle, 0.0)
}

/// As [`output_psd`] for an explicitly stated drive detuning; only the
/// resonant case (detuning = 0) is in the supported model. Detuned-drive
/// physics enters through the cooled-occupancy model instead.
pub fn output_psd_detuned(
    drive: &DriveState,
    params: &SystemParams,
    offsets_hz: &[f64],
    detect_angle: f64,
    detuning: f64,
) -> Result<Spectrum> {
    if detuning != 0.0 {
        return Err(Error::Unsupported(format!(
            "the PSD solver models a resonant drive only (requested detuning {detuning} rad/s)"
        )));
    }
    validate_grid(offsets_hz)?;
    params.validate()?;
    let cov = drive_covariance(drive, params);
    let model = SidebandModel::new(drive, params);
    let eta = params.detection_efficiency;
    let psd: Vec<f64> = offsets_hz
        .iter()
        .map(|&d| detected(eta, model.output_field_psd(TAU * d, detect_angle, &cov)))
        .collect();
    let floor = detected(eta, cov.variance_at_angle(detect_angle));
    Ok(Spectrum {
        offsets_hz: offsets_hz.to_vec(),
        psd,
        quadrature_angle: detect_angle,
        kind: SpectrumKind::Homodyne,
        floor,
        errors: None,
        low_statistics: false,
    })
}

/// Amplitude-quadrature spectrum: in the resonant model the mechanics leaves
/// no imprint there, so the returned spectrum is flat at the floor to
/// numerical precision, certifying the QND character of the measurement.
pub fn amplitude_quadrature_qnd_check(
    drive: &DriveState,
    params: &SystemParams,
    offsets_hz: &[f64],
) -> Result<Spectrum> {
    output_psd(drive, params, offsets_hz, 0.0)
}

/// Upper-sideband PSD under phase-insensitive detection: both output
/// quadratures at half the detection efficiency each, normalized so an
/// unsqueezed lossless floor equals 1.
pub fn heterodyne_upper_sideband(
    drive: &DriveState,
    params: &SystemParams,
    offsets_hz: &[f64],
) -> Result<Spectrum> {
    validate_grid(offsets_hz)?;
    params.validate()?;
    let cov = drive_covariance(drive, params);
    let model = SidebandModel::new(drive, params);
    let eta_q = params.detection_efficiency / 2.0;
    let psd: Vec<f64> = offsets_hz
        .iter()
        .map(|&d| {
            let sx = model.output_field_psd(TAU * d, 0.0, &cov);
            let sy = model.output_field_psd(TAU * d, std::f64::consts::FRAC_PI_2, &cov);
            detected(eta_q, 0.5 * (sx + sy))
        })
        .collect();
    let floor = detected(eta_q, 0.5 * (cov.v_xx + cov.v_yy));
    Ok(Spectrum {
        offsets_hz: offsets_hz.to_vec(),
        psd,
        quadrature_angle: std::f64::consts::FRAC_PI_2,
        kind: SpectrumKind::HeterodyneUpper,
        floor,
        errors: None,
        low_statistics: false,
    })
}

/// Parameters of a Lorentzian-plus-dispersive lineshape fit,
///
///   psd(δ) = floor + [A (Γ/2)² + B (Γ/2)(δ − δ0)] / ((δ − δ0)² + (Γ/2)²),
///
/// with shared linewidth between the absorptive and dispersive parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineshapeFit {
    /// Line center offset δ0 from the mechanical resonance, Hz.
    pub center: f64,
    /// Full width at half maximum Γ, Hz.
    pub linewidth: f64,
    /// Absorptive peak height A above the floor (relative-psd units).
    pub peak_height: f64,
    /// Area of the absorptive part, ∫(psd − floor) df = A·πΓ/2, in
    /// (relative psd)·Hz.
    pub lorentzian_area: f64,
    /// Dispersive-to-absorptive amplitude ratio B/A (0 for a symmetric line).
    pub fano_coefficient: f64,
    /// Fitted flat floor.
    pub floor: f64,
    /// Root-mean-square fit residual.
    pub fit_residual: f64,
    /// 1σ uncertainties from the fit covariance.
    pub stderr: LineshapeStderr,
}

/// 1σ parameter uncertainties of a [`LineshapeFit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineshapeStderr {
    pub center: f64,
    pub linewidth: f64,
    pub peak_height: f64,
    pub floor: f64,
    pub fano_coefficient: f64,
    pub lorentzian_area: f64,
}

impl LineshapeFit {
    /// Convert the fitted absorptive area to an equilibrium phonon
    /// occupancy via the analytic transduction gain: the detected line
    /// integrates to 2π·η_det·C̃·Γ·(n + 1/2) in (relative psd)·Hz units
    /// (Γ in Hz), with the same constants entering the backaction formula,
    /// so n = area/(2π η_det C̃ Γ) − 1/2.
    pub fn occupancy_from_area(&self, params: &SystemParams, cooperativity: f64) -> Result<f64> {
        self.occupancy_from_area_at(params, cooperativity, params.detection_efficiency)
    }

    /// As [`Self::occupancy_from_area`] with an explicit per-quadrature
    /// detection efficiency (heterodyne spectra transduce the line with
    /// half the single-quadrature gain).
    pub fn occupancy_from_area_at(
        &self,
        params: &SystemParams,
        cooperativity: f64,
        eta_det: f64,
    ) -> Result<f64> {
        if !(eta_det > 0.0) {
            return Err(Error::domain("occupancy conversion requires η_det > 0"));
        }
        let c_w = weighted_cooperativity(cooperativity, params)?;
        // 2π·Γ_Hz is the angular linewidth
        Ok(self.lorentzian_area / (eta_det * c_w * params.total_mech_linewidth) - 0.5)
    }

    /// Imprecision occupancy equivalent of the fitted floor,
    /// n_imp = floor/(4 η_det C̃).
    pub fn imprecision_from_floor(&self, params: &SystemParams, cooperativity: f64) -> Result<f64> {
        if !(params.detection_efficiency > 0.0) {
            return Err(Error::domain("imprecision conversion requires η_det > 0"));
        }
        let c_w = weighted_cooperativity(cooperativity, params)?;
        Ok(self.floor / (4.0 * params.detection_efficiency * c_w))
    }
}

/// Weighted least-squares fit of the shared-linewidth Lorentzian-plus-
/// dispersive model to a spectrum, by Levenberg–Marquardt with analytic
/// Jacobian. The grid must span at least ten fitted linewidths. Per-bin
/// errors are used as weights when the spectrum carries them.
pub fn fit_lineshape(spec: &Spectrum) -> Result<LineshapeFit> {
    spec.validate()?;
    let n = spec.psd.len();
    if n < 12 {
        return Err(Error::Fit(format!("too few points to fit a lineshape: {n}")));
    }
    let d = &spec.offsets_hz;
    let y = &spec.psd;
    let w: Vec<f64> = match &spec.errors {
        Some(errs) => errs.iter().map(|e| if *e > 0.0 { 1.0 / (e * e) } else { 1.0 }).collect(),
        None => vec![1.0; n],
    };

    // initial guesses from the data
    let edge = (n / 10).max(2);
    let mut floor0 = 0.0;
    for k in 0..edge {
        floor0 += y[k] + y[n - 1 - k];
    }
    floor0 /= 2.0 * edge as f64;
    let (peak_idx, peak_dev) = y
        .iter()
        .enumerate()
        .map(|(i, &v)| (i, (v - floor0).abs()))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let center0 = d[peak_idx];
    let peak0 = y[peak_idx] - floor0;
    // half-max crossing distance as the half-width guess
    let mut hw = (d[n - 1] - d[0]) / 20.0;
    if peak_dev > 0.0 {
        let half_level = floor0 + 0.5 * peak0;
        for k in peak_idx..n {
            if (y[k] - half_level) * (y[peak_idx] - half_level) < 0.0 {
                hw = d[k] - center0;
                break;
            }
        }
    }
    let hw = hw.abs().max((d[1] - d[0]).abs());

    // parameters: [floor, absorptive A, dispersive B, ln(half-width), center]
    let mut p = [floor0, peak0, 0.0, hw.ln(), center0];

    let model = |p: &[f64; 5], x: f64| -> (f64, [f64; 5]) {
        let g = p[3].exp();
        let dx = x - p[4];
        let denom = dx * dx + g * g;
        let lor = g * g / denom;
        let disp = g * dx / denom;
        let m = p[0] + p[1] * lor + p[2] * disp;
        let dlor_dg = 2.0 * g * dx * dx / (denom * denom);
        let ddisp_dg = dx * (dx * dx - g * g) / (denom * denom);
        let dlor_dc = 2.0 * g * g * dx / (denom * denom);
        let ddisp_dc = g * (dx * dx - g * g) / (denom * denom);
        (
            m,
            [
                1.0,
                lor,
                disp,
                // ∂/∂ln g = g · ∂/∂g
                g * (p[1] * dlor_dg + p[2] * ddisp_dg),
                p[1] * dlor_dc + p[2] * ddisp_dc,
            ],
        )
    };

    let chisq = |p: &[f64; 5]| -> f64 {
        let mut s = 0.0;
        for k in 0..n {
            let (m, _) = model(p, d[k]);
            let r = y[k] - m;
            s += w[k] * r * r;
        }
        s
    };

    let mut lambda: f64 = 1e-3;
    let mut cost = chisq(&p);
    let mut converged = false;
    for _ in 0..200 {
        let mut jtj = Mat::zeros(5);
        let mut jtr = [0.0f64; 5];
        for k in 0..n {
            let (m, jac) = model(&p, d[k]);
            let r = y[k] - m;
            for i in 0..5 {
                jtr[i] += w[k] * jac[i] * r;
                for j in i..5 {
                    jtj[(i, j)] += w[k] * jac[i] * jac[j];
                }
            }
        }
        for i in 0..5 {
            for j in 0..i {
                jtj[(i, j)] = jtj[(j, i)];
            }
        }
        let mut stepped = false;
        for _ in 0..25 {
            let mut damped = jtj.clone();
            for i in 0..5 {
                damped[(i, i)] += lambda * (jtj[(i, i)].abs() + 1e-12);
            }
            let Some(step) = solve_dense(&damped, &jtr) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = p;
            for i in 0..5 {
                trial[i] += step[i];
            }
            trial[3] = trial[3].clamp(hw.ln() - 12.0, hw.ln() + 12.0);
            let trial_cost = chisq(&trial);
            if trial_cost.is_finite() && trial_cost <= cost {
                let rel = (cost - trial_cost) / cost.max(1e-300);
                p = trial;
                cost = trial_cost;
                lambda = (lambda * 0.3).max(1e-12);
                stepped = true;
                if rel < 1e-13 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged {
            break;
        }
        if !stepped {
            // no downhill step exists at any damping: already at the optimum
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Fit(format!(
            "lineshape fit did not converge (residual {:.3e}, λ {lambda:.1e}, center {:.1} Hz)",
            (cost / n as f64).sqrt(),
            p[4]
        )));
    }

    let g = p[3].exp();
    let span = d[n - 1] - d[0];
    if span < 10.0 * 2.0 * g {
        return Err(Error::Fit(format!(
            "grid spans {span:.1} Hz, less than ten fitted linewidths ({:.1} Hz)",
            2.0 * g
        )));
    }

    // parameter covariance: (JᵀWJ)⁻¹, scaled by the reduced chi-square when
    // no per-bin errors were supplied
    let mut jtj = Mat::zeros(5);
    for k in 0..n {
        let (_, jac) = model(&p, d[k]);
        for i in 0..5 {
            for j in i..5 {
                jtj[(i, j)] += w[k] * jac[i] * jac[j];
            }
        }
    }
    for i in 0..5 {
        for j in 0..i {
            jtj[(i, j)] = jtj[(j, i)];
        }
    }
    let dof = (n as f64 - 5.0).max(1.0);
    let scale = if spec.errors.is_some() { 1.0 } else { cost / dof };
    let sigma = invert(&jtj)
        .map(|inv| [inv[(0, 0)], inv[(1, 1)], inv[(2, 2)], inv[(3, 3)], inv[(4, 4)]])
        .unwrap_or([f64::INFINITY; 5])
        .map(|v| (v.max(0.0) * scale).sqrt());

    let peak = p[1];
    let fwhm = 2.0 * g;
    let area = peak * std::f64::consts::PI * fwhm / 2.0;
    let fano = if peak.abs() > 1e-300 { p[2] / peak } else { 0.0 };
    let sigma_g = sigma[3] * g;
    let area_per_peak = std::f64::consts::PI * fwhm / 2.0;
    let sigma_area = ((sigma[1] * area_per_peak).powi(2)
        + (peak * std::f64::consts::PI * sigma_g).powi(2))
    .sqrt();
    let sigma_fano = if peak.abs() > 1e-300 {
        ((sigma[2] / peak).powi(2) + (p[2] * sigma[1] / (peak * peak)).powi(2)).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(LineshapeFit {
        center: p[4],
        linewidth: fwhm,
        peak_height: peak,
        lorentzian_area: area,
        fano_coefficient: fano,
        floor: p[0],
        fit_residual: (cost / n as f64).sqrt(),
        stderr: LineshapeStderr {
            center: sigma[4],
            linewidth: 2.0 * sigma_g,
            peak_height: sigma[1],
            floor: sigma[0],
            fano_coefficient: sigma_fano,
            lorentzian_area: sigma_area,
        },
    })
}
