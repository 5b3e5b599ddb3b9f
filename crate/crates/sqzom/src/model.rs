//! Physical parameters, the squeezed-thermal drive covariance model, and the
//! rate/cooperativity algebra shared by every other module.
//!
//! Conventions:
//! - all frequencies and rates are angular (rad/s) internally; constructors
//!   and I/O take Hz and multiply by 2π at the boundary;
//! - vacuum quadrature variance is 1/4 (shot-noise limit), and dB values are
//!   10·log10(variance / SNL);
//! - the squeeze phase θ is measured relative to the coherent drive phase:
//!   θ = 0 squeezes the amplitude quadrature, θ = π the phase quadrature.
//!   Geometrically the squeezed axis sits at θ/2 in the quadrature plane, so
//!   quadrature variances are π-periodic in the geometric angle as they must
//!   be.
//! - the drive squeezing is treated as white across the measurement band
//!   (single-mode variances; the source bandwidth is far wider than the few
//!   hundred kHz analysed around the mechanical sideband).

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vacuum (shot-noise-limit) quadrature variance.
pub const SNL_VARIANCE: f64 = 0.25;

/// Fixed physical parameters of the optomechanical circuit and detection
/// chain. Angular units (rad/s) for every frequency/rate field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Cavity resonance frequency ω_c.
    pub cavity_freq: f64,
    /// Mechanical resonance frequency Ω_m.
    pub mech_freq: f64,
    /// Total cavity linewidth κ.
    pub cavity_linewidth: f64,
    /// Intrinsic mechanical linewidth Γ_m.
    pub intrinsic_mech_linewidth: f64,
    /// Total (damped) mechanical linewidth Γ.
    pub total_mech_linewidth: f64,
    /// Vacuum optomechanical coupling rate g0.
    pub vacuum_coupling: f64,
    /// Damped thermal phonon occupancy n_th.
    pub damped_thermal_occupancy: f64,
    /// Excess thermal occupancy of the cavity drive field n_c.
    pub cavity_thermal_occupancy: f64,
    /// Power transmittance between the squeezer and the cavity, η_in.
    pub input_transmittance: f64,
    /// Quantum efficiency of the homodyne detection chain, η_det.
    pub detection_efficiency: f64,
    /// Pre-cooling bath occupancy (quanta), when known.
    pub bath_occupancy: Option<f64>,
    /// Base temperature (K); metadata only.
    pub base_temperature: f64,
    /// System noise temperature (K); metadata only.
    pub noise_temperature: f64,
}

impl SystemParams {
    /// Canonical device parameters: ω_c/2π = 6.89 GHz, Ω_m/2π = 8.68 MHz,
    /// κ/2π = 22.2 MHz, Γ_m/2π = 22 Hz, Γ/2π = 200 Hz, g0/2π = 170 Hz,
    /// n_th = 10, n_c = 0.17, η_in = 0.47, η_det = 0.03, n_bath = 95,
    /// T = 40 mK, T_N = 5.5 K.
    pub fn table_s1() -> Self {
        SystemParams {
            cavity_freq: TAU * 6.89e9,
            mech_freq: TAU * 8.68e6,
            cavity_linewidth: TAU * 22.2e6,
            intrinsic_mech_linewidth: TAU * 22.0,
            total_mech_linewidth: TAU * 200.0,
            vacuum_coupling: TAU * 170.0,
            damped_thermal_occupancy: 10.0,
            cavity_thermal_occupancy: 0.17,
            input_transmittance: 0.47,
            detection_efficiency: 0.03,
            bath_occupancy: Some(95.0),
            base_temperature: 0.040,
            noise_temperature: 5.5,
        }
    }

    /// Check the type invariants: strictly positive rates, Γ ≥ Γ_m,
    /// efficiencies in [0, 1], occupancies ≥ 0.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cavity_freq", self.cavity_freq),
            ("mech_freq", self.mech_freq),
            ("cavity_linewidth", self.cavity_linewidth),
            ("intrinsic_mech_linewidth", self.intrinsic_mech_linewidth),
            ("total_mech_linewidth", self.total_mech_linewidth),
            ("vacuum_coupling", self.vacuum_coupling),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::domain(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        if self.total_mech_linewidth < self.intrinsic_mech_linewidth {
            return Err(Error::domain(format!(
                "total mechanical linewidth {} below intrinsic {}",
                self.total_mech_linewidth, self.intrinsic_mech_linewidth
            )));
        }
        for (name, v) in [
            ("input_transmittance", self.input_transmittance),
            ("detection_efficiency", self.detection_efficiency),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::domain(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        let mut occ = vec![
            ("damped_thermal_occupancy", self.damped_thermal_occupancy),
            ("cavity_thermal_occupancy", self.cavity_thermal_occupancy),
        ];
        if let Some(nb) = self.bath_occupancy {
            occ.push(("bath_occupancy", nb));
        }
        for (name, v) in occ {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::domain(format!("{name} must be ≥ 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Sideband weighting factor 1 + 4(Ω_m/κ)² appearing in the weighted
    /// cooperativity.
    pub fn sideband_weight_denominator(&self) -> f64 {
        let ratio = self.mech_freq / self.cavity_linewidth;
        1.0 + 4.0 * ratio * ratio
    }
}

/// Displaced squeezed thermal drive settings.
///
/// `squeeze_phase` and `drive_phase` are stored reduced mod 2π. The quadrature
/// covariance depends only on the squeeze phase (measured relative to the
/// drive); the stored drive phase matters only as the phase reference of
/// tomography sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveState {
    /// Squeezing magnitude r ≥ 0; e^{-2r} is the squeezed-quadrature variance
    /// relative to the SNL before impurities.
    pub squeeze_r: f64,
    /// Squeeze phase θ relative to the drive (0 = amplitude squeezing).
    pub squeeze_phase: f64,
    /// Coherent drive phase φ.
    pub drive_phase: f64,
    /// Measurement cooperativity C = 4g²/κΓ > 0.
    pub cooperativity: f64,
}

impl DriveState {
    pub fn new(squeeze_r: f64, squeeze_phase: f64, drive_phase: f64, cooperativity: f64) -> Result<Self> {
        if !(squeeze_r >= 0.0) || !squeeze_r.is_finite() {
            return Err(Error::domain(format!("squeeze_r must be ≥ 0, got {squeeze_r}")));
        }
        if !(cooperativity > 0.0) || !cooperativity.is_finite() {
            return Err(Error::domain(format!(
                "cooperativity must be strictly positive, got {cooperativity}"
            )));
        }
        Ok(DriveState {
            squeeze_r,
            squeeze_phase: reduce_phase(squeeze_phase),
            drive_phase: reduce_phase(drive_phase),
            cooperativity,
        })
    }

    /// Unsqueezed drive at cooperativity `c`.
    pub fn unsqueezed(c: f64) -> Result<Self> {
        DriveState::new(0.0, 0.0, 0.0, c)
    }

    /// Amplitude-squeezed drive (θ = 0).
    pub fn amplitude_squeezed(r: f64, c: f64) -> Result<Self> {
        DriveState::new(r, 0.0, 0.0, c)
    }

    /// Phase-squeezed drive (θ = π).
    pub fn phase_squeezed(r: f64, c: f64) -> Result<Self> {
        DriveState::new(r, std::f64::consts::PI, 0.0, c)
    }

    /// Intracavity photon number equivalent to this cooperativity.
    pub fn photon_number(&self, params: &SystemParams) -> f64 {
        photons_from_cooperativity(params, self.cooperativity)
    }
}

/// Reduce a phase to [0, 2π).
pub fn reduce_phase(phi: f64) -> f64 {
    let p = phi.rem_euclid(TAU);
    // rem_euclid can return exactly TAU when phi is a tiny negative number
    if p >= TAU {
        0.0
    } else {
        p
    }
}

/// Symmetrized 2×2 covariance matrix of the drive quadratures, vacuum
/// variance = 1/4.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadCovariance {
    /// Amplitude-quadrature variance ⟨(ΔX)²⟩.
    pub v_xx: f64,
    /// Phase-quadrature variance ⟨(ΔY)²⟩.
    pub v_yy: f64,
    /// Symmetrized cross covariance ⟨{ΔX, ΔY}⟩/2.
    pub v_xy: f64,
}

impl QuadCovariance {
    /// Isotropic vacuum covariance.
    pub fn vacuum() -> Self {
        QuadCovariance { v_xx: SNL_VARIANCE, v_yy: SNL_VARIANCE, v_xy: 0.0 }
    }

    /// det V = v_xx·v_yy − v_xy²; ≥ 1/16 for physical states.
    pub fn det(&self) -> f64 {
        self.v_xx * self.v_yy - self.v_xy * self.v_xy
    }

    /// Variance of the generalized quadrature at geometric angle λ
    /// (λ = 0 amplitude, λ = π/2 phase).
    pub fn variance_at_angle(&self, lambda: f64) -> f64 {
        let (s, c) = lambda.sin_cos();
        c * c * self.v_xx + s * s * self.v_yy + 2.0 * s * c * self.v_xy
    }

    /// Positivity plus Heisenberg validation (det ≥ 1/16 − ε).
    pub fn validate(&self) -> Result<()> {
        if !(self.v_xx > 0.0) || !(self.v_yy > 0.0) {
            return Err(Error::Invariant(format!(
                "quadrature variances must be positive: v_xx={}, v_yy={}",
                self.v_xx, self.v_yy
            )));
        }
        let det = self.det();
        if det < SNL_VARIANCE * SNL_VARIANCE - 1e-12 {
            return Err(Error::Invariant(format!(
                "covariance violates the Heisenberg bound: det={det} < 1/16"
            )));
        }
        Ok(())
    }
}

/// Variance relative to the shot-noise limit, in dB.
pub fn variance_db(variance: f64) -> f64 {
    10.0 * (variance / SNL_VARIANCE).log10()
}

/// C = 4 g0² n_photons / (κ Γ).
pub fn cooperativity_from_photons(params: &SystemParams, n_photons: f64) -> Result<f64> {
    if !(n_photons > 0.0) || !n_photons.is_finite() {
        return Err(Error::domain(format!(
            "photon number must be strictly positive, got {n_photons}"
        )));
    }
    let g0 = params.vacuum_coupling;
    Ok(4.0 * g0 * g0 * n_photons / (params.cavity_linewidth * params.total_mech_linewidth))
}

/// Inverse of [`cooperativity_from_photons`]; the round trip is exact to
/// relative 1e-12.
pub fn photons_from_cooperativity(params: &SystemParams, c: f64) -> f64 {
    let g0 = params.vacuum_coupling;
    c * params.cavity_linewidth * params.total_mech_linewidth / (4.0 * g0 * g0)
}

/// Weighted cooperativity C̃ = 4C / (1 + 4(Ω_m/κ)²), folding the cavity's
/// filtering of the mechanical sidebands into the measurement strength.
pub fn weighted_cooperativity(c: f64, params: &SystemParams) -> Result<f64> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::domain(format!("cooperativity must be > 0, got {c}")));
    }
    Ok(4.0 * c / params.sideband_weight_denominator())
}

/// Rate at which drive photons scatter into the mechanical sidebands,
/// Γ_scatter = 4g²κ/(κ² + 4Ω_m²) = C·Γ/(1 + 4(Ω_m/κ)²).
pub fn scatter_rate(c: f64, params: &SystemParams) -> Result<f64> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::domain(format!("cooperativity must be > 0, got {c}")));
    }
    Ok(c * params.total_mech_linewidth / params.sideband_weight_denominator())
}

/// Full quadrature covariance of the displaced squeezed thermal drive after
/// transmission loss.
///
/// The variance of the generalized quadrature at geometric angle λ is
///
///   V(λ)/SNL = (1 + 2n_c) · (1 − η_in + η_in (cosh 2r − cos(2λ − θ) sinh 2r)),
///
/// so λ = θ/2 is the squeezed axis. The result is independent of the drive
/// phase and of the mean displacement.
pub fn drive_covariance(drive: &DriveState, params: &SystemParams) -> QuadCovariance {
    let prefactor = (1.0 + 2.0 * params.cavity_thermal_occupancy) * SNL_VARIANCE;
    let eta = params.input_transmittance;
    let r2 = 2.0 * drive.squeeze_r;
    let iso = 1.0 - eta + eta * r2.cosh();
    let aniso = eta * r2.sinh();
    let (s, c) = drive.squeeze_phase.sin_cos();
    QuadCovariance {
        v_xx: prefactor * (iso - aniso * c),
        v_yy: prefactor * (iso + aniso * c),
        v_xy: -prefactor * aniso * s,
    }
}

/// Heisenberg product det V = ⟨ΔX²⟩⟨ΔY²⟩ − ⟨ΔXΔY⟩²; validates positivity
/// first and asserts det ≥ 1/16 − ε for physical covariances.
pub fn heisenberg_product(cov: &QuadCovariance) -> Result<f64> {
    cov.validate()?;
    Ok(cov.det())
}
