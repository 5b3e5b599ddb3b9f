//! Measurement noise budget in phonon units: imprecision, backaction, added
//! and total noise, sideband-cooling occupancy, and cooperativity sweeps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    drive_covariance, weighted_cooperativity, DriveState, SystemParams,
};

/// Noise contributions for one operating point, in equivalent thermal
/// phonons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBudget {
    /// Imprecision noise floor.
    pub n_imp: f64,
    /// Radiation-pressure backaction occupancy.
    pub n_ba: f64,
    /// Noise added by the detection, n_imp + n_ba.
    pub n_add: f64,
    /// Total noise n_imp + n_ba + n_th + 1/2.
    pub n_total: f64,
    /// n_imp · n_ba; bounded below by 1/16.
    pub heisenberg_product: f64,
}

/// Stokes / anti-Stokes scattering rates of the auxiliary cooling drive
/// (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoolingDrive {
    /// Stokes (heating) rate Γ₋.
    pub stokes_rate: f64,
    /// Anti-Stokes (cooling) rate Γ₊.
    pub anti_stokes_rate: f64,
}

impl CoolingDrive {
    pub fn new(stokes_rate: f64, anti_stokes_rate: f64) -> Result<Self> {
        if !(stokes_rate >= 0.0) || !(anti_stokes_rate >= 0.0) {
            return Err(Error::domain(format!(
                "scattering rates must be ≥ 0, got Γ₋={stokes_rate}, Γ₊={anti_stokes_rate}"
            )));
        }
        Ok(CoolingDrive { stokes_rate, anti_stokes_rate })
    }

    /// Ideal sideband-cooling drive: zero Stokes rate, anti-Stokes rate equal
    /// to the requested net optical damping.
    pub fn ideal(net_damping: f64) -> Result<Self> {
        CoolingDrive::new(0.0, net_damping)
    }
}

/// Imprecision noise floor in phonon units:
///
///   n_imp = (1 − η_det + 4 η_det ⟨(ΔY)²⟩) / (4 η_det C̃),
///
/// with the phase-quadrature variance from the drive covariance model.
pub fn imprecision(drive: &DriveState, params: &SystemParams) -> Result<f64> {
    if !(params.detection_efficiency > 0.0) {
        return Err(Error::domain(
            "detection efficiency is zero: no detection, imprecision diverges",
        ));
    }
    let eta = params.detection_efficiency;
    let v_yy = drive_covariance(drive, params).v_yy;
    let c_w = weighted_cooperativity(drive.cooperativity, params)?;
    Ok((1.0 - eta + 4.0 * eta * v_yy) / (4.0 * eta * c_w))
}

/// Backaction occupancy n_ba = C̃ ⟨(ΔX)²⟩.
pub fn backaction(drive: &DriveState, params: &SystemParams) -> Result<f64> {
    let v_xx = drive_covariance(drive, params).v_xx;
    let c_w = weighted_cooperativity(drive.cooperativity, params)?;
    Ok(c_w * v_xx)
}

/// Assemble the full budget for one operating point.
pub fn budget(drive: &DriveState, params: &SystemParams) -> Result<NoiseBudget> {
    let n_imp = imprecision(drive, params)?;
    let n_ba = backaction(drive, params)?;
    let n_add = n_imp + n_ba;
    Ok(NoiseBudget {
        n_imp,
        n_ba,
        n_add,
        n_total: n_add + params.damped_thermal_occupancy + 0.5,
        heisenberg_product: n_imp * n_ba,
    })
}

/// One point of a cooperativity sweep: the budget plus the derived columns
/// plotted against C (the imprecision-cooperativity product, which is
/// constant in C, and the equilibrium occupancy n_th + n_ba).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub c: f64,
    pub budget: NoiseBudget,
    /// n_imp × C (constant across the sweep for a fixed drive family).
    pub n_imp_times_c: f64,
    /// Equilibrium phonon occupancy n_th + n_ba.
    pub occupancy: f64,
}

/// The three canonical drive families swept in a noise-budget comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DriveFamily {
    Unsqueezed,
    AmplitudeSqueezed,
    PhaseSqueezed,
}

impl DriveFamily {
    pub const ALL: [DriveFamily; 3] = [
        DriveFamily::Unsqueezed,
        DriveFamily::AmplitudeSqueezed,
        DriveFamily::PhaseSqueezed,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            DriveFamily::Unsqueezed => "unsqueezed",
            DriveFamily::AmplitudeSqueezed => "amplitude_squeezed",
            DriveFamily::PhaseSqueezed => "phase_squeezed",
        }
    }

    pub fn drive(&self, r: f64, c: f64) -> Result<DriveState> {
        match self {
            DriveFamily::Unsqueezed => DriveState::unsqueezed(c),
            DriveFamily::AmplitudeSqueezed => DriveState::amplitude_squeezed(r, c),
            DriveFamily::PhaseSqueezed => DriveState::phase_squeezed(r, c),
        }
    }
}

/// Budgets for the three drive families over a common cooperativity grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CooperativitySweep {
    pub c_grid: Vec<f64>,
    pub squeeze_r: f64,
    /// Indexed like [`DriveFamily::ALL`].
    pub curves: [Vec<SweepPoint>; 3],
}

/// Sweep the noise budget over a cooperativity grid for the unsqueezed,
/// amplitude-squeezed, and phase-squeezed drive families at squeeze
/// magnitude `r`.
pub fn sweep_cooperativity(
    squeeze_r: f64,
    params: &SystemParams,
    c_grid: &[f64],
) -> Result<CooperativitySweep> {
    if c_grid.is_empty() {
        return Err(Error::domain("cooperativity grid is empty"));
    }
    if c_grid.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::domain("cooperativity grid must be strictly positive"));
    }
    if c_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("cooperativity grid must be strictly increasing"));
    }
    let mut curves: [Vec<SweepPoint>; 3] = Default::default();
    for (k, family) in DriveFamily::ALL.iter().enumerate() {
        let mut points = Vec::with_capacity(c_grid.len());
        for &c in c_grid {
            let drive = family.drive(squeeze_r, c)?;
            let b = budget(&drive, params)?;
            points.push(SweepPoint {
                c,
                budget: b,
                n_imp_times_c: b.n_imp * c,
                occupancy: params.damped_thermal_occupancy + b.n_ba,
            });
        }
        curves[k] = points;
    }
    Ok(CooperativitySweep { c_grid: c_grid.to_vec(), squeeze_r, curves })
}

/// Equilibrium phonon occupancy of the sideband-cooled oscillator for a
/// perfectly overcoupled cavity:
///
///   n_f = (Γ_m n_bath + Γ₋(1 + n_c) + Γ₊ n_c) / (Γ_m − Γ₋ + Γ₊),
///
/// where Γ₊ is the anti-Stokes (cooling) rate and Γ₋ the Stokes rate, so the
/// denominator is the intrinsic-plus-optical damping.
pub fn cooled_occupancy(params: &SystemParams, cool: &CoolingDrive) -> Result<f64> {
    let n_bath = params.bath_occupancy.ok_or_else(|| {
        Error::domain("bath_occupancy is required for cooled_occupancy")
    })?;
    let gm = params.intrinsic_mech_linewidth;
    let denom = gm - cool.stokes_rate + cool.anti_stokes_rate;
    if !(denom > 0.0) {
        return Err(Error::Instability(format!(
            "net damping Γ_m − Γ₋ + Γ₊ = {denom} is not positive; the oscillator is anti-damped"
        )));
    }
    let n_c = params.cavity_thermal_occupancy;
    Ok((gm * n_bath + cool.stokes_rate * (1.0 + n_c) + cool.anti_stokes_rate * n_c) / denom)
}

/// Result of the squeezing/cooling compatibility check
/// sinh²r · Γ₊ ≪ n_th · Γ_m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoolingToneMargin {
    /// sinh²r · Γ₊ / (n_th · Γ_m).
    pub ratio: f64,
    /// Threshold the ratio is compared against.
    pub threshold: f64,
    /// Whether the cooling drive may be treated as an ideal sideband cooler.
    pub pass: bool,
}

pub const DEFAULT_COOLING_TONE_THRESHOLD: f64 = 0.2;

/// Check that the auxiliary cooling tone's Stokes-sideband coupling to the
/// squeezing is negligible against thermal decoherence, so the cooling drive
/// can be treated as an ideal sideband cooling drive. The computed margin is
/// always reported; `threshold` defaults to
/// [`DEFAULT_COOLING_TONE_THRESHOLD`].
pub fn cooling_tone_condition(
    drive: &DriveState,
    params: &SystemParams,
    cool: &CoolingDrive,
    threshold: Option<f64>,
) -> CoolingToneMargin {
    let threshold = threshold.unwrap_or(DEFAULT_COOLING_TONE_THRESHOLD);
    let decoherence = params.damped_thermal_occupancy * params.intrinsic_mech_linewidth;
    let ratio = if decoherence > 0.0 {
        drive.squeeze_r.sinh().powi(2) * cool.anti_stokes_rate / decoherence
    } else if drive.squeeze_r == 0.0 || cool.anti_stokes_rate == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    CoolingToneMargin { ratio, threshold, pass: ratio < threshold }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SNL_VARIANCE;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::TAU;

    fn ideal_params() -> SystemParams {
        let mut p = SystemParams::table_s1();
        p.detection_efficiency = 1.0;
        p.input_transmittance = 1.0;
        p.cavity_thermal_occupancy = 0.0;
        p
    }

    #[test]
    fn imprecision_ideal_coherent() {
        // η_det = 1, coherent vacuum drive → n_imp = 1/(4C̃)
        let p = ideal_params();
        let d = DriveState::unsqueezed(70.0).unwrap();
        let c_w = weighted_cooperativity(70.0, &p).unwrap();
        assert_relative_eq!(imprecision(&d, &p).unwrap(), 1.0 / (4.0 * c_w), max_relative = 1e-12);
    }

    #[test]
    fn imprecision_table_s1_detection() {
        // η_det = 0.03, ideal coherent drive, C = 70 → 1/(0.12 C̃) ≈ 0.0480
        let p = ideal_params();
        let mut p = p;
        p.detection_efficiency = 0.03;
        let d = DriveState::unsqueezed(70.0).unwrap();
        let n = imprecision(&d, &p).unwrap();
        let c_w = weighted_cooperativity(70.0, &p).unwrap();
        assert_relative_eq!(n, 1.0 / (0.12 * c_w), max_relative = 1e-12);
        assert_relative_eq!(n, 0.04796, max_relative = 1e-3);
    }

    #[test]
    fn phase_squeezing_lowers_imprecision() {
        let p = SystemParams::table_s1();
        let base = imprecision(&DriveState::unsqueezed(70.0).unwrap(), &p).unwrap();
        let sq = imprecision(&DriveState::phase_squeezed(1.0, 70.0).unwrap(), &p).unwrap();
        assert!(sq < base, "phase squeezing must lower n_imp: {sq} vs {base}");
    }

    #[test]
    fn backaction_examples() {
        let p = SystemParams::table_s1();
        // ideal coherent: n_ba = C̃/4 ≈ 43.4 at C = 70
        let mut ideal = p.clone();
        ideal.input_transmittance = 1.0;
        ideal.cavity_thermal_occupancy = 0.0;
        let d = DriveState::unsqueezed(70.0).unwrap();
        let c_w = weighted_cooperativity(70.0, &p).unwrap();
        assert_relative_eq!(backaction(&d, &ideal).unwrap(), c_w / 4.0, max_relative = 1e-12);
        assert_relative_eq!(backaction(&d, &ideal).unwrap(), 43.44, max_relative = 1e-3);

        // r = 1 amplitude-squeezed with Table S1 impurities: C̃·v_xx ≈ 34.55
        let sq = DriveState::amplitude_squeezed(1.0, 70.0).unwrap();
        let v_xx = SNL_VARIANCE * 1.34 * (0.53 + 0.47 * (-2.0f64).exp());
        assert_relative_eq!(backaction(&sq, &p).unwrap(), c_w * v_xx, max_relative = 1e-12);
        assert_relative_eq!(backaction(&sq, &p).unwrap(), 34.55, max_relative = 1e-3);

        // C → 0 limit
        let tiny = DriveState::unsqueezed(1e-12).unwrap();
        assert!(backaction(&tiny, &p).unwrap() < 1e-9);
    }

    #[test]
    fn budget_saturates_heisenberg_for_pure_drive() {
        // η_det = 1, pure drive, θ ∈ {0, π}: n_imp·n_ba = 1/16 for all r, C
        let p = ideal_params();
        for r in [0.0, 0.3, 1.0, 1.15] {
            for c in [0.5, 10.0, 220.0] {
                for d in [
                    DriveState::amplitude_squeezed(r, c).unwrap(),
                    DriveState::phase_squeezed(r, c).unwrap(),
                ] {
                    let b = budget(&d, &p).unwrap();
                    assert_abs_diff_eq!(b.heisenberg_product, 1.0 / 16.0, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn budget_impure_exceeds_heisenberg() {
        let p = SystemParams::table_s1();
        let b = budget(&DriveState::amplitude_squeezed(1.0, 70.0).unwrap(), &p).unwrap();
        assert!(b.heisenberg_product > 1.0 / 16.0);
        // and the full-tally example: C = 70, ideal coherent drive, η_det = 3%
        let mut ideal_drive = p.clone();
        ideal_drive.input_transmittance = 1.0;
        ideal_drive.cavity_thermal_occupancy = 0.0;
        let b = budget(&DriveState::unsqueezed(70.0).unwrap(), &ideal_drive).unwrap();
        assert_relative_eq!(b.n_total, 0.048 + 43.44 + 10.0 + 0.5, max_relative = 1e-3);
        assert_relative_eq!(b.n_add, b.n_imp + b.n_ba, max_relative = 1e-15);
    }

    #[test]
    fn sweep_columns_and_ordering() {
        let p = SystemParams::table_s1();
        // at η_det = 3% the squeezed/unsqueezed total-noise crossing sits near
        // C ≈ 0.15, so the grid must straddle it
        let grid = [0.01, 0.1, 1.0, 10.0, 100.0, 300.0];
        let sweep = sweep_cooperativity(1.0, &p, &grid).unwrap();
        // n_imp × C constant per family
        for curve in &sweep.curves {
            let first = curve[0].n_imp_times_c;
            for pt in curve {
                assert_relative_eq!(pt.n_imp_times_c, first, max_relative = 1e-12);
            }
        }
        // amplitude-squeezed below unsqueezed at large C, above at small C;
        // phase-squeezed reversed
        let [uns, amp, ph] = &sweep.curves;
        let last = grid.len() - 1;
        assert!(amp[last].budget.n_total < uns[last].budget.n_total);
        assert!(ph[last].budget.n_total > uns[last].budget.n_total);
        assert!(amp[0].budget.n_total > uns[0].budget.n_total);
        assert!(ph[0].budget.n_total < uns[0].budget.n_total);
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        let p = SystemParams::table_s1();
        assert!(sweep_cooperativity(0.0, &p, &[]).is_err());
        assert!(sweep_cooperativity(0.0, &p, &[1.0, 1.0]).is_err());
        assert!(sweep_cooperativity(0.0, &p, &[-1.0, 2.0]).is_err());
    }

    #[test]
    fn ideal_added_noise_minimum() {
        // min over C of n_imp + n_ba = 1/2 at C̃ = 1 for ideal coherent drive
        let p = ideal_params();
        let denom = p.sideband_weight_denominator();
        let c_at_unit_weighted = denom / 4.0;
        let b = budget(&DriveState::unsqueezed(c_at_unit_weighted).unwrap(), &p).unwrap();
        assert_abs_diff_eq!(b.n_add, 0.5, epsilon = 1e-9);
        // nearby points are worse
        for c in [0.8 * c_at_unit_weighted, 1.2 * c_at_unit_weighted] {
            let b2 = budget(&DriveState::unsqueezed(c).unwrap(), &p).unwrap();
            assert!(b2.n_add > b.n_add);
        }
    }

    #[test]
    fn cooled_occupancy_anchor() {
        // n_bath = 95, Γ_m/2π = 22 Hz, Γ₊/2π = 178 Hz, n_c = 0 → 10.45
        let mut p = SystemParams::table_s1();
        p.cavity_thermal_occupancy = 0.0;
        let cool = CoolingDrive::ideal(TAU * 178.0).unwrap();
        let n_f = cooled_occupancy(&p, &cool).unwrap();
        assert_abs_diff_eq!(n_f, 10.45, epsilon = 1e-9);
    }

    #[test]
    fn cooled_occupancy_limits() {
        let p = SystemParams::table_s1();
        // no optical damping → n_bath
        let none = CoolingDrive::new(0.0, 0.0).unwrap();
        assert_relative_eq!(cooled_occupancy(&p, &none).unwrap(), 95.0, max_relative = 1e-12);
        // n_c > 0 raises the cooling floor
        let cool = CoolingDrive::ideal(TAU * 178.0).unwrap();
        let with_nc = cooled_occupancy(&p, &cool).unwrap();
        let mut p0 = p.clone();
        p0.cavity_thermal_occupancy = 0.0;
        let without = cooled_occupancy(&p0, &cool).unwrap();
        assert!(with_nc > without);
        // anti-damped configuration rejected
        let bad = CoolingDrive::new(TAU * 100.0, 0.0).unwrap();
        assert!(matches!(cooled_occupancy(&p, &bad), Err(Error::Instability(_))));
    }

    #[test]
    fn cooling_tone_margin_examples() {
        let mut p = SystemParams::table_s1();
        p.damped_thermal_occupancy = 10.0;
        // sinh²r = 1.5, Γ₊/2π = 230 Hz → ratio = 1.5·230/(10·22) ≈ 1.568
        let r = 1.5f64.sqrt().asinh();
        let d = DriveState::new(r, 0.0, 0.0, 70.0).unwrap();
        let cool = CoolingDrive::new(0.0, TAU * 230.0).unwrap();
        let m = cooling_tone_condition(&d, &p, &cool, None);
        assert_relative_eq!(m.ratio, 345.0 / 220.0, max_relative = 1e-9);
        assert!(!m.pass);
        // r = 0 and Γ₊ = 0 both pass trivially
        let m0 = cooling_tone_condition(&DriveState::unsqueezed(1.0).unwrap(), &p, &cool, None);
        assert_eq!(m0.ratio, 0.0);
        assert!(m0.pass);
        let m1 = cooling_tone_condition(&d, &p, &CoolingDrive::new(0.0, 0.0).unwrap(), None);
        assert_eq!(m1.ratio, 0.0);
        assert!(m1.pass);
    }

    #[test]
    fn rotating_theta_by_pi_swaps_roles() {
        let p = SystemParams::table_s1();
        let c = 50.0;
        let base = budget(&DriveState::unsqueezed(c).unwrap(), &p).unwrap();
        let amp = budget(&DriveState::amplitude_squeezed(0.8, c).unwrap(), &p).unwrap();
        let ph = budget(&DriveState::phase_squeezed(0.8, c).unwrap(), &p).unwrap();
        assert!(amp.n_ba < base.n_ba && amp.n_imp > base.n_imp);
        assert!(ph.n_ba > base.n_ba && ph.n_imp < base.n_imp);
    }

    #[test]
    fn zero_detection_efficiency_rejected() {
        let mut p = SystemParams::table_s1();
        p.detection_efficiency = 0.0;
        assert!(imprecision(&DriveState::unsqueezed(1.0).unwrap(), &p).is_err());
    }
}
