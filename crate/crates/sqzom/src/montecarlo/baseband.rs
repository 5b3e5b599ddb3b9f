//! Adiabatic-elimination fast path: with κ ≫ Γ the cavity follows the
//! mechanics instantly on the mechanical timescale, so the detected output
//! near the upper sideband reduces to a complex mechanical envelope (an
//! Ornstein–Uhlenbeck mode driven by the amplitude-quadrature noise and the
//! thermal bath) plus the directly reflected input noise. Propagating that
//! reduced system at the decimated rate reproduces the same baseband records
//! as the full model at ~1e4× lower cost.
//!
//! Near the upper sideband the stationary input quadrature noise becomes a
//! pair of proper complex white envelopes whose only structure is the
//! Hermitian covariance [[v_xx, v_xy], [v_xy, v_yy]]; the squeezing's
//! sideband correlations enter through the cross element, which is what
//! makes the envelope force on the mechanics interfere with the reflected
//! noise (the Fano shape) exactly as in the analytic model.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{drive_covariance, DriveState, SystemParams};
use crate::numeric::{cholesky_psd, Mat};

use super::{discretize, SimConfig, Trajectory};

/// One baseband trajectory at the decimated rate.
/// State: [β_re, β_im, Jx_re, Jx_im, Jy_re, Jy_im];
/// sources: [x̃_re, x̃_im, ỹ_re, ỹ_im, μ_re, μ_im].
pub(super) fn integrate_baseband_one(
    drive: &DriveState,
    params: &SystemParams,
    config: &SimConfig,
    seed: u64,
) -> Result<Trajectory> {
    let kappa = params.cavity_linewidth;
    let gamma = params.total_mech_linewidth;
    let omega_m = params.mech_freq;
    let g = (drive.cooperativity * kappa * gamma / 4.0).sqrt();
    let cov = drive_covariance(drive, params);
    let m_th = params.damped_thermal_occupancy + 0.5;

    // Time-domain propagation + FFT analysis fix the e^{+i2πft} sign
    // convention, the conjugate of the response-function convention used by
    // the analytic spectra; the frozen coefficients are conjugated
    // accordingly (a baseband envelope obeying β' = −(Γ/2)β + F responds as
    // 1/(Γ/2 + i2πf), i.e. i·χ_m*).
    let chi_c = Complex64::new(kappa / 2.0, omega_m).inv();
    // carrier reflection, |A| = 1
    let a_refl = Complex64::new(1.0, 0.0) - kappa * chi_c;
    // transduction of the mechanical envelope into the output phase
    // quadrature: √κ·g·χ_c
    let t_coef = kappa.sqrt() * g * chi_c;
    // radiation-pressure force of the amplitude-noise envelope on the
    // mechanics: +2i·g·√κ·χ_c; |f|²v_xx/Γ = C̃·v_xx, and T·f carries the
    // phase that interferes with the reflected noise (the Fano sign)
    let f_coef = Complex64::new(0.0, 2.0) * g * kappa.sqrt() * chi_c;

    let mut a = Mat::zeros(6);
    a[(0, 0)] = -gamma / 2.0;
    a[(1, 1)] = -gamma / 2.0;
    a[(4, 0)] = t_coef.re;
    a[(4, 1)] = -t_coef.im;
    a[(5, 0)] = t_coef.im;
    a[(5, 1)] = t_coef.re;

    let mut b = Mat::zeros(6);
    b[(0, 0)] = f_coef.re;
    b[(0, 1)] = -f_coef.im;
    b[(0, 4)] = gamma.sqrt();
    b[(1, 0)] = f_coef.im;
    b[(1, 1)] = f_coef.re;
    b[(1, 5)] = gamma.sqrt();
    b[(2, 0)] = a_refl.re;
    b[(2, 1)] = -a_refl.im;
    b[(3, 0)] = a_refl.im;
    b[(3, 1)] = a_refl.re;
    b[(4, 2)] = a_refl.re;
    b[(4, 3)] = -a_refl.im;
    b[(5, 2)] = a_refl.im;
    b[(5, 3)] = a_refl.re;

    // proper complex white sources: half the quadrature intensity per
    // real component, cross-covariance only between matching components
    let mut s = Mat::zeros(6);
    s[(0, 0)] = cov.v_xx / 2.0;
    s[(1, 1)] = cov.v_xx / 2.0;
    s[(2, 2)] = cov.v_yy / 2.0;
    s[(3, 3)] = cov.v_yy / 2.0;
    s[(0, 2)] = cov.v_xy / 2.0;
    s[(2, 0)] = cov.v_xy / 2.0;
    s[(1, 3)] = cov.v_xy / 2.0;
    s[(3, 1)] = cov.v_xy / 2.0;
    s[(4, 4)] = m_th / 2.0;
    s[(5, 5)] = m_th / 2.0;
    let n_c = b.matmul(&s).matmul(&b.transpose());

    let dt2 = 1.0 / config.decimated_rate();
    let (phi_m, q) = discretize(&a, &n_c, dt2);
    let l_m = cholesky_psd(&q);
    // only the envelope columns of Φ matter: J resets every step
    let mut phi = [[0.0f64; 2]; 6];
    let mut l = [[0.0f64; 6]; 6];
    for i in 0..6 {
        for j in 0..2 {
            phi[i][j] = phi_m[(i, j)];
        }
        for j in 0..6 {
            l[i][j] = l_m[(i, j)];
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_samples =
        ((config.duration * config.decimated_rate()).ceil() as usize).max(config.segment_length);
    let burn = ((10.0 / gamma) / dt2).ceil() as usize;
    let inv_dt2 = 1.0 / dt2;

    let mut beta = [0.0f64; 2];
    let mut out_x = Vec::with_capacity(n_samples);
    let mut out_y = Vec::with_capacity(n_samples);
    let mut mech = Vec::with_capacity(n_samples);
    let mut sum_quad_sq = 0.0;
    let mut quad_samples = 0u64;

    for step in 0..(burn + n_samples) {
        let xi: [f64; 6] = [
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        ];
        let mut y = [0.0f64; 6];
        for i in 0..6 {
            let mut acc = phi[i][0] * beta[0] + phi[i][1] * beta[1];
            for j in 0..6 {
                acc += l[i][j] * xi[j];
            }
            y[i] = acc;
        }
        beta = [y[0], y[1]];
        if step >= burn {
            if !beta[0].is_finite() {
                return Err(Error::Integration(format!(
                    "baseband state diverged after {:.3e} s at dt = {:.3e} s",
                    step as f64 * dt2,
                    dt2
                )));
            }
            out_x.push(Complex64::new(y[2], y[3]) * inv_dt2);
            out_y.push(Complex64::new(y[4], y[5]) * inv_dt2);
            mech.push(Complex64::new(beta[0], beta[1]));
            sum_quad_sq += beta[0] * beta[0] + beta[1] * beta[1];
            quad_samples += 1;
        }
    }

    Ok(Trajectory {
        seed,
        output_x: out_x,
        output_y: out_y,
        mech_envelope: mech,
        sum_quad_sq,
        quad_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::budget;
    use crate::montecarlo::{estimate_psd, integrate, ModelKind};
    use approx::assert_relative_eq;

    fn fast_config(params: &SystemParams, duration: f64) -> SimConfig {
        let mut cfg = SimConfig::for_params(params);
        cfg.model = ModelKind::AdiabaticBaseband;
        cfg.duration = duration;
        cfg
    }

    #[test]
    fn thermal_occupancy_tight() {
        let p = SystemParams::table_s1();
        let d = DriveState::unsqueezed(1e-12).unwrap();
        let cfg = fast_config(&p, 30.0);
        let batch = integrate(&d, &p, &cfg).unwrap();
        assert_relative_eq!(batch.mech_occupancy(), p.damped_thermal_occupancy, max_relative = 0.05);
    }

    #[test]
    fn backaction_occupancy_matches_budget() {
        // C = 70 unsqueezed: occupancy = n_th + C̃/4·(1+2n_c) within 5%
        let p = SystemParams::table_s1();
        let d = DriveState::unsqueezed(70.0).unwrap();
        let cfg = fast_config(&p, 30.0);
        let batch = integrate(&d, &p, &cfg).unwrap();
        let b = budget::budget(&d, &p).unwrap();
        assert_relative_eq!(
            batch.mech_occupancy(),
            p.damped_thermal_occupancy + b.n_ba,
            max_relative = 0.05
        );
    }

    #[test]
    fn squeezing_ratio_matches_drive_variances() {
        // amplitude vs phase squeezing at equal r: backaction occupancy
        // ratio equals the ratio of the drive amplitude variances
        let p = SystemParams::table_s1();
        let cfg = fast_config(&p, 40.0);
        let amp = DriveState::amplitude_squeezed(1.0, 70.0).unwrap();
        let ph = DriveState::phase_squeezed(1.0, 70.0).unwrap();
        let n_amp =
            integrate(&amp, &p, &cfg).unwrap().mech_occupancy() - p.damped_thermal_occupancy;
        let n_ph = integrate(&ph, &p, &cfg).unwrap().mech_occupancy() - p.damped_thermal_occupancy;
        let v_amp = drive_covariance(&amp, &p).v_xx;
        let v_ph = drive_covariance(&ph, &p).v_xx;
        assert_relative_eq!(n_amp / n_ph, v_amp / v_ph, max_relative = 0.08);
    }

    #[test]
    fn backaction_scales_with_coupling_squared() {
        // scaling g by s (C by s²) scales the backaction occupancy by s²
        let p = SystemParams::table_s1();
        let c0 = 70.0;
        let mut points = Vec::new();
        for s in [0.5f64, 1.0, 2.0] {
            let d = DriveState::unsqueezed(c0 * s * s).unwrap();
            let mut cfg = fast_config(&p, 60.0);
            cfg.seed = 17;
            let batch = integrate(&d, &p, &cfg).unwrap();
            points.push((s, batch.mech_occupancy() - p.damped_thermal_occupancy));
        }
        let n1 = points[1].1;
        for (s, n) in points {
            assert_relative_eq!(n, n1 * s * s, max_relative = 0.05);
        }
    }

    #[test]
    fn fano_asymmetry_sign_matches_analytic() {
        let p = SystemParams::table_s1();
        let d = DriveState::new(1.0, std::f64::consts::FRAC_PI_2, 0.0, 70.0).unwrap();
        let cfg = fast_config(&p, 60.0);
        let batch = integrate(&d, &p, &cfg).unwrap();
        let mut spec = estimate_psd(&batch, std::f64::consts::FRAC_PI_2).unwrap();
        // restrict to ±10Γ for the asymmetry statistic
        let band = 10.0 * p.total_mech_linewidth / std::f64::consts::TAU;
        let keep: Vec<(f64, f64)> = spec
            .offsets_hz
            .iter()
            .zip(&spec.psd)
            .filter(|(f, _)| f.abs() <= band)
            .map(|(f, p)| (*f, *p))
            .collect();
        spec.offsets_hz = keep.iter().map(|k| k.0).collect();
        spec.psd = keep.iter().map(|k| k.1).collect();
        spec.errors = None;
        let analytic = crate::spectra::output_psd(
            &d,
            &p,
            &spec.offsets_hz,
            std::f64::consts::FRAC_PI_2,
        )
        .unwrap();
        assert_eq!(
            spec.asymmetry_metric().signum(),
            analytic.asymmetry_metric().signum()
        );
        assert!(analytic.asymmetry_metric().abs() > 1e-3);
    }
}
