//! Independent time-domain stochastic oracle: integrates the linearized
//! Langevin equations with synthesized correlated (squeezed) input noise and
//! estimates output PSDs by segment-averaged periodograms, cross-validating
//! the analytic spectra.
//!
//! The full model propagates the cavity and mechanical quadratures plus two
//! output integrators with the exact discrete-time map of the linear SDE:
//! the drift propagator is the matrix exponential over one step and the
//! noise increment covariance is the matched Van Loan integral, so the state
//! distribution at the sample times is exact for any stable step (the step
//! bound below only controls the fidelity of the bin-averaged output).
//! The detected output is streamed through digital demodulation at the
//! mechanical frequency and two boxcar decimation stages (512·16), leaving
//! a complex baseband record at ~87 kHz on which Welch periodograms run.
//!
//! Everything is seeded and deterministic: per-trajectory generators are
//! derived from the master seed, and trajectory results are reduced in index
//! order regardless of the parallel schedule.

mod baseband;
pub mod verify;
pub(crate) mod welch;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{drive_covariance, DriveState, SystemParams};
use crate::numeric::{cholesky_psd, expm, Mat};
use crate::spectra::{Spectrum, SpectrumKind};

/// First- and second-stage boxcar decimation factors applied to the
/// demodulated full-rate record.
pub const DECIMATION: (usize, usize) = (512, 16);

/// Which integrator backs [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ModelKind {
    /// Full cavity + mechanics quadrature SDE at the cavity-resolving step.
    #[default]
    Full,
    /// Adiabatic fast path: cavity eliminated, complex mechanical envelope
    /// and output feed-through propagated directly at the decimated rate.
    /// Valid for κ ≫ Γ; cross-checked against the full model by
    /// [`verify::check_fast_path`].
    AdiabaticBaseband,
}

/// Time-domain simulation configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Integration step (s); must resolve the cavity: dt·κ/2 < 0.1 and
    /// dt·Ω_m < 0.3.
    pub dt: f64,
    /// Retained signal duration per trajectory (s), after burn-in;
    /// must be ≥ 100/Γ.
    pub duration: f64,
    pub n_trajectories: u32,
    pub seed: u64,
    /// Welch FFT length on the decimated record (power of two).
    pub segment_length: usize,
    pub model: ModelKind,
}

impl SimConfig {
    /// Step at ~98% of the stability margins, defaults sized for a quick
    /// but meaningful run.
    pub fn for_params(params: &SystemParams) -> Self {
        let dt = (0.098 / (params.cavity_linewidth / 2.0)).min(0.29 / params.mech_freq);
        SimConfig {
            dt,
            duration: 0.25,
            n_trajectories: 8,
            seed: 1,
            segment_length: 1024,
            model: ModelKind::Full,
        }
    }

    pub fn validate(&self, params: &SystemParams) -> Result<()> {
        if !(self.dt > 0.0) || self.dt * params.cavity_linewidth / 2.0 >= 0.1 {
            return Err(Error::domain(format!(
                "dt = {} must satisfy dt·κ/2 < 0.1 (limit {:.3e} s)",
                self.dt,
                0.1 / (params.cavity_linewidth / 2.0)
            )));
        }
        if self.dt * params.mech_freq >= 0.3 {
            return Err(Error::domain(format!(
                "dt = {} must satisfy dt·Ω_m < 0.3 (limit {:.3e} s)",
                self.dt,
                0.3 / params.mech_freq
            )));
        }
        let min_duration = 100.0 / params.total_mech_linewidth;
        if self.duration < min_duration {
            return Err(Error::domain(format!(
                "duration {} s below the spectral-resolution minimum 100/Γ = {:.3} s",
                self.duration, min_duration
            )));
        }
        if self.n_trajectories == 0 {
            return Err(Error::domain("need at least one trajectory"));
        }
        if !self.segment_length.is_power_of_two() || !(64..=65536).contains(&self.segment_length) {
            return Err(Error::domain(format!(
                "segment_length {} must be a power of two in [64, 65536]",
                self.segment_length
            )));
        }
        let samples = (self.duration * self.decimated_rate()) as usize;
        if samples < self.segment_length {
            return Err(Error::domain(format!(
                "duration yields {} decimated samples, below one segment of {}",
                samples, self.segment_length
            )));
        }
        Ok(())
    }

    /// Sample rate of the decimated baseband record.
    pub fn decimated_rate(&self) -> f64 {
        1.0 / (self.dt * (DECIMATION.0 * DECIMATION.1) as f64)
    }
}

/// One simulated trajectory: decimated complex baseband records of both
/// output quadratures and of the mechanical envelope, plus exact full-rate
/// second-moment accumulators.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub seed: u64,
    /// Output amplitude-quadrature baseband (demodulated at Ω_m).
    pub output_x: Vec<Complex64>,
    /// Output phase-quadrature baseband.
    pub output_y: Vec<Complex64>,
    /// Mechanical envelope (u + iv rotated to the frame of Ω_m).
    pub mech_envelope: Vec<Complex64>,
    sum_quad_sq: f64,
    quad_samples: u64,
}

impl Trajectory {
    /// Phonon-occupancy estimate from the mechanical quadrature second
    /// moments: ⟨u² + v²⟩ = n + 1/2.
    pub fn mech_occupancy(&self) -> f64 {
        self.sum_quad_sq / self.quad_samples as f64 - 0.5
    }
}

/// A batch of independent trajectories under one configuration.
#[derive(Debug, Clone)]
pub struct TrajectoryBatch {
    pub drive: DriveState,
    pub params: SystemParams,
    pub config: SimConfig,
    /// Decimated sample rate (Hz).
    pub sample_rate: f64,
    /// Hash of (drive, params, config) identifying the run.
    pub config_hash: u64,
    pub trajectories: Vec<Trajectory>,
}

impl TrajectoryBatch {
    /// Pooled occupancy estimate over all trajectories.
    pub fn mech_occupancy(&self) -> f64 {
        let (s, n) = self
            .trajectories
            .iter()
            .fold((0.0, 0u64), |(s, n), t| (s + t.sum_quad_sq, n + t.quad_samples));
        s / n as f64 - 0.5
    }
}

/// Deterministic per-stream seed derivation (splitmix64 of the master seed
/// xored with a stream tag).
pub(crate) fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash_f64(h: &mut u64, v: f64) {
    *h = derive_seed(*h, v.to_bits());
}

fn config_hash(drive: &DriveState, params: &SystemParams, config: &SimConfig) -> u64 {
    let mut h = 0xC0FF_EE00_5EED_1234u64;
    for v in [
        drive.squeeze_r,
        drive.squeeze_phase,
        drive.cooperativity,
        params.cavity_linewidth,
        params.mech_freq,
        params.total_mech_linewidth,
        params.damped_thermal_occupancy,
        params.cavity_thermal_occupancy,
        params.input_transmittance,
        params.detection_efficiency,
        config.dt,
        config.duration,
        config.n_trajectories as f64,
        config.segment_length as f64,
    ] {
        hash_f64(&mut h, v);
    }
    h = derive_seed(h, config.seed);
    h = derive_seed(h, matches!(config.model, ModelKind::AdiabaticBaseband) as u64);
    h
}

/// Generator of white quadrature-noise sample pairs with per-sample
/// covariance equal to the drive covariance.
pub struct InputNoiseSynth {
    l: [[f64; 2]; 2],
    rng: ChaCha8Rng,
}

/// Build the drive-quadrature noise generator realizing the squeezed
/// thermal covariance (white over the simulated band). Seeds reproduce
/// streams exactly.
pub fn synthesize_input_noise(
    drive: &DriveState,
    params: &SystemParams,
    config: &SimConfig,
) -> Result<InputNoiseSynth> {
    params.validate()?;
    let cov = drive_covariance(drive, params);
    cov.validate()?;
    let mut m = Mat::zeros(2);
    m[(0, 0)] = cov.v_xx;
    m[(0, 1)] = cov.v_xy;
    m[(1, 0)] = cov.v_xy;
    m[(1, 1)] = cov.v_yy;
    let l = cholesky_psd(&m);
    Ok(InputNoiseSynth {
        l: [[l[(0, 0)], 0.0], [l[(1, 0)], l[(1, 1)]]],
        rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0x1299_u64)),
    })
}

impl InputNoiseSynth {
    /// Next correlated (amplitude, phase) quadrature noise pair.
    pub fn next_sample(&mut self) -> (f64, f64) {
        let g0: f64 = StandardNormal.sample(&mut self.rng);
        let g1: f64 = StandardNormal.sample(&mut self.rng);
        (self.l[0][0] * g0, self.l[1][0] * g0 + self.l[1][1] * g1)
    }
}

/// Discrete-time propagator pieces for the 6-state full model:
/// state = [X_a, Y_a, u, v, J_x, J_y], sources = [X_in, Y_in, u_in, v_in].
struct FullStepper {
    /// exp(A dt), columns for the four persistent states only (the output
    /// integrators reset to zero at every step).
    phi: [[f64; 4]; 6],
    /// Noise-increment factor (rank 4).
    l: [[f64; 4]; 6],
}

fn full_stepper(drive: &DriveState, params: &SystemParams, dt: f64) -> FullStepper {
    let kappa = params.cavity_linewidth;
    let gamma = params.total_mech_linewidth;
    let omega_m = params.mech_freq;
    let g = (drive.cooperativity * kappa * gamma / 4.0).sqrt();
    let cov = drive_covariance(drive, params);
    let m_th = (2.0 * params.damped_thermal_occupancy + 1.0) / 4.0;

    let mut a = Mat::zeros(6);
    a[(0, 0)] = -kappa / 2.0;
    a[(1, 1)] = -kappa / 2.0;
    a[(1, 2)] = -2.0 * g;
    a[(2, 2)] = -gamma / 2.0;
    a[(2, 3)] = omega_m;
    a[(3, 0)] = -2.0 * g;
    a[(3, 2)] = -omega_m;
    a[(3, 3)] = -gamma / 2.0;
    a[(4, 0)] = -kappa.sqrt();
    a[(5, 1)] = -kappa.sqrt();

    // B S Bᵀ with B the source routing and S the source intensities
    let mut b = Mat::zeros(6);
    // (6×4 occupying the left block of a 6×6 for reuse of Mat)
    b[(0, 0)] = kappa.sqrt();
    b[(1, 1)] = kappa.sqrt();
    b[(2, 2)] = gamma.sqrt();
    b[(3, 3)] = gamma.sqrt();
    b[(4, 0)] = 1.0;
    b[(5, 1)] = 1.0;
    let mut s = Mat::zeros(6);
    s[(0, 0)] = cov.v_xx;
    s[(0, 1)] = cov.v_xy;
    s[(1, 0)] = cov.v_xy;
    s[(1, 1)] = cov.v_yy;
    s[(2, 2)] = m_th;
    s[(3, 3)] = m_th;
    let n_c = b.matmul(&s).matmul(&b.transpose());

    let (phi_m, q) = discretize(&a, &n_c, dt);
    let l_m = cholesky_psd(&q);
    let mut phi = [[0.0; 4]; 6];
    let mut l = [[0.0; 4]; 6];
    for i in 0..6 {
        for j in 0..4 {
            phi[i][j] = phi_m[(i, j)];
            l[i][j] = l_m[(i, j)];
        }
    }
    FullStepper { phi, l }
}

/// Van Loan discretization of dx = A x dt + dW, ⟨dW dWᵀ⟩ = N dt:
/// returns (Φ, Q) with Φ = e^{A dt} and Q = ∫₀^dt e^{As} N e^{Aᵀs} ds.
pub(crate) fn discretize(a: &Mat, n: &Mat, dt: f64) -> (Mat, Mat) {
    let dim = a.n;
    let mut h = Mat::zeros(2 * dim);
    for i in 0..dim {
        for j in 0..dim {
            h[(i, j)] = -a[(i, j)] * dt;
            h[(i, j + dim)] = n[(i, j)] * dt;
            h[(i + dim, j + dim)] = a[(j, i)] * dt;
        }
    }
    let e = expm(&h);
    let mut f22t = Mat::zeros(dim);
    let mut g12 = Mat::zeros(dim);
    for i in 0..dim {
        for j in 0..dim {
            f22t[(i, j)] = e[(j + dim, i + dim)];
            g12[(i, j)] = e[(i, j + dim)];
        }
    }
    let q = f22t.matmul(&g12);
    // symmetrize rounding
    let mut q_sym = Mat::zeros(dim);
    for i in 0..dim {
        for j in 0..dim {
            q_sym[(i, j)] = 0.5 * (q[(i, j)] + q[(j, i)]);
        }
    }
    (f22t, q_sym)
}

/// Integrate the coupled linear Langevin equations, returning decimated
/// baseband records per trajectory. Dispatches on `config.model`.
pub fn integrate(
    drive: &DriveState,
    params: &SystemParams,
    config: &SimConfig,
) -> Result<TrajectoryBatch> {
    params.validate()?;
    config.validate(params)?;
    let trajectories: Vec<Result<Trajectory>> = (0..config.n_trajectories)
        .into_par_iter()
        .map(|idx| {
            let seed = derive_seed(config.seed, 0x7A60_0000 + idx as u64);
            match config.model {
                ModelKind::Full => integrate_full_one(drive, params, config, seed),
                ModelKind::AdiabaticBaseband => {
                    baseband::integrate_baseband_one(drive, params, config, seed)
                }
            }
        })
        .collect();
    let trajectories: Result<Vec<Trajectory>> = trajectories.into_iter().collect();
    Ok(TrajectoryBatch {
        drive: *drive,
        params: params.clone(),
        config: *config,
        sample_rate: config.decimated_rate(),
        config_hash: config_hash(drive, params, config),
        trajectories: trajectories?,
    })
}

fn integrate_full_one(
    drive: &DriveState,
    params: &SystemParams,
    config: &SimConfig,
    seed: u64,
) -> Result<Trajectory> {
    let stepper = full_stepper(drive, params, config.dt);
    let phi = &stepper.phi;
    let l = &stepper.l;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let dt = config.dt;
    let inv_dt = 1.0 / dt;
    let (r1, r2) = DECIMATION;
    let block = r1 * r2;
    let n_samples =
        ((config.duration * config.decimated_rate()).ceil() as usize).max(config.segment_length);
    let burn_blocks = ((10.0 / params.total_mech_linewidth) / (dt * block as f64)).ceil() as usize;
    let total_blocks = burn_blocks + n_samples;

    // demodulation phasor e^{-iΩ_m t}, renormalized every stage-1 bin
    let (rot_c, rot_s) = {
        let a = params.mech_freq * dt;
        (a.cos(), a.sin())
    };
    let mut ph_re = 1.0f64;
    let mut ph_im = 0.0f64;

    let mut x = [0.0f64; 4];
    let mut out_x = Vec::with_capacity(n_samples);
    let mut out_y = Vec::with_capacity(n_samples);
    let mut mech = Vec::with_capacity(n_samples);
    let mut sum_quad_sq = 0.0f64;
    let mut quad_samples = 0u64;
    let inv_r1 = 1.0 / r1 as f64;
    let inv_r2 = 1.0 / r2 as f64;

    for blk in 0..total_blocks {
        let retained = blk >= burn_blocks;
        let mut acc2 = [Complex64::default(); 3];
        for _ in 0..r2 {
            let mut acc1 = [Complex64::default(); 3];
            for _ in 0..r1 {
                let xi: [f64; 4] = [
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                ];
                let mut y = [0.0f64; 6];
                for i in 0..6 {
                    let mut acc = 0.0;
                    for j in 0..4 {
                        acc += phi[i][j] * x[j] + l[i][j] * xi[j];
                    }
                    y[i] = acc;
                }
                x = [y[0], y[1], y[2], y[3]];
                // bin-averaged output quadratures, demodulated at Ω_m
                let qx = y[4] * inv_dt;
                let qy = y[5] * inv_dt;
                acc1[0] += Complex64::new(qx * ph_re, qx * ph_im);
                acc1[1] += Complex64::new(qy * ph_re, qy * ph_im);
                // mechanical envelope (u + iv)·e^{+iΩ_m t}
                let (u, v) = (x[2], x[3]);
                acc1[2] += Complex64::new(u * ph_re + v * ph_im, v * ph_re - u * ph_im);
                if retained {
                    sum_quad_sq += u * u + v * v;
                }
                // phasor recurrence for e^{-iΩ_m t}
                let nr = ph_re * rot_c + ph_im * rot_s;
                let ni = ph_im * rot_c - ph_re * rot_s;
                ph_re = nr;
                ph_im = ni;
            }
            // renormalize the phasor once per stage-1 bin
            let norm = (ph_re * ph_re + ph_im * ph_im).sqrt();
            ph_re /= norm;
            ph_im /= norm;
            for k in 0..3 {
                acc2[k] += acc1[k] * inv_r1;
            }
        }
        if retained {
            quad_samples += block as u64;
            let zx = acc2[0] * inv_r2;
            let zy = acc2[1] * inv_r2;
            if !zx.re.is_finite() || !zy.re.is_finite() {
                return Err(Error::Integration(format!(
                    "state diverged after {:.3e} s at dt = {:.3e} s",
                    (blk * block) as f64 * dt,
                    dt
                )));
            }
            out_x.push(zx);
            out_y.push(zy);
            mech.push(acc2[2] * inv_r2);
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

/// Welch estimate of the detected output PSD at homodyne angle
/// `detect_angle`, normalized to the shot-noise floor convention of the
/// analytic spectra. Detection inefficiency mixes in seeded vacPure noise at
/// the decimated rate (exact for white vacuum). Error bars are the standard
/// Welch per-bin uncertainty; fewer than 8 segments sets the
/// `low_statistics` flag.
pub fn estimate_psd(batch: &TrajectoryBatch, detect_angle: f64) -> Result<Spectrum> {
    if batch.trajectories.is_empty() {
        return Err(Error::domain("batch has no trajectories"));
    }
    let n_fft = batch.config.segment_length;
    let dt2 = 1.0 / batch.sample_rate;
    let eta = batch.params.detection_efficiency;
    let (sa, ca) = detect_angle.sin_cos();
    let sig = eta.sqrt();
    let vac = ((1.0 - eta) * batch.sample_rate / 4.0 / 2.0).sqrt(); // per component

    let mut acc = welch::WelchAccumulator::new(n_fft);
    for traj in &batch.trajectories {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            traj.seed,
            0xDE7E_C700 ^ detect_angle.to_bits(),
        ));
        let record: Vec<Complex64> = traj
            .output_x
            .iter()
            .zip(&traj.output_y)
            .map(|(zx, zy)| {
                let w_re: f64 = StandardNormal.sample(&mut rng);
                let w_im: f64 = StandardNormal.sample(&mut rng);
                sig * (zx * ca + zy * sa) + Complex64::new(vac * w_re, vac * w_im)
            })
            .collect();
        acc.accumulate(&record);
    }
    let segments = acc.segments;
    if segments == 0 {
        return Err(Error::domain("records shorter than one Welch segment"));
    }
    let (freq, raw) = acc.psd(dt2);
    let psd: Vec<f64> = raw.iter().map(|s| s / crate::model::SNL_VARIANCE).collect();
    // far-floor estimate from the outer half of the band
    let nyquist = batch.sample_rate / 2.0;
    let far: Vec<f64> = freq
        .iter()
        .zip(&psd)
        .filter(|(f, _)| f.abs() >= 0.25 * nyquist)
        .map(|(_, p)| *p)
        .collect();
    let floor = far.iter().sum::<f64>() / far.len().max(1) as f64;
    let rel = (1.2f64 / segments as f64).sqrt();
    let errors: Vec<f64> = psd.iter().map(|p| p * rel).collect();
    Ok(Spectrum {
        offsets_hz: freq,
        psd,
        quadrature_angle: detect_angle,
        kind: SpectrumKind::Homodyne,
        floor,
        errors: Some(errors),
        low_statistics: segments < 8,
    })
}

/// Number of Welch segments a batch contributes at its segment length.
pub fn total_segments(batch: &TrajectoryBatch) -> usize {
    let n = batch.config.segment_length;
    batch
        .trajectories
        .iter()
        .map(|t| if t.output_x.len() < n { 0 } else { (t.output_x.len() - n) / (n / 2) + 1 })
        .sum()
}
