//! Segment-averaged (Welch) periodogram of complex baseband records: Hann
//! window, 50% overlap, two-sided PSD.

use num_complex::Complex64;
use rustfft::FftPlanner;

pub(crate) struct WelchAccumulator {
    n_fft: usize,
    window: Vec<f64>,
    window_power: f64,
    power: Vec<f64>,
    pub segments: usize,
}

impl WelchAccumulator {
    pub fn new(n_fft: usize) -> Self {
        let window: Vec<f64> = (0..n_fft)
            .map(|k| {
                let x = std::f64::consts::TAU * k as f64 / n_fft as f64;
                0.5 * (1.0 - x.cos())
            })
            .collect();
        let window_power = window.iter().map(|w| w * w).sum::<f64>() / n_fft as f64;
        WelchAccumulator { n_fft, window, window_power, power: vec![0.0; n_fft], segments: 0 }
    }

    /// Accumulate all 50%-overlapped segments of one record.
    pub fn accumulate(&mut self, record: &[Complex64]) {
        let n = self.n_fft;
        if record.len() < n {
            return;
        }
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let mut buf = vec![Complex64::default(); n];
        let mut start = 0;
        while start + n <= record.len() {
            for k in 0..n {
                buf[k] = record[start + k] * self.window[k];
            }
            fft.process(&mut buf);
            for (p, b) in self.power.iter_mut().zip(&buf) {
                *p += b.norm_sqr();
            }
            self.segments += 1;
            start += n / 2;
        }
    }

    /// Two-sided PSD in (|z|² per Hz) units at sample interval `dt`,
    /// fft-shifted to ascending signed frequencies. Returns (freq_hz, psd).
    pub fn psd(&self, dt: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_fft;
        let scale = if self.segments == 0 {
            0.0
        } else {
            dt / (self.window_power * n as f64 * self.segments as f64)
        };
        let mut freq = Vec::with_capacity(n);
        let mut psd = Vec::with_capacity(n);
        let half = n / 2;
        for k in 0..n {
            // fftshift: start at −F/2
            let bin = (k + half) % n;
            let signed = if bin >= half { bin as f64 - n as f64 } else { bin as f64 };
            freq.push(signed / (n as f64 * dt));
            psd.push(self.power[bin] * scale);
        }
        (freq, psd)
    }

    /// Expected value of a Welch bin for a known true PSD: the window's
    /// spectral power kernel convolved with `true_psd`, evaluated at the bin
    /// center. `true_psd` takes a frequency in Hz.
    pub fn smear(&self, dt: f64, f_center: f64, true_psd: &dyn Fn(f64) -> f64) -> f64 {
        let n = self.n_fft;
        let bin = 1.0 / (n as f64 * dt);
        // kernel sampled at 1/8-bin resolution over ±16 bins
        let half_span = 16.0 * bin;
        let step = bin / 8.0;
        let mut num = 0.0;
        let mut den = 0.0;
        let mut nu = -half_span;
        while nu <= half_span {
            let mut acc = Complex64::default();
            for (k, w) in self.window.iter().enumerate() {
                let phase = -std::f64::consts::TAU * nu * (k as f64) * dt;
                acc += w * Complex64::from_polar(1.0, phase);
            }
            let kernel = acc.norm_sqr();
            num += kernel * true_psd(f_center + nu);
            den += kernel;
            nu += step;
        }
        num / den
    }
}
