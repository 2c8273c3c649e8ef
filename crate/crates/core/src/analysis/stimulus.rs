//! Deterministic test signals.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;

pub fn sine(freq: f64, fs: f64, len: usize, amplitude: f64) -> Vec<f64> {
    (0..len)
        .map(|n| amplitude * (std::f64::consts::TAU * freq * n as f64 / fs).sin())
        .collect()
}

/// Uniform white noise in `[-amplitude, amplitude)`.
pub fn white_noise(len: usize, amplitude: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| amplitude * rng.random_range(-1.0..1.0))
        .collect()
}

/// Pink noise with an exact `1/f` power spectrum and random phases,
/// scaled to the requested RMS.
///
/// Built in the frequency domain so every band carries its nominal energy;
/// the signal is periodic over `len` samples.
pub fn pink_noise(len: usize, rms: f64, seed: u64) -> Vec<f64> {
    if len < 2 {
        return vec![0.0; len];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = vec![Complex64::new(0.0, 0.0); len];
    let half = len / 2;
    for k in 1..=half {
        let amp = 1.0 / (k as f64).sqrt();
        if 2 * k == len {
            spec[k] = Complex64::new(amp, 0.0);
        } else {
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            spec[k] = Complex64::from_polar(amp, phase);
            spec[len - k] = spec[k].conj();
        }
    }
    FftPlanner::new().plan_fft_inverse(len).process(&mut spec);
    let mut x: Vec<f64> = spec.iter().map(|c| c.re).collect();
    let cur = (x.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    x.iter_mut().for_each(|v| *v *= rms / cur);
    x
}
