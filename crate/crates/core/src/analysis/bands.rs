use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nominal third-octave centers from 31.5 Hz to 16 kHz.
const NOMINAL_CENTERS: [f64; 28] = [
    31.5, 40.0, 50.0, 63.0, 80.0, 100.0, 125.0, 160.0, 200.0, 250.0, 315.0, 400.0, 500.0, 630.0,
    800.0, 1000.0, 1250.0, 1600.0, 2000.0, 2500.0, 3150.0, 4000.0, 5000.0, 6300.0, 8000.0,
    10_000.0, 12_500.0, 16_000.0,
];

/// Contiguous frequency bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSet {
    edges: Vec<f64>,
    centers: Vec<f64>,
}

impl BandSet {
    /// Bands `[edges[i], edges[i+1])`; centers are geometric means.
    pub fn new(edges: Vec<f64>, fs: f64) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::Invalid("a band set needs at least two edges".into()));
        }
        if edges[0] <= 0.0 || edges[edges.len() - 1] > fs / 2.0 {
            return Err(Error::Invalid(format!(
                "band edges must lie within (0, {}] Hz",
                fs / 2.0
            )));
        }
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid(
                "band edges must be strictly increasing".into(),
            ));
        }
        let centers = edges.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect();
        Ok(Self { edges, centers })
    }

    /// Base-10 third-octave bands with nominal 31.5 Hz .. 16 kHz centers,
    /// truncated to those that fit below `fs/2`.
    pub fn third_octave(fs: f64) -> Result<Self> {
        // exact centers 1000 * 10^(k/10), k = -15..=12; edges half a band away
        let edges: Vec<f64> = (-15..=13)
            .map(|k: i32| 1000.0 * 10f64.powf((2 * k - 1) as f64 / 20.0))
            .collect();
        let fit = edges.iter().take_while(|&&e| e <= fs / 2.0).count();
        if fit < 2 {
            return Err(Error::Invalid(format!(
                "no third-octave band fits below {} Hz",
                fs / 2.0
            )));
        }
        let mut set = Self::new(edges[..fit].to_vec(), fs)?;
        set.centers = NOMINAL_CENTERS[..fit - 1].to_vec();
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Nominal center of each band in Hz.
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn bounds(&self, band: usize) -> (f64, f64) {
        (self.edges[band], self.edges[band + 1])
    }

    pub fn label(&self, band: usize) -> String {
        format_hz(self.centers[band])
    }

    pub fn band_of(&self, f: f64) -> Option<usize> {
        if f < self.edges[0] || f >= self.edges[self.edges.len() - 1] {
            return None;
        }
        Some(self.edges.partition_point(|&e| e <= f) - 1)
    }
}

pub(crate) fn format_hz(f: f64) -> String {
    if f >= 1000.0 {
        format!("{}k", f / 1000.0)
    } else {
        format!("{f}")
    }
}

/// Splits signals into band mean squares by partitioning FFT bins.
pub struct BandAnalyzer {
    planner: FftPlanner<f64>,
    cache: Option<(usize, Arc<dyn Fft<f64>>)>,
    scratch: Vec<Complex64>,
}

impl Default for BandAnalyzer {
    fn default() -> Self {
        Self::new()
    }
}

impl BandAnalyzer {
    pub fn new() -> Self {
        Self {
            planner: FftPlanner::new(),
            cache: None,
            scratch: Vec::new(),
        }
    }

    /// Mean square of `x` attributed to each band.
    ///
    /// Uses a rectangular window, so by Parseval the band values sum to at
    /// most the mean square of `x`; what falls outside every band is dropped.
    pub fn mean_squares(&mut self, x: &[f64], fs: f64, bands: &BandSet) -> Vec<f64> {
        let n = x.len();
        let mut out = vec![0.0; bands.len()];
        if n == 0 {
            return out;
        }
        let fft = match &self.cache {
            Some((len, f)) if *len == n => f.clone(),
            _ => {
                let f = self.planner.plan_fft_forward(n);
                self.cache = Some((n, f.clone()));
                f
            }
        };
        self.scratch.clear();
        self.scratch
            .extend(x.iter().map(|&v| Complex64::new(v, 0.0)));
        fft.process(&mut self.scratch);
        let norm = 1.0 / (n as f64 * n as f64);
        for (k, c) in self.scratch[..=n / 2].iter().enumerate() {
            let f = k as f64 * fs / n as f64;
            if let Some(b) = bands.band_of(f) {
                let weight = if k == 0 || 2 * k == n { 1.0 } else { 2.0 };
                out[b] += weight * c.norm_sqr() * norm;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn third_octave_layout() {
        let b = BandSet::third_octave(44_100.0).unwrap();
        assert_eq!(b.len(), 28);
        assert_eq!(b.centers()[0], 31.5);
        assert_eq!(b.centers()[27], 16_000.0);
        assert_eq!(b.label(15), "1k");
        let (lo, hi) = b.bounds(15);
        assert!((lo - 891.25).abs() < 0.01 && (hi - 1122.02).abs() < 0.01);
        for i in 0..b.len() - 1 {
            assert_eq!(b.bounds(i).1, b.bounds(i + 1).0);
        }
    }

    #[test]
    fn low_rates_truncate() {
        let b = BandSet::third_octave(8_000.0).unwrap();
        assert!(b.edges().last().unwrap() <= &4_000.0);
        assert_eq!(b.centers().last(), Some(&3150.0));
    }

    #[test]
    fn band_lookup() {
        let b = BandSet::new(vec![10.0, 20.0, 40.0], 100.0).unwrap();
        assert_eq!(b.band_of(9.9), None);
        assert_eq!(b.band_of(10.0), Some(0));
        assert_eq!(b.band_of(20.0), Some(1));
        assert_eq!(b.band_of(40.0), None);
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(BandSet::new(vec![10.0], 100.0).is_err());
        assert!(BandSet::new(vec![10.0, 60.0], 100.0).is_err());
        assert!(BandSet::new(vec![0.0, 10.0], 100.0).is_err());
        assert!(BandSet::new(vec![10.0, 5.0, 20.0], 100.0).is_err());
    }

    #[test]
    fn parseval_bound() {
        let fs = 1000.0;
        let x: Vec<f64> = (0..1000)
            .map(|i| ((i * 37) % 101) as f64 / 50.0 - 1.0)
            .collect();
        let bands = BandSet::new(vec![1.0, 100.0, 499.0], fs).unwrap();
        let e = BandAnalyzer::new().mean_squares(&x, fs, &bands);
        let total = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!(e.iter().sum::<f64>() <= total * (1.0 + 1e-12));
    }

    #[test]
    fn bin_centered_sine_lands_in_its_band() {
        let fs = 1000.0;
        let x: Vec<f64> = (0..1000)
            .map(|i| (std::f64::consts::TAU * 50.0 * i as f64 / fs).sin())
            .collect();
        let bands = BandSet::new(vec![10.0, 40.0, 60.0, 400.0], fs).unwrap();
        let e = BandAnalyzer::new().mean_squares(&x, fs, &bands);
        assert!((e[1] - 0.5).abs() < 1e-12);
        assert!(e[0] < 1e-20 && e[2] < 1e-20);
    }
}
