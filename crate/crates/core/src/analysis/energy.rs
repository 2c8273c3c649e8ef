use serde::{Deserialize, Serialize};

use crate::analysis::bands::{BandAnalyzer, BandSet};
use crate::error::{Error, Result};

pub const MIN_FRAME_MS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyFrame {
    pub index: usize,
    /// Mean square of the whole frame.
    pub total: f64,
    /// Mean square attributed to each band. Sums to at most `total`.
    pub bands: Vec<f64>,
}

/// Time series of per-band energies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBalance {
    pub fs: f64,
    /// Seconds.
    pub frame_duration: f64,
    pub bands: BandSet,
    pub frames: Vec<EnergyFrame>,
}

impl EnergyBalance {
    /// Band energies averaged over all frames, weighted by frame length.
    pub fn mean(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.bands.len()];
        let n = self.frames.len().max(1) as f64;
        for f in &self.frames {
            acc.iter_mut().zip(&f.bands).for_each(|(a, b)| *a += b / n);
        }
        acc
    }
}

/// Splits `signal` into consecutive frames of `frame_ms` and measures
/// each band's mean square per frame. The last frame may be shorter.
pub fn energy_balance(
    signal: &[f64],
    fs: f64,
    bands: &BandSet,
    frame_ms: f64,
) -> Result<EnergyBalance> {
    if signal.is_empty() {
        return Err(Error::EmptySignal);
    }
    if !frame_ms.is_finite() || frame_ms < MIN_FRAME_MS {
        return Err(Error::Param {
            name: "frame_ms",
            value: frame_ms,
            reason: "frames must be at least 10 ms long",
        });
    }
    let frame_len = ((frame_ms * fs / 1000.0).round() as usize).max(1);
    let mut analyzer = BandAnalyzer::new();
    let frames = signal
        .chunks(frame_len)
        .enumerate()
        .map(|(index, chunk)| EnergyFrame {
            index,
            total: chunk.iter().map(|v| v * v).sum::<f64>() / chunk.len() as f64,
            bands: analyzer.mean_squares(chunk, fs, bands),
        })
        .collect();
    Ok(EnergyBalance {
        fs,
        frame_duration: frame_len as f64 / fs,
        bands: bands.clone(),
        frames,
    })
}
