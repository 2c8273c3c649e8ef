use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::bands::{BandAnalyzer, BandSet};
use crate::error::{Error, Result};
use crate::filters::{classical_directivity, directivity_magnitude, IntegratorMode};
use crate::geometry::{MicParams, ScenePose};
use crate::render::{render_samples, EngineOptions, Scene};

/// Band mean squares below this count as silence.
pub const BAND_FLOOR: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternKind {
    /// `|H_dir|` evaluated at discrete frequencies.
    Monochromatic,
    /// Per-band RMS of an engine render, normalized by the omni render.
    Subband,
}

/// Directivity magnitudes over angles x frequencies x distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternTable {
    pub kind: PatternKind,
    /// Radians.
    pub angles: Vec<f64>,
    /// Hz; nominal band centers for subband tables.
    pub frequencies: Vec<f64>,
    /// Present for subband tables.
    pub band_edges: Option<Vec<f64>>,
    /// Meters.
    pub distances: Vec<f64>,
    /// Row-major `[angle][frequency][distance]`.
    pub magnitude: Vec<f64>,
    pub integrator: IntegratorMode,
    pub params: MicParams,
}

impl PatternTable {
    pub fn get(&self, angle: usize, freq: usize, dist: usize) -> f64 {
        let (nf, nd) = (self.frequencies.len(), self.distances.len());
        self.magnitude[(angle * nf + freq) * nd + dist]
    }

    /// Magnitudes over angle for one frequency and distance.
    pub fn slice(&self, freq: usize, dist: usize) -> Vec<f64> {
        (0..self.angles.len())
            .map(|a| self.get(a, freq, dist))
            .collect()
    }

    pub(crate) fn check_shape(&self) -> Result<()> {
        if self.angles.is_empty() {
            return Err(Error::Invalid(
                "pattern table has an empty angle grid".into(),
            ));
        }
        if self.frequencies.is_empty() || self.distances.is_empty() {
            return Err(Error::Invalid(
                "pattern table has an empty frequency or distance grid".into(),
            ));
        }
        let want = self.angles.len() * self.frequencies.len() * self.distances.len();
        if self.magnitude.len() != want {
            return Err(Error::Invalid(format!(
                "pattern table holds {} magnitudes, expected {want}",
                self.magnitude.len()
            )));
        }
        Ok(())
    }
}

/// `n` equally spaced angles over a full turn, starting at 0.
pub fn angle_grid(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| std::f64::consts::TAU * i as f64 / n as f64)
        .collect()
}

/// 72 angles in 5 degree steps.
pub fn default_angles() -> Vec<f64> {
    angle_grid(72)
}

fn check_angles(angles: &[f64]) -> Result<()> {
    if angles.is_empty() {
        return Err(Error::Invalid("empty angle grid".into()));
    }
    if angles.iter().any(|a| !a.is_finite()) {
        return Err(Error::Invalid("angles must be finite".into()));
    }
    Ok(())
}

fn check_freq(params: &MicParams, f: f64) -> Result<()> {
    if !(f > 0.0 && f <= params.fs / 2.0) {
        return Err(Error::Grid(format!("{f} Hz lies outside (0, fs/2]")));
    }
    Ok(())
}

/// `|H_dir|` over a full grid. Sweeps fan out across threads; results are
/// keyed by grid index so the output does not depend on scheduling.
pub fn pattern_sweep(
    params: &MicParams,
    freqs: &[f64],
    distances: &[f64],
    angles: &[f64],
    mode: IntegratorMode,
) -> Result<PatternTable> {
    params.validate()?;
    check_angles(angles)?;
    if freqs.is_empty() || distances.is_empty() {
        return Err(Error::Invalid("empty frequency or distance grid".into()));
    }
    for &f in freqs {
        check_freq(params, f)?;
    }
    let magnitude = angles
        .par_iter()
        .map(|&theta| {
            let mut row = Vec::with_capacity(freqs.len() * distances.len());
            for &f in freqs {
                for &r in distances {
                    let pose = ScenePose::new(r, theta)?;
                    row.push(directivity_magnitude(&pose, params, f, mode)?);
                }
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?
        .concat();
    Ok(PatternTable {
        kind: PatternKind::Monochromatic,
        angles: angles.to_vec(),
        frequencies: freqs.to_vec(),
        band_edges: None,
        distances: distances.to_vec(),
        magnitude,
        integrator: mode,
        params: *params,
    })
}

/// `|H_dir(theta)|` at one frequency and distance.
pub fn monochromatic_pattern(
    params: &MicParams,
    f: f64,
    r: f64,
    angles: &[f64],
    mode: IntegratorMode,
) -> Result<PatternTable> {
    pattern_sweep(params, &[f], &[r], angles, mode)
}

/// Worst-case departure from the classical pattern over angle, per `(f, r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationMap {
    pub frequencies: Vec<f64>,
    pub distances: Vec<f64>,
    /// Row-major `[frequency][distance]`.
    pub deviation: Vec<f64>,
    pub integrator: IntegratorMode,
    pub params: MicParams,
}

impl DeviationMap {
    pub fn get(&self, freq: usize, dist: usize) -> f64 {
        self.deviation[freq * self.distances.len() + dist]
    }
}

/// `max_theta | |H_dir| - |m + (1 - m) cos theta| |` for every `(f, r)`.
pub fn limit_case_deviation(
    params: &MicParams,
    freqs: &[f64],
    distances: &[f64],
    angles: &[f64],
    mode: IntegratorMode,
) -> Result<DeviationMap> {
    let table = pattern_sweep(params, freqs, distances, angles, mode)?;
    let mut deviation = vec![0.0f64; freqs.len() * distances.len()];
    for (a, &theta) in angles.iter().enumerate() {
        let classical = classical_directivity(params.m, theta).abs();
        for fi in 0..freqs.len() {
            for ri in 0..distances.len() {
                let d = (table.get(a, fi, ri) - classical).abs();
                let slot = &mut deviation[fi * distances.len() + ri];
                *slot = slot.max(d);
            }
        }
    }
    Ok(DeviationMap {
        frequencies: freqs.to_vec(),
        distances: distances.to_vec(),
        deviation,
        integrator: mode,
        params: *params,
    })
}

/// Directivity measured with a broadband stimulus.
///
/// For each angle the stimulus is rendered through the time-domain engine,
/// split into bands, and each band's RMS is divided by the band RMS of an
/// omnidirectional (`m = 1`) render at the same distance. The engine always
/// uses the lossy integrator, so the table is tagged accordingly.
pub fn subband_pattern(
    stimulus: &[f64],
    params: &MicParams,
    angles: &[f64],
    r: f64,
    bands: &BandSet,
    options: &EngineOptions,
) -> Result<PatternTable> {
    params.validate()?;
    check_angles(angles)?;
    if stimulus.is_empty() {
        return Err(Error::EmptySignal);
    }
    let fs = params.fs;
    let mut analyzer = BandAnalyzer::new();
    let source = analyzer.mean_squares(stimulus, fs, bands);
    if let Some((b, &e)) = source.iter().enumerate().find(|(_, &e)| e < BAND_FLOOR) {
        return Err(Error::BandSilence {
            label: bands.label(b),
            energy: e,
        });
    }

    let render_at = |p: MicParams, theta: f64| -> Result<Vec<f64>> {
        let pose = ScenePose::new(r, theta)?;
        let scene = Scene::single(p, pose, options.clone());
        Ok(render_samples(&scene, stimulus)?.channels.remove(0))
    };
    let omni = render_at(params.with_m(1.0), 0.0)?;
    let reference = analyzer.mean_squares(&omni, fs, bands);

    let magnitude = angles
        .par_iter()
        .map(|&theta| {
            let out = render_at(*params, theta)?;
            let e = BandAnalyzer::new().mean_squares(&out, fs, bands);
            Ok(e.iter()
                .zip(&reference)
                .map(|(num, den)| (num / den).sqrt())
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?
        .concat();

    Ok(PatternTable {
        kind: PatternKind::Subband,
        angles: angles.to_vec(),
        frequencies: bands.centers().to_vec(),
        band_edges: Some(bands.edges().to_vec()),
        distances: vec![r],
        magnitude,
        integrator: IntegratorMode::Lossy,
        params: *params,
    })
}
