//! Analytic frequency responses of the captured-field filters.
//!
//! All responses are evaluated directly on the unit circle, so the pure
//! delays `z^-D` are exact for non-integer `D` and the advances that appear
//! in the directivity filter need no causal realization.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::IntegratorState;
use crate::geometry::{tap_set, MicParams, ScenePose, TapSet};

/// Which integrator closes the dipole branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntegratorMode {
    /// `1 / (j omega)`.
    Ideal,
    /// The bilinear lossy integrator used by the time-domain engine.
    #[default]
    Lossy,
}

impl IntegratorMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Ideal => "ideal",
            Self::Lossy => "lossy",
        }
    }
}

impl std::fmt::Display for IntegratorMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for IntegratorMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ideal" => Ok(Self::Ideal),
            "lossy" => Ok(Self::Lossy),
            other => Err(format!(
                "unknown integrator mode '{other}' (expected ideal or lossy)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexResponse {
    pub freqs: Vec<f64>,
    pub gains: Vec<Complex64>,
}

impl ComplexResponse {
    pub fn magnitudes(&self) -> Vec<f64> {
        self.gains.iter().map(|g| g.norm()).collect()
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| {
                    if i == 0 {
                        lo
                    } else if i == n - 1 {
                        hi
                    } else {
                        (a + (b - a) * i as f64 / (n - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

/// 1024 log-spaced points over `[20 Hz, fs/2]`.
pub fn default_grid(fs: f64) -> Vec<f64> {
    log_grid(1024, 20.0, fs / 2.0)
}

fn check_grid(freqs: &[f64], fs: f64) -> Result<()> {
    if freqs.is_empty() {
        return Err(Error::Grid("empty".into()));
    }
    for (i, &f) in freqs.iter().enumerate() {
        if !(f.is_finite() && f >= 0.0 && f <= fs / 2.0) {
            return Err(Error::Grid(format!("{f} Hz lies outside [0, fs/2]")));
        }
        if i > 0 && f <= freqs[i - 1] {
            return Err(Error::Grid(
                "frequencies must be strictly increasing".into(),
            ));
        }
    }
    Ok(())
}

/// Integrator transfer value at `f` Hz.
pub fn integrator_gain(params: &MicParams, f: f64, mode: IntegratorMode) -> Result<Complex64> {
    match mode {
        IntegratorMode::Ideal if f == 0.0 => Err(Error::Singular),
        IntegratorMode::Ideal => Ok(1.0 / Complex64::new(0.0, TAU * f)),
        IntegratorMode::Lossy => Ok(IntegratorState::response(params.g, params.fs, f)),
    }
}

/// `e^{-j 2 pi f D / fs}`
///
/// The phase is formed in cycles with an error-free product and reduced to
/// one turn before scaling by 2 pi, so long delays keep full precision.
#[inline]
fn delay_phasor(f: f64, delay: f64, fs: f64) -> Complex64 {
    let p = f * delay;
    let p_lo = f.mul_add(delay, -p);
    let q = p / fs;
    let rem = (-q).mul_add(fs, p) + p_lo;
    let turns = (q - q.round()) + rem / fs;
    Complex64::from_polar(1.0, -TAU * turns)
}

fn evaluate(
    pose: &ScenePose,
    params: &MicParams,
    freqs: &[f64],
    mut point: impl FnMut(&TapSet, f64) -> Result<Complex64>,
) -> Result<ComplexResponse> {
    check_grid(freqs, params.fs)?;
    let taps = tap_set(pose, params)?;
    let gains = freqs
        .iter()
        .map(|&f| point(&taps, f))
        .collect::<Result<Vec<_>>>()?;
    Ok(ComplexResponse {
        freqs: freqs.to_vec(),
        gains,
    })
}

fn omni_point(taps: &TapSet, fs: f64, f: f64) -> Complex64 {
    taps.gains[0] * delay_phasor(f, taps.delays[0], fs)
}

fn dipole_point(taps: &TapSet, fs: f64, f: f64) -> Complex64 {
    taps.gains[1] * delay_phasor(f, taps.delays[1], fs)
        - taps.gains[2] * delay_phasor(f, taps.delays[2], fs)
}

fn bidi_point(
    taps: &TapSet,
    params: &MicParams,
    f: f64,
    mode: IntegratorMode,
) -> Result<Complex64> {
    let integ = integrator_gain(params, f, mode)?;
    Ok(integ * (params.c0 / params.d) * dipole_point(taps, params.fs, f))
}

/// `H_omni = (1/r) z^-D0`
pub fn omni_response(
    pose: &ScenePose,
    params: &MicParams,
    freqs: &[f64],
) -> Result<ComplexResponse> {
    evaluate(pose, params, freqs, |t, f| Ok(omni_point(t, params.fs, f)))
}

/// `H_dipo = (1/r1) z^-D1 - (1/r2) z^-D2`
pub fn dipole_response(
    pose: &ScenePose,
    params: &MicParams,
    freqs: &[f64],
) -> Result<ComplexResponse> {
    evaluate(pose, params, freqs, |t, f| {
        Ok(dipole_point(t, params.fs, f))
    })
}

/// `H_bidi = I (c0/d) H_dipo`
pub fn bidi_response(
    pose: &ScenePose,
    params: &MicParams,
    freqs: &[f64],
    mode: IntegratorMode,
) -> Result<ComplexResponse> {
    evaluate(pose, params, freqs, |t, f| bidi_point(t, params, f, mode))
}

/// `H = m H_omni + (1 - m) H_bidi`
pub fn global_response(
    pose: &ScenePose,
    params: &MicParams,
    freqs: &[f64],
    mode: IntegratorMode,
) -> Result<ComplexResponse> {
    let m = params.m;
    evaluate(pose, params, freqs, |t, f| {
        Ok(m * omni_point(t, params.fs, f) + (1.0 - m) * bidi_point(t, params, f, mode)?)
    })
}

/// `H_dir = m + (1 - m) I (c0/d) ((r/r1) z^{D0-D1} - (r/r2) z^{D0-D2})`
///
/// Computed on its own path (not as `H / H_omni`) so the factorization
/// `H = H_omni H_dir` is a genuine check.
pub fn directivity_response(
    pose: &ScenePose,
    params: &MicParams,
    freqs: &[f64],
    mode: IntegratorMode,
) -> Result<ComplexResponse> {
    let m = params.m;
    evaluate(pose, params, freqs, |t, f| {
        Ok(m + (1.0 - m) * directivity_branch(t, params, f, mode)?)
    })
}

fn directivity_branch(
    taps: &TapSet,
    params: &MicParams,
    f: f64,
    mode: IntegratorMode,
) -> Result<Complex64> {
    let integ = integrator_gain(params, f, mode)?;
    let [g0, g1, g2] = taps.gains;
    let [d0, d1, d2] = taps.delays;
    let lead1 = delay_phasor(f, d1 - d0, params.fs);
    let lead2 = delay_phasor(f, d2 - d0, params.fs);
    Ok(integ * (params.c0 / params.d) * ((g1 / g0) * lead1 - (g2 / g0) * lead2))
}

/// `|H_dir|` at a single frequency.
pub fn directivity_magnitude(
    pose: &ScenePose,
    params: &MicParams,
    f: f64,
    mode: IntegratorMode,
) -> Result<f64> {
    let taps = tap_set(pose, params)?;
    if !(f.is_finite() && f >= 0.0 && f <= params.fs / 2.0) {
        return Err(Error::Grid(format!("{f} Hz lies outside [0, fs/2]")));
    }
    let h = params.m + (1.0 - params.m) * directivity_branch(&taps, params, f, mode)?;
    Ok(h.norm())
}

/// Classical directivity `m + (1 - m) cos(theta)`.
pub fn classical_directivity(m: f64, theta: f64) -> f64 {
    m + (1.0 - m) * theta.cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn pose(r: f64, theta: f64) -> ScenePose {
        ScenePose::new(r, theta).unwrap()
    }

    #[test]
    fn omni_magnitude_is_inverse_distance() {
        let grid = default_grid(44_100.0);
        let p = MicParams::default();
        for (r, want) in [(1.0, 1.0), (2.0, 0.5)] {
            let h = omni_response(&pose(r, 0.3), &p, &grid).unwrap();
            assert!(h.magnitudes().iter().all(|&a| (a - want).abs() < 1e-15));
        }
    }

    #[test]
    fn omni_phase_wraps_to_zero() {
        // f = 343 Hz, r = 1 m, c0 = 343 m/s: exactly one period of delay
        let h = omni_response(&pose(1.0, 0.0), &MicParams::default(), &[343.0]).unwrap();
        assert!(h.gains[0].arg().abs() < 1e-9);
    }

    #[test]
    fn broadside_dipole_vanishes() {
        let grid = default_grid(44_100.0);
        let p = MicParams::default();
        let h = dipole_response(&pose(0.7, FRAC_PI_2), &p, &grid).unwrap();
        assert!(h.gains.iter().all(|g| g.norm() == 0.0));
        let b = bidi_response(&pose(0.7, FRAC_PI_2), &p, &grid, IntegratorMode::Ideal).unwrap();
        assert!(b.gains.iter().all(|g| g.norm() == 0.0));
    }

    #[test]
    fn far_field_dipole_is_sine_weighted_omni() {
        let p = MicParams::default();
        // kr >= 200 keeps the near-field term under 0.5 %
        let r = 1e4 * p.d;
        let f_max = 0.05 * p.c0 / (PI * p.d);
        let freqs = log_grid(50, 60.0, f_max);
        for theta in [0.0, 0.4, 1.2, 2.5] {
            let ps = pose(r, theta);
            let dip = dipole_response(&ps, &p, &freqs).unwrap();
            let omni = omni_response(&ps, &p, &freqs).unwrap();
            for ((&f, &o), &h) in freqs.iter().zip(&omni.gains).zip(&dip.gains) {
                let s = (PI * f * p.d * theta.cos() / p.c0).sin();
                let approx = Complex64::new(0.0, 2.0 * s) * o;
                let err = (h - approx).norm() / approx.norm();
                assert!(err < 0.01, "theta {theta} f {f} err {err}");
            }
        }
    }

    #[test]
    fn first_comb_lobe_peaks_near_half_wavelength_spacing() {
        let p = MicParams::default();
        let ps = pose(1.0, 0.0);
        let freqs: Vec<f64> = (1..=20_000).map(|k| k as f64).collect();
        let mags = dipole_response(&ps, &p, &freqs).unwrap().magnitudes();
        let peak = (1..mags.len() - 1)
            .find(|&i| mags[i] >= mags[i - 1] && mags[i] > mags[i + 1])
            .unwrap();
        // tdoa = (r2 - r1)/c0 = d/c0 on axis, lobe peak where f*d/c0 = 1/2
        let expected = p.c0 / (2.0 * p.d);
        assert!(
            (freqs[peak] - expected).abs() / expected < 0.01,
            "{}",
            freqs[peak]
        );
    }

    #[test]
    fn comb_nulls_at_integer_path_difference() {
        let p = MicParams::default().with_d(0.1);
        let ps = pose(0.5, 0.6);
        let (r1, r2) = crate::geometry::capsule_distances(&ps, p.d).unwrap();
        let step = p.c0 / (r2 - r1);
        let freqs: Vec<f64> = (1..=200_000).map(|k| k as f64 * 0.1).collect();
        let mags = dipole_response(&ps, &p, &freqs).unwrap().magnitudes();
        let floor = (1.0 / r1 - 1.0 / r2).abs();
        // local minima of |H_dipo| sit on multiples of c0/(r2 - r1), at the amplitude-mismatch floor
        let minima: Vec<f64> = (1..mags.len() - 1)
            .filter(|&i| mags[i] < mags[i - 1] && mags[i] <= mags[i + 1])
            .map(|i| freqs[i])
            .collect();
        assert!(!minima.is_empty());
        for (k, &fmin) in minima.iter().enumerate() {
            let want = step * (k + 1) as f64;
            assert!((fmin - want).abs() <= 0.1, "{fmin} vs {want}");
            let i = (fmin / 0.1).round() as usize - 1;
            assert!((mags[i] - floor).abs() < 1e-6);
        }
    }

    #[test]
    fn lossy_matches_ideal_well_above_the_pole() {
        let p = MicParams::default();
        let ps = pose(1.0, 0.3);
        let a = bidi_response(&ps, &p, &[5000.0], IntegratorMode::Ideal).unwrap();
        let b = bidi_response(&ps, &p, &[5000.0], IntegratorMode::Lossy).unwrap();
        let rel = (a.gains[0].norm() - b.gains[0].norm()).abs() / a.gains[0].norm();
        assert!(rel < 0.01, "{rel}");
    }

    #[test]
    fn bidi_low_frequency_limit_is_cosine() {
        let p = MicParams::default();
        for theta in [0.0, 0.5, 1.0, 2.0, PI] {
            let ps = pose(10.0, theta);
            let b = bidi_response(&ps, &p, &[50.0], IntegratorMode::Ideal).unwrap();
            let o = omni_response(&ps, &p, &[50.0]).unwrap();
            let ratio = (b.gains[0] / o.gains[0]).re;
            assert!((ratio - theta.cos()).abs() < 0.01, "{theta}: {ratio}");
        }
    }

    #[test]
    fn endpoints_of_m() {
        let grid = log_grid(64, 20.0, 20_000.0);
        let ps = pose(0.3, 1.1);
        let omni_p = MicParams::default().with_m(1.0);
        let g = global_response(&ps, &omni_p, &grid, IntegratorMode::Lossy).unwrap();
        let o = omni_response(&ps, &omni_p, &grid).unwrap();
        assert_eq!(g.gains, o.gains);

        let fig8 = MicParams::default().with_m(0.0);
        let g = global_response(&ps, &fig8, &grid, IntegratorMode::Ideal).unwrap();
        let b = bidi_response(&ps, &fig8, &grid, IntegratorMode::Ideal).unwrap();
        assert_eq!(g.gains, b.gains);
    }

    #[test]
    fn directivity_special_cases() {
        let grid = log_grid(64, 20.0, 20_000.0);
        let h = directivity_response(
            &pose(0.05, 2.0),
            &MicParams::default().with_m(1.0),
            &grid,
            IntegratorMode::Lossy,
        )
        .unwrap();
        assert!(h.gains.iter().all(|&g| g == Complex64::new(1.0, 0.0)));
        for m in [0.0, 0.3, 0.8] {
            let h = directivity_response(
                &pose(0.2, FRAC_PI_2),
                &MicParams::default().with_m(m),
                &grid,
                IntegratorMode::Ideal,
            )
            .unwrap();
            assert!(h.gains.iter().all(|g| (g - m).norm() < 1e-15));
        }
    }

    #[test]
    fn ideal_is_singular_at_dc() {
        let err = bidi_response(
            &pose(1.0, 0.0),
            &MicParams::default(),
            &[0.0, 10.0],
            IntegratorMode::Ideal,
        );
        assert!(matches!(err, Err(Error::Singular)));
        assert!(bidi_response(
            &pose(1.0, 0.0),
            &MicParams::default(),
            &[0.0, 10.0],
            IntegratorMode::Lossy
        )
        .is_ok());
    }

    #[test]
    fn grid_is_validated() {
        let p = MicParams::default();
        let ps = pose(1.0, 0.0);
        assert!(omni_response(&ps, &p, &[100.0, 50.0]).is_err());
        assert!(omni_response(&ps, &p, &[30_000.0]).is_err());
        assert!(omni_response(&ps, &p, &[]).is_err());
    }

    #[test]
    fn default_grid_shape() {
        let g = default_grid(44_100.0);
        assert_eq!(g.len(), 1024);
        assert_eq!(g[0], 20.0);
        assert_eq!(g[1023], 22_050.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn phasor_keeps_precision_at_long_delays() {
        let fs = 44_100.0;
        let (d0, step) = (1283.734375, 0.408203125); // binary-exact, so d0 + step is exact too
        for f in [20.0, 997.0, 19_626.87, 22_050.0] {
            let split = delay_phasor(f, d0, fs) * delay_phasor(f, step, fs);
            assert!(
                (split - delay_phasor(f, d0 + step, fs)).norm() < 1e-14,
                "f = {f}"
            );
        }
        // whole-cycle delays land on 1 exactly
        assert_eq!(delay_phasor(441.0, 100.0, fs), Complex64::new(1.0, 0.0));
    }
}
