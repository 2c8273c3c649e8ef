//! Source/capsule geometry of a single microphone.
//!
//! Each microphone works in its own local frame: the center sits at the
//! origin, capsule point O1 at `(+d/2, 0)` (towards `theta = 0`) and capsule
//! point O2 at `(-d/2, 0)`. The dipole signal is `O1 - O2`, so a source on
//! the positive axis yields a positive bidirectional output.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_C0: f64 = 343.0;
pub const DEFAULT_FS: f64 = 44_100.0;
pub const DEFAULT_G: f64 = 0.9;
pub const DEFAULT_D: f64 = 0.02;

/// Position of the source relative to one microphone, in polar coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenePose {
    r: f64,
    theta: f64,
}

impl ScenePose {
    /// `theta` is wrapped into `[0, 2pi)`.
    pub fn new(r: f64, theta: f64) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::Param {
                name: "r",
                value: r,
                reason: "distance must be finite and > 0",
            });
        }
        if !theta.is_finite() {
            return Err(Error::Param {
                name: "theta",
                value: theta,
                reason: "angle must be finite",
            });
        }
        Ok(Self {
            r,
            theta: normalize_angle(theta),
        })
    }

    /// Pose of a source at offset `(dx, dy)` from the mic center, in the mic's local frame.
    pub fn from_offset(dx: f64, dy: f64) -> Result<Self> {
        Self::new(dx.hypot(dy), dy.atan2(dx))
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

pub fn normalize_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Physical and digital parameters of one virtual microphone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicParams {
    /// Directivity coefficient: 1 omni, 0.5 cardioid, 0 figure-eight.
    pub m: f64,
    /// Capsule spacing in meters.
    pub d: f64,
    /// Loss coefficient of the digital integrator.
    pub g: f64,
    /// Speed of sound in m/s.
    pub c0: f64,
    /// Sampling rate in Hz.
    pub fs: f64,
}

impl Default for MicParams {
    fn default() -> Self {
        Self {
            m: 0.5,
            d: DEFAULT_D,
            g: DEFAULT_G,
            c0: DEFAULT_C0,
            fs: DEFAULT_FS,
        }
    }
}

impl MicParams {
    pub fn new(m: f64, d: f64, g: f64, c0: f64, fs: f64) -> Result<Self> {
        let p = Self { m, d, g, c0, fs };
        p.validate()?;
        Ok(p)
    }

    pub fn with_m(mut self, m: f64) -> Self {
        self.m = m;
        self
    }

    pub fn with_d(mut self, d: f64) -> Self {
        self.d = d;
        self
    }

    pub fn with_g(mut self, g: f64) -> Self {
        self.g = g;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, value, reason| {
            Err(Error::Param {
                name,
                value,
                reason,
            })
        };
        if !(0.0..=1.0).contains(&self.m) {
            return bad("m", self.m, "directivity coefficient must lie in [0, 1]");
        }
        if !(self.d.is_finite() && self.d > 0.0) {
            return bad("d", self.d, "capsule spacing must be > 0");
        }
        if !(0.0..1.0).contains(&self.g) {
            return bad("g", self.g, "integrator loss must lie in [0, 1)");
        }
        if !(self.c0.is_finite() && self.c0 > 0.0) {
            return bad("c0", self.c0, "speed of sound must be > 0");
        }
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return bad("fs", self.fs, "sampling rate must be > 0");
        }
        Ok(())
    }

    /// Largest admissible gain, reached at the validity bound `r = d/2`.
    pub fn gain_ceiling(&self) -> f64 {
        2.0 / self.d
    }
}

/// The three propagation paths: mic center, capsule O1, capsule O2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TapSet {
    /// `1/r`, `1/r1`, `1/r2`, each clamped to the gain ceiling `2/d`.
    pub gains: [f64; 3],
    /// `fs * r_i / c0` in samples.
    pub delays: [f64; 3],
}

impl TapSet {
    pub fn max_delay(&self) -> f64 {
        self.delays.iter().copied().fold(0.0, f64::max)
    }
}

/// Rejects sources inside the capsule pair.
pub fn check_validity(pose: &ScenePose, d: f64) -> Result<()> {
    if pose.r < d / 2.0 {
        return Err(Error::Validity { r: pose.r, d });
    }
    Ok(())
}

/// Distances from the source to O1 and O2.
pub fn capsule_distances(pose: &ScenePose, d: f64) -> Result<(f64, f64)> {
    check_validity(pose, d)?;
    let r = pose.r;
    let base = r * r + d * d / 4.0;
    let cross = r * d * pose.theta.cos();
    let r1 = (base - cross).max(0.0).sqrt();
    let r2 = (base + cross).max(0.0).sqrt();
    if r1 <= d * 1e-9 || r2 <= d * 1e-9 {
        return Err(Error::CoincidentSource { r, d });
    }
    Ok((r1, r2))
}

pub fn tap_set(pose: &ScenePose, params: &MicParams) -> Result<TapSet> {
    params.validate()?;
    let (r1, r2) = capsule_distances(pose, params.d)?;
    let ceiling = params.gain_ceiling();
    let dist = [pose.r, r1, r2];
    let gains = dist.map(|x| (1.0 / x).min(ceiling));
    let delays = dist.map(|x| params.fs * x / params.c0);
    Ok(TapSet { gains, delays })
}
