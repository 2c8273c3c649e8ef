use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fractional-delay read scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    Linear,
    /// Third-order Lagrange over four neighbours. Falls back to linear below one sample.
    Lagrange4,
}

impl std::str::FromStr for Interpolation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "linear" => Ok(Self::Linear),
            "lagrange4" | "lagrange" => Ok(Self::Lagrange4),
            other => Err(format!(
                "unknown interpolation '{other}' (expected linear or lagrange4)"
            )),
        }
    }
}

/// Samples beyond the integer delay needed by the widest kernel.
const MARGIN: usize = 3;

/// Ring buffer readable at non-integer delays.
///
/// A read at delay 0 returns the most recently pushed sample.
#[derive(Debug, Clone)]
pub struct FractionalDelayLine {
    buf: Vec<f64>,
    mask: usize,
    head: usize,
    max_delay: f64,
}

impl FractionalDelayLine {
    pub fn new(max_delay: f64) -> Result<Self> {
        if !(max_delay.is_finite() && max_delay >= 0.0) {
            return Err(Error::Param {
                name: "max_delay",
                value: max_delay,
                reason: "must be finite and >= 0",
            });
        }
        let len = (max_delay.ceil() as usize + MARGIN + 1).next_power_of_two();
        Ok(Self {
            buf: vec![0.0; len],
            mask: len - 1,
            head: 0,
            max_delay,
        })
    }

    pub fn max_delay(&self) -> f64 {
        self.max_delay
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.head = (self.head + 1) & self.mask;
        self.buf[self.head] = x;
    }

    pub fn reset(&mut self) {
        self.buf.iter_mut().for_each(|s| *s = 0.0);
        self.head = 0;
    }

    pub fn read(&self, delay: f64, mode: Interpolation) -> Result<f64> {
        if !(0.0..=self.max_delay).contains(&delay) {
            return Err(Error::DelayRange {
                delay,
                max: self.max_delay,
            });
        }
        Ok(self.read_unchecked(delay, mode))
    }

    #[inline]
    fn at(&self, offset: usize) -> f64 {
        self.buf[self.head.wrapping_sub(offset) & self.mask]
    }

    /// Caller guarantees `0 <= delay <= max_delay`.
    #[inline]
    pub(crate) fn read_unchecked(&self, delay: f64, mode: Interpolation) -> f64 {
        let k = delay.floor();
        let frac = delay - k;
        let k = k as usize;
        match mode {
            Interpolation::Lagrange4 if k >= 1 => {
                // nodes at offsets k-1, k, k+1, k+2; evaluation point x = 1 + frac
                let x = 1.0 + frac;
                let (a, b, c, d) = (x, x - 1.0, x - 2.0, x - 3.0);
                let h0 = -b * c * d / 6.0;
                let h1 = a * c * d / 2.0;
                let h2 = -a * b * d / 2.0;
                let h3 = a * b * c / 6.0;
                h0 * self.at(k - 1) + h1 * self.at(k) + h2 * self.at(k + 1) + h3 * self.at(k + 2)
            }
            _ => {
                if frac == 0.0 {
                    self.at(k)
                } else {
                    (1.0 - frac) * self.at(k) + frac * self.at(k + 1)
                }
            }
        }
    }
}
