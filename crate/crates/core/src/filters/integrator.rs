use num_complex::Complex64;

/// Lossy bilinear integrator `I(z) = 1/(2 fs) * (1 + z^-1) / (1 - g z^-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorState {
    g: f64,
    scale: f64,
    prev_in: f64,
    prev_out: f64,
}

impl IntegratorState {
    pub fn new(g: f64, fs: f64) -> Self {
        Self {
            g,
            scale: 1.0 / (2.0 * fs),
            prev_in: 0.0,
            prev_out: 0.0,
        }
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    /// `y[n] = g y[n-1] + (x[n] + x[n-1]) / (2 fs)`
    #[inline]
    pub fn step(&mut self, x: f64) -> f64 {
        let y = self.g * self.prev_out + (x + self.prev_in) * self.scale;
        self.prev_in = x;
        self.prev_out = y;
        y
    }

    /// Changes the coefficients while keeping the recursion state.
    pub fn retune(&mut self, g: f64, fs: f64) {
        self.g = g;
        self.scale = 1.0 / (2.0 * fs);
    }

    pub fn reset(&mut self) {
        self.prev_in = 0.0;
        self.prev_out = 0.0;
    }

    /// Frequency response at `f` Hz, i.e. `I(e^{j 2 pi f / fs})`.
    pub fn response(g: f64, fs: f64, f: f64) -> Complex64 {
        let zinv = Complex64::from_polar(1.0, -std::f64::consts::TAU * f / fs);
        (1.0 + zinv) / (1.0 - g * zinv) / (2.0 * fs)
    }

    /// Number of samples for the free response to decay below `level_db` (negative).
    pub fn decay_samples(g: f64, level_db: f64) -> usize {
        if g <= 0.0 {
            return 1;
        }
        let target = 10f64.powf(level_db / 20.0);
        (target.ln() / g.ln()).ceil().max(1.0) as usize + 1
    }
}
