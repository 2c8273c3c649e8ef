//! Directivity, limit-case, proximity and band-energy analysis.

mod bands;
mod energy;
mod export;
mod pattern;
mod proximity;
pub mod stimulus;

pub use bands::{BandAnalyzer, BandSet};
pub use energy::{energy_balance, EnergyBalance, EnergyFrame, MIN_FRAME_MS};
pub use pattern::{
    angle_grid, default_angles, limit_case_deviation, monochromatic_pattern, pattern_sweep,
    subband_pattern, DeviationMap, PatternKind, PatternTable, BAND_FLOOR,
};
pub use proximity::{proximity_curve, ProximityCurve};
