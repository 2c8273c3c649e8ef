use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{directivity_magnitude, IntegratorMode};
use crate::geometry::{MicParams, ScenePose};

/// Low-frequency boost against distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximityCurve {
    pub theta: f64,
    pub f_low: f64,
    pub f_ref: f64,
    /// Meters, in the caller's order.
    pub distances: Vec<f64>,
    /// `20 log10(|H_dir(f_low)| / |H_dir(f_ref)|)`, shifted so the farthest distance reads 0 dB.
    pub boost_db: Vec<f64>,
    pub integrator: IntegratorMode,
    pub params: MicParams,
}

pub fn proximity_curve(
    params: &MicParams,
    theta: f64,
    f_low: f64,
    f_ref: f64,
    distances: &[f64],
    mode: IntegratorMode,
) -> Result<ProximityCurve> {
    if !(f_low > 0.0 && f_low < f_ref) {
        return Err(Error::Invalid(format!(
            "need 0 < f_low < f_ref, got f_low = {f_low} Hz, f_ref = {f_ref} Hz"
        )));
    }
    if distances.is_empty() {
        return Err(Error::Invalid("empty distance grid".into()));
    }
    let raw = distances
        .iter()
        .map(|&r| {
            let pose = ScenePose::new(r, theta)?;
            let low = directivity_magnitude(&pose, params, f_low, mode)?;
            let reference = directivity_magnitude(&pose, params, f_ref, mode)?;
            Ok(20.0 * (low / reference).log10())
        })
        .collect::<Result<Vec<f64>>>()?;
    let far = distances
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| raw[i])
        .unwrap_or(0.0);
    Ok(ProximityCurve {
        theta,
        f_low,
        f_ref,
        distances: distances.to_vec(),
        boost_db: raw.iter().map(|b| b - far).collect(),
        integrator: mode,
        params: *params,
    })
}
