//! Digital filter kernels of the model and their analytic responses.

mod delay;
mod integrator;
mod response;

pub use delay::{FractionalDelayLine, Interpolation};
pub use integrator::IntegratorState;
pub use response::{
    bidi_response, classical_directivity, default_grid, dipole_response, directivity_magnitude,
    directivity_response, global_response, integrator_gain, log_grid, omni_response,
    ComplexResponse, IntegratorMode,
};
