//! Simulation of a physical two-capsule microphone.
//!
//! A mono source is filtered into what an omni/dipole microphone pair would
//! capture at a given distance and angle, with the directivity coefficient
//! `m` blending an omnidirectional path and an integrated pressure
//! difference. The crate offers the analytic frequency responses, a block
//! renderer for offline and streaming use, and analysis tools built on both.

pub mod analysis;
pub mod audio_io;
pub mod config;
pub mod error;
pub mod filters;
pub mod geometry;
pub mod render;

pub use audio_io::{AudioBuffer, SampleFormat, WavError};
pub use config::SceneConfig;
pub use error::{Error, ErrorKind, Result};
pub use filters::{IntegratorMode, Interpolation};
pub use geometry::{tap_set, MicParams, ScenePose, TapSet};
pub use render::{
    render_file, render_samples, EngineOptions, Keyframe, MicPlacement, Rendered, Renderer, Scene,
    Smoothing, Trajectory,
};

/// Crate version, reported by front ends.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
