use std::io;

use crate::audio_io::WavError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick exit codes and HTTP statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Validity,
    Io,
    Other,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("source distance r = {r} m violates r >= d/2 (d = {d} m, minimum r = {min} m)", min = d / 2.0)]
    Validity { r: f64, d: f64 },

    #[error("source coincides with a capsule point (r = {r} m, d = {d} m)")]
    CoincidentSource { r: f64, d: f64 },

    #[error("source distance {distance} m exceeds the engine maximum of {max} m")]
    OutOfRange { distance: f64, max: f64 },

    #[error("invalid parameter {name} = {value}: {reason}")]
    Param {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("delay of {delay} samples exceeds the line maximum of {max} samples")]
    DelayRange { delay: f64, max: f64 },

    #[error("ideal integrator is singular at 0 Hz")]
    Singular,

    #[error("invalid frequency grid: {0}")]
    Grid(String),

    #[error("sample rate mismatch: source is {source_fs} Hz but the engine runs at {engine_fs} Hz; resample the file externally")]
    SampleRate { source_fs: f64, engine_fs: f64 },

    #[error("expected a mono stream, got {0} channels")]
    NotMono(usize),

    #[error("stimulus is silent in band {label} (mean square {energy:e})")]
    BandSilence { label: String, energy: f64 },

    #[error("signal is empty")]
    EmptySignal,

    #[error("{0}")]
    Invalid(String),

    #[error("mic '{label}' (#{index}): {inner}")]
    Mic {
        label: String,
        index: usize,
        #[source]
        inner: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Wav(#[from] WavError),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Validity { .. } | Error::CoincidentSource { .. } | Error::OutOfRange { .. } => {
                ErrorKind::Validity
            }
            Error::Mic { inner, .. } => inner.kind(),
            Error::Config(_) | Error::Param { .. } => ErrorKind::Config,
            Error::Io(_) => ErrorKind::Io,
            Error::Wav(e) if e.is_io() => ErrorKind::Io,
            _ => ErrorKind::Other,
        }
    }

    pub(crate) fn for_mic(self, label: &str, index: usize) -> Self {
        Error::Mic {
            label: label.to_string(),
            index,
            inner: Box::new(self),
        }
    }
}
