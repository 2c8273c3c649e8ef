//! TOML scene description.
//!
//! ```toml
//! schema = 1
//!
//! [source]
//! path = "voice.wav"     # relative to the config file
//! x = 1.0
//! y = 0.0
//!
//! [engine]
//! block_size = 256
//! interpolation = "linear"
//! fs = 44100             # optional; defaults to the source file's rate
//!
//! [[mic]]
//! label = "front"
//! x = 0.0
//! y = 0.0
//! orientation = 0.0      # radians
//! m = 0.5
//!
//! [[trajectory]]
//! t = 2.0
//! x = 0.2
//! y = 0.5
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::Interpolation;
use crate::geometry::{MicParams, DEFAULT_C0, DEFAULT_D, DEFAULT_G};
use crate::render::{EngineOptions, Keyframe, MicPlacement, Scene, Trajectory};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub schema: u32,
    pub source: SourceConfig,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(rename = "mic")]
    pub mics: Vec<MicConfig>,
    #[serde(default)]
    pub trajectory: Vec<Keyframe>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub path: PathBuf,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub block_size: usize,
    pub interpolation: Interpolation,
    pub c0: f64,
    pub fs: Option<f64>,
    pub crossfade_ms: f64,
    pub max_distance: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        let o = EngineOptions::default();
        Self {
            block_size: o.block_size,
            interpolation: o.interpolation,
            c0: DEFAULT_C0,
            fs: None,
            crossfade_ms: o.crossfade_ms,
            max_distance: o.max_distance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicConfig {
    pub label: String,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub orientation: f64,
    #[serde(default = "default_m")]
    pub m: f64,
    #[serde(default = "default_d")]
    pub d: f64,
    #[serde(default = "default_g")]
    pub g: f64,
}

fn default_m() -> f64 {
    0.5
}

fn default_d() -> f64 {
    DEFAULT_D
}

fn default_g() -> f64 {
    DEFAULT_G
}

impl SceneConfig {
    /// Parses a config; relative source paths are resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: SceneConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema {} (this build reads schema {SCHEMA_VERSION})",
                cfg.schema
            )));
        }
        if cfg.mics.is_empty() {
            return Err(Error::Config(
                "at least one [[mic]] table is required".into(),
            ));
        }
        for (i, a) in cfg.mics.iter().enumerate() {
            if cfg.mics[..i].iter().any(|b| b.label == a.label) {
                return Err(Error::Config(format!("duplicate mic label '{}'", a.label)));
            }
        }
        if cfg.source.path.is_relative() {
            cfg.source.path = base_dir.join(&cfg.source.path);
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Builds and validates the scene. `file_fs` is used when the config leaves `fs` unset.
    pub fn scene(&self, file_fs: f64) -> Result<Scene> {
        let fs = self.engine.fs.unwrap_or(file_fs);
        let mics = self
            .mics
            .iter()
            .map(|m| MicPlacement {
                label: m.label.clone(),
                x: m.x,
                y: m.y,
                orientation: m.orientation,
                params: MicParams {
                    m: m.m,
                    d: m.d,
                    g: m.g,
                    c0: self.engine.c0,
                    fs,
                },
            })
            .collect();
        let trajectory = if self.trajectory.is_empty() {
            None
        } else {
            Some(Trajectory::new(self.trajectory.clone())?)
        };
        let scene = Scene {
            fs,
            mics,
            source: (self.source.x, self.source.y),
            trajectory,
            options: EngineOptions {
                block_size: self.engine.block_size,
                interpolation: self.engine.interpolation,
                crossfade_ms: self.engine.crossfade_ms,
                max_distance: self.engine.max_distance,
            },
        };
        scene.validate()?;
        Ok(scene)
    }
}
