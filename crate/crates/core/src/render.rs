//! Block-based time-domain engine.
//!
//! One shared delay line holds the source history; every microphone voice
//! reads its three taps from it and owns the integrator of its dipole
//! branch. Pose and parameter changes are applied between blocks, either
//! instantly or through a linear crossfade between the old and the new
//! filter.

use serde::{Deserialize, Serialize};

use crate::audio_io::AudioBuffer;
use crate::error::{Error, Result};
use crate::filters::{FractionalDelayLine, IntegratorState, Interpolation};
use crate::geometry::{normalize_angle, tap_set, MicParams, ScenePose, TapSet};

/// History replayed through a fresh integrator when a crossfade starts.
const WARMUP_MAX: usize = 4096;

/// Level the integrator tail must decay to before an offline render stops.
const TAIL_FLOOR_DB: f64 = -96.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineOptions {
    pub block_size: usize,
    pub interpolation: Interpolation,
    /// Crossfade applied to pose/parameter changes, in milliseconds. Zero switches instantly.
    pub crossfade_ms: f64,
    /// Farthest supported source distance in meters; sizes the delay line.
    pub max_distance: f64,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self {
            block_size: 256,
            interpolation: Interpolation::Linear,
            crossfade_ms: 20.0,
            max_distance: 50.0,
        }
    }
}

impl EngineOptions {
    pub fn validate(&self) -> Result<()> {
        if self.block_size == 0 {
            return Err(Error::Invalid("block_size must be > 0".into()));
        }
        if !(self.crossfade_ms.is_finite() && self.crossfade_ms >= 0.0) {
            return Err(Error::Param {
                name: "crossfade_ms",
                value: self.crossfade_ms,
                reason: "must be >= 0",
            });
        }
        if !(self.max_distance.is_finite() && self.max_distance > 0.0) {
            return Err(Error::Param {
                name: "max_distance",
                value: self.max_distance,
                reason: "must be > 0",
            });
        }
        Ok(())
    }

    pub fn smoothing(&self) -> Smoothing {
        if self.crossfade_ms > 0.0 {
            Smoothing::Crossfade {
                ms: self.crossfade_ms,
            }
        } else {
            Smoothing::None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothing {
    /// Taps jump at the next block boundary; integrator state carries over.
    None,
    Crossfade {
        ms: f64,
    },
}

/// A microphone placed in the scene plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicPlacement {
    pub label: String,
    pub x: f64,
    pub y: f64,
    /// Direction of the mic axis (`theta = 0`), radians from the scene x axis.
    pub orientation: f64,
    pub params: MicParams,
}

impl MicPlacement {
    pub fn pose_of(&self, sx: f64, sy: f64) -> Result<ScenePose> {
        let pose = ScenePose::from_offset(sx - self.x, sy - self.y)?;
        ScenePose::new(pose.r(), normalize_angle(pose.theta() - self.orientation))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    /// Seconds from the start of the render.
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

/// Timed source positions, linearly interpolated and held after the last key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory(Vec<Keyframe>);

impl Trajectory {
    pub fn new(mut keys: Vec<Keyframe>) -> Result<Self> {
        if keys.is_empty() {
            return Err(Error::Invalid(
                "trajectory needs at least one keyframe".into(),
            ));
        }
        if keys
            .iter()
            .any(|k| !(k.t.is_finite() && k.x.is_finite() && k.y.is_finite()))
        {
            return Err(Error::Invalid("trajectory keyframes must be finite".into()));
        }
        keys.sort_by(|a, b| a.t.total_cmp(&b.t));
        Ok(Self(keys))
    }

    pub fn keys(&self) -> &[Keyframe] {
        &self.0
    }

    pub fn position_at(&self, t: f64) -> (f64, f64) {
        let keys = &self.0;
        let first = keys[0];
        if t <= first.t {
            return (first.x, first.y);
        }
        for w in keys.windows(2) {
            let (a, b) = (w[0], w[1]);
            if t <= b.t {
                let span = b.t - a.t;
                let u = if span > 0.0 { (t - a.t) / span } else { 1.0 };
                return (a.x + u * (b.x - a.x), a.y + u * (b.y - a.y));
            }
        }
        let last = keys[keys.len() - 1];
        (last.x, last.y)
    }
}

/// Everything needed to build a renderer.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub fs: f64,
    pub mics: Vec<MicPlacement>,
    pub source: (f64, f64),
    pub trajectory: Option<Trajectory>,
    pub options: EngineOptions,
}

impl Scene {
    /// Single mic at the origin facing +x, source placed at `pose`.
    pub fn single(params: MicParams, pose: ScenePose, options: EngineOptions) -> Self {
        let (s, c) = pose.theta().sin_cos();
        Self {
            fs: params.fs,
            mics: vec![MicPlacement {
                label: "mic".into(),
                x: 0.0,
                y: 0.0,
                orientation: 0.0,
                params,
            }],
            source: (pose.r() * c, pose.r() * s),
            trajectory: None,
            options,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.options.validate()?;
        if self.mics.is_empty() {
            return Err(Error::Invalid("scene has no microphones".into()));
        }
        for (i, mic) in self.mics.iter().enumerate() {
            let check = || -> Result<()> {
                mic.params.validate()?;
                if mic.params.fs != self.fs {
                    return Err(Error::SampleRate {
                        source_fs: self.fs,
                        engine_fs: mic.params.fs,
                    });
                }
                for &(x, y) in self.positions().iter() {
                    let pose = mic.pose_of(x, y)?;
                    let taps = tap_set(&pose, &mic.params)?;
                    check_range(&pose, &taps, &mic.params, self.options.max_distance)?;
                }
                Ok(())
            };
            check().map_err(|e| e.for_mic(&mic.label, i))?;
        }
        Ok(())
    }

    /// Initial position plus every trajectory key.
    fn positions(&self) -> Vec<(f64, f64)> {
        let mut v = vec![self.source];
        if let Some(tr) = &self.trajectory {
            v.extend(tr.keys().iter().map(|k| (k.x, k.y)));
        }
        v
    }

    /// Samples an offline render runs past the end of the source.
    pub fn tail_samples(&self) -> Result<usize> {
        let mut tail = 0usize;
        for mic in &self.mics {
            for &(x, y) in &self.positions() {
                let taps = tap_set(&mic.pose_of(x, y)?, &mic.params)?;
                let decay = if mic.params.m < 1.0 {
                    IntegratorState::decay_samples(mic.params.g, TAIL_FLOOR_DB)
                } else {
                    0
                };
                tail = tail.max(taps.max_delay().ceil() as usize + 3 + decay);
            }
        }
        Ok(tail)
    }
}

fn check_range(
    pose: &ScenePose,
    taps: &TapSet,
    params: &MicParams,
    max_distance: f64,
) -> Result<()> {
    let farthest = taps.max_delay() * params.c0 / params.fs;
    if farthest > max_distance {
        return Err(Error::OutOfRange {
            distance: farthest.max(pose.r()),
            max: max_distance,
        });
    }
    Ok(())
}

/// The time-domain filter of one microphone for fixed pose and parameters.
#[derive(Debug, Clone)]
struct Kernel {
    params: MicParams,
    pose: ScenePose,
    taps: TapSet,
    omni_weight: f64,
    bidi_weight: f64,
    integrator: IntegratorState,
}

impl Kernel {
    fn new(params: MicParams, pose: ScenePose) -> Result<Self> {
        let taps = tap_set(&pose, &params)?;
        Ok(Self {
            params,
            pose,
            taps,
            omni_weight: params.m,
            bidi_weight: (1.0 - params.m) * params.c0 / params.d,
            integrator: IntegratorState::new(params.g, params.fs),
        })
    }

    #[inline]
    fn dipole_input(&self, line: &FractionalDelayLine, extra: f64, mode: Interpolation) -> f64 {
        let [_, g1, g2] = self.taps.gains;
        let [_, d1, d2] = self.taps.delays;
        g1 * line.read_unchecked(d1 + extra, mode) - g2 * line.read_unchecked(d2 + extra, mode)
    }

    #[inline]
    fn tick(&mut self, line: &FractionalDelayLine, mode: Interpolation) -> f64 {
        let omni = self.taps.gains[0] * line.read_unchecked(self.taps.delays[0], mode);
        let bidi = self.integrator.step(self.dipole_input(line, 0.0, mode));
        self.omni_weight * omni + self.bidi_weight * bidi
    }

    /// Bring the integrator to the state it would have reached had this kernel run all along.
    fn warm_up(&mut self, line: &FractionalDelayLine, mode: Interpolation, limit: usize) {
        self.integrator.reset();
        let n = IntegratorState::decay_samples(self.params.g, -240.0).min(limit);
        for back in (0..n).rev() {
            let x = self.dipole_input(line, back as f64, mode);
            self.integrator.step(x);
        }
    }
}

#[derive(Debug, Clone)]
struct Fade {
    old: Kernel,
    pos: usize,
    len: usize,
}

/// One microphone inside a running renderer.
#[derive(Debug, Clone)]
pub struct MicVoice {
    placement: MicPlacement,
    kernel: Kernel,
    fade: Option<Fade>,
}

impl MicVoice {
    pub fn label(&self) -> &str {
        &self.placement.label
    }

    pub fn placement(&self) -> &MicPlacement {
        &self.placement
    }

    pub fn params(&self) -> &MicParams {
        &self.kernel.params
    }

    pub fn pose(&self) -> &ScenePose {
        &self.kernel.pose
    }

    pub fn taps(&self) -> &TapSet {
        &self.kernel.taps
    }

    pub fn is_fading(&self) -> bool {
        self.fade.is_some()
    }

    #[inline]
    fn tick(&mut self, line: &FractionalDelayLine, mode: Interpolation) -> f64 {
        let y = self.kernel.tick(line, mode);
        match &mut self.fade {
            None => y,
            Some(f) => {
                let old = f.old.tick(line, mode);
                f.pos += 1;
                let a = f.pos as f64 / f.len as f64;
                if f.pos >= f.len {
                    self.fade = None;
                }
                (1.0 - a) * old + a * y
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Renderer {
    fs: f64,
    options: EngineOptions,
    line: FractionalDelayLine,
    tap_limit: f64,
    voices: Vec<MicVoice>,
    source: (f64, f64),
    trajectory: Option<Trajectory>,
    rendered: u64,
}

impl Renderer {
    pub fn new(scene: &Scene) -> Result<Self> {
        scene.validate()?;
        let c0_min = scene
            .mics
            .iter()
            .map(|m| m.params.c0)
            .fold(f64::INFINITY, f64::min);
        let tap_limit = scene.options.max_distance * scene.fs / c0_min;
        let line = FractionalDelayLine::new(tap_limit + WARMUP_MAX as f64 + 4.0)?;
        let voices = scene
            .mics
            .iter()
            .map(|mic| {
                let pose = mic.pose_of(scene.source.0, scene.source.1)?;
                Ok(MicVoice {
                    placement: mic.clone(),
                    kernel: Kernel::new(mic.params, pose)?,
                    fade: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            fs: scene.fs,
            options: scene.options.clone(),
            line,
            tap_limit,
            voices,
            source: scene.source,
            trajectory: scene.trajectory.clone(),
            rendered: 0,
        })
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn options(&self) -> &EngineOptions {
        &self.options
    }

    pub fn voices(&self) -> &[MicVoice] {
        &self.voices
    }

    pub fn source(&self) -> (f64, f64) {
        self.source
    }

    pub fn samples_rendered(&self) -> u64 {
        self.rendered
    }

    pub fn is_fading(&self) -> bool {
        self.voices.iter().any(MicVoice::is_fading)
    }

    /// Clears all history; poses and parameters are kept.
    pub fn reset(&mut self) {
        self.line.reset();
        for v in &mut self.voices {
            v.kernel.integrator.reset();
            v.fade = None;
        }
        self.rendered = 0;
    }

    /// Renders one block. `out` must hold one buffer per mic; each is resized to the input length.
    pub fn render_block(&mut self, input: &[f64], out: &mut [Vec<f64>]) -> Result<()> {
        if input.len() > self.options.block_size {
            return Err(Error::Invalid(format!(
                "block of {} samples exceeds the configured block size {}",
                input.len(),
                self.options.block_size
            )));
        }
        if out.len() != self.voices.len() {
            return Err(Error::Invalid(format!(
                "expected {} output buffers, got {}",
                self.voices.len(),
                out.len()
            )));
        }
        if let Some(tr) = &self.trajectory {
            let t = self.rendered as f64 / self.fs;
            let (x, y) = tr.position_at(t);
            if (x, y) != self.source {
                let ms = input.len().max(1) as f64 * 1000.0 / self.fs;
                self.move_source(x, y, Smoothing::Crossfade { ms })?;
            }
        }
        for buf in out.iter_mut() {
            buf.clear();
            buf.resize(input.len(), 0.0);
        }
        let mode = self.options.interpolation;
        for (n, &x) in input.iter().enumerate() {
            self.line.push(x);
            for (voice, buf) in self.voices.iter_mut().zip(out.iter_mut()) {
                buf[n] = voice.tick(&self.line, mode);
            }
        }
        self.rendered += input.len() as u64;
        Ok(())
    }

    fn fade_len(&self, smoothing: Smoothing) -> usize {
        match smoothing {
            Smoothing::None => 0,
            Smoothing::Crossfade { ms } => (ms * self.fs / 1000.0).round() as usize,
        }
    }

    fn check_limit(&self, kernel: &Kernel) -> Result<()> {
        if kernel.taps.max_delay() > self.tap_limit {
            return Err(Error::OutOfRange {
                distance: kernel.taps.max_delay() * kernel.params.c0 / self.fs,
                max: self.options.max_distance,
            });
        }
        Ok(())
    }

    fn install(&mut self, index: usize, mut next: Kernel, smoothing: Smoothing) {
        let len = self.fade_len(smoothing);
        let mode = self.options.interpolation;
        let voice = &mut self.voices[index];
        if len == 0 {
            next.integrator = carry_state(&voice.kernel.integrator, &next.params);
            voice.kernel = next;
            voice.fade = None;
            return;
        }
        next.warm_up(&self.line, mode, WARMUP_MAX);
        let old = std::mem::replace(&mut voice.kernel, next);
        // an interrupted fade is completed instantly before starting the next one
        voice.fade = Some(Fade { old, pos: 0, len });
    }

    fn prepare(&self, index: usize, params: MicParams, pose: ScenePose) -> Result<Kernel> {
        let voice = self
            .voices
            .get(index)
            .ok_or_else(|| Error::Invalid(format!("no mic with index {index}")))?;
        if params.fs != self.fs {
            return Err(Error::SampleRate {
                source_fs: self.fs,
                engine_fs: params.fs,
            });
        }
        let kernel = Kernel::new(params, pose).map_err(|e| e.for_mic(voice.label(), index))?;
        self.check_limit(&kernel)
            .map_err(|e| e.for_mic(voice.label(), index))?;
        Ok(kernel)
    }

    /// Sets the source pose seen by one mic directly in its local frame.
    pub fn update_pose(
        &mut self,
        index: usize,
        pose: ScenePose,
        smoothing: Smoothing,
    ) -> Result<()> {
        let params = *self.voice_checked(index)?.params();
        if self.voices[index].kernel.pose == pose {
            return Ok(());
        }
        let next = self.prepare(index, params, pose)?;
        self.install(index, next, smoothing);
        Ok(())
    }

    pub fn update_params(
        &mut self,
        index: usize,
        params: MicParams,
        smoothing: Smoothing,
    ) -> Result<()> {
        let voice = self.voice_checked(index)?;
        if voice.kernel.params == params {
            return Ok(());
        }
        let pose = voice.kernel.pose;
        let next = self.prepare(index, params, pose)?;
        self.install(index, next, smoothing);
        self.voices[index].placement.params = params;
        Ok(())
    }

    /// Moves the source in scene coordinates. Either every mic accepts the new position or nothing changes.
    pub fn move_source(&mut self, x: f64, y: f64, smoothing: Smoothing) -> Result<()> {
        let mut staged = Vec::with_capacity(self.voices.len());
        for (i, voice) in self.voices.iter().enumerate() {
            let pose = voice
                .placement
                .pose_of(x, y)
                .map_err(|e| e.for_mic(voice.label(), i))?;
            staged.push(if pose == voice.kernel.pose {
                None
            } else {
                Some(self.prepare(i, voice.kernel.params, pose)?)
            });
        }
        for (i, next) in staged.into_iter().enumerate() {
            if let Some(k) = next {
                self.install(i, k, smoothing);
            }
        }
        self.source = (x, y);
        Ok(())
    }

    fn voice_checked(&self, index: usize) -> Result<&MicVoice> {
        self.voices
            .get(index)
            .ok_or_else(|| Error::Invalid(format!("no mic with index {index}")))
    }
}

fn carry_state(prev: &IntegratorState, params: &MicParams) -> IntegratorState {
    let mut next = prev.clone();
    next.retune(params.g, params.fs);
    next
}

/// Result of an offline render.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub fs: f64,
    /// One buffer per mic, in scene order.
    pub channels: Vec<Vec<f64>>,
    /// Taps at the start of the render, per mic.
    pub taps: Vec<TapSet>,
    pub tail: usize,
}

impl Rendered {
    /// Samples with magnitude above full scale, per channel.
    pub fn over_full_scale(&self) -> Vec<usize> {
        self.channels
            .iter()
            .map(|c| c.iter().filter(|x| x.abs() > 1.0).count())
            .collect()
    }

    pub fn to_buffer(&self) -> AudioBuffer {
        AudioBuffer::from_planar(self.fs, &self.channels)
    }
}

/// Offline render of a mono buffer; the output runs past the input by the scene's tail.
pub fn render_file(scene: &Scene, source: &AudioBuffer) -> Result<Rendered> {
    if source.channels() != 1 {
        return Err(Error::NotMono(source.channels()));
    }
    if source.fs() != scene.fs {
        return Err(Error::SampleRate {
            source_fs: source.fs(),
            engine_fs: scene.fs,
        });
    }
    render_samples(scene, source.samples())
}

pub fn render_samples(scene: &Scene, input: &[f64]) -> Result<Rendered> {
    let mut engine = Renderer::new(scene)?;
    let tail = scene.tail_samples()?;
    let taps = engine.voices().iter().map(|v| *v.taps()).collect();
    let total = input.len() + tail;
    let bs = scene.options.block_size;
    let mut channels = vec![Vec::with_capacity(total); scene.mics.len()];
    let mut block = vec![Vec::with_capacity(bs); scene.mics.len()];
    let mut padded = Vec::with_capacity(bs);
    let mut pos = 0;
    while pos < total {
        let end = (pos + bs).min(total);
        padded.clear();
        padded.extend((pos..end).map(|i| input.get(i).copied().unwrap_or(0.0)));
        engine.render_block(&padded, &mut block)?;
        for (c, b) in channels.iter_mut().zip(&block) {
            c.extend_from_slice(b);
        }
        pos = end;
    }
    Ok(Rendered {
        fs: scene.fs,
        channels,
        taps,
        tail,
    })
}
