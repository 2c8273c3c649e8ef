//! One render task per session.
//!
//! The task owns the renderer outright. HTTP handlers talk to it through a
//! command queue and get replies over oneshot channels, so parameter
//! changes are serialized and always land between two blocks.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use bytes::Bytes;
use micfield::{Error, MicParams, Renderer, Scene, ScenePose, TapSet};
use serde::{Deserialize, Serialize};
use tokio::sync::{mpsc, oneshot, Notify};
use tokio::time::MissedTickBehavior;

use crate::frame::{self, FrameHeader, FLAG_CROSSFADE, FLAG_GAP, FLAG_KEEPALIVE};
use crate::Pacing;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlayState {
    Playing,
    Paused,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportState {
    pub state: PlayState,
    /// Next sample to render, always a multiple of the block size or the source length.
    pub position: u64,
    pub position_s: f64,
    pub duration_s: f64,
    /// Audio blocks emitted so far.
    pub blocks: u64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "action", rename_all = "lowercase", deny_unknown_fields)]
pub enum TransportAction {
    Play,
    Pause,
    Seek { seconds: f64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicPatch {
    pub m: Option<f64>,
    pub d: Option<f64>,
    pub g: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

/// Effective state of one mic, as the renderer sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicView {
    pub index: usize,
    pub label: String,
    pub x: f64,
    pub y: f64,
    pub orientation: f64,
    pub m: f64,
    pub d: f64,
    pub g: f64,
    pub c0: f64,
    pub fs: f64,
    pub r: f64,
    pub theta: f64,
    pub theta_deg: f64,
    pub taps: TapSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub fs: f64,
    pub block_size: usize,
    pub snapshot: u64,
    pub source: Position,
    pub transport: TransportState,
    pub mics: Vec<MicView>,
}

/// Reply to a parameter change: the new snapshot and what every mic now uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEcho {
    pub snapshot: u64,
    /// Index of the first block rendered with this snapshot.
    pub applied_at_block: u64,
    pub source: Position,
    pub mics: Vec<MicView>,
}

pub(crate) enum Command {
    State(oneshot::Sender<SessionState>),
    PatchMic {
        index: usize,
        patch: MicPatch,
        reply: oneshot::Sender<Result<ParamEcho, Error>>,
    },
    PatchSource {
        to: Position,
        reply: oneshot::Sender<Result<ParamEcho, Error>>,
    },
    Transport {
        action: TransportAction,
        reply: oneshot::Sender<Result<TransportState, Error>>,
    },
    Subscribe(oneshot::Sender<Arc<Subscriber>>),
}

/// Bounded per-subscriber frame queue. When full, the oldest frame is
/// dropped and the reader gets a gap marker before the next frame.
pub(crate) struct Subscriber {
    queue: Mutex<SubQueue>,
    notify: Notify,
    closed: AtomicBool,
}

struct SubQueue {
    frames: VecDeque<Bytes>,
    depth: usize,
    dropped: bool,
}

impl Subscriber {
    fn new(depth: usize) -> Self {
        Self {
            queue: Mutex::new(SubQueue {
                frames: VecDeque::new(),
                depth: depth.max(1),
                dropped: false,
            }),
            notify: Notify::new(),
            closed: AtomicBool::new(false),
        }
    }

    fn push(&self, frame: Bytes) {
        let mut q = self.queue.lock().unwrap();
        if q.frames.len() >= q.depth {
            q.frames.pop_front();
            q.dropped = true;
        }
        q.frames.push_back(frame);
        drop(q);
        self.notify.notify_one();
    }

    pub(crate) async fn next(&self) -> Bytes {
        loop {
            {
                let mut q = self.queue.lock().unwrap();
                if q.dropped {
                    q.dropped = false;
                    // the marker takes the indices of the first frame that survived
                    let (block_index, snapshot_index, channels) = q
                        .frames
                        .front()
                        .and_then(|f| frame::decode(f).ok())
                        .map(|(h, _)| (h.block_index, h.snapshot_index, h.channels))
                        .unwrap_or((0, 0, 0));
                    return frame::encode(
                        &FrameHeader {
                            flags: FLAG_GAP,
                            block_index,
                            snapshot_index,
                            channels,
                            block_size: 0,
                        },
                        &[],
                    );
                }
                if let Some(f) = q.frames.pop_front() {
                    return f;
                }
            }
            self.notify.notified().await;
        }
    }

    pub(crate) fn close(&self) {
        self.closed.store(true, Ordering::Release);
    }

    fn is_closed(&self) -> bool {
        self.closed.load(Ordering::Acquire)
    }
}

pub(crate) struct SessionTask {
    pub id: String,
    pub engine: Renderer,
    pub source: Arc<Vec<f64>>,
    pub pacing: Pacing,
    pub keepalive: Duration,
    pub queue_depth: usize,
    pub playing: bool,
    pub position: usize,
    pub blocks: u64,
    pub snapshot: u64,
    pub subscribers: Vec<Arc<Subscriber>>,
    pub out: Vec<Vec<f64>>,
}

impl SessionTask {
    pub(crate) fn new(
        id: String,
        scene: &Scene,
        source: Arc<Vec<f64>>,
        cfg: &crate::ServiceConfig,
    ) -> Result<Self, Error> {
        let engine = Renderer::new(scene)?;
        Ok(Self {
            id,
            out: vec![Vec::new(); scene.mics.len()],
            engine,
            source,
            pacing: cfg.pacing,
            keepalive: cfg.keepalive,
            queue_depth: cfg.queue_depth,
            playing: false,
            position: 0,
            blocks: 0,
            snapshot: 0,
            subscribers: Vec::new(),
        })
    }

    pub(crate) async fn run(mut self, mut rx: mpsc::Receiver<Command>) {
        let block = self.engine.options().block_size;
        let period = Duration::from_secs_f64(block as f64 / self.engine.fs());
        let mut ticker = tokio::time::interval(period);
        ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
        let mut keepalive = tokio::time::interval(self.keepalive);
        keepalive.set_missed_tick_behavior(MissedTickBehavior::Delay);
        loop {
            if self.playing && self.pacing == Pacing::Free {
                loop {
                    match rx.try_recv() {
                        Ok(cmd) => self.handle(cmd),
                        Err(mpsc::error::TryRecvError::Empty) => break,
                        Err(mpsc::error::TryRecvError::Disconnected) => return,
                    }
                }
                if self.playing {
                    self.render_next();
                }
                tokio::task::yield_now().await;
                continue;
            }
            tokio::select! {
                cmd = rx.recv() => match cmd {
                    Some(cmd) => self.handle(cmd),
                    None => return,
                },
                _ = ticker.tick(), if self.playing => self.render_next(),
                _ = keepalive.tick(), if !self.playing => self.send_keepalive(),
            }
        }
    }

    fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::State(reply) => {
                let _ = reply.send(self.state());
            }
            Command::PatchMic {
                index,
                patch,
                reply,
            } => {
                let _ = reply.send(self.patch_mic(index, patch));
            }
            Command::PatchSource { to, reply } => {
                let _ = reply.send(self.move_source(to));
            }
            Command::Transport { action, reply } => {
                let _ = reply.send(self.transport(action));
            }
            Command::Subscribe(reply) => {
                let sub = Arc::new(Subscriber::new(self.queue_depth));
                self.subscribers.push(sub.clone());
                let _ = reply.send(sub);
            }
        }
    }

    fn patch_mic(&mut self, index: usize, patch: MicPatch) -> Result<ParamEcho, Error> {
        let voice = self
            .engine
            .voices()
            .get(index)
            .ok_or_else(|| Error::Invalid(format!("no mic with index {index}")))?;
        let current = *voice.params();
        let next = MicParams {
            m: patch.m.unwrap_or(current.m),
            d: patch.d.unwrap_or(current.d),
            g: patch.g.unwrap_or(current.g),
            ..current
        };
        next.validate()?;
        let smoothing = self.engine.options().smoothing();
        self.engine.update_params(index, next, smoothing)?;
        self.snapshot += 1;
        Ok(self.echo())
    }

    fn move_source(&mut self, to: Position) -> Result<ParamEcho, Error> {
        let smoothing = self.engine.options().smoothing();
        self.engine.move_source(to.x, to.y, smoothing)?;
        self.snapshot += 1;
        Ok(self.echo())
    }

    fn transport(&mut self, action: TransportAction) -> Result<TransportState, Error> {
        let block = self.engine.options().block_size;
        match action {
            TransportAction::Play => {
                if self.position >= self.source.len() {
                    self.position = 0;
                    self.engine.reset();
                }
                self.playing = !self.source.is_empty();
            }
            TransportAction::Pause => self.playing = false,
            TransportAction::Seek { seconds } => {
                if !(seconds.is_finite() && seconds >= 0.0) {
                    return Err(Error::Param {
                        name: "seconds",
                        value: seconds,
                        reason: "seek target must be finite and >= 0",
                    });
                }
                let target = (seconds * self.engine.fs()) as usize;
                self.position = (target / block * block).min(self.source.len());
                // history before the seek point is not replayed
                self.engine.reset();
            }
        }
        Ok(self.transport_state())
    }

    fn render_next(&mut self) {
        let len = self.source.len();
        if self.position >= len {
            self.playing = false;
            return;
        }
        let n = self.engine.options().block_size.min(len - self.position);
        let before = (self.engine.is_fading(), self.engine.source());
        let input = &self.source[self.position..self.position + n];
        if let Err(e) = self.engine.render_block(input, &mut self.out) {
            tracing::warn!(session = %self.id, "render stopped: {e}");
            self.playing = false;
            return;
        }
        let fading = before.0 || self.engine.is_fading() || before.1 != self.engine.source();
        let channels = self.out.len();
        let mut samples = Vec::with_capacity(n * channels);
        for i in 0..n {
            samples.extend(self.out.iter().map(|c| c[i] as f32));
        }
        let bytes = frame::encode(
            &FrameHeader {
                flags: if fading { FLAG_CROSSFADE } else { 0 },
                block_index: self.blocks,
                snapshot_index: self.snapshot,
                channels: channels as u16,
                block_size: n as u32,
            },
            &samples,
        );
        self.blocks += 1;
        self.position += n;
        if self.position >= len {
            self.playing = false;
        }
        self.broadcast(bytes);
    }

    fn send_keepalive(&mut self) {
        let bytes = frame::encode(
            &FrameHeader {
                flags: FLAG_KEEPALIVE,
                block_index: self.blocks,
                snapshot_index: self.snapshot,
                channels: self.out.len() as u16,
                block_size: 0,
            },
            &[],
        );
        self.broadcast(bytes);
    }

    fn broadcast(&mut self, bytes: Bytes) {
        self.subscribers.retain(|s| !s.is_closed());
        for s in &self.subscribers {
            s.push(bytes.clone());
        }
    }

    fn mic_views(&self) -> Vec<MicView> {
        self.engine
            .voices()
            .iter()
            .enumerate()
            .map(|(index, v)| {
                let p = v.params();
                let pose: &ScenePose = v.pose();
                let pl = v.placement();
                MicView {
                    index,
                    label: v.label().to_string(),
                    x: pl.x,
                    y: pl.y,
                    orientation: pl.orientation,
                    m: p.m,
                    d: p.d,
                    g: p.g,
                    c0: p.c0,
                    fs: p.fs,
                    r: pose.r(),
                    theta: pose.theta(),
                    theta_deg: pose.theta().to_degrees(),
                    taps: *v.taps(),
                }
            })
            .collect()
    }

    fn source_position(&self) -> Position {
        let (x, y) = self.engine.source();
        Position { x, y }
    }

    fn echo(&self) -> ParamEcho {
        ParamEcho {
            snapshot: self.snapshot,
            applied_at_block: self.blocks,
            source: self.source_position(),
            mics: self.mic_views(),
        }
    }

    fn transport_state(&self) -> TransportState {
        let fs = self.engine.fs();
        TransportState {
            state: if self.playing {
                PlayState::Playing
            } else {
                PlayState::Paused
            },
            position: self.position as u64,
            position_s: self.position as f64 / fs,
            duration_s: self.source.len() as f64 / fs,
            blocks: self.blocks,
        }
    }

    fn state(&self) -> SessionState {
        SessionState {
            id: self.id.clone(),
            fs: self.engine.fs(),
            block_size: self.engine.options().block_size,
            snapshot: self.snapshot,
            source: self.source_position(),
            transport: self.transport_state(),
            mics: self.mic_views(),
        }
    }
}
