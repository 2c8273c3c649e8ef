use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use micfield::analysis::stimulus::pink_noise;
use micfield::analysis::{
    energy_balance, limit_case_deviation, pattern_sweep, proximity_curve, subband_pattern, BandSet,
};
use micfield::audio_io::{clip_count, read_wav, to_mono, write_wav};
use micfield::geometry::DEFAULT_FS;
use micfield::{
    render_file, EngineOptions, Error, ErrorKind, IntegratorMode, Interpolation, MicParams,
    SampleFormat, SceneConfig,
};
use micfield_service::{AppState, Pacing, SceneLayout, ServiceConfig};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "micfield",
    version,
    about = "Render and analyze a two-capsule microphone model"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render a scene config to a multichannel WAV file, one channel per mic.
    Render(RenderArgs),
    /// Monochromatic directivity pattern over angle, frequency and distance.
    Pattern(PatternArgs),
    /// Worst-case departure from the classical pattern per (frequency, distance).
    Limit(LimitArgs),
    /// Low-frequency boost against source distance.
    Proximity(ProximityArgs),
    /// Directivity measured per third-octave band with a broadband stimulus.
    Subband(SubbandArgs),
    /// Per-band energy over time of a WAV file.
    Energy(EnergyArgs),
    /// Start the HTTP/WebSocket service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// 16, 24 or 32f.
    #[arg(long, default_value = "16")]
    format: SampleFormat,
    /// Also write the run report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

/// Mic parameters: taken from a config's mic when given, then overridden by flags.
#[derive(Args)]
struct MicArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Label of the config mic to use; defaults to the first.
    #[arg(long)]
    mic: Option<String>,
    #[arg(long)]
    m: Option<f64>,
    /// Capsule spacing in meters.
    #[arg(long)]
    d: Option<f64>,
    /// Integrator loss coefficient.
    #[arg(long)]
    g: Option<f64>,
    #[arg(long)]
    c0: Option<f64>,
    #[arg(long)]
    fs: Option<f64>,
}

impl MicArgs {
    fn resolve(&self) -> Result<MicParams, Error> {
        let mut p = MicParams::default();
        if let Some(path) = &self.config {
            let cfg = SceneConfig::load(path)?;
            let mic = match &self.mic {
                Some(label) => cfg
                    .mics
                    .iter()
                    .find(|m| &m.label == label)
                    .ok_or_else(|| Error::Config(format!("no mic labelled '{label}'")))?,
                None => &cfg.mics[0],
            };
            p = MicParams {
                m: mic.m,
                d: mic.d,
                g: mic.g,
                c0: cfg.engine.c0,
                fs: cfg.engine.fs.unwrap_or(DEFAULT_FS),
            };
        }
        p.m = self.m.unwrap_or(p.m);
        p.d = self.d.unwrap_or(p.d);
        p.g = self.g.unwrap_or(p.g);
        p.c0 = self.c0.unwrap_or(p.c0);
        p.fs = self.fs.unwrap_or(p.fs);
        p.validate()?;
        Ok(p)
    }
}

#[derive(Args)]
struct PatternArgs {
    #[command(flatten)]
    mic: MicArgs,
    /// Frequencies in Hz.
    #[arg(long, value_delimiter = ',', default_value = "1000")]
    f: Vec<f64>,
    /// Distances in meters.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    r: Vec<f64>,
    /// Angle step in degrees.
    #[arg(long, default_value_t = 5.0)]
    step: f64,
    #[arg(long, default_value = "lossy")]
    integrator: IntegratorMode,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Polar plot of the first distance.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct LimitArgs {
    #[command(flatten)]
    mic: MicArgs,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "50,100,200,500,1000,2000,5000,10000"
    )]
    f: Vec<f64>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.05,0.1,0.2,0.5,1,2,5,10"
    )]
    r: Vec<f64>,
    #[arg(long, default_value_t = 5.0)]
    step: f64,
    #[arg(long, default_value = "ideal")]
    integrator: IntegratorMode,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProximityArgs {
    #[command(flatten)]
    mic: MicArgs,
    /// Source angle in degrees.
    #[arg(long, default_value_t = 0.0)]
    theta: f64,
    #[arg(long, default_value_t = 50.0)]
    f_low: f64,
    #[arg(long, default_value_t = 1000.0)]
    f_ref: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2,0.5,1,2")]
    r: Vec<f64>,
    #[arg(long, default_value = "lossy")]
    integrator: IntegratorMode,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SubbandArgs {
    #[command(flatten)]
    mic: MicArgs,
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    #[arg(long, default_value_t = 5.0)]
    step: f64,
    /// Stimulus WAV (downmixed to mono); seeded pink noise when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Pink noise length in seconds.
    #[arg(long, default_value_t = 2.0)]
    seconds: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "linear")]
    interpolation: Interpolation,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct EnergyArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    channel: usize,
    #[arg(long, default_value_t = 50.0)]
    frame_ms: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// Scene config; its mic layout is used for new sessions and its source opens the first one.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Render as fast as subscribers read instead of in real time.
    #[arg(long)]
    free_running: bool,
    #[arg(long, default_value_t = 64)]
    queue_depth: usize,
    #[arg(long, default_value_t = 64)]
    max_upload_mb: usize,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Validity => 3,
        ErrorKind::Io => 4,
        ErrorKind::Other => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Render(a) => cmd_render(a),
        Cmd::Pattern(a) => cmd_pattern(a),
        Cmd::Limit(a) => cmd_limit(a),
        Cmd::Proximity(a) => cmd_proximity(a),
        Cmd::Subband(a) => cmd_subband(a),
        Cmd::Energy(a) => cmd_energy(a),
        Cmd::Serve(a) => cmd_serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn angles(step_deg: f64) -> Result<Vec<f64>, Error> {
    if !(step_deg > 0.0 && step_deg <= 360.0) {
        return Err(Error::Param {
            name: "step",
            value: step_deg,
            reason: "angle step must lie in (0, 360] degrees",
        });
    }
    let n = (360.0 / step_deg).round() as usize;
    Ok((0..n).map(|i| (i as f64 * step_deg).to_radians()).collect())
}

#[derive(Serialize)]
struct MicReport {
    label: String,
    r: f64,
    theta_deg: f64,
    gains: [f64; 3],
    delays: [f64; 3],
    clipped: usize,
}

#[derive(Serialize)]
struct RenderReport {
    output: PathBuf,
    fs: f64,
    frames: usize,
    tail: usize,
    runtime_s: f64,
    mics: Vec<MicReport>,
}

fn cmd_render(a: RenderArgs) -> Result<(), Error> {
    let cfg = SceneConfig::load(&a.config)?;
    let source = read_wav(&cfg.source.path)?;
    let source = to_mono(&source);
    let scene = cfg.scene(source.fs())?;
    let start = Instant::now();
    let rendered = render_file(&scene, &source)?;
    let runtime_s = start.elapsed().as_secs_f64();
    write_wav(&rendered.to_buffer(), &a.out, a.format)?;

    let mics = scene
        .mics
        .iter()
        .zip(&rendered.taps)
        .zip(&rendered.channels)
        .map(|((mic, taps), ch)| {
            let pose = mic.pose_of(scene.source.0, scene.source.1)?;
            Ok(MicReport {
                label: mic.label.clone(),
                r: pose.r(),
                theta_deg: pose.theta().to_degrees(),
                gains: taps.gains,
                delays: taps.delays,
                clipped: clip_count(ch, a.format),
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let report = RenderReport {
        output: a.out.clone(),
        fs: rendered.fs,
        frames: rendered.channels[0].len(),
        tail: rendered.tail,
        runtime_s,
        mics,
    };
    println!(
        "rendered {} channel(s), {} frames at {} Hz in {:.3} s -> {}",
        report.mics.len(),
        report.frames,
        report.fs,
        report.runtime_s,
        report.output.display()
    );
    for m in &report.mics {
        println!(
            "  {}: r = {:.4} m, theta = {:.2} deg, gains = {:?}, delays = {:?}, clipped = {}",
            m.label, m.r, m.theta_deg, m.gains, m.delays, m.clipped
        );
    }
    if let Some(path) = &a.report {
        let json =
            serde_json::to_string_pretty(&report).map_err(|e| Error::Invalid(e.to_string()))?;
        std::fs::write(path, json)?;
    }
    Ok(())
}

fn cmd_pattern(a: PatternArgs) -> Result<(), Error> {
    let params = a.mic.resolve()?;
    let table = pattern_sweep(&params, &a.f, &a.r, &angles(a.step)?, a.integrator)?;
    if let Some(svg) = &a.svg {
        std::fs::write(svg, table.to_svg()?)?;
    }
    emit(a.out.as_deref(), &table.to_csv()?)
}

fn cmd_limit(a: LimitArgs) -> Result<(), Error> {
    let params = a.mic.resolve()?;
    let map = limit_case_deviation(&params, &a.f, &a.r, &angles(a.step)?, a.integrator)?;
    emit(a.out.as_deref(), &map.to_csv())
}

fn cmd_proximity(a: ProximityArgs) -> Result<(), Error> {
    let params = a.mic.resolve()?;
    let curve = proximity_curve(
        &params,
        a.theta.to_radians(),
        a.f_low,
        a.f_ref,
        &a.r,
        a.integrator,
    )?;
    emit(a.out.as_deref(), &curve.to_csv())
}

fn cmd_subband(a: SubbandArgs) -> Result<(), Error> {
    let mut params = a.mic.resolve()?;
    let stimulus = match &a.input {
        Some(path) => {
            let buf = to_mono(&read_wav(path)?);
            if a.mic.fs.is_none() {
                params.fs = buf.fs();
            }
            if buf.fs() != params.fs {
                return Err(Error::SampleRate {
                    source_fs: buf.fs(),
                    engine_fs: params.fs,
                });
            }
            buf.into_samples()
        }
        None => pink_noise((a.seconds * params.fs).round() as usize, 0.1, a.seed),
    };
    let options = EngineOptions {
        interpolation: a.interpolation,
        ..EngineOptions::default()
    };
    let bands = BandSet::third_octave(params.fs)?;
    let table = subband_pattern(&stimulus, &params, &angles(a.step)?, a.r, &bands, &options)?;
    if let Some(svg) = &a.svg {
        std::fs::write(svg, table.to_svg()?)?;
    }
    emit(a.out.as_deref(), &table.to_csv()?)
}

fn cmd_energy(a: EnergyArgs) -> Result<(), Error> {
    let buf = read_wav(&a.input)?;
    if a.channel >= buf.channels() {
        return Err(Error::Invalid(format!(
            "channel {} requested but the file has {}",
            a.channel,
            buf.channels()
        )));
    }
    let bands = BandSet::third_octave(buf.fs())?;
    let balance = energy_balance(&buf.channel(a.channel), buf.fs(), &bands, a.frame_ms)?;
    emit(a.out.as_deref(), &balance.to_csv())
}

fn cmd_serve(a: ServeArgs) -> Result<(), Error> {
    // everything that can fail on bad input happens before the socket is bound
    let (layout, initial) = match &a.config {
        Some(path) => {
            let cfg = SceneConfig::load(path)?;
            let source = read_wav(&cfg.source.path)?;
            cfg.scene(source.fs())?;
            (SceneLayout::from(&cfg), Some(source))
        }
        None => (SceneLayout::default(), None),
    };
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| Error::Config(format!("bad listen address: {e}")))?;
    let config = ServiceConfig {
        layout,
        pacing: if a.free_running {
            Pacing::Free
        } else {
            Pacing::Realtime
        },
        queue_depth: a.queue_depth,
        keepalive: Duration::from_secs(1),
        max_upload_bytes: a.max_upload_mb << 20,
    };
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("cannot bind {addr}: {e}"),
            ))
        })?;
        let state = AppState::new(config);
        println!("listening on http://{}", listener.local_addr()?);
        if let Some(source) = initial {
            let id = state
                .open_session(source, None)
                .map_err(|e| Error::Invalid(format!("initial session: {e:?}")))?;
            println!("session {id}");
        }
        std::io::stdout().flush()?;
        micfield_service::serve(listener, state, shutdown_signal()).await?;
        Ok(())
    })
}

async fn shutdown_signal() {
    let ctrl_c = tokio::signal::ctrl_c();
    #[cfg(unix)]
    {
        let mut term =
            match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
                Ok(s) => s,
                Err(_) => {
                    let _ = ctrl_c.await;
                    return;
                }
            };
        tokio::select! {
            _ = ctrl_c => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    {
        let _ = ctrl_c.await;
    }
}
