//! Acceptance gate: runs every primary criterion at its stated tolerance
//! and prints one PASS/FAIL line each. Exits non-zero if any criterion fails.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::time::{Duration, Instant};

use futures::StreamExt;
use micfield::analysis::stimulus::{pink_noise, sine, white_noise};
use micfield::analysis::{
    default_angles, limit_case_deviation, proximity_curve, subband_pattern, BandSet,
};
use micfield::audio_io::{decode_wav, encode_wav, read_wav, write_wav};
use micfield::config::MicConfig;
use micfield::filters::{
    default_grid, directivity_magnitude, directivity_response, global_response, omni_response,
    IntegratorState,
};
use micfield::{
    render_samples, AudioBuffer, EngineOptions, IntegratorMode, Interpolation, MicParams,
    SampleFormat, Scene, ScenePose,
};
use micfield_service::frame;
use micfield_service::{AppState, Pacing, Position, SceneLayout, ServiceConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Criterion 1: far-field, low-frequency limit with the ideal integrator.
fn limit_case() -> Outcome {
    let start = Instant::now();
    let mut worst: Vec<(f64, f64)> = Vec::new();
    for m in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let p = MicParams::default().with_m(m);
        let map = limit_case_deviation(
            &p,
            &[50.0],
            &[10.0],
            &default_angles(),
            IntegratorMode::Ideal,
        )
        .unwrap();
        worst.push((m, map.get(0, 0)));
    }
    let runtime = start.elapsed();
    let pass = worst.iter().all(|&(_, d)| d < 0.01) && runtime < Duration::from_secs(1);
    let per_m: Vec<String> = worst
        .iter()
        .map(|(m, d)| format!("m={m}: {d:.4}"))
        .collect();
    outcome(
        pass,
        format!(
            "max | |H_dir| - |m+(1-m)cos| | per m: {} (limit 0.01); runtime {:.3} s",
            per_m.join(", "),
            runtime.as_secs_f64()
        ),
    )
}

/// Criterion 2: the figure-eight null at 90 degrees in the time-domain engine.
fn exact_nulls() -> Outcome {
    let fs = 44_100.0;
    let n = 44_100;
    let mut impulse = vec![0.0; n];
    impulse[0] = 1.0;
    let stimuli = [
        ("white", white_noise(n, 0.9, 1)),
        ("pink", pink_noise(n, 0.2, 2)),
        ("sine", sine(1000.0, fs, n, 0.7)),
        ("impulse", impulse),
    ];
    let mut pass = true;
    let mut worst = 0.0f64;
    let mut slowest = Duration::ZERO;
    for r in [0.02, 0.3, 5.0] {
        let scene = Scene::single(
            MicParams::default().with_m(0.0),
            ScenePose::new(r, FRAC_PI_2).unwrap(),
            EngineOptions::default(),
        );
        for (_, x) in &stimuli {
            let start = Instant::now();
            let out = render_samples(&scene, x).unwrap();
            let elapsed = start.elapsed();
            let rms = |v: &[f64]| (v.iter().map(|s| s * s).sum::<f64>() / v.len() as f64).sqrt();
            let ratio = rms(&out.channels[0]) / rms(x);
            worst = worst.max(ratio);
            slowest = slowest.max(elapsed);
            pass &= ratio < 1e-9 && elapsed < Duration::from_secs(1);
        }
    }
    outcome(
        pass,
        format!(
            "worst output/input RMS {worst:e} over 4 stimuli x 3 distances (limit 1e-9); slowest {:.3} s",
            slowest.as_secs_f64()
        ),
    )
}

/// Criterion 3: H = H_omni * H_dir pointwise.
fn factorization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let fs = 44_100.0;
    let grid = default_grid(fs);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let m = rng.random_range(0.0..=1.0);
        let d: f64 = rng.random_range(0.005..0.05);
        // log-uniform from the validity bound to 10 m
        let r = (d / 2.0) * (20.0 / d).powf(rng.random_range(0.0..1.0));
        let theta = rng.random_range(0.0..TAU);
        let p = MicParams::default().with_m(m).with_d(d);
        let pose = ScenePose::new(r, theta).unwrap();
        for mode in [IntegratorMode::Lossy, IntegratorMode::Ideal] {
            let h = global_response(&pose, &p, &grid, mode).unwrap();
            let o = omni_response(&pose, &p, &grid).unwrap();
            let dir = directivity_response(&pose, &p, &grid, mode).unwrap();
            for i in 0..grid.len() {
                let err = (h.gains[i] - o.gains[i] * dir.gains[i]).norm() / h.gains[i].norm();
                worst = worst.max(err);
            }
        }
    }
    outcome(
        worst < 1e-12,
        format!("worst |H - H_omni H_dir| / |H| = {worst:e} over 100 draws x 1024 points x 2 integrators (limit 1e-12)"),
    )
}

/// Least-squares fit of `a sin(wn) + b cos(wn)`; returns the complex gain `a + jb` as (magnitude, phase).
fn fit_sine(y: &[f64], w: f64, offset: usize) -> (f64, f64) {
    let (mut ss, mut sc, mut cc, mut ys, mut yc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, &v) in y.iter().enumerate() {
        let (s, c) = (w * (offset + i) as f64).sin_cos();
        ss += s * s;
        sc += s * c;
        cc += c * c;
        ys += v * s;
        yc += v * c;
    }
    let det = ss * cc - sc * sc;
    let a = (ys * cc - yc * sc) / det;
    let b = (yc * ss - ys * sc) / det;
    (a.hypot(b), b.atan2(a))
}

/// Criterion 4: rendered sines against the lossy global response.
fn engine_vs_formula() -> Outcome {
    let start = Instant::now();
    let fs = 44_100.0;
    let options = EngineOptions {
        interpolation: Interpolation::Lagrange4,
        ..EngineOptions::default()
    };
    let mut count = 0;
    let (mut worst_db, mut worst_deg) = (0.0f64, 0.0f64);
    let mut worst_at = String::new();
    for f in [100.0, 315.0, 1000.0, 2000.0, 4000.0] {
        for theta_deg in [0.0, 30.0, 60.0, 120.0, 150.0] {
            for r in [0.05, 0.5, 3.0] {
                for m in [0.0, 0.5, 1.0] {
                    let p = MicParams::default().with_m(m);
                    let pose = ScenePose::new(r, f64::to_radians(theta_deg)).unwrap();
                    let scene = Scene::single(p, pose, options.clone());
                    let skip = (fs * r / p.c0) as usize + 1024;
                    let window = 8192;
                    let x = sine(f, fs, skip + window, 0.5);
                    let y = render_samples(&scene, &x).unwrap();
                    let w = TAU * f / fs;
                    let (mag, phase) = fit_sine(&y.channels[0][skip..skip + window], w, skip);
                    let h = global_response(&pose, &p, &[f], IntegratorMode::Lossy)
                        .unwrap()
                        .gains[0];
                    let db = (20.0 * (mag / (0.5 * h.norm())).log10()).abs();
                    let mut dphi = (phase - h.arg()).rem_euclid(TAU);
                    if dphi > PI {
                        dphi -= TAU;
                    }
                    let deg = dphi.abs().to_degrees();
                    if db > worst_db || deg > worst_deg {
                        worst_at = format!("f={f} theta={theta_deg} r={r} m={m}");
                    }
                    worst_db = worst_db.max(db);
                    worst_deg = worst_deg.max(deg);
                    count += 1;
                }
            }
        }
    }
    let runtime = start.elapsed();
    outcome(
        count >= 200 && worst_db < 0.1 && worst_deg < 1.0 && runtime < Duration::from_secs(120),
        format!(
            "{count} combos, worst {worst_db:.4} dB / {worst_deg:.4} deg (limits 0.1 dB / 1 deg, last worst at {worst_at}); runtime {:.2} s",
            runtime.as_secs_f64()
        ),
    )
}

/// Criterion 5: impulse ratio and DC gain of the lossy integrator.
fn integrator_contract() -> Outcome {
    let (g, fs) = (0.9, 44_100.0);
    let mut it = IntegratorState::new(g, fs);
    let h: Vec<f64> = (0..300)
        .map(|n| it.step(if n == 0 { 1.0 } else { 0.0 }))
        .collect();
    let worst_ratio = (1..h.len() - 1)
        .filter(|&n| h[n] > 1e-300)
        .map(|n| (h[n + 1] / h[n] - g).abs())
        .fold(0.0, f64::max);
    let want = 1.0 / (fs * (1.0 - g));
    let analytic = micfield::filters::IntegratorState::response(g, fs, 0.0);
    let mut it = IntegratorState::new(g, fs);
    let settled = (0..2000).map(|_| it.step(1.0)).last().unwrap();
    let dc_err = ((analytic.re - want).abs() / want)
        .max(analytic.im.abs() / want)
        .max((settled - want).abs() / want);
    outcome(
        worst_ratio < 1e-12 && dc_err < 1e-12 && (want - 1.0 / 4410.0).abs() < 1e-18,
        format!("max |y[n+1]/y[n] - g| = {worst_ratio:e}; DC gain relative error {dc_err:e} vs 1/4410 (limit 1e-12)"),
    )
}

/// Criterion 6: proximity boost.
fn proximity() -> Outcome {
    let radii = [0.05, 0.1, 0.2, 0.5, 1.0, 2.0];
    let c = proximity_curve(
        &MicParams::default(),
        0.0,
        50.0,
        1000.0,
        &radii,
        IntegratorMode::Lossy,
    )
    .unwrap();
    let decreasing = c.boost_db.windows(2).all(|w| w[0] > w[1]);
    let boosts: Vec<String> = c.boost_db.iter().map(|b| format!("{b:.2}")).collect();
    outcome(
        decreasing && c.boost_db[0] > 3.0,
        format!(
            "boost(50 Hz vs 1 kHz) dB over r = {radii:?}: [{}]; strictly decreasing: {decreasing}; +{:.2} dB at 5 cm (limit > 3)",
            boosts.join(", "),
            c.boost_db[0]
        ),
    )
}

/// Band-averaged lossy |H_dir| for a 1/f stimulus on an `n`-point grid.
fn band_oracle(p: &MicParams, r: f64, theta: f64, bands: &BandSet, band: usize, n: usize) -> f64 {
    let (lo, hi) = bands.bounds(band);
    let (mut num, mut den) = (0.0, 0.0);
    for k in 1..=n / 2 {
        let f = k as f64 * p.fs / n as f64;
        if f >= lo && f < hi {
            let h = directivity_magnitude(
                &ScenePose::new(r, theta).unwrap(),
                p,
                f,
                IntegratorMode::Lossy,
            )
            .unwrap();
            num += h * h / k as f64;
            den += 1.0 / k as f64;
        }
    }
    (num / den).sqrt()
}

/// Criterion 7: subband directivity depends on band and distance.
fn subband_dependence() -> Outcome {
    let fs = 44_100.0;
    let n = 1 << 16;
    let x = pink_noise(n, 0.1, 7);
    let bands = BandSet::third_octave(fs).unwrap();
    let p = MicParams::default();
    let angles = default_angles();
    let opts = EngineOptions::default();
    let near = subband_pattern(&x, &p, &angles, 0.1, &bands, &opts).unwrap();
    let far = subband_pattern(&x, &p, &angles, 10.0, &bands, &opts).unwrap();
    let reference: Vec<f64> = far.slice(0, 0);

    let mut spread = 0.0f64;
    let mut spread_at = String::new();
    for b in 0..bands.len() {
        for (a, &refv) in reference.iter().enumerate() {
            if refv < 0.1 {
                continue;
            }
            let db = (20.0 * (near.get(a, b, 0) / refv).log10()).abs();
            if db > spread {
                spread = db;
                spread_at = format!("{} Hz, {:.0} deg", bands.label(b), angles[a].to_degrees());
            }
        }
    }
    let far_err = angles
        .iter()
        .enumerate()
        .map(|(a, &th)| {
            (20.0 * (far.get(a, 0, 0) / band_oracle(&p, 10.0, th, &bands, 0, n)).log10()).abs()
        })
        .fold(0.0, f64::max);
    outcome(
        spread > 1.0 && far_err < 1.0,
        format!(
            "r=0.1 m vs far-field low band: max {spread:.2} dB at {spread_at} (needs > 1); r=10 m lowest band vs lossy oracle: max {far_err:.3} dB (limit 1)"
        ),
    )
}

/// Criterion 8: offline determinism and stream equivalence over 10 s.
fn determinism_and_stream() -> Outcome {
    let fs = 44_100.0;
    let n = 441_000;
    let x: Vec<f64> = pink_noise(n, 0.1, 9)
        .iter()
        .map(|&v| v as f32 as f64)
        .collect();
    let layout = SceneLayout {
        mics: vec![
            MicConfig {
                label: "front".into(),
                x: 0.0,
                y: 0.0,
                orientation: 0.0,
                m: 0.5,
                d: 0.02,
                g: 0.9,
            },
            MicConfig {
                label: "side".into(),
                x: 0.3,
                y: -0.4,
                orientation: 1.0,
                m: 0.2,
                d: 0.03,
                g: 0.95,
            },
        ],
        source: Position { x: 0.7, y: 0.2 },
        ..SceneLayout::default()
    };
    let scene = layout.scene(fs).unwrap();
    let a = render_samples(&scene, &x).unwrap();
    let b = render_samples(&scene, &x).unwrap();
    let bitwise = a.channels.iter().zip(&b.channels).all(|(p, q)| {
        p.len() == q.len() && p.iter().zip(q).all(|(u, v)| u.to_bits() == v.to_bits())
    });

    let streamed = tokio::runtime::Runtime::new()
        .unwrap()
        .block_on(stream_once(layout, x));
    let want: Vec<f32> = (0..n)
        .flat_map(|i| a.channels.iter().map(move |c| c[i] as f32))
        .collect();
    let (equal, frames) = match &streamed {
        Ok((samples, frames)) => (
            samples.len() == want.len()
                && samples
                    .iter()
                    .zip(&want)
                    .all(|(u, v)| u.to_bits() == v.to_bits()),
            *frames,
        ),
        Err(_) => (false, 0),
    };
    outcome(
        bitwise && equal,
        format!(
            "offline bitwise reproducible: {bitwise}; {frames} streamed frames, {} samples x 2 mics identical to the offline render: {equal}{}",
            n,
            streamed.err().map(|e| format!(" ({e})")).unwrap_or_default()
        ),
    )
}

async fn stream_once(layout: SceneLayout, x: Vec<f64>) -> Result<(Vec<f32>, usize), String> {
    let cfg = ServiceConfig {
        layout,
        pacing: Pacing::Free,
        queue_depth: 4096,
        keepalive: Duration::from_millis(50),
        ..ServiceConfig::default()
    };
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0")
        .await
        .map_err(|e| e.to_string())?;
    let addr = listener.local_addr().unwrap();
    tokio::spawn(micfield_service::serve(
        listener,
        AppState::new(cfg),
        std::future::pending(),
    ));
    let http = reqwest::Client::new();
    let wav = encode_wav(&AudioBuffer::mono(44_100.0, x), SampleFormat::Float32)
        .unwrap()
        .0;
    let created: serde_json::Value = http
        .post(format!("http://{addr}/sessions"))
        .header("content-type", "audio/wav")
        .body(wav)
        .send()
        .await
        .map_err(|e| e.to_string())?
        .json()
        .await
        .map_err(|e| e.to_string())?;
    let id = created["id"].as_str().ok_or("no session id")?.to_string();
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/sessions/{id}/stream"))
        .await
        .map_err(|e| e.to_string())?;
    http.post(format!("http://{addr}/sessions/{id}/transport"))
        .json(&serde_json::json!({"action": "play"}))
        .send()
        .await
        .map_err(|e| e.to_string())?;
    let mut samples = Vec::new();
    let mut frames = 0usize;
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(30), ws.next())
            .await
            .map_err(|_| "stream timed out".to_string())?
            .ok_or("stream closed")?
            .map_err(|e| e.to_string())?;
        let tokio_tungstenite::tungstenite::Message::Binary(bytes) = msg else {
            continue;
        };
        let (h, s) = frame::decode(&bytes).map_err(|e| e.to_string())?;
        if h.flags & frame::FLAG_GAP != 0 {
            return Err("gap in stream".into());
        }
        if h.flags & frame::FLAG_KEEPALIVE != 0 {
            if frames > 0 {
                return Ok((samples, frames));
            }
            continue;
        }
        if h.block_index != frames as u64 {
            return Err(format!("block {} arrived as #{frames}", h.block_index));
        }
        frames += 1;
        samples.extend(s);
    }
}

/// Criterion 9: 16-bit WAV round trip and exact clip counts.
fn wav_round_trip() -> Outcome {
    let all: Vec<f64> = (i16::MIN..=i16::MAX).map(|v| v as f64 / 32_768.0).collect();
    let buf = AudioBuffer::new(
        44_100.0,
        2,
        [all.clone(), all.iter().rev().copied().collect()].concat(),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rt.wav");
    let clipped = write_wav(&buf, &path, SampleFormat::Pcm16).unwrap();
    let back = read_wav(&path).unwrap();
    let lossless = clipped == 0 && back.samples() == buf.samples() && back.channels() == 2;

    // 1.0 and 0.99999 both round to 32768, one step past the largest code
    let probe = vec![
        1.0,
        0.99999,
        32_767.0 / 32_768.0,
        -1.0,
        -1.00002,
        2.5,
        -7.0,
        0.0,
        0.5,
    ];
    let expected = 5;
    let (bytes, counted) = encode_wav(
        &AudioBuffer::mono(44_100.0, probe.clone()),
        SampleFormat::Pcm16,
    )
    .unwrap();
    let decoded = decode_wav(&bytes).unwrap();
    let clamped = decoded.samples()[0] == 32_767.0 / 32_768.0 && decoded.samples()[6] == -1.0;
    outcome(
        lossless && counted == expected && clamped,
        format!(
            "all 65536 codes x 2 channels round-trip exactly: {lossless}; clip count {counted} (expected {expected}); clamped to range: {clamped}"
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("limit-case recovery", limit_case),
        ("exact nulls", exact_nulls),
        ("factorization identity", factorization),
        ("engine vs formula", engine_vs_formula),
        ("integrator contract", integrator_contract),
        ("proximity effect", proximity),
        ("frequency/location dependence", subband_dependence),
        ("determinism and stream equivalence", determinism_and_stream),
        ("WAV round trip", wav_round_trip),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {} [{}]: {} - {}",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
