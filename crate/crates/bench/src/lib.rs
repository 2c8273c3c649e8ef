//! Benchmark fixtures shared by the criterion targets.

use micfield::render::MicPlacement;
use micfield::{EngineOptions, MicParams, Scene};

/// `n` mics on a 2 m circle around a source at the origin, with varied patterns.
pub fn ring_scene(n: usize, fs: f64) -> Scene {
    let mics = (0..n)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / n as f64;
            MicPlacement {
                label: format!("m{i}"),
                x: 2.0 * a.cos(),
                y: 2.0 * a.sin(),
                orientation: a + 0.3 * i as f64,
                params: MicParams {
                    fs,
                    ..MicParams::default().with_m(i as f64 / n as f64)
                },
            }
        })
        .collect();
    Scene {
        fs,
        mics,
        source: (0.0, 0.0),
        trajectory: None,
        options: EngineOptions::default(),
    }
}
