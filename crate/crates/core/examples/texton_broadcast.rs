//! Broadcast maps of a small texton bank, and what the random phase does to them.
//!
//! ```text
//! cargo run --release --example texton_broadcast
//! ```

mod common;

use std::f64::consts::TAU;

use texgen::image_io::save_gray;
use texgen::rng::RngStream;
use texgen::texton::{compute_broadcast_map, sample_phase, tb_forward, PhaseSample, SineParams, TextonBank};

fn main() {
    let dir = common::out_dir("texton_broadcast");
    let sine = vec![
        SineParams { raw_freq: [-2.0, -2.0], phase: 0.0, amplitude: 1.0, offset: 0.0 },
        SineParams { raw_freq: [-1.0, -4.0], phase: 1.0, amplitude: 0.5, offset: 0.2 },
        SineParams { raw_freq: [-3.5, -1.5], phase: 0.0, amplitude: 0.8, offset: -0.1 },
    ];
    // three textons in a 2-channel space
    let bank = TextonBank::new(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.7, -0.7]], sine.clone()).unwrap();
    let (h, w) = (48, 48);

    for (i, s) in sine.iter().enumerate() {
        let m = compute_broadcast_map(s, PhaseSample::ZERO, h, w).unwrap();
        let vals: Vec<f32> = m.values.iter().map(|v| (0.5 + 0.5 * v) as f32).collect();
        save_gray(&dir.join(format!("map{i}.png")), &vals, h, w, 1.0).unwrap();
    }

    // Δ shifts every map at once; a full turn changes nothing
    let mut rng = RngStream::new(3);
    for k in 0..4 {
        let ph = sample_phase(&mut rng, false);
        let y = tb_forward(&bank, ph, h, w).unwrap();
        let ch0: Vec<f32> = y[..h * w].iter().map(|v| (0.5 + 0.35 * v) as f32).collect();
        save_gray(&dir.join(format!("channel0_phase{k}.png")), &ch0, h, w, 1.0).unwrap();
        let turned = tb_forward(&bank, PhaseSample { delta: ph.delta + TAU, ..ph }, h, w).unwrap();
        let diff = y.iter().zip(&turned).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("Δ = {:.3}: max |Y(Δ) - Y(Δ + 2π)| = {diff:.1e}", ph.delta);
    }
    println!("wrote maps to {}", dir.display());
}
