use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::frame::RgbFrame;

fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

struct Blob {
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    radius: f64,
    color: [f64; 3],
}

/// A synthetic clean video: a slowly panning smooth colour field with a few
/// soft-edged discs moving across it. Deterministic in `seed`.
pub fn procedural_scene(width: usize, height: usize, frames: usize, seed: u64) -> Vec<RgbFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);
    let scale = w.max(h).max(1.0);
    let freq: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(1.0..3.0) / scale,
                rng.random_range(1.0..3.0) / scale,
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let pan = (rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5));
    let mut blobs: Vec<Blob> = (0..4)
        .map(|_| Blob {
            x: rng.random_range(0.0..w),
            y: rng.random_range(0.0..h),
            vx: rng.random_range(-1.5..1.5),
            vy: rng.random_range(-1.0..1.0),
            radius: rng.random_range(0.06..0.16) * scale,
            color: [
                rng.random_range(0.1..0.9),
                rng.random_range(0.1..0.9),
                rng.random_range(0.1..0.9),
            ],
        })
        .collect();
    let tau = std::f64::consts::TAU;
    let plane = width * height;
    (0..frames)
        .map(|t| {
            let (ox, oy) = (pan.0 * t as f64, pan.1 * t as f64);
            let mut data = vec![0.0f32; 3 * plane];
            for y in 0..height {
                for x in 0..width {
                    let (px, py) = (x as f64 + ox, y as f64 + oy);
                    let mut rgb = [0.0f64; 3];
                    for (c, &(fx, fy, ph)) in freq.iter().enumerate() {
                        rgb[c] = 0.45 + 0.25 * (tau * (fx * px + fy * py) + ph).sin();
                    }
                    for b in &blobs {
                        let d = ((x as f64 - b.x).powi(2) + (y as f64 - b.y).powi(2)).sqrt();
                        let a = 1.0 - smoothstep(b.radius - 1.5, b.radius + 1.5, d);
                        for c in 0..3 {
                            rgb[c] = rgb[c] * (1.0 - a) + b.color[c] * a;
                        }
                    }
                    for c in 0..3 {
                        data[c * plane + y * width + x] = rgb[c].clamp(0.0, 1.0) as f32;
                    }
                }
            }
            for b in blobs.iter_mut() {
                b.x += b.vx;
                b.y += b.vy;
                if b.x < 0.0 || b.x > w {
                    b.vx = -b.vx;
                }
                if b.y < 0.0 || b.y > h {
                    b.vy = -b.vy;
                }
            }
            RgbFrame::from_vec(width, height, data).expect("consistent size")
        })
        .collect()
}
