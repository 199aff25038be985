mod common;

use common::*;
use egvd::events::{build_voxel_grid, simulate_events, EventStream, SimConfig};
use egvd::frame::{Plane, RgbFrame};
use egvd::metrics::{psnr, ssim, SsimConfig};
use egvd::rain::{overlay, rasterize_streak};
use egvd::training::interval_slices;
use rand::Rng;

#[test]
fn simulator_matches_per_pixel_reference() {
    let mut r = rng(1);
    for (case, c) in [0.1, 0.15, 0.3].into_iter().cycle().take(12).enumerate() {
        let frames: Vec<(u64, Plane)> = (0..10).map(|k| (k as u64 * 40_000, random_plane(&mut r, 8, 8))).collect();
        let cfg = SimConfig {
            contrast_threshold: c,
            refractory_us: if case % 4 == 3 { 5_000 } else { 0 },
            ..SimConfig::default()
        };
        let got = simulate_events(&frames, &cfg).unwrap();
        assert_eq!(got.events, simulate_oracle(&frames, &cfg), "case {case}");
        assert_eq!((got.t_start, got.t_end), (0, 360_000));
    }
}

#[test]
fn voxel_grid_matches_double_loop() {
    let mut r = rng(2);
    for _ in 0..20 {
        let bins = r.random_range(2..12);
        let t0 = r.random_range(0..1000);
        let t1 = t0 + r.random_range(0..5000);
        let s = random_stream(&mut r, 7, 5, t0, t1, 300);
        let g = build_voxel_grid(&s, bins).unwrap();
        for (a, b) in g.data.iter().zip(voxel_oracle(&s, bins)) {
            assert!((*a as f64 - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn ssim_matches_windowed_reference() {
    let mut r = rng(3);
    for _ in 0..5 {
        let a: Vec<f32> = (0..3 * 32 * 32).map(|_| r.random()).collect();
        let b: Vec<f32> = a.iter().map(|v| (v + r.random_range(-0.3..0.3f32)).clamp(0.0, 1.0)).collect();
        let got = ssim(&a, &b, 3, 32, 32, &SsimConfig::default()).unwrap();
        let want = ssim_oracle(&a, &b, 3, 32, 32);
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
}

#[test]
fn ssim_of_constant_images_has_closed_form() {
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    for (x, y) in [(0.0f32, 1.0f32), (0.25, 0.75), (0.4, 0.4)] {
        let a = vec![x; 16 * 16];
        let b = vec![y; 16 * 16];
        let (x, y) = (x as f64, y as f64);
        // variances vanish, so only the luminance term remains
        let want = (2.0 * x * y + c1) * c2 / ((x * x + y * y + c1) * c2);
        let got = ssim(&a, &b, 1, 16, 16, &SsimConfig::default()).unwrap();
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
}

#[test]
fn psnr_matches_scalar_mse() {
    let mut r = rng(4);
    let a: Vec<f32> = (0..500).map(|_| r.random()).collect();
    let b: Vec<f32> = (0..500).map(|_| r.random()).collect();
    let mut mse = 0.0;
    for i in 0..a.len() {
        let d = a[i] as f64 - b[i] as f64;
        mse += d * d;
    }
    mse /= a.len() as f64;
    let want = 10.0 * (1.0 / mse).log10();
    assert!((psnr(&a, &b).unwrap() - want).abs() < 1e-9);
}

#[test]
fn vertical_streak_matches_closed_form() {
    // Falling straight down from (x0, y0) for `len` pixels: coverage along
    // the column axis times a Gaussian across it, cut off at 3σ + 1.
    let (h, w, x0, y0, len, width, bright) = (24, 20, 9.3, 4.6, 7.5, 2.0, 0.4);
    let p = rasterize_streak(h, w, x0, y0, len, width, bright, 0.0);
    let sigma = width / 2.0;
    for py in 0..h {
        for px in 0..w {
            let u = py as f64 - y0;
            let cov = ((u + 0.5).min(len) - (u - 0.5).max(0.0)).max(0.0);
            let v = px as f64 - x0;
            let across = if v.abs() > 3.0 * sigma + 1.0 {
                0.0
            } else {
                (-v * v / (2.0 * sigma * sigma)).exp()
            };
            let want = (bright * cov * across) as f32;
            let got = p.data[py * w + px];
            assert!((got - want).abs() < 1e-6, "({px},{py}): {got} vs {want}");
        }
    }
}

#[test]
fn streak_direction_is_rotation_of_vertical() {
    // At 90° the streak runs along +x, so it is the transpose of a vertical one.
    let v = rasterize_streak(16, 16, 5.2, 3.7, 6.0, 1.5, 0.5, 0.0);
    let hz = rasterize_streak(16, 16, 3.7, 5.2, 6.0, 1.5, 0.5, 90.0);
    for y in 0..16 {
        for x in 0..16 {
            assert!((v.data[y * 16 + x] - hz.data[x * 16 + y]).abs() < 1e-6);
        }
    }
}

#[test]
fn overlay_matches_scalar_loop() {
    let mut r = rng(5);
    let (w, h) = (9, 7);
    let clean = RgbFrame::from_vec(w, h, (0..3 * w * h).map(|_| r.random()).collect()).unwrap();
    let rain = Plane {
        width: w,
        height: h,
        data: (0..w * h).map(|_| r.random_range(0.0..0.8)).collect(),
    };
    let out = overlay(&clean, &rain).unwrap();
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                let i = (c * h + y) * w + x;
                let mut v = clean.data[i] + rain.data[y * w + x];
                if v > 1.0 {
                    v = 1.0;
                }
                assert_eq!(out.data[i], v);
                assert!(out.data[i] >= clean.data[i]);
            }
        }
    }
    let white = RgbFrame::from_vec(w, h, vec![1.0; 3 * w * h]).unwrap();
    assert_eq!(overlay(&white, &rain).unwrap(), white);
}

#[test]
fn interval_slices_partition_the_stream() {
    let mut r = rng(6);
    let ts: Vec<u64> = (0..8).map(|k| k * 1000 + if k > 0 { r.random_range(0..500) } else { 0 }).collect();
    let s = random_stream(&mut r, 6, 6, ts[0], ts[7], 2000);
    let parts = interval_slices(&s, &ts).unwrap();
    assert_eq!(parts.len(), 7);
    let mut joined: Vec<_> = parts.iter().flat_map(|p| p.events.iter().copied()).collect();
    joined.sort_by_key(|e| (e.t, e.y, e.x, e.p));
    assert_eq!(joined, s.events);
    for (k, p) in parts.iter().enumerate() {
        assert!(p.events.iter().all(|e| e.t >= ts[k] && (e.t < ts[k + 1] || (k == 6 && e.t == ts[7]))));
    }
    let outside = EventStream {
        t_end: ts[7] + 10,
        events: vec![egvd::events::Event::new(0, 0, ts[7] + 5, 1)],
        ..s
    };
    assert!(interval_slices(&outside, &ts).is_err());
}
