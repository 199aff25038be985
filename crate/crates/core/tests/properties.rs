use egvd::events::{build_voxel_grid, read_events, simulate_events, write_events, Event, EventStream, SimConfig};
use egvd::frame::{Plane, RgbFrame};
use egvd::metrics::{ssim, SsimConfig};
use egvd::rain::overlay;
use proptest::prelude::*;

fn stream() -> impl Strategy<Value = EventStream> {
    (1u16..12, 1u16..12, 0u64..10_000, 0u64..10_000).prop_flat_map(|(w, h, t0, span)| {
        let ev = (0..w, 0..h, t0..=t0 + span, prop::bool::ANY).prop_map(|(x, y, t, on)| Event::new(x, y, t, if on { 1 } else { -1 }));
        prop::collection::vec(ev, 0..300).prop_map(move |events| EventStream::new(w, h, t0, t0 + span, events).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn voxel_mass_is_polarity_sum(s in stream(), bins in 2usize..20) {
        let g = build_voxel_grid(&s, bins).unwrap();
        prop_assert!((g.mass() - s.polarity_sum() as f64).abs() < 1e-4);
    }

    #[test]
    fn voxel_grid_ignores_event_order(s in stream(), bins in 2usize..12, seed in any::<u64>()) {
        let mut shuffled = s.clone();
        let n = shuffled.events.len();
        let mut state = seed | 1;
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.events.swap(i, (state >> 33) as usize % (i + 1));
        }
        let a = build_voxel_grid(&s, bins).unwrap();
        let b = build_voxel_grid(&shuffled, bins).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn event_file_round_trips(s in stream()) {
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.evt"), dir.path().join("b.evt"));
        write_events(&s, &p1).unwrap();
        let back = read_events(&p1).unwrap();
        prop_assert_eq!(&back, &s);
        write_events(&back, &p2).unwrap();
        prop_assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn net_polarity_tracks_log_change(
        vals in prop::collection::vec(0.0f32..1.0, 2..12),
        c in 0.05f64..0.5,
    ) {
        let cfg = SimConfig { contrast_threshold: c, ..SimConfig::default() };
        let frames: Vec<(u64, Plane)> = vals.iter().enumerate().map(|(k, &v)| (k as u64 * 1000, Plane::filled(1, 1, v))).collect();
        let s = simulate_events(&frames, &cfg).unwrap();
        let change = cfg.log_intensity(*vals.last().unwrap()) - cfg.log_intensity(vals[0]);
        prop_assert!((s.polarity_sum() as f64 * c - change).abs() < c + 1e-9);
        prop_assert!(s.events.windows(2).all(|w| w[0].t <= w[1].t));
    }

    #[test]
    fn ssim_is_symmetric_and_bounded(
        a in prop::collection::vec(0.0f32..1.0, 2 * 12 * 12),
        b in prop::collection::vec(0.0f32..1.0, 2 * 12 * 12),
    ) {
        let cfg = SsimConfig::default();
        let ab = ssim(&a, &b, 2, 12, 12, &cfg).unwrap();
        let ba = ssim(&b, &a, 2, 12, 12, &cfg).unwrap();
        prop_assert!((ab - ba).abs() < 1e-9);
        prop_assert!(ab <= 1.0 + 1e-12);
        prop_assert!((ssim(&a, &a, 2, 12, 12, &cfg).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overlay_only_brightens(
        clean in prop::collection::vec(0.0f32..1.0, 3 * 5 * 4),
        rain in prop::collection::vec(0.0f32..1.0, 5 * 4),
    ) {
        let f = RgbFrame::from_vec(5, 4, clean).unwrap();
        let r = Plane { width: 5, height: 4, data: rain };
        let out = overlay(&f, &r).unwrap();
        for (o, c) in out.data.iter().zip(&f.data) {
            prop_assert!(o >= c && *o <= 1.0);
        }
    }
}
