use std::path::Path;
use std::process::Command;

use egvd::events::{read_events, EVENT_MAGIC};
use egvd::frame::{write_frame_dir, RgbFrame};
use egvd::model::{Checkpoint, Egvd};
use egvd::rain::{
    load_dataset_list, load_sequence, procedural_scene, synthesize_dataset, synthesize_sequence, RainPreset, SequenceData,
};
use egvd::training::{score_frames, sequence_samples, synthetic_split, train, Preset, TrainConfig, CHECKPOINT_FILE, LOSS_FILE};
use egvd::Error;

fn tiny_cfg() -> TrainConfig {
    let mut cfg = TrainConfig::preset(Preset::Desk);
    cfg.crop = 32;
    cfg.synth_size = 32;
    cfg.synth_frames = 6;
    cfg.clip_len = 3;
    cfg.max_steps = Some(2);
    cfg
}

fn clip(seed: u64) -> Vec<RgbFrame> {
    procedural_scene(32, 24, 5, seed)
}

#[test]
fn dataset_synthesis_is_deterministic_and_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("clean");
    for k in 0..2 {
        write_frame_dir(&clean.join(format!("clip{k}")), &clip(k)).unwrap();
    }
    let dirs = vec![clean.join("clip0"), clean.join("clip1")];
    let params: Vec<(String, _)> = RainPreset::ALL.iter().map(|p| (p.name().to_string(), p.params(3))).collect();
    let sim = Default::default();
    let a = synthesize_dataset(&dirs, &params, &dir.path().join("a"), &sim, 25.0).unwrap();
    let b = synthesize_dataset(&dirs, &params, &dir.path().join("b"), &sim, 25.0).unwrap();
    assert_eq!(a.len(), 6);
    assert_eq!(a, b);
    let list = load_dataset_list(&dir.path().join("a")).unwrap();
    assert_eq!(list.len(), 6);
    for (m, d) in a.iter().zip(&list) {
        let seq = load_sequence(d).unwrap();
        assert_eq!((seq.rainy.len(), seq.gt.len()), (m.frames, m.frames));
        let other = load_sequence(&dir.path().join("b").join(&m.name)).unwrap();
        assert_eq!(seq.rainy, other.rainy);
        assert_eq!(seq.events, other.events);
        assert_eq!(
            std::fs::read(d.join("events.evt")).unwrap(),
            std::fs::read(dir.path().join("b").join(&m.name).join("events.evt")).unwrap()
        );
    }
    // a reload yields what synthesis held in memory
    let mem = synthesize_sequence("x", &clip(0), &params[0].1.for_sequence(0), &sim, 25.0).unwrap();
    let disk = load_sequence(&list[0]).unwrap();
    assert_eq!(mem.rainy, disk.rainy);
    assert_eq!(mem.gt, disk.gt);
    assert_eq!(mem.events, disk.events);
}

#[test]
fn samples_replicate_boundaries_and_tolerate_silence() {
    let (train_data, _) = synthetic_split(&tiny_cfg()).unwrap();
    let seq = &train_data[0];
    let samples = sequence_samples(seq, 10).unwrap();
    assert_eq!(samples.len(), seq.rainy.len());
    assert_eq!(samples[0].prev, samples[0].cur);
    assert_eq!(samples[5].next, samples[5].cur);
    assert_eq!(samples[0].e_minus.mass(), 0.0);
    let mut quiet = seq.clone();
    quiet.events.events.clear();
    let s = sequence_samples(&quiet, 10).unwrap();
    assert!(s.iter().all(|x| x.e_minus.data.iter().chain(&x.e_plus.data).all(|&v| v == 0.0)));
}

#[test]
fn zero_epochs_leave_the_initialization() {
    let mut cfg = tiny_cfg();
    cfg.epochs = 0;
    let (data, _) = synthetic_split(&cfg).unwrap();
    let out = train(&cfg, &data, None).unwrap();
    let (_, init) = Egvd::init::<f32>(cfg.model, cfg.seed).unwrap();
    assert!(out.losses.is_empty());
    assert_eq!(out.params.values(), init.values());
}

#[test]
fn training_is_seeded_and_writes_artifacts() {
    let cfg = tiny_cfg();
    let (data, _) = synthetic_split(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let a = train(&cfg, &data, Some(&dir.path().join("a"))).unwrap();
    let b = train(&cfg, &data, Some(&dir.path().join("b"))).unwrap();
    assert_eq!(a.losses, b.losses);
    assert_eq!(a.losses.len(), 2);
    // negative SSIM summed over 3 scales and the batch
    assert!(a.losses[0].is_finite() && a.losses[0] >= -3.0 * cfg.batch as f64);
    let read = |p: &str, f: &str| std::fs::read(dir.path().join(p).join(f)).unwrap();
    assert_eq!(read("a", CHECKPOINT_FILE), read("b", CHECKPOINT_FILE));
    assert_eq!(read("a", LOSS_FILE), read("b", LOSS_FILE));
    let ck = Checkpoint::<f32>::load(&dir.path().join("a").join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(ck.step, 2);
    assert_eq!(ck.params.values(), a.params.values());
    let mut other = cfg.clone();
    other.seed = 1;
    assert_ne!(train(&other, &data, None).unwrap().losses, a.losses);
}

#[test]
fn non_finite_loss_aborts_with_a_dump() {
    let cfg = tiny_cfg();
    let (mut data, _): (Vec<SequenceData>, _) = synthetic_split(&cfg).unwrap();
    for seq in &mut data {
        for f in &mut seq.rainy {
            f.data[0] = f32::NAN;
        }
    }
    let dir = tempfile::tempdir().unwrap();
    match train(&cfg, &data, Some(dir.path())) {
        Err(Error::NonFiniteLoss { step, dump }) => {
            assert_eq!(step, 1);
            let text = std::fs::read_to_string(dump).unwrap();
            assert!(text.contains("nonfinite=") && text.contains("sequence="));
        }
        other => panic!("expected a non-finite loss, got {other:?}"),
    }
}

#[test]
fn scoring_ground_truth_and_averages() {
    let (data, _) = synthetic_split(&tiny_cfg()).unwrap();
    let gt = &data[0].gt;
    let m = score_frames("x", gt, gt).unwrap();
    assert_eq!(m.psnr, f64::INFINITY);
    assert!((m.ssim - 1.0).abs() < 1e-12);
    let base = egvd::training::baseline_metrics(&data).unwrap();
    let cfg = tiny_cfg();
    let (net, p) = Egvd::init::<f32>(cfg.model, 0).unwrap();
    let r = egvd::training::evaluate(&net, &p, &data, cfg.eval_mode, None).unwrap();
    assert_eq!(r.baseline, base);
    let mean = r.rows.iter().map(|x| x.psnr).sum::<f64>() / r.rows.len() as f64;
    assert!((r.avg_psnr() - mean).abs() < 1e-12);
    assert!(r.to_tsv().contains("rainy_input"));
    assert!(r.to_text().contains("state: carry"));
}

fn egvd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_egvd"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn cli_simulate_and_voxelize() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    let gray = RgbFrame::from_vec(8, 6, vec![0.5; 3 * 48]).unwrap();
    write_frame_dir(&frames, &vec![gray; 4]).unwrap();
    let evt = dir.path().join("e.evt");
    run_ok(egvd().args(["simulate-events", "--frames"]).arg(&frames).arg("--out").arg(&evt).args(["--contrast", "0.15"]));
    let bytes = std::fs::read(&evt).unwrap();
    assert_eq!(&bytes[..8], EVENT_MAGIC);
    assert_eq!(u64::from_le_bytes(bytes[28..36].try_into().unwrap()), 0);

    let moving: Vec<RgbFrame> = procedural_scene(16, 12, 5, 2);
    write_frame_dir(&frames, &moving).unwrap();
    run_ok(egvd().args(["simulate-events", "--frames"]).arg(&frames).arg("--out").arg(&evt));
    let stream = read_events(&evt).unwrap();
    assert!(!stream.is_empty());
    let npy = dir.path().join("v.npy");
    run_ok(
        egvd()
            .args(["voxelize", "--events"])
            .arg(&evt)
            .args(["--bins", "10", "--t0", "0", "--t1", &stream.t_end.to_string(), "--out"])
            .arg(&npy),
    );
    let raw = std::fs::read(&npy).unwrap();
    let hlen = u16::from_le_bytes([raw[8], raw[9]]) as usize;
    let header = std::str::from_utf8(&raw[10..10 + hlen]).unwrap();
    assert!(header.contains("'shape': (10, 12, 16)"));
    assert_eq!((10 + hlen) % 64, 0);
    let mass: f64 = raw[10 + hlen..].chunks(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).sum();
    assert!((mass - stream.polarity_sum() as f64).abs() < 1e-3);
}

#[test]
fn cli_exit_codes() {
    let out = egvd().args(["train", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    let out = egvd().args(["voxelize", "--events", "/nonexistent/e.evt", "--out", "x.npy"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/e.evt"));
    assert!(out.stdout.is_empty());
}

#[test]
fn cli_ablate_bins_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.cfg");
    std::fs::write(&cfg, "preset=desk\ncrop=32\nsynth_size=32\nsynth_frames=6\nclip_len=3\n").unwrap();
    let out = dir.path().join("ab");
    let text = run_ok(
        egvd()
            .args(["ablate", "--suite", "bins", "--preset", "desk", "--config"])
            .arg(&cfg)
            .args(["--max-steps", "1", "--out"])
            .arg(&out),
    );
    assert!(text.contains("rainy input"));
    let tsv = std::fs::read_to_string(out.join("ablation.tsv")).unwrap();
    let rows: Vec<&str> = tsv.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 4);
    for (row, b) in rows.iter().zip(["B=5", "B=10", "B=15", "B=20"]) {
        assert!(row.starts_with(&format!("bins\t{b}\t")), "{row}");
    }
    assert!(Path::new(&out.join("bins").join("b_5").join(CHECKPOINT_FILE)).exists());
    run_ok(egvd().arg("report").arg(&out));
    assert!(out.join("loss_curves.svg").exists());
    assert!(out.join("ablation_table.svg").exists());
}
