use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use super::config::StateMode;
use super::data::{sequence_samples, trim_to_multiple_of_4};
use crate::error::{Error, Result};
use crate::frame::{frame_file_name, write_gray_png, write_rgb_png, Plane, RgbFrame};
use crate::metrics::{psnr_frames, ssim_frames};
use crate::model::{Batch, DerainOutput, Egvd, LstmState, Sample};
use crate::nn::ParamStore;
use crate::rain::SequenceData;
use crate::tensor::{Real, Tensor};

/// Runs the network over a sequence frame by frame, calling `on_frame` with
/// each output.
pub fn run_sequence<T: Real>(
    net: &Egvd,
    params: &ParamStore<T>,
    samples: &[Sample],
    mode: StateMode,
    mut on_frame: impl FnMut(usize, &Sample, &DerainOutput<T>) -> Result<()>,
) -> Result<()> {
    let mut state: Option<LstmState<T>> = None;
    for (k, s) in samples.iter().enumerate() {
        let s = trim_to_multiple_of_4(s);
        let batch = Batch::<T>::from_samples(std::slice::from_ref(&s), &net.cfg)?;
        let st = match (mode, state.take()) {
            (StateMode::Carry, Some(st)) => st,
            _ => LstmState::zeros(&net.cfg, 1, s.height(), s.width()),
        };
        let out = net.derain_step(params, &batch, &st)?;
        on_frame(k, &s, &out)?;
        state = Some(out.state);
    }
    Ok(())
}

/// Full-resolution clipped output of a single-item step as a frame.
pub fn output_frame<T: Real>(out: &DerainOutput<T>) -> RgbFrame {
    let t = &out.derained[2];
    RgbFrame::from_vec(t.w(), t.h(), t.data.clone()).expect("consistent size")
}

/// Rain layer at full resolution (the negated residual, channel mean).
pub fn rain_plane<T: Real>(out: &DerainOutput<T>) -> Plane {
    let r = &out.residual[2];
    let plane = r.plane();
    let data = (0..plane)
        .map(|p| (-(r.data[p] + r.data[plane + p] + r.data[2 * plane + p]) / 3.0) as f32)
        .collect();
    Plane {
        width: r.w(),
        height: r.h(),
        data,
    }
}

fn mask_plane(m: &Tensor<f32>) -> Plane {
    Plane {
        width: m.w(),
        height: m.h(),
        data: m.data[..m.plane()].to_vec(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeqMetrics {
    pub name: String,
    pub frames: usize,
    /// Mean over frames.
    pub psnr: f64,
    pub ssim: f64,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in v {
        s += x;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub label: String,
    pub mode: StateMode,
    pub params: usize,
    pub rows: Vec<SeqMetrics>,
    /// The rainy input scored as if it were the prediction.
    pub baseline: Vec<SeqMetrics>,
    pub runtime_s: f64,
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.3}")
    }
}

impl EvalReport {
    pub fn avg_psnr(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.psnr))
    }

    pub fn avg_ssim(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.ssim))
    }

    pub fn baseline_psnr(&self) -> f64 {
        mean(self.baseline.iter().map(|r| r.psnr))
    }

    pub fn baseline_ssim(&self) -> f64 {
        mean(self.baseline.iter().map(|r| r.ssim))
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("sequence\tmethod\tframes\tpsnr\tssim\n");
        for (rows, method) in [(&self.baseline, "rainy_input"), (&self.rows, self.label.as_str())] {
            for r in rows {
                let _ = writeln!(s, "{}\t{method}\t{}\t{}\t{:.6}", r.name, r.frames, fmt_db(r.psnr), r.ssim);
            }
        }
        let _ = writeln!(s, "average\trainy_input\t-\t{}\t{:.6}", fmt_db(self.baseline_psnr()), self.baseline_ssim());
        let _ = writeln!(s, "average\t{}\t-\t{}\t{:.6}", self.label, fmt_db(self.avg_psnr()), self.avg_ssim());
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "model: {} ({} parameters)", self.label, self.params);
        let _ = writeln!(s, "state: {}", self.mode);
        let _ = writeln!(s, "ssim: mean over RGB channels, 11x11 gaussian window");
        let _ = writeln!(s, "runtime: {:.2} s\n", self.runtime_s);
        let _ = writeln!(s, "{:<24} {:>10} {:>8} {:>10} {:>8}", "sequence", "rainy PSNR", "SSIM", "ours PSNR", "SSIM");
        for (b, r) in self.baseline.iter().zip(&self.rows) {
            let _ = writeln!(
                s,
                "{:<24} {:>10} {:>8.4} {:>10} {:>8.4}",
                r.name,
                fmt_db(b.psnr),
                b.ssim,
                fmt_db(r.psnr),
                r.ssim
            );
        }
        let _ = writeln!(
            s,
            "{:<24} {:>10} {:>8.4} {:>10} {:>8.4}",
            "average",
            fmt_db(self.baseline_psnr()),
            self.baseline_ssim(),
            fmt_db(self.avg_psnr()),
            self.avg_ssim()
        );
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [("eval.tsv", self.to_tsv()), ("eval.txt", self.to_text())] {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(p, e))?;
        }
        Ok(())
    }
}

/// Scores arbitrary predictions against ground truth, frame by frame.
pub fn score_frames(name: &str, pred: &[RgbFrame], gt: &[RgbFrame]) -> Result<SeqMetrics> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::Dataset(format!(
            "{name}: {} predictions for {} ground-truth frames",
            pred.len(),
            gt.len()
        )));
    }
    let mut p = Vec::with_capacity(pred.len());
    let mut q = Vec::with_capacity(pred.len());
    for (a, b) in pred.iter().zip(gt) {
        p.push(psnr_frames(a, b)?);
        q.push(ssim_frames(a, b)?);
    }
    Ok(SeqMetrics {
        name: name.into(),
        frames: pred.len(),
        psnr: mean(p.into_iter()),
        ssim: mean(q.into_iter()),
    })
}

/// The no-op baseline: rainy input scored as the prediction.
pub fn baseline_metrics(data: &[SequenceData]) -> Result<Vec<SeqMetrics>> {
    data.iter()
        .map(|s| score_frames(&s.manifest.name, &s.rainy, &s.gt))
        .collect()
}

/// Derains every sequence and scores the full-resolution outputs. With
/// `dump`, writes derained frames, rain layers and motion masks as PNGs under
/// `dump/<sequence>/`.
pub fn evaluate<T: Real>(
    net: &Egvd,
    params: &ParamStore<T>,
    data: &[SequenceData],
    mode: StateMode,
    dump: Option<&Path>,
) -> Result<EvalReport> {
    let started = Instant::now();
    let mut rows = Vec::with_capacity(data.len());
    let mut baseline = Vec::with_capacity(data.len());
    for seq in data {
        let name = &seq.manifest.name;
        let samples = sequence_samples(seq, net.cfg.voxel_bins)?;
        let mut preds = Vec::with_capacity(samples.len());
        let mut gts = Vec::with_capacity(samples.len());
        let mut inputs = Vec::with_capacity(samples.len());
        let dir = dump.map(|d| d.join(name));
        if let Some(d) = &dir {
            for sub in ["derained", "rain", "mask"] {
                let p = d.join(sub);
                std::fs::create_dir_all(&p).map_err(|e| Error::io(p, e))?;
            }
        }
        run_sequence(net, params, &samples, mode, |k, s, out| {
            let frame = output_frame(out);
            if let Some(d) = &dir {
                write_rgb_png(&d.join("derained").join(frame_file_name(k)), &frame)?;
                write_gray_png(&d.join("rain").join(frame_file_name(k)), &rain_plane(out), 0.0, 0.5)?;
                if let Some(m) = &out.mask {
                    write_gray_png(&d.join("mask").join(frame_file_name(k)), &mask_plane(m), 0.0, 1.0)?;
                }
            }
            preds.push(frame);
            gts.push(s.gt.clone().ok_or_else(|| Error::Dataset(format!("{name}: missing ground truth")))?);
            inputs.push(s.cur.clone());
            Ok(())
        })?;
        rows.push(score_frames(name, &preds, &gts)?);
        baseline.push(score_frames(name, &inputs, &gts)?);
    }
    Ok(EvalReport {
        label: net.cfg.label(),
        mode,
        params: params.count(),
        rows,
        baseline,
        runtime_s: started.elapsed().as_secs_f64(),
    })
}
