use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::data::sequence_samples;
use crate::error::{Error, Result};
use crate::metrics::{gt_pyramid, multiscale_loss};
use crate::model::{Batch, Checkpoint, Egvd, LstmState, Sample};
use crate::nn::{ParamStore, Session};
use crate::rain::SequenceData;
use crate::tensor::{Real, Tensor};

pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const LOSS_FILE: &str = "loss.tsv";
pub const CONFIG_FILE: &str = "config.txt";

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T: Real> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    t: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros = || params.values().iter().map(|p| Tensor::zeros(p.shape)).collect();
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    /// Parameters without a gradient are left untouched.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Option<Tensor<T>>], lr: f64) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for (i, p) in params.values_mut().iter_mut().enumerate() {
            let Some(g) = &grads[i] else { continue };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.data.len() {
                let gj = g.data[j].f64();
                let mj = b1 * m.data[j].f64() + (1.0 - b1) * gj;
                let vj = b2 * v.data[j].f64() + (1.0 - b2) * gj * gj;
                m.data[j] = T::c(mj);
                v.data[j] = T::c(vj);
                let upd = lr * (mj / c1) / ((vj / c2).sqrt() + self.eps);
                p.data[j] = T::c(p.data[j].f64() - upd);
            }
        }
    }
}

/// Cosine annealing from `start` at step 0 to `end` at the final step.
pub fn cosine_lr(step: usize, total: usize, start: f64, end: f64) -> f64 {
    if total <= 1 {
        return start;
    }
    let frac = step.min(total - 1) as f64 / (total - 1) as f64;
    end + 0.5 * (start - end) * (1.0 + (std::f64::consts::PI * frac).cos())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: Egvd,
    pub params: ParamStore<f32>,
    /// Loss of every optimizer step.
    pub losses: Vec<f64>,
    pub checkpoint: Checkpoint<f32>,
}

#[derive(Debug, Clone, Copy)]
struct Clip {
    seq: usize,
    start: usize,
}

/// What went into one step, for the diagnostic dump.
struct StepInputs<'a> {
    names: Vec<&'a str>,
    clips: Vec<Clip>,
    crops: Vec<(usize, usize)>,
    size: (usize, usize),
}

fn tensor_stats(t: &Tensor<f32>) -> String {
    let (mut lo, mut hi, mut sum, mut bad) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for &v in &t.data {
        let v = v as f64;
        if !v.is_finite() {
            bad += 1;
            continue;
        }
        lo = lo.min(v);
        hi = hi.max(v);
        sum += v;
    }
    format!("min={lo} max={hi} mean={} nonfinite={bad}", sum / t.len().max(1) as f64)
}

fn write_dump(dir: &Path, step: usize, loss: f64, info: &StepInputs, batches: &[Batch<f32>], params: &ParamStore<f32>) -> PathBuf {
    let mut s = String::new();
    let _ = writeln!(s, "step={step}\nloss={loss}\ncrop={}x{}", info.size.0, info.size.1);
    for (i, c) in info.clips.iter().enumerate() {
        let _ = writeln!(
            s,
            "item{i}: sequence={} start_frame={} crop_x={} crop_y={}",
            info.names[i], c.start, info.crops[i].0, info.crops[i].1
        );
    }
    for (t, b) in batches.iter().enumerate() {
        let _ = writeln!(s, "t={t} cur: {}", tensor_stats(&b.cur));
        if let Some([em, ep]) = &b.events {
            let _ = writeln!(s, "t={t} e_minus: {}", tensor_stats(em));
            let _ = writeln!(s, "t={t} e_plus: {}", tensor_stats(ep));
        }
        if let Some(gt) = &b.gt {
            let _ = writeln!(s, "t={t} gt: {}", tensor_stats(gt));
        }
    }
    for (name, p) in params.iter() {
        if !p.all_finite() {
            let _ = writeln!(s, "non-finite parameter {name}");
        }
    }
    let path = dir.join(format!("nonfinite_step{step}.txt"));
    if let Err(e) = std::fs::write(&path, s) {
        log::error!("could not write {}: {e}", path.display());
    }
    path
}

fn write_losses(path: &Path, losses: &[f64], lrs: &[f64], steps_per_epoch: usize) -> Result<()> {
    let mut s = String::from("step\tepoch\tlr\tloss\n");
    for (i, (l, lr)) in losses.iter().zip(lrs).enumerate() {
        let _ = writeln!(s, "{}\t{}\t{lr:e}\t{l:.9}", i + 1, i / steps_per_epoch + 1);
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Trains a fresh model. With `out_dir`, writes the checkpoint after every
/// epoch, the loss curve and the resolved config there.
pub fn train(cfg: &TrainConfig, data: &[SequenceData], out_dir: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Dataset("no training sequences".into()));
    }
    let samples: Vec<Vec<Sample>> = data
        .iter()
        .map(|s| sequence_samples(s, cfg.model.voxel_bins))
        .collect::<Result<_>>()?;
    let shortest = samples.iter().map(Vec::len).min().expect("non-empty");
    let clip_len = cfg.clip_len.min(shortest);
    let mut clips = Vec::new();
    for (seq, s) in samples.iter().enumerate() {
        let mut start = 0;
        while start + clip_len <= s.len() {
            clips.push(Clip { seq, start });
            start += clip_len;
        }
    }
    let min_w = samples.iter().map(|s| s[0].width()).min().expect("non-empty");
    let min_h = samples.iter().map(|s| s[0].height()).min().expect("non-empty");
    let (cw, ch) = (cfg.crop.min(min_w / 4 * 4), cfg.crop.min(min_h / 4 * 4));
    if cw == 0 || ch == 0 {
        return Err(Error::Dataset(format!("frames of {min_w}x{min_h} are too small to crop")));
    }

    let (net, mut params) = Egvd::init::<f32>(cfg.model, cfg.seed)?;
    let mut adam = Adam::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_DA7A);
    let steps_per_epoch = clips.len().div_ceil(cfg.batch);
    let planned = steps_per_epoch * cfg.epochs;
    let total_steps = cfg.max_steps.map_or(planned, |m| m.min(planned));
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(CONFIG_FILE);
        std::fs::write(&path, cfg.to_text()).map_err(|e| Error::io(path, e))?;
    }
    log::info!(
        "training {} ({} parameters): {} clips of {clip_len}, {steps_per_epoch} steps/epoch, {total_steps} steps",
        cfg.model.label(),
        params.count(),
        clips.len()
    );

    let mut losses = Vec::with_capacity(total_steps);
    let mut lrs = Vec::with_capacity(total_steps);
    let mut order: Vec<usize> = (0..clips.len()).collect();
    let mut step = 0;
    let checkpoint = |params: &ParamStore<f32>, step: usize| Checkpoint {
        config: cfg.model,
        seed: cfg.seed,
        step: step as u64,
        params: params.clone(),
    };
    'epochs: for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for j in 0..steps_per_epoch {
            if step >= total_steps {
                break 'epochs;
            }
            let picked: Vec<Clip> = (0..cfg.batch).map(|b| clips[order[(j * cfg.batch + b) % clips.len()]]).collect();
            let crops: Vec<(usize, usize)> = picked
                .iter()
                .map(|c| {
                    let s = &samples[c.seq][c.start];
                    (rng.random_range(0..=s.width() - cw), rng.random_range(0..=s.height() - ch))
                })
                .collect();
            let batches: Vec<Batch<f32>> = (0..clip_len)
                .map(|t| {
                    let items: Vec<Sample> = picked
                        .iter()
                        .zip(&crops)
                        .map(|(c, &(x0, y0))| samples[c.seq][c.start + t].crop(x0, y0, cw, ch))
                        .collect();
                    Batch::from_samples(&items, &cfg.model)
                })
                .collect::<Result<_>>()?;

            let mut s = Session::new(&params, true);
            let mut state = LstmState::<f32>::zeros(&cfg.model, cfg.batch, ch, cw).bind(&mut s);
            let mut total = None;
            for b in &batches {
                let x = b.bind(&mut s);
                let fwd = net.forward(&mut s, &x, state);
                state = fwd.state;
                let gt = gt_pyramid(b.gt.as_ref().ok_or_else(|| Error::Dataset("training needs ground truth".into()))?)
                    .map(|t| s.g.constant(t));
                let l = multiscale_loss(&mut s.g, &fwd.derained, &gt, cfg.loss);
                total = Some(match total {
                    Some(acc) => s.g.add(acc, l),
                    None => l,
                });
            }
            let loss_var = s.g.scale(total.expect("clip_len >= 1"), 1.0 / clip_len as f64);
            let loss = s.g.value(loss_var).data[0].f64();
            if !loss.is_finite() {
                let info = StepInputs {
                    names: picked.iter().map(|c| data[c.seq].manifest.name.as_str()).collect(),
                    clips: picked.clone(),
                    crops,
                    size: (cw, ch),
                };
                let dir = out_dir.map(Path::to_path_buf).unwrap_or_else(std::env::temp_dir);
                let dump = write_dump(&dir, step + 1, loss, &info, &batches, &params);
                return Err(Error::NonFiniteLoss { step: step + 1, dump });
            }
            let mut grads = s.g.backward(loss_var);
            let grads: Vec<Option<Tensor<f32>>> = s.param_vars().iter().map(|&v| grads.take(v)).collect();
            let lr = cosine_lr(step, total_steps, cfg.lr_start, cfg.lr_end);
            adam.step(&mut params, &grads, lr);
            losses.push(loss);
            lrs.push(lr);
            step += 1;
            log::debug!("step {step} epoch {} lr {lr:.3e} loss {loss:.6}", epoch + 1);
        }
        log::info!("epoch {} done, last loss {:.6}", epoch + 1, losses.last().copied().unwrap_or(f64::NAN));
        if let Some(dir) = out_dir {
            checkpoint(&params, step).save(&dir.join(CHECKPOINT_FILE))?;
            write_losses(&dir.join(LOSS_FILE), &losses, &lrs, steps_per_epoch)?;
        }
    }
    let ck = checkpoint(&params, step);
    if let Some(dir) = out_dir {
        ck.save(&dir.join(CHECKPOINT_FILE))?;
        write_losses(&dir.join(LOSS_FILE), &losses, &lrs, steps_per_epoch)?;
    }
    Ok(TrainOutcome {
        net,
        params,
        losses,
        checkpoint: ck,
    })
}
