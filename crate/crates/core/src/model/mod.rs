//! The deraining network.

mod checkpoint;
mod config;
pub mod layers;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use config::{InputMode, ModelConfig, Target, Variant, NUM_SCALES};
pub use layers::Hooks;

use layers::{Decoder, Eamd, EventAttention, Extractor, Mmf, ConvLstm, Encoder, PlainFusion};

use crate::error::{Error, Result};
use crate::events::VoxelGrid;
use crate::frame::RgbFrame;
use crate::nn::{Init, ParamStore, Session};
use crate::tensor::{Real, Tensor, Var};

/// One network input: three consecutive frames and the event voxel grids
/// before and after the centre frame.
#[derive(Debug, Clone)]
pub struct Sample {
    pub prev: RgbFrame,
    pub cur: RgbFrame,
    pub next: RgbFrame,
    pub e_minus: VoxelGrid,
    pub e_plus: VoxelGrid,
    pub gt: Option<RgbFrame>,
}

impl Sample {
    pub fn width(&self) -> usize {
        self.cur.width
    }

    pub fn height(&self) -> usize {
        self.cur.height
    }

    pub fn validate(&self, bins: usize) -> Result<()> {
        let (w, h) = (self.width(), self.height());
        if w % 4 != 0 || h % 4 != 0 || w == 0 || h == 0 {
            return Err(Error::shape(format!("frame size {w}x{h} is not a positive multiple of 4")));
        }
        let frames = [Some(&self.prev), Some(&self.next), self.gt.as_ref()];
        for f in frames.into_iter().flatten() {
            if f.width != w || f.height != h {
                return Err(Error::shape(format!("frame {}x{} differs from {w}x{h}", f.width, f.height)));
            }
        }
        for g in [&self.e_minus, &self.e_plus] {
            if g.width != w || g.height != h || g.bins != bins {
                return Err(Error::shape(format!(
                    "voxel grid {}x{}x{} does not match {bins}x{h}x{w}",
                    g.bins, g.height, g.width
                )));
            }
        }
        Ok(())
    }

    /// The same spatial window of every component.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Sample {
        Sample {
            prev: self.prev.crop(x0, y0, w, h),
            cur: self.cur.crop(x0, y0, w, h),
            next: self.next.crop(x0, y0, w, h),
            e_minus: self.e_minus.crop(x0, y0, w, h),
            e_plus: self.e_plus.crop(x0, y0, w, h),
            gt: self.gt.as_ref().map(|g| g.crop(x0, y0, w, h)),
        }
    }
}

/// Samples stacked into NCHW tensors.
#[derive(Debug, Clone)]
pub struct Batch<T: Real> {
    pub prev: Tensor<T>,
    pub cur: Tensor<T>,
    pub next: Tensor<T>,
    /// Absent for frame-only models.
    pub events: Option<[Tensor<T>; 2]>,
    pub gt: Option<Tensor<T>>,
}

fn rgb_tensor<T: Real>(f: &RgbFrame) -> Tensor<T> {
    Tensor::from_f32([1, 3, f.height, f.width], &f.data)
}

fn replicated_luma<T: Real>(f: &RgbFrame, bins: usize) -> Tensor<T> {
    let l = f.luminance();
    let mut data = Vec::with_capacity(bins * l.data.len());
    for _ in 0..bins {
        data.extend(l.data.iter().map(|&v| T::c(v as f64)));
    }
    Tensor::from_vec([1, bins, f.height, f.width], data)
}

impl<T: Real> Batch<T> {
    pub fn from_samples(samples: &[Sample], cfg: &ModelConfig) -> Result<Self> {
        let first = samples.first().ok_or_else(|| Error::shape("empty batch"))?;
        for s in samples {
            s.validate(cfg.voxel_bins)?;
            if s.width() != first.width() || s.height() != first.height() {
                return Err(Error::shape("batch items differ in size"));
            }
        }
        let stack = |f: &dyn Fn(&Sample) -> Tensor<T>| Tensor::stack(&samples.iter().map(f).collect::<Vec<_>>());
        let events = match cfg.inputs {
            InputMode::FrameOnly => None,
            InputMode::FrameEvent => Some([
                stack(&|s| Tensor::from_f32([1, s.e_minus.bins, s.height(), s.width()], &s.e_minus.data)),
                stack(&|s| Tensor::from_f32([1, s.e_plus.bins, s.height(), s.width()], &s.e_plus.data)),
            ]),
            InputMode::FrameFrame => Some([
                stack(&|s| replicated_luma(&s.prev, cfg.voxel_bins)),
                stack(&|s| replicated_luma(&s.next, cfg.voxel_bins)),
            ]),
        };
        let gt = if samples.iter().all(|s| s.gt.is_some()) {
            Some(stack(&|s| rgb_tensor(s.gt.as_ref().expect("checked"))))
        } else {
            None
        };
        Ok(Batch {
            prev: stack(&|s| rgb_tensor(&s.prev)),
            cur: stack(&|s| rgb_tensor(&s.cur)),
            next: stack(&|s| rgb_tensor(&s.next)),
            events,
            gt,
        })
    }

    pub fn n(&self) -> usize {
        self.cur.n()
    }

    /// Registers the inputs as graph constants.
    pub fn bind(&self, s: &mut Session<T>) -> Inputs {
        Inputs {
            prev: s.g.constant(self.prev.clone()),
            cur: s.g.constant(self.cur.clone()),
            next: s.g.constant(self.next.clone()),
            events: self
                .events
                .as_ref()
                .map(|[a, b]| [s.g.constant(a.clone()), s.g.constant(b.clone())]),
        }
    }
}

/// Graph handles of one step's inputs.
#[derive(Debug, Clone, Copy)]
pub struct Inputs {
    pub prev: Var,
    pub cur: Var,
    pub next: Var,
    pub events: Option<[Var; 2]>,
}

/// Recurrent state of the quarter-resolution ConvLSTM.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<T: Real> {
    pub hidden: Tensor<T>,
    pub cell: Tensor<T>,
}

impl<T: Real> LstmState<T> {
    pub fn zeros(cfg: &ModelConfig, n: usize, height: usize, width: usize) -> Self {
        let shape = [n, 4 * cfg.base_channels, height / 4, width / 4];
        LstmState {
            hidden: Tensor::zeros(shape),
            cell: Tensor::zeros(shape),
        }
    }

    pub fn check(&self, cfg: &ModelConfig, n: usize, height: usize, width: usize) -> Result<()> {
        let want = [n, 4 * cfg.base_channels, height / 4, width / 4];
        if self.hidden.shape != want || self.cell.shape != want {
            return Err(Error::StaleState(format!(
                "state {:?} but input needs {want:?}",
                self.hidden.shape
            )));
        }
        Ok(())
    }

    pub fn bind(&self, s: &mut Session<T>) -> (Var, Var) {
        (s.g.constant(self.hidden.clone()), s.g.constant(self.cell.clone()))
    }
}

/// Graph handles produced by [`Egvd::forward`]. Lists run coarsest first.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Pre-clip image estimates.
    pub derained: [Var; 3],
    /// `derained − base` at each scale.
    pub residual: [Var; 3],
    /// Rainy frame pooled to each scale.
    pub base: [Var; 3],
    pub mask: Option<Var>,
    /// Event features after attention, full resolution first.
    pub rea: Option<[Var; 3]>,
    pub pyramid: [Var; 3],
    pub state: (Var, Var),
}

/// Concrete results of one inference step. Lists run coarsest first.
#[derive(Debug, Clone)]
pub struct DerainOutput<T: Real> {
    /// Clipped to [0, 1].
    pub derained: Vec<Tensor<f32>>,
    /// Pre-clip estimates. Kept in `f64`, where `base + residual` of two
    /// `f32`-range values is exact, so `derained − residual == base` holds
    /// bit for bit.
    pub derained_preclip: Vec<Tensor<f64>>,
    pub residual: Vec<Tensor<f64>>,
    pub mask: Option<Tensor<f32>>,
    pub rea: Option<Vec<Tensor<f32>>>,
    pub state: LstmState<T>,
}

/// The network's structure. Parameters live in a separate [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Egvd {
    pub cfg: ModelConfig,
    pub hooks: Hooks,
    frame_extractor: Extractor,
    event_extractor: Option<Extractor>,
    fusion: Fusion,
    frame_encoder: Encoder,
    event_encoder: Option<Encoder>,
    attention: Option<[EventAttention; 3]>,
    mmf: Option<[Mmf; 3]>,
    lstm: ConvLstm,
    decoder: Decoder,
}

#[derive(Debug, Clone)]
enum Fusion {
    Eamd(Eamd),
    Plain(PlainFusion),
}

/// Learnable parameters of the motion-detection module at width `c`.
pub fn eamd_param_count(c: usize, events: bool) -> usize {
    let mut scratch: ParamStore<f32> = ParamStore::default();
    Eamd::new(&mut scratch, &mut Init::new(0), "eamd", c, events);
    scratch.count()
}

impl Egvd {
    /// Builds the structure, registering freshly initialized parameters.
    pub fn build<T: Real>(cfg: ModelConfig, store: &mut ParamStore<T>, init: &mut Init) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.base_channels;
        let events = cfg.has_events();
        let frame_extractor = Extractor::new(store, init, "extract.frame", 3, c);
        let event_extractor = events.then(|| Extractor::new(store, init, "extract.event", cfg.voxel_bins, c));
        let fusion = if cfg.eamd {
            Fusion::Eamd(Eamd::new(store, init, "eamd", c, events))
        } else {
            let target = eamd_param_count(c, events);
            Fusion::Plain(PlainFusion::new(store, init, "eamd_plain", c, events, target))
        };
        let frame_encoder = Encoder::new(store, init, "pas.enc_frame", c);
        let event_encoder = events.then(|| Encoder::new(store, init, "pas.enc_event", c));
        let widths = [c, 2 * c, 4 * c];
        let attention = events.then(|| {
            [0, 1, 2].map(|i| {
                let name = if cfg.rea { format!("pas.rea{}", i + 1) } else { format!("pas.rea_plain{}", i + 1) };
                EventAttention::new(store, init, &name, widths[i], cfg.rea)
            })
        });
        let mmf = events.then(|| [0, 1, 2].map(|i| Mmf::new(store, init, &format!("pas.mmf{}", i + 1), widths[i])));
        let lstm = ConvLstm::new(store, init, "pas.lstm", 4 * c);
        let decoder = Decoder::new(store, init, "recon", c, cfg.msam);
        Ok(Egvd {
            cfg,
            hooks: Hooks::default(),
            frame_extractor,
            event_extractor,
            fusion,
            frame_encoder,
            event_encoder,
            attention,
            mmf,
            lstm,
            decoder,
        })
    }

    /// Builds the structure with parameters drawn from `seed`.
    pub fn init<T: Real>(cfg: ModelConfig, seed: u64) -> Result<(Self, ParamStore<T>)> {
        let mut store = ParamStore::default();
        let net = Self::build(cfg, &mut store, &mut Init::new(seed))?;
        Ok((net, store))
    }

    /// Rebuilds the structure for `ckpt` and takes its parameters.
    pub fn from_checkpoint<T: Real>(ckpt: Checkpoint<T>) -> Result<(Self, ParamStore<T>)> {
        let (net, fresh) = Self::init::<T>(ckpt.config, ckpt.seed)?;
        if fresh.names() != ckpt.params.names() {
            return Err(Error::Checkpoint("parameter names do not match the configured architecture".into()));
        }
        for ((name, a), b) in fresh.iter().zip(ckpt.params.values()) {
            if a.shape != b.shape {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    b.shape, a.shape
                )));
            }
        }
        Ok((net, ckpt.params))
    }

    /// Extracted features: frames [t−1, t, t+1] and events [−, +].
    pub fn extract<T: Real>(&self, s: &mut Session<T>, x: &Inputs) -> ([Var; 3], Option<[Var; 2]>) {
        let frames = [x.prev, x.cur, x.next].map(|v| self.frame_extractor.forward(s, v));
        let events = match (&self.event_extractor, x.events) {
            (Some(ex), Some(e)) => Some(e.map(|v| ex.forward(s, v))),
            _ => None,
        };
        (frames, events)
    }

    /// Motion detection. Returns frame features, event features and the mask.
    pub fn fuse<T: Real>(&self, s: &mut Session<T>, frames: [Var; 3], events: Option<[Var; 2]>) -> (Var, Option<Var>, Option<Var>) {
        match &self.fusion {
            Fusion::Eamd(m) => {
                let out = m.forward(s, &self.hooks, frames, events);
                (out.frame, out.event, Some(out.mask))
            }
            Fusion::Plain(p) => {
                let (f, e) = p.forward(s, frames, events);
                (f, e, None)
            }
        }
    }

    /// Pyramidal adaptive selection. Returns per-scale features (full
    /// resolution first), the attended event features and the new state.
    pub fn pas<T: Real>(&self, s: &mut Session<T>, frame: Var, event: Option<Var>, state: (Var, Var)) -> ([Var; 3], Option<[Var; 3]>, (Var, Var)) {
        let mut f = self.frame_encoder.forward(s, frame);
        let (h, c) = self.lstm.forward(s, f[2], state.0, state.1);
        f[2] = h;
        let (Some(enc), Some(att), Some(mmf), Some(event)) = (&self.event_encoder, &self.attention, &self.mmf, event) else {
            return (f, None, (h, c));
        };
        let e = enc.forward(s, event);
        let rea = [0, 1, 2].map(|i| att[i].forward(s, &self.hooks, e[i]));
        let out = [0, 1, 2].map(|i| mmf[i].forward(s, rea[i], f[i]));
        (out, Some(rea), (h, c))
    }

    /// Full forward pass for one time step.
    pub fn forward<T: Real>(&self, s: &mut Session<T>, x: &Inputs, state: (Var, Var)) -> Forward {
        let state = if self.cfg.lstm_state {
            state
        } else {
            let shape = s.g.shape(state.0);
            (s.g.constant(Tensor::zeros(shape)), s.g.constant(Tensor::zeros(shape)))
        };
        let (frames, events) = self.extract(s, x);
        let (f, e, mask) = self.fuse(s, frames, events);
        let (pyramid, rea, state) = self.pas(s, f, e, state);
        let half = s.g.avg_pool2(x.cur);
        let quarter = s.g.avg_pool2(half);
        let base = [quarter, half, x.cur];
        let background = self.cfg.target == Target::Background;
        let out = self.decoder.forward(s, &self.hooks, pyramid, base, background);
        let residual = if background {
            [0, 1, 2].map(|i| s.g.sub(out.images[i], base[i]))
        } else {
            out.heads
        };
        Forward {
            derained: out.images,
            residual,
            base,
            mask,
            rea,
            pyramid,
            state,
        }
    }

    /// Inference on a batch with an explicit recurrent state.
    pub fn derain_step<T: Real>(&self, params: &ParamStore<T>, batch: &Batch<T>, state: &LstmState<T>) -> Result<DerainOutput<T>> {
        let [n, _, h, w] = batch.cur.shape;
        state.check(&self.cfg, n, h, w)?;
        if batch.events.is_some() != self.cfg.has_events() {
            return Err(Error::shape("batch event inputs do not match the model's input mode"));
        }
        let mut s = Session::new(params, false);
        let x = batch.bind(&mut s);
        let st = state.bind(&mut s);
        let fwd = self.forward(&mut s, &x, st);
        let g = &s.g;
        let to64 = |v: Var| g.value(v).cast::<f64>();
        let background = self.cfg.target == Target::Background;
        let mut preclip = Vec::with_capacity(3);
        let mut residual = Vec::with_capacity(3);
        for i in 0..3 {
            let base = to64(fwd.base[i]);
            let (d, r) = if background {
                let d = to64(fwd.derained[i]);
                let r = Tensor::from_vec(d.shape, d.data.iter().zip(&base.data).map(|(a, b)| a - b).collect());
                (d, r)
            } else {
                let r = to64(fwd.residual[i]);
                let d = Tensor::from_vec(r.shape, base.data.iter().zip(&r.data).map(|(a, b)| a + b).collect());
                (d, r)
            };
            preclip.push(d);
            residual.push(r);
        }
        let derained = preclip
            .iter()
            .map(|t| Tensor::from_vec(t.shape, t.data.iter().map(|v| v.clamp(0.0, 1.0) as f32).collect()))
            .collect();
        Ok(DerainOutput {
            derained,
            derained_preclip: preclip,
            residual,
            mask: fwd.mask.map(|m| Tensor::from_vec(g.shape(m), g.value(m).to_f32())),
            rea: fwd
                .rea
                .map(|r| r.iter().map(|&v| Tensor::from_vec(g.shape(v), g.value(v).to_f32())).collect()),
            state: LstmState {
                hidden: g.value(fwd.state.0).clone(),
                cell: g.value(fwd.state.1).clone(),
            },
        })
    }
}

/// Per-module learnable parameter counts.
pub fn param_report<T: Real>(store: &ParamStore<T>) -> Vec<(&'static str, usize)> {
    let groups = [
        ("extract", "extract."),
        ("eamd", "eamd"),
        ("pas", "pas."),
        ("recon", "recon."),
    ];
    let mut out: Vec<(&'static str, usize)> = groups.iter().map(|&(k, p)| (k, store.count_prefix(p))).collect();
    out.push(("total", store.count()));
    out
}
