//! The network's building blocks. Every `forward` takes a [`Session`] and
//! returns graph handles, so the same code serves training and inference.

use crate::nn::{Conv2d, Init, ParamStore, PlainBlock, ResBlock, Session};
use crate::tensor::{Real, Tensor, Var};

/// Test hooks that pin internal quantities to known values.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Hooks {
    /// Replace the motion mask with this constant.
    pub force_mask: Option<f64>,
    /// Replace every REA attention gate with 1.
    pub attention_one: bool,
    /// Replace every reconstruction head output with 0.
    pub zero_residual: bool,
}

/// One conv layer and one residual block.
#[derive(Debug, Clone)]
pub struct Extractor {
    conv: Conv2d,
    res: ResBlock,
}

impl Extractor {
    pub fn new<T: Real>(store: &mut ParamStore<T>, init: &mut Init, name: &str, cin: usize, c: usize) -> Self {
        Extractor {
            conv: Conv2d::new(store, init, &format!("{name}.conv"), cin, c, 3, 1),
            res: ResBlock::new(store, init, &format!("{name}.res"), c),
        }
    }

    pub fn forward<T: Real>(&self, s: &mut Session<T>, x: Var) -> Var {
        let h = self.conv.forward_act(s, x);
        self.res.forward(s, h)
    }
}

/// Event-aware motion detection.
#[derive(Debug, Clone)]
pub struct Eamd {
    /// (k×k, 1×1) pairs for k = 7, 5, 3.
    branches: Vec<(Conv2d, Conv2d)>,
    mask_fuse: Conv2d,
    gate: Conv2d,
    fuse_frame: Conv2d,
    fuse_event: Option<Conv2d>,
}

pub struct EamdOut {
    pub frame: Var,
    pub event: Option<Var>,
    pub mask: Var,
}

impl Eamd {
    /// Without events, the mask trunk reads the neighbour-frame features.
    pub fn new<T: Real>(store: &mut ParamStore<T>, init: &mut Init, name: &str, c: usize, events: bool) -> Self {
        let branches = [7, 5, 3]
            .iter()
            .map(|&k| {
                (
                    Conv2d::new(store, init, &format!("{name}.branch{k}.conv"), 2 * c, c, k, 1),
                    Conv2d::new(store, init, &format!("{name}.branch{k}.proj"), c, c, 1, 1),
                )
            })
            .collect();
        Eamd {
            branches,
            mask_fuse: Conv2d::new(store, init, &format!("{name}.mask_fuse"), 3 * c, 1, 3, 1),
            gate: Conv2d::new(store, init, &format!("{name}.gate"), 2 * c, c, 1, 1),
            fuse_frame: Conv2d::new(store, init, &format!("{name}.fuse_frame"), 2 * c, c, 3, 1),
            fuse_event: events
                .then(|| Conv2d::new(store, init, &format!("{name}.fuse_event"), 2 * c, c, 3, 1)),
        }
    }

    /// `frames` = [F_{t−1}, F_t, F_{t+1}], `events` = [F_−, F_+].
    pub fn forward<T: Real>(&self, s: &mut Session<T>, hooks: &Hooks, frames: [Var; 3], events: Option<[Var; 2]>) -> EamdOut {
        let neighbours = s.g.concat(&[frames[0], frames[2]]);
        let trunk_in = match events {
            Some(e) => s.g.concat(&e),
            None => neighbours,
        };
        let mask = match hooks.force_mask {
            Some(v) => {
                let [n, _, h, w] = s.g.shape(trunk_in);
                s.g.constant(Tensor::full([n, 1, h, w], T::c(v)))
            }
            None => {
                let outs: Vec<Var> = self
                    .branches
                    .iter()
                    .map(|(k, p)| {
                        let h = k.forward_act(s, trunk_in);
                        p.forward_act(s, h)
                    })
                    .collect();
                let cat = s.g.concat(&outs);
                let logits = self.mask_fuse.forward(s, cat);
                s.g.sigmoid(logits)
            }
        };
        let gated = s.g.mul(neighbours, mask);
        let fm = self.gate.forward(s, gated);
        // A 2-tap temporal conv over the slices (F_t, F_m) with no temporal
        // padding is a 2-D conv over their channel concatenation.
        let pair = s.g.concat(&[frames[1], fm]);
        let frame = self.fuse_frame.forward_act(s, pair);
        let event = match (&self.fuse_event, events) {
            (Some(conv), Some(e)) => {
                let pair = s.g.concat(&e);
                Some(conv.forward_act(s, pair))
            }
            _ => None,
        };
        EamdOut { frame, event, mask }
    }
}

/// Equal-parameter stand-in for [`Eamd`]: all five (or three) feature maps
/// in, frame and event features out.
#[derive(Debug, Clone)]
pub struct PlainFusion {
    block: PlainBlock,
    c: usize,
    events: bool,
}

impl PlainFusion {
    pub fn new<T: Real>(store: &mut ParamStore<T>, init: &mut Init, name: &str, c: usize, events: bool, target: usize) -> Self {
        let (cin, cout) = if events { (5 * c, 2 * c) } else { (3 * c, c) };
        let hidden = PlainBlock::widths_for(target, cin, cout);
        PlainFusion {
            block: PlainBlock::new(store, init, name, cin, hidden, cout),
            c,
            events,
        }
    }

    pub fn forward<T: Real>(&self, s: &mut Session<T>, frames: [Var; 3], events: Option<[Var; 2]>) -> (Var, Option<Var>) {
        let mut parts = frames.to_vec();
        if let Some(e) = events {
            parts.extend(e);
        }
        let x = s.g.concat(&parts);
        let y = self.block.forward(s, x);
        if self.events {
            let f = s.g.slice_channels(y, 0, self.c);
            let e = s.g.slice_channels(y, self.c, self.c);
            (s.act(f), Some(s.act(e)))
        } else {
            (s.act(y), None)
        }
    }
}

/// Squeeze-style channel attention with reduction 4.
#[derive(Debug, Clone)]
struct ChannelAttention {
    down: Conv2d,
    up: Conv2d,
}

impl ChannelAttention {
    fn new<T: Real>(store: &mut ParamStore<T>, init: &mut Init, name: &str, c: usize) -> Self {
        let r = (c / 4).max(1);
        ChannelAttention {
            down: Conv2d::new(store, init, &format!("{name}.down"), c, r, 1, 1),
            up: Conv2d::new(store, init, &format!("{name}.up"), r, c, 1, 1),
        }
    }

    fn forward<T: Real>(&self, s: &mut Session<T>, hooks: &Hooks, x: Var) -> Var {
        let gate = if hooks.attention_one {
            let [n, c, _, _] = s.g.shape(x);
            s.g.constant(Tensor::full([n, c, 1, 1], T::one()))
        } else {
            let d = s.g.global_avg_pool(x);
            let d = self.down.forward_act(s, d);
            let d = self.up.forward(s, d);
            s.g.sigmoid(d)
        };
        s.g.mul(x, gate)
    }
}

/// Channel mean and max maps → 7×7 conv → sigmoid.
#[derive(Debug, Clone)]
struct SpatialAttention {
    conv: Conv2d,
}

impl SpatialAttention {
    fn new<T: Real>(store: &mut ParamStore<T>, init: &mut Init, name: &str) -> Self {
        SpatialAttention {
            conv: Conv2d::new(store, init, &format!("{name}.conv"), 2, 1, 7, 1),
        }
    }

    fn forward<T: Real>(&self, s: &mut Session<T>, hooks: &Hooks, x: Var) -> Var {
        let gate = if hooks.attention_one {
            let [n, _, h, w] = s.g.shape(x);
            s.g.constant(Tensor::full([n, 1, h, w], T::one()))
        } else {
            let mean = s.g.channel_mean(x);
            let max = s.g.channel_max(x);
            let d = s.g.concat(&[mean, max]);
            let d = self.conv.forward(s, d);
            s.g.sigmoid(d)
        };
        s.g.mul(x, gate)
    }
}

pub const REA_REPEATS: usize = 4;

/// Rain-aware event attention: four repetitions of channel, spatial,
/// spatial, channel attention, each wrapped as `(x + stack(x)) / 2` so that
/// all-one gates give back the input exactly.
#[derive(Debug, Clone)]
pub struct Rea {
    reps: Vec<(ChannelAttention, SpatialAttention, SpatialAttention, ChannelAttention)>,
}

impl Rea {
    pub fn new<T: Real>(store: &mut ParamStore<T>, init: &mut Init, name: &str, c: usize) -> Self {
        let reps = (0..REA_REPEATS)
            .map(|r| {
                let p = format!("{name}.rep{r}");
                (
                    ChannelAttention::new(store, init, &format!("{p}.ca0"), c),
                    SpatialAttention::new(store, init, &format!("{p}.sa0")),
                    SpatialAttention::new(store, init, &format!("{p}.sa1")),
                    ChannelAttention::new(store, init, &format!("{p}.ca1"), c),
                )
            })
            .collect();
        Rea { reps }
    }

    pub fn forward<T: Real>(&self, s: &mut Session<T>, hooks: &Hooks, x: Var) -> Var {
        let mut x = x;
        for (ca0, sa0, sa1, ca1) in &self.reps {
            let mut h = ca0.forward(s, hooks, x);
            h = sa0.forward(s, hooks, h);
            h = sa1.forward(s, hooks, h);
            h = ca1.forward(s, hooks, h);
            let sum = s.g.add(x, h);
            x = s.g.scale(sum, 0.5);
        }
        x
    }
}

/// Either the attention stack or its equal-parameter residual stand-in.
#[derive(Debug, Clone)]
pub enum EventAttention {
    Rea(Rea),
    Plain(PlainBlock),
}

impl EventAttention {
    pub fn new<T: Real>(store: &mut ParamStore<T>, init: &mut Init, name: &str, c: usize, rea: bool) -> Self {
        if rea {
            return EventAttention::Rea(Rea::new(store, init, name, c));
        }
        let target = rea_param_count(c);
        let hidden = PlainBlock::widths_for(target, c, c);
        EventAttention::Plain(PlainBlock::new(store, init, name, c, hidden, c))
    }

    pub fn forward<T: Real>(&self, s: &mut Session<T>, hooks: &Hooks, x: Var) -> Var {
        match self {
            EventAttention::Rea(r) => r.forward(s, hooks, x),
            EventAttention::Plain(p) => {
                let h = p.forward(s, x);
                s.g.add(x, h)
            }
        }
    }
}

/// Learnable parameters of a [`Rea`] at width `c`.
pub fn rea_param_count(c: usize) -> usize {
    let r = (c / 4).max(1);
    let ca = Conv2d::param_count(c, r, 1) + Conv2d::param_count(r, c, 1);
    let sa = Conv2d::param_count(2, 1, 7);
    REA_REPEATS * (2 * ca + 2 * sa)
}

/// Multi-modal fusion: `F_f + conv(act(conv([F_rea, F_f])))`.
#[derive(Debug, Clone)]
pub struct Mmf {
    mix: Conv2d,
    out: Conv2d,
}

impl Mmf {
    pub fn new<T: Real>(store: &mut ParamStore<T>, init: &mut Init, name: &str, c: usize) -> Self {
        Mmf {
            mix: Conv2d::new(store, init, &format!("{name}.mix"), 2 * c, c, 3, 1),
            out: Conv2d::new(store, init, &format!("{name}.out"), c, c, 3, 1),
        }
    }

    pub fn forward<T: Real>(&self, s: &mut Session<T>, event: Var, frame: Var) -> Var {
        let cat = s.g.concat(&[event, frame]);
        let h = self.mix.forward_act(s, cat);
        let h = self.out.forward(s, h);
        s.g.add(frame, h)
    }
}

/// Convolutional LSTM cell with a single 3×3 gate convolution.
#[derive(Debug, Clone)]
pub struct ConvLstm {
    gates: Conv2d,
    pub c: usize,
}

impl ConvLstm {
    pub fn new<T: Real>(store: &mut ParamStore<T>, init: &mut Init, name: &str, c: usize) -> Self {
        ConvLstm {
            gates: Conv2d::new(store, init, &format!("{name}.gates"), 2 * c, 4 * c, 3, 1),
            c,
        }
    }

    /// Returns `(h', c')`.
    pub fn forward<T: Real>(&self, s: &mut Session<T>, x: Var, h: Var, cell: Var) -> (Var, Var) {
        let cat = s.g.concat(&[x, h]);
        let z = self.gates.forward(s, cat);
        let parts = s.g.chunk(z, 4);
        let i = s.g.sigmoid(parts[0]);
        let f = s.g.sigmoid(parts[1]);
        let o = s.g.sigmoid(parts[2]);
        let g = s.g.tanh(parts[3]);
        let keep = s.g.mul(f, cell);
        let write = s.g.mul(i, g);
        let c_new = s.g.add(keep, write);
        let tc = s.g.tanh(c_new);
        let h_new = s.g.mul(o, tc);
        (h_new, c_new)
    }
}

/// Three-scale encoder: widths c, 2c, 4c; the last two are stride-2 convs.
#[derive(Debug, Clone)]
pub struct Encoder {
    convs: [Conv2d; 3],
}

impl Encoder {
    pub fn new<T: Real>(store: &mut ParamStore<T>, init: &mut Init, name: &str, c: usize) -> Self {
        Encoder {
            convs: [
                Conv2d::new(store, init, &format!("{name}.s1"), c, c, 3, 1),
                Conv2d::new(store, init, &format!("{name}.s2"), c, 2 * c, 3, 2),
                Conv2d::new(store, init, &format!("{name}.s3"), 2 * c, 4 * c, 3, 2),
            ],
        }
    }

    /// Full, half and quarter resolution features.
    pub fn forward<T: Real>(&self, s: &mut Session<T>, x: Var) -> [Var; 3] {
        let a = self.convs[0].forward_act(s, x);
        let b = self.convs[1].forward_act(s, a);
        let c = self.convs[2].forward_act(s, b);
        [a, b, c]
    }
}

pub const DECODER_BLOCKS: usize = 8;

/// `DECODER_BLOCKS` residual conv blocks.
#[derive(Debug, Clone)]
struct DecoderBlock {
    convs: Vec<Conv2d>,
}

impl DecoderBlock {
    fn new<T: Real>(store: &mut ParamStore<T>, init: &mut Init, name: &str, c: usize) -> Self {
        DecoderBlock {
            convs: (0..DECODER_BLOCKS)
                .map(|i| Conv2d::new(store, init, &format!("{name}.block{i}"), c, c, 3, 1))
                .collect(),
        }
    }

    fn forward<T: Real>(&self, s: &mut Session<T>, x: Var) -> Var {
        let mut x = x;
        for conv in &self.convs {
            let h = conv.forward_act(s, x);
            x = s.g.add(x, h);
        }
        x
    }
}

/// Supervised attention between decoder stages: features are re-weighted by
/// a sigmoid map computed from the stage's image estimate.
#[derive(Debug, Clone)]
struct Msam {
    feat: Conv2d,
    attn: Conv2d,
}

impl Msam {
    fn new<T: Real>(store: &mut ParamStore<T>, init: &mut Init, name: &str, c: usize) -> Self {
        Msam {
            feat: Conv2d::new(store, init, &format!("{name}.feat"), c, c, 3, 1),
            attn: Conv2d::new(store, init, &format!("{name}.attn"), 3, c, 1, 1),
        }
    }

    fn forward<T: Real>(&self, s: &mut Session<T>, x: Var, image: Var) -> Var {
        let a = self.attn.forward(s, image);
        let a = s.g.sigmoid(a);
        let f = self.feat.forward(s, x);
        let f = s.g.mul(f, a);
        s.g.add(x, f)
    }
}

/// Coarse-to-fine reconstruction. Scale index 0 is the coarsest.
#[derive(Debug, Clone)]
pub struct Decoder {
    blocks: [DecoderBlock; 3],
    heads: [Conv2d; 3],
    /// Applied after the coarse and middle stages.
    msam: Option<[Msam; 2]>,
    /// Channel-halving convs after each ×2 upsampling.
    ups: [Conv2d; 2],
}

pub struct DecoderOut {
    /// Per-scale head outputs, coarsest first.
    pub heads: [Var; 3],
    /// Per-scale pre-clip image estimates, coarsest first.
    pub images: [Var; 3],
}

impl Decoder {
    pub fn new<T: Real>(store: &mut ParamStore<T>, init: &mut Init, name: &str, c: usize, msam: bool) -> Self {
        let widths = [4 * c, 2 * c, c];
        let blocks = [0, 1, 2].map(|i| DecoderBlock::new(store, init, &format!("{name}.db{}", 3 - i), widths[i]));
        let heads = [0, 1, 2].map(|i| Conv2d::new(store, init, &format!("{name}.head{}", 3 - i), widths[i], 3, 3, 1));
        let msam = msam.then(|| [0, 1].map(|i| Msam::new(store, init, &format!("{name}.msam{}", 3 - i), widths[i])));
        let ups = [0, 1].map(|i| Conv2d::new(store, init, &format!("{name}.up{}", 3 - i), widths[i], widths[i + 1], 3, 1));
        Decoder { blocks, heads, msam, ups }
    }

    /// `pyramid` is full resolution first (as the encoders emit it);
    /// `bases` are the downsampled rainy frames, coarsest first.
    /// `background` selects direct image prediction over residuals.
    pub fn forward<T: Real>(
        &self,
        s: &mut Session<T>,
        hooks: &Hooks,
        pyramid: [Var; 3],
        bases: [Var; 3],
        background: bool,
    ) -> DecoderOut {
        let mut heads = Vec::with_capacity(3);
        let mut images = Vec::with_capacity(3);
        let mut x = pyramid[2];
        for i in 0..3 {
            if i > 0 {
                let up = s.g.upsample2(x);
                let up = self.ups[i - 1].forward(s, up);
                x = s.g.add(up, pyramid[2 - i]);
            }
            x = self.blocks[i].forward(s, x);
            let head = if hooks.zero_residual {
                let [n, _, h, w] = s.g.shape(x);
                s.g.constant(Tensor::zeros([n, 3, h, w]))
            } else {
                self.heads[i].forward(s, x)
            };
            let image = if background { head } else { s.g.add(bases[i], head) };
            if let (Some(m), true) = (&self.msam, i < 2) {
                x = m[i].forward(s, x, image);
            }
            heads.push(head);
            images.push(image);
        }
        DecoderOut {
            heads: heads.try_into().expect("three scales"),
            images: images.try_into().expect("three scales"),
        }
    }
}
