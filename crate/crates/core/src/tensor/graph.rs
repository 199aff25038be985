use super::conv::{conv2d_backward, conv2d_forward};
use super::{Real, Tensor};
use crate::metrics::ssim::{ssim_item_grad, ssim_item_value, SsimConfig};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

enum Op<T> {
    Leaf,
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    },
    /// `a + b` with `b` broadcast over its unit dimensions.
    Add(Var, Var),
    Sub(Var, Var),
    /// `a ⊙ b` with `b` broadcast over its unit dimensions.
    Mul(Var, Var),
    Scale(Var, T),
    Offset(Var),
    Sigmoid(Var),
    Tanh(Var),
    Silu(Var),
    Abs(Var),
    Square(Var),
    Concat(Vec<Var>),
    Slice {
        x: Var,
        start: usize,
    },
    GlobalAvgPool(Var),
    ChannelMean(Var),
    ChannelMax {
        x: Var,
        argmax: Vec<u32>,
    },
    AvgPool2(Var),
    Upsample2(Var),
    Sum(Var),
    Ssim {
        a: Var,
        b: Var,
        cfg: SsimConfig,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Define-by-run tape. Every op appends a node; [`Graph::backward`] walks the
/// tape in reverse.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn broadcast_strides(a: [usize; 4], b: [usize; 4]) -> [usize; 4] {
    let mut strides = [0usize; 4];
    let mut acc = 1usize;
    for d in (0..4).rev() {
        assert!(
            b[d] == a[d] || b[d] == 1,
            "cannot broadcast {b:?} onto {a:?}"
        );
        strides[d] = if b[d] == 1 { 0 } else { acc };
        acc *= b[d];
    }
    strides
}

/// Applies `f(a_elem, b_elem)` over `a`'s shape with `b` broadcast.
fn zip_broadcast<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    if a.shape == b.shape {
        return Tensor {
            shape: a.shape,
            data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
        };
    }
    let s = broadcast_strides(a.shape, b.shape);
    let [n, c, h, w] = a.shape;
    let mut out = Vec::with_capacity(a.len());
    let mut i = 0;
    for ni in 0..n {
        for ci in 0..c {
            for hi in 0..h {
                let base = ni * s[0] + ci * s[1] + hi * s[2];
                for wi in 0..w {
                    out.push(f(a.data[i], b.data[base + wi * s[3]]));
                    i += 1;
                }
            }
        }
    }
    Tensor {
        shape: a.shape,
        data: out,
    }
}

/// Sums `g` (shaped like the broadcast result) down to `target` shape, with
/// each element first transformed by `f(index_in_g, g_elem)`.
fn reduce_to<T: Real>(g: &Tensor<T>, target: [usize; 4], f: impl Fn(usize, T) -> T) -> Tensor<T> {
    if g.shape == target {
        return Tensor {
            shape: target,
            data: g.data.iter().enumerate().map(|(i, &v)| f(i, v)).collect(),
        };
    }
    let s = broadcast_strides(g.shape, target);
    let [n, c, h, w] = g.shape;
    let mut out = Tensor::zeros(target);
    let mut i = 0;
    for ni in 0..n {
        for ci in 0..c {
            for hi in 0..h {
                let base = ni * s[0] + ci * s[1] + hi * s[2];
                for wi in 0..w {
                    out.data[base + wi * s[3]] += f(i, g.data[i]);
                    i += 1;
                }
            }
        }
    }
    out
}

#[inline]
fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

fn accumulate<T: Real>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 4] {
        self.nodes[v.0].value.shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives gradients.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf excluded from differentiation.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Copies a value into a fresh constant leaf, cutting gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let out = conv2d_forward(self.value(x), self.value(w), b.map(|b| self.value(b)), stride, pad);
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push(out, Op::Conv { x, w, b, stride, pad }, &inputs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = zip_broadcast(self.value(a), self.value(b), |x, y| x + y);
        self.push(out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "sub shape mismatch");
        let out = zip_broadcast(self.value(a), self.value(b), |x, y| x - y);
        self.push(out, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = zip_broadcast(self.value(a), self.value(b), |x, y| x * y);
        self.push(out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let s = T::c(s);
        let out = self.value(a).map(|v| v * s);
        self.push(out, Op::Scale(a, s), &[a])
    }

    pub fn offset(&mut self, a: Var, s: f64) -> Var {
        let s = T::c(s);
        let out = self.value(a).map(|v| v + s);
        self.push(out, Op::Offset(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.tanh());
        self.push(out, Op::Tanh(a), &[a])
    }

    /// `x·σ(x)`.
    pub fn silu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v * sigmoid(v));
        self.push(out, Op::Silu(a), &[a])
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.abs());
        self.push(out, Op::Abs(a), &[a])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v * v);
        self.push(out, Op::Square(a), &[a])
    }

    /// Concatenates along the channel axis.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let s0 = self.shape(parts[0]);
        let mut c_total = 0;
        for &p in parts {
            let s = self.shape(p);
            assert!(
                s[0] == s0[0] && s[2] == s0[2] && s[3] == s0[3],
                "concat shape mismatch {s:?} vs {s0:?}"
            );
            c_total += s[1];
        }
        let plane = s0[2] * s0[3];
        let mut out = Tensor::zeros([s0[0], c_total, s0[2], s0[3]]);
        for n in 0..s0[0] {
            let mut off = n * c_total * plane;
            for &p in parts {
                let item = self.value(p).item(n);
                out.data[off..off + item.len()].copy_from_slice(item);
                off += item.len();
            }
        }
        self.push(out, Op::Concat(parts.to_vec()), parts)
    }

    /// Channels `[start, start + len)`.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Var {
        let t = self.value(x);
        let [n, c, h, w] = t.shape;
        assert!(start + len <= c, "channel slice out of range");
        let plane = h * w;
        let mut out = Vec::with_capacity(n * len * plane);
        for i in 0..n {
            let base = (i * c + start) * plane;
            out.extend_from_slice(&t.data[base..base + len * plane]);
        }
        let out = Tensor::from_vec([n, len, h, w], out);
        self.push(out, Op::Slice { x, start }, &[x])
    }

    /// Splits into equal channel chunks.
    pub fn chunk(&mut self, x: Var, parts: usize) -> Vec<Var> {
        let c = self.shape(x)[1];
        assert_eq!(c % parts, 0);
        let len = c / parts;
        (0..parts).map(|i| self.slice_channels(x, i * len, len)).collect()
    }

    /// Per-channel spatial mean, shape (N, C, 1, 1).
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let [n, c, _, _] = t.shape;
        let plane = t.plane();
        let inv = T::one() / T::c(plane as f64);
        let data = t
            .data
            .chunks(plane)
            .map(|ch| ch.iter().copied().sum::<T>() * inv)
            .collect();
        let out = Tensor::from_vec([n, c, 1, 1], data);
        self.push(out, Op::GlobalAvgPool(x), &[x])
    }

    /// Mean over channels, shape (N, 1, H, W).
    pub fn channel_mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let [n, c, h, w] = t.shape;
        let plane = h * w;
        let inv = T::one() / T::c(c as f64);
        let mut out = Tensor::zeros([n, 1, h, w]);
        for i in 0..n {
            let o = &mut out.data[i * plane..(i + 1) * plane];
            for ch in t.item(i).chunks(plane) {
                for (a, &v) in o.iter_mut().zip(ch) {
                    *a += v;
                }
            }
            o.iter_mut().for_each(|v| *v *= inv);
        }
        self.push(out, Op::ChannelMean(x), &[x])
    }

    /// Max over channels, shape (N, 1, H, W). Ties go to the lowest channel.
    pub fn channel_max(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let [n, c, h, w] = t.shape;
        let plane = h * w;
        let mut out = Tensor::zeros([n, 1, h, w]);
        let mut argmax = vec![0u32; n * plane];
        for i in 0..n {
            let item = t.item(i);
            for p in 0..plane {
                let mut best = item[p];
                let mut arg = 0u32;
                for ch in 1..c {
                    let v = item[ch * plane + p];
                    if v > best {
                        best = v;
                        arg = ch as u32;
                    }
                }
                out.data[i * plane + p] = best;
                argmax[i * plane + p] = arg;
            }
        }
        self.push(out, Op::ChannelMax { x, argmax }, &[x])
    }

    /// 2×2 average pooling with stride 2.
    pub fn avg_pool2(&mut self, x: Var) -> Var {
        let out = avg_pool2(self.value(x));
        self.push(out, Op::AvgPool2(x), &[x])
    }

    /// Bilinear ×2 upsampling (half-pixel centers, edge clamped).
    pub fn upsample2(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let [n, c, h, w] = t.shape;
        let mut out = Tensor::zeros([n, c, 2 * h, 2 * w]);
        let ys = upsample_taps(h);
        let xs = upsample_taps(w);
        for (src, dst) in t.data.chunks(h * w).zip(out.data.chunks_mut(4 * h * w)) {
            for (oy, &(y0, y1, ly)) in ys.iter().enumerate() {
                let ly = T::c(ly);
                for (ox, &(x0, x1, lx)) in xs.iter().enumerate() {
                    let lx = T::c(lx);
                    let top = src[y0 * w + x0] * (T::one() - lx) + src[y0 * w + x1] * lx;
                    let bot = src[y1 * w + x0] * (T::one() - lx) + src[y1 * w + x1] * lx;
                    dst[oy * 2 * w + ox] = top * (T::one() - ly) + bot * ly;
                }
            }
        }
        self.push(out, Op::Upsample2(x), &[x])
    }

    /// Sum of all elements, shape (1, 1, 1, 1).
    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(out, Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Per-item mean SSIM over channels and valid window positions,
    /// shape (N, 1, 1, 1).
    pub fn ssim(&mut self, a: Var, b: Var, cfg: SsimConfig) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape, tb.shape, "ssim shape mismatch");
        let n = ta.n();
        let [_, c, h, w] = ta.shape;
        let mut vals = Vec::with_capacity(n);
        for i in 0..n {
            let ia: Vec<f64> = ta.item(i).iter().map(|v| v.f64()).collect();
            let ib: Vec<f64> = tb.item(i).iter().map(|v| v.f64()).collect();
            vals.push(T::c(ssim_item_value(&ia, &ib, c, h, w, &cfg)));
        }
        let out = Tensor::from_vec([n, 1, 1, 1], vals);
        self.push(out, Op::Ssim { a, b, cfg }, &[a, b])
    }

    /// Reverse-mode sweep from a scalar. Returns one optional gradient per
    /// node; leaves created with [`Graph::param`] get theirs populated.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar");
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape, T::one()));
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(g);
                continue;
            }
            for (v, pg) in self.local_grads(node, &g) {
                if self.nodes[v.0].requires_grad {
                    accumulate(&mut grads[v.0], pg);
                }
            }
        }
        Gradients { grads }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn local_grads(&self, node: &Node<T>, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
        let out = &node.value;
        match &node.op {
            Op::Leaf => vec![],
            Op::Conv { x, w, b, stride, pad } => {
                let want = [self.wants(*x), self.wants(*w), b.is_some_and(|b| self.wants(b))];
                let (gx, gw, gb) =
                    conv2d_backward(self.value(*x), self.value(*w), g, *stride, *pad, want);
                let mut r = Vec::new();
                if let Some(gx) = gx {
                    r.push((*x, gx));
                }
                if let Some(gw) = gw {
                    r.push((*w, gw));
                }
                if let (Some(b), Some(gb)) = (b, gb) {
                    r.push((*b, gb));
                }
                r
            }
            Op::Add(a, b) => {
                let mut r = vec![(*a, g.clone())];
                if self.wants(*b) {
                    r.push((*b, reduce_to(g, self.shape(*b), |_, v| v)));
                }
                r
            }
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|v| -v))],
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let mut r = Vec::new();
                if self.wants(*a) {
                    r.push((*a, zip_broadcast(g, tb, |gv, bv| gv * bv)));
                }
                if self.wants(*b) {
                    r.push((*b, reduce_to(g, tb.shape, |i, gv| gv * ta.data[i])));
                }
                r
            }
            Op::Scale(a, s) => vec![(*a, g.map(|v| v * *s))],
            Op::Offset(a) => vec![(*a, g.clone())],
            Op::Sigmoid(a) => vec![(*a, zip_same(g, out, |gv, y| gv * y * (T::one() - y)))],
            Op::Tanh(a) => vec![(*a, zip_same(g, out, |gv, y| gv * (T::one() - y * y)))],
            Op::Silu(a) => vec![(
                *a,
                zip_same(g, self.value(*a), |gv, x| {
                    let s = sigmoid(x);
                    gv * (s + x * s * (T::one() - s))
                }),
            )],
            Op::Abs(a) => vec![(
                *a,
                zip_same(g, self.value(*a), |gv, x| {
                    if x > T::zero() {
                        gv
                    } else if x < T::zero() {
                        -gv
                    } else {
                        T::zero()
                    }
                }),
            )],
            Op::Square(a) => vec![(
                *a,
                zip_same(g, self.value(*a), |gv, x| gv * T::c(2.0) * x),
            )],
            Op::Concat(parts) => {
                let [n, c_total, h, w] = g.shape;
                let plane = h * w;
                let mut r = Vec::new();
                let mut c_off = 0;
                for &p in parts {
                    let c = self.shape(p)[1];
                    if self.wants(p) {
                        let mut t = Vec::with_capacity(n * c * plane);
                        for i in 0..n {
                            let base = (i * c_total + c_off) * plane;
                            t.extend_from_slice(&g.data[base..base + c * plane]);
                        }
                        r.push((p, Tensor::from_vec([n, c, h, w], t)));
                    }
                    c_off += c;
                }
                r
            }
            Op::Slice { x, start } => {
                let xs = self.shape(*x);
                let [n, c, h, w] = xs;
                let len = g.shape[1];
                let plane = h * w;
                let mut t = Tensor::zeros(xs);
                for i in 0..n {
                    let dst = (i * c + start) * plane;
                    let src = i * len * plane;
                    t.data[dst..dst + len * plane].copy_from_slice(&g.data[src..src + len * plane]);
                }
                vec![(*x, t)]
            }
            Op::GlobalAvgPool(x) => {
                let xs = self.shape(*x);
                let plane = xs[2] * xs[3];
                let inv = T::one() / T::c(plane as f64);
                let mut t = Tensor::zeros(xs);
                for (ch, &gv) in t.data.chunks_mut(plane).zip(&g.data) {
                    ch.iter_mut().for_each(|v| *v = gv * inv);
                }
                vec![(*x, t)]
            }
            Op::ChannelMean(x) => {
                let xs = self.shape(*x);
                let [n, c, h, w] = xs;
                let plane = h * w;
                let inv = T::one() / T::c(c as f64);
                let mut t = Tensor::zeros(xs);
                for i in 0..n {
                    let gi = &g.data[i * plane..(i + 1) * plane];
                    for ch in 0..c {
                        let base = (i * c + ch) * plane;
                        for p in 0..plane {
                            t.data[base + p] = gi[p] * inv;
                        }
                    }
                }
                vec![(*x, t)]
            }
            Op::ChannelMax { x, argmax } => {
                let xs = self.shape(*x);
                let [n, c, h, w] = xs;
                let plane = h * w;
                let mut t = Tensor::zeros(xs);
                for i in 0..n {
                    for p in 0..plane {
                        let ch = argmax[i * plane + p] as usize;
                        t.data[(i * c + ch) * plane + p] = g.data[i * plane + p];
                    }
                }
                vec![(*x, t)]
            }
            Op::AvgPool2(x) => {
                let xs = self.shape(*x);
                let [_, _, h, w] = xs;
                let (ho, wo) = (h / 2, w / 2);
                let q = T::c(0.25);
                let mut t = Tensor::zeros(xs);
                for (src, dst) in g.data.chunks(ho * wo).zip(t.data.chunks_mut(h * w)) {
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let v = src[oy * wo + ox] * q;
                            dst[2 * oy * w + 2 * ox] = v;
                            dst[2 * oy * w + 2 * ox + 1] = v;
                            dst[(2 * oy + 1) * w + 2 * ox] = v;
                            dst[(2 * oy + 1) * w + 2 * ox + 1] = v;
                        }
                    }
                }
                vec![(*x, t)]
            }
            Op::Upsample2(x) => {
                let xs = self.shape(*x);
                let [_, _, h, w] = xs;
                let ys = upsample_taps(h);
                let xt = upsample_taps(w);
                let mut t = Tensor::zeros(xs);
                for (src, dst) in g.data.chunks(4 * h * w).zip(t.data.chunks_mut(h * w)) {
                    for (oy, &(y0, y1, ly)) in ys.iter().enumerate() {
                        let ly = T::c(ly);
                        for (ox, &(x0, x1, lx)) in xt.iter().enumerate() {
                            let lx = T::c(lx);
                            let gv = src[oy * 2 * w + ox];
                            let top = gv * (T::one() - ly);
                            let bot = gv * ly;
                            dst[y0 * w + x0] += top * (T::one() - lx);
                            dst[y0 * w + x1] += top * lx;
                            dst[y1 * w + x0] += bot * (T::one() - lx);
                            dst[y1 * w + x1] += bot * lx;
                        }
                    }
                }
                vec![(*x, t)]
            }
            Op::Sum(x) => vec![(*x, Tensor::full(self.shape(*x), g.data[0]))],
            Op::Ssim { a, b, cfg } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let [n, c, h, w] = ta.shape;
                let mut r = Vec::new();
                for (v, first, second) in [(*a, ta, tb), (*b, tb, ta)] {
                    if !self.wants(v) {
                        continue;
                    }
                    let mut t = Tensor::zeros(ta.shape);
                    let l = ta.item_len();
                    for i in 0..n {
                        let x: Vec<f64> = first.item(i).iter().map(|v| v.f64()).collect();
                        let y: Vec<f64> = second.item(i).iter().map(|v| v.f64()).collect();
                        // SSIM is symmetric, so d/db uses the same routine with roles swapped.
                        let gi = ssim_item_grad(&x, &y, c, h, w, cfg);
                        let scale = g.data[i].f64();
                        for (d, gv) in t.data[i * l..(i + 1) * l].iter_mut().zip(gi) {
                            *d = T::c(gv * scale);
                        }
                    }
                    r.push((v, t));
                }
                r
            }
        }
    }
}

fn zip_same<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    debug_assert_eq!(a.shape, b.shape);
    Tensor {
        shape: a.shape,
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    }
}

/// Source taps `(i0, i1, frac)` for each output index of a ×2 bilinear resize.
fn upsample_taps(n: usize) -> Vec<(usize, usize, f64)> {
    (0..2 * n)
        .map(|o| {
            let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// 2×2 mean pooling; odd trailing rows/columns are dropped.
pub fn avg_pool2<T: Real>(t: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = t.shape;
    let (ho, wo) = (h / 2, w / 2);
    let q = T::c(0.25);
    let mut out = Tensor::zeros([n, c, ho, wo]);
    for (src, dst) in t.data.chunks(h * w).zip(out.data.chunks_mut(ho * wo)) {
        for oy in 0..ho {
            for ox in 0..wo {
                let s = src[2 * oy * w + 2 * ox]
                    + src[2 * oy * w + 2 * ox + 1]
                    + src[(2 * oy + 1) * w + 2 * ox]
                    + src[(2 * oy + 1) * w + 2 * ox + 1];
                dst[oy * wo + ox] = s * q;
            }
        }
    }
    out
}

/// Result of [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}
