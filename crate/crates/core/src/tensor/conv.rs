use super::{matmul, MatLayout, Real, Tensor};

#[derive(Clone, Copy)]
struct Geometry {
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn new(x: [usize; 4], wt: [usize; 4], stride: usize, pad: usize) -> Self {
        let [_, cin, h, w] = x;
        let [_, cin_w, kh, kw] = wt;
        assert_eq!(cin, cin_w, "conv input channels {cin} vs weight {cin_w}");
        assert_eq!(kh, kw, "square kernels only");
        assert!(stride >= 1);
        assert!(h + 2 * pad >= kh && w + 2 * pad >= kw, "kernel larger than padded input");
        Geometry {
            cin,
            h,
            w,
            k: kh,
            stride,
            pad,
            ho: (h + 2 * pad - kh) / stride + 1,
            wo: (w + 2 * pad - kw) / stride + 1,
        }
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    fn rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }

    /// Valid output range `[lo, hi)` along one axis for kernel offset `kk`.
    #[inline]
    fn valid(&self, kk: usize, size: usize, out: usize) -> (usize, usize) {
        // input index = o*stride + kk - pad must lie in [0, size)
        let lo = if kk >= self.pad {
            0
        } else {
            (self.pad - kk).div_ceil(self.stride)
        };
        let hi = if size + self.pad > kk {
            ((size + self.pad - kk - 1) / self.stride + 1).min(out)
        } else {
            0
        };
        (lo.min(hi), hi)
    }
}

fn im2col<T: Real>(x: &[T], g: &Geometry, cols: &mut [T]) {
    let p = g.cols();
    for c in 0..g.cin {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            let (oy_lo, oy_hi) = g.valid(ki, g.h, g.ho);
            for kj in 0..g.k {
                let (ox_lo, ox_hi) = g.valid(kj, g.w, g.wo);
                let row = (c * g.k + ki) * g.k + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                dst.iter_mut().for_each(|v| *v = T::zero());
                for oy in oy_lo..oy_hi {
                    let iy = oy * g.stride + ki - g.pad;
                    let src_row = &plane[iy * g.w..(iy + 1) * g.w];
                    let out_row = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    if g.stride == 1 {
                        let ix0 = ox_lo + kj - g.pad;
                        out_row[ox_lo..ox_hi].copy_from_slice(&src_row[ix0..ix0 + (ox_hi - ox_lo)]);
                    } else {
                        for ox in ox_lo..ox_hi {
                            out_row[ox] = src_row[ox * g.stride + kj - g.pad];
                        }
                    }
                }
            }
        }
    }
}

fn col2im_add<T: Real>(cols: &[T], g: &Geometry, x: &mut [T]) {
    let p = g.cols();
    for c in 0..g.cin {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            let (oy_lo, oy_hi) = g.valid(ki, g.h, g.ho);
            for kj in 0..g.k {
                let (ox_lo, ox_hi) = g.valid(kj, g.w, g.wo);
                let row = (c * g.k + ki) * g.k + kj;
                let src = &cols[row * p..(row + 1) * p];
                for oy in oy_lo..oy_hi {
                    let iy = oy * g.stride + ki - g.pad;
                    let dst_row = &mut plane[iy * g.w..(iy + 1) * g.w];
                    let in_row = &src[oy * g.wo..(oy + 1) * g.wo];
                    for ox in ox_lo..ox_hi {
                        dst_row[ox * g.stride + kj - g.pad] += in_row[ox];
                    }
                }
            }
        }
    }
}

/// Cross-correlation with zero padding: `x` is (N, Cin, H, W), `weight` is
/// (Cout, Cin, k, k), `bias` is (1, Cout, 1, 1).
pub fn conv2d_forward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Tensor<T> {
    let g = Geometry::new(x.shape, weight.shape, stride, pad);
    let cout = weight.shape[0];
    let n = x.n();
    let (rows, p) = (g.rows(), g.cols());
    let mut out = Tensor::zeros([n, cout, g.ho, g.wo]);
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); rows * p]
    };
    for i in 0..n {
        let xi = x.item(i);
        let oi = &mut out.data[i * cout * p..(i + 1) * cout * p];
        let b: &[T] = if g.is_pointwise() {
            xi
        } else {
            im2col(xi, &g, &mut cols);
            &cols
        };
        matmul(
            &weight.data,
            MatLayout::row_major(cout, rows),
            b,
            MatLayout::row_major(rows, p),
            oi,
            T::zero(),
        );
        if let Some(bias) = bias {
            for (co, chunk) in oi.chunks_mut(p).enumerate() {
                let bv = bias.data[co];
                chunk.iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    out
}

/// Gradients of [`conv2d_forward`] with respect to input, weight and bias.
/// Each output is only computed when requested.
pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
    want: [bool; 3],
) -> (Option<Tensor<T>>, Option<Tensor<T>>, Option<Tensor<T>>) {
    let g = Geometry::new(x.shape, weight.shape, stride, pad);
    let cout = weight.shape[0];
    let n = x.n();
    let (rows, p) = (g.rows(), g.cols());
    let mut gx = want[0].then(|| Tensor::zeros(x.shape));
    let mut gw = want[1].then(|| Tensor::zeros(weight.shape));
    let gb = want[2].then(|| {
        let mut gb = Tensor::zeros([1, cout, 1, 1]);
        for i in 0..n {
            let go = grad_out.item(i);
            for co in 0..cout {
                let s: T = go[co * p..(co + 1) * p].iter().copied().sum();
                gb.data[co] += s;
            }
        }
        gb
    });
    let mut cols = vec![T::zero(); if g.is_pointwise() { 0 } else { rows * p }];
    for i in 0..n {
        let go = grad_out.item(i);
        if let Some(gw) = gw.as_mut() {
            let xi = x.item(i);
            let b: &[T] = if g.is_pointwise() {
                xi
            } else {
                im2col(xi, &g, &mut cols);
                &cols
            };
            // gw += go (cout×p) · colsᵀ (p×rows)
            matmul(
                go,
                MatLayout::row_major(cout, p),
                b,
                MatLayout::transposed(rows, p),
                &mut gw.data,
                T::one(),
            );
        }
        if let Some(gx) = gx.as_mut() {
            let l = x.item_len();
            let gxi = &mut gx.data[i * l..(i + 1) * l];
            if g.is_pointwise() {
                // gx = wᵀ (rows×cout) · go (cout×p)
                matmul(
                    &weight.data,
                    MatLayout::transposed(cout, rows),
                    go,
                    MatLayout::row_major(cout, p),
                    gxi,
                    T::zero(),
                );
            } else {
                matmul(
                    &weight.data,
                    MatLayout::transposed(cout, rows),
                    go,
                    MatLayout::row_major(cout, p),
                    &mut cols,
                    T::zero(),
                );
                col2im_add(&cols, &g, gxi);
            }
        }
    }
    (gx, gw, gb)
}
