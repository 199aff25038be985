//! Valid-window Gaussian SSIM with an analytic gradient.

use crate::error::{Error, Result};

/// SSIM constants. The default is the usual 11×11 window, σ = 1.5,
/// K1 = 0.01, K2 = 0.03 over a unit dynamic range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimConfig {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimConfig {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    /// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
    pub fn kernel(&self) -> Vec<f64> {
        let r = (self.window as f64 - 1.0) / 2.0;
        let taps: Vec<f64> = (0..self.window)
            .map(|i| {
                let d = i as f64 - r;
                (-(d * d) / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let s: f64 = taps.iter().sum();
        taps.into_iter().map(|v| v / s).collect()
    }

    /// The same configuration with the window shrunk (to the largest odd size
    /// that fits, σ scaled proportionally) when the image is smaller than it.
    pub fn fitted(&self, h: usize, w: usize) -> SsimConfig {
        let side = h.min(w);
        if side >= self.window {
            return *self;
        }
        let window = if side % 2 == 1 { side } else { side.saturating_sub(1) }.max(1);
        SsimConfig {
            window,
            sigma: self.sigma * window as f64 / self.window as f64,
            ..*self
        }
    }

    pub(crate) fn check(&self, h: usize, w: usize) -> Result<()> {
        if h < self.window || w < self.window {
            return Err(Error::shape(format!(
                "image {h}x{w} smaller than {0}x{0} SSIM window",
                self.window
            )));
        }
        Ok(())
    }
}

/// Valid-mode separable correlation: (h, w) → (h-k+1, w-k+1).
pub(crate) fn filter_valid(x: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ho, wo) = (h + 1 - n, w + 1 - n);
    let mut tmp = vec![0.0; h * wo];
    for y in 0..h {
        let row = &x[y * w..(y + 1) * w];
        for ox in 0..wo {
            let mut s = 0.0;
            for (j, &kv) in k.iter().enumerate() {
                s += kv * row[ox + j];
            }
            tmp[y * wo + ox] = s;
        }
    }
    let mut out = vec![0.0; ho * wo];
    for oy in 0..ho {
        for (i, &kv) in k.iter().enumerate() {
            let src = &tmp[(oy + i) * wo..(oy + i + 1) * wo];
            let dst = &mut out[oy * wo..(oy + 1) * wo];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: (h-k+1, w-k+1) → (h, w).
pub(crate) fn filter_valid_adjoint(y: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ho, wo) = (h + 1 - n, w + 1 - n);
    let mut tmp = vec![0.0; h * wo];
    for oy in 0..ho {
        let src = &y[oy * wo..(oy + 1) * wo];
        for (i, &kv) in k.iter().enumerate() {
            let dst = &mut tmp[(oy + i) * wo..(oy + i + 1) * wo];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    }
    let mut out = vec![0.0; h * w];
    for yy in 0..h {
        let src = &tmp[yy * wo..(yy + 1) * wo];
        let dst = &mut out[yy * w..(yy + 1) * w];
        for (ox, &s) in src.iter().enumerate() {
            for (j, &kv) in k.iter().enumerate() {
                dst[ox + j] += kv * s;
            }
        }
    }
    out
}

/// Windowed first and second moments of one channel pair.
struct Moments {
    mu_a: Vec<f64>,
    mu_b: Vec<f64>,
    e_aa: Vec<f64>,
    e_bb: Vec<f64>,
    e_ab: Vec<f64>,
}

fn moments(a: &[f64], b: &[f64], h: usize, w: usize, k: &[f64]) -> Moments {
    let sq = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    Moments {
        mu_a: filter_valid(a, h, w, k),
        mu_b: filter_valid(b, h, w, k),
        e_aa: filter_valid(&sq(a, a), h, w, k),
        e_bb: filter_valid(&sq(b, b), h, w, k),
        e_ab: filter_valid(&sq(a, b), h, w, k),
    }
}

pub(crate) fn ssim_plane_value(a: &[f64], b: &[f64], h: usize, w: usize, cfg: &SsimConfig) -> f64 {
    let k = cfg.kernel();
    let m = moments(a, b, h, w, &k);
    let (c1, c2) = (cfg.c1(), cfg.c2());
    let n = m.mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (m.mu_a[i], m.mu_b[i]);
        let va = m.e_aa[i] - ma * ma;
        let vb = m.e_bb[i] - mb * mb;
        let cov = m.e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total / n as f64
}

/// d(mean SSIM)/da for one channel.
pub(crate) fn ssim_plane_grad(a: &[f64], b: &[f64], h: usize, w: usize, cfg: &SsimConfig) -> Vec<f64> {
    let k = cfg.kernel();
    let m = moments(a, b, h, w, &k);
    let (c1, c2) = (cfg.c1(), cfg.c2());
    let n = m.mu_a.len();
    let inv_n = 1.0 / n as f64;
    let mut d_mu = vec![0.0; n];
    let mut d_aa = vec![0.0; n];
    let mut d_ab = vec![0.0; n];
    for i in 0..n {
        let (ma, mb) = (m.mu_a[i], m.mu_b[i]);
        let va = m.e_aa[i] - ma * ma;
        let vb = m.e_bb[i] - mb * mb;
        let cov = m.e_ab[i] - ma * mb;
        let a1 = 2.0 * ma * mb + c1;
        let a2 = 2.0 * cov + c2;
        let b1 = ma * ma + mb * mb + c1;
        let b2 = va + vb + c2;
        let den = b1 * b2;
        let s = a1 * a2 / den;
        // Independent variables: mu_a, E[a²], E[ab] (with var/cov derived).
        d_mu[i] = inv_n * (2.0 * mb * (a2 - a1) / den - 2.0 * ma * s * (b2 - b1) / den);
        d_aa[i] = inv_n * (-s / b2);
        d_ab[i] = inv_n * (2.0 * a1 / den);
    }
    let g_mu = filter_valid_adjoint(&d_mu, h, w, &k);
    let g_aa = filter_valid_adjoint(&d_aa, h, w, &k);
    let g_ab = filter_valid_adjoint(&d_ab, h, w, &k);
    (0..h * w)
        .map(|p| g_mu[p] + 2.0 * a[p] * g_aa[p] + b[p] * g_ab[p])
        .collect()
}

/// Mean over channels of per-channel SSIM for one (C, H, W) item.
pub(crate) fn ssim_item_value(a: &[f64], b: &[f64], c: usize, h: usize, w: usize, cfg: &SsimConfig) -> f64 {
    let plane = h * w;
    (0..c)
        .map(|ch| {
            let r = ch * plane..(ch + 1) * plane;
            ssim_plane_value(&a[r.clone()], &b[r], h, w, cfg)
        })
        .sum::<f64>()
        / c as f64
}

pub(crate) fn ssim_item_grad(a: &[f64], b: &[f64], c: usize, h: usize, w: usize, cfg: &SsimConfig) -> Vec<f64> {
    let plane = h * w;
    let mut out = Vec::with_capacity(c * plane);
    for ch in 0..c {
        let r = ch * plane..(ch + 1) * plane;
        out.extend(
            ssim_plane_grad(&a[r.clone()], &b[r], h, w, cfg)
                .into_iter()
                .map(|v| v / c as f64),
        );
    }
    out
}

/// SSIM of two (C, H, W) images, averaged over channels.
pub fn ssim(a: &[f32], b: &[f32], channels: usize, h: usize, w: usize, cfg: &SsimConfig) -> Result<f64> {
    if a.len() != b.len() || a.len() != channels * h * w {
        return Err(Error::shape(format!(
            "ssim inputs of length {} and {} for {channels}x{h}x{w}",
            a.len(),
            b.len()
        )));
    }
    cfg.check(h, w)?;
    let a: Vec<f64> = a.iter().map(|&v| v as f64).collect();
    let b: Vec<f64> = b.iter().map(|&v| v as f64).collect();
    Ok(ssim_item_value(&a, &b, channels, h, w, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = SsimConfig::default().kernel();
        assert_eq!(k.len(), 11);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(k[0], k[10]);
    }

    #[test]
    fn adjoint_identity() {
        let (h, w) = (13, 15);
        let k = SsimConfig::default().kernel();
        let x: Vec<f64> = (0..h * w).map(|i| ((i * 37) % 11) as f64 * 0.1).collect();
        let y: Vec<f64> = (0..(h - 10) * (w - 10)).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let fx = filter_valid(&x, h, w, &k);
        let aty = filter_valid_adjoint(&y, h, w, &k);
        let lhs: f64 = fx.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn fitted_window_shrinks_to_odd() {
        let c = SsimConfig::default();
        assert_eq!(c.fitted(32, 32), c);
        let f = c.fitted(4, 8);
        assert_eq!(f.window, 3);
        assert!((f.sigma - 1.5 * 3.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn too_small_is_an_error() {
        let a = vec![0.0f32; 3 * 8 * 8];
        assert!(ssim(&a, &a, 3, 8, 8, &SsimConfig::default()).is_err());
        assert!(ssim(&a, &a[1..], 3, 8, 8, &SsimConfig::default()).is_err());
    }
}
