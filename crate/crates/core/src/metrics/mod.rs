//! Image-quality metrics and training losses.

mod loss;
pub mod ssim;

pub use loss::{gt_pyramid, multiscale_loss, scale_term, LossKind, LossScales, LossSpec};
pub use ssim::{ssim, SsimConfig};

use crate::error::{Error, Result};
use crate::frame::RgbFrame;

/// Peak signal-to-noise ratio in dB over a unit dynamic range. Identical
/// inputs give `f64::INFINITY`.
pub fn psnr(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::shape(format!(
            "psnr inputs of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mse = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / a.len() as f64;
    Ok(psnr_from_mse(mse))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

pub fn psnr_frames(a: &RgbFrame, b: &RgbFrame) -> Result<f64> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::shape("psnr frame sizes differ"));
    }
    psnr(&a.data, &b.data)
}

/// Channel-averaged SSIM of two RGB frames with the default window.
pub fn ssim_frames(a: &RgbFrame, b: &RgbFrame) -> Result<f64> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::shape("ssim frame sizes differ"));
    }
    ssim(&a.data, &b.data, 3, a.height, a.width, &SsimConfig::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_closed_forms() {
        let a = vec![0.5f32; 100];
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert!((psnr_from_mse(1e-4) - 40.0).abs() < 1e-12);
        let b: Vec<f32> = a.iter().map(|v| v + 0.01).collect();
        assert!((psnr(&a, &b).unwrap() - 40.0).abs() < 1e-4);
        assert!(psnr(&a, &b[1..]).is_err());
    }
}
