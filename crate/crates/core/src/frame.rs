//! Planar image containers shared by the simulator, the rain renderer and the
//! data loader, plus 8-bit PNG I/O.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// ITU-R BT.601 luma weights.
pub const LUMA_WEIGHTS: [f32; 3] = [0.299, 0.587, 0.114];

/// A single-channel H×W image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Plane {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::shape(format!(
                "plane {}x{} needs {} values, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(Plane {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut f32 {
        &mut self.data[y * self.width + x]
    }

    /// Replicates the plane into all three channels.
    pub fn to_rgb(&self) -> RgbFrame {
        let mut data = Vec::with_capacity(3 * self.data.len());
        for _ in 0..3 {
            data.extend_from_slice(&self.data);
        }
        RgbFrame {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

/// A planar RGB frame (3×H×W, channel-major) with values nominally in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RgbFrame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl RgbFrame {
    pub fn zeros(width: usize, height: usize) -> Self {
        RgbFrame {
            width,
            height,
            data: vec![0.0; 3 * width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != 3 * width * height {
            return Err(Error::shape(format!(
                "rgb frame {}x{} needs {} values, got {}",
                width,
                height,
                3 * width * height,
                data.len()
            )));
        }
        Ok(RgbFrame {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.width * self.height
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn luminance(&self) -> Plane {
        let n = self.plane_len();
        let data = (0..n)
            .map(|i| {
                LUMA_WEIGHTS[0] * self.data[i]
                    + LUMA_WEIGHTS[1] * self.data[n + i]
                    + LUMA_WEIGHTS[2] * self.data[2 * n + i]
            })
            .collect();
        Plane {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Crops a `size`×`size` window whose top-left corner is (x0, y0).
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> RgbFrame {
        let n = self.plane_len();
        let mut data = Vec::with_capacity(3 * w * h);
        for c in 0..3 {
            for y in y0..y0 + h {
                let row = c * n + y * self.width;
                data.extend_from_slice(&self.data[row + x0..row + x0 + w]);
            }
        }
        RgbFrame {
            width: w,
            height: h,
            data,
        }
    }

    pub fn clamped(&self) -> RgbFrame {
        RgbFrame {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    /// Quantizes to 8 bits and back, matching what a PNG round trip yields.
    pub fn quantized(&self) -> RgbFrame {
        RgbFrame {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| from_u8(to_u8(v))).collect(),
        }
    }
}

#[inline]
pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[inline]
pub fn from_u8(v: u8) -> f32 {
    v as f32 / 255.0
}

pub fn read_rgb_png(path: &Path) -> Result<RgbFrame> {
    let img = image::open(path)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let n = w * h;
    let mut data = vec![0.0f32; 3 * n];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            data[c * n + i] = from_u8(px.0[c]);
        }
    }
    RgbFrame::from_vec(w, h, data)
}

pub fn write_rgb_png(path: &Path, frame: &RgbFrame) -> Result<()> {
    let n = frame.plane_len();
    let mut buf = Vec::with_capacity(3 * n);
    for i in 0..n {
        for c in 0..3 {
            buf.push(to_u8(frame.data[c * n + i]));
        }
    }
    image::save_buffer(
        path,
        &buf,
        frame.width as u32,
        frame.height as u32,
        image::ExtendedColorType::Rgb8,
    )
    .map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes a single-channel map, linearly rescaled from `[lo, hi]` to 8 bits.
pub fn write_gray_png(path: &Path, plane: &Plane, lo: f32, hi: f32) -> Result<()> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    let buf: Vec<u8> = plane
        .data
        .iter()
        .map(|&v| to_u8((v - lo) / span))
        .collect();
    image::save_buffer(
        path,
        &buf,
        plane.width as u32,
        plane.height as u32,
        image::ExtendedColorType::L8,
    )
    .map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Lists `*.png` files in a directory, sorted by file name.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let p = entry.path();
        if p.extension().and_then(|s| s.to_str()) == Some("png") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// Reads every PNG in `dir` in name order, requiring a single resolution.
pub fn read_frame_dir(dir: &Path) -> Result<Vec<RgbFrame>> {
    let paths = list_pngs(dir)?;
    let mut frames: Vec<RgbFrame> = Vec::with_capacity(paths.len());
    for p in &paths {
        let f = read_rgb_png(p)?;
        if let Some(first) = frames.first() {
            if (first.width, first.height) != (f.width, f.height) {
                return Err(Error::Dataset(format!(
                    "{}: resolution {}x{} differs from {}x{}",
                    p.display(),
                    f.width,
                    f.height,
                    first.width,
                    first.height
                )));
            }
        }
        frames.push(f);
    }
    Ok(frames)
}

pub fn frame_file_name(index: usize) -> String {
    format!("{index:06}.png")
}

pub fn write_frame_dir(dir: &Path, frames: &[RgbFrame]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, f) in frames.iter().enumerate() {
        write_rgb_png(&dir.join(frame_file_name(i)), f)?;
    }
    Ok(())
}
