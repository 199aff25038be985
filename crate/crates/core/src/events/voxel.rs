use super::EventStream;
use crate::error::{Error, Result};

/// Optional post-scaling of an encoded grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalize {
    #[default]
    None,
    /// Divide by the largest absolute entry (no-op on an all-zero grid).
    MaxAbs,
}

/// A (bins, height, width) array of bilinearly time-binned polarities.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub bins: usize,
    pub height: usize,
    pub width: usize,
    pub t_start: u64,
    pub t_end: u64,
    pub data: Vec<f32>,
}

impl VoxelGrid {
    pub fn zeros(bins: usize, height: usize, width: usize, t_start: u64, t_end: u64) -> Self {
        VoxelGrid {
            bins,
            height,
            width,
            t_start,
            t_end,
            data: vec![0.0; bins * height * width],
        }
    }

    #[inline]
    pub fn index(&self, bin: usize, y: usize, x: usize) -> usize {
        (bin * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, bin: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(bin, y, x)]
    }

    pub fn mass(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    /// NumPy `.npy` (v1.0) bytes of a little-endian float32 `(bins, height, width)` array.
    pub fn to_npy(&self) -> Vec<u8> {
        let mut header = format!(
            "{{'descr': '<f4', 'fortran_order': False, 'shape': ({}, {}, {}), }}",
            self.bins, self.height, self.width
        );
        // magic + version + length field + header + '\n', padded to 64 bytes
        let total = 10 + header.len() + 1;
        header.push_str(&" ".repeat(total.next_multiple_of(64) - total));
        header.push('\n');
        let mut out = Vec::with_capacity(10 + header.len() + 4 * self.data.len());
        out.extend_from_slice(b"\x93NUMPY\x01\x00");
        out.extend_from_slice(&(header.len() as u16).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Crops every bin to the `w`×`h` window at (x0, y0).
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> VoxelGrid {
        let mut data = Vec::with_capacity(self.bins * w * h);
        for b in 0..self.bins {
            for y in y0..y0 + h {
                let row = self.index(b, y, 0);
                data.extend_from_slice(&self.data[row + x0..row + x0 + w]);
            }
        }
        VoxelGrid {
            bins: self.bins,
            height: h,
            width: w,
            t_start: self.t_start,
            t_end: self.t_end,
            data,
        }
    }
}

pub fn build_voxel_grid(stream: &EventStream, bins: usize) -> Result<VoxelGrid> {
    build_voxel_grid_with(stream, bins, Normalize::None)
}

/// Encodes a stream into `bins` temporal bins over the stream's own
/// `[t_start, t_end]`. Each event at normalized time `t* = (B-1)(t - t_start)/ΔT`
/// contributes `p·max(0, 1 - |b - t*|)` to the two nearest bins. A zero-length
/// range sends every event to bin 0.
pub fn build_voxel_grid_with(
    stream: &EventStream,
    bins: usize,
    normalize: Normalize,
) -> Result<VoxelGrid> {
    if bins < 2 {
        return Err(Error::config(format!("voxel grid needs at least 2 bins, got {bins}")));
    }
    let (h, w) = (stream.height as usize, stream.width as usize);
    let plane = h * w;
    let mut acc = vec![0.0f64; bins * plane];
    let span = stream.t_end.saturating_sub(stream.t_start) as f64;
    let scale = (bins - 1) as f64;
    for (i, e) in stream.events.iter().enumerate() {
        if e.t < stream.t_start || e.t > stream.t_end {
            return Err(Error::EventOutOfRange {
                index: i,
                t: e.t,
                t_start: stream.t_start,
                t_end: stream.t_end,
            });
        }
        if e.x as usize >= w || e.y as usize >= h {
            return Err(Error::shape(format!(
                "event {i} at ({}, {}) outside {w}x{h}",
                e.x, e.y
            )));
        }
        let pixel = e.y as usize * w + e.x as usize;
        let p = e.p as f64;
        let t_star = if span > 0.0 {
            scale * (e.t - stream.t_start) as f64 / span
        } else {
            0.0
        };
        let lower = t_star.floor();
        let upper = t_star.ceil();
        let wl = (1.0 - (t_star - lower).abs()).max(0.0);
        acc[lower as usize * plane + pixel] += p * wl;
        if upper != lower {
            let wu = (1.0 - (upper - t_star).abs()).max(0.0);
            acc[upper as usize * plane + pixel] += p * wu;
        }
    }
    if normalize == Normalize::MaxAbs {
        let m = acc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if m > 0.0 {
            acc.iter_mut().for_each(|v| *v /= m);
        }
    }
    Ok(VoxelGrid {
        bins,
        height: h,
        width: w,
        t_start: stream.t_start,
        t_end: stream.t_end,
        data: acc.into_iter().map(|v| v as f32).collect(),
    })
}
