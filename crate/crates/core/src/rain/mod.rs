//! Procedural rain streaks and their overlay onto clean video.

mod dataset;
mod scene;

pub use dataset::{
    frame_timestamps, load_dataset_list, load_sequence, synthesize_dataset, synthesize_sequence, write_sequence, Manifest, SequenceData,
    DATASET_LIST, MANIFEST_FILE,
};
pub use scene::procedural_scene;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::frame::{Plane, RgbFrame};

/// Closed interval `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Range { min, max }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.max > self.min {
            rng.random_range(self.min..=self.max)
        } else {
            self.min
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RainParams {
    /// Drops per megapixel per frame.
    pub density: f64,
    /// Streak angle from vertical; positive leans the fall to the right.
    pub direction_deg: f64,
    pub speed_px_per_frame: Range,
    pub streak_width_px: Range,
    pub brightness: Range,
    /// Open fraction of the inter-frame interval.
    pub shutter_fraction: f64,
    pub depth_layers: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RainPreset {
    Light,
    Medium,
    Heavy,
}

impl RainPreset {
    pub const ALL: [RainPreset; 3] = [RainPreset::Light, RainPreset::Medium, RainPreset::Heavy];

    pub fn name(self) -> &'static str {
        match self {
            RainPreset::Light => "light",
            RainPreset::Medium => "medium",
            RainPreset::Heavy => "heavy",
        }
    }

    pub fn params(self, seed: u64) -> RainParams {
        let (density, dir, speed, width, bright, layers) = match self {
            RainPreset::Light => (1500.0, 0.0, (8.0, 16.0), (1.0, 2.0), (0.15, 0.35), 2),
            RainPreset::Medium => (3000.0, 10.0, (12.0, 24.0), (1.0, 2.5), (0.2, 0.5), 2),
            RainPreset::Heavy => (6000.0, 20.0, (16.0, 32.0), (1.5, 3.0), (0.3, 0.7), 3),
        };
        RainParams {
            density,
            direction_deg: dir,
            speed_px_per_frame: Range::new(speed.0, speed.1),
            streak_width_px: Range::new(width.0, width.1),
            brightness: Range::new(bright.0, bright.1),
            shutter_fraction: 0.5,
            depth_layers: layers,
            seed,
        }
    }
}

impl fmt::Display for RainPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RainPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RainPreset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::config(format!("unknown rain preset {s:?}")))
    }
}

impl Default for RainParams {
    fn default() -> Self {
        RainPreset::Medium.params(0)
    }
}

impl RainParams {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("speed_px_per_frame", self.speed_px_per_frame),
            ("streak_width_px", self.streak_width_px),
            ("brightness", self.brightness),
        ] {
            if !(r.min.is_finite() && r.max.is_finite()) || r.max < r.min {
                return Err(Error::config(format!("{name}: max {} < min {}", r.max, r.min)));
            }
            if r.min < 0.0 {
                return Err(Error::config(format!("{name}: negative minimum {}", r.min)));
            }
        }
        if self.brightness.max > 1.0 {
            return Err(Error::config("brightness must lie in [0, 1]"));
        }
        // Zero density is accepted and simply draws no drops.
        if !(self.density.is_finite() && self.density >= 0.0) {
            return Err(Error::config(format!("density must be >= 0, got {}", self.density)));
        }
        if !(self.shutter_fraction > 0.0 && self.shutter_fraction <= 1.0) {
            return Err(Error::config(format!(
                "shutter_fraction must lie in (0, 1], got {}",
                self.shutter_fraction
            )));
        }
        if self.depth_layers == 0 {
            return Err(Error::config("depth_layers must be >= 1"));
        }
        if !self.direction_deg.is_finite() || self.direction_deg.abs() >= 90.0 {
            return Err(Error::config("direction_deg must lie in (-90, 90)"));
        }
        Ok(())
    }

    /// Drops alive in every frame of a `height × width` video.
    pub fn drop_count(&self, height: usize, width: usize) -> usize {
        (self.density * (height * width) as f64 / 1e6).round() as usize
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("density", self.density.to_string()),
            ("direction_deg", self.direction_deg.to_string()),
            ("speed_min", self.speed_px_per_frame.min.to_string()),
            ("speed_max", self.speed_px_per_frame.max.to_string()),
            ("streak_width_min", self.streak_width_px.min.to_string()),
            ("streak_width_max", self.streak_width_px.max.to_string()),
            ("brightness_min", self.brightness.min.to_string()),
            ("brightness_max", self.brightness.max.to_string()),
            ("shutter_fraction", self.shutter_fraction.to_string()),
            ("depth_layers", self.depth_layers.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    /// Applies one `key=value` setting. Returns `Ok(false)` for foreign keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let f = || -> Result<f64> {
            value
                .parse()
                .map_err(|_| Error::config(format!("invalid number {value:?} for {key}")))
        };
        match key {
            "density" => self.density = f()?,
            "direction_deg" => self.direction_deg = f()?,
            "speed_min" => self.speed_px_per_frame.min = f()?,
            "speed_max" => self.speed_px_per_frame.max = f()?,
            "streak_width_min" => self.streak_width_px.min = f()?,
            "streak_width_max" => self.streak_width_px.max = f()?,
            "brightness_min" => self.brightness.min = f()?,
            "brightness_max" => self.brightness.max = f()?,
            "shutter_fraction" => self.shutter_fraction = f()?,
            "depth_layers" => {
                self.depth_layers = value
                    .parse()
                    .map_err(|_| Error::config(format!("invalid depth_layers {value:?}")))?
            }
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| Error::config(format!("invalid seed {value:?}")))?
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// The same parameters with the seed replaced by one derived from
    /// `index`, so sequences get independent streams.
    pub fn for_sequence(&self, index: u64) -> RainParams {
        RainParams {
            seed: self.seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15),
            ..*self
        }
    }
}

/// One rain particle. `pos` is where the drop is when the shutter opens.
#[derive(Debug, Clone, Copy)]
struct Drop {
    x: f64,
    y: f64,
    speed: f64,
    width: f64,
    brightness: f64,
}

/// Overlap of `[u - 0.5, u + 0.5]` with `[0, len]`: the along-streak
/// coverage of the pixel centred at offset `u`.
fn coverage(u: f64, len: f64) -> f64 {
    ((u + 0.5).min(len) - (u - 0.5).max(0.0)).max(0.0)
}

/// Gaussian cross-profile for a streak of the given width (2σ).
fn profile(v: f64, width: f64) -> f64 {
    let sigma = (width / 2.0).max(1e-3);
    (-(v * v) / (2.0 * sigma * sigma)).exp()
}

/// Adds one streak into `plane`: brightness · coverage(u) · profile(v),
/// where `u` runs along the fall direction from the drop's position and `v`
/// is the perpendicular offset. Pixel centres sit at integer coordinates.
fn render_streak(plane: &mut [f64], height: usize, width: usize, d: &Drop, len: f64, (sx, sy): (f64, f64)) {
    let sigma = (d.width / 2.0).max(1e-3);
    let reach = 3.0 * sigma + 1.0;
    let (x1, y1) = (d.x + sx * len, d.y + sy * len);
    let xa = (d.x.min(x1) - reach).floor().max(0.0) as i64;
    let xb = (d.x.max(x1) + reach).ceil().min(width as f64 - 1.0) as i64;
    let ya = (d.y.min(y1) - reach).floor().max(0.0) as i64;
    let yb = (d.y.max(y1) + reach).ceil().min(height as f64 - 1.0) as i64;
    for py in ya..=yb {
        for px in xa..=xb {
            let (dx, dy) = (px as f64 - d.x, py as f64 - d.y);
            let u = dx * sx + dy * sy;
            let a = coverage(u, len);
            if a == 0.0 {
                continue;
            }
            let v = dx * sy - dy * sx;
            if v.abs() > reach {
                continue;
            }
            plane[py as usize * width + px as usize] += d.brightness * a * profile(v, d.width);
        }
    }
}

/// One streak on an empty canvas: a drop at `(x, y)` when the shutter opens
/// that travels `length` pixels along `direction_deg` while it is open.
#[allow(clippy::too_many_arguments)]
pub fn rasterize_streak(
    height: usize,
    width: usize,
    x: f64,
    y: f64,
    length: f64,
    streak_width: f64,
    brightness: f64,
    direction_deg: f64,
) -> Plane {
    let theta = direction_deg.to_radians();
    let mut acc = vec![0.0f64; height * width];
    let d = Drop {
        x,
        y,
        speed: length,
        width: streak_width,
        brightness,
    };
    render_streak(&mut acc, height, width, &d, length, (theta.sin(), theta.cos()));
    Plane {
        width,
        height,
        data: acc.into_iter().map(|v| v as f32).collect(),
    }
}

/// A rain-only video:`frames` maps of non-negative intensity in [0, 1].
pub fn generate_rain_layer(params: &RainParams, height: usize, width: usize, frames: usize) -> Result<Vec<Plane>> {
    params.validate()?;
    if height == 0 || width == 0 || frames == 0 {
        return Err(Error::config("rain layer needs H, W, T >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let theta = params.direction_deg.to_radians();
    let dir = (theta.sin(), theta.cos());
    let (h, w) = (height as f64, width as f64);
    // Drops drift sideways by up to h·tanθ on the way down, so the spawn
    // area extends upwind by that much.
    let drift = h * theta.tan();
    let x_lo = (-drift).min(0.0);
    let x_hi = w + (-drift).max(0.0);
    let layers = params.depth_layers as usize;
    let total = params.drop_count(height, width);
    let mut drops = Vec::with_capacity(total);
    for i in 0..total {
        let layer = (i % layers + 1) as f64;
        drops.push(Drop {
            x: rng.random_range(x_lo..=x_hi),
            y: rng.random_range(0.0..=h),
            speed: params.speed_px_per_frame.sample(&mut rng) / layer.sqrt(),
            width: params.streak_width_px.sample(&mut rng) / layer,
            brightness: params.brightness.sample(&mut rng) / layer,
        });
    }
    let band = (0.1 * h).max(1.0);
    let mut out = Vec::with_capacity(frames);
    let mut acc = vec![0.0f64; height * width];
    for _ in 0..frames {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for d in &drops {
            render_streak(&mut acc, height, width, d, d.speed * params.shutter_fraction, dir);
        }
        out.push(Plane {
            width,
            height,
            data: acc.iter().map(|&v| v.min(1.0) as f32).collect(),
        });
        for d in drops.iter_mut() {
            d.x += d.speed * dir.0;
            d.y += d.speed * dir.1;
            if d.y > h || d.x < x_lo - 1.0 || d.x > x_hi + 1.0 {
                // Respawn in the top band, keeping the drop's own properties.
                let len = d.speed * params.shutter_fraction;
                d.y = rng.random_range(0.0..=band) - len;
                d.x = rng.random_range(x_lo..=x_hi);
            }
        }
    }
    Ok(out)
}

/// `clip(clean + rain, 0, 1)` with the rain added to every channel.
pub fn overlay(clean: &RgbFrame, rain: &Plane) -> Result<RgbFrame> {
    if clean.width != rain.width || clean.height != rain.height {
        return Err(Error::shape(format!(
            "rain layer {}x{} does not match frame {}x{}",
            rain.width, rain.height, clean.width, clean.height
        )));
    }
    let n = rain.data.len();
    let data = clean
        .data
        .iter()
        .enumerate()
        .map(|(i, &c)| (c + rain.data[i % n]).clamp(0.0, 1.0))
        .collect();
    RgbFrame::from_vec(clean.width, clean.height, data)
}
