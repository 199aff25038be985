//! Packaged synthetic sequences: rainy and ground-truth PNG folders, an
//! event file simulated from the rainy video, and a `manifest.txt`.

use std::path::{Path, PathBuf};

use super::{generate_rain_layer, overlay, RainParams};
use crate::error::{Error, Result};
use crate::events::{read_events, simulate_events, write_events, EventStream, SimConfig};
use crate::frame::{read_frame_dir, write_frame_dir, RgbFrame};

pub const MANIFEST_FILE: &str = "manifest.txt";
/// Top-level list of sequence directories, one per line.
pub const DATASET_LIST: &str = "dataset.txt";
const RAINY_DIR: &str = "rainy";
const GT_DIR: &str = "gt";
const EVENTS_FILE: &str = "events.evt";

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub name: String,
    /// Where the clean frames came from.
    pub source: String,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub fps: f64,
    pub events: usize,
    pub rain: RainParams,
    pub sim: SimConfig,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        };
        put("name", self.name.clone());
        put("source", self.source.clone());
        put("width", self.width.to_string());
        put("height", self.height.to_string());
        put("frames", self.frames.to_string());
        put("fps", self.fps.to_string());
        put("events", self.events.to_string());
        for (k, v) in self.rain.to_pairs() {
            put(k, v);
        }
        put("contrast_threshold", self.sim.contrast_threshold.to_string());
        put("log_eps", self.sim.log_eps.to_string());
        put("refractory_us", self.sim.refractory_us.to_string());
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Manifest {
            name: String::new(),
            source: String::new(),
            width: 0,
            height: 0,
            frames: 0,
            fps: 0.0,
            events: 0,
            rain: RainParams::default(),
            sim: SimConfig::default(),
        };
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Dataset(format!("manifest line {}: expected key=value", lineno + 1)))?;
            let bad = || Error::Dataset(format!("manifest: invalid value {v:?} for {k}"));
            match k {
                "name" => m.name = v.into(),
                "source" => m.source = v.into(),
                "width" => m.width = v.parse().map_err(|_| bad())?,
                "height" => m.height = v.parse().map_err(|_| bad())?,
                "frames" => m.frames = v.parse().map_err(|_| bad())?,
                "fps" => m.fps = v.parse().map_err(|_| bad())?,
                "events" => m.events = v.parse().map_err(|_| bad())?,
                "contrast_threshold" => m.sim.contrast_threshold = v.parse().map_err(|_| bad())?,
                "log_eps" => m.sim.log_eps = v.parse().map_err(|_| bad())?,
                "refractory_us" => m.sim.refractory_us = v.parse().map_err(|_| bad())?,
                _ => {
                    if !m.rain.set(k, v)? {
                        return Err(Error::Dataset(format!("manifest: unknown key {k}")));
                    }
                }
            }
        }
        if m.frames == 0 || m.fps <= 0.0 {
            return Err(Error::Dataset("manifest lacks frames or fps".into()));
        }
        Ok(m)
    }

    /// Frame timestamps in microseconds.
    pub fn timestamps(&self) -> Vec<u64> {
        frame_timestamps(self.frames, self.fps)
    }
}

/// Microsecond timestamps of `frames` frames at a constant rate, starting at 0.
pub fn frame_timestamps(frames: usize, fps: f64) -> Vec<u64> {
    (0..frames).map(|k| (k as f64 * 1e6 / fps).round() as u64).collect()
}

/// One sequence held in memory.
#[derive(Debug, Clone)]
pub struct SequenceData {
    pub manifest: Manifest,
    pub rainy: Vec<RgbFrame>,
    pub gt: Vec<RgbFrame>,
    pub events: EventStream,
}

impl SequenceData {
    pub fn timestamps(&self) -> Vec<u64> {
        self.manifest.timestamps()
    }
}

/// Renders rain over `clean` and simulates events from the rainy
/// luminance. Frames are quantized to 8 bits first, so the result matches
/// what a reload from disk yields.
pub fn synthesize_sequence(
    name: &str,
    clean: &[RgbFrame],
    rain: &RainParams,
    sim: &SimConfig,
    fps: f64,
) -> Result<SequenceData> {
    let first = clean
        .first()
        .ok_or_else(|| Error::Dataset(format!("{name}: no clean frames")))?;
    let (w, h) = (first.width, first.height);
    if clean.iter().any(|f| f.width != w || f.height != h) {
        return Err(Error::Dataset(format!("{name}: inconsistent frame resolution")));
    }
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(Error::config(format!("fps must be positive, got {fps}")));
    }
    let layer = generate_rain_layer(rain, h, w, clean.len())?;
    let gt: Vec<RgbFrame> = clean.iter().map(RgbFrame::quantized).collect();
    let rainy = gt
        .iter()
        .zip(&layer)
        .map(|(c, r)| overlay(c, r).map(|f| f.quantized()))
        .collect::<Result<Vec<_>>>()?;
    let ts = frame_timestamps(clean.len(), fps);
    let lum: Vec<_> = ts.iter().copied().zip(rainy.iter().map(RgbFrame::luminance)).collect();
    let events = simulate_events(&lum, sim)?;
    let manifest = Manifest {
        name: name.into(),
        source: String::new(),
        width: w,
        height: h,
        frames: clean.len(),
        fps,
        events: events.len(),
        rain: *rain,
        sim: *sim,
    };
    Ok(SequenceData {
        manifest,
        rainy,
        gt,
        events,
    })
}

pub fn write_sequence(dir: &Path, seq: &SequenceData) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_frame_dir(&dir.join(RAINY_DIR), &seq.rainy)?;
    write_frame_dir(&dir.join(GT_DIR), &seq.gt)?;
    write_events(&seq.events, &dir.join(EVENTS_FILE))?;
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, seq.manifest.to_text()).map_err(|e| Error::io(path, e))
}

pub fn load_sequence(dir: &Path) -> Result<SequenceData> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest = Manifest::parse(&text)?;
    let rainy = read_frame_dir(&dir.join(RAINY_DIR))?;
    let gt = read_frame_dir(&dir.join(GT_DIR))?;
    if rainy.len() != manifest.frames || gt.len() != manifest.frames {
        return Err(Error::Dataset(format!(
            "{}: manifest lists {} frames but found {} rainy and {} ground-truth",
            dir.display(),
            manifest.frames,
            rainy.len(),
            gt.len()
        )));
    }
    for f in rainy.iter().chain(&gt) {
        if (f.width, f.height) != (manifest.width, manifest.height) {
            return Err(Error::Dataset(format!("{}: frame size differs from manifest", dir.display())));
        }
    }
    let events = read_events(&dir.join(EVENTS_FILE))?;
    Ok(SequenceData {
        manifest,
        rainy,
        gt,
        events,
    })
}

/// Sequence directories listed in `root/dataset.txt`, or every
/// subdirectory holding a manifest when there is no list.
pub fn load_dataset_list(root: &Path) -> Result<Vec<PathBuf>> {
    let list = root.join(DATASET_LIST);
    if list.is_file() {
        let text = std::fs::read_to_string(&list).map_err(|e| Error::io(&list, e))?;
        return Ok(text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| root.join(l))
            .collect());
    }
    if root.join(MANIFEST_FILE).is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let rd = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut out = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| Error::io(root, e))?.path();
        if p.join(MANIFEST_FILE).is_file() {
            out.push(p);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::Dataset(format!("no sequences found under {}", root.display())));
    }
    Ok(out)
}

/// Every clean clip × every parameter set. Sequences are named
/// `<clip>_<label>` and seeded from their index in that order.
pub fn synthesize_dataset(
    clean_dirs: &[PathBuf],
    params: &[(String, RainParams)],
    out_dir: &Path,
    sim: &SimConfig,
    fps: f64,
) -> Result<Vec<Manifest>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut manifests = Vec::new();
    let mut index = 0u64;
    for dir in clean_dirs {
        let clean = read_frame_dir(dir)?;
        if clean.is_empty() {
            return Err(Error::Dataset(format!("{}: no PNG frames", dir.display())));
        }
        let clip = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "clip".into());
        for (label, p) in params {
            let name = format!("{clip}_{label}");
            let mut seq = synthesize_sequence(&name, &clean, &p.for_sequence(index), sim, fps)?;
            seq.manifest.source = dir.display().to_string();
            write_sequence(&out_dir.join(&name), &seq)?;
            log::info!("wrote {name}: {} frames, {} events", seq.manifest.frames, seq.manifest.events);
            manifests.push(seq.manifest);
            index += 1;
        }
    }
    let list: String = manifests.iter().map(|m| format!("{}\n", m.name)).collect();
    let path = out_dir.join(DATASET_LIST);
    std::fs::write(&path, list).map_err(|e| Error::io(path, e))?;
    Ok(manifests)
}
