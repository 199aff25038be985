use crate::error::{Error, Result};
use crate::events::{build_voxel_grid, EventStream, VoxelGrid};
use crate::frame::RgbFrame;
use crate::model::Sample;
use super::config::TrainConfig;
use crate::rain::{procedural_scene, synthesize_sequence, SequenceData};

/// Splits `stream` at the frame timestamps: interval `k` covers
/// `[t_k, t_{k+1})`, the last one `[t_{n-2}, t_{n-1}]`. Every event inside
/// the video's time range lands in exactly one interval.
pub fn interval_slices(stream: &EventStream, timestamps: &[u64]) -> Result<Vec<EventStream>> {
    if timestamps.len() < 2 {
        return Ok(Vec::new());
    }
    if timestamps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Dataset("frame timestamps must increase strictly".into()));
    }
    let (t0, t1) = (timestamps[0], *timestamps.last().expect("non-empty"));
    if let Some(e) = stream.events.iter().find(|e| e.t < t0 || e.t > t1) {
        return Err(Error::Dataset(format!(
            "event at t={} lies outside the video's time range [{t0}, {t1}]",
            e.t
        )));
    }
    let last = timestamps.len() - 2;
    Ok(timestamps
        .windows(2)
        .enumerate()
        .map(|(k, w)| stream.slice(w[0], w[1], k == last))
        .collect())
}

/// One sample per frame of `seq`.
pub fn sequence_samples(seq: &SequenceData, bins: usize) -> Result<Vec<Sample>> {
    let ts = seq.timestamps();
    build_samples(&seq.manifest.name, &seq.rainy, Some(&seq.gt), &seq.events, &ts, bins)
}

/// One sample per frame. Neighbours of the first and last frame replicate
/// that frame, and their missing event side is an empty grid.
pub fn build_samples(
    name: &str,
    rainy: &[RgbFrame],
    gt: Option<&[RgbFrame]>,
    events: &EventStream,
    timestamps: &[u64],
    bins: usize,
) -> Result<Vec<Sample>> {
    let n = rainy.len();
    if n == 0 {
        return Err(Error::Dataset(format!("{name}: empty sequence")));
    }
    if let Some(gt) = gt {
        if gt.len() != n {
            return Err(Error::Dataset(format!(
                "{name}: {n} rainy frames but {} ground-truth frames",
                gt.len()
            )));
        }
    }
    if timestamps.len() != n {
        return Err(Error::Dataset(format!(
            "{name}: {} timestamps for {n} frames",
            timestamps.len()
        )));
    }
    let (w, h) = (rainy[0].width, rainy[0].height);
    if (events.width as usize, events.height as usize) != (w, h) {
        return Err(Error::Dataset(format!(
            "{name}: event sensor {}x{} does not match frames {w}x{h}",
            events.width, events.height
        )));
    }
    let grids: Vec<VoxelGrid> = interval_slices(events, timestamps)?
        .iter()
        .map(|s| build_voxel_grid(s, bins))
        .collect::<Result<_>>()?;
    let empty = |t: u64| VoxelGrid::zeros(bins, h, w, t, t);
    Ok((0..n)
        .map(|k| Sample {
            prev: rainy[k.saturating_sub(1)].clone(),
            cur: rainy[k].clone(),
            next: rainy[(k + 1).min(n - 1)].clone(),
            e_minus: if k > 0 { grids[k - 1].clone() } else { empty(timestamps[0]) },
            e_plus: if k + 1 < n { grids[k].clone() } else { empty(timestamps[n - 1]) },
            gt: gt.map(|g| g[k].clone()),
        })
        .collect())
}

/// `n` timestamps spread evenly over `[t_start, t_end]`.
pub fn even_timestamps(n: usize, t_start: u64, t_end: u64) -> Vec<u64> {
    if n <= 1 {
        return vec![t_start; n];
    }
    let span = (t_end - t_start) as f64;
    (0..n)
        .map(|k| t_start + (span * k as f64 / (n - 1) as f64).round() as u64)
        .collect()
}

/// Trims a sample to the largest size whose sides are multiples of 4.
pub fn trim_to_multiple_of_4(s: &Sample) -> Sample {
    let (w, h) = (s.width() / 4 * 4, s.height() / 4 * 4);
    if (w, h) == (s.width(), s.height()) {
        s.clone()
    } else {
        s.crop(0, 0, w, h)
    }
}

/// Procedurally generated train/test sequences following the synthesis
/// settings of `cfg`: `synth_clips` training clips plus one held-out clip
/// rendered with different scene and rain seeds.
pub fn synthetic_split(cfg: &TrainConfig) -> Result<(Vec<SequenceData>, Vec<SequenceData>)> {
    let rain = cfg.rain.params(cfg.seed);
    let make = |i: usize, tag: &str| {
        let clean = procedural_scene(cfg.synth_size, cfg.synth_size, cfg.synth_frames, cfg.seed.wrapping_add(i as u64));
        let name = format!("{tag}{i:02}_{}", cfg.rain);
        synthesize_sequence(&name, &clean, &rain.for_sequence(i as u64), &cfg.sim, cfg.fps)
    };
    let train = (0..cfg.synth_clips).map(|i| make(i, "synth")).collect::<Result<_>>()?;
    let test = vec![make(cfg.synth_clips + 1000, "heldout")?];
    Ok((train, test))
}
