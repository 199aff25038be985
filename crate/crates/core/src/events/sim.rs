use super::{Event, EventStream};
use crate::error::{Error, Result};
use crate::frame::Plane;

/// Slack (log units) when deciding whether an interpolated log intensity has
/// reached the next reference level. Absorbs rounding in `ln` so that a change
/// of exactly `k·C` yields `k` events.
pub const CROSSING_TOLERANCE: f64 = 1e-9;

/// Idealized sensor parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Log-intensity step that fires one event (same for ON and OFF).
    pub contrast_threshold: f64,
    /// Offset added to intensity before taking the log.
    pub log_eps: f64,
    /// Per-pixel dead time after an event, in microseconds.
    pub refractory_us: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            contrast_threshold: 0.15,
            log_eps: 1e-3,
            refractory_us: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.contrast_threshold > 0.0) || !self.contrast_threshold.is_finite() {
            return Err(Error::config(format!(
                "contrast threshold must be positive, got {}",
                self.contrast_threshold
            )));
        }
        if !(self.log_eps > 0.0) || !self.log_eps.is_finite() {
            return Err(Error::config(format!(
                "log_eps must be positive, got {}",
                self.log_eps
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn log_intensity(&self, v: f32) -> f64 {
        (v as f64 + self.log_eps).ln()
    }
}

/// Per-pixel simulator state.
#[derive(Clone, Copy)]
struct PixelState {
    reference: f64,
    last_log: f64,
    last_fire: Option<u64>,
}

/// Converts timestamped grayscale frames into an event stream.
///
/// Log intensity is linearly interpolated between frames. Each time the
/// interpolant reaches `reference ± C` an event of that sign is emitted at the
/// interpolated time (floored to µs) and the reference moves by exactly `±C`.
/// Events falling inside a pixel's refractory window are dropped, but the
/// reference still advances.
pub fn simulate_events(frames: &[(u64, Plane)], cfg: &SimConfig) -> Result<EventStream> {
    cfg.validate()?;
    if frames.len() < 2 {
        return Err(Error::InsufficientFrames(frames.len()));
    }
    let (w, h) = (frames[0].1.width, frames[0].1.height);
    if w == 0 || h == 0 || w > u16::MAX as usize || h > u16::MAX as usize {
        return Err(Error::shape(format!("unsupported frame size {w}x{h}")));
    }
    for (i, pair) in frames.windows(2).enumerate() {
        if pair[1].0 <= pair[0].0 {
            return Err(Error::NonMonotonicTimestamps {
                index: i + 1,
                prev: pair[0].0,
                next: pair[1].0,
            });
        }
    }
    for (i, (_, f)) in frames.iter().enumerate() {
        if (f.width, f.height) != (w, h) {
            return Err(Error::shape(format!(
                "frame {i} is {}x{}, expected {w}x{h}",
                f.width, f.height
            )));
        }
    }

    let c = cfg.contrast_threshold;
    let mut state: Vec<PixelState> = frames[0]
        .1
        .data
        .iter()
        .map(|&v| {
            let l = cfg.log_intensity(v);
            PixelState {
                reference: l,
                last_log: l,
                last_fire: None,
            }
        })
        .collect();

    let mut events = Vec::new();
    for pair in frames.windows(2) {
        let (t_a, t_b) = (pair[0].0, pair[1].0);
        let span = (t_b - t_a) as f64;
        for (idx, (px, &v)) in state.iter_mut().zip(&pair[1].1.data).enumerate() {
            let l_a = px.last_log;
            let l_b = cfg.log_intensity(v);
            px.last_log = l_b;
            let delta = l_b - l_a;
            if delta == 0.0 {
                continue;
            }
            let (step, pol) = if delta > 0.0 { (c, 1i8) } else { (-c, -1i8) };
            loop {
                let level = px.reference + step;
                // Distance past the level in the direction of travel.
                let past = (l_b - level) * pol as f64;
                if past < -CROSSING_TOLERANCE {
                    break;
                }
                let frac = ((level - l_a) / delta).clamp(0.0, 1.0);
                let t = t_a + (frac * span).floor() as u64;
                px.reference = level;
                let open = px
                    .last_fire
                    .is_none_or(|last| t >= last + cfg.refractory_us);
                if open {
                    px.last_fire = Some(t);
                    events.push(Event {
                        x: (idx % w) as u16,
                        y: (idx / w) as u16,
                        t,
                        p: pol,
                    });
                }
            }
        }
    }
    events.sort_by_key(Event::sort_key);
    Ok(EventStream {
        width: w as u16,
        height: h as u16,
        t_start: frames[0].0,
        t_end: frames[frames.len() - 1].0,
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(v: f32, n: usize) -> Vec<(u64, Plane)> {
        (0..n)
            .map(|k| (k as u64 * 1000, Plane::filled(3, 2, v)))
            .collect()
    }

    #[test]
    fn constant_video_is_silent() {
        let s = simulate_events(&constant(0.4, 5), &SimConfig::default()).unwrap();
        assert!(s.is_empty());
        assert_eq!((s.t_start, s.t_end), (0, 4000));
    }

    #[test]
    fn exact_two_thresholds_give_two_events() {
        let cfg = SimConfig::default();
        let v0 = 0.2f32;
        let l0 = cfg.log_intensity(v0);
        let v1 = ((l0 + 2.0 * cfg.contrast_threshold).exp() - cfg.log_eps) as f32;
        let frames = vec![
            (0, Plane::filled(1, 1, v0)),
            (1000, Plane::filled(1, 1, v1)),
        ];
        let s = simulate_events(&frames, &cfg).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.events.iter().all(|e| e.p == 1));
        // second crossing lands at the end of the interval
        assert!(s.events[1].t >= 999);
    }

    #[test]
    fn decreasing_intensity_fires_negative_events() {
        let frames = vec![
            (0, Plane::filled(1, 1, 0.9)),
            (500, Plane::filled(1, 1, 0.1)),
        ];
        let s = simulate_events(&frames, &SimConfig::default()).unwrap();
        assert!(!s.is_empty());
        assert!(s.events.iter().all(|e| e.p == -1));
        let dl = (0.9f64 + 1e-3).ln() - (0.1f64 + 1e-3).ln();
        assert_eq!(s.len(), (dl / 0.15).floor() as usize);
    }

    #[test]
    fn refractory_suppresses_but_keeps_reference() {
        let frames = vec![
            (0, Plane::filled(1, 1, 0.05)),
            (100, Plane::filled(1, 1, 0.95)),
            (200, Plane::filled(1, 1, 0.95)),
        ];
        let cfg = SimConfig {
            refractory_us: 1_000,
            ..SimConfig::default()
        };
        let s = simulate_events(&frames, &cfg).unwrap();
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn input_errors() {
        let cfg = SimConfig::default();
        assert!(matches!(
            simulate_events(&constant(0.5, 1), &cfg),
            Err(Error::InsufficientFrames(1))
        ));
        let mut f = constant(0.5, 3);
        f[2].0 = f[1].0;
        assert!(matches!(
            simulate_events(&f, &cfg),
            Err(Error::NonMonotonicTimestamps { index: 2, .. })
        ));
        let mut f = constant(0.5, 3);
        f[1].1 = Plane::zeros(2, 2);
        assert!(matches!(simulate_events(&f, &cfg), Err(Error::Shape(_))));
        let bad = SimConfig {
            contrast_threshold: 0.0,
            ..cfg
        };
        assert!(simulate_events(&constant(0.5, 3), &bad).is_err());
    }
}
