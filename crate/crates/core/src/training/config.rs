use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::events::SimConfig;
use crate::metrics::LossSpec;
use crate::model::ModelConfig;
use crate::rain::RainPreset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Small enough to train on a laptop CPU in minutes.
    Desk,
    /// The published training protocol.
    Paper,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            _ => Err(Error::config(format!("unknown preset {s:?} (expected desk or paper)"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Desk => "desk",
            Preset::Paper => "paper",
        })
    }
}

/// How the recurrent state is handled during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StateMode {
    /// State flows through the whole sequence.
    #[default]
    Carry,
    /// Zero state before every frame.
    Reset,
}

impl fmt::Display for StateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StateMode::Carry => "carry",
            StateMode::Reset => "reset",
        })
    }
}

impl FromStr for StateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "carry" => Ok(StateMode::Carry),
            "reset" => Ok(StateMode::Reset),
            _ => Err(Error::config(format!("unknown state mode {s:?}"))),
        }
    }
}

/// Everything a run needs besides data. Also carries the defaults used
/// when a command has to synthesize its own data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub crop: usize,
    pub batch: usize,
    pub epochs: usize,
    /// Stops early after this many optimizer steps.
    pub max_steps: Option<usize>,
    pub lr_start: f64,
    pub lr_end: f64,
    pub clip_len: usize,
    pub seed: u64,
    pub loss: LossSpec,
    pub eval_mode: StateMode,
    pub sim: SimConfig,
    pub fps: f64,
    pub rain: RainPreset,
    pub synth_clips: usize,
    pub synth_frames: usize,
    pub synth_size: usize,
}

impl TrainConfig {
    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Desk => TrainConfig {
                model: ModelConfig {
                    base_channels: 8,
                    ..ModelConfig::default()
                },
                crop: 64,
                batch: 2,
                epochs: 30,
                max_steps: None,
                lr_start: 1e-3,
                lr_end: 1e-4,
                clip_len: 5,
                seed: 0,
                loss: LossSpec::default(),
                eval_mode: StateMode::Carry,
                sim: SimConfig::default(),
                fps: 25.0,
                rain: RainPreset::Medium,
                synth_clips: 2,
                synth_frames: 10,
                synth_size: 64,
            },
            Preset::Paper => TrainConfig {
                model: ModelConfig::default(),
                crop: 128,
                batch: 2,
                epochs: 500,
                max_steps: None,
                lr_start: 1e-4,
                lr_end: 1e-5,
                clip_len: 5,
                seed: 0,
                loss: LossSpec::default(),
                eval_mode: StateMode::Carry,
                sim: SimConfig::default(),
                fps: 25.0,
                rain: RainPreset::Medium,
                synth_clips: 4,
                synth_frames: 20,
                synth_size: 128,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.sim.validate()?;
        if self.crop == 0 || self.crop % 4 != 0 {
            return Err(Error::config(format!("crop must be a positive multiple of 4, got {}", self.crop)));
        }
        if self.batch == 0 || self.clip_len == 0 {
            return Err(Error::config("batch and clip_len must be >= 1"));
        }
        if !(self.lr_start > 0.0 && self.lr_end > 0.0) {
            return Err(Error::config("learning rates must be positive"));
        }
        if !(self.fps > 0.0) {
            return Err(Error::config("fps must be positive"));
        }
        Ok(())
    }

    /// Applies one `key=value` setting; model keys are accepted too.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if self.model.set(key, value)? {
            return Ok(());
        }
        let bad = || Error::config(format!("invalid value {value:?} for {key}"));
        fn num<V: FromStr>(v: &str, bad: impl Fn() -> Error) -> Result<V> {
            v.parse().map_err(|_| bad())
        }
        match key {
            "crop" => self.crop = num(value, bad)?,
            "batch" => self.batch = num(value, bad)?,
            "epochs" => self.epochs = num(value, bad)?,
            "max_steps" => self.max_steps = Some(num(value, bad)?),
            "lr_start" => self.lr_start = num(value, bad)?,
            "lr_end" => self.lr_end = num(value, bad)?,
            "clip_len" => self.clip_len = num(value, bad)?,
            "seed" => self.seed = num(value, bad)?,
            "loss" => self.loss = value.parse()?,
            "eval_mode" => self.eval_mode = value.parse()?,
            "contrast" | "contrast_threshold" => self.sim.contrast_threshold = num(value, bad)?,
            "log_eps" => self.sim.log_eps = num(value, bad)?,
            "refractory_us" => self.sim.refractory_us = num(value, bad)?,
            "fps" => self.fps = num(value, bad)?,
            "rain" => self.rain = value.parse()?,
            "synth_clips" => self.synth_clips = num(value, bad)?,
            "synth_frames" => self.synth_frames = num(value, bad)?,
            "synth_size" => self.synth_size = num(value, bad)?,
            _ => return Err(Error::config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies a `key=value` file (`#` starts a comment). A `preset` line,
    /// if present, must come first and resets everything to that preset.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key=value, got {raw:?}", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k == "preset" {
                *self = TrainConfig::preset(v.parse()?);
            } else {
                self.set(k, v)
                    .map_err(|e| Error::config(format!("line {}: {e}", i + 1)))?;
            }
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.model.to_pairs() {
            s.push_str(&format!("{k}={v}\n"));
        }
        let mut put = |k: &str, v: String| s.push_str(&format!("{k}={v}\n"));
        put("crop", self.crop.to_string());
        put("batch", self.batch.to_string());
        put("epochs", self.epochs.to_string());
        if let Some(m) = self.max_steps {
            put("max_steps", m.to_string());
        }
        put("lr_start", self.lr_start.to_string());
        put("lr_end", self.lr_end.to_string());
        put("clip_len", self.clip_len.to_string());
        put("seed", self.seed.to_string());
        put("loss", self.loss.to_string());
        put("eval_mode", self.eval_mode.to_string());
        put("contrast_threshold", self.sim.contrast_threshold.to_string());
        put("log_eps", self.sim.log_eps.to_string());
        put("refractory_us", self.sim.refractory_us.to_string());
        put("fps", self.fps.to_string());
        put("rain", self.rain.to_string());
        put("synth_clips", self.synth_clips.to_string());
        put("synth_frames", self.synth_frames.to_string());
        put("synth_size", self.synth_size.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = TrainConfig::preset(Preset::Desk);
        cfg.max_steps = Some(7);
        cfg.loss = "mae_single".parse().unwrap();
        cfg.model.voxel_bins = 15;
        let mut back = TrainConfig::preset(Preset::Paper);
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn comments_preset_and_errors() {
        let mut cfg = TrainConfig::preset(Preset::Paper);
        cfg.apply_text("# desk run\npreset=desk\nepochs = 3 # short\n").unwrap();
        assert_eq!(cfg.model.base_channels, 8);
        assert_eq!(cfg.epochs, 3);
        assert!(cfg.apply_text("nonsense=1").is_err());
        assert!(cfg.apply_text("crop").is_err());
        cfg.crop = 30;
        assert!(cfg.validate().is_err());
    }
}
