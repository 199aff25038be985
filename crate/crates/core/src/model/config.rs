use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// What feeds the event branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputMode {
    /// Frames plus event voxel grids.
    #[default]
    FrameEvent,
    /// No event branch at all.
    FrameOnly,
    /// Event branch kept but fed with neighbour-frame luminance replicated
    /// into every bin.
    FrameFrame,
}

/// What the reconstruction heads predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Target {
    /// A residual added to the (downsampled) rainy frame.
    #[default]
    Rain,
    /// The clean frame directly.
    Background,
}

/// Named architecture variants used by the ablation tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    #[default]
    Full,
    NoEamd,
    NoRea,
    NoLstmState,
    FrameOnly,
    FrameFrame,
    PredictBackground,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Full,
        Variant::NoEamd,
        Variant::NoRea,
        Variant::NoLstmState,
        Variant::FrameOnly,
        Variant::FrameFrame,
        Variant::PredictBackground,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoEamd => "no_eamd",
            Variant::NoRea => "no_rea",
            Variant::NoLstmState => "no_lstm_state",
            Variant::FrameOnly => "frame_only",
            Variant::FrameFrame => "frame_frame",
            Variant::PredictBackground => "predict_background",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::config(format!("unknown variant {s:?}")))
    }
}

/// Network hyper-parameters. The individual switches are orthogonal so the
/// ablation harness can combine them; [`Variant`] sets the common presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub base_channels: usize,
    pub voxel_bins: usize,
    pub msam: bool,
    pub inputs: InputMode,
    pub eamd: bool,
    pub rea: bool,
    pub lstm_state: bool,
    pub target: Target,
}

pub const NUM_SCALES: usize = 3;

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            base_channels: 32,
            voxel_bins: 10,
            msam: true,
            inputs: InputMode::FrameEvent,
            eamd: true,
            rea: true,
            lstm_state: true,
            target: Target::Rain,
        }
    }
}

impl ModelConfig {
    pub fn with_variant(mut self, v: Variant) -> Self {
        match v {
            Variant::Full => {}
            Variant::NoEamd => self.eamd = false,
            Variant::NoRea => self.rea = false,
            Variant::NoLstmState => self.lstm_state = false,
            Variant::FrameOnly => self.inputs = InputMode::FrameOnly,
            Variant::FrameFrame => self.inputs = InputMode::FrameFrame,
            Variant::PredictBackground => self.target = Target::Background,
        }
        self
    }

    pub fn has_events(&self) -> bool {
        self.inputs != InputMode::FrameOnly
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.base_channels;
        if c < 4 || c % 2 != 0 {
            return Err(Error::config(format!("base_channels must be even and >= 4, got {c}")));
        }
        if self.voxel_bins == 0 {
            return Err(Error::config("voxel_bins must be positive"));
        }
        Ok(())
    }

    /// Short label describing every switch that differs from the default.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        match self.inputs {
            InputMode::FrameEvent => {}
            InputMode::FrameOnly => parts.push("frame_only"),
            InputMode::FrameFrame => parts.push("frame_frame"),
        }
        if !self.eamd {
            parts.push("no_eamd");
        }
        if !self.rea {
            parts.push("no_rea");
        }
        if !self.lstm_state {
            parts.push("no_lstm_state");
        }
        if self.target == Target::Background {
            parts.push("predict_background");
        }
        if !self.msam {
            parts.push("no_msam");
        }
        if parts.is_empty() {
            "full".into()
        } else {
            parts.join("+")
        }
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let inputs = match self.inputs {
            InputMode::FrameEvent => "frame_event",
            InputMode::FrameOnly => "frame_only",
            InputMode::FrameFrame => "frame_frame",
        };
        let target = match self.target {
            Target::Rain => "rain",
            Target::Background => "background",
        };
        vec![
            ("base_channels", self.base_channels.to_string()),
            ("voxel_bins", self.voxel_bins.to_string()),
            ("msam", self.msam.to_string()),
            ("inputs", inputs.into()),
            ("eamd", self.eamd.to_string()),
            ("rea", self.rea.to_string()),
            ("lstm_state", self.lstm_state.to_string()),
            ("target", target.into()),
        ]
    }

    /// Applies one `key=value` setting. Returns `Ok(false)` for keys this
    /// struct does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let bad = || Error::config(format!("invalid value {value:?} for {key}"));
        let flag = |v: &str| v.parse::<bool>().map_err(|_| bad());
        match key {
            "base_channels" => self.base_channels = value.parse().map_err(|_| bad())?,
            "voxel_bins" | "bins" => self.voxel_bins = value.parse().map_err(|_| bad())?,
            "msam" => self.msam = flag(value)?,
            "eamd" => self.eamd = flag(value)?,
            "rea" => self.rea = flag(value)?,
            "lstm_state" => self.lstm_state = flag(value)?,
            "inputs" => {
                self.inputs = match value {
                    "frame_event" => InputMode::FrameEvent,
                    "frame_only" => InputMode::FrameOnly,
                    "frame_frame" => InputMode::FrameFrame,
                    _ => return Err(bad()),
                }
            }
            "target" => {
                self.target = match value {
                    "rain" => Target::Rain,
                    "background" => Target::Background,
                    _ => return Err(bad()),
                }
            }
            "variant" => *self = self.with_variant(value.parse()?),
            _ => return Ok(false),
        }
        Ok(true)
    }
}
