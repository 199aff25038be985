//! Checkpoint files: a `key=value` text header followed by raw
//! little-endian parameter blobs in header order.
//!
//! ```text
//! format=egvd-ckpt-1
//! dtype=f32
//! seed=7
//! step=200
//! config.base_channels=8
//! ...
//! param=extract.frame.conv.weight:8,3,3,3
//! ...
//! data
//! <blobs>
//! ```

use std::path::Path;

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::tensor::{Real, Tensor};

pub const CHECKPOINT_FORMAT: &str = "egvd-ckpt-1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T: Real> {
    pub config: ModelConfig,
    pub seed: u64,
    pub step: u64,
    pub params: ParamStore<T>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl<T: Real> Checkpoint<T> {
    pub fn encode(&self) -> Vec<u8> {
        let mut head = String::new();
        head.push_str(&format!("format={CHECKPOINT_FORMAT}\n"));
        head.push_str(&format!("dtype={}\n", T::DTYPE));
        head.push_str(&format!("seed={}\n", self.seed));
        head.push_str(&format!("step={}\n", self.step));
        for (k, v) in self.config.to_pairs() {
            head.push_str(&format!("config.{k}={v}\n"));
        }
        for (name, t) in self.params.iter() {
            let [n, c, h, w] = t.shape;
            head.push_str(&format!("param={name}:{n},{c},{h},{w}\n"));
        }
        head.push_str("data\n");
        let mut out = head.into_bytes();
        out.reserve(self.params.count() * T::BYTES);
        for t in self.params.values() {
            for &v in &t.data {
                v.write_le(&mut out);
            }
        }
        out
    }

    /// Parses a checkpoint, converting stored values to `T` if the file was
    /// written with the other precision.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut config = ModelConfig::default();
        let (mut seed, mut step, mut dtype, mut format) = (None, None, None, None);
        let mut shapes: Vec<(String, [usize; 4])> = Vec::new();
        let mut pos = 0;
        loop {
            let end = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| bad("header not terminated by a data line"))?;
            let line = std::str::from_utf8(&bytes[pos..pos + end]).map_err(|_| bad("header is not UTF-8"))?;
            pos += end + 1;
            if line == "data" {
                break;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("malformed header line {line:?}")))?;
            match k {
                "format" => format = Some(v.to_string()),
                "dtype" => dtype = Some(v.to_string()),
                "seed" => seed = Some(v.parse().map_err(|_| bad("bad seed"))?),
                "step" => step = Some(v.parse().map_err(|_| bad("bad step"))?),
                "param" => {
                    let (name, dims) = v.rsplit_once(':').ok_or_else(|| bad(format!("bad param line {v:?}")))?;
                    let dims: Vec<usize> = dims
                        .split(',')
                        .map(|d| d.parse().map_err(|_| bad(format!("bad shape for {name}"))))
                        .collect::<Result<_>>()?;
                    let shape: [usize; 4] = dims.try_into().map_err(|_| bad(format!("shape of {name} is not 4-D")))?;
                    shapes.push((name.to_string(), shape));
                }
                _ => match k.strip_prefix("config.") {
                    Some(key) => {
                        if !config.set(key, v)? {
                            return Err(bad(format!("unknown config key {key}")));
                        }
                    }
                    None => return Err(bad(format!("unknown header key {k}"))),
                },
            }
        }
        if format.as_deref() != Some(CHECKPOINT_FORMAT) {
            return Err(bad(format!("unsupported format {format:?}")));
        }
        let width = match dtype.as_deref() {
            Some("f32") => 4,
            Some("f64") => 8,
            other => return Err(bad(format!("unsupported dtype {other:?}"))),
        };
        let total: usize = shapes.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
        if bytes.len() - pos != total * width {
            return Err(bad(format!(
                "expected {} data bytes, found {}",
                total * width,
                bytes.len() - pos
            )));
        }
        let mut params = ParamStore::default();
        for (name, shape) in shapes {
            let n: usize = shape.iter().product();
            let data = bytes[pos..pos + n * width]
                .chunks_exact(width)
                .map(|b| if width == 4 { T::c(f32::read_le(b) as f64) } else { T::c(f64::read_le(b)) })
                .collect();
            pos += n * width;
            params.add(name, Tensor::from_vec(shape, data));
        }
        Ok(Checkpoint {
            config,
            seed: seed.ok_or_else(|| bad("missing seed"))?,
            step: step.ok_or_else(|| bad("missing step"))?,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Egvd, Variant};

    fn small() -> ModelConfig {
        ModelConfig {
            base_channels: 4,
            voxel_bins: 3,
            ..Default::default()
        }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let cfg = small().with_variant(Variant::NoRea);
        let (_, params) = Egvd::init::<f32>(cfg, 11).unwrap();
        let ck = Checkpoint {
            config: cfg,
            seed: 11,
            step: 42,
            params,
        };
        let bytes = ck.encode();
        let back = Checkpoint::<f32>::decode(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.encode(), bytes);
        let (net, _) = Egvd::from_checkpoint(back).unwrap();
        assert_eq!(net.cfg, cfg);
    }

    #[test]
    fn rejects_truncation_and_mismatch() {
        let (_, params) = Egvd::init::<f32>(small(), 1).unwrap();
        let ck = Checkpoint {
            config: small(),
            seed: 1,
            step: 0,
            params,
        };
        let bytes = ck.encode();
        assert!(Checkpoint::<f32>::decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::<f32>::decode(b"format=other\ndata\n").is_err());
        let mut wrong = Checkpoint::<f32>::decode(&bytes).unwrap();
        wrong.config.msam = false;
        assert!(Egvd::from_checkpoint(wrong).is_err());
    }

    #[test]
    fn precision_conversion() {
        let (_, params) = Egvd::init::<f32>(small(), 2).unwrap();
        let ck = Checkpoint {
            config: small(),
            seed: 2,
            step: 5,
            params,
        };
        let wide = Checkpoint::<f64>::decode(&ck.encode()).unwrap();
        assert_eq!(wide.params.cast::<f32>(), ck.params);
    }
}
