//! Python bindings. Images cross the boundary as flat `float` lists in
//! channel-major order (C, H, W); numpy arrays convert with `.ravel()` and
//! `np.asarray(...).reshape(...)`.

use std::path::PathBuf;

use egvd::events::{self, Event, SimConfig};
use egvd::frame::{Plane, RgbFrame};
use egvd::metrics::SsimConfig;
use egvd::model::{Checkpoint, ModelConfig, Variant};
use egvd::nn::ParamStore;
use egvd::rain::{procedural_scene, synthesize_sequence, RainPreset};
use egvd::training::{self as tr, StateMode};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

fn err(e: egvd::Error) -> PyErr {
    match e {
        egvd::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse<T: std::str::FromStr>(what: &str, s: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| PyValueError::new_err(format!("{what}: {e}")))
}

fn rgb_frames(frames: Vec<Vec<f32>>, width: usize, height: usize) -> PyResult<Vec<RgbFrame>> {
    frames.into_iter().map(|d| RgbFrame::from_vec(width, height, d).map_err(err)).collect()
}

fn flat(frames: Vec<RgbFrame>) -> Vec<Vec<f32>> {
    frames.into_iter().map(|f| f.data).collect()
}

/// A time-sorted event stream from one sensor.
#[pyclass(name = "EventStream", module = "egvd")]
struct PyEventStream {
    inner: events::EventStream,
}

#[pymethods]
impl PyEventStream {
    /// `events` is a list of `(x, y, t_us, polarity)` tuples.
    #[new]
    #[pyo3(signature = (width, height, t_start, t_end, events = Vec::new()))]
    fn new(width: u16, height: u16, t_start: u64, t_end: u64, events: Vec<(u16, u16, u64, i8)>) -> PyResult<Self> {
        let ev = events.into_iter().map(|(x, y, t, p)| Event::new(x, y, t, p)).collect();
        Ok(PyEventStream {
            inner: events::EventStream::new(width, height, t_start, t_end, ev).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyEventStream {
            inner: events::read_events(&path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        events::write_events(&self.inner, &path).map_err(err)
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(PyEventStream {
            inner: events::decode_events(data).map_err(err)?,
        })
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &events::encode_events(&self.inner))
    }

    fn events(&self) -> Vec<(u16, u16, u64, i8)> {
        self.inner.events.iter().map(|e| (e.x, e.y, e.t, e.p)).collect()
    }

    #[getter]
    fn width(&self) -> u16 {
        self.inner.width
    }

    #[getter]
    fn height(&self) -> u16 {
        self.inner.height
    }

    #[getter]
    fn t_range(&self) -> (u64, u64) {
        (self.inner.t_start, self.inner.t_end)
    }

    fn polarity_sum(&self) -> i64 {
        self.inner.polarity_sum()
    }

    fn voxel_grid(&self, bins: usize) -> PyResult<PyVoxelGrid> {
        Ok(PyVoxelGrid {
            inner: events::build_voxel_grid(&self.inner, bins).map_err(err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!("EventStream({}x{}, [{}, {}] us, {} events)", s.width, s.height, s.t_start, s.t_end, s.len())
    }
}

/// Bilinear temporal voxel grid, shape (bins, height, width).
#[pyclass(name = "VoxelGrid", module = "egvd")]
struct PyVoxelGrid {
    inner: events::VoxelGrid,
}

#[pymethods]
impl PyVoxelGrid {
    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (self.inner.bins, self.inner.height, self.inner.width)
    }

    fn tolist(&self) -> Vec<f32> {
        self.inner.data.clone()
    }

    /// Little-endian float32 bytes, for `np.frombuffer(..., "<f4")`.
    fn tobytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        let raw: Vec<u8> = self.inner.data.iter().flat_map(|v| v.to_le_bytes()).collect();
        PyBytes::new(py, &raw)
    }

    fn mass(&self) -> f64 {
        self.inner.mass()
    }
}

/// Events from grayscale frames in [0, 1] (each a flat H*W list).
#[pyfunction]
#[pyo3(signature = (frames, width, height, timestamps, contrast = 0.15))]
fn simulate_events(frames: Vec<Vec<f32>>, width: usize, height: usize, timestamps: Vec<u64>, contrast: f64) -> PyResult<PyEventStream> {
    if frames.len() != timestamps.len() {
        return Err(PyValueError::new_err("one timestamp per frame is required"));
    }
    let planes = frames
        .into_iter()
        .map(|data| {
            if data.len() != width * height {
                return Err(PyValueError::new_err(format!("frame has {} values, expected {}", data.len(), width * height)));
            }
            Ok(Plane { width, height, data })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let cfg = SimConfig {
        contrast_threshold: contrast,
        ..SimConfig::default()
    };
    let stamped: Vec<_> = timestamps.into_iter().zip(planes).collect();
    Ok(PyEventStream {
        inner: events::simulate_events(&stamped, &cfg).map_err(err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (a, b, channels, height, width))]
fn ssim(a: Vec<f32>, b: Vec<f32>, channels: usize, height: usize, width: usize) -> PyResult<f64> {
    egvd::metrics::ssim(&a, &b, channels, height, width, &SsimConfig::default()).map_err(err)
}

#[pyfunction]
fn psnr(a: Vec<f32>, b: Vec<f32>) -> PyResult<f64> {
    egvd::metrics::psnr(&a, &b).map_err(err)
}

/// Moving procedural RGB frames, handy as clean input.
#[pyfunction]
#[pyo3(signature = (width, height, frames, seed = 0))]
fn scene(width: usize, height: usize, frames: usize, seed: u64) -> Vec<Vec<f32>> {
    flat(procedural_scene(width, height, frames, seed))
}

/// Renders rain over clean RGB frames and simulates the matching events.
/// Returns `(rainy, clean, events)` with frames quantized to 8 bits.
#[pyfunction]
#[pyo3(signature = (frames, width, height, rain = "medium", seed = 0, contrast = 0.15, fps = 25.0))]
fn synthesize(
    frames: Vec<Vec<f32>>,
    width: usize,
    height: usize,
    rain: &str,
    seed: u64,
    contrast: f64,
    fps: f64,
) -> PyResult<(Vec<Vec<f32>>, Vec<Vec<f32>>, PyEventStream)> {
    let clean = rgb_frames(frames, width, height)?;
    let preset: RainPreset = parse("rain", rain)?;
    let sim = SimConfig {
        contrast_threshold: contrast,
        ..SimConfig::default()
    };
    let seq = synthesize_sequence("python", &clean, &preset.params(seed), &sim, fps).map_err(err)?;
    Ok((flat(seq.rainy), flat(seq.gt), PyEventStream { inner: seq.events }))
}

/// The deraining network with its parameters.
#[pyclass(name = "Model", module = "egvd")]
struct PyModel {
    net: egvd::model::Egvd,
    params: ParamStore<f32>,
    seed: u64,
    step: u64,
}

impl PyModel {
    fn from_checkpoint(ck: Checkpoint<f32>) -> PyResult<Self> {
        let (seed, step) = (ck.seed, ck.step);
        let (net, params) = egvd::model::Egvd::from_checkpoint(ck).map_err(err)?;
        Ok(PyModel { net, params, seed, step })
    }
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (channels = 8, variant = "full", bins = 10, seed = 0))]
    fn new(channels: usize, variant: &str, bins: usize, seed: u64) -> PyResult<Self> {
        let cfg = ModelConfig {
            base_channels: channels,
            voxel_bins: bins,
            ..ModelConfig::default()
        }
        .with_variant(parse::<Variant>("variant", variant)?);
        let (net, params) = egvd::model::Egvd::init(cfg, seed).map_err(err)?;
        Ok(PyModel { net, params, seed, step: 0 })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Self::from_checkpoint(Checkpoint::load(&path).map_err(err)?)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.checkpoint().save(&path).map_err(err)
    }

    #[getter]
    fn label(&self) -> String {
        self.net.cfg.label()
    }

    #[getter]
    fn bins(&self) -> usize {
        self.net.cfg.voxel_bins
    }

    fn param_count(&self) -> usize {
        self.params.count()
    }

    /// Per-module parameter counts; the last entry is the total.
    fn param_report(&self) -> Vec<(&'static str, usize)> {
        egvd::model::param_report(&self.params)
    }

    /// Derains RGB frames with their event stream; frame times are spread
    /// evenly over the stream's range. Output sides are cropped to
    /// multiples of 4.
    #[pyo3(signature = (frames, width, height, events, state = "carry"))]
    fn derain(&self, frames: Vec<Vec<f32>>, width: usize, height: usize, events: &PyEventStream, state: &str) -> PyResult<Vec<Vec<f32>>> {
        let rgb = rgb_frames(frames, width, height)?;
        let mode: StateMode = parse("state", state)?;
        let s = &events.inner;
        let ts = tr::even_timestamps(rgb.len(), s.t_start, s.t_end);
        let samples = tr::build_samples("python", &rgb, None, s, &ts, self.net.cfg.voxel_bins).map_err(err)?;
        let mut out = Vec::with_capacity(samples.len());
        tr::run_sequence(&self.net, &self.params, &samples, mode, |_, _, o| {
            out.push(tr::output_frame(o).data);
            Ok(())
        })
        .map_err(err)?;
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!("Model({}, {} parameters, step {})", self.net.cfg.label(), self.params.count(), self.step)
    }
}

impl PyModel {
    fn checkpoint(&self) -> Checkpoint<f32> {
        Checkpoint {
            config: self.net.cfg,
            seed: self.seed,
            step: self.step,
            params: self.params.clone(),
        }
    }
}

/// Trains on procedurally generated rainy clips with the small desk preset
/// and returns `(model, losses)`.
#[pyfunction]
#[pyo3(signature = (steps, seed = 0, variant = "full", out_dir = None))]
fn train_synthetic(py: Python<'_>, steps: usize, seed: u64, variant: &str, out_dir: Option<PathBuf>) -> PyResult<(PyModel, Vec<f64>)> {
    let mut cfg = tr::TrainConfig::preset(tr::Preset::Desk);
    cfg.seed = seed;
    cfg.max_steps = Some(steps);
    cfg.epochs = cfg.epochs.max(steps);
    cfg.model = cfg.model.with_variant(parse("variant", variant)?);
    let out = py.detach(|| -> egvd::Result<_> {
        let (data, _) = tr::synthetic_split(&cfg)?;
        tr::train(&cfg, &data, out_dir.as_deref())
    });
    let out = out.map_err(err)?;
    let step = out.losses.len() as u64;
    let model = PyModel {
        net: out.net,
        params: out.params,
        seed,
        step,
    };
    Ok((model, out.losses))
}

#[pymodule]
#[pyo3(name = "egvd")]
fn egvd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEventStream>()?;
    m.add_class::<PyVoxelGrid>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(simulate_events, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(scene, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(train_synthetic, m)?)?;
    Ok(())
}
