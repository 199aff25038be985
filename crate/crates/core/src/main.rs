use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use egvd::events::{build_voxel_grid, read_events, read_events_csv, simulate_events, write_events, write_events_csv};
use egvd::frame::{frame_file_name, read_frame_dir, write_gray_png, write_rgb_png, Plane};
use egvd::model::{Checkpoint, Egvd};
use egvd::rain::{
    frame_timestamps, load_dataset_list, load_sequence, procedural_scene, synthesize_dataset, synthesize_sequence, write_sequence,
    RainPreset, SequenceData, DATASET_LIST,
};
use egvd::training::{
    build_samples, even_timestamps, evaluate, output_frame, rain_plane, run_ablation, run_sequence, synthetic_split, train,
    write_report, Preset, StateMode, Suite, TrainConfig,
};
use egvd::{Error, Result};

const DATA_ENV: &str = "EGVD_DATA_DIR";

#[derive(Parser)]
#[command(name = "egvd", version, about = "Event-guided video deraining toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate an event stream from a directory of PNG frames.
    SimulateEvents(SimulateArgs),
    /// Encode an event file as a voxel grid (.npy).
    Voxelize(VoxelizeArgs),
    /// Render rain over clean clips and write a training dataset.
    SynthData(SynthArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Derain a frame directory with its event file.
    Derain(DerainArgs),
    /// Run an ablation suite.
    Ablate(AblateArgs),
    /// Render loss curves and metric tables of a run directory.
    Report(ReportArgs),
}

/// Settings shared by every command that needs a configuration.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// Base preset: desk or paper.
    #[arg(long, default_value = "desk")]
    preset: Preset,
    /// key=value file applied on top of the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::preset(self.preset);
        if let Some(p) = &self.config {
            cfg.apply_file(p)?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

/// Flags that override training settings.
#[derive(Args, Clone)]
struct TrainOverrides {
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    bins: Option<usize>,
    /// neg_ssim, mae or mse; append _single for full-resolution-only supervision.
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    crop: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// Stop after this many optimizer steps.
    #[arg(long)]
    max_steps: Option<usize>,
}

impl TrainOverrides {
    fn apply(&self, cfg: &mut TrainConfig) -> Result<()> {
        if let Some(v) = &self.variant {
            cfg.set("variant", v)?;
        }
        if let Some(b) = self.bins {
            cfg.model.voxel_bins = b;
        }
        if let Some(l) = &self.loss {
            cfg.loss = l.parse()?;
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(c) = self.crop {
            cfg.crop = c;
        }
        if let Some(b) = self.batch {
            cfg.batch = b;
        }
        if let Some(m) = self.max_steps {
            cfg.max_steps = Some(m);
        }
        cfg.validate()
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Directory of PNG frames (sorted by name).
    #[arg(long)]
    frames: PathBuf,
    /// Output event file; a .csv extension selects the text format.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    contrast: Option<f64>,
}

#[derive(Args)]
struct VoxelizeArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    events: PathBuf,
    /// Output .npy file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    bins: Option<usize>,
    /// Window start in microseconds (default: stream start).
    #[arg(long)]
    t0: Option<u64>,
    /// Window end in microseconds, inclusive (default: stream end).
    #[arg(long)]
    t1: Option<u64>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// A clean clip directory, or a directory of clip directories. Without
    /// it, procedural scenes are generated.
    #[arg(long)]
    frames: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    contrast: Option<f64>,
    /// Comma-separated rain presets (light, medium, heavy).
    #[arg(long, value_delimiter = ',')]
    rain: Vec<RainPreset>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    overrides: TrainOverrides,
    /// Dataset root (default: $EGVD_DATA_DIR, else procedural data).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Must match the checkpoint if given.
    #[arg(long)]
    variant: Option<String>,
    /// Must match the checkpoint if given.
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// carry (default) or reset.
    #[arg(long)]
    state: Option<StateMode>,
    /// Also write derained frames, rain layers and motion masks.
    #[arg(long)]
    dump: bool,
}

#[derive(Args)]
struct DerainArgs {
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write rain layers and motion masks.
    #[arg(long)]
    visualize: bool,
    #[arg(long)]
    state: Option<StateMode>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value = "all")]
    suite: Suite,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory produced by train, eval or ablate.
    run: PathBuf,
    /// Defaults to the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn data_root(flag: &Option<PathBuf>) -> Option<PathBuf> {
    flag.clone()
        .or_else(|| std::env::var_os(DATA_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
}

fn load_dataset(root: &Path) -> Result<Vec<SequenceData>> {
    load_dataset_list(root)?.iter().map(|d| load_sequence(d)).collect()
}

/// Train/test split: an explicit dataset trains on all but its last sequence
/// (or on everything if it has only one); without one, procedural data.
fn train_test(cfg: &TrainConfig, data: &Option<PathBuf>) -> Result<(Vec<SequenceData>, Vec<SequenceData>)> {
    match data_root(data) {
        Some(root) => {
            let mut all = load_dataset(&root)?;
            if all.len() < 2 {
                Ok((all.clone(), all))
            } else {
                let test = all.split_off(all.len() - 1);
                Ok((all, test))
            }
        }
        None => {
            log::info!("no dataset given; synthesizing {} procedural clips", cfg.synth_clips);
            synthetic_split(cfg)
        }
    }
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let mut cfg = a.config.resolve()?;
    if let Some(c) = a.contrast {
        cfg.sim.contrast_threshold = c;
    }
    let frames = read_frame_dir(&a.frames)?;
    let ts = frame_timestamps(frames.len(), cfg.fps);
    let lum: Vec<(u64, Plane)> = ts.into_iter().zip(frames.iter().map(|f| f.luminance())).collect();
    let stream = simulate_events(&lum, &cfg.sim)?;
    if a.out.extension().is_some_and(|e| e == "csv") {
        write_events_csv(&stream, &a.out)?;
    } else {
        write_events(&stream, &a.out)?;
    }
    eprintln!("{} events from {} frames -> {}", stream.len(), frames.len(), a.out.display());
    Ok(())
}

fn read_any_events(path: &Path) -> Result<egvd::events::EventStream> {
    if path.extension().is_some_and(|e| e == "csv") {
        read_events_csv(path)
    } else {
        read_events(path)
    }
}

fn voxelize_cmd(a: VoxelizeArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let bins = a.bins.unwrap_or(cfg.model.voxel_bins);
    let stream = read_any_events(&a.events)?;
    let (t0, t1) = (a.t0.unwrap_or(stream.t_start), a.t1.unwrap_or(stream.t_end));
    if t1 < t0 {
        return Err(Error::Config(format!("--t1 {t1} precedes --t0 {t0}")));
    }
    let grid = build_voxel_grid(&stream.slice(t0, t1, true), bins)?;
    std::fs::write(&a.out, grid.to_npy()).map_err(|e| io_err(&a.out, e))?;
    eprintln!("{bins}x{}x{} grid, mass {} -> {}", grid.height, grid.width, grid.mass(), a.out.display());
    Ok(())
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn synth_cmd(a: SynthArgs) -> Result<()> {
    let mut cfg = a.config.resolve()?;
    if let Some(c) = a.contrast {
        cfg.sim.contrast_threshold = c;
    }
    let presets = if a.rain.is_empty() { vec![cfg.rain] } else { a.rain.clone() };
    let params: Vec<(String, _)> = presets.iter().map(|p| (p.name().to_string(), p.params(cfg.seed))).collect();
    match &a.frames {
        Some(dir) => {
            let has_pngs = !egvd::frame::list_pngs(dir)?.is_empty();
            let clips: Vec<PathBuf> = if has_pngs {
                vec![dir.clone()]
            } else {
                let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
                    .map_err(|e| io_err(dir, e))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.is_dir())
                    .collect();
                v.sort();
                v
            };
            let m = synthesize_dataset(&clips, &params, &a.out, &cfg.sim, cfg.fps)?;
            eprintln!("wrote {} sequences to {}", m.len(), a.out.display());
        }
        None => {
            std::fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
            let mut names = String::new();
            let mut index = 0u64;
            for i in 0..cfg.synth_clips {
                let clean = procedural_scene(cfg.synth_size, cfg.synth_size, cfg.synth_frames, cfg.seed.wrapping_add(i as u64));
                for (label, p) in &params {
                    let name = format!("scene{i:02}_{label}");
                    let seq = synthesize_sequence(&name, &clean, &p.for_sequence(index), &cfg.sim, cfg.fps)?;
                    write_sequence(&a.out.join(&name), &seq)?;
                    names.push_str(&name);
                    names.push('\n');
                    index += 1;
                }
            }
            let list = a.out.join(DATASET_LIST);
            std::fs::write(&list, names).map_err(|e| io_err(&list, e))?;
            eprintln!("wrote {index} procedural sequences to {}", a.out.display());
        }
    }
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let mut cfg = a.config.resolve()?;
    a.overrides.apply(&mut cfg)?;
    let (train_data, test_data) = train_test(&cfg, &a.data)?;
    let out = train(&cfg, &train_data, Some(&a.out))?;
    let report = evaluate(&out.net, &out.params, &test_data, cfg.eval_mode, None)?;
    report.write(&a.out)?;
    eprintln!(
        "{} steps, final loss {:.6}; held-out PSNR {:.3} dB (rainy input {:.3} dB)",
        out.losses.len(),
        out.losses.last().copied().unwrap_or(f64::NAN),
        report.avg_psnr(),
        report.baseline_psnr()
    );
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<(Egvd, egvd::nn::ParamStore<f32>)> {
    Egvd::from_checkpoint(Checkpoint::<f32>::load(path)?)
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let (net, params) = load_checkpoint(&a.checkpoint)?;
    if let Some(v) = &a.variant {
        let expected = net.cfg.with_variant(v.parse()?);
        if expected != net.cfg {
            return Err(Error::Checkpoint(format!("checkpoint is {}, not variant {v}", net.cfg.label())));
        }
    }
    if let Some(b) = a.bins {
        if b != net.cfg.voxel_bins {
            return Err(Error::Checkpoint(format!("checkpoint uses {} bins, not {b}", net.cfg.voxel_bins)));
        }
    }
    let data = match data_root(&a.data) {
        Some(root) => load_dataset(&root)?,
        None => synthetic_split(&cfg)?.1,
    };
    let mode = a.state.unwrap_or(cfg.eval_mode);
    let dump = a.dump.then(|| a.out.join("frames"));
    let report = evaluate(&net, &params, &data, mode, dump.as_deref())?;
    report.write(&a.out)?;
    print!("{}", report.to_text());
    Ok(())
}

fn derain_cmd(a: DerainArgs) -> Result<()> {
    let (net, params) = load_checkpoint(&a.checkpoint)?;
    let frames = read_frame_dir(&a.frames)?;
    let stream = read_any_events(&a.events)?;
    let ts = even_timestamps(frames.len(), stream.t_start, stream.t_end);
    let name = a.frames.display().to_string();
    let samples = build_samples(&name, &frames, None, &stream, &ts, net.cfg.voxel_bins)?;
    let derained = a.out.join("derained");
    let mut dirs = vec![derained.clone()];
    if a.visualize {
        dirs.extend([a.out.join("rain"), a.out.join("mask")]);
    }
    for d in &dirs {
        std::fs::create_dir_all(d).map_err(|e| io_err(d, e))?;
    }
    run_sequence(&net, &params, &samples, a.state.unwrap_or_default(), |k, _, out| {
        write_rgb_png(&derained.join(frame_file_name(k)), &output_frame(out))?;
        if a.visualize {
            write_gray_png(&a.out.join("rain").join(frame_file_name(k)), &rain_plane(out), 0.0, 0.5)?;
            if let Some(m) = &out.mask {
                let p = Plane {
                    width: m.w(),
                    height: m.h(),
                    data: m.data[..m.plane()].to_vec(),
                };
                write_gray_png(&a.out.join("mask").join(frame_file_name(k)), &p, 0.0, 1.0)?;
            }
        }
        Ok(())
    })?;
    eprintln!("derained {} frames -> {}", frames.len(), derained.display());
    Ok(())
}

fn ablate_cmd(a: AblateArgs) -> Result<()> {
    let mut cfg = a.config.resolve()?;
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(m) = a.max_steps {
        cfg.max_steps = Some(m);
    }
    cfg.validate()?;
    let (train_data, test_data) = train_test(&cfg, &a.data)?;
    let report = run_ablation(a.suite, &cfg, &train_data, &test_data, Some(&a.out))?;
    print!("{}", report.to_text());
    Ok(())
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let out = a.out.unwrap_or_else(|| a.run.clone());
    let path = write_report(&a.run, &out)?;
    eprintln!("report -> {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let res = match cli.cmd {
        Cmd::SimulateEvents(a) => simulate_cmd(a),
        Cmd::Voxelize(a) => voxelize_cmd(a),
        Cmd::SynthData(a) => synth_cmd(a),
        Cmd::Train(a) => train_cmd(a),
        Cmd::Eval(a) => eval_cmd(a),
        Cmd::Derain(a) => derain_cmd(a),
        Cmd::Ablate(a) => ablate_cmd(a),
        Cmd::Report(a) => report_cmd(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
