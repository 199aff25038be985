//! Training, evaluation and ablation.

pub mod ablate;
pub mod config;
pub mod data;
pub mod eval;
pub mod report;
pub mod train;

pub use config::{Preset, StateMode, TrainConfig};
pub use data::{build_samples, even_timestamps, interval_slices, sequence_samples, synthetic_split, trim_to_multiple_of_4};
pub use eval::{baseline_metrics, evaluate, output_frame, rain_plane, run_sequence, score_frames, EvalReport, SeqMetrics};
pub use train::{cosine_lr, train, Adam, TrainOutcome, CHECKPOINT_FILE, CONFIG_FILE, LOSS_FILE};
pub use ablate::{parity, run_ablation, suite_cases, AblationCase, AblationReport, AblationRow, Parity, Suite, PARITY_TOLERANCE};
pub use report::{loss_svg, read_loss_file, table_svg, write_report, Curve};
