use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use super::config::TrainConfig;
use super::eval::{evaluate, EvalReport};
use super::train::train;
use crate::error::{Error, Result};
use crate::metrics::{LossKind, LossScales, LossSpec};
use crate::model::{Egvd, InputMode, ModelConfig, Target, Variant};
use crate::rain::SequenceData;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    /// Which modality feeds the second branch.
    Input,
    /// Removing EAMD, REA or the recurrent state one at a time.
    Module,
    /// Rain vs background target, single vs multi-scale supervision.
    Mapping,
    Loss,
    /// Voxel-grid temporal bins.
    Bins,
    All,
}

impl Suite {
    pub const ALL: [Suite; 6] = [Suite::Input, Suite::Module, Suite::Mapping, Suite::Loss, Suite::Bins, Suite::All];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Input => "input",
            Suite::Module => "module",
            Suite::Mapping => "mapping",
            Suite::Loss => "loss",
            Suite::Bins => "bins",
            Suite::All => "all",
        }
    }

    fn parts(self) -> Vec<Suite> {
        match self {
            Suite::All => vec![Suite::Input, Suite::Module, Suite::Mapping, Suite::Loss, Suite::Bins],
            s => vec![s],
        }
    }

    fn title(self) -> &'static str {
        match self {
            Suite::Input => "Input modality",
            Suite::Module => "Module ablation",
            Suite::Mapping => "Mapping target and supervision scales",
            Suite::Loss => "Loss function",
            Suite::Bins => "Voxel-grid bins",
            Suite::All => "All",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::config(format!("unknown suite {s:?} (expected input, module, mapping, loss, bins or all)")))
    }
}

/// One configuration of a suite, before training.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationCase {
    pub suite: Suite,
    pub name: String,
    pub cfg: TrainConfig,
}

fn case(suite: Suite, name: &str, base: &TrainConfig, edit: impl FnOnce(&mut TrainConfig)) -> AblationCase {
    let mut cfg = base.clone();
    cfg.model = ModelConfig {
        base_channels: base.model.base_channels,
        voxel_bins: base.model.voxel_bins,
        ..ModelConfig::default()
    };
    cfg.loss = LossSpec::default();
    edit(&mut cfg);
    AblationCase {
        suite,
        name: name.into(),
        cfg,
    }
}

/// The configurations of a suite. Every case starts from the full model with
/// the default loss, keeping the base's width, bins and schedule.
pub fn suite_cases(suite: Suite, base: &TrainConfig) -> Vec<AblationCase> {
    let mut out = Vec::new();
    for s in suite.parts() {
        match s {
            Suite::Input => {
                out.push(case(s, "Frame", base, |c| c.model.inputs = InputMode::FrameOnly));
                out.push(case(s, "Frame+Frame", base, |c| c.model.inputs = InputMode::FrameFrame));
                out.push(case(s, "Frame+Event", base, |_| {}));
            }
            Suite::Module => {
                out.push(case(s, "Model#A", base, |c| c.model = c.model.with_variant(Variant::NoEamd)));
                out.push(case(s, "Model#B", base, |c| c.model = c.model.with_variant(Variant::NoRea)));
                out.push(case(s, "Model#C", base, |c| c.model = c.model.with_variant(Variant::NoLstmState)));
                out.push(case(s, "Model#D", base, |_| {}));
            }
            Suite::Mapping => {
                for (tname, target) in [("background", Target::Background), ("rain", Target::Rain)] {
                    for (sname, scales) in [("single", LossScales::Single), ("multi", LossScales::Multi)] {
                        out.push(case(s, &format!("{tname}/{sname}"), base, |c| {
                            c.model.target = target;
                            c.loss.scales = scales;
                        }));
                    }
                }
            }
            Suite::Loss => {
                for (n, kind) in [("MAE", LossKind::Mae), ("MSE", LossKind::Mse), ("negative SSIM", LossKind::NegSsim)] {
                    out.push(case(s, n, base, |c| c.loss.kind = kind));
                }
            }
            Suite::Bins => {
                for b in [5, 10, 15, 20] {
                    out.push(case(s, &format!("B={b}"), base, |c| c.model.voxel_bins = b));
                }
            }
            Suite::All => unreachable!("expanded by parts()"),
        }
    }
    out
}

/// Parameter counts of a module and its plain-conv replacement.
#[derive(Debug, Clone, PartialEq)]
pub struct Parity {
    pub module: &'static str,
    pub original: usize,
    pub replacement: usize,
}

impl Parity {
    pub fn rel_diff(&self) -> f64 {
        (self.replacement as f64 - self.original as f64).abs() / self.original as f64
    }
}

pub const PARITY_TOLERANCE: f64 = 0.01;

/// Compares the EAMD and REA modules against the blocks that replace them in
/// the ablation, at the width and bin count of `model`.
pub fn parity(model: &ModelConfig) -> Result<Vec<Parity>> {
    let full = ModelConfig {
        eamd: true,
        rea: true,
        ..*model
    };
    let (_, p_full) = Egvd::init::<f32>(full, 0)?;
    let (_, p_eamd) = Egvd::init::<f32>(full.with_variant(Variant::NoEamd), 0)?;
    let (_, p_rea) = Egvd::init::<f32>(full.with_variant(Variant::NoRea), 0)?;
    Ok(vec![
        Parity {
            module: "EAMD",
            original: p_full.count_prefix("eamd"),
            replacement: p_eamd.count_prefix("eamd"),
        },
        Parity {
            module: "REA",
            original: p_full.count_prefix("pas.rea"),
            replacement: p_rea.count_prefix("pas.rea"),
        },
    ])
}

fn check_parity(model: &ModelConfig) -> Result<Vec<Parity>> {
    let p = parity(model)?;
    if let Some(bad) = p.iter().find(|p| p.rel_diff() > PARITY_TOLERANCE) {
        return Err(Error::config(format!(
            "{} replacement has {} parameters vs {} ({:.2}% off)",
            bad.module,
            bad.replacement,
            bad.original,
            100.0 * bad.rel_diff()
        )));
    }
    Ok(p)
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub suite: Suite,
    pub name: String,
    pub cfg: TrainConfig,
    pub steps: usize,
    pub final_loss: f64,
    pub eval: EvalReport,
}

#[derive(Debug, Clone)]
pub struct AblationReport {
    pub suite: Suite,
    pub rows: Vec<AblationRow>,
    pub parity: Vec<Parity>,
    pub baseline_psnr: f64,
    pub baseline_ssim: f64,
}

fn mark(b: bool) -> &'static str {
    if b {
        "✓"
    } else {
        "✗"
    }
}

impl AblationReport {
    pub fn row(&self, suite: Suite, name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.suite == suite && r.name == name)
    }

    pub fn to_tsv(&self) -> String {
        let mut s = format!(
            "# rainy_input psnr={:.4} ssim={:.6}\nsuite\tname\tlabel\tloss\tparams\tsteps\tfinal_loss\tpsnr\tssim\n",
            self.baseline_psnr, self.baseline_ssim
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.4}\t{:.6}",
                r.suite,
                r.name,
                r.cfg.model.label(),
                r.cfg.loss,
                r.eval.params,
                r.steps,
                r.final_loss,
                r.eval.avg_psnr(),
                r.eval.avg_ssim()
            );
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for p in &self.parity {
            let _ = writeln!(
                s,
                "{} parameters: {} original, {} replacement ({:+.3}%)",
                p.module,
                p.original,
                p.replacement,
                100.0 * (p.replacement as f64 / p.original as f64 - 1.0)
            );
        }
        for suite in self.suite.parts() {
            let rows: Vec<&AblationRow> = self.rows.iter().filter(|r| r.suite == suite).collect();
            if rows.is_empty() {
                continue;
            }
            let _ = writeln!(s, "\n{}", suite.title());
            if suite == Suite::Module {
                let _ = writeln!(s, "{:<16} {:>5} {:>5} {:>9} {:>9} {:>8}", "", "EAMD", "REA", "ConvLSTM", "PSNR", "SSIM");
                let _ = writeln!(s, "{:<16} {:>5} {:>5} {:>9} {:>9.3} {:>8.4}", "rainy input", "", "", "", self.baseline_psnr, self.baseline_ssim);
                for r in rows {
                    let m = &r.cfg.model;
                    let _ = writeln!(
                        s,
                        "{:<16} {:>5} {:>5} {:>9} {:>9.3} {:>8.4}",
                        r.name,
                        mark(m.eamd),
                        mark(m.rea),
                        mark(m.lstm_state),
                        r.eval.avg_psnr(),
                        r.eval.avg_ssim()
                    );
                }
            } else {
                let _ = writeln!(s, "{:<16} {:>9} {:>8} {:>10}", "", "PSNR", "SSIM", "params");
                let _ = writeln!(s, "{:<16} {:>9.3} {:>8.4} {:>10}", "rainy input", self.baseline_psnr, self.baseline_ssim, "");
                for r in rows {
                    let _ = writeln!(
                        s,
                        "{:<16} {:>9.3} {:>8.4} {:>10}",
                        r.name,
                        r.eval.avg_psnr(),
                        r.eval.avg_ssim(),
                        r.eval.params
                    );
                }
            }
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [("ablation.tsv", self.to_tsv()), ("ablation.txt", self.to_text())] {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(p, e))?;
        }
        Ok(())
    }
}

/// Trains and evaluates every case of `suite`. Each case gets its own
/// subdirectory under `out_dir` for checkpoints and loss curves.
pub fn run_ablation(
    suite: Suite,
    base: &TrainConfig,
    train_data: &[SequenceData],
    test_data: &[SequenceData],
    out_dir: Option<&Path>,
) -> Result<AblationReport> {
    let parity = check_parity(&base.model)?;
    let cases = suite_cases(suite, base);
    let mut rows = Vec::with_capacity(cases.len());
    let mut baseline = None;
    for c in cases {
        log::info!("ablation {} / {}: {}", c.suite, c.name, c.cfg.model.label());
        let dir = out_dir.map(|d| d.join(c.suite.name()).join(sanitize(&c.name)));
        let out = train(&c.cfg, train_data, dir.as_deref())?;
        let eval = evaluate(&out.net, &out.params, test_data, c.cfg.eval_mode, None)?;
        if let Some(d) = &dir {
            eval.write(d)?;
        }
        baseline.get_or_insert((eval.baseline_psnr(), eval.baseline_ssim()));
        rows.push(AblationRow {
            suite: c.suite,
            name: c.name,
            steps: out.losses.len(),
            final_loss: out.losses.last().copied().unwrap_or(f64::NAN),
            cfg: c.cfg,
            eval,
        });
    }
    let (baseline_psnr, baseline_ssim) = baseline.unwrap_or((f64::NAN, f64::NAN));
    let report = AblationReport {
        suite,
        rows,
        parity,
        baseline_psnr,
        baseline_ssim,
    };
    if let Some(d) = out_dir {
        report.write(d)?;
    }
    Ok(report)
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::Preset;

    #[test]
    fn suites_have_expected_rows() {
        let base = TrainConfig::preset(Preset::Desk);
        let n = |s| suite_cases(s, &base).len();
        assert_eq!((n(Suite::Input), n(Suite::Module), n(Suite::Mapping), n(Suite::Loss), n(Suite::Bins)), (3, 4, 4, 3, 4));
        assert_eq!(n(Suite::All), 18);
        let m = suite_cases(Suite::Module, &base);
        assert!(!m[0].cfg.model.eamd && !m[1].cfg.model.rea && !m[2].cfg.model.lstm_state);
        assert_eq!(m[3].cfg.model, base.model);
    }

    #[test]
    fn replacements_match_parameter_budget() {
        for c in [8, 16, 32] {
            let model = ModelConfig {
                base_channels: c,
                ..ModelConfig::default()
            };
            for p in parity(&model).unwrap() {
                assert!(p.rel_diff() <= PARITY_TOLERANCE, "C={c}: {p:?}");
            }
        }
    }
}
