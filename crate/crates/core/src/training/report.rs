use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::train::LOSS_FILE;
use crate::error::{Error, Result};

/// A named loss curve, one value per optimizer step.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub name: String,
    pub values: Vec<f64>,
}

/// Reads the `loss` column of a loss file written by training.
pub fn read_loss_file(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let col = header
        .split('\t')
        .position(|h| h == "loss")
        .ok_or_else(|| Error::Dataset(format!("{}: no loss column", path.display())))?;
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split('\t')
                .nth(col)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::Dataset(format!("{}: malformed line {l:?}", path.display())))
        })
        .collect()
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders curves as a standalone SVG line chart.
pub fn loss_svg(curves: &[Curve]) -> String {
    let (w, h) = (720.0, 420.0);
    let (l, r, t, b) = (70.0, 180.0, 20.0, 45.0);
    let finite = curves.iter().flat_map(|c| c.values.iter().copied()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let steps = curves.iter().map(|c| c.values.len()).max().unwrap_or(1).max(2);
    let (pw, ph) = (w - l - r, h - t - b);
    let x = |i: usize| l + pw * i as f64 / (steps - 1) as f64;
    let y = |v: f64| t + ph * (hi - v) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let yy = y(v);
        let _ = writeln!(
            s,
            r##"<line x1="{l}" y1="{yy:.1}" x2="{:.1}" y2="{yy:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.4}</text>"##,
            l + pw,
            l - 6.0,
            yy + 4.0
        );
    }
    for k in 0..=4 {
        let i = (steps - 1) * k / 4;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            x(i),
            t + ph + 16.0,
            i + 1
        );
    }
    let _ = writeln!(
        s,
        r##"<rect x="{l}" y="{t}" width="{pw}" height="{ph}" fill="none" stroke="#444"/><text x="{:.1}" y="{:.1}" text-anchor="middle">step</text>"##,
        l + pw / 2.0,
        h - 8.0
    );
    for (k, c) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = c
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, &v)| format!("{:.1},{:.1}", x(i), y(v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = t + 14.0 * (k as f64 + 1.0);
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            w - r + 10.0,
            w - r + 30.0,
            w - r + 35.0,
            ly + 4.0,
            esc(&c.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Renders a fixed-width text table as an SVG image.
pub fn table_svg(text: &str) -> String {
    let lines: Vec<&str> = text.lines().collect();
    let cols = lines.iter().map(|l| l.chars().count()).max().unwrap_or(0);
    let (w, h) = (20.0 + 7.2 * cols as f64, 20.0 + 16.0 * lines.len() as f64);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" font-family=\"monospace\" font-size=\"12\">\n<rect width=\"{w:.0}\" height=\"{h:.0}\" fill=\"white\"/>\n"
    );
    for (i, l) in lines.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="10" y="{:.0}" xml:space="preserve">{}</text>"#,
            24.0 + 16.0 * i as f64,
            esc(l)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn find_loss_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_loss_files(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == LOSS_FILE) {
            out.push(p);
        }
    }
    Ok(())
}

/// Collects every loss curve below `run_dir`, writes `loss_curves.svg` and a
/// `report.md` that embeds the plot and any evaluation or ablation tables
/// found at the top level (each also rendered to `<name>_table.svg`). Returns the markdown path.
pub fn write_report(run_dir: &Path, out_dir: &Path) -> Result<PathBuf> {
    let mut files = Vec::new();
    find_loss_files(run_dir, &mut files)?;
    let curves: Vec<Curve> = files
        .iter()
        .map(|p| {
            let name = p
                .parent()
                .and_then(|d| d.strip_prefix(run_dir).ok())
                .map(|d| d.display().to_string())
                .filter(|d| !d.is_empty())
                .unwrap_or_else(|| "run".into());
            Ok(Curve {
                name,
                values: read_loss_file(p)?,
            })
        })
        .collect::<Result<_>>()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut md = format!("# Run report: {}\n\n", run_dir.display());
    if curves.is_empty() {
        md.push_str("No loss curves found.\n");
    } else {
        let svg = out_dir.join("loss_curves.svg");
        std::fs::write(&svg, loss_svg(&curves)).map_err(|e| Error::io(&svg, e))?;
        md.push_str("## Training loss\n\n![loss curves](loss_curves.svg)\n\n| run | steps | first | last | min |\n|---|---:|---:|---:|---:|\n");
        for c in &curves {
            let min = c.values.iter().copied().fold(f64::INFINITY, f64::min);
            let _ = writeln!(
                md,
                "| {} | {} | {:.5} | {:.5} | {min:.5} |",
                c.name,
                c.values.len(),
                c.values.first().copied().unwrap_or(f64::NAN),
                c.values.last().copied().unwrap_or(f64::NAN)
            );
        }
    }
    for (file, title) in [("eval.txt", "Evaluation"), ("ablation.txt", "Ablation")] {
        let p = run_dir.join(file);
        if p.exists() {
            let body = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            let svg = out_dir.join(file.replace(".txt", "_table.svg"));
            std::fs::write(&svg, table_svg(&body)).map_err(|e| Error::io(&svg, e))?;
            let _ = write!(md, "\n## {title}\n\n```\n{}```\n", body);
        }
    }
    let path = out_dir.join("report.md");
    std::fs::write(&path, md).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
