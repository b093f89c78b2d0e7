//! Writes an [`AnalysisReport`] to disk: `report.json`, `tables/*.csv` and
//! `plots/*.svg`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::analysis::AnalysisReport;
use super::config::{AnalysisConfig, OutputFormat};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::selection::LabeledMatrix;

/// Files written by [`emit_report`], relative to the output directory.
pub type Written = Vec<PathBuf>;

/// Report as pretty JSON with a trailing newline.
pub fn report_json(report: &AnalysisReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report).map_err(|e| Error::Io(format!("serialising report: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Keeps `[A-Za-z0-9_-]` and replaces everything else by `_`.
pub fn file_stem(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    if s.is_empty() {
        "_".into()
    } else {
        s
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

/// CSV with a header row and a label column.
fn labeled_csv(row_labels: &[String], col_labels: &[String], m: &Mat) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Io(e.to_string());
    let mut header = vec![String::new()];
    header.extend(col_labels.iter().cloned());
    w.write_record(&header).map_err(err)?;
    for (i, label) in row_labels.iter().enumerate() {
        let mut rec = vec![label.clone()];
        rec.extend(m.row(i).iter().map(|&v| fmt_num(v)));
        w.write_record(&rec).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Matrix CSV with 1-based landmark labels on both axes.
pub fn landmark_csv(m: &Mat) -> Result<String> {
    let rows: Vec<String> = (1..=m.nrows()).map(|i| i.to_string()).collect();
    let cols: Vec<String> = (1..=m.ncols()).map(|i| i.to_string()).collect();
    labeled_csv(&rows, &cols, m)
}

fn coordinate_csv(mu: &Mat) -> Result<String> {
    let rows: Vec<String> = (1..=mu.nrows()).map(|i| i.to_string()).collect();
    let cols: Vec<String> = (1..=mu.ncols()).map(|c| format!("x{c}")).collect();
    labeled_csv(&rows, &cols, mu)
}

fn table_csv(t: &LabeledMatrix) -> Result<String> {
    labeled_csv(&t.labels, &t.labels, &t.values)
}

/// Scatter of the first two coordinates with landmarks labelled `1..K`.
pub fn mean_form_svg(title: &str, mu: &Mat) -> String {
    const SIZE: f64 = 400.0;
    const PAD: f64 = 40.0;
    let k = mu.nrows();
    let xy: Vec<(f64, f64)> = (0..k)
        .map(|i| (mu[(i, 0)], if mu.ncols() > 1 { mu[(i, 1)] } else { 0.0 }))
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &xy {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-12);
    let scale = (SIZE - 2.0 * PAD) / span;
    let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    let escaped = title.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, "  <title>{escaped}</title>");
    let _ = writeln!(s, r#"  <rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"  <text x="10" y="20" font-size="14" font-family="sans-serif">{escaped}</text>"#);
    for (i, &(x, y)) in xy.iter().enumerate() {
        let px = SIZE / 2.0 + (x - cx) * scale;
        let py = SIZE / 2.0 - (y - cy) * scale;
        let _ = writeln!(s, r#"  <circle class="landmark" cx="{px:.3}" cy="{py:.3}" r="4" fill="steelblue"/>"#);
        let _ = writeln!(
            s,
            r#"  <text class="label" x="{:.3}" y="{:.3}" font-size="12" font-family="sans-serif">{}</text>"#,
            px + 6.0,
            py - 6.0,
            i + 1
        );
    }
    s.push_str("</svg>\n");
    s
}

fn write(dir: &Path, rel: &str, contents: &str, written: &mut Written) -> Result<()> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::Io(format!("{}: {e}", parent.display())))?;
    }
    fs::write(&path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    written.push(PathBuf::from(rel));
    Ok(())
}

/// Writes the report into `dir` in the formats the config asks for.
pub fn emit_report_to(report: &AnalysisReport, cfg: &AnalysisConfig, dir: &Path) -> Result<Written> {
    let mut written = Vec::new();
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let out = &cfg.output;
    if out.wants(OutputFormat::Json) {
        write(dir, "report.json", &report_json(report)?, &mut written)?;
    }
    if out.wants(OutputFormat::Csv) {
        for g in &report.groups {
            let stem = file_stem(&g.name);
            write(dir, &format!("tables/{stem}_bbar.csv"), &landmark_csv(&g.bbar)?, &mut written)?;
            write(dir, &format!("tables/{stem}_sigma_k.csv"), &landmark_csv(&g.estimate.sigma_k)?, &mut written)?;
            write(dir, &format!("tables/{stem}_m.csv"), &landmark_csv(&g.estimate.m)?, &mut written)?;
            if let Some(r) = &g.correlation {
                write(dir, &format!("tables/{stem}_correlation.csv"), &landmark_csv(r)?, &mut written)?;
            }
            if let Some(mu) = &g.estimate.mu {
                write(dir, &format!("tables/{stem}_mean_form.csv"), &coordinate_csv(mu)?, &mut written)?;
            }
            if let Some(sd) = &g.estimate.sigma_d {
                write(dir, &format!("tables/{stem}_sigma_d.csv"), &landmark_csv(sd)?, &mut written)?;
            }
        }
        for c in &report.comparisons {
            let stem = format!("{}_vs_{}", file_stem(&c.x), file_stem(&c.y));
            write(dir, &format!("tables/fdm_{stem}.csv"), &landmark_csv(&c.result.fdm)?, &mut written)?;
            let mut boot = String::from("replicate,t\n");
            for (b, t) in c.result.boot_t.iter().enumerate() {
                let _ = writeln!(boot, "{},{}", b + 1, fmt_num(*t));
            }
            write(dir, &format!("tables/boot_t_{stem}.csv"), &boot, &mut written)?;
        }
        if let Some(sel) = &report.selection {
            write(dir, "tables/selection_cov_dist.csv", &table_csv(&sel.cov_dist)?, &mut written)?;
            write(dir, "tables/selection_shape_dist.csv", &table_csv(&sel.shape_dist)?, &mut written)?;
            let mut cv = String::from("model,cv_pct\n");
            for (m, v) in sel.models.iter().zip(&sel.cv_pct) {
                let _ = writeln!(cv, "\"{}\",{}", m.replace('"', "\"\""), v.map(fmt_num).unwrap_or_default());
            }
            write(dir, "tables/selection_cv.csv", &cv, &mut written)?;
        }
    }
    if out.wants(OutputFormat::Svg) {
        for g in &report.groups {
            if let Some(mu) = &g.estimate.mu {
                let title = format!("{} mean form ({})", g.name, report.model_label);
                write(
                    dir,
                    &format!("plots/{}_mean_form.svg", file_stem(&g.name)),
                    &mean_form_svg(&title, mu),
                    &mut written,
                )?;
            }
        }
    }
    Ok(written)
}

/// Writes into the configured output directory.
pub fn emit_report(report: &AnalysisReport, cfg: &AnalysisConfig) -> Result<Written> {
    emit_report_to(report, cfg, &cfg.output.dir)
}
