//! Report files: tables as CSV and text, training history CSV,
//! Bland-Altman point CSV and a static SVG bar chart.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use seqpress_core::eval::{BlandAltman, Table};
use seqpress_core::train::EpochRecord;

use crate::error::{AppError, Result};

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_loss,grad_norm_mean";

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| AppError::io(path, e))
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for e in history {
        let _ = writeln!(s, "{},{},{},{}", e.epoch, e.train_loss, e.val_loss, e.grad_norm_mean);
    }
    s
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    write_text(path, &history_csv(history))
}

/// Writes `<stem>.csv`, `<stem>.txt` and `<stem>.svg` into `dir`.
pub fn write_table(dir: &Path, stem: &str, table: &Table) -> Result<()> {
    write_text(&dir.join(format!("{stem}.csv")), &table.to_csv())?;
    write_text(&dir.join(format!("{stem}.txt")), &table.to_text())?;
    write_text(&dir.join(format!("{stem}.svg")), &bar_chart_svg(table))
}

pub fn bland_altman_csv(ba: &BlandAltman) -> String {
    let mut s = format!(
        "# mean_diff={},sd_diff={},lower={},upper={},fraction_within={}\nmean,diff\n",
        ba.mean_diff, ba.sd_diff, ba.lower, ba.upper, ba.fraction_within
    );
    for (m, d) in &ba.points {
        let _ = writeln!(s, "{m},{d}");
    }
    s
}

pub fn write_bland_altman(path: &Path, ba: &BlandAltman) -> Result<()> {
    write_text(path, &bland_altman_csv(ba))
}

const PALETTE: [&str; 6] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#b07aa1"];

/// Grouped bars: one group per table row, one bar per column. Missing
/// cells leave a gap.
pub fn bar_chart_svg(table: &Table) -> String {
    let (w, h, left, bottom, top) = (760.0, 420.0, 60.0, 110.0, 40.0);
    let plot_h = h - bottom - top;
    let max = table.rows.iter().flat_map(|(_, v)| v.iter().flatten()).fold(0.0f64, |a, &b| a.max(b));
    let max = if max > 0.0 { max * 1.1 } else { 1.0 };
    let groups = table.rows.len().max(1) as f64;
    let group_w = (w - left - 20.0) / groups;
    let bar_w = group_w * 0.8 / table.columns.len().max(1) as f64;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(&table.title));
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#, h - bottom);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#, h - bottom, w - 20.0);
    for k in 0..=4 {
        let v = max * k as f64 / 4.0;
        let y = h - bottom - plot_h * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.2}</text>"#, left - 4.0, y + 4.0);
    }
    for (g, (label, values)) in table.rows.iter().enumerate() {
        let gx = left + g as f64 * group_w + group_w * 0.1;
        for (c, v) in values.iter().enumerate() {
            if let Some(v) = v {
                let bh = plot_h * v / max;
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                    gx + c as f64 * bar_w,
                    h - bottom - bh,
                    bar_w,
                    bh,
                    PALETTE[c % PALETTE.len()]
                );
            }
        }
        let lx = gx + group_w * 0.4;
        let ly = h - bottom + 12.0;
        let _ = writeln!(
            s,
            r#"<text x="{lx:.2}" y="{ly:.2}" text-anchor="end" transform="rotate(-35 {lx:.2} {ly:.2})">{}</text>"#,
            escape(label)
        );
    }
    for (c, name) in table.columns.iter().enumerate() {
        let x = w - 160.0;
        let y = top + 14.0 * c as f64;
        let _ = writeln!(s, r#"<rect x="{x}" y="{}" width="10" height="10" fill="{}"/>"#, y - 9.0, PALETTE[c % PALETTE.len()]);
        let _ = writeln!(s, r#"<text x="{}" y="{y}">{}</text>"#, x + 14.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
