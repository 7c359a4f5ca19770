//! CSV and SVG writers.
//!
//! Numbers use Rust's shortest round-trip formatting, so output is exact and
//! does not depend on the locale.

use std::fmt::Write as _;
use std::path::Path;

use crate::CliError;

pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| *h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    s.push(',');
                }
                let a = v.abs();
                if a != 0.0 && a.is_finite() && !(1e-5..1e16).contains(&a) {
                    write!(s, "{v:e}")
                } else {
                    write!(s, "{v}")
                }
                .expect("writing to a String");
            }
            s.push('\n');
        }
        s
    }
}

/// Writes the table; an empty table is an error and creates no file.
pub fn write_csv(path: &Path, table: &Table) -> Result<(), CliError> {
    if table.rows.is_empty() {
        return Err(CliError::Physics(format!(
            "no rows to write to {}",
            path.display()
        )));
    }
    write_text(path, &table.to_csv())
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    text.push('\n');
    write_text(path, &text)
}

const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Line plot with one polyline per series on a shared y axis. Non-finite
/// points are skipped.
pub fn line_plot(title: &str, x_label: &str, x: &[f64], series: &[(&str, Vec<f64>)]) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 20.0, 30.0, 40.0);
    let finite = |v: &&f64| v.is_finite();
    let xs: Vec<f64> = x.iter().filter(finite).cloned().collect();
    let ys: Vec<f64> = series.iter().flat_map(|(_, v)| v.iter().filter(finite).cloned()).collect();
    let range = |v: &[f64]| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        }
    };
    let (x0, x1) = range(&xs);
    let (y0, y1) = range(&ys);
    let px = |v: f64| left + (v - x0) / (x1 - x0) * (w - left - right);
    let py = |v: f64| h - bottom - (v - y0) / (y1 - y0) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r##"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        w - left - right,
        h - top - bottom
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
        w / 2.0,
        h - 8.0,
        escape(x_label)
    );
    for (v, anchor, xpos) in [(x0, "start", left), (x1, "end", w - right)] {
        let _ = writeln!(
            s,
            r#"<text x="{xpos}" y="{}" text-anchor="{anchor}" font-family="sans-serif" font-size="10">{v:.4e}</text>"#,
            h - bottom + 14.0
        );
    }
    for (v, ypos) in [(y0, h - bottom), (y1, top + 10.0)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ypos}" text-anchor="end" font-family="sans-serif" font-size="10">{v:.3e}</text>"#,
            left - 4.0
        );
    }
    for (i, (name, ys)) in series.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let mut pts = String::new();
        for (a, b) in x.iter().zip(ys) {
            if a.is_finite() && b.is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", px(*a), py(*b));
            }
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#,
            pts.trim_end(),
            escape(name)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{colour}">{}</text>"#,
            left + 8.0,
            top + 16.0 + 14.0 * i as f64,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
