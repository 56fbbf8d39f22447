//! Static SVG line plots of observations, predictions and bands.

use std::fmt::Write;

use uqseq::data::PredictionRecord;

use crate::error::CliError;

const MARGIN: f64 = 40.0;
const UPPER_FILL: &str = "#9ecae1";
const LOWER_FILL: &str = "#fdae6b";
const SYMMETRIC_FILL: &str = "#c6dbef";

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

struct Frame {
    width: f64,
    height: f64,
    steps: usize,
    lo: f64,
    hi: f64,
}

impl Frame {
    fn x(&self, t: usize) -> f64 {
        let span = (self.steps.max(2) - 1) as f64;
        MARGIN + (self.width - 2.0 * MARGIN) * t as f64 / span
    }

    fn y(&self, v: f64) -> f64 {
        let span = if self.hi > self.lo { self.hi - self.lo } else { 1.0 };
        self.height - MARGIN - (self.height - 2.0 * MARGIN) * (v - self.lo) / span
    }

    fn path(&self, values: &[f64]) -> String {
        values.iter().enumerate().map(|(t, v)| format!("{},{}", fmt(self.x(t)), fmt(self.y(*v)))).collect::<Vec<_>>().join(" ")
    }

    /// Polygon between two curves.
    fn area(&self, top: &[f64], bottom: &[f64]) -> String {
        let mut pts: Vec<String> = top.iter().enumerate().map(|(t, v)| format!("{},{}", fmt(self.x(t)), fmt(self.y(*v)))).collect();
        pts.extend(bottom.iter().enumerate().rev().map(|(t, v)| format!("{},{}", fmt(self.x(t)), fmt(self.y(*v)))));
        pts.join(" ")
    }
}

/// One dimension of one record as an SVG document.
pub fn render(record: &PredictionRecord, dim: usize, band_scale: f64, width: u32, height: u32, title: &str) -> Result<String, CliError> {
    let p = &record.prediction;
    let (dims, steps) = p.shape();
    if steps == 0 || dim >= dims {
        return Err(CliError::EmptyRange(format!("dimension {dim} of a {dims}x{steps} prediction")));
    }
    let yhat = p.yhat.row(dim);
    let y = record.y.row(dim);
    let upper: Vec<f64> = yhat.iter().zip(p.z_upper.row(dim)).map(|(a, z)| a + band_scale * z).collect();
    let lower: Vec<f64> = yhat.iter().zip(p.z_lower.row(dim)).map(|(a, z)| a - band_scale * z).collect();
    let all = upper.iter().chain(&lower).chain(y).chain(yhat);
    let lo = all.clone().fold(f64::INFINITY, |a, &b| a.min(b));
    let hi = all.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 1.0 };
    let frame = Frame { width: width as f64, height: height as f64, steps, lo: lo - pad, hi: hi + pad };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" font-family="sans-serif" font-size="13">{}</text>"#, fmt(MARGIN), escape(title));
    if p.is_symmetric() {
        let _ = writeln!(s, r#"<polygon points="{}" fill="{SYMMETRIC_FILL}" stroke="none"/>"#, frame.area(&upper, &lower));
    } else {
        let _ = writeln!(s, r#"<polygon points="{}" fill="{UPPER_FILL}" stroke="none"/>"#, frame.area(&upper, yhat));
        let _ = writeln!(s, r#"<polygon points="{}" fill="{LOWER_FILL}" stroke="none"/>"#, frame.area(yhat, &lower));
    }
    let (x0, x1) = (fmt(MARGIN), fmt(frame.width - MARGIN));
    let (y0, y1) = (fmt(MARGIN), fmt(frame.height - MARGIN));
    let _ = writeln!(s, r##"<polyline points="{x0},{y0} {x0},{y1} {x1},{y1}" fill="none" stroke="#444"/>"##);
    for v in [frame.lo, 0.5 * (frame.lo + frame.hi), frame.hi] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#,
            fmt(MARGIN - 4.0),
            fmt(frame.y(v) + 3.0),
            fmt(v)
        );
    }
    let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#d62728" stroke-width="1.5"/>"##, frame.path(yhat));
    let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#000" stroke-width="1.5"/>"##, frame.path(y));
    let legend = frame.height - 12.0;
    let _ = writeln!(
        s,
        r##"<text x="{}" y="{}" font-family="sans-serif" font-size="11"><tspan fill="#000">observed</tspan> <tspan fill="#d62728">predicted</tspan> <tspan fill="#3182bd">band</tspan></text>"##,
        fmt(MARGIN),
        fmt(legend)
    );
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
