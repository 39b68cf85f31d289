//! QQ curve output: a CSV with full-precision floats and a self-contained SVG
//! scatter with the identity line for reference.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use wxvae_core::qq::QQCurve;

use crate::error::{Error, FormatError, Result};
use crate::format::write_atomic;

pub const CSV_HEADER: &str = "prob,quantile_a,quantile_b";

const SIZE: f64 = 480.0;
const MARGIN: f64 = 48.0;

/// Header plus one row per probability. `Display` for `f64` is the shortest
/// string that parses back to the same bits.
pub fn qq_csv(curve: &QQCurve) -> String {
    let mut s = String::with_capacity(40 * (curve.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for ((p, a), b) in curve.probs().iter().zip(curve.q_a()).zip(curve.q_b()) {
        let _ = writeln!(s, "{p},{a},{b}");
    }
    s
}

pub fn parse_qq_csv(text: &str, path: &Path) -> Result<QQCurve> {
    let bad = |m: String| Error::format(path, FormatError::Header(m));
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(bad(format!("first line must be {CSV_HEADER:?}")));
    }
    let (mut p, mut a, mut b) = (Vec::new(), Vec::new(), Vec::new());
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split(',').collect();
        let [x, y, z] = cols[..] else {
            return Err(bad(format!(
                "row {}: expected 3 columns, got {}",
                i + 1,
                cols.len()
            )));
        };
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| bad(format!("row {}: {s:?}: {e}", i + 1)))
        };
        p.push(num(x)?);
        a.push(num(y)?);
        b.push(num(z)?);
    }
    QQCurve::new(p, a, b).map_err(|e| bad(e.to_string()))
}

pub fn read_qq_csv(path: &Path) -> Result<QQCurve> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_qq_csv(&text, path)
}

/// Square scatter of `(q_a, q_b)` on shared axes so the identity is the
/// diagonal.
pub fn qq_svg(curve: &QQCurve, label_a: &str, label_b: &str) -> String {
    let all = curve.q_a().iter().chain(curve.q_b());
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let mut hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        hi = lo + 1.0;
    }
    let plot = SIZE - 2.0 * MARGIN;
    let x = |v: f64| MARGIN + (v - lo) / (hi - lo) * plot;
    let y = |v: f64| SIZE - MARGIN - (v - lo) / (hi - lo) * plot;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{plot}" height="{plot}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<line id="identity" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="gray" stroke-dasharray="4 3"/>"#,
        x(lo),
        y(lo),
        x(hi),
        y(hi)
    );
    for (a, b) in curve.q_a().iter().zip(curve.q_b()) {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.3}" cy="{:.3}" r="2.5" fill="steelblue"/>"#,
            x(*a),
            y(*b)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{} (mm/day)</text>"#,
        SIZE / 2.0,
        SIZE - 12.0,
        escape(label_a)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" font-size="13" transform="rotate(-90 14 {})">{} (mm/day)</text>"#,
        SIZE / 2.0,
        SIZE / 2.0,
        escape(label_b)
    );
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="{}" font-size="11">{lo:.2}</text>"#,
        SIZE - MARGIN + 14.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{hi:.2}</text>"#,
        SIZE - MARGIN,
        SIZE - MARGIN + 14.0
    );
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Writes the CSV and, if asked, the SVG.
pub fn emit_qq(curve: &QQCurve, csv: &Path, svg: Option<(&Path, &str, &str)>) -> Result<()> {
    let text = qq_csv(curve);
    write_atomic(csv, |w: &mut dyn Write| w.write_all(text.as_bytes()))?;
    if let Some((path, a, b)) = svg {
        let doc = qq_svg(curve, a, b);
        write_atomic(path, |w: &mut dyn Write| w.write_all(doc.as_bytes()))?;
    }
    Ok(())
}
