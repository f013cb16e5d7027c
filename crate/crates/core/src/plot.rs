//! Minimal self-contained SVG charts. Output depends only on the inputs.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt(x: f64) -> String {
    format!("{:.2}", x)
}

/// Linear map of `[lo, hi]` onto the plot's vertical range.
fn y_scale(lo: f64, hi: f64) -> impl Fn(f64) -> f64 {
    let span = if hi > lo { hi - lo } else { 1.0 };
    move |v| HEIGHT - MARGIN - (v - lo) / span * (HEIGHT - 2.0 * MARGIN)
}

fn axis(s: &mut String, lo: f64, hi: f64) {
    let y = y_scale(lo, hi);
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{}" stroke="black"/>"#,
        HEIGHT - MARGIN
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            MARGIN - 4.0,
            fmt(y(v) + 4.0),
            fmt(v)
        );
    }
}

/// Vertical bars, one per label.
pub fn bar_chart(title: &str, labels: &[String], values: &[f64]) -> String {
    let mut s = header(title);
    let hi = values.iter().cloned().fold(0.0, f64::max);
    let lo = values.iter().cloned().fold(0.0, f64::min);
    axis(&mut s, lo, hi);
    let y = y_scale(lo, hi);
    let slot = (WIDTH - 2.0 * MARGIN) / values.len().max(1) as f64;
    for (i, (label, &v)) in labels.iter().zip(values).enumerate() {
        let x = MARGIN + slot * (i as f64 + 0.15);
        let (top, bottom) = if v >= 0.0 { (y(v), y(0.0)) } else { (y(0.0), y(v)) };
        let _ = writeln!(
            s,
            r##"<rect x="{}" y="{}" width="{}" height="{}" fill="#4878a8"/>"##,
            fmt(x),
            fmt(top),
            fmt(slot * 0.7),
            fmt(bottom - top)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            fmt(x + slot * 0.35),
            fmt(HEIGHT - MARGIN + 16.0),
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// One whisker per interval, with an optional marker (e.g. the observed value).
/// `series` holds (name, colour, intervals); intervals line up by index.
pub fn whisker_chart(title: &str, series: &[(&str, &str, Vec<(f64, f64)>)], markers: &[Option<f64>]) -> String {
    let mut s = header(title);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, _, ivs) in series {
        for &(a, b) in ivs {
            lo = lo.min(a);
            hi = hi.max(b);
        }
    }
    for m in markers.iter().flatten() {
        lo = lo.min(*m);
        hi = hi.max(*m);
    }
    if !lo.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    axis(&mut s, lo, hi);
    let y = y_scale(lo, hi);
    let count = series.iter().map(|(_, _, v)| v.len()).max().unwrap_or(0).max(markers.len()).max(1);
    let slot = (WIDTH - 2.0 * MARGIN) / count as f64;
    let k = series.len().max(1) as f64;
    for (si, (name, colour, ivs)) in series.iter().enumerate() {
        for (i, &(a, b)) in ivs.iter().enumerate() {
            let x = MARGIN + slot * (i as f64 + (si as f64 + 1.0) / (k + 1.0));
            let _ = writeln!(
                s,
                r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="{3}" stroke-width="2"/>"#,
                fmt(x),
                fmt(y(a)),
                fmt(y(b)),
                colour
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{}">{}</text>"#,
            fmt(WIDTH - MARGIN - 120.0),
            fmt(MARGIN + 14.0 * si as f64),
            colour,
            escape(name)
        );
    }
    for (i, m) in markers.iter().enumerate() {
        if let Some(v) = m {
            let _ = writeln!(
                s,
                r#"<circle cx="{}" cy="{}" r="2.5" fill="black"/>"#,
                fmt(MARGIN + slot * (i as f64 + 0.5)),
                fmt(y(*v))
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
