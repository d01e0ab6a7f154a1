//! Static SVG charts with fixed-precision coordinates, so identical inputs give
//! identical bytes.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 48.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

pub struct Series<'a> {
    pub label: &'a str,
    pub values: &'a [f64],
    /// Optional error bar half-widths, same length as `values`.
    pub errors: Option<&'a [f64]>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn header(out: &mut String, title: &str, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + (WIDTH - LEFT - RIGHT) / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
}

fn nice_max(v: f64) -> f64 {
    if !(v.is_finite() && v > 0.0) {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&c| c >= v)
        .unwrap_or(10.0 * mag)
}

fn y_axis(out: &mut String, lo: f64, hi: f64, label: impl Fn(f64) -> String) {
    let plot_h = HEIGHT - TOP - BOTTOM;
    for i in 0..=5 {
        let frac = i as f64 / 5.0;
        let y = TOP + plot_h * (1.0 - frac);
        let _ = writeln!(
            out,
            "<line x1=\"{LEFT:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>",
            WIDTH - RIGHT
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            y + 4.0,
            label(lo + (hi - lo) * frac)
        );
    }
    let _ = writeln!(
        out,
        r#"<line x1="{LEFT:.1}" y1="{TOP:.1}" x2="{LEFT:.1}" y2="{:.1}" stroke="black"/>"#,
        HEIGHT - BOTTOM
    );
}

fn legend(out: &mut String, series: &[Series<'_>]) {
    for (i, s) in series.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = WIDTH - RIGHT + 14.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.1}" y="{:.1}" width="12" height="12" fill="{}"/>"#,
            y - 10.0,
            PALETTE[i % PALETTE.len()]
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{y:.1}">{}</text>"#,
            x + 18.0,
            escape(s.label)
        );
    }
}

/// Grouped bars, one group per category, one bar per series.
pub fn bar_chart(
    title: &str,
    y_label: &str,
    categories: &[String],
    series: &[Series<'_>],
) -> String {
    let mut out = String::new();
    header(&mut out, title, "target year", y_label);
    let top = series
        .iter()
        .flat_map(|s| {
            s.values
                .iter()
                .enumerate()
                .map(move |(i, v)| v + s.errors.map_or(0.0, |e| e[i]))
        })
        .fold(0.0f64, f64::max);
    let hi = nice_max(top);
    y_axis(&mut out, 0.0, hi, |v| format!("{v:.2}"));
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let group = plot_w / categories.len().max(1) as f64;
    let bar = group * 0.8 / series.len().max(1) as f64;
    let to_y = |v: f64| TOP + plot_h * (1.0 - v / hi);
    for (c, cat) in categories.iter().enumerate() {
        let gx = LEFT + group * c as f64 + group * 0.1;
        for (s, ser) in series.iter().enumerate() {
            let v = ser.values.get(c).copied().unwrap_or(0.0);
            let x = gx + bar * s as f64;
            let y = to_y(v);
            let _ = writeln!(
                out,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{bar:.1}" height="{:.1}" fill="{}"><title>{} {}: {v:.3}</title></rect>"#,
                (TOP + plot_h - y).max(0.0),
                PALETTE[s % PALETTE.len()],
                escape(ser.label),
                escape(cat)
            );
            if let Some(e) = ser.errors.and_then(|e| e.get(c)) {
                let cx = x + bar / 2.0;
                let _ = writeln!(
                    out,
                    r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
                    to_y((v - e).max(0.0)),
                    to_y(v + e)
                );
            }
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"#,
            gx + group * 0.4,
            HEIGHT - BOTTOM + 14.0,
            escape(cat)
        );
    }
    legend(&mut out, series);
    out.push_str("</svg>\n");
    out
}

/// Polylines over the epoch index on a log10 axis.
pub fn loss_chart(title: &str, series: &[Series<'_>]) -> String {
    let mut out = String::new();
    header(&mut out, title, "epoch", "training MSE (log10)");
    let logs: Vec<Vec<f64>> = series
        .iter()
        .map(|s| s.values.iter().map(|v| v.max(1e-300).log10()).collect())
        .collect();
    let all = logs.iter().flatten().copied().filter(|v| v.is_finite());
    let (mut lo, mut hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if lo > hi {
        (lo, hi) = (0.0, 1.0);
    }
    lo = lo.floor();
    hi = hi.ceil().max(lo + 1.0);
    y_axis(&mut out, lo, hi, |v| format!("{v:.1}"));
    let n = series
        .iter()
        .map(|s| s.values.len())
        .max()
        .unwrap_or(1)
        .max(2);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    for (s, pts) in logs.iter().enumerate() {
        let coords: Vec<String> = pts
            .iter()
            .enumerate()
            .map(|(e, v)| {
                let x = LEFT + plot_w * e as f64 / (n - 1) as f64;
                let y = TOP + plot_h * (1.0 - (v - lo) / (hi - lo));
                format!("{x:.1},{y:.1}")
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            PALETTE[s % PALETTE.len()],
            coords.join(" ")
        );
    }
    for (i, label) in [0, n - 1].iter().enumerate() {
        let x = LEFT + plot_w * i as f64;
        let _ = writeln!(
            out,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{label}</text>"#,
            HEIGHT - BOTTOM + 14.0
        );
    }
    legend(&mut out, series);
    out.push_str("</svg>\n");
    out
}
