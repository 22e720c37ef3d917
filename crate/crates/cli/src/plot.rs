//! Minimal self-contained SVG line plots.

use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 4] = ["#1f4e9c", "#c0392b", "#2e8b57", "#8e44ad"];

pub struct Series<'a> {
    pub label: String,
    pub xs: &'a [f64],
    pub ys: &'a [f64],
    pub errors: Option<&'a [f64]>,
    /// Draw points instead of a line.
    pub markers: bool,
}

/// A dashed horizontal reference line.
pub struct Level {
    pub label: String,
    pub y: f64,
}

pub struct Plot<'a> {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series<'a>>,
    pub levels: Vec<Level>,
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Plot<'_> {
    pub fn render(&self) -> String {
        let (x0, x1) = bounds(self.series.iter().flat_map(|s| s.xs.iter().copied()));
        let (y0, y1) = bounds(
            self.series
                .iter()
                .flat_map(|s| {
                    s.ys.iter().enumerate().flat_map(move |(i, &y)| {
                        let e = s.errors.map_or(0.0, |e| e[i]);
                        [y - e, y + e]
                    })
                })
                .chain(self.levels.iter().map(|l| l.y)),
        );
        let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (WIDTH - LEFT - RIGHT);
        let py = |y: f64| HEIGHT - BOTTOM - (y - y0) / (y1 - y0) * (HEIGHT - TOP - BOTTOM);

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );

        // axes and ticks
        let (bx, by) = (HEIGHT - BOTTOM, LEFT);
        let _ = writeln!(
            svg,
            r#"<path d="M{by},{TOP} V{bx} H{}" fill="none" stroke="black"/>"#,
            WIDTH - RIGHT
        );
        for i in 0..=5 {
            let x = x0 + (x1 - x0) * i as f64 / 5.0;
            let y = y0 + (y1 - y0) * i as f64 / 5.0;
            let _ = writeln!(
                svg,
                r#"<line x1="{0:.1}" y1="{bx}" x2="{0:.1}" y2="{1}" stroke="black"/><text x="{0:.1}" y="{2}" text-anchor="middle">{3:.3}</text>"#,
                px(x),
                bx + 5.0,
                bx + 18.0,
                x
            );
            let _ = writeln!(
                svg,
                r#"<line x1="{0}" y1="{1:.1}" x2="{by}" y2="{1:.1}" stroke="black"/><text x="{2}" y="{3:.1}" text-anchor="end">{4:.3}</text>"#,
                by - 5.0,
                py(y),
                by - 8.0,
                py(y) + 4.0,
                y
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            (LEFT + WIDTH - RIGHT) / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
            (TOP + HEIGHT - BOTTOM) / 2.0,
            escape(&self.y_label)
        );

        for level in &self.levels {
            let y = py(level.y);
            let _ = writeln!(
                svg,
                r##"<line x1="{LEFT}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#555" stroke-dasharray="6 4"/><text x="{}" y="{:.1}" text-anchor="end" fill="#555">{}</text>"##,
                WIDTH - RIGHT,
                WIDTH - RIGHT - 4.0,
                y - 4.0,
                escape(&level.label)
            );
        }

        for (k, s) in self.series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            if let Some(errors) = s.errors {
                for ((&x, &y), &e) in s.xs.iter().zip(s.ys).zip(errors) {
                    let _ = writeln!(
                        svg,
                        r#"<line x1="{0:.1}" y1="{1:.1}" x2="{0:.1}" y2="{2:.1}" stroke="{color}"/>"#,
                        px(x),
                        py(y - e),
                        py(y + e)
                    );
                }
            }
            if s.markers {
                for (&x, &y) in s.xs.iter().zip(s.ys) {
                    let _ = writeln!(
                        svg,
                        r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="{color}"/>"#,
                        px(x),
                        py(y)
                    );
                }
            } else {
                let points: Vec<String> = s
                    .xs
                    .iter()
                    .zip(s.ys)
                    .map(|(&x, &y)| format!("{:.1},{:.1}", px(x), py(y)))
                    .collect();
                let _ = writeln!(
                    svg,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                    points.join(" ")
                );
            }
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
                LEFT + 10.0,
                TOP + 14.0 + 16.0 * k as f64,
                escape(&s.label)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}
