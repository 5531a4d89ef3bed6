//! Minimal SVG line plots: stacked panels sharing the time axis.

use std::fmt::Write;

const WIDTH: f64 = 820.0;
const PANEL_H: f64 = 240.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const GAP: f64 = 50.0;

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#555555"];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub dashed: bool,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub ylabel: String,
    pub series: Vec<Series>,
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1e-3) * 0.1;
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn tick_label(v: f64, span: f64) -> String {
    let digits = if span >= 10.0 {
        1
    } else if span >= 0.1 {
        3
    } else {
        5
    };
    format!("{v:.digits$}")
}

/// Render stacked panels; `x` is time in seconds.
pub fn render(title: &str, panels: &[Panel]) -> String {
    let height = TOP + panels.len() as f64 * (PANEL_H + GAP) + 10.0;
    let plot_w = WIDTH - LEFT - RIGHT;
    let (x0, x1) = bounds(panels.iter().flat_map(|p| p.series.iter().flat_map(|s| s.points.iter().map(|q| q.0))));
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" viewBox=\"0 0 {WIDTH} {height}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
        WIDTH / 2.0,
        escape(title)
    );
    for (i, panel) in panels.iter().enumerate() {
        let top = TOP + i as f64 * (PANEL_H + GAP);
        let (y0, y1) = bounds(panel.series.iter().flat_map(|s| s.points.iter().map(|q| q.1)));
        let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
        let py = |y: f64| top + PANEL_H - (y - y0) / (y1 - y0) * PANEL_H;
        let _ = writeln!(
            s,
            "<rect x=\"{LEFT}\" y=\"{top:.1}\" width=\"{plot_w:.1}\" height=\"{PANEL_H}\" fill=\"none\" stroke=\"#333\"/>"
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let yv = y0 + f * (y1 - y0);
            let yy = py(yv);
            let _ = writeln!(
                s,
                "<line x1=\"{LEFT}\" y1=\"{yy:.1}\" x2=\"{:.1}\" y2=\"{yy:.1}\" stroke=\"#ddd\"/>",
                LEFT + plot_w
            );
            let _ = writeln!(
                s,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
                LEFT - 6.0,
                yy + 4.0,
                tick_label(yv, y1 - y0)
            );
            let xv = x0 + f * (x1 - x0);
            let _ = writeln!(
                s,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
                px(xv),
                top + PANEL_H + 16.0,
                tick_label(xv, x1 - x0)
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"16\" y=\"{:.1}\" transform=\"rotate(-90 16 {:.1})\" text-anchor=\"middle\">{}</text>",
            top + PANEL_H / 2.0,
            top + PANEL_H / 2.0,
            escape(&panel.ylabel)
        );
        for (j, series) in panel.series.iter().enumerate() {
            let mut pts = String::with_capacity(series.points.len() * 16);
            for &(x, y) in series.points.iter().filter(|q| q.1.is_finite()) {
                let _ = write!(pts, "{:.2},{:.2} ", px(x), py(y));
            }
            let dash = if series.dashed { " stroke-dasharray=\"6 4\"" } else { "" };
            let _ = writeln!(
                s,
                "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\"{dash} points=\"{}\"/>",
                series.color,
                pts.trim_end()
            );
            let ly = top + 14.0 + 16.0 * j as f64;
            let lx = LEFT + plot_w - 150.0;
            let _ = writeln!(
                s,
                "<line x1=\"{lx:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"{}\" stroke-width=\"2\"{dash}/>",
                ly - 4.0,
                lx + 24.0,
                ly - 4.0,
                series.color
            );
            let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{ly:.1}\">{}</text>", lx + 30.0, escape(&series.label));
        }
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">time (s)</text>",
        LEFT + plot_w / 2.0,
        height - 4.0
    );
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
