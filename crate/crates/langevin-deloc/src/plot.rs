//! Self-contained SVG line charts. Charts are built from values parsed
//! back out of `results.csv`, so every plot is regenerable from the CSV
//! alone; no external plotting dependency is involved.

use std::path::Path;

use crate::config::CliError;
use crate::output;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 78.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 44.0;
const MARGIN_B: f64 = 56.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// One plotted series; `se` adds vertical one-standard-error whiskers.
pub struct Series {
    pub label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub se: Option<Vec<f64>>,
}

impl Series {
    pub fn new(label: impl Into<String>, xs: Vec<f64>, ys: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            xs,
            ys,
            se: None,
        }
    }

    pub fn with_se(mut self, se: Vec<f64>) -> Self {
        self.se = Some(se);
        self
    }
}

/// Chart description; log axes drop non-positive points.
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

impl Chart {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_x: false,
            log_y: false,
            series: Vec::new(),
        }
    }

    pub fn log_log(mut self) -> Self {
        self.log_x = true;
        self.log_y = true;
        self
    }

    pub fn push(&mut self, s: Series) {
        self.series.push(s);
    }

    /// Renders the chart; always returns a valid SVG document, with a
    /// placeholder message when no finite point survives the axis filter.
    pub fn render(&self) -> String {
        let mut pts: Vec<Vec<(f64, f64, f64)>> = Vec::new();
        let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &self.series {
            let mut kept = Vec::new();
            for (i, (&x, &y)) in s.xs.iter().zip(&s.ys).enumerate() {
                let se = s.se.as_ref().map(|v| v[i]).unwrap_or(0.0);
                let (tx, ty) = match (tr(x, self.log_x), tr(y, self.log_y)) {
                    (Some(tx), Some(ty)) => (tx, ty),
                    _ => continue,
                };
                x_lo = x_lo.min(tx);
                x_hi = x_hi.max(tx);
                y_lo = y_lo.min(ty);
                y_hi = y_hi.max(ty);
                // whisker extent participates in the y range
                if se.is_finite() && se > 0.0 {
                    if let Some(t) = tr(y + se, self.log_y) {
                        y_hi = y_hi.max(t);
                    }
                    if let Some(t) = tr(y - se, self.log_y) {
                        y_lo = y_lo.min(t);
                    }
                }
                kept.push((x, y, se));
            }
            pts.push(kept);
        }
        if !x_lo.is_finite() || !y_lo.is_finite() {
            return empty_svg(&self.title);
        }
        pad(&mut x_lo, &mut x_hi);
        pad(&mut y_lo, &mut y_hi);

        let sx = |t: f64| MARGIN_L + (t - x_lo) / (x_hi - x_lo) * (WIDTH - MARGIN_L - MARGIN_R);
        let sy = |t: f64| HEIGHT - MARGIN_B - (t - y_lo) / (y_hi - y_lo) * (HEIGHT - MARGIN_T - MARGIN_B);

        let mut svg = svg_open();
        svg.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
            (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
            esc(&self.title)
        ));
        // frame
        svg.push_str(&format!(
            "  <rect x=\"{MARGIN_L:.2}\" y=\"{MARGIN_T:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#333\"/>\n",
            WIDTH - MARGIN_L - MARGIN_R,
            HEIGHT - MARGIN_T - MARGIN_B
        ));
        // axis ticks, grid, labels
        for t in ticks(x_lo, x_hi) {
            let x = sx(t);
            svg.push_str(&format!(
                "  <line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#ddd\"/>\n",
                MARGIN_T,
                HEIGHT - MARGIN_B
            ));
            svg.push_str(&format!(
                "  <text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n",
                HEIGHT - MARGIN_B + 16.0,
                tick_label(t, self.log_x)
            ));
        }
        for t in ticks(y_lo, y_hi) {
            let y = sy(t);
            svg.push_str(&format!(
                "  <line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#ddd\"/>\n",
                MARGIN_L,
                WIDTH - MARGIN_R
            ));
            svg.push_str(&format!(
                "  <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"11\">{}</text>\n",
                MARGIN_L - 6.0,
                y + 4.0,
                tick_label(t, self.log_y)
            ));
        }
        svg.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
            (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
            HEIGHT - 14.0,
            esc(&self.x_label)
        ));
        svg.push_str(&format!(
            "  <text x=\"18\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 {:.2})\">{}</text>\n",
            (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
            (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
            esc(&self.y_label)
        ));

        for (si, kept) in pts.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            let mut path = String::new();
            for (i, &(x, y, _)) in kept.iter().enumerate() {
                let (tx, ty) = (tr(x, self.log_x).unwrap(), tr(y, self.log_y).unwrap());
                let cmd = if i == 0 { 'M' } else { 'L' };
                path.push_str(&format!("{cmd}{:.2} {:.2} ", sx(tx), sy(ty)));
            }
            if kept.len() > 1 {
                svg.push_str(&format!(
                    "  <path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"/>\n",
                    path.trim_end()
                ));
            }
            for &(x, y, se) in kept {
                let cx = sx(tr(x, self.log_x).unwrap());
                let cy = sy(tr(y, self.log_y).unwrap());
                if se.is_finite() && se > 0.0 {
                    let hi = tr(y + se, self.log_y).map(&sy);
                    let lo = tr(y - se, self.log_y).map(&sy);
                    if let (Some(y1), Some(y2)) = (hi, lo) {
                        svg.push_str(&format!(
                            "  <line x1=\"{cx:.2}\" y1=\"{y1:.2}\" x2=\"{cx:.2}\" y2=\"{y2:.2}\" stroke=\"{color}\"/>\n"
                        ));
                    }
                }
                svg.push_str(&format!(
                    "  <circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"2.8\" fill=\"{color}\"/>\n"
                ));
            }
        }

        // legend, top-right inside the frame
        for (si, s) in self.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            let y = MARGIN_T + 16.0 + 16.0 * si as f64;
            let x = WIDTH - MARGIN_R - 180.0;
            svg.push_str(&format!(
                "  <line x1=\"{x:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
                x + 22.0
            ));
            svg.push_str(&format!(
                "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\">{}</text>\n",
                x + 28.0,
                y + 4.0,
                esc(&s.label)
            ));
        }
        svg.push_str("</svg>\n");
        svg
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        output::write_text(path, &self.render())
    }
}

/// Axis transform; `None` drops the point.
fn tr(v: f64, log: bool) -> Option<f64> {
    if !v.is_finite() {
        return None;
    }
    if log {
        if v <= 0.0 {
            None
        } else {
            Some(v.log10())
        }
    } else {
        Some(v)
    }
}

fn pad(lo: &mut f64, hi: &mut f64) {
    if *hi == *lo {
        // degenerate range: open a symmetric window
        let w = lo.abs().max(1.0) * 0.1;
        *lo -= w;
        *hi += w;
    } else {
        let w = (*hi - *lo) * 0.06;
        *lo -= w;
        *hi += w;
    }
}

/// Round tick positions on the (already transformed) axis: 1-2-5 steps.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        // avoid the negative-zero label
        out.push(if t == 0.0 { 0.0 } else { t });
        t += step;
    }
    out
}

/// Tick label; log axes label `10^t` in compact scientific form.
fn tick_label(t: f64, log: bool) -> String {
    let v = if log { 10f64.powf(t) } else { t };
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:.1e}")
    }
}

fn svg_open() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n  <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    )
}

fn empty_svg(title: &str) -> String {
    let mut svg = svg_open();
    svg.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"14\">{}: no plottable points</text>\n</svg>\n",
        WIDTH / 2.0,
        HEIGHT / 2.0,
        esc(title)
    ));
    svg
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
