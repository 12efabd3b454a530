//! A small static SVG renderer for quick looks at CSV outputs.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub markers: bool,
}

impl Series {
    pub fn line(label: impl Into<String>, xs: Vec<f64>, ys: Vec<f64>) -> Self {
        Series { label: label.into(), xs, ys, markers: false }
    }

    pub fn points(label: impl Into<String>, xs: Vec<f64>, ys: Vec<f64>) -> Self {
        Series { label: label.into(), xs, ys, markers: true }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Vertical reference lines at these x.
    pub vlines: Vec<f64>,
    pub log_x: bool,
    pub log_y: bool,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-300 {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    let pad = 0.04 * (hi - lo);
    (lo - pad, hi + pad)
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(out, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, LEFT + (W - LEFT - RIGHT) / 2.0, esc(title));
}

fn axes(out: &mut String, x: (f64, f64), y: (f64, f64), xl: &str, yl: &str, log_x: bool, log_y: bool) {
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let _ = write!(out, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let (vx, vy) = (x.0 + t * (x.1 - x.0), y.0 + t * (y.1 - y.0));
        let px = LEFT + t * pw;
        let py = TOP + ph - t * ph;
        let lx = if log_x { 10f64.powf(vx) } else { vx };
        let ly = if log_y { 10f64.powf(vy) } else { vy };
        let _ = write!(out, r#"<line x1="{px}" y1="{}" x2="{px}" y2="{}" stroke="black"/>"#, TOP + ph, TOP + ph + 4.0);
        let _ = write!(out, r#"<text x="{px}" y="{}" text-anchor="middle">{}</text>"#, TOP + ph + 16.0, tick(lx));
        let _ = write!(out, r#"<line x1="{}" y1="{py}" x2="{LEFT}" y2="{py}" stroke="black"/>"#, LEFT - 4.0);
        let _ = write!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, LEFT - 6.0, py + 4.0, tick(ly));
    }
    let _ = write!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 12.0, esc(xl));
    let _ = write!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        esc(yl)
    );
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

impl Plot {
    pub fn render(&self) -> String {
        let tx = |v: f64| if self.log_x { v.log10() } else { v };
        let ty = |v: f64| if self.log_y { v.log10() } else { v };
        let xr = range(self.series.iter().flat_map(|s| s.xs.iter().map(|&v| tx(v))).chain(self.vlines.iter().map(|&v| tx(v))));
        let yr = range(self.series.iter().flat_map(|s| s.ys.iter().map(|&v| ty(v))));
        let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
        let px = |v: f64| LEFT + (tx(v) - xr.0) / (xr.1 - xr.0) * pw;
        let py = |v: f64| TOP + ph - (ty(v) - yr.0) / (yr.1 - yr.0) * ph;
        let mut out = String::new();
        header(&mut out, &self.title);
        axes(&mut out, xr, yr, &self.x_label, &self.y_label, self.log_x, self.log_y);
        for &v in &self.vlines {
            let x = px(v);
            let _ = write!(out, r#"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{}" stroke="black" stroke-dasharray="4 3"/>"#, TOP + ph);
        }
        for (k, s) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let pts: Vec<(f64, f64)> = s
                .xs
                .iter()
                .zip(&s.ys)
                .filter(|(x, y)| tx(**x).is_finite() && ty(**y).is_finite())
                .map(|(&x, &y)| (px(x), py(y)))
                .collect();
            if s.markers {
                for (x, y) in &pts {
                    let _ = write!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{color}"/>"#);
                }
            } else if !pts.is_empty() {
                let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let _ = write!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
            }
            let ly = TOP + 14.0 + 16.0 * k as f64;
            let lx = W - RIGHT + 10.0;
            let _ = write!(out, r#"<rect x="{lx}" y="{}" width="12" height="3" fill="{color}"/>"#, ly - 4.0);
            let _ = write!(out, r#"<text x="{}" y="{ly}">{}</text>"#, lx + 16.0, esc(&s.label));
        }
        out.push_str("</svg>\n");
        out
    }
}

/// Heat map of `z[i][j]` at (xs[i], ys[j]) on a diverging blue–white–red scale
/// centered at zero.
pub fn heatmap(title: &str, x_label: &str, y_label: &str, xs: &[f64], ys: &[f64], z: &[Vec<f64>]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let xr = (xs.first().copied().unwrap_or(0.0), xs.last().copied().unwrap_or(1.0));
    let yr = (ys.first().copied().unwrap_or(0.0), ys.last().copied().unwrap_or(1.0));
    axes(&mut out, xr, yr, x_label, y_label, false, false);
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let big = z.iter().flatten().fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { m }).max(1e-300);
    let cw = pw / xs.len().max(1) as f64;
    let ch = ph / ys.len().max(1) as f64;
    for (i, row) in z.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let t = (v / big).clamp(-1.0, 1.0);
            let (r, g, b) = if t >= 0.0 {
                (255.0, 255.0 * (1.0 - t), 255.0 * (1.0 - t))
            } else {
                (255.0 * (1.0 + t), 255.0 * (1.0 + t), 255.0)
            };
            let _ = write!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({},{},{})"/>"#,
                LEFT + i as f64 * cw,
                TOP + ph - (j + 1) as f64 * ch,
                cw + 0.3,
                ch + 0.3,
                r as u8,
                g as u8,
                b as u8
            );
        }
    }
    let _ = write!(out, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_well_formed_documents() {
        let p = Plot {
            title: "a < b".into(),
            series: vec![Series::line("s", vec![0.0, 1.0], vec![1.0, 2.0]), Series::points("t", vec![0.5], vec![f64::NAN])],
            vlines: vec![0.3],
            ..Default::default()
        };
        let s = p.render();
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("a &lt; b"));
        let h = heatmap("w", "x", "p", &[0.0, 1.0], &[0.0, 1.0], &[vec![1.0, -1.0], vec![0.0, 0.5]]);
        assert_eq!(h.matches("<rect").count(), 2 + 4 + 1);
    }
}
