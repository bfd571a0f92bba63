//! Minimal SVG figures: curve with band, line plots, heatmaps and bar
//! charts.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 420.0;
const ML: f64 = 64.0;
const MR: f64 = 24.0;
const MT: f64 = 40.0;
const MB: f64 = 52.0;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e4).contains(&a) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = if lo.abs() > 0.0 { lo.abs() * 0.1 } else { 1.0 };
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Plot frame with axes, ticks and labels; maps data to pixels.
pub struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    pub body: String,
}

impl Frame {
    pub fn new(title: &str, xlabel: &str, ylabel: &str, x: (f64, f64), y: (f64, f64)) -> Self {
        let mut body = String::new();
        let _ = write!(
            body,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>
<text x="{}" y="{}" text-anchor="middle">{}</text>
<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>
"#,
            W / 2.0,
            esc(title),
            ML + (W - ML - MR) / 2.0,
            H - 12.0,
            esc(xlabel),
            MT + (H - MT - MB) / 2.0,
            MT + (H - MT - MB) / 2.0,
            esc(ylabel)
        );
        let f = Self { x, y, body };
        f.axes()
    }

    fn axes(mut self) -> Self {
        let (x0, y0, x1, y1) = (ML, H - MB, W - MR, MT);
        let _ = writeln!(self.body, r##"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="#444"/>"##, x1 - x0, y0 - y1);
        for k in 0..=4 {
            let t = k as f64 / 4.0;
            let xv = self.x.0 + t * (self.x.1 - self.x.0);
            let yv = self.y.0 + t * (self.y.1 - self.y.0);
            let (px, py) = (self.px(xv), self.py(yv));
            let _ = writeln!(
                self.body,
                r##"<line x1="{px:.1}" y1="{y0}" x2="{px:.1}" y2="{}" stroke="#444"/><text x="{px:.1}" y="{}" text-anchor="middle">{}</text>"##,
                y0 + 4.0,
                y0 + 17.0,
                fmt_tick(xv)
            );
            let _ = writeln!(
                self.body,
                r##"<line x1="{}" y1="{py:.1}" x2="{x0}" y2="{py:.1}" stroke="#444"/><text x="{}" y="{:.1}" text-anchor="end">{}</text>"##,
                x0 - 4.0,
                x0 - 6.0,
                py + 4.0,
                fmt_tick(yv)
            );
        }
        self
    }

    pub fn px(&self, x: f64) -> f64 {
        ML + (x - self.x.0) / (self.x.1 - self.x.0) * (W - ML - MR)
    }

    pub fn py(&self, y: f64) -> f64 {
        (H - MB) - (y - self.y.0) / (self.y.1 - self.y.0) * (H - MT - MB)
    }

    pub fn polyline(&mut self, xs: &[f64], ys: &[f64], stroke: &str, width: f64) {
        let pts: Vec<String> = xs.iter().zip(ys).map(|(&x, &y)| format!("{:.2},{:.2}", self.px(x), self.py(y))).collect();
        let _ = writeln!(self.body, r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#, pts.join(" "));
    }

    pub fn band(&mut self, xs: &[f64], lo: &[f64], hi: &[f64], fill: &str) {
        let mut pts: Vec<String> = xs.iter().zip(hi).map(|(&x, &y)| format!("{:.2},{:.2}", self.px(x), self.py(y))).collect();
        pts.extend(xs.iter().zip(lo).rev().map(|(&x, &y)| format!("{:.2},{:.2}", self.px(x), self.py(y))));
        let _ = writeln!(self.body, r#"<polygon points="{}" fill="{fill}" fill-opacity="0.25" stroke="none"/>"#, pts.join(" "));
    }

    pub fn point(&mut self, x: f64, y: f64, fill: &str) {
        let _ = writeln!(self.body, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{fill}"/>"#, self.px(x), self.py(y));
    }

    pub fn legend(&mut self, labels: &[(String, &str)]) {
        for (k, (l, c)) in labels.iter().enumerate() {
            let y = MT + 12.0 + 15.0 * k as f64;
            let x = W - MR - 130.0;
            let _ = writeln!(
                self.body,
                r#"<rect x="{x}" y="{}" width="10" height="10" fill="{c}"/><text x="{}" y="{}">{}</text>"#,
                y - 9.0,
                x + 14.0,
                y,
                esc(l)
            );
        }
    }

    pub fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

/// Mean curve with an interval band and observed points `(x, y)`.
pub fn band_plot(title: &str, xlabel: &str, x: &[f64], mean: &[f64], lo: &[f64], hi: &[f64], points: &[(f64, f64)]) -> String {
    let xr = range(x.iter().copied());
    let yr = range(lo.iter().chain(hi).chain(mean).copied().chain(points.iter().map(|p| p.1)));
    let mut f = Frame::new(title, xlabel, "response", xr, yr);
    f.band(x, lo, hi, color(0));
    f.polyline(x, mean, color(0), 2.0);
    for &(px, py) in points {
        f.point(px, py, "#333");
    }
    f.finish()
}

/// Several named lines over a shared x axis.
pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, x: &[f64], series: &[(String, Vec<f64>)]) -> String {
    let xr = range(x.iter().copied());
    let yr = range(series.iter().flat_map(|s| s.1.iter().copied()));
    let mut f = Frame::new(title, xlabel, ylabel, xr, yr);
    for (k, (_, ys)) in series.iter().enumerate() {
        f.polyline(x, ys, color(k), 1.5);
    }
    if series.len() > 1 && series.len() <= 12 {
        let labels: Vec<(String, &str)> = series.iter().enumerate().map(|(k, s)| (s.0.clone(), color(k))).collect();
        f.legend(&labels);
    }
    f.finish()
}

fn heat_color(t: f64) -> String {
    // white -> blue -> dark red
    let t = t.clamp(0.0, 1.0);
    let (r, g, b) = if t < 0.5 {
        let u = t / 0.5;
        (255.0 * (1.0 - u) + 31.0 * u, 255.0 * (1.0 - u) + 119.0 * u, 255.0 * (1.0 - u) + 180.0 * u)
    } else {
        let u = (t - 0.5) / 0.5;
        (31.0 + (178.0 - 31.0) * u, 119.0 * (1.0 - u) + 24.0 * u, 180.0 * (1.0 - u) + 43.0 * u)
    };
    format!("rgb({},{},{})", r.round() as u8, g.round() as u8, b.round() as u8)
}

/// Heatmap of `values[i][j]` over `xs[i]` by `ys[j]`, with markers.
pub fn heatmap(title: &str, xlabel: &str, ylabel: &str, xs: &[f64], ys: &[f64], values: &[Vec<f64>], markers: &[(f64, f64, String)]) -> String {
    let step = |v: &[f64], k: usize| -> (f64, f64) {
        let n = v.len();
        if n == 1 {
            return (v[0] - 0.5, v[0] + 0.5);
        }
        let lo = if k == 0 { v[0] - (v[1] - v[0]) / 2.0 } else { (v[k - 1] + v[k]) / 2.0 };
        let hi = if k == n - 1 { v[n - 1] + (v[n - 1] - v[n - 2]) / 2.0 } else { (v[k] + v[k + 1]) / 2.0 };
        (lo, hi)
    };
    let xr = (step(xs, 0).0, step(xs, xs.len() - 1).1);
    let yr = (step(ys, 0).0, step(ys, ys.len() - 1).1);
    let (vlo, vhi) = range(values.iter().flatten().copied());
    let mut f = Frame::new(title, xlabel, ylabel, xr, yr);
    for (i, row) in values.iter().enumerate() {
        let (x0, x1) = step(xs, i);
        for (j, &v) in row.iter().enumerate() {
            let (y0, y1) = step(ys, j);
            let (px0, px1, py0, py1) = (f.px(x0), f.px(x1), f.py(y1), f.py(y0));
            let c = heat_color((v - vlo) / (vhi - vlo));
            let _ = writeln!(
                f.body,
                r#"<rect x="{px0:.2}" y="{py0:.2}" width="{:.2}" height="{:.2}" fill="{c}"><title>{}</title></rect>"#,
                (px1 - px0).max(0.1),
                (py1 - py0).max(0.1),
                fmt_tick(v)
            );
        }
    }
    for (x, y, label) in markers {
        let (px, py) = (f.px(*x), f.py(*y));
        let _ = writeln!(
            f.body,
            r##"<circle cx="{px:.2}" cy="{py:.2}" r="3" fill="none" stroke="#000"/><text x="{:.2}" y="{:.2}" font-size="9">{}</text>"##,
            px + 4.0,
            py - 4.0,
            esc(label)
        );
    }
    let _ = writeln!(
        f.body,
        r#"<text x="{}" y="{}" text-anchor="end" font-size="10">range {} to {}</text>"#,
        W - MR,
        MT - 4.0,
        fmt_tick(vlo),
        fmt_tick(vhi)
    );
    f.finish()
}

/// Grouped bars: one group per name, one bar per series.
pub fn bar_chart(title: &str, names: &[String], series: &[(&str, Vec<f64>)]) -> String {
    let n = names.len().max(1) as f64;
    let top = series.iter().flat_map(|s| s.1.iter().copied()).filter(|v| v.is_finite()).fold(1.0f64, f64::max);
    let mut f = Frame::new(title, "variable", "index", (0.0, n), (0.0, top));
    let group = (W - ML - MR) / n;
    let bw = group * 0.8 / series.len().max(1) as f64;
    for (i, name) in names.iter().enumerate() {
        let gx = ML + group * i as f64 + group * 0.1;
        for (k, (_, vals)) in series.iter().enumerate() {
            let v = if vals[i].is_finite() { vals[i].max(0.0) } else { 0.0 };
            let (y0, y1) = (f.py(0.0), f.py(v));
            let _ = writeln!(
                f.body,
                r#"<rect x="{:.2}" y="{y1:.2}" width="{bw:.2}" height="{:.2}" fill="{}"/>"#,
                gx + bw * k as f64,
                y0 - y1,
                color(k)
            );
        }
        let _ = writeln!(f.body, r#"<text x="{:.2}" y="{}" text-anchor="middle" font-size="10">{}</text>"#, gx + group * 0.4, H - MB + 30.0, esc(name));
    }
    let labels: Vec<(String, &str)> = series.iter().enumerate().map(|(k, s)| (s.0.to_string(), color(k))).collect();
    f.legend(&labels);
    f.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figures_are_well_formed() {
        let x = [0.0, 1.0, 2.0];
        let s = band_plot("a<b", "dose", &x, &[1.0, 2.0, 3.0], &[0.5, 1.5, 2.5], &[1.5, 2.5, 3.5], &[(1.0, 2.2)]);
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n") && s.contains("a&lt;b"));
        let h = heatmap("pd", "x", "y", &x, &[0.0, 1.0], &vec![vec![1.0, 1.0]; 3], &[(1.0, 0.5, "P1".into())]);
        assert_eq!(h.matches("<rect x=").count(), 6 + 1);
        let b = bar_chart("s", &["a".into(), "b".into()], &[("S", vec![0.2, 0.8]), ("T", vec![0.2, f64::NAN])]);
        assert!(b.contains("</svg>") && !b.contains("NaN"));
        let l = line_plot("t", "i", "v", &x, &[("c0".into(), vec![1.0; 3])]);
        assert!(!l.contains("NaN") && !l.contains("inf"));
    }
}
