//! Static SVG figures of traced curves.
//!
//! Output depends only on the inputs: no randomness, no timestamps, and
//! coordinates printed at fixed precision.

use std::fmt::Write;

use num_complex::Complex64;
use qpainleve::stokes::{CurveKind, TracedCurve};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    S,
    X,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Style {
    pub width: f64,
    pub height: f64,
    pub margin: f64,
    /// `[re_min, re_max, im_min, im_max]`; fitted to the data when absent.
    pub bounds: Option<[f64; 4]>,
    pub stokes_color: String,
    pub anti_stokes_color: String,
    pub cut_color: String,
    pub marker_color: String,
    pub axis_color: String,
    pub background: String,
    pub stroke_width: f64,
    pub dash: String,
    pub zigzag_amplitude: f64,
    pub zigzag_period: f64,
    pub marker_radius: f64,
    pub title: Option<String>,
}

impl Default for Style {
    fn default() -> Self {
        Style {
            width: 640.0,
            height: 480.0,
            margin: 32.0,
            bounds: None,
            stokes_color: "#b03a2e".into(),
            anti_stokes_color: "#1f618d".into(),
            cut_color: "#555555".into(),
            marker_color: "#000000".into(),
            axis_color: "#bbbbbb".into(),
            background: "#ffffff".into(),
            stroke_width: 1.5,
            dash: "6 4".into(),
            zigzag_amplitude: 3.0,
            zigzag_period: 8.0,
            marker_radius: 4.0,
            title: None,
        }
    }
}

fn px(x: f64) -> String {
    let t = format!("{x:.2}");
    if t == "-0.00" { "0.00".into() } else { t }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    re: (f64, f64),
    im: (f64, f64),
    style: Style,
}

impl Frame {
    fn fit(points: &[Complex64], style: &Style) -> Frame {
        let [mut a, mut b, mut c, mut d] = style.bounds.unwrap_or_else(|| {
            let finite = points.iter().filter(|z| z.is_finite());
            let mut r = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
            for z in finite {
                r = [r[0].min(z.re), r[1].max(z.re), r[2].min(z.im), r[3].max(z.im)];
            }
            r
        });
        if !(a.is_finite() && b.is_finite() && c.is_finite() && d.is_finite()) {
            (a, b, c, d) = (-1.0, 1.0, -1.0, 1.0);
        }
        if style.bounds.is_none() {
            let pad = 0.05 * (b - a).max(d - c).max(1e-9);
            (a, b, c, d) = (a - pad, b + pad, c - pad, d + pad);
        }
        if b - a < 1e-12 {
            (a, b) = (a - 0.5, b + 0.5);
        }
        if d - c < 1e-12 {
            (c, d) = (c - 0.5, d + 0.5);
        }
        Frame { re: (a, b), im: (c, d), style: style.clone() }
    }

    /// Equal scales on both axes, centred in the drawing area.
    fn map(&self, z: Complex64) -> (f64, f64) {
        let s = &self.style;
        let w = s.width - 2.0 * s.margin;
        let h = s.height - 2.0 * s.margin;
        let k = (w / (self.re.1 - self.re.0)).min(h / (self.im.1 - self.im.0));
        let ox = s.margin + 0.5 * (w - k * (self.re.1 - self.re.0));
        let oy = s.margin + 0.5 * (h - k * (self.im.1 - self.im.0));
        (ox + k * (z.re - self.re.0), s.height - oy - k * (z.im - self.im.0))
    }
}

fn polyline(points: &[(f64, f64)]) -> String {
    points.iter().map(|(x, y)| format!("{},{}", px(*x), px(*y))).collect::<Vec<_>>().join(" ")
}

/// Zig-zag along a polyline in pixel space, alternating sides every half period.
fn zigzag(points: &[(f64, f64)], amplitude: f64, period: f64) -> Vec<(f64, f64)> {
    let Some(&first) = points.first() else { return Vec::new() };
    let mut out = vec![first];
    let half = 0.5 * period.max(1.0);
    let mut next_mark = half;
    let mut travelled = 0.0;
    let mut side = 1.0;
    for pair in points.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        if len == 0.0 {
            continue;
        }
        let (tx, ty) = ((b.0 - a.0) / len, (b.1 - a.1) / len);
        while next_mark < travelled + len {
            let u = next_mark - travelled;
            out.push((a.0 + tx * u - ty * amplitude * side, a.1 + ty * u + tx * amplitude * side));
            side = -side;
            next_mark += half;
        }
        travelled += len;
    }
    out.push(*points.last().expect("nonempty"));
    out
}

fn curve_points(curve: &TracedCurve, plane: Plane) -> &[Complex64] {
    match plane {
        Plane::S => &curve.s_points,
        Plane::X => &curve.x_points,
    }
}

/// Render `curves` and singular-point `markers` (already in the chosen plane).
///
/// Stokes curves are solid, anti-Stokes curves dashed, branch cuts zig-zag.
pub fn emit_figure(curves: &[TracedCurve], markers: &[Complex64], plane: Plane, style: &Style) -> Result<String, String> {
    if curves.is_empty() {
        return Err("a figure needs at least one curve".into());
    }
    let all: Vec<Complex64> =
        curves.iter().flat_map(|c| curve_points(c, plane).iter().copied()).chain(markers.iter().copied()).collect();
    let frame = Frame::fit(&all, style);
    let s = style;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">",
        w = px(s.width),
        h = px(s.height)
    );
    let _ = writeln!(svg, "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"{}\"/>", px(s.width), px(s.height), escape(&s.background));
    if let Some(title) = &s.title {
        let _ = writeln!(svg, "<title>{}</title>", escape(title));
    }
    // Axes through the origin when visible.
    let (lo, hi) = (frame.map(Complex64::new(frame.re.0, frame.im.0)), frame.map(Complex64::new(frame.re.1, frame.im.1)));
    if frame.im.0 <= 0.0 && frame.im.1 >= 0.0 {
        let (_, y) = frame.map(Complex64::new(0.0, 0.0));
        let _ = writeln!(svg, "<line class=\"axis\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"0.75\"/>", px(lo.0), px(y), px(hi.0), px(y), escape(&s.axis_color));
    }
    if frame.re.0 <= 0.0 && frame.re.1 >= 0.0 {
        let (x, _) = frame.map(Complex64::new(0.0, 0.0));
        let _ = writeln!(svg, "<line class=\"axis\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"0.75\"/>", px(x), px(lo.1), px(x), px(hi.1), escape(&s.axis_color));
    }
    for curve in curves {
        let pts: Vec<(f64, f64)> = curve_points(curve, plane).iter().filter(|z| z.is_finite()).map(|z| frame.map(*z)).collect();
        if pts.len() < 2 {
            continue;
        }
        let (class, color, extra, pts) = match curve.kind {
            CurveKind::Stokes => ("stokes", &s.stokes_color, String::new(), pts),
            CurveKind::AntiStokes => ("anti-stokes", &s.anti_stokes_color, format!(" stroke-dasharray=\"{}\"", escape(&s.dash)), pts),
            CurveKind::BranchCut => ("cut", &s.cut_color, String::new(), zigzag(&pts, s.zigzag_amplitude, s.zigzag_period)),
        };
        let _ = writeln!(
            svg,
            "<polyline class=\"{class}\" data-anchor=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{}\"{extra} points=\"{}\"/>",
            curve.anchor_k,
            escape(color),
            px(s.stroke_width),
            polyline(&pts)
        );
    }
    for m in markers.iter().filter(|z| z.is_finite()) {
        let (x, y) = frame.map(*m);
        let _ = writeln!(svg, "<circle class=\"singularity\" cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{}\"/>", px(x), px(y), px(s.marker_radius), escape(&s.marker_color));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zigzag_alternates() {
        let z = zigzag(&[(0.0, 0.0), (20.0, 0.0)], 2.0, 8.0);
        assert_eq!(z.first(), Some(&(0.0, 0.0)));
        assert_eq!(z.last(), Some(&(20.0, 0.0)));
        let offs: Vec<f64> = z[1..z.len() - 1].iter().map(|p| p.1).collect();
        assert!(offs.windows(2).all(|w| w[0] == -w[1]));
    }
}
