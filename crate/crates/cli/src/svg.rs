//! Minimal SVG emission for workspace plots (first two coordinates).

use std::fmt::Write as _;

use anyhow::Result;
use neuralparc::HPolytope;

const OUTLINE_DIRECTIONS: usize = 64;

enum Shape {
    Polygon { points: Vec<[f64; 2]>, fill: &'static str, opacity: f64 },
    Line { points: Vec<[f64; 2]>, stroke: &'static str, width: f64, dashed: bool, opacity: f64 },
}

#[derive(Default)]
pub struct Plot {
    shapes: Vec<Shape>,
}

impl Plot {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn polygon(&mut self, points: Vec<[f64; 2]>, fill: &'static str, opacity: f64) {
        if points.len() >= 3 {
            self.shapes.push(Shape::Polygon { points, fill, opacity });
        }
    }

    pub fn line(&mut self, points: Vec<[f64; 2]>, stroke: &'static str, width: f64, dashed: bool, opacity: f64) {
        if points.len() >= 2 {
            self.shapes.push(Shape::Line { points, stroke, width, dashed, opacity });
        }
    }

    pub fn rect(&mut self, lo: [f64; 2], hi: [f64; 2], fill: &'static str, opacity: f64) {
        self.polygon(vec![lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]], fill, opacity);
    }

    fn extent(&self) -> Option<([f64; 2], [f64; 2])> {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for s in &self.shapes {
            let pts = match s {
                Shape::Polygon { points, .. } | Shape::Line { points, .. } => points,
            };
            for p in pts {
                for i in 0..2 {
                    lo[i] = lo[i].min(p[i]);
                    hi[i] = hi[i].max(p[i]);
                }
            }
        }
        lo[0].is_finite().then_some((lo, hi))
    }

    /// Renders with equal axis scaling, y pointing up.
    pub fn render(&self, width: f64) -> String {
        let (mut lo, mut hi) = self.extent().unwrap_or(([0.0, 0.0], [1.0, 1.0]));
        let pad = 0.05 * (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
        for i in 0..2 {
            lo[i] -= pad;
            hi[i] += pad;
        }
        let scale = width / (hi[0] - lo[0]);
        let height = (hi[1] - lo[1]) * scale;
        let map = |p: &[f64; 2]| ((p[0] - lo[0]) * scale, (hi[1] - p[1]) * scale);
        let fmt_points = |pts: &[[f64; 2]]| {
            pts.iter()
                .map(|p| {
                    let (x, y) = map(p);
                    format!("{x:.2},{y:.2}")
                })
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.2} {height:.2}">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        for s in &self.shapes {
            match s {
                Shape::Polygon { points, fill, opacity } => {
                    let _ = writeln!(
                        out,
                        r#"<polygon points="{}" fill="{fill}" fill-opacity="{opacity}" stroke="{fill}" stroke-width="1"/>"#,
                        fmt_points(points)
                    );
                }
                Shape::Line { points, stroke, width, dashed, opacity } => {
                    let dash = if *dashed { r#" stroke-dasharray="6,4""# } else { "" };
                    let _ = writeln!(
                        out,
                        r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{width}" stroke-opacity="{opacity}"{dash}/>"#,
                        fmt_points(points)
                    );
                }
            }
        }
        out.push_str("</svg>\n");
        out
    }
}

/// Outer polygon of the projection of `poly` onto its first two coordinates,
/// from support values in evenly spaced directions.
pub fn outline(poly: &HPolytope) -> Result<Vec<[f64; 2]>> {
    let n = poly.dim();
    let dirs: Vec<[f64; 2]> = (0..OUTLINE_DIRECTIONS)
        .map(|i| {
            let th = std::f64::consts::TAU * i as f64 / OUTLINE_DIRECTIONS as f64;
            [th.cos(), th.sin()]
        })
        .collect();
    let mut h = Vec::with_capacity(dirs.len());
    for d in &dirs {
        let mut full = vec![0.0; n];
        full[..2].copy_from_slice(d);
        h.push(poly.support(&full)?);
    }
    let mut pts = Vec::with_capacity(dirs.len());
    for i in 0..dirs.len() {
        let j = (i + 1) % dirs.len();
        let (a, b) = (dirs[i], dirs[j]);
        let det = a[0] * b[1] - a[1] * b[0];
        pts.push([(h[i] * b[1] - h[j] * a[1]) / det, (a[0] * h[j] - b[0] * h[i]) / det]);
    }
    Ok(pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use neuralparc::Hyperrectangle;

    #[test]
    fn box_outline_hits_corners() {
        let b = Hyperrectangle::new(vec![1.0, 2.0, -5.0], vec![3.0, 5.0, 5.0]).unwrap().as_hpolytope();
        let pts = outline(&b).unwrap();
        for corner in [[1.0, 2.0], [3.0, 2.0], [3.0, 5.0], [1.0, 5.0]] {
            assert!(pts.iter().any(|p| (p[0] - corner[0]).abs() < 1e-9 && (p[1] - corner[1]).abs() < 1e-9));
        }
        for p in &pts {
            assert!(p[0] > 1.0 - 1e-9 && p[0] < 3.0 + 1e-9 && p[1] > 2.0 - 1e-9 && p[1] < 5.0 + 1e-9);
        }
    }

    #[test]
    fn render_is_well_formed() {
        let mut plot = Plot::new();
        plot.rect([0.0, 0.0], [1.0, 1.0], "red", 0.5);
        plot.line(vec![[0.0, 0.0], [2.0, 1.0]], "black", 1.0, true, 1.0);
        let s = plot.render(400.0);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("stroke-dasharray"));
    }
}
