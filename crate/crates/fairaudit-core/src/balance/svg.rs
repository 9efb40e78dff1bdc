//! Standalone SVG 1.1 rendering for QQ and jitter plots.
//!
//! Output is byte-deterministic for identical inputs: coordinates are
//! formatted with fixed precision and no timestamps or ids are embedded.

use std::path::Path;

use super::{JitterLane, JitterPoint};
use crate::error::Result;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 28.0;
const MARGIN_BOTTOM: f64 = 48.0;

#[derive(Debug, Clone)]
pub enum Plot {
    Qq {
        feature: String,
        points: Vec<(f64, f64)>,
    },
    Jitter {
        points: Vec<JitterPoint>,
    },
}

/// Linear map from a data interval onto a pixel interval.
#[derive(Debug, Clone, Copy)]
pub struct Scale {
    pub domain: (f64, f64),
    pub range: (f64, f64),
}

impl Scale {
    pub fn apply(&self, v: f64) -> f64 {
        let (d0, d1) = self.domain;
        let (r0, r1) = self.range;
        if d1 == d0 {
            return (r0 + r1) / 2.0;
        }
        r0 + (v - d0) / (d1 - d0) * (r1 - r0)
    }
}

fn px(v: f64) -> String {
    format!("{v:.2}")
}

fn data_extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

fn axes(out: &mut String, x: &Scale, y: &Scale, x_label: &str, y_label: &str) {
    let x0 = x.range.0;
    let x1 = x.range.1;
    let y0 = y.range.0;
    let y1 = y.range.1;
    out.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\" stroke-width=\"1\"/>\n",
        px(x0),
        px(y0),
        px(x1),
        px(y0)
    ));
    out.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\" stroke-width=\"1\"/>\n",
        px(x0),
        px(y0),
        px(x0),
        px(y1)
    ));
    for k in 0..=4 {
        let f = f64::from(k) / 4.0;
        let xv = x.domain.0 + f * (x.domain.1 - x.domain.0);
        let xp = x.apply(xv);
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\" stroke-width=\"1\"/>\n",
            px(xp),
            px(y0),
            px(xp),
            px(y0 + 5.0)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            px(xp),
            px(y0 + 18.0),
            format_tick(xv)
        ));
        let yv = y.domain.0 + f * (y.domain.1 - y.domain.0);
        let yp = y.apply(yv);
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\" stroke-width=\"1\"/>\n",
            px(x0 - 5.0),
            px(yp),
            px(x0),
            px(yp)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            px(x0 - 8.0),
            px(yp + 4.0),
            format_tick(yv)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
        px((x0 + x1) / 2.0),
        px(y0 + 36.0),
        xml_escape(x_label)
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        px((y0 + y1) / 2.0),
        px((y0 + y1) / 2.0),
        xml_escape(y_label)
    ));
}

fn format_tick(v: f64) -> String {
    format!("{v:.2}")
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render a plot to an SVG document string.
pub fn svg_string(plot: &Plot) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    match plot {
        Plot::Qq { feature, points } => qq_body(&mut out, feature, points),
        Plot::Jitter { points } => jitter_body(&mut out, points),
    }
    out.push_str("</svg>\n");
    out
}

/// Shared axis scale for a QQ plot: both axes span the same interval so the
/// reference line is the exact pixel diagonal.
pub fn qq_scales(points: &[(f64, f64)]) -> (Scale, Scale) {
    let extent = data_extent(points.iter().flat_map(|p| [p.0, p.1]));
    let x = Scale {
        domain: extent,
        range: (MARGIN_LEFT, WIDTH - MARGIN_RIGHT),
    };
    let y = Scale {
        domain: extent,
        range: (HEIGHT - MARGIN_BOTTOM, MARGIN_TOP),
    };
    (x, y)
}

fn qq_body(out: &mut String, feature: &str, points: &[(f64, f64)]) {
    let (x, y) = qq_scales(points);
    axes(
        out,
        &x,
        &y,
        &format!("treated quantiles: {feature}"),
        &format!("control quantiles: {feature}"),
    );
    // 45-degree reference line over the shared domain
    out.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"gray\" stroke-width=\"1\" stroke-dasharray=\"4 3\"/>\n",
        px(x.apply(x.domain.0)),
        px(y.apply(x.domain.0)),
        px(x.apply(x.domain.1)),
        px(y.apply(x.domain.1))
    ));
    for &(t, c) in points {
        out.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"steelblue\" fill-opacity=\"0.7\"/>\n",
            px(x.apply(t)),
            px(y.apply(c))
        ));
    }
}

fn lane_center(lane: JitterLane) -> f64 {
    let band = (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM) / 4.0;
    let slot = match lane {
        JitterLane::UnmatchedTreated => 0.0,
        JitterLane::MatchedTreated => 1.0,
        JitterLane::MatchedControl => 2.0,
        JitterLane::UnmatchedControl => 3.0,
    };
    MARGIN_TOP + band * (slot + 0.5)
}

fn jitter_body(out: &mut String, points: &[JitterPoint]) {
    let x = Scale {
        domain: data_extent(points.iter().map(|p| p.linear_score)),
        range: (MARGIN_LEFT, WIDTH - MARGIN_RIGHT),
    };
    let band = (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM) / 4.0;
    for (lane, label) in [
        (JitterLane::UnmatchedTreated, "unmatched treated"),
        (JitterLane::MatchedTreated, "matched treated"),
        (JitterLane::MatchedControl, "matched control"),
        (JitterLane::UnmatchedControl, "unmatched control"),
    ] {
        let yc = lane_center(lane);
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"start\">{}</text>\n",
            px(MARGIN_LEFT),
            px(yc - band * 0.42),
            label
        ));
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
            px(MARGIN_LEFT),
            px(yc),
            px(WIDTH - MARGIN_RIGHT),
            px(yc)
        ));
    }
    // axis along the bottom for the linear score
    let y_axis = Scale {
        domain: (0.0, 1.0),
        range: (HEIGHT - MARGIN_BOTTOM, MARGIN_TOP),
    };
    axes(out, &x, &y_axis, "linear propensity score", "");
    let r_base = 4.0;
    for p in points {
        let cx = x.apply(p.linear_score);
        let cy = lane_center(p.lane) + p.offset * band * 0.35;
        if p.radius > 0.0 {
            out.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"steelblue\" fill-opacity=\"0.45\"/>\n",
                px(cx),
                px(cy),
                px(r_base * p.radius)
            ));
        } else {
            // discarded rows render hollow
            out.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"2\" fill=\"none\" stroke=\"#888888\" stroke-width=\"1\"/>\n",
                px(cx),
                px(cy)
            ));
        }
    }
}

/// Write the plot to `path` as a standalone SVG 1.1 document.
pub fn render_svg(plot: &Plot, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path.as_ref(), svg_string(plot))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_qq_is_valid_axes_only_svg() {
        let s = svg_string(&Plot::Qq {
            feature: "x1".into(),
            points: Vec::new(),
        });
        assert!(s.starts_with("<?xml version=\"1.0\""));
        assert!(s.contains("<svg xmlns"));
        assert!(s.ends_with("</svg>\n"));
        assert!(!s.contains("circle"));
        // crude well-formedness: every element opened is closed or self-closed
        assert_eq!(s.matches("<line").count(), s.matches("/>").count() - 1);
    }

    #[test]
    fn diagonal_points_sit_on_the_reference_line() {
        let points: Vec<(f64, f64)> = (0..10).map(|i| (f64::from(i), f64::from(i))).collect();
        let (x, y) = qq_scales(&points);
        for &(t, c) in &points {
            let xp = x.apply(t);
            // the reference line maps v -> (x.apply(v), y.apply(v))
            let line_y = y.apply(t);
            let cy = y.apply(c);
            assert!((cy - line_y).abs() <= 0.5, "point off the diagonal");
            assert!(xp.is_finite());
        }
    }

    #[test]
    fn byte_identical_for_identical_inputs() {
        let points = vec![(0.1, 0.2), (0.5, 0.4), (1.0, 1.1)];
        let a = svg_string(&Plot::Qq {
            feature: "f".into(),
            points: points.clone(),
        });
        let b = svg_string(&Plot::Qq {
            feature: "f".into(),
            points,
        });
        assert_eq!(a, b);
    }
}
