//! Minimal deterministic SVG renderer for run artifacts.
//!
//! Supports exactly what the artifacts need — polyline series, scatter
//! points, filled bands, and histogram bars on a fixed canvas with linear
//! axes. Rendering is a pure function of the chart data with fixed-precision
//! number formatting, so artifact bytes reproduce across runs and machines.

use std::fmt::Write as _;

pub const WIDTH: f64 = 640.0;
pub const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 18.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 48.0;
const TICKS: usize = 5;

/// Fixed palette; series pick colors by index.
pub const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub points: Vec<(f64, f64)>,
}

/// Filled region between two curves sharing x order.
#[derive(Debug, Clone)]
pub struct Band {
    pub label: String,
    pub color: &'static str,
    pub upper: Vec<(f64, f64)>,
    pub lower: Vec<(f64, f64)>,
}

/// Axis-aligned bars `[x0, x1) -> height`, drawn from y = 0.
#[derive(Debug, Clone)]
pub struct Bars {
    pub label: String,
    pub color: &'static str,
    pub bars: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, Default)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub lines: Vec<Series>,
    pub scatter: Vec<Series>,
    pub bands: Vec<Band>,
    pub bars: Vec<Bars>,
}

impl Chart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Chart {
        Chart {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            ..Chart::default()
        }
    }

    fn bounds(&self) -> ((f64, f64), (f64, f64)) {
        let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
        let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
        let mut visit = |x: f64, y: f64| {
            if x.is_finite() && y.is_finite() {
                xs.0 = xs.0.min(x);
                xs.1 = xs.1.max(x);
                ys.0 = ys.0.min(y);
                ys.1 = ys.1.max(y);
            }
        };
        for s in self.lines.iter().chain(&self.scatter) {
            for &(x, y) in &s.points {
                visit(x, y);
            }
        }
        for b in &self.bands {
            for &(x, y) in b.upper.iter().chain(&b.lower) {
                visit(x, y);
            }
        }
        for b in &self.bars {
            for &(x0, x1, h) in &b.bars {
                visit(x0, 0.0);
                visit(x1, h);
            }
        }
        let pad = |(lo, hi): (f64, f64)| {
            if lo > hi {
                (0.0, 1.0)
            } else if lo == hi {
                (lo - 1.0, hi + 1.0)
            } else {
                let p = 0.05 * (hi - lo);
                (lo - p, hi + p)
            }
        };
        (pad(xs), pad(ys))
    }

    /// Renders the chart to a complete SVG document.
    pub fn render(&self) -> String {
        let ((x_lo, x_hi), (y_lo, y_hi)) = self.bounds();
        let plot_w = WIDTH - MARGIN_L - MARGIN_R;
        let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
        let sx = move |x: f64| MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w;
        let sy = move |y: f64| MARGIN_T + (y_hi - y) / (y_hi - y_lo) * plot_h;

        let mut out = String::new();
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
             viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"monospace\" font-size=\"12\">"
        );
        let _ = writeln!(
            out,
            "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>"
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
            MARGIN_L + plot_w / 2.0,
            escape(&self.title)
        );

        // Grid and tick labels.
        for i in 0..=TICKS {
            let f = i as f64 / TICKS as f64;
            let xv = x_lo + f * (x_hi - x_lo);
            let yv = y_lo + f * (y_hi - y_lo);
            let xp = sx(xv);
            let yp = sy(yv);
            let _ = writeln!(
                out,
                "<line x1=\"{xp:.2}\" y1=\"{:.2}\" x2=\"{xp:.2}\" y2=\"{:.2}\" \
                 stroke=\"#dddddd\" stroke-width=\"1\"/>",
                MARGIN_T,
                MARGIN_T + plot_h
            );
            let _ = writeln!(
                out,
                "<line x1=\"{:.2}\" y1=\"{yp:.2}\" x2=\"{:.2}\" y2=\"{yp:.2}\" \
                 stroke=\"#dddddd\" stroke-width=\"1\"/>",
                MARGIN_L,
                MARGIN_L + plot_w
            );
            let _ = writeln!(
                out,
                "<text x=\"{xp:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
                MARGIN_T + plot_h + 16.0,
                fmt_tick(xv)
            );
            let _ = writeln!(
                out,
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
                MARGIN_L - 6.0,
                yp + 4.0,
                fmt_tick(yv)
            );
        }
        let _ = writeln!(
            out,
            "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{plot_w}\" height=\"{plot_h}\" \
             fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>"
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            MARGIN_L + plot_w / 2.0,
            HEIGHT - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" \
             transform=\"rotate(-90 16 {:.1})\">{}</text>",
            MARGIN_T + plot_h / 2.0,
            MARGIN_T + plot_h / 2.0,
            escape(&self.y_label)
        );

        for b in &self.bars {
            let y0 = sy(0.0f64.clamp(y_lo, y_hi));
            for &(x0, x1, h) in &b.bars {
                if !(x0.is_finite() && x1.is_finite() && h.is_finite()) {
                    continue;
                }
                let (xa, xb) = (sx(x0), sx(x1));
                let yb = sy(h);
                let (top, bot) = if yb < y0 { (yb, y0) } else { (y0, yb) };
                let _ = writeln!(
                    out,
                    "<rect x=\"{xa:.2}\" y=\"{top:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
                     fill=\"{}\" fill-opacity=\"0.45\" stroke=\"{}\" stroke-width=\"0.5\"/>",
                    xb - xa,
                    bot - top,
                    b.color,
                    b.color
                );
            }
        }
        for b in &self.bands {
            let mut d = String::new();
            for &(x, y) in &b.upper {
                if x.is_finite() && y.is_finite() {
                    let _ = write!(d, "{:.2},{:.2} ", sx(x), sy(y));
                }
            }
            for &(x, y) in b.lower.iter().rev() {
                if x.is_finite() && y.is_finite() {
                    let _ = write!(d, "{:.2},{:.2} ", sx(x), sy(y));
                }
            }
            let _ = writeln!(
                out,
                "<polygon points=\"{}\" fill=\"{}\" fill-opacity=\"0.25\" stroke=\"none\"/>",
                d.trim_end(),
                b.color
            );
        }
        for s in &self.lines {
            let mut d = String::new();
            for &(x, y) in &s.points {
                if x.is_finite() && y.is_finite() {
                    let _ = write!(d, "{:.2},{:.2} ", sx(x), sy(y));
                }
            }
            let _ = writeln!(
                out,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>",
                d.trim_end(),
                s.color
            );
        }
        for s in &self.scatter {
            for &(x, y) in &s.points {
                if x.is_finite() && y.is_finite() {
                    let _ = writeln!(
                        out,
                        "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{}\" \
                         fill-opacity=\"0.7\"/>",
                        sx(x),
                        sy(y),
                        s.color
                    );
                }
            }
        }

        // Legend: one row per labeled item, top-right inside the plot frame.
        let mut row = 0usize;
        let mut legend = |out: &mut String, color: &str, label: &str| {
            if label.is_empty() {
                return;
            }
            let y = MARGIN_T + 14.0 + 16.0 * row as f64;
            let x = WIDTH - MARGIN_R - 150.0;
            let _ = writeln!(
                out,
                "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" \
                 stroke=\"{color}\" stroke-width=\"3\"/>",
                y - 4.0,
                x + 18.0,
                y - 4.0
            );
            let _ = writeln!(
                out,
                "<text x=\"{:.1}\" y=\"{y:.1}\">{}</text>",
                x + 24.0,
                escape(label)
            );
            row += 1;
        };
        for b in &self.bars {
            legend(&mut out, b.color, &b.label);
        }
        for b in &self.bands {
            legend(&mut out, b.color, &b.label);
        }
        for s in &self.lines {
            legend(&mut out, s.color, &s.label);
        }
        for s in &self.scatter {
            legend(&mut out, s.color, &s.label);
        }

        out.push_str("</svg>\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Tick label with fixed rules: plain decimal in a comfortable range,
/// scientific outside it, trailing zeros trimmed. Purely value-driven, so
/// labels never depend on platform formatting.
fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        return format!("{v:.1e}");
    }
    let mut s = format!("{v:.3}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_chart() -> Chart {
        let mut c = Chart::new("demo", "x", "y");
        c.lines.push(Series {
            label: "truth".to_string(),
            color: PALETTE[0],
            points: vec![(-1.0, 1.0), (0.0, 0.0), (1.0, 1.0)],
        });
        c.scatter.push(Series {
            label: "obs".to_string(),
            color: PALETTE[1],
            points: vec![(0.5, 0.3)],
        });
        c.bands.push(Band {
            label: "band".to_string(),
            color: PALETTE[2],
            upper: vec![(-1.0, 1.5), (1.0, 1.5)],
            lower: vec![(-1.0, 0.5), (1.0, 0.5)],
        });
        c
    }

    #[test]
    fn rendering_is_deterministic() {
        let a = sample_chart().render();
        let b = sample_chart().render();
        assert_eq!(a, b);
        assert!(a.starts_with("<svg "));
        assert!(a.ends_with("</svg>\n"));
    }

    #[test]
    fn contains_expected_elements() {
        let svg = sample_chart().render();
        assert!(svg.contains("<polyline"));
        assert!(svg.contains("<circle"));
        assert!(svg.contains("<polygon"));
        assert!(svg.contains("truth"));
        assert!(svg.contains("obs"));
    }

    #[test]
    fn degenerate_data_still_renders() {
        let mut c = Chart::new("flat", "x", "y");
        c.lines.push(Series {
            label: String::new(),
            color: PALETTE[0],
            points: vec![(2.0, 3.0), (2.0, 3.0)],
        });
        let svg = c.render();
        assert!(svg.contains("<polyline"));
        Chart::new("empty", "x", "y").render();
    }

    #[test]
    fn tick_labels_are_trimmed_and_stable() {
        assert_eq!(fmt_tick(0.0), "0");
        assert_eq!(fmt_tick(1.5), "1.5");
        assert_eq!(fmt_tick(-2.0), "-2");
        assert_eq!(fmt_tick(0.125), "0.125");
        assert_eq!(fmt_tick(1.0e6), "1.0e6");
        assert_eq!(fmt_tick(2.5e-5), "2.5e-5");
    }

    #[test]
    fn special_characters_are_escaped() {
        let c = Chart::new("a<b&c", "x", "y");
        let svg = c.render();
        assert!(svg.contains("a&lt;b&amp;c"));
    }
}
