//! Minimal SVG line charts. Output is plain text with fixed number
//! formatting, so identical data gives identical bytes.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 70.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Left,
    Right,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub color: String,
    pub axis: Axis,
    pub dashed: bool,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>, color: &str) -> Self {
        Self {
            name: name.into(),
            points,
            color: color.to_string(),
            axis: Axis::Left,
            dashed: false,
        }
    }

    pub fn on_right(mut self) -> Self {
        self.axis = Axis::Right;
        self
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

/// Filled region between `lower` and `upper` at shared x positions.
#[derive(Debug, Clone)]
pub struct Band {
    pub name: String,
    pub xs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub color: String,
}

#[derive(Debug, Clone, Default)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub y2_label: Option<String>,
    pub series: Vec<Series>,
    pub bands: Vec<Band>,
}

#[derive(Debug, Clone, Copy)]
struct Range {
    lo: f64,
    hi: f64,
}

impl Range {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Self { lo: 0.0, hi: 1.0 };
        }
        if hi - lo < 1e-12 {
            let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
            return Self {
                lo: lo - pad,
                hi: hi + pad,
            };
        }
        Self { lo, hi }
    }

    fn include_zero(self) -> Self {
        Self {
            lo: self.lo.min(0.0),
            hi: self.hi.max(0.0),
        }
    }

    fn map(&self, v: f64, from: f64, to: f64) -> f64 {
        from + (v - self.lo) / (self.hi - self.lo) * (to - from)
    }
}

pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

impl LineChart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            ..Self::default()
        }
    }

    pub fn render(&self) -> String {
        let plot_right = WIDTH - RIGHT;
        let plot_bottom = HEIGHT - BOTTOM;
        let x = Range::of(
            self.series
                .iter()
                .flat_map(|s| s.points.iter().map(|p| p.0))
                .chain(self.bands.iter().flat_map(|b| b.xs.iter().copied())),
        );
        let left_values = self
            .series
            .iter()
            .filter(|s| s.axis == Axis::Left)
            .flat_map(|s| s.points.iter().map(|p| p.1))
            .chain(
                self.bands
                    .iter()
                    .flat_map(|b| b.lower.iter().chain(&b.upper).copied()),
            );
        let y = Range::of(left_values).include_zero();
        let y2 = Range::of(
            self.series
                .iter()
                .filter(|s| s.axis == Axis::Right)
                .flat_map(|s| s.points.iter().map(|p| p.1)),
        )
        .include_zero();
        let px = |v: f64| x.map(v, LEFT, plot_right);
        let py = |v: f64, axis: Axis| match axis {
            Axis::Left => y.map(v, plot_bottom, TOP),
            Axis::Right => y2.map(v, plot_bottom, TOP),
        };

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(
            svg,
            r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );

        for band in &self.bands {
            let mut pts: Vec<String> = band
                .xs
                .iter()
                .zip(&band.upper)
                .map(|(&bx, &u)| format!("{:.2},{:.2}", px(bx), py(u, Axis::Left)))
                .collect();
            pts.extend(
                band.xs
                    .iter()
                    .zip(&band.lower)
                    .rev()
                    .map(|(&bx, &l)| format!("{:.2},{:.2}", px(bx), py(l, Axis::Left))),
            );
            let _ = writeln!(
                svg,
                r#"<polygon points="{}" fill="{}" fill-opacity="0.25" stroke="none"><title>{}</title></polygon>"#,
                pts.join(" "),
                band.color,
                escape(&band.name)
            );
        }

        // axes and ticks
        let _ = writeln!(
            svg,
            r##"<g stroke="#333" stroke-width="1"><line x1="{LEFT}" y1="{plot_bottom}" x2="{plot_right}" y2="{plot_bottom}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{plot_bottom}"/></g>"##
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let xv = x.lo + f * (x.hi - x.lo);
            let yv = y.lo + f * (y.hi - y.lo);
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                px(xv),
                plot_bottom + 18.0,
                tick_label(xv)
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 6.0,
                py(yv, Axis::Left) + 4.0,
                tick_label(yv)
            );
            if self.y2_label.is_some() {
                let y2v = y2.lo + f * (y2.hi - y2.lo);
                let _ = writeln!(
                    svg,
                    r#"<text x="{:.2}" y="{:.2}" text-anchor="start">{}</text>"#,
                    plot_right + 6.0,
                    py(y2v, Axis::Right) + 4.0,
                    tick_label(y2v)
                );
            }
        }
        if let Some(label) = &self.y2_label {
            let _ = writeln!(
                svg,
                r##"<line x1="{plot_right}" y1="{TOP}" x2="{plot_right}" y2="{plot_bottom}" stroke="#333" stroke-width="1"/>"##
            );
            let _ = writeln!(
                svg,
                r#"<text transform="translate({:.1},{:.1}) rotate(90)" text-anchor="middle">{}</text>"#,
                WIDTH - 12.0,
                (TOP + plot_bottom) / 2.0,
                escape(label)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            (LEFT + plot_right) / 2.0,
            HEIGHT - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text transform="translate(16,{:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
            (TOP + plot_bottom) / 2.0,
            escape(&self.y_label)
        );

        for s in &self.series {
            let pts: Vec<String> = s
                .points
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite())
                .map(|&(a, b)| format!("{:.2},{:.2}", px(a), py(b, s.axis)))
                .collect();
            let dash = if s.dashed {
                r#" stroke-dasharray="6,4""#
            } else {
                ""
            };
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"{dash}><title>{}</title></polyline>"#,
                pts.join(" "),
                s.color,
                escape(&s.name)
            );
        }

        // legend
        let entries = self
            .bands
            .iter()
            .map(|b| (b.name.as_str(), b.color.as_str(), true))
            .chain(
                self.series
                    .iter()
                    .map(|s| (s.name.as_str(), s.color.as_str(), false)),
            );
        for (i, (name, color, filled)) in entries.enumerate() {
            let ly = TOP + 8.0 + 16.0 * i as f64;
            let lx = LEFT + 12.0;
            if filled {
                let _ = writeln!(
                    svg,
                    r#"<rect x="{lx:.1}" y="{:.1}" width="18" height="8" fill="{color}" fill-opacity="0.25"/>"#,
                    ly - 4.0
                );
            } else {
                let _ = writeln!(
                    svg,
                    r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
                    lx + 18.0
                );
            }
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
                lx + 24.0,
                ly + 4.0,
                escape(name)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_polyline_per_series() {
        let mut chart = LineChart::new("t", "x", "y");
        for (i, color) in PALETTE.iter().take(3).enumerate() {
            chart.series.push(Series::new(
                format!("s{i}"),
                vec![(0.0, i as f64), (1.0, 2.0)],
                color,
            ));
        }
        let svg = chart.render();
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }

    #[test]
    fn text_is_escaped() {
        let chart = LineChart::new("a < b & c", "x", "y");
        assert!(chart.render().contains("a &lt; b &amp; c"));
    }

    #[test]
    fn degenerate_ranges_do_not_produce_nan() {
        let mut chart = LineChart::new("flat", "x", "y");
        chart
            .series
            .push(Series::new("one", vec![(3.0, 5.0)], PALETTE[0]));
        chart
            .series
            .push(Series::new("empty", vec![], PALETTE[1]).on_right());
        chart.y2_label = Some("right".into());
        let svg = chart.render();
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
