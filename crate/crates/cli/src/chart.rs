//! Static SVG charts, written by hand so reports have no rendering
//! dependencies.

use std::fmt::Write as _;

const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

/// One panel of the adjacent-rank moment chart.
#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    /// `(high rank, mean, ci lower, ci upper)`.
    pub points: Vec<(usize, f64, f64, f64)>,
}

/// One series of a scatter chart.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

struct Scale {
    min: f64,
    max: f64,
    pixel_lo: f64,
    pixel_hi: f64,
}

impl Scale {
    fn map(&self, v: f64) -> f64 {
        if self.max == self.min {
            return (self.pixel_lo + self.pixel_hi) / 2.0;
        }
        self.pixel_lo + (v - self.min) / (self.max - self.min) * (self.pixel_hi - self.pixel_lo)
    }
}

/// Round tick positions covering `[min, max]`.
fn ticks(min: f64, max: f64, target: usize) -> Vec<f64> {
    if max <= min {
        return vec![min];
    }
    let raw_step = (max - min) / target as f64;
    let magnitude = 10f64.powf(raw_step.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * magnitude)
        .find(|s| *s >= raw_step)
        .unwrap_or(magnitude * 10.0);
    let mut t = (min / step).ceil() * step;
    let mut out = Vec::new();
    while t <= max + step * 1e-9 {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if a >= 100.0 {
        format!("{v:.0}")
    } else if a >= 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

/// Point-and-interval chart of adjacent-rank moments, one panel per group
/// pair, shared y-axis, dashed zero line. The x-axis is the rank of the
/// higher-ranked candidate.
pub fn moments_chart(panels: &[Panel]) -> String {
    let panel_w = 340.0;
    let panel_h = 300.0;
    let margin_left = 64.0;
    let margin_right = 16.0;
    let margin_top = 34.0;
    let margin_bottom = 48.0;
    let gap = 18.0;
    let n = panels.len().max(1);
    let width = margin_left + n as f64 * panel_w + (n as f64 - 1.0) * gap + margin_right;
    let height = margin_top + panel_h + margin_bottom;

    // Shared y-range from all intervals plus zero.
    let (mut y_min, mut y_max) = (0.0f64, 0.0f64);
    for p in panels {
        for (_, _, lo, hi) in &p.points {
            y_min = y_min.min(*lo);
            y_max = y_max.max(*hi);
        }
    }
    if y_min == y_max {
        y_min -= 1.0;
        y_max += 1.0;
    }
    let pad = 0.08 * (y_max - y_min);
    let y = Scale {
        min: y_min - pad,
        max: y_max + pad,
        pixel_lo: margin_top + panel_h,
        pixel_hi: margin_top,
    };

    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         font-family=\"sans-serif\" font-size=\"12\">"
    )
    .unwrap();
    writeln!(svg, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>").unwrap();

    for (pi, panel) in panels.iter().enumerate() {
        let x0 = margin_left + pi as f64 * (panel_w + gap);
        let ranks: Vec<usize> = panel.points.iter().map(|p| p.0).collect();
        let (r_min, r_max) = (
            ranks.iter().min().copied().unwrap_or(1),
            ranks.iter().max().copied().unwrap_or(1),
        );
        let x = Scale {
            min: r_min as f64 - 0.5,
            max: r_max as f64 + 0.5,
            pixel_lo: x0,
            pixel_hi: x0 + panel_w,
        };

        // Frame and title.
        writeln!(
            svg,
            "<rect x=\"{x0:.2}\" y=\"{:.2}\" width=\"{panel_w:.2}\" height=\"{panel_h:.2}\" \
             fill=\"none\" stroke=\"#333\"/>",
            margin_top
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-weight=\"bold\">{}</text>",
            x0 + panel_w / 2.0,
            margin_top - 10.0,
            panel.title
        )
        .unwrap();

        // Zero line.
        let zero_y = y.map(0.0);
        writeln!(
            svg,
            "<line x1=\"{x0:.2}\" y1=\"{zero_y:.2}\" x2=\"{:.2}\" y2=\"{zero_y:.2}\" \
             stroke=\"#888\" stroke-dasharray=\"5,4\"/>",
            x0 + panel_w
        )
        .unwrap();

        // X ticks at integer ranks (thinned when crowded).
        let stride = 1 + (r_max - r_min) / 15;
        for r in (r_min..=r_max).step_by(stride.max(1)) {
            let tx = x.map(r as f64);
            writeln!(
                svg,
                "<line x1=\"{tx:.2}\" y1=\"{0:.2}\" x2=\"{tx:.2}\" y2=\"{1:.2}\" stroke=\"#333\"/>\
                 <text x=\"{tx:.2}\" y=\"{2:.2}\" text-anchor=\"middle\">{r}</text>",
                margin_top + panel_h,
                margin_top + panel_h + 6.0,
                margin_top + panel_h + 20.0
            )
            .unwrap();
        }
        writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">rank of higher-ranked candidate</text>",
            x0 + panel_w / 2.0,
            margin_top + panel_h + 38.0
        )
        .unwrap();

        // Y ticks on the first panel only.
        if pi == 0 {
            for t in ticks(y.min, y.max, 5) {
                let ty = y.map(t);
                writeln!(
                    svg,
                    "<line x1=\"{0:.2}\" y1=\"{ty:.2}\" x2=\"{x0:.2}\" y2=\"{ty:.2}\" stroke=\"#333\"/>\
                     <text x=\"{1:.2}\" y=\"{2:.2}\" text-anchor=\"end\">{3}</text>",
                    x0 - 6.0,
                    x0 - 9.0,
                    ty + 4.0,
                    fmt_tick(t)
                )
                .unwrap();
            }
            writeln!(
                svg,
                "<text x=\"16\" y=\"{:.2}\" transform=\"rotate(-90 16 {:.2})\" \
                 text-anchor=\"middle\">mean outcome difference</text>",
                margin_top + panel_h / 2.0,
                margin_top + panel_h / 2.0
            )
            .unwrap();
        }

        // Intervals and points.
        let color = COLORS[pi % COLORS.len()];
        for (rank, mean, lo, hi) in &panel.points {
            let px = x.map(*rank as f64);
            let (py, plo, phi) = (y.map(*mean), y.map(*lo), y.map(*hi));
            writeln!(
                svg,
                "<line x1=\"{px:.2}\" y1=\"{plo:.2}\" x2=\"{px:.2}\" y2=\"{phi:.2}\" stroke=\"{color}\"/>\
                 <line x1=\"{0:.2}\" y1=\"{plo:.2}\" x2=\"{1:.2}\" y2=\"{plo:.2}\" stroke=\"{color}\"/>\
                 <line x1=\"{0:.2}\" y1=\"{phi:.2}\" x2=\"{1:.2}\" y2=\"{phi:.2}\" stroke=\"{color}\"/>\
                 <circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"3.5\" fill=\"{color}\"/>",
                px - 4.0,
                px + 4.0
            )
            .unwrap();
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Scatter chart with one colored series per group and a legend.
pub fn scatter_chart(series: &[Series], x_label: &str, y_label: &str) -> String {
    let plot_w = 480.0;
    let plot_h = 360.0;
    let margin_left = 70.0;
    let margin_top = 24.0;
    let margin_bottom = 52.0;
    let margin_right = 140.0;
    let width = margin_left + plot_w + margin_right;
    let height = margin_top + plot_h + margin_bottom;

    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.clone()).collect();
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (px, py) in &all {
        x_min = x_min.min(*px);
        x_max = x_max.max(*px);
        y_min = y_min.min(*py);
        y_max = y_max.max(*py);
    }
    if all.is_empty() {
        (x_min, x_max, y_min, y_max) = (0.0, 1.0, 0.0, 1.0);
    }
    if x_min == x_max {
        x_min -= 0.5;
        x_max += 0.5;
    }
    if y_min == y_max {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let (xp, yp) = (0.06 * (x_max - x_min), 0.06 * (y_max - y_min));
    let x = Scale {
        min: x_min - xp,
        max: x_max + xp,
        pixel_lo: margin_left,
        pixel_hi: margin_left + plot_w,
    };
    let y = Scale {
        min: y_min - yp,
        max: y_max + yp,
        pixel_lo: margin_top + plot_h,
        pixel_hi: margin_top,
    };

    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         font-family=\"sans-serif\" font-size=\"12\">"
    )
    .unwrap();
    writeln!(svg, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>").unwrap();
    writeln!(
        svg,
        "<rect x=\"{margin_left:.2}\" y=\"{margin_top:.2}\" width=\"{plot_w:.2}\" \
         height=\"{plot_h:.2}\" fill=\"none\" stroke=\"#333\"/>"
    )
    .unwrap();

    for t in ticks(x.min, x.max, 6) {
        let tx = x.map(t);
        writeln!(
            svg,
            "<line x1=\"{tx:.2}\" y1=\"{0:.2}\" x2=\"{tx:.2}\" y2=\"{1:.2}\" stroke=\"#333\"/>\
             <text x=\"{tx:.2}\" y=\"{2:.2}\" text-anchor=\"middle\">{3}</text>",
            margin_top + plot_h,
            margin_top + plot_h + 6.0,
            margin_top + plot_h + 20.0,
            fmt_tick(t)
        )
        .unwrap();
    }
    for t in ticks(y.min, y.max, 6) {
        let ty = y.map(t);
        writeln!(
            svg,
            "<line x1=\"{0:.2}\" y1=\"{ty:.2}\" x2=\"{margin_left:.2}\" y2=\"{ty:.2}\" stroke=\"#333\"/>\
             <text x=\"{1:.2}\" y=\"{2:.2}\" text-anchor=\"end\">{3}</text>",
            margin_left - 6.0,
            margin_left - 9.0,
            ty + 4.0,
            fmt_tick(t)
        )
        .unwrap();
    }
    writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{x_label}</text>",
        margin_left + plot_w / 2.0,
        margin_top + plot_h + 40.0
    )
    .unwrap();
    writeln!(
        svg,
        "<text x=\"18\" y=\"{0:.2}\" transform=\"rotate(-90 18 {0:.2})\" \
         text-anchor=\"middle\">{y_label}</text>",
        margin_top + plot_h / 2.0
    )
    .unwrap();

    for (si, s) in series.iter().enumerate() {
        let color = COLORS[si % COLORS.len()];
        for (px, py) in &s.points {
            writeln!(
                svg,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{color}\" fill-opacity=\"0.85\"/>",
                x.map(*px),
                y.map(*py)
            )
            .unwrap();
        }
        let ly = margin_top + 16.0 + 20.0 * si as f64;
        writeln!(
            svg,
            "<circle cx=\"{0:.2}\" cy=\"{ly:.2}\" r=\"4\" fill=\"{color}\"/>\
             <text x=\"{1:.2}\" y=\"{2:.2}\">{3}</text>",
            margin_left + plot_w + 16.0,
            margin_left + plot_w + 26.0,
            ly + 4.0,
            s.label
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}
