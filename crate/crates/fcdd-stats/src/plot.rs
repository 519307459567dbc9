//! Deterministic SVG builders for the comparison plots: critical-difference
//! diagrams, box plots with scattered samples, and metric-over-epoch lines.
//! Pure string construction, no timestamps, so identical inputs give
//! byte-identical files.

use std::fmt::Write as _;

use crate::{BoxplotStats, CdDiagram};

/// One named curve for [`line_plot_svg`].
#[derive(Debug, Clone)]
pub struct LineSeries {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn fmt_num(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Round tick steps to 1/2/5 times a power of ten covering [lo, hi].
fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw_step = (hi - lo) / target.max(1) as f64;
    let mag = 10f64.powf(raw_step.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| (hi - lo) / s <= target as f64)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn svg_open(out: &mut String, width: f64, height: f64) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    );
}

/// Critical-difference diagram: average-rank axis on top, one elbow
/// connector per method down to its label (best half on the left), and a
/// thick bar per clique of methods that are not significantly different.
pub fn cd_diagram_svg(d: &CdDiagram) -> String {
    let m = d.methods.len();
    let order = d.order();

    let label_w = 170.0;
    let axis_x0 = label_w;
    let axis_x1 = 760.0 - label_w;
    let axis_y = 40.0;
    let rank_lo = 1.0;
    let rank_hi = m.max(2) as f64;
    let x_of = |rank: f64| axis_x0 + (rank - rank_lo) / (rank_hi - rank_lo) * (axis_x1 - axis_x0);

    // Stack overlapping clique bars on separate rows below the axis.
    let mut bar_rows: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut bars = Vec::new();
    for clique in &d.cliques {
        let lo = clique
            .iter()
            .map(|&i| d.avg_ranks[i])
            .fold(f64::INFINITY, f64::min);
        let hi = clique
            .iter()
            .map(|&i| d.avg_ranks[i])
            .fold(f64::NEG_INFINITY, f64::max);
        let row = bar_rows
            .iter()
            .position(|row| row.iter().all(|&(a, b)| hi < a - 0.05 || lo > b + 0.05))
            .unwrap_or_else(|| {
                bar_rows.push(Vec::new());
                bar_rows.len() - 1
            });
        bar_rows[row].push((lo, hi));
        bars.push((lo, hi, row));
    }
    let bar_area = bar_rows.len() as f64 * 10.0;

    let left_count = m.div_ceil(2);
    let label_rows = left_count.max(m - left_count);
    let label_y0 = axis_y + bar_area + 30.0;
    let height = label_y0 + label_rows as f64 * 18.0 + 10.0;

    let mut out = String::new();
    svg_open(&mut out, 760.0, height);

    let _ = write!(
        out,
        "<line x1=\"{axis_x0}\" y1=\"{axis_y}\" x2=\"{axis_x1}\" y2=\"{axis_y}\" stroke=\"black\"/>\n"
    );
    for r in 1..=m.max(2) {
        let x = x_of(r as f64);
        let _ = write!(
            out,
            "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{axis_y}\" stroke=\"black\"/>\n\
             <text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{r}</text>\n",
            axis_y - 5.0,
            axis_y - 10.0
        );
    }

    for (pos, &mi) in order.iter().enumerate() {
        let x = x_of(d.avg_ranks[mi]);
        let on_left = pos < left_count;
        let row = if on_left { pos } else { pos - left_count };
        let y = label_y0 + row as f64 * 18.0;
        let (x_end, anchor) = if on_left {
            (axis_x0 - 6.0, "end")
        } else {
            (axis_x1 + 6.0, "start")
        };
        let _ = write!(
            out,
            "<polyline points=\"{x},{axis_y} {x},{y} {x_end},{y}\" fill=\"none\" stroke=\"black\"/>\n\
             <text x=\"{x_end}\" y=\"{}\" text-anchor=\"{anchor}\">{} ({})</text>\n",
            y - 3.0,
            xml_escape(&d.methods[mi]),
            fmt_num((d.avg_ranks[mi] * 100.0).round() / 100.0)
        );
    }

    for (lo, hi, row) in bars {
        let y = axis_y + 8.0 + row as f64 * 10.0;
        let _ = write!(
            out,
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#d62728\" stroke-width=\"4\" stroke-linecap=\"round\"/>\n",
            x_of(lo),
            x_of(hi)
        );
    }

    out.push_str("</svg>\n");
    out
}

/// Labeled box plots on a shared vertical axis, raw samples scattered next
/// to each box.
pub fn boxplot_svg(groups: &[(String, BoxplotStats)], y_label: &str) -> String {
    let slot_w = 110.0;
    let margin_l = 60.0;
    let margin_r = 20.0;
    let margin_t = 20.0;
    let margin_b = 45.0;
    let plot_h = 260.0;
    let width = margin_l + groups.len().max(1) as f64 * slot_w + margin_r;
    let height = margin_t + plot_h + margin_b;

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, s) in groups {
        for &v in &s.samples {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = (hi - lo) * 0.06;
    let (lo, hi) = (lo - pad, hi + pad);
    let y_of = |v: f64| margin_t + (hi - v) / (hi - lo) * plot_h;

    let mut out = String::new();
    svg_open(&mut out, width, height);

    for t in nice_ticks(lo, hi, 6) {
        let y = y_of(t);
        let _ = write!(
            out,
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#cccccc\"/>\n\
             <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            margin_l,
            width - margin_r,
            margin_l - 6.0,
            y + 4.0,
            fmt_num(t)
        );
    }
    let _ = write!(
        out,
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{}</text>\n",
        margin_t + plot_h / 2.0,
        margin_t + plot_h / 2.0,
        xml_escape(y_label)
    );

    for (i, (label, s)) in groups.iter().enumerate() {
        let cx = margin_l + (i as f64 + 0.5) * slot_w;
        let box_w = 44.0;
        let color = PALETTE[i % PALETTE.len()];
        let (x0, x1) = (cx - box_w / 2.0, cx + box_w / 2.0);
        let (yq1, ymed, yq3) = (y_of(s.q1), y_of(s.median), y_of(s.q3));
        let (ywl, ywh) = (y_of(s.whisker_low), y_of(s.whisker_high));
        let _ = write!(
            out,
            "<line x1=\"{cx}\" y1=\"{ywl}\" x2=\"{cx}\" y2=\"{yq1}\" stroke=\"black\"/>\n\
             <line x1=\"{cx}\" y1=\"{yq3}\" x2=\"{cx}\" y2=\"{ywh}\" stroke=\"black\"/>\n\
             <line x1=\"{}\" y1=\"{ywl}\" x2=\"{}\" y2=\"{ywl}\" stroke=\"black\"/>\n\
             <line x1=\"{}\" y1=\"{ywh}\" x2=\"{}\" y2=\"{ywh}\" stroke=\"black\"/>\n\
             <rect x=\"{x0}\" y=\"{yq3}\" width=\"{box_w}\" height=\"{}\" fill=\"{color}\" fill-opacity=\"0.35\" stroke=\"black\"/>\n\
             <line x1=\"{x0}\" y1=\"{ymed}\" x2=\"{x1}\" y2=\"{ymed}\" stroke=\"black\" stroke-width=\"2\"/>\n",
            cx - 12.0,
            cx + 12.0,
            cx - 12.0,
            cx + 12.0,
            (yq1 - yq3).max(0.0),
        );
        // Deterministic horizontal spread for the sample scatter.
        for (k, &v) in s.samples.iter().enumerate() {
            let spread = if s.samples.len() > 1 {
                (k as f64 / (s.samples.len() - 1) as f64 - 0.5) * 28.0
            } else {
                0.0
            };
            let _ = write!(
                out,
                "<circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"{color}\"/>\n",
                cx + box_w / 2.0 + 10.0 + spread / 4.0,
                y_of(v)
            );
        }
        for &v in &s.outliers {
            let _ = write!(
                out,
                "<circle cx=\"{cx}\" cy=\"{}\" r=\"3\" fill=\"none\" stroke=\"black\"/>\n",
                y_of(v)
            );
        }
        let _ = write!(
            out,
            "<text x=\"{cx}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            margin_t + plot_h + 18.0,
            xml_escape(label)
        );
    }

    out.push_str("</svg>\n");
    out
}

/// Metric-over-epoch line plot with point markers and a legend.
pub fn line_plot_svg(series: &[LineSeries], x_label: &str, y_label: &str) -> String {
    let margin_l = 60.0;
    let margin_r = 20.0;
    let margin_t = 20.0;
    let margin_b = 45.0;
    let plot_w = 540.0;
    let plot_h = 280.0;
    let width = margin_l + plot_w + margin_r;
    let height = margin_t + plot_h + margin_b;

    let mut x_lo = f64::INFINITY;
    let mut x_hi = f64::NEG_INFINITY;
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            x_lo = x_lo.min(x);
            x_hi = x_hi.max(x);
            y_lo = y_lo.min(y);
            y_hi = y_hi.max(y);
        }
    }
    if !x_lo.is_finite() {
        x_lo = 0.0;
        x_hi = 1.0;
        y_lo = 0.0;
        y_hi = 1.0;
    }
    if x_hi - x_lo < 1e-12 {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    if y_hi - y_lo < 1e-12 {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    let y_pad = (y_hi - y_lo) * 0.06;
    let (y_lo, y_hi) = (y_lo - y_pad, y_hi + y_pad);
    let x_of = |v: f64| margin_l + (v - x_lo) / (x_hi - x_lo) * plot_w;
    let y_of = |v: f64| margin_t + (y_hi - v) / (y_hi - y_lo) * plot_h;

    let mut out = String::new();
    svg_open(&mut out, width, height);

    for t in nice_ticks(y_lo, y_hi, 6) {
        let y = y_of(t);
        let _ = write!(
            out,
            "<line x1=\"{margin_l}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#cccccc\"/>\n\
             <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            margin_l + plot_w,
            margin_l - 6.0,
            y + 4.0,
            fmt_num(t)
        );
    }
    for t in nice_ticks(x_lo, x_hi, 8) {
        let x = x_of(t);
        let _ = write!(
            out,
            "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"#cccccc\"/>\n\
             <text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            margin_t,
            margin_t + plot_h,
            margin_t + plot_h + 16.0,
            fmt_num(t)
        );
    }
    let _ = write!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{}</text>\n",
        margin_l + plot_w / 2.0,
        height - 10.0,
        xml_escape(x_label),
        margin_t + plot_h / 2.0,
        margin_t + plot_h / 2.0,
        xml_escape(y_label)
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if s.points.len() > 1 {
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{},{}", x_of(x), y_of(y)))
                .collect();
            let _ = write!(
                out,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                pts.join(" ")
            );
        }
        for &(x, y) in &s.points {
            let _ = write!(
                out,
                "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{color}\"/>\n",
                x_of(x),
                y_of(y)
            );
        }
        let ly = margin_t + 8.0 + i as f64 * 16.0;
        let _ = write!(
            out,
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"3\"/>\n\
             <text x=\"{}\" y=\"{}\">{}</text>\n",
            margin_l + plot_w - 130.0,
            margin_l + plot_w - 110.0,
            margin_l + plot_w - 104.0,
            ly + 4.0,
            xml_escape(&s.name)
        );
    }

    out.push_str("</svg>\n");
    out
}
