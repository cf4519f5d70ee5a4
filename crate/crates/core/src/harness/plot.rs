use std::fmt::Write as _;

use crate::mazeenv::{Cell, MazeMap, Pose, WALL_PALETTE};

use super::metrics::MetricsSeries;

pub const PROPOSED_COLOR: &str = "#1f5fd6";
pub const BENCHMARK_COLOR: &str = "#2e9e44";
const SERIES_COLORS: [&str; 6] = ["#1f5fd6", "#2e9e44", "#d62728", "#9467bd", "#ff7f0e", "#17becf"];

const PANEL_W: f64 = 560.0;
const PANEL_H: f64 = 260.0;
const MARGIN: f64 = 48.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Axes {
    x0: f64,
    y0: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Axes {
    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        let fx = if self.x_max > 0.0 { x / self.x_max } else { 0.0 };
        let span = self.y_max - self.y_min;
        let fy = if span > 0.0 { (y - self.y_min) / span } else { 0.5 };
        (self.x0 + fx * PANEL_W, self.y0 + PANEL_H - fy * PANEL_H)
    }

    fn frame(&self, svg: &mut String, title: &str) {
        let _ = writeln!(
            svg,
            r##"<rect x="{:.1}" y="{:.1}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#444"/>"##,
            self.x0, self.y0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="13" font-family="sans-serif">{}</text>"#,
            self.x0,
            self.y0 - 8.0,
            escape(title)
        );
        for (v, anchor_y) in [(self.y_min, self.y0 + PANEL_H), (self.y_max, self.y0 + 10.0)] {
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end" font-family="sans-serif">{}</text>"#,
                self.x0 - 4.0,
                anchor_y,
                fmt_num(v)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end" font-family="sans-serif">{} steps</text>"#,
            self.x0 + PANEL_W,
            self.y0 + PANEL_H + 14.0,
            fmt_num(self.x_max)
        );
    }
}

fn fmt_num(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn polyline(svg: &mut String, pts: &[(f64, f64)], color: &str, label: &str) {
    let mut p = String::new();
    for (i, (x, y)) in pts.iter().enumerate() {
        if i > 0 {
            p.push(' ');
        }
        let _ = write!(p, "{x:.2},{y:.2}");
    }
    let _ = writeln!(
        svg,
        r#"<polyline points="{p}" fill="none" stroke="{color}" stroke-width="1.5"><title>{}</title></polyline>"#,
        escape(label)
    );
}

/// Two stacked panels, average reward per 50-episode block and trailing-100
/// success rate, both against cumulative env steps. Each series contributes one
/// polyline to each panel.
pub fn learning_curves_svg(series: &[(String, &MetricsSeries)]) -> String {
    let x_max = series
        .iter()
        .filter_map(|(_, s)| s.records.last().map(|r| r.cumulative_steps as f64))
        .fold(0.0, f64::max);
    let rewards: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|(_, s)| {
            s.records
                .iter()
                .zip(s.avg_rewards())
                .filter_map(|(r, a)| a.map(|a| (r.cumulative_steps as f64, a)))
                .collect()
        })
        .collect();
    let rates: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|(_, s)| {
            s.records
                .iter()
                .zip(s.success_rates())
                .map(|(r, v)| (r.cumulative_steps as f64, v))
                .collect()
        })
        .collect();
    let (mut lo, mut hi) = rewards
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, y)| (lo.min(y), hi.max(y)));
    if !lo.is_finite() {
        (lo, hi) = (-1.0, 1.0);
    }
    let width = PANEL_W + 2.0 * MARGIN + 140.0;
    let height = 2.0 * PANEL_H + 3.0 * MARGIN;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let top = Axes {
        x0: MARGIN,
        y0: MARGIN,
        x_max,
        y_min: lo,
        y_max: hi,
    };
    let bottom = Axes {
        x0: MARGIN,
        y0: 2.0 * MARGIN + PANEL_H,
        x_max,
        y_min: 0.0,
        y_max: 1.0,
    };
    top.frame(&mut svg, "average reward (50-episode blocks)");
    bottom.frame(&mut svg, "success rate (last 100 episodes)");
    for (i, (label, _)) in series.iter().enumerate() {
        let color = SERIES_COLORS[i % SERIES_COLORS.len()];
        let pts: Vec<_> = rewards[i].iter().map(|&(x, y)| top.px(x, y)).collect();
        polyline(&mut svg, &pts, color, &format!("{label} reward"));
        let pts: Vec<_> = rates[i].iter().map(|&(x, y)| bottom.px(x, y)).collect();
        polyline(&mut svg, &pts, color, &format!("{label} success"));
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" fill="{color}" font-family="sans-serif">{}</text>"#,
            MARGIN + PANEL_W + 12.0,
            MARGIN + 16.0 * (i as f64 + 1.0),
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Which side of the comparison a trajectory belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryKind {
    Proposed,
    Benchmark,
}

/// Top-down map with walls in their palette colors, the goal, and one polyline
/// per trajectory (proposed in blue, benchmark in green).
pub fn trajectory_svg(map: &MazeMap, trajectories: &[(TrajectoryKind, &[Pose])]) -> String {
    let scale = 40.0 / map.cell_size;
    let (w, h) = map.extent();
    let (sw, sh) = (w * scale, h * scale);
    // World y grows with the row index, which is also SVG's downward axis.
    let to_px = |x: f64, y: f64| (x * scale, y * scale);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{sw:.0}" height="{sh:.0}" viewBox="0 0 {sw:.1} {sh:.1}">"#
    );
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"#f4f1ea\"/>\n");
    let cs = map.cell_size * scale;
    for row in 0..map.height() {
        for col in 0..map.width() {
            if let Cell::Wall(id) = map.cell(col as i64, row as i64) {
                let [r, g, b] = WALL_PALETTE[id as usize % WALL_PALETTE.len()];
                let _ = writeln!(
                    svg,
                    r#"<rect x="{:.1}" y="{:.1}" width="{cs:.1}" height="{cs:.1}" fill="rgb({r},{g},{b})"/>"#,
                    col as f64 * cs,
                    row as f64 * cs
                );
            }
        }
    }
    let (gx, gy) = map.goal_point();
    let (gx, gy) = to_px(gx, gy);
    let _ = writeln!(
        svg,
        r##"<circle cx="{gx:.1}" cy="{gy:.1}" r="{:.1}" fill="#e8b400" stroke="#000"><title>goal</title></circle>"##,
        cs * 0.3
    );
    for (kind, traj) in trajectories {
        let color = match kind {
            TrajectoryKind::Proposed => PROPOSED_COLOR,
            TrajectoryKind::Benchmark => BENCHMARK_COLOR,
        };
        let pts: Vec<_> = traj.iter().map(|p| to_px(p.x, p.y)).collect();
        let label = match kind {
            TrajectoryKind::Proposed => "proposed",
            TrajectoryKind::Benchmark => "benchmark",
        };
        polyline(&mut svg, &pts, color, label);
        if let Some(&(x, y)) = pts.first() {
            let _ = writeln!(svg, r#"<circle cx="{x:.1}" cy="{y:.1}" r="3" fill="{color}"/>"#);
        }
    }
    svg.push_str("</svg>\n");
    svg
}
