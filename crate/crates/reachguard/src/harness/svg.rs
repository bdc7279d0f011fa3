//! Minimal SVG emission: rectangles, polylines, circles and text.

use std::fmt::Write as _;

use crate::conformal::ScoreSummary;
use crate::kinematics::RobotModel;
use crate::planner::EpisodeLog;

use super::scenario::Scenario;

pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            body: String::new(),
        }
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, stroke: &str) -> &mut Self {
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}" stroke="{stroke}"/>"#
        );
        self
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, width: f64) -> &mut Self {
        let p: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#,
            p.join(" ")
        );
        self
    }

    pub fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str, opacity: f64) -> &mut Self {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r:.2}" fill="{fill}" fill-opacity="{opacity}"/>"#
        );
        self
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, text: &str) -> &mut Self {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="{size}" font-family="sans-serif">{}</text>"#,
            escape(text)
        );
        self
    }

    pub fn render(&self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n",
            w = self.width,
            h = self.height,
            body = self.body
        )
    }
}

/// Histogram of nonconformity scores with the calibrated buffer marked.
pub fn score_histogram(summary: &ScoreSummary, delta: f64, title: &str) -> String {
    let (w, h, pad) = (480.0, 300.0, 40.0);
    let mut svg = Svg::new(w, h);
    svg.text(pad, 20.0, 14.0, title);
    let peak = summary.histogram.iter().copied().max().unwrap_or(0).max(1) as f64;
    let bins = summary.histogram.len().max(1) as f64;
    let top = summary.histogram_edges.last().copied().unwrap_or(1.0);
    let bw = (w - 2.0 * pad) / bins;
    for (b, count) in summary.histogram.iter().enumerate() {
        let bh = (h - 2.0 * pad) * *count as f64 / peak;
        svg.rect(pad + b as f64 * bw, h - pad - bh, bw, bh, "#6b8fbf", "#2b4f7f");
    }
    svg.polyline(&[(pad, h - pad), (w - pad, h - pad)], "black", 1.0);
    if delta.is_finite() && top > 0.0 {
        let x = pad + (w - 2.0 * pad) * (delta / top).min(1.0);
        svg.polyline(&[(x, pad), (x, h - pad)], "#c0392b", 2.0);
        svg.text(x + 4.0, pad + 12.0, 11.0, &format!("delta = {delta:.4} m"));
    }
    svg.text(pad, h - 10.0, 11.0, &format!("0 .. {top:.4} m, median {:.4}", summary.median));
    svg.render()
}

/// Top-down (x, y) view of a scene with the executed arm poses.
pub fn scene_snapshot(model: &RobotModel, scene: &Scenario, log: Option<&EpisodeLog>) -> String {
    let size = 480.0;
    let extent = model.reach() * 1.1;
    let scale = size / (2.0 * extent);
    let map = |x: f64, y: f64| ((x + extent) * scale, (extent - y) * scale);
    let mut svg = Svg::new(size, size);
    for c in &scene.obstacle_centers {
        let (x, y) = map(c[0] - scene.half_width, c[1] + scene.half_width);
        let side = 2.0 * scene.half_width * scale;
        svg.rect(x, y, side, side, "#e0b0a0", "#803020");
    }
    let mut draw_arm = |q: &[f64], colour: &str, width: f64| {
        if let Ok(centers) = model.sphere_centers(q) {
            let pts: Vec<(f64, f64)> = centers.iter().map(|p| map(p[0], p[1])).collect();
            svg.polyline(&pts, colour, width);
        }
    };
    if let Some(log) = log {
        let stride = (log.samples.len() / 12).max(1);
        for s in log.samples.iter().step_by(stride) {
            draw_arm(&s.q, "#9aa7b8", 1.0);
        }
    }
    draw_arm(&scene.q_start, "#2e7d32", 3.0);
    draw_arm(&scene.q_goal, "#1565c0", 3.0);
    svg.text(8.0, 16.0, 12.0, &format!("scene {} (start green, goal blue)", scene.index));
    svg.render()
}
