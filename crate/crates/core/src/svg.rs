//! Minimal standalone SVG rendering of boxes and head markers.
//!
//! Stroke styles:
//! - groundtruth / target: solid green
//! - prediction / final fit: dashed red
//! - initial guess: dotted grey
//!
//! Heads are filled circles in the box's stroke color.

use std::fmt::Write;

use crate::geometry::{obb_to_quad, ImageSize, KeypointBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxStyle {
    GroundTruth,
    Prediction,
    Initial,
}

impl BoxStyle {
    fn class(self) -> &'static str {
        match self {
            BoxStyle::GroundTruth => "gt",
            BoxStyle::Prediction => "pred",
            BoxStyle::Initial => "init",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SvgScene {
    image: ImageSize,
    items: Vec<(KeypointBox, BoxStyle)>,
}

impl SvgScene {
    pub fn new(image: ImageSize) -> Self {
        Self { image, items: Vec::new() }
    }

    pub fn push(&mut self, b: KeypointBox, style: BoxStyle) {
        self.items.push((b, style));
    }

    pub fn render(&self) -> String {
        let (w, h) = (self.image.width_px, self.image.height_px);
        let marker = (w.max(h) as f64 / 200.0).max(1.0);
        let mut out = String::new();
        let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ =
            writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
        let _ = writeln!(
            out,
            "<style>.gt{{stroke:#1a9641;fill:#1a9641}}.pred{{stroke:#d7191c;fill:#d7191c;stroke-dasharray:6 3}}\
             .init{{stroke:#777777;fill:#777777;stroke-dasharray:2 3}}polygon{{fill:none;stroke-width:1.5}}</style>"
        );
        let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        for (b, style) in &self.items {
            let class = style.class();
            let points = match b.to_obb() {
                Ok(o) => obb_to_quad(&o)
                    .corners()
                    .iter()
                    .map(|p| format!("{:.3},{:.3}", p.x, p.y))
                    .collect::<Vec<_>>()
                    .join(" "),
                Err(_) => continue,
            };
            let _ = writeln!(out, r#"<g class="{class}">"#);
            let _ = writeln!(out, r#"  <polygon points="{points}"/>"#);
            let _ = writeln!(
                out,
                r#"  <line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke-width="1"/>"#,
                b.center.x, b.center.y, b.head.x, b.head.y
            );
            let _ = writeln!(out, r#"  <circle cx="{:.3}" cy="{:.3}" r="{marker:.2}"/>"#, b.head.x, b.head.y);
            let _ = writeln!(out, "</g>");
        }
        out.push_str("</svg>\n");
        out
    }
}
