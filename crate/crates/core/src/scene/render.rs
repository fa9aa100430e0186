//! Painter's-algorithm rasterization of the ground-plane map into each camera.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BevRange, CameraModel, SceneFrame, MIN_DEPTH};
use crate::geometry::{resample_by_spacing, ClassTag, Polyline2D, Vec2};
use crate::raster::{Image, Rgb};

pub const SKY: Rgb = [0.55, 0.7, 0.9];
pub const ASPHALT: Rgb = [0.35, 0.35, 0.35];
pub const CURB: Rgb = [0.92, 0.92, 0.92];
pub const DIVIDER: Rgb = [0.86, 0.84, 0.55];
pub const CROSSING: Rgb = [0.88, 0.88, 0.88];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub width: u32,
    pub height: u32,
    /// Stroke radius of boundaries in pixels.
    pub boundary_px: f64,
    pub divider_px: f64,
    /// Ground spacing used to densify polylines before projection (m).
    pub spacing: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            width: 400,
            height: 300,
            boundary_px: 1.5,
            divider_px: 1.0,
            spacing: 0.2,
        }
    }
}

/// Renders every camera of `frame.rig` and stores the quantized images.
pub fn render_surround_views(mut frame: SceneFrame, cfg: &RenderConfig) -> SceneFrame {
    let drawn: Vec<Polyline2D> = frame
        .gt_map
        .iter()
        .map(|p| extend_at_border(p, &frame.bev_range))
        .collect();
    let images = frame
        .rig
        .cameras
        .par_iter()
        .map(|cam| render_camera(cam, &drawn, cfg))
        .collect();
    frame.images = images;
    frame
}

/// The road goes on past the mapped area: open polylines ending on the
/// range border are drawn 10 m further along their end direction.
fn extend_at_border(p: &Polyline2D, range: &BevRange) -> Polyline2D {
    if p.class() == ClassTag::PedCrossing {
        return p.clone();
    }
    let on_border = |q: Vec2| {
        let eps = 1e-6;
        (q.x - range.x_min).abs() < eps
            || (q.x - range.x_max).abs() < eps
            || (q.y - range.y_min).abs() < eps
            || (q.y - range.y_max).abs() < eps
    };
    let pts = p.points();
    let n = pts.len();
    let mut out = pts.to_vec();
    if on_border(pts[0]) {
        out.insert(0, pts[0] + (pts[0] - pts[1]).normalized() * 10.0);
    }
    if on_border(pts[n - 1]) {
        out.push(pts[n - 1] + (pts[n - 1] - pts[n - 2]).normalized() * 10.0);
    }
    Polyline2D::new_dedup(out, p.class()).unwrap_or_else(|_| p.clone())
}

pub fn render_camera(cam: &CameraModel, map: &[Polyline2D], cfg: &RenderConfig) -> Image {
    let mut img = Image::filled(cam.width, cam.height, SKY);
    for v in 0..cam.height {
        for u in 0..cam.width {
            if cam
                .pixel_to_ground(u as f64 + 0.5, v as f64 + 0.5)
                .is_some()
            {
                img.set(u, v, ASPHALT);
            }
        }
    }
    let order = [ClassTag::PedCrossing, ClassTag::Divider, ClassTag::Boundary];
    for class in order {
        for p in map.iter().filter(|p| p.class() == class) {
            let (color, radius) = match class {
                ClassTag::Boundary => (CURB, cfg.boundary_px),
                ClassTag::Divider => (DIVIDER, cfg.divider_px),
                ClassTag::PedCrossing => (CROSSING, cfg.divider_px),
            };
            draw_ground_polyline(&mut img, cam, p, cfg.spacing, radius, color);
            if class == ClassTag::PedCrossing {
                for stripe in crossing_stripes(p) {
                    draw_ground_polyline(&mut img, cam, &stripe, cfg.spacing, radius * 1.5, color);
                }
            }
        }
    }
    img.quantize();
    img
}

/// Longitudinal stripes filling a rectangular crossing ring.
fn crossing_stripes(ring: &Polyline2D) -> Vec<Polyline2D> {
    let pts = ring.points();
    if pts.len() < 4 {
        return Vec::new();
    }
    let (a, b, d) = (pts[0], pts[1], pts[3]);
    let across = b - a;
    let n = (across.norm() / 0.8).floor() as usize;
    (1..n)
        .filter_map(|i| {
            let t = i as f64 / n as f64;
            let s = a.lerp(b, t);
            Polyline2D::new(vec![s, s + (d - a)], ClassTag::PedCrossing).ok()
        })
        .collect()
}

/// Draws a ground polyline as a stroke of constant pixel radius.
pub fn draw_ground_polyline(
    img: &mut Image,
    cam: &CameraModel,
    p: &Polyline2D,
    spacing: f64,
    radius: f64,
    color: Rgb,
) {
    let dense = match resample_by_spacing(p, spacing) {
        Ok(d) => d,
        Err(_) => p.clone(),
    };
    let px: Vec<Option<(f64, f64)>> = dense
        .points()
        .iter()
        .map(|q| {
            let c = cam.world_to_camera(Vector3::new(q.x, q.y, 0.0));
            (c.z > MIN_DEPTH).then(|| {
                let k = &cam.intrinsics;
                (k.fx * c.x / c.z + k.cx, k.fy * c.y / c.z + k.cy)
            })
        })
        .collect();
    for w in px.windows(2) {
        if let (Some(a), Some(b)) = (w[0], w[1]) {
            draw_segment(img, a, b, radius, color);
        }
    }
}

/// Fills pixels whose centers lie within `radius` of segment a-b.
pub fn draw_segment(img: &mut Image, a: (f64, f64), b: (f64, f64), radius: f64, color: Rgb) {
    let (w, h) = (img.width as f64, img.height as f64);
    let x0 = (a.0.min(b.0) - radius).floor().max(0.0);
    let x1 = (a.0.max(b.0) + radius).ceil().min(w - 1.0);
    let y0 = (a.1.min(b.1) - radius).floor().max(0.0);
    let y1 = (a.1.max(b.1) + radius).ceil().min(h - 1.0);
    if x0 > x1 || y0 > y1 {
        return;
    }
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let r2 = radius * radius;
    for y in y0 as u32..=y1 as u32 {
        for x in x0 as u32..=x1 as u32 {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let t = if len2 > 0.0 {
                (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (ex, ey) = (a.0 + t * dx - px, a.1 + t * dy - py);
            if ex * ex + ey * ey <= r2 {
                img.set(x, y, color);
            }
        }
    }
}
