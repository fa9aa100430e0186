use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::InterferenceError;
use crate::raster::Image;
use crate::scene::{CameraModel, CameraRig};

/// Planar patch: pattern of `pattern.width` x `pattern.height` pixels
/// spanning `width` x `height` meters around `center`, rotated by `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub center: [f64; 3],
    pub width: f64,
    pub height: f64,
    pub alpha: f64,
    pub pattern: Image,
    /// Row-major binary mask; all ones when absent.
    #[serde(default)]
    pub mask: Option<Vec<bool>>,
}

impl PatchSpec {
    pub fn new(center: [f64; 3], width: f64, height: f64, alpha: f64, pattern: Image) -> Self {
        Self {
            center,
            width,
            height,
            alpha,
            pattern,
            mask: None,
        }
    }

    pub fn validate(&self) -> Result<(), InterferenceError> {
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(InterferenceError::InvalidConfig(
                "patch size must be positive".into(),
            ));
        }
        if self.pattern.width == 0 || self.pattern.height == 0 {
            return Err(InterferenceError::InvalidConfig(
                "empty patch pattern".into(),
            ));
        }
        if let Some(m) = &self.mask {
            if m.len() != (self.pattern.width * self.pattern.height) as usize {
                return Err(InterferenceError::InvalidConfig(
                    "mask size differs from pattern".into(),
                ));
            }
        }
        Ok(())
    }

    /// Patch-plane axes in world coordinates: pattern u direction, pattern v
    /// direction and the plane normal.
    fn axes(&self) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let (s, c) = self.alpha.sin_cos();
        let eu = Vector3::new(c, 0.0, s);
        let ev = Vector3::new(0.0, 1.0, 0.0);
        (eu, ev, eu.cross(&ev))
    }

    fn mask_at(&self, x: u32, y: u32) -> bool {
        self.mask
            .as_ref()
            .is_none_or(|m| m[(y * self.pattern.width + x) as usize])
    }
}

/// Maps patch pixel coordinates to the world:
/// `[R(alpha) | p] * [[W/w, 0, -W/2], [0, H/h, -H/2], [0, 0, 0], [0, 0, 1]] * [u, v, 1]`.
pub fn patch_pixel_to_world(
    spec: &PatchSpec,
    u_p: f64,
    v_p: f64,
) -> Result<Vector3<f64>, InterferenceError> {
    let (w, h) = (spec.pattern.width, spec.pattern.height);
    if !(u_p >= 0.0 && v_p >= 0.0 && u_p <= w as f64 && v_p <= h as f64) {
        return Err(InterferenceError::PixelOutOfRange {
            u: u_p,
            v: v_p,
            w,
            h,
        });
    }
    Ok(unchecked_pixel_to_world(spec, u_p, v_p))
}

fn unchecked_pixel_to_world(spec: &PatchSpec, u_p: f64, v_p: f64) -> Vector3<f64> {
    let a = spec.width / spec.pattern.width as f64 * u_p - spec.width / 2.0;
    let b = spec.height / spec.pattern.height as f64 * v_p - spec.height / 2.0;
    let (eu, ev, _) = spec.axes();
    Vector3::from(spec.center) + eu * a + ev * b
}

fn shoelace(q: &[(f64, f64)]) -> f64 {
    let n = q.len();
    (0..n)
        .map(|i| q[i].0 * q[(i + 1) % n].1 - q[(i + 1) % n].0 * q[i].1)
        .sum::<f64>()
        .abs()
        / 2.0
}

/// Composites the patch into every camera that sees it: each image pixel
/// is inverse-mapped onto the patch plane and replaced by the pattern
/// wherever the mask is set.
pub fn composite_patch(images: &[Image], rig: &CameraRig, spec: &PatchSpec) -> Vec<Image> {
    images
        .par_iter()
        .zip(rig.cameras.par_iter())
        .map(|(img, cam)| {
            let mut out = img.clone();
            composite_one(&mut out, cam, spec);
            out
        })
        .collect()
}

fn composite_one(img: &mut Image, cam: &CameraModel, spec: &PatchSpec) {
    let (pw, ph) = (spec.pattern.width as f64, spec.pattern.height as f64);
    let corners = [(0.0, 0.0), (pw, 0.0), (pw, ph), (0.0, ph)];
    let projected: Vec<Option<(f64, f64)>> = corners
        .iter()
        .map(|&(u, v)| {
            cam.project_unclipped(unchecked_pixel_to_world(spec, u, v))
                .map(|p| (p.u, p.v))
        })
        .collect();
    let visible: Vec<(f64, f64)> = projected.iter().flatten().copied().collect();
    if visible.len() < 3 {
        return;
    }
    let (mut x0, mut x1, mut y0, mut y1) = (0.0, img.width as f64, 0.0, img.height as f64);
    if visible.len() == 4 {
        if shoelace(&visible) < 1.0 {
            log::debug!("patch quad degenerate in {}", cam.id);
            return;
        }
        x0 = visible
            .iter()
            .map(|p| p.0)
            .fold(f64::INFINITY, f64::min)
            .floor()
            .max(0.0);
        x1 = visible
            .iter()
            .map(|p| p.0)
            .fold(f64::NEG_INFINITY, f64::max)
            .ceil()
            .min(img.width as f64);
        y0 = visible
            .iter()
            .map(|p| p.1)
            .fold(f64::INFINITY, f64::min)
            .floor()
            .max(0.0);
        y1 = visible
            .iter()
            .map(|p| p.1)
            .fold(f64::NEG_INFINITY, f64::max)
            .ceil()
            .min(img.height as f64);
        if x0 >= x1 || y0 >= y1 {
            return;
        }
    }
    let (eu, ev, n) = spec.axes();
    let pc = Vector3::from(spec.center);
    let o = cam.center();
    let denom_o = n.dot(&(pc - o));
    for y in y0 as u32..y1 as u32 {
        for x in x0 as u32..x1 as u32 {
            let d = cam.pixel_ray(x as f64 + 0.5, y as f64 + 0.5);
            let nd = n.dot(&d);
            if nd.abs() < 1e-12 {
                continue;
            }
            let t = denom_o / nd;
            if t <= 0.0 {
                continue;
            }
            let q = o + d * t - pc;
            let up = (q.dot(&eu) + spec.width / 2.0) * pw / spec.width;
            let vp = (q.dot(&ev) + spec.height / 2.0) * ph / spec.height;
            if !(up >= 0.0 && vp >= 0.0 && up < pw && vp < ph) {
                continue;
            }
            if !spec.mask_at(up as u32, vp as u32) {
                continue;
            }
            let mut c = spec.pattern.sample_bilinear(up, vp);
            for ch in &mut c {
                *ch = ch.clamp(0.0, 1.0);
            }
            img.set(x, y, c);
        }
    }
}
