use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::InterferenceError;
use crate::raster::{Image, Rgb};
use crate::scene::CameraRig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlashlightSpec {
    pub lumens: f64,
    /// Full beam angle in degrees.
    pub beam_angle: f64,
    pub color: Rgb,
    /// Distance (m) at and below which the peak alpha saturates at 1.
    pub reference_distance: f64,
    /// Base blur radius in pixels.
    pub r0: f64,
    /// Luminance floor of the logarithmic radius falloff.
    pub l_min: f64,
    /// Ratio of the whole-image veiling glare alpha to the peak alpha.
    pub veil_ratio: f64,
}

impl Default for FlashlightSpec {
    fn default() -> Self {
        Self {
            lumens: 3000.0,
            beam_angle: 40.0,
            color: [1.0, 0.96, 0.86],
            reference_distance: 20.0,
            r0: 13.5,
            l_min: 1.0,
            veil_ratio: 0.125,
        }
    }
}

impl FlashlightSpec {
    pub fn validate(&self) -> Result<(), InterferenceError> {
        let bad = |m: &str| Err(InterferenceError::InvalidConfig(m.to_string()));
        if !(self.lumens > 0.0) {
            return bad("lumens must be positive");
        }
        if !(self.beam_angle > 0.0 && self.beam_angle <= 180.0) {
            return bad("beam_angle must lie in (0, 180]");
        }
        if !(self.reference_distance > 0.0 && self.r0 > 0.0 && self.l_min > 0.0) {
            return bad("flare constants must be positive");
        }
        if !(0.0..=1.0).contains(&self.veil_ratio)
            || self.color.iter().any(|c| !(0.0..=1.0).contains(c))
        {
            return bad("veil_ratio and color must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Peak alpha A = min(1, (reference_distance / d)^2).
pub fn flare_alpha(spec: &FlashlightSpec, d: f64) -> f64 {
    (spec.reference_distance / d).powi(2).min(1.0)
}

/// Blur sigma r = r0 * max(1, ln(L0 / (d^2 L_min))) in pixels.
pub fn flare_sigma(spec: &FlashlightSpec, d: f64) -> f64 {
    spec.r0 * (spec.lumens / (d * d * spec.l_min)).ln().max(1.0)
}

/// Composites a Gaussian flare blob plus veiling glare into every camera
/// that faces the light within its beam angle plus half field of view.
pub fn render_flare(
    images: &[Image],
    rig: &CameraRig,
    p: [f64; 3],
    spec: &FlashlightSpec,
) -> Vec<Image> {
    let pw = Vector3::from(p);
    images
        .par_iter()
        .zip(rig.cameras.par_iter())
        .enumerate()
        .map(|(i, (img, cam))| {
            let to_p = pw - rig.position(i);
            let d = to_p.norm();
            if d < 1e-9 {
                return img.clone();
            }
            let angle = (to_p / d).dot(&cam.axis()).clamp(-1.0, 1.0).acos();
            if angle > spec.beam_angle.to_radians() / 2.0 + cam.hfov() / 2.0 {
                return img.clone();
            }
            let Some(px) = cam.project_unclipped(pw) else {
                return img.clone();
            };
            let a = flare_alpha(spec, d) as f32;
            let sigma = flare_sigma(spec, d);
            let inv = 1.0 / (2.0 * sigma * sigma);
            let veil = a * spec.veil_ratio as f32;
            let mut out = img.clone();
            for v in 0..img.height {
                let dy = v as f64 + 0.5 - px.v;
                for u in 0..img.width {
                    let dx = u as f64 + 0.5 - px.u;
                    let blob = a * (-(dx * dx + dy * dy) * inv).exp() as f32;
                    let mut c = img.get(u, v);
                    for k in 0..3 {
                        let col = spec.color[k];
                        c[k] = (1.0 - veil) * c[k] + veil * col;
                        c[k] = ((1.0 - blob) * c[k] + blob * col).clamp(0.0, 1.0);
                    }
                    out.set(u, v, c);
                }
            }
            out
        })
        .collect()
}
