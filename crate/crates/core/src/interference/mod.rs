//! Physical interference simulation: flashlight lens flare and
//! perspective-projected adversarial patches, `I' = T(I, theta)`.

mod flare;
mod patch;

pub use flare::{flare_alpha, flare_sigma, render_flare, FlashlightSpec};
pub use patch::{composite_patch, patch_pixel_to_world, PatchSpec};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::Image;
use crate::scene::CameraRig;

#[derive(Debug, Error, PartialEq)]
pub enum InterferenceError {
    #[error("patch pixel ({u}, {v}) outside {w}x{h}")]
    PixelOutOfRange { u: f64, v: f64, w: u32, h: u32 },
    #[error("invalid attack config: {0}")]
    InvalidConfig(String),
    #[error("{images} images for {cameras} cameras")]
    ImageCount { images: usize, cameras: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Blinding,
    Patch,
}

impl std::str::FromStr for AttackKind {
    type Err = InterferenceError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "blinding" => Ok(AttackKind::Blinding),
            "patch" => Ok(AttackKind::Patch),
            _ => Err(InterferenceError::InvalidConfig(format!(
                "unknown attack kind '{s}'"
            ))),
        }
    }
}

/// One attack vector deployed at one position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub position: [f64; 3],
    #[serde(default)]
    pub patch: Option<PatchSpec>,
    #[serde(default)]
    pub flashlight: Option<FlashlightSpec>,
}

impl AttackConfig {
    pub fn blinding(position: [f64; 3], spec: FlashlightSpec) -> Self {
        Self {
            kind: AttackKind::Blinding,
            position,
            patch: None,
            flashlight: Some(spec),
        }
    }

    pub fn patch(spec: PatchSpec) -> Self {
        Self {
            kind: AttackKind::Patch,
            position: spec.center,
            patch: Some(spec),
            flashlight: None,
        }
    }

    pub fn validate(&self) -> Result<(), InterferenceError> {
        match self.kind {
            AttackKind::Blinding => self
                .flashlight
                .as_ref()
                .ok_or_else(|| {
                    InterferenceError::InvalidConfig("blinding attack without flashlight".into())
                })?
                .validate(),
            AttackKind::Patch => {
                let p = self.patch.as_ref().ok_or_else(|| {
                    InterferenceError::InvalidConfig("patch attack without patch".into())
                })?;
                if p.center != self.position {
                    return Err(InterferenceError::InvalidConfig(
                        "patch center differs from position".into(),
                    ));
                }
                p.validate()
            }
        }
    }
}

/// Applies `cfg` to the surround images; a pure function of its inputs.
pub fn apply_attack(
    images: &[Image],
    rig: &CameraRig,
    cfg: &AttackConfig,
) -> Result<Vec<Image>, InterferenceError> {
    cfg.validate()?;
    if images.len() != rig.len() {
        return Err(InterferenceError::ImageCount {
            images: images.len(),
            cameras: rig.len(),
        });
    }
    match cfg.kind {
        AttackKind::Blinding => Ok(render_flare(
            images,
            rig,
            cfg.position,
            cfg.flashlight.as_ref().unwrap(),
        )),
        AttackKind::Patch => Ok(composite_patch(images, rig, cfg.patch.as_ref().unwrap())),
    }
}
