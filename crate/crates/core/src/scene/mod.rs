//! Camera rigs, synthetic road scenes, surround-view rasterization and the
//! on-disk scene format.

mod camera;
mod generate;
mod io;
mod render;

pub use camera::{
    project_world_to_image, CameraModel, CameraRig, Intrinsics, PixelDepth, MIN_DEPTH,
};
pub use generate::{generate_layout, generate_scene, generate_suite, SceneSpec, SuiteSpec};
pub use io::{load_scene, save_scene, sha256_hex, MANIFEST_FILE, SCHEMA_VERSION};
pub use render::{
    draw_ground_polyline, draw_segment, render_camera, render_surround_views, RenderConfig,
    ASPHALT, CURB, SKY,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Polyline2D, Vec2};
use crate::raster::Image;

/// Frame-validity filter: both designated boundaries must be this long.
pub const MIN_BOUNDARY_LENGTH: f64 = 10.0;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid camera {id}: {reason}")]
    InvalidCamera { id: String, reason: String },
    #[error("invalid rig: {0}")]
    InvalidRig(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("unsupported scene spec: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("manifest {path}: {source}")]
    Manifest {
        path: String,
        source: serde_json::Error,
    },
    #[error("unsupported schema_version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("image for camera {camera} failed to decode: {reason}")]
    Decode { camera: String, reason: String },
    #[error("checksum mismatch for camera {camera} image")]
    Checksum { camera: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoadKind {
    Straight,
    Fork,
    Merge,
    Split,
    Intersection,
}

impl RoadKind {
    pub const ALL: [RoadKind; 5] = [
        RoadKind::Straight,
        RoadKind::Fork,
        RoadKind::Merge,
        RoadKind::Split,
        RoadKind::Intersection,
    ];

    /// Whether the kind has exactly one diverging boundary.
    pub fn is_diverging(self) -> bool {
        matches!(self, RoadKind::Fork | RoadKind::Merge | RoadKind::Split)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RoadKind::Straight => "straight",
            RoadKind::Fork => "fork",
            RoadKind::Merge => "merge",
            RoadKind::Split => "split",
            RoadKind::Intersection => "intersection",
        }
    }
}

impl std::str::FromStr for RoadKind {
    type Err = SceneError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RoadKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| SceneError::Config(format!("unknown road kind '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    None,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
            Side::None => Side::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AsymLabel {
    Symmetric,
    Asymmetric,
}

/// Planar pose: position in meters, heading in radians counter-clockwise from +x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// Rectangular BEV perception range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BevRange {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for BevRange {
    fn default() -> Self {
        Self {
            x_min: -15.0,
            x_max: 15.0,
            y_min: -15.0,
            y_max: 30.0,
        }
    }
}

impl BevRange {
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }
}

/// Generator ground truth recorded for test oracles and planning goals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub asym_label: AsymLabel,
    pub anchor_xy: Option<Vec2>,
    #[serde(default = "side_none")]
    pub diverging_side: Side,
    /// One goal pose per drivable branch terminus.
    #[serde(default)]
    pub goals: Vec<Pose2>,
}

fn side_none() -> Side {
    Side::None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFrame {
    pub scene_id: String,
    pub road_kind: RoadKind,
    pub gt_map: Vec<Polyline2D>,
    pub left_boundary: Polyline2D,
    pub right_boundary: Polyline2D,
    /// Centerline of the lane adjacent to the diverging (or right) boundary.
    pub centerline: Polyline2D,
    pub rig: CameraRig,
    /// Per-camera rasters aligned with `rig.cameras`; empty before rendering.
    #[serde(skip)]
    pub images: Vec<Image>,
    pub ego_pose: Pose2,
    pub bev_range: BevRange,
    pub truth: Option<SceneTruth>,
}

impl SceneFrame {
    pub fn validate(&self) -> Result<(), SceneError> {
        for (name, b) in [
            ("left", &self.left_boundary),
            ("right", &self.right_boundary),
        ] {
            let len = b.length();
            if len < MIN_BOUNDARY_LENGTH {
                return Err(SceneError::InvalidScene(format!(
                    "{name} boundary is {len:.2} m, shorter than {MIN_BOUNDARY_LENGTH} m"
                )));
            }
        }
        self.rig.validate()?;
        if !self.images.is_empty() {
            if self.images.len() != self.rig.len() {
                return Err(SceneError::InvalidScene(
                    "image count does not match rig".into(),
                ));
            }
            for (img, cam) in self.images.iter().zip(&self.rig.cameras) {
                if img.width != cam.width || img.height != cam.height {
                    return Err(SceneError::InvalidScene(format!(
                        "image size mismatch for {}",
                        cam.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Diverging / reference boundaries according to `side`.
    pub fn boundaries_by_side(&self, side: Side) -> Option<(&Polyline2D, &Polyline2D)> {
        match side {
            Side::Left => Some((&self.left_boundary, &self.right_boundary)),
            Side::Right => Some((&self.right_boundary, &self.left_boundary)),
            Side::None => None,
        }
    }

    /// Goals for planning: the recorded branch termini, or a single goal
    /// between the far ends of the designated boundaries.
    pub fn goals(&self) -> Vec<Pose2> {
        if let Some(t) = &self.truth {
            if !t.goals.is_empty() {
                return t.goals.clone();
            }
        }
        let far = (self.left_boundary.last() + self.right_boundary.last()) * 0.5;
        let near = (self.left_boundary.first() + self.right_boundary.first()) * 0.5;
        let dir = far - near;
        let heading = dir.y.atan2(dir.x);
        let back = far - dir.normalized() * 3.0;
        vec![Pose2::new(back.x, back.y, heading)]
    }
}
