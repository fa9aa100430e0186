//! Pinhole cameras and the six-camera surround rig.
//!
//! World frame: x right, y forward, z up (meters), origin at the ego
//! center on the ground. Camera frame: x right, y down, z along the
//! optical axis.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::SceneError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// Minimum camera-frame depth for a point to count as visible.
pub const MIN_DEPTH: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub id: String,
    pub intrinsics: Intrinsics,
    /// World-to-camera rotation, row-major.
    pub rotation: [[f64; 3]; 3],
    /// World-to-camera translation.
    pub translation: [f64; 3],
    pub width: u32,
    pub height: u32,
}

/// Pixel position together with the camera-frame depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelDepth {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl CameraModel {
    /// Camera at `position` whose optical axis has BEV heading `yaw_deg`
    /// (counter-clockwise from +x) and is pitched down by `pitch_deg`.
    pub fn looking(
        id: &str,
        position: [f64; 3],
        yaw_deg: f64,
        pitch_deg: f64,
        hfov_deg: f64,
        width: u32,
        height: u32,
    ) -> Self {
        let (yaw, pitch) = (yaw_deg.to_radians(), pitch_deg.to_radians());
        let fwd = Vector3::new(
            pitch.cos() * yaw.cos(),
            pitch.cos() * yaw.sin(),
            -pitch.sin(),
        );
        let right = Vector3::new(yaw.sin(), -yaw.cos(), 0.0);
        let down = fwd.cross(&right);
        let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), fwd.transpose()]);
        let c = Vector3::from(position);
        let t = -(r * c);
        let fx = (width as f64 / 2.0) / (hfov_deg.to_radians() / 2.0).tan();
        Self {
            id: id.to_string(),
            intrinsics: Intrinsics {
                fx,
                fy: fx,
                cx: width as f64 / 2.0,
                cy: height as f64 / 2.0,
            },
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [t.x, t.y, t.z],
            width,
            height,
        }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        let r = &self.rotation;
        Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        )
    }

    pub fn translation_vector(&self) -> Vector3<f64> {
        Vector3::from(self.translation)
    }

    /// Camera center in world coordinates (-R^T T).
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation_matrix().transpose() * self.translation_vector())
    }

    /// Optical axis in world coordinates.
    pub fn axis(&self) -> Vector3<f64> {
        let r = &self.rotation;
        Vector3::new(r[2][0], r[2][1], r[2][2])
    }

    pub fn world_to_camera(&self, w: Vector3<f64>) -> Vector3<f64> {
        self.rotation_matrix() * w + self.translation_vector()
    }

    /// Projection without image-bounds clipping; `None` only for points
    /// closer than [`MIN_DEPTH`] in front of the camera.
    pub fn project_unclipped(&self, w: Vector3<f64>) -> Option<PixelDepth> {
        let c = self.world_to_camera(w);
        if c.z <= MIN_DEPTH {
            return None;
        }
        let k = &self.intrinsics;
        Some(PixelDepth {
            u: k.fx * c.x / c.z + k.cx,
            v: k.fy * c.y / c.z + k.cy,
            depth: c.z,
        })
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }

    /// World ray direction (unit) through pixel (u, v).
    pub fn pixel_ray(&self, u: f64, v: f64) -> Vector3<f64> {
        let k = &self.intrinsics;
        let dc = Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
        (self.rotation_matrix().transpose() * dc).normalize()
    }

    /// Intersection of the pixel ray with the ground plane z = 0.
    pub fn pixel_to_ground(&self, u: f64, v: f64) -> Option<Vector3<f64>> {
        let d = self.pixel_ray(u, v);
        let o = self.center();
        if d.z >= -1e-9 {
            return None;
        }
        let t = -o.z / d.z;
        Some(o + d * t)
    }

    /// Horizontal field of view in radians.
    pub fn hfov(&self) -> f64 {
        2.0 * (self.width as f64 / (2.0 * self.intrinsics.fx)).atan()
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let k = &self.intrinsics;
        let bad = |m: &str| {
            Err(SceneError::InvalidCamera {
                id: self.id.clone(),
                reason: m.to_string(),
            })
        };
        if !(k.fx > 0.0 && k.fy > 0.0) {
            return bad("focal lengths must be positive");
        }
        if !(k.cx >= 0.0 && k.cx < self.width as f64 && k.cy >= 0.0 && k.cy < self.height as f64) {
            return bad("principal point outside the image");
        }
        let r = self.rotation_matrix();
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if err > 1e-6 {
            return bad("rotation is not orthonormal");
        }
        Ok(())
    }
}

/// Pinhole projection of world point `w`; `None` when the point is behind
/// or too close to the camera or falls outside the image.
pub fn project_world_to_image(cam: &CameraModel, w: Vector3<f64>) -> Option<(f64, f64)> {
    let p = cam.project_unclipped(w)?;
    cam.contains(p.u, p.v).then_some((p.u, p.v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub cameras: Vec<CameraModel>,
    /// Camera centers in world coordinates, aligned with `cameras`.
    pub positions: Vec<[f64; 3]>,
}

impl CameraRig {
    pub fn new(cameras: Vec<CameraModel>) -> Result<Self, SceneError> {
        let positions = cameras.iter().map(|c| c.center().into()).collect();
        let rig = Self { cameras, positions };
        rig.validate()?;
        Ok(rig)
    }

    /// Six cameras in the usual surround layout with 5 degrees of down-pitch.
    pub fn surround(width: u32, height: u32) -> Self {
        let h = 1.6;
        let specs: [(&str, [f64; 3], f64, f64); 6] = [
            ("CAM_FRONT", [0.0, 1.5, h], 90.0, 70.0),
            ("CAM_FRONT_RIGHT", [0.5, 1.3, h], 35.0, 70.0),
            ("CAM_FRONT_LEFT", [-0.5, 1.3, h], 145.0, 70.0),
            ("CAM_BACK", [0.0, -1.0, h], 270.0, 110.0),
            ("CAM_BACK_LEFT", [-0.5, 0.0, h], 200.0, 70.0),
            ("CAM_BACK_RIGHT", [0.5, 0.0, h], 340.0, 70.0),
        ];
        let cams = specs
            .iter()
            .map(|(id, pos, yaw, fov)| {
                CameraModel::looking(id, *pos, *yaw, 5.0, *fov, width, height)
            })
            .collect();
        Self::new(cams).expect("default rig is valid")
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn position(&self, i: usize) -> Vector3<f64> {
        Vector3::from(self.positions[i])
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.cameras.iter().position(|c| c.id == id)
    }

    /// Camera whose view of `w` is most central (largest cosine between
    /// optical axis and viewing ray) among cameras that see it in-image.
    pub fn best_facing(&self, w: Vector3<f64>) -> Option<(usize, (f64, f64))> {
        let mut best: Option<(usize, (f64, f64), f64)> = None;
        for (i, cam) in self.cameras.iter().enumerate() {
            if let Some(uv) = project_world_to_image(cam, w) {
                let ray = (w - self.position(i)).normalize();
                let cos = ray.dot(&cam.axis());
                if best.is_none_or(|b| cos > b.2) {
                    best = Some((i, uv, cos));
                }
            }
        }
        best.map(|(i, uv, _)| (i, uv))
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        for c in &self.cameras {
            c.validate()?;
        }
        if self.positions.len() != self.cameras.len() {
            return Err(SceneError::InvalidRig(
                "positions do not match cameras".into(),
            ));
        }
        for (i, c) in self.cameras.iter().enumerate() {
            if self.cameras[..i].iter().any(|o| o.id == c.id) {
                return Err(SceneError::InvalidRig(format!(
                    "duplicate camera id {}",
                    c.id
                )));
            }
            let center = c.center();
            let stored = Vector3::from(self.positions[i]);
            if (center - stored).norm() > 1e-6 {
                return Err(SceneError::InvalidRig(format!(
                    "position of {} disagrees with extrinsics",
                    c.id
                )));
            }
        }
        // Every horizontal bearing must land inside some image.
        for deg in 0..360 {
            let a = (deg as f64).to_radians();
            let dir = Vector3::new(a.cos(), a.sin(), 0.0);
            let covered = self.cameras.iter().any(|c| {
                let d = c.rotation_matrix() * dir;
                d.z > 0.0 && {
                    let u = c.intrinsics.fx * d.x / d.z + c.intrinsics.cx;
                    u >= 0.0 && u < c.width as f64
                }
            });
            if !covered {
                return Err(SceneError::InvalidRig(format!(
                    "bearing {deg} deg not covered"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_cam() -> CameraModel {
        CameraModel {
            id: "test".into(),
            intrinsics: Intrinsics {
                fx: 100.0,
                fy: 100.0,
                cx: 50.0,
                cy: 50.0,
            },
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0, 0.0, 0.0],
            width: 100,
            height: 100,
        }
    }

    #[test]
    fn principal_point_on_axis() {
        let cam = identity_cam();
        let (u, v) = project_world_to_image(&cam, Vector3::new(0.0, 0.0, 10.0)).unwrap();
        assert!((u - 50.0).abs() < 1e-12 && (v - 50.0).abs() < 1e-12);
    }

    #[test]
    fn behind_camera_is_invisible() {
        assert!(project_world_to_image(&identity_cam(), Vector3::new(0.0, 0.0, -5.0)).is_none());
        assert!(project_world_to_image(&identity_cam(), Vector3::new(0.0, 0.0, 0.05)).is_none());
    }

    #[test]
    fn hand_computed_offset() {
        let cam = identity_cam();
        let (u, v) = project_world_to_image(&cam, Vector3::new(1.0, 0.5, 10.0)).unwrap();
        // K [R|T] W by hand: (100*0.1 + 50, 100*0.05 + 50)
        assert!((u - 60.0).abs() < 1e-6 && (v - 55.0).abs() < 1e-6);
    }

    #[test]
    fn surround_rig_is_valid_and_front_faces_forward() {
        let rig = CameraRig::surround(400, 300);
        rig.validate().unwrap();
        assert_eq!(rig.len(), 6);
        let (i, _) = rig.best_facing(Vector3::new(0.0, 20.0, 0.0)).unwrap();
        assert_eq!(rig.cameras[i].id, "CAM_FRONT");
        let (i, _) = rig.best_facing(Vector3::new(0.0, -20.0, 0.0)).unwrap();
        assert_eq!(rig.cameras[i].id, "CAM_BACK");
    }

    #[test]
    fn ground_backprojection_roundtrip() {
        let rig = CameraRig::surround(400, 300);
        let cam = &rig.cameras[0];
        let w = Vector3::new(2.0, 12.0, 0.0);
        let (u, v) = project_world_to_image(cam, w).unwrap();
        let g = cam.pixel_to_ground(u, v).unwrap();
        assert!((g - w).norm() < 1e-9);
    }

    #[test]
    fn invalid_camera_rejected() {
        let mut cam = identity_cam();
        cam.rotation[0][0] = 2.0;
        assert!(cam.validate().is_err());
        let mut cam = identity_cam();
        cam.intrinsics.cx = 100.0;
        assert!(cam.validate().is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut rig = CameraRig::surround(400, 300);
        rig.cameras[1].id = rig.cameras[0].id.clone();
        assert!(rig.validate().is_err());
    }
}
