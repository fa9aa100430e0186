use std::fs;

use asymmap::raster::Image;
use asymmap::scene::*;
use nalgebra::{Matrix3x4, Vector3, Vector4};
use proptest::prelude::*;

fn small_spec(kind: RoadKind, seed: u64) -> SceneSpec {
    let mut s = SceneSpec::new(kind, seed);
    s.render = RenderConfig {
        width: 96,
        height: 72,
        ..Default::default()
    };
    s
}

#[test]
fn io_round_trip_preserves_frame_and_pixels() {
    let frame = generate_scene(&small_spec(RoadKind::Fork, 3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_scene(&frame, dir.path()).unwrap();
    let back = load_scene(dir.path()).unwrap();
    assert_eq!(back.images.len(), frame.images.len());
    for (a, b) in back.images.iter().zip(&frame.images) {
        assert_eq!(a.max_abs_diff(b), 0.0);
    }
    assert_eq!(back, frame);
}

#[test]
fn wrong_schema_version_is_rejected() {
    let frame = generate_scene(&small_spec(RoadKind::Straight, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_scene(&frame, dir.path()).unwrap();
    let path = dir.path().join(MANIFEST_FILE);
    let mut v: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    v["schema_version"] = serde_json::json!(SCHEMA_VERSION + 1);
    fs::write(&path, serde_json::to_vec(&v).unwrap()).unwrap();
    match load_scene(dir.path()) {
        Err(SceneError::SchemaVersion { found, expected }) => {
            assert_eq!(found, SCHEMA_VERSION + 1);
            assert_eq!(expected, SCHEMA_VERSION);
        }
        other => panic!("expected schema error, got {other:?}"),
    }
}

#[test]
fn truncated_image_names_the_camera() {
    let frame = generate_scene(&small_spec(RoadKind::Straight, 2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_scene(&frame, dir.path()).unwrap();
    let victim = dir.path().join("CAM_BACK_LEFT.png");
    let bytes = fs::read(&victim).unwrap();
    fs::write(&victim, &bytes[..bytes.len() / 2]).unwrap();
    match load_scene(dir.path()) {
        Err(SceneError::Decode { camera, .. }) => assert_eq!(camera, "CAM_BACK_LEFT"),
        other => panic!("expected decode error, got {other:?}"),
    }
}

#[test]
fn tampered_image_fails_checksum() {
    let frame = generate_scene(&small_spec(RoadKind::Straight, 2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_scene(&frame, dir.path()).unwrap();
    let mut img = frame.images[0].clone();
    img.set(0, 0, [0.0, 1.0, 0.0]);
    fs::write(dir.path().join("CAM_FRONT.png"), img.encode_png().unwrap()).unwrap();
    assert!(
        matches!(load_scene(dir.path()), Err(SceneError::Checksum { camera }) if camera == "CAM_FRONT")
    );
}

#[test]
fn short_boundary_is_invalid() {
    let mut frame = generate_layout(&small_spec(RoadKind::Straight, 0)).unwrap();
    frame.left_boundary = asymmap::geometry::Polyline2D::new(
        vec![
            asymmap::geometry::Vec2::new(-3.5, 0.0),
            asymmap::geometry::Vec2::new(-3.5, 5.0),
        ],
        asymmap::geometry::ClassTag::Boundary,
    )
    .unwrap();
    assert!(matches!(frame.validate(), Err(SceneError::InvalidScene(_))));
}

/// Independent pinhole construction: the optical axis from yaw and pitch,
/// image x along the horizontal right vector.
fn oracle_project(
    pos: [f64; 3],
    yaw: f64,
    pitch: f64,
    hfov: f64,
    w: u32,
    h: u32,
    p: Vector3<f64>,
) -> Option<(f64, f64)> {
    let (y, pt) = (yaw.to_radians(), pitch.to_radians());
    let f = Vector3::new(pt.cos() * y.cos(), pt.cos() * y.sin(), -pt.sin());
    let r = Vector3::new(y.sin(), -y.cos(), 0.0);
    let d = f.cross(&r);
    let q = p - Vector3::from(pos);
    let z = q.dot(&f);
    if z <= 0.1 {
        return None;
    }
    let fx = w as f64 / 2.0 / (hfov.to_radians() / 2.0).tan();
    Some((
        fx * q.dot(&r) / z + w as f64 / 2.0,
        fx * q.dot(&d) / z + h as f64 / 2.0,
    ))
}

proptest! {
    #[test]
    fn projection_matches_pinhole_oracle(
        yaw in 0.0..360.0f64, pitch in -10.0..30.0f64, hfov in 40.0..120.0f64,
        px in -20.0..20.0f64, py in -20.0..20.0f64, pz in -2.0..4.0f64,
    ) {
        let pos = [0.3, -0.2, 1.6];
        let cam = CameraModel::looking("c", pos, yaw, pitch, hfov, 320, 240);
        let p = Vector3::new(px, py, pz);
        let got = cam.project_unclipped(p).map(|q| (q.u, q.v));
        let want = oracle_project(pos, yaw, pitch, hfov, 320, 240, p);
        match (got, want) {
            (Some(a), Some(b)) => {
                prop_assert!((a.0 - b.0).abs() < 1e-6 * (1.0 + b.0.abs()));
                prop_assert!((a.1 - b.1).abs() < 1e-6 * (1.0 + b.1.abs()));
            }
            (None, None) => {}
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
        }
        // K [R | t] applied as one matrix.
        let k = &cam.intrinsics;
        let r = cam.rotation_matrix();
        let t = cam.translation_vector();
        let rt = Matrix3x4::from_columns(&[r.column(0).into(), r.column(1).into(), r.column(2).into(), t]);
        let kk = nalgebra::Matrix3::new(k.fx, 0.0, k.cx, 0.0, k.fy, k.cy, 0.0, 0.0, 1.0);
        let hp = kk * rt * Vector4::new(px, py, pz, 1.0);
        if let Some(a) = got {
            prop_assert!((a.0 - hp.x / hp.z).abs() < 1e-6 * (1.0 + a.0.abs()));
            prop_assert!((a.1 - hp.y / hp.z).abs() < 1e-6 * (1.0 + a.1.abs()));
        }
    }

    #[test]
    fn ground_ray_inverts_projection(u in 0.0..320.0f64, v in 130.0..240.0f64) {
        let cam = CameraModel::looking("c", [0.0, 0.0, 1.6], 90.0, 5.0, 70.0, 320, 240);
        let g = cam.pixel_to_ground(u, v).unwrap();
        prop_assert!(g.z.abs() < 1e-9);
        let q = cam.project_unclipped(g).unwrap();
        prop_assert!((q.u - u).abs() < 1e-6 && (q.v - v).abs() < 1e-6);
    }
}

#[test]
fn camera_center_round_trips() {
    let cam = CameraModel::looking("c", [1.0, 2.0, 1.5], 33.0, 7.0, 60.0, 100, 80);
    assert!((cam.center() - Vector3::new(1.0, 2.0, 1.5)).norm() < 1e-12);
    let r = cam.rotation_matrix();
    assert!((r * r.transpose() - nalgebra::Matrix3::identity()).norm() < 1e-12);
    assert!((r.determinant() - 1.0).abs() < 1e-12);
}

#[test]
fn empty_map_renders_only_sky_and_ground() {
    let cam = CameraModel::looking("c", [0.0, 0.0, 1.6], 90.0, 5.0, 70.0, 64, 48);
    let img = render_camera(
        &cam,
        &[],
        &RenderConfig {
            width: 64,
            height: 48,
            ..Default::default()
        },
    );
    let mut expected = Image::filled(64, 48, SKY);
    for v in 0..48 {
        for u in 0..64 {
            if cam
                .pixel_to_ground(u as f64 + 0.5, v as f64 + 0.5)
                .is_some()
            {
                expected.set(u, v, ASPHALT);
            }
        }
    }
    expected.quantize();
    assert_eq!(img.max_abs_diff(&expected), 0.0);
    assert!(img.get(32, 0) != img.get(32, 47));
}

#[test]
fn generation_is_seed_deterministic() {
    let a = generate_scene(&small_spec(RoadKind::Merge, 9)).unwrap();
    let b = generate_scene(&small_spec(RoadKind::Merge, 9)).unwrap();
    assert_eq!(a, b);
    for (x, y) in a.images.iter().zip(&b.images) {
        assert_eq!(x.max_abs_diff(y), 0.0);
    }
}
