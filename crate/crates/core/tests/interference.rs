use std::f64::consts::FRAC_PI_2;

use asymmap::interference::*;
use asymmap::raster::Image;
use asymmap::scene::{CameraModel, CameraRig};
use nalgebra::Vector3;

/// Single-camera rig; built directly since `CameraRig::new` insists on
/// full surround coverage.
fn single(cam: CameraModel) -> CameraRig {
    CameraRig {
        positions: vec![cam.center().into()],
        cameras: vec![cam],
    }
}

fn front_rig(w: u32, h: u32) -> CameraRig {
    single(CameraModel::looking(
        "CAM_FRONT",
        [0.0, 0.0, 1.6],
        90.0,
        5.0,
        70.0,
        w,
        h,
    ))
}

fn dark(rig: &CameraRig) -> Vec<Image> {
    rig.cameras
        .iter()
        .map(|c| Image::filled(c.width, c.height, [0.1; 3]))
        .collect()
}

#[test]
fn flare_behind_front_camera_changes_nothing() {
    let rig = front_rig(160, 120);
    let imgs = dark(&rig);
    let out = apply_attack(
        &imgs,
        &rig,
        &AttackConfig::blinding([0.0, -10.0, 1.0], FlashlightSpec::default()),
    )
    .unwrap();
    assert_eq!(out, imgs);
}

#[test]
fn brightest_pixel_sits_on_the_projected_light() {
    let rig = front_rig(160, 120);
    let imgs = dark(&rig);
    let spec = FlashlightSpec {
        r0: 2.0,
        ..Default::default()
    };
    for p in [[0.0, 15.0, 1.5], [3.0, 20.0, 0.5], [-4.0, 12.0, 2.0]] {
        let out = render_flare(&imgs, &rig, p, &spec);
        let img = &out[0];
        let (mut best, mut at) = (f32::MIN, (0, 0));
        for v in 0..img.height {
            for u in 0..img.width {
                let l = img.luminance(u, v);
                if l > best {
                    best = l;
                    at = (u, v);
                }
            }
        }
        let q = rig.cameras[0].project_unclipped(Vector3::from(p)).unwrap();
        assert!(
            (at.0 as f64 + 0.5 - q.u).abs() <= 1.0 && (at.1 as f64 + 0.5 - q.v).abs() <= 1.0,
            "{p:?}: {at:?} vs {q:?}"
        );
    }
}

#[test]
fn distant_light_stays_below_one_level() {
    let rig = front_rig(160, 120);
    let imgs = dark(&rig);
    let out = render_flare(&imgs, &rig, [0.0, 1000.0, 1.5], &FlashlightSpec::default());
    assert!(out[0].max_abs_diff(&imgs[0]) < 1.0 / 255.0);
}

#[test]
fn upright_patch_pixels_map_onto_the_vertical_plane() {
    let pattern = Image::filled(4, 4, [0.2, 0.4, 0.6]);
    let spec = PatchSpec::new([1.0, 10.0, 1.0], 2.0, 1.0, FRAC_PI_2, pattern);
    for u in 0..=4 {
        for v in 0..=4 {
            let w = patch_pixel_to_world(&spec, u as f64, v as f64).unwrap();
            // u runs along +z over the 2 m width, v along +y over the 1 m height.
            let want = Vector3::new(
                1.0,
                10.0 + v as f64 * 0.25 - 0.5,
                1.0 + u as f64 * 0.5 - 1.0,
            );
            assert!((w - want).norm() < 1e-12, "({u},{v}): {w:?}");
        }
    }
    assert!(patch_pixel_to_world(&spec, 4.5, 0.0).is_err());
}

fn shoelace(q: &[(f64, f64)]) -> f64 {
    let n = q.len();
    (0..n)
        .map(|i| q[i].0 * q[(i + 1) % n].1 - q[(i + 1) % n].0 * q[i].1)
        .sum::<f64>()
        .abs()
        / 2.0
}

#[test]
fn ground_patch_covers_its_projected_quad() {
    let rig = single(CameraModel::looking(
        "down",
        [0.0, 0.0, 3.0],
        90.0,
        35.0,
        70.0,
        320,
        240,
    ));
    let imgs = dark(&rig);
    let spec = PatchSpec::new(
        [0.5, 6.0, 0.0],
        3.0,
        2.0,
        0.0,
        Image::filled(8, 8, [1.0, 0.0, 0.0]),
    );
    let out = composite_patch(&imgs, &rig, &spec);
    let red = out[0]
        .data
        .chunks(3)
        .filter(|c| c[0] > 0.9 && c[1] < 0.1)
        .count() as f64;
    let corners: Vec<(f64, f64)> = [(0.0, 0.0), (8.0, 0.0), (8.0, 8.0), (0.0, 8.0)]
        .iter()
        .map(|&(u, v)| {
            let q = rig.cameras[0]
                .project_unclipped(patch_pixel_to_world(&spec, u, v).unwrap())
                .unwrap();
            (q.u, q.v)
        })
        .collect();
    let area = shoelace(&corners);
    assert!(area > 500.0);
    assert!((red - area).abs() / area < 0.05, "red {red} area {area}");
}

#[test]
fn attacks_are_deterministic() {
    let rig = CameraRig::surround(96, 72);
    let imgs = dark(&rig);
    let flare = AttackConfig::blinding([2.0, 10.0, 1.0], FlashlightSpec::default());
    assert_eq!(
        apply_attack(&imgs, &rig, &flare).unwrap(),
        apply_attack(&imgs, &rig, &flare).unwrap()
    );
    let patch = AttackConfig::patch(PatchSpec::new(
        [2.0, 8.0, 0.01],
        2.0,
        2.0,
        0.0,
        Image::filled(5, 5, [0.9, 0.1, 0.5]),
    ));
    assert_eq!(
        apply_attack(&imgs, &rig, &patch).unwrap(),
        apply_attack(&imgs, &rig, &patch).unwrap()
    );
}

#[test]
fn invalid_attack_inputs_are_rejected() {
    let rig = CameraRig::surround(32, 24);
    let imgs = dark(&rig);
    let cfg = AttackConfig::blinding([0.0, 5.0, 1.0], FlashlightSpec::default());
    assert!(matches!(
        apply_attack(&imgs[..2], &rig, &cfg),
        Err(InterferenceError::ImageCount { .. })
    ));
    let bad = AttackConfig::blinding(
        [0.0, 5.0, 1.0],
        FlashlightSpec {
            beam_angle: 200.0,
            ..Default::default()
        },
    );
    assert!(matches!(
        apply_attack(&imgs, &rig, &bad),
        Err(InterferenceError::InvalidConfig(_))
    ));
    let mut p = AttackConfig::patch(PatchSpec::new(
        [0.0, 5.0, 0.0],
        1.0,
        1.0,
        0.0,
        Image::filled(2, 2, [1.0; 3]),
    ));
    p.position = [0.0, 6.0, 0.0];
    assert!(apply_attack(&imgs, &rig, &p).is_err());
}
