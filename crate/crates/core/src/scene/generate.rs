//! Synthetic road scenes: straight (optionally bent), fork, merge, split
//! and intersection layouts in the ego BEV frame.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::render::{render_surround_views, RenderConfig};
use super::{
    AsymLabel, BevRange, CameraRig, Pose2, RoadKind, SceneError, SceneFrame, SceneTruth, Side,
};
use crate::geometry::{ClassTag, Polyline2D, Vec2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub road_kind: RoadKind,
    /// Distance between the designated boundaries (m).
    pub road_width: f64,
    /// Bend radius of a straight-kind road (m); positive bends right,
    /// negative bends left, `None` keeps it straight.
    #[serde(default)]
    pub turn_radius: Option<f64>,
    /// Longitudinal distance from the ego to where divergence begins (m).
    pub anchor_distance: f64,
    /// Curvature of the diverging branch or intersection corner (1/m).
    pub branch_curvature: f64,
    #[serde(default = "default_side")]
    pub diverging_side: Side,
    /// Heading change of the diverging boundary (deg); kind default when absent.
    #[serde(default)]
    pub branch_angle_deg: Option<f64>,
    #[serde(default = "default_branch_width")]
    pub branch_width: f64,
    #[serde(default = "default_cross_width")]
    pub cross_width: f64,
    /// Whether to paint a pedestrian crossing; seeded coin flip when absent.
    #[serde(default)]
    pub ped_crossing: Option<bool>,
    pub seed: u64,
    #[serde(default)]
    pub scene_id: Option<String>,
    #[serde(default)]
    pub render: RenderConfig,
    #[serde(default)]
    pub bev_range: BevRange,
}

fn default_side() -> Side {
    Side::Right
}
fn default_branch_width() -> f64 {
    7.0
}
fn default_cross_width() -> f64 {
    7.0
}

impl SceneSpec {
    pub fn new(road_kind: RoadKind, seed: u64) -> Self {
        Self {
            road_kind,
            road_width: 7.0,
            turn_radius: None,
            anchor_distance: 12.0,
            branch_curvature: 0.5,
            diverging_side: if road_kind.is_diverging() {
                Side::Right
            } else {
                Side::None
            },
            branch_angle_deg: None,
            branch_width: default_branch_width(),
            cross_width: default_cross_width(),
            ped_crossing: None,
            seed,
            scene_id: None,
            render: RenderConfig::default(),
            bev_range: BevRange::default(),
        }
    }

    pub fn scene_id(&self) -> String {
        self.scene_id
            .clone()
            .unwrap_or_else(|| format!("{}-{:06}", self.road_kind.as_str(), self.seed))
    }

    fn validate(&self) -> Result<(), SceneError> {
        let r = &self.bev_range;
        if !(self.road_width > 0.0) {
            return Err(SceneError::Config("road_width must be positive".into()));
        }
        if !(self.anchor_distance > 0.0) {
            return Err(SceneError::Config(
                "anchor_distance must be positive".into(),
            ));
        }
        if self.road_kind != RoadKind::Straight && self.turn_radius.is_some() {
            return Err(SceneError::Config(format!(
                "turn_radius only applies to straight roads, not {}",
                self.road_kind.as_str()
            )));
        }
        if let Some(t) = self.turn_radius {
            if t.abs() <= self.road_width / 2.0 {
                return Err(SceneError::Config(
                    "turn_radius must exceed half the road width".into(),
                ));
            }
        }
        if self.road_kind.is_diverging() && self.diverging_side == Side::None {
            return Err(SceneError::Config(
                "diverging road kinds need a diverging side".into(),
            ));
        }
        if self.road_kind != RoadKind::Straight {
            if !(self.branch_curvature > 0.0) {
                return Err(SceneError::Config(
                    "branch_curvature must be positive".into(),
                ));
            }
            if self.anchor_distance + 2.0 > r.y_max || self.road_width / 2.0 + 2.0 > r.x_max {
                return Err(SceneError::Config(
                    "divergence does not fit inside the BEV range".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Counts of scenes per road kind plus the parameter ranges they are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub counts: BTreeMap<RoadKind, usize>,
    pub seed: u64,
    #[serde(default = "default_asym_curvature")]
    pub branch_curvature: (f64, f64),
    #[serde(default = "default_anchor_range")]
    pub anchor_distance: (f64, f64),
    #[serde(default)]
    pub render: RenderConfig,
}

fn default_asym_curvature() -> (f64, f64) {
    (0.35, 0.6)
}
fn default_anchor_range() -> (f64, f64) {
    (8.0, 18.0)
}

impl SuiteSpec {
    /// `n_sym` symmetric scenes (straight and intersection) and `n_asym`
    /// asymmetric ones spread over fork, merge and split.
    pub fn balanced(n_sym: usize, n_asym: usize, seed: u64) -> Self {
        let mut counts = BTreeMap::new();
        let n_int = n_sym * 2 / 5;
        counts.insert(RoadKind::Straight, n_sym - n_int);
        counts.insert(RoadKind::Intersection, n_int);
        let third = n_asym / 3;
        counts.insert(RoadKind::Fork, n_asym - 2 * third);
        counts.insert(RoadKind::Split, third);
        counts.insert(RoadKind::Merge, third);
        counts.retain(|_, n| *n > 0);
        Self::with_counts(counts, seed)
    }

    pub fn with_counts(counts: BTreeMap<RoadKind, usize>, seed: u64) -> Self {
        Self {
            counts,
            seed,
            branch_curvature: default_asym_curvature(),
            anchor_distance: default_anchor_range(),
            render: RenderConfig::default(),
        }
    }
}

/// Expands a suite into concrete scene specs, deterministic in `suite.seed`.
pub fn generate_suite(suite: &SuiteSpec) -> Vec<SceneSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(suite.seed);
    let mut out = Vec::new();
    for (&kind, &n) in &suite.counts {
        for _ in 0..n {
            let seed: u64 = rng.gen_range(0..1_000_000);
            let mut spec = SceneSpec::new(kind, seed);
            spec.road_width = rng.gen_range(6.5..8.0);
            spec.anchor_distance = rng.gen_range(suite.anchor_distance.0..suite.anchor_distance.1);
            spec.render = suite.render.clone();
            match kind {
                RoadKind::Straight => {
                    if rng.gen_bool(0.4) {
                        let r: f64 = rng.gen_range(40.0..120.0);
                        spec.turn_radius = Some(if rng.gen_bool(0.5) { r } else { -r });
                    }
                }
                RoadKind::Intersection => {
                    spec.branch_curvature = rng.gen_range(0.12..0.3);
                }
                _ => {
                    spec.branch_curvature =
                        rng.gen_range(suite.branch_curvature.0..suite.branch_curvature.1);
                    spec.diverging_side = if rng.gen_bool(0.5) {
                        Side::Right
                    } else {
                        Side::Left
                    };
                }
            }
            spec.scene_id = Some(format!("{}-{:06}", kind.as_str(), seed));
            out.push(spec);
        }
    }
    out
}

/// Builds the scene layout and renders its surround views.
pub fn generate_scene(spec: &SceneSpec) -> Result<SceneFrame, SceneError> {
    let frame = generate_layout(spec)?;
    Ok(render_surround_views(frame, &spec.render))
}

/// Builds the scene layout without images.
pub fn generate_layout(spec: &SceneSpec) -> Result<SceneFrame, SceneError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let range = spec.bev_range;
    let hw = spec.road_width / 2.0;
    let mut gt = Vec::new();

    let layout = match spec.road_kind {
        RoadKind::Straight => straight_layout(spec, &mut rng)?,
        RoadKind::Intersection => intersection_layout(spec)?,
        _ => diverging_layout(spec, &mut rng)?,
    };

    let paint_crossing = spec.ped_crossing.unwrap_or_else(|| match spec.road_kind {
        RoadKind::Intersection => true,
        RoadKind::Straight => spec.turn_radius.is_none() && rng.gen_bool(0.5),
        _ => false,
    });
    if paint_crossing {
        let y0 = match spec.road_kind {
            RoadKind::Intersection => spec.anchor_distance - 4.0,
            _ => rng.gen_range(6.0..20.0),
        };
        if y0 > 3.0 && y0 + 3.0 < range.y_max {
            let ring = vec![
                Vec2::new(-hw + 0.3, y0),
                Vec2::new(hw - 0.3, y0),
                Vec2::new(hw - 0.3, y0 + 3.0),
                Vec2::new(-hw + 0.3, y0 + 3.0),
                Vec2::new(-hw + 0.3, y0),
            ];
            gt.push(Polyline2D::new(ring, ClassTag::PedCrossing)?);
        }
    }

    gt.push(layout.left.clone());
    gt.push(layout.right.clone());
    gt.extend(layout.extra_boundaries);
    gt.extend(layout.dividers);
    // Deterministic element order: boundaries, dividers, crossings.
    gt.sort_by_key(|p| p.class());

    let frame = SceneFrame {
        scene_id: spec.scene_id(),
        road_kind: spec.road_kind,
        gt_map: gt,
        left_boundary: layout.left,
        right_boundary: layout.right,
        centerline: layout.centerline,
        rig: CameraRig::surround(spec.render.width, spec.render.height),
        images: Vec::new(),
        ego_pose: Pose2::new(0.0, 0.0, FRAC_PI_2),
        bev_range: range,
        truth: Some(SceneTruth {
            asym_label: if spec.road_kind.is_diverging() {
                AsymLabel::Asymmetric
            } else {
                AsymLabel::Symmetric
            },
            anchor_xy: layout.anchor,
            diverging_side: if spec.road_kind.is_diverging() {
                spec.diverging_side
            } else {
                Side::None
            },
            goals: layout.goals,
        }),
    };
    frame.validate()?;
    Ok(frame)
}

struct Layout {
    left: Polyline2D,
    right: Polyline2D,
    extra_boundaries: Vec<Polyline2D>,
    dividers: Vec<Polyline2D>,
    centerline: Polyline2D,
    anchor: Option<Vec2>,
    goals: Vec<Pose2>,
}

/// Points on a circle from `a0` to `a1` (radians), at most 3 degrees and
/// 0.1 m apart.
fn arc(center: Vec2, radius: f64, a0: f64, a1: f64) -> Vec<Vec2> {
    let sweep = (a1 - a0).abs();
    let steps = ((sweep / 3f64.to_radians())
        .ceil()
        .max((sweep * radius / 0.1).ceil()) as usize)
        .max(1);
    (0..=steps)
        .map(|i| {
            let a = a0 + (a1 - a0) * i as f64 / steps as f64;
            center + Vec2::new(a.cos(), a.sin()) * radius
        })
        .collect()
}

/// Keeps the longest run of `pts` inside `range`, cutting segments at the border.
fn clip(pts: &[Vec2], range: &BevRange) -> Vec<Vec2> {
    let mut best: Vec<Vec2> = Vec::new();
    let mut run: Vec<Vec2> = Vec::new();
    let push = |run: &mut Vec<Vec2>, p: Vec2| {
        if run.last().is_none_or(|q: &Vec2| q.dist(p) > 1e-6) {
            run.push(p);
        }
    };
    for w in pts.windows(2) {
        match clip_segment(w[0], w[1], range) {
            Some((t0, t1)) => {
                let a = w[0].lerp(w[1], t0);
                let b = w[0].lerp(w[1], t1);
                if t0 > 0.0 && !run.is_empty() {
                    if run.len() > best.len() {
                        best = std::mem::take(&mut run);
                    }
                    run.clear();
                }
                push(&mut run, a);
                push(&mut run, b);
                if t1 < 1.0 {
                    if run.len() > best.len() {
                        best = std::mem::take(&mut run);
                    }
                    run.clear();
                }
            }
            None => {
                if run.len() > best.len() {
                    best = std::mem::take(&mut run);
                }
                run.clear();
            }
        }
    }
    if run.len() > best.len() {
        best = run;
    }
    best
}

/// Liang-Barsky parameter interval of the segment inside the box.
fn clip_segment(a: Vec2, b: Vec2, r: &BevRange) -> Option<(f64, f64)> {
    let d = b - a;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, q) in [
        (-d.x, a.x - r.x_min),
        (d.x, r.x_max - a.x),
        (-d.y, a.y - r.y_min),
        (d.y, r.y_max - a.y),
    ] {
        if p.abs() < 1e-15 {
            if q < 0.0 {
                return None;
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
        }
    }
    (t1 - t0 > 1e-12).then_some((t0, t1))
}

fn poly(pts: &[Vec2], range: &BevRange, class: ClassTag) -> Result<Polyline2D, SceneError> {
    let c = clip(pts, range);
    Ok(Polyline2D::new_dedup(c, class)?)
}

fn mirror_pts(pts: &[Vec2]) -> Vec<Vec2> {
    pts.iter().map(|p| Vec2::new(-p.x, p.y)).collect()
}

fn heading_of(v: Vec2) -> f64 {
    v.y.atan2(v.x)
}

/// Pose `back` meters before the end of `p`, heading along the tangent.
fn goal_near_end(p: &Polyline2D, back: f64) -> Pose2 {
    let s = (p.length() - back).max(0.0);
    let a = p.point_at(s);
    let b = p.point_at((s + 0.5).min(p.length()));
    let a2 = p.point_at((s - 0.5).max(0.0));
    let dir = b - a2;
    Pose2::new(a.x, a.y, heading_of(dir))
}

fn straight_layout(spec: &SceneSpec, _rng: &mut ChaCha8Rng) -> Result<Layout, SceneError> {
    let range = &spec.bev_range;
    let hw = spec.road_width / 2.0;
    let (center_pts, left_pts, right_pts) = match spec.turn_radius {
        None => {
            let c = vec![Vec2::new(0.0, range.y_min), Vec2::new(0.0, range.y_max)];
            let l = vec![Vec2::new(-hw, range.y_min), Vec2::new(-hw, range.y_max)];
            let r = vec![Vec2::new(hw, range.y_min), Vec2::new(hw, range.y_max)];
            (c, l, r)
        }
        Some(rad) => {
            // Center of curvature at (rad, 0); heading +y at the origin.
            let n = 240;
            let (s0, s1) = (range.y_min - 5.0, range.y_max + 20.0);
            let mut c = Vec::new();
            let mut l = Vec::new();
            let mut r = Vec::new();
            for i in 0..=n {
                let s = s0 + (s1 - s0) * i as f64 / n as f64;
                let phi = s / rad;
                let p = Vec2::new(rad - rad * phi.cos(), rad * phi.sin());
                let left_n = Vec2::new(-phi.cos(), phi.sin());
                c.push(p);
                l.push(p + left_n * hw);
                r.push(p - left_n * hw);
            }
            (c, l, r)
        }
    };
    let left = poly(&left_pts, range, ClassTag::Boundary)?;
    let right = poly(&right_pts, range, ClassTag::Boundary)?;
    let road_center = poly(&center_pts, range, ClassTag::Divider)?;
    let centerline = right
        .offset_left(spec.road_width / 4.0)?
        .with_class(ClassTag::Divider);
    let goal = goal_near_end(&road_center, 3.0);
    Ok(Layout {
        left,
        right,
        extra_boundaries: Vec::new(),
        dividers: vec![road_center],
        centerline,
        anchor: None,
        goals: vec![goal],
    })
}

/// Right-diverging geometry, mirrored for left divergence.
fn diverging_layout(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Result<Layout, SceneError> {
    let range = &spec.bev_range;
    let hw = spec.road_width / 2.0;
    let a = spec.anchor_distance;
    let rad = 1.0 / spec.branch_curvature;
    let beta = spec
        .branch_angle_deg
        .unwrap_or_else(|| match spec.road_kind {
            RoadKind::Fork => rng.gen_range(75.0..100.0),
            RoadKind::Split => rng.gen_range(30.0..50.0),
            _ => rng.gen_range(115.0..135.0),
        })
        .to_radians();

    // Outer (diverging) boundary: up to the anchor, arc to the right, then straight.
    let mut div = vec![Vec2::new(hw, range.y_min - 5.0), Vec2::new(hw, a)];
    let center = Vec2::new(hw + rad, a);
    let arc_pts = arc(center, rad, PI, PI - beta);
    div.extend(arc_pts.iter().skip(1).copied());
    let end = *div.last().unwrap();
    let phi = PI - beta;
    let dir = Vec2::new(phi.sin(), -phi.cos());
    div.push(end + dir * 80.0);
    let div_full = Polyline2D::new_dedup(div.clone(), ClassTag::Boundary)?;
    let reference = vec![
        Vec2::new(-hw, range.y_min - 5.0),
        Vec2::new(-hw, range.y_max + 5.0),
    ];

    // Inner branch edge and the island closing the main road on the diverging side.
    let inner = div_full.offset_left(spec.branch_width)?;
    let branch_center = div_full.offset_left(spec.branch_width / 2.0)?;
    let mut island: Option<Vec<Vec2>> = None;
    let ip = inner.points();
    for i in 0..ip.len() - 1 {
        let (p, q) = (ip[i], ip[i + 1]);
        if p.y > a && (p.x - hw) * (q.x - hw) <= 0.0 && (q.x - p.x).abs() > 1e-12 {
            let t = (hw - p.x) / (q.x - p.x);
            let cross = p.lerp(q, t);
            let mut pts = vec![Vec2::new(hw, range.y_max + 5.0), cross];
            pts.extend(ip[i + 1..].iter().copied());
            island = Some(pts);
            break;
        }
    }

    let beyond_anchor: Vec<Vec2> = branch_center
        .points()
        .iter()
        .copied()
        .filter(|p| p.y > a - 1e-9)
        .collect();
    let centerline_pts = div_full
        .offset_left(spec.road_width / 4.0)?
        .points()
        .to_vec();
    let divider = vec![Vec2::new(0.0, range.y_min), Vec2::new(0.0, a)];
    let forward_branch = beta <= 100f64.to_radians();

    let flip = spec.diverging_side == Side::Left;
    let tf = |pts: &[Vec2]| if flip { mirror_pts(pts) } else { pts.to_vec() };

    let div_poly = poly(&tf(&div), range, ClassTag::Boundary)?;
    let ref_poly = poly(&tf(&reference), range, ClassTag::Boundary)?;
    let mut extra = Vec::new();
    if let Some(isl) = island {
        let c = clip(&tf(&isl), range);
        if c.len() >= 2 {
            extra.push(Polyline2D::new_dedup(c, ClassTag::Boundary)?);
        }
    }
    let centerline = poly(&tf(&centerline_pts), range, ClassTag::Divider)?;
    let mut goals = vec![Pose2::new(0.0, range.y_max - 3.0, FRAC_PI_2)];
    if forward_branch {
        let bc = clip(&tf(&beyond_anchor), range);
        if bc.len() >= 2 {
            goals.push(goal_near_end(
                &Polyline2D::new_dedup(bc, ClassTag::Divider)?,
                3.0,
            ));
        }
    }
    let anchor = Vec2::new(if flip { -hw } else { hw }, a);
    let (left, right) = if flip {
        (div_poly, ref_poly)
    } else {
        (ref_poly, div_poly)
    };
    Ok(Layout {
        left,
        right,
        extra_boundaries: extra,
        dividers: vec![poly(&divider, range, ClassTag::Divider)?],
        centerline,
        anchor: Some(anchor),
        goals,
    })
}

fn intersection_layout(spec: &SceneSpec) -> Result<Layout, SceneError> {
    let range = &spec.bev_range;
    let hw = spec.road_width / 2.0;
    let a = spec.anchor_distance;
    let rad = 1.0 / spec.branch_curvature;
    let far_y = a + rad + spec.cross_width;

    let mut near_right = vec![Vec2::new(hw, range.y_min - 5.0), Vec2::new(hw, a)];
    near_right.extend(
        arc(Vec2::new(hw + rad, a), rad, PI, FRAC_PI_2)
            .into_iter()
            .skip(1),
    );
    near_right.push(Vec2::new(range.x_max + 5.0, a + rad));

    let mut far_right = vec![
        Vec2::new(range.x_max + 5.0, far_y),
        Vec2::new(hw + rad, far_y),
    ];
    far_right.extend(
        arc(Vec2::new(hw + rad, far_y + rad), rad, -FRAC_PI_2, -PI)
            .into_iter()
            .skip(1),
    );
    far_right.push(Vec2::new(hw, range.y_max + 5.0));

    let right = poly(&near_right, range, ClassTag::Boundary)?;
    let left = poly(&mirror_pts(&near_right), range, ClassTag::Boundary)?;
    let mut extra = Vec::new();
    for pts in [far_right.clone(), mirror_pts(&far_right)] {
        let c = clip(&pts, range);
        if c.len() >= 2 {
            extra.push(Polyline2D::new_dedup(c, ClassTag::Boundary)?);
        }
    }
    let cross_mid = a + rad + spec.cross_width / 2.0;
    let mut dividers = vec![poly(
        &[Vec2::new(0.0, range.y_min), Vec2::new(0.0, a - 4.5)],
        range,
        ClassTag::Divider,
    )?];
    if far_y + rad < range.y_max - 1.0 {
        dividers.push(poly(
            &[Vec2::new(0.0, far_y + rad), Vec2::new(0.0, range.y_max)],
            range,
            ClassTag::Divider,
        )?);
    }
    if hw + rad < range.x_max - 1.0 {
        dividers.push(poly(
            &[
                Vec2::new(hw + rad, cross_mid),
                Vec2::new(range.x_max, cross_mid),
            ],
            range,
            ClassTag::Divider,
        )?);
        dividers.push(poly(
            &[
                Vec2::new(-hw - rad, cross_mid),
                Vec2::new(range.x_min, cross_mid),
            ],
            range,
            ClassTag::Divider,
        )?);
    }
    let centerline = right
        .offset_left(spec.road_width / 4.0)?
        .with_class(ClassTag::Divider);
    let mut goals = vec![Pose2::new(0.0, range.y_max - 3.0, FRAC_PI_2)];
    goals.push(Pose2::new(range.x_max - 3.0, cross_mid, 0.0));
    goals.push(Pose2::new(range.x_min + 3.0, cross_mid, PI));
    Ok(Layout {
        left,
        right,
        extra_boundaries: extra,
        dividers,
        centerline,
        anchor: None,
        goals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{pointwise_curvature, resample_by_spacing};

    #[test]
    fn straight_width_seven() {
        let mut spec = SceneSpec::new(RoadKind::Straight, 1);
        spec.ped_crossing = Some(false);
        let f = generate_layout(&spec).unwrap();
        assert!(f
            .left_boundary
            .points()
            .iter()
            .all(|p| (p.x + 3.5).abs() < 1e-12));
        assert!(f
            .right_boundary
            .points()
            .iter()
            .all(|p| (p.x - 3.5).abs() < 1e-12));
        assert_eq!(f.truth.as_ref().unwrap().asym_label, AsymLabel::Symmetric);
    }

    #[test]
    fn fork_branch_curvature_matches_radius() {
        let mut spec = SceneSpec::new(RoadKind::Fork, 3);
        spec.branch_curvature = 1.0 / 15.0;
        spec.anchor_distance = 12.0;
        spec.branch_angle_deg = Some(60.0);
        let f = generate_layout(&spec).unwrap();
        let right = resample_by_spacing(&f.right_boundary, 0.25).unwrap();
        let k = pointwise_curvature(&right).unwrap();
        // Interior of the arc, away from the tangent discontinuities.
        let on_arc: Vec<f64> = right
            .points()
            .iter()
            .zip(&k)
            .filter(|(p, _)| {
                let d = p.dist(Vec2::new(3.5 + 15.0, 12.0));
                (d - 15.0).abs() < 0.05
                    && p.y > 13.0
                    && p.y < 12.0 + 15.0 * 60f64.to_radians().sin() - 1.0
            })
            .map(|(_, k)| *k)
            .collect();
        assert!(on_arc.len() > 10);
        for k in on_arc {
            assert!((k - 1.0 / 15.0).abs() < 0.01, "k = {k}");
        }
        let left = resample_by_spacing(&f.left_boundary, 0.25).unwrap();
        assert!(pointwise_curvature(&left)
            .unwrap()
            .iter()
            .all(|k| k.abs() < 1e-9));
        let truth = f.truth.unwrap();
        assert_eq!(truth.anchor_xy, Some(Vec2::new(3.5, 12.0)));
        assert_eq!(truth.diverging_side, Side::Right);
    }

    #[test]
    fn left_fork_is_mirrored() {
        let mut spec = SceneSpec::new(RoadKind::Fork, 9);
        spec.diverging_side = Side::Left;
        spec.branch_angle_deg = Some(90.0);
        let f = generate_layout(&spec).unwrap();
        assert!(f
            .right_boundary
            .points()
            .iter()
            .all(|p| (p.x - 3.5).abs() < 1e-12));
        assert!(f.left_boundary.points().iter().any(|p| p.x < -6.0));
        assert_eq!(f.truth.unwrap().goals.len(), 2);
    }

    #[test]
    fn deterministic_generation() {
        let spec = SceneSpec::new(RoadKind::Split, 42);
        let a = generate_scene(&spec).unwrap();
        let b = generate_scene(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.images, b.images);
    }

    #[test]
    fn unsupported_combinations() {
        let mut spec = SceneSpec::new(RoadKind::Fork, 1);
        spec.turn_radius = Some(50.0);
        assert!(matches!(generate_layout(&spec), Err(SceneError::Config(_))));
        let mut spec = SceneSpec::new(RoadKind::Fork, 1);
        spec.diverging_side = Side::None;
        assert!(matches!(generate_layout(&spec), Err(SceneError::Config(_))));
        let mut spec = SceneSpec::new(RoadKind::Straight, 1);
        spec.road_width = 0.0;
        assert!(matches!(generate_layout(&spec), Err(SceneError::Config(_))));
    }

    #[test]
    fn suite_is_deterministic_and_counted() {
        let s = SuiteSpec::balanced(10, 9, 7);
        let a = generate_suite(&s);
        assert_eq!(a.len(), 19);
        assert_eq!(a, generate_suite(&s));
        for spec in &a {
            generate_layout(spec).unwrap();
        }
    }

    #[test]
    fn intersection_has_three_goals() {
        let mut spec = SceneSpec::new(RoadKind::Intersection, 5);
        spec.branch_curvature = 0.2;
        spec.anchor_distance = 10.0;
        let f = generate_layout(&spec).unwrap();
        assert_eq!(f.truth.unwrap().goals.len(), 3);
        assert!(
            f.gt_map
                .iter()
                .filter(|p| p.class() == ClassTag::Boundary)
                .count()
                >= 4
        );
    }
}
