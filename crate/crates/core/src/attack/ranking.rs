use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::AttackError;
use crate::geometry::{ClassTag, Polyline2D, Vec2};
use crate::scene::{CameraRig, SceneFrame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankingParams {
    /// Maximum influence angle (rad).
    pub phi_max: f64,
    /// Lateral distances outside each boundary (m).
    pub offsets: Vec<f64>,
    /// Arc-length step along each boundary (m).
    pub longitudinal_step: f64,
    pub heights: Vec<f64>,
    pub top_n: usize,
}

impl Default for RankingParams {
    fn default() -> Self {
        Self::blinding(40.0)
    }
}

impl RankingParams {
    /// Flashlight lattice with `phi_max` = beam half-angle + 10 degrees.
    pub fn blinding(beam_angle_deg: f64) -> Self {
        Self {
            phi_max: (beam_angle_deg / 2.0 + 10.0).to_radians(),
            offsets: vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
            longitudinal_step: 2.0,
            heights: vec![0.5, 1.0, 1.5, 2.0],
            top_n: 20,
        }
    }

    /// Ground-lying patch centers close enough to the curb to cover it.
    pub fn patch() -> Self {
        Self {
            phi_max: 45f64.to_radians(),
            offsets: vec![0.5, 1.0, 1.5],
            longitudinal_step: 2.0,
            heights: vec![0.01],
            top_n: 20,
        }
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        if !(self.phi_max > 0.0 && self.phi_max <= std::f64::consts::PI) {
            return Err(AttackError::Config("phi_max must lie in (0, pi]".into()));
        }
        if self.top_n == 0 || !(self.longitudinal_step > 0.0) {
            return Err(AttackError::Config(
                "top_n and longitudinal_step must be positive".into(),
            ));
        }
        if self.offsets.is_empty() || self.heights.is_empty() {
            return Err(AttackError::Config(
                "lattice needs offsets and heights".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub position: [f64; 3],
    pub score: f64,
    /// 1-based rank.
    pub rank: usize,
}

/// Position score `S(p)`: per camera and anchor, `(1 - phi/phi_max) / |p - c|^2`
/// when the angle `phi` at the camera between `p` and the anchor is below
/// `phi_max`, else 0.
pub fn score_position(p: [f64; 3], rig: &CameraRig, anchors: &[Vec2], phi_max: f64) -> f64 {
    let p = Vector3::from(p);
    let mut s = 0.0;
    for i in 0..rig.len() {
        let c = rig.position(i);
        let to_p = p - c;
        let dist = to_p.norm();
        if dist < 0.1 {
            log::debug!(
                "candidate within 0.1 m of {}; term skipped",
                rig.cameras[i].id
            );
            continue;
        }
        for d in anchors {
            let to_d = Vector3::new(d.x, d.y, 0.0) - c;
            let phi = (to_p.dot(&to_d) / (dist * to_d.norm()))
                .clamp(-1.0, 1.0)
                .acos();
            if phi < phi_max {
                s += (1.0 - phi / phi_max) / (dist * dist);
            }
        }
    }
    s
}

/// Forward arc-length interval `[s0, length]` of a boundary: the part at or
/// ahead of the ego.
pub(crate) fn forward_start(b: &Polyline2D, ego_y: f64) -> f64 {
    let pts = b.points();
    let cum = b.cumulative_lengths();
    for i in 0..pts.len() {
        if pts[i].y >= ego_y {
            if i == 0 {
                return 0.0;
            }
            let (p, q) = (pts[i - 1], pts[i]);
            let t = if q.y > p.y {
                (ego_y - p.y) / (q.y - p.y)
            } else {
                1.0
            };
            return cum[i - 1] + t * (cum[i] - cum[i - 1]);
        }
    }
    b.length()
}

/// Roadside region outside the frame's designated boundaries.
#[derive(Debug, Clone)]
pub struct RoadsideRegion<'a> {
    frame: &'a SceneFrame,
    /// (boundary, outward sign along its left normal, forward start).
    sides: [(&'a Polyline2D, f64, f64); 2],
}

impl<'a> RoadsideRegion<'a> {
    pub fn new(frame: &'a SceneFrame) -> Self {
        let y = frame.ego_pose.y;
        let l = &frame.left_boundary;
        let r = &frame.right_boundary;
        Self {
            frame,
            sides: [
                (l, 1.0, forward_start(l, y)),
                (r, -1.0, forward_start(r, y)),
            ],
        }
    }

    /// Ground point `offset` meters outside boundary `side` (0 left, 1 right)
    /// at arc length `s`.
    pub fn ground_point(&self, side: usize, s: f64, offset: f64) -> Vec2 {
        let (b, sign, _) = self.sides[side];
        let q = b.point_at(s);
        let cum = b.cumulative_lengths();
        let pts = b.points();
        let seg = match cum.iter().position(|&c| c > s) {
            Some(0) => 0,
            Some(i) => i - 1,
            None => pts.len() - 2,
        };
        let n = (pts[seg + 1] - pts[seg]).normalized().perp();
        q + n * (sign * offset)
    }

    /// Forward arc-length interval of boundary `side`.
    pub fn extent(&self, side: usize) -> (f64, f64) {
        let (b, _, s0) = self.sides[side];
        (s0, b.length())
    }

    /// Maps unit-cube coordinates to a position: `u` in [0, 2) picks the
    /// side and the fraction along its forward extent.
    pub fn point_from_unit(&self, u: f64, offset: f64, height: f64) -> [f64; 3] {
        let u = u.clamp(0.0, 2.0 - 1e-12);
        let side = if u < 1.0 { 0 } else { 1 };
        let (s0, s1) = self.extent(side);
        let q = self.ground_point(side, s0 + (u - side as f64) * (s1 - s0), offset);
        [q.x, q.y, height]
    }

    /// Roadside test: inside the BEV range and no closer to any ground-truth
    /// boundary than `offset` allows.
    pub fn admissible(&self, q: Vec2, offset: f64) -> bool {
        if !self.frame.bev_range.contains(q) {
            return false;
        }
        self.frame
            .gt_map
            .iter()
            .filter(|e| e.class() == ClassTag::Boundary)
            .all(|e| e.distance_to(q) >= offset - 1e-6)
    }
}

/// Roadside lattice of candidate positions, in enumeration order.
pub fn roadside_lattice(frame: &SceneFrame, params: &RankingParams) -> Vec<[f64; 3]> {
    let region = RoadsideRegion::new(frame);
    let mut out = Vec::new();
    for side in 0..2 {
        let (s0, s1) = region.extent(side);
        let mut s = s0;
        while s <= s1 + 1e-9 {
            for &o in &params.offsets {
                let q = region.ground_point(side, s, o);
                if !region.admissible(q, o) {
                    continue;
                }
                for &h in &params.heights {
                    out.push([q.x, q.y, h]);
                }
            }
            s += params.longitudinal_step;
        }
    }
    out
}

/// Scores `positions` and sorts by (score desc, y asc, height asc, x asc).
pub fn rank_lattice(
    positions: &[[f64; 3]],
    rig: &CameraRig,
    anchors: &[Vec2],
    phi_max: f64,
) -> Vec<Candidate> {
    let mut scored: Vec<Candidate> = positions
        .iter()
        .map(|&p| Candidate {
            position: p,
            score: score_position(p, rig, anchors, phi_max),
            rank: 0,
        })
        .collect();
    scored.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.position[1].total_cmp(&b.position[1]))
            .then(a.position[2].total_cmp(&b.position[2]))
            .then(a.position[0].total_cmp(&b.position[0]))
    });
    for (i, c) in scored.iter_mut().enumerate() {
        c.rank = i + 1;
    }
    scored
}

/// Top `params.top_n` roadside candidates for the given anchors.
pub fn rank_positions(
    frame: &SceneFrame,
    anchors: &[Vec2],
    params: &RankingParams,
) -> Result<Vec<Candidate>, AttackError> {
    params.validate()?;
    if anchors.is_empty() {
        return Err(AttackError::Config(
            "ranking needs at least one anchor".into(),
        ));
    }
    let lattice = roadside_lattice(frame, params);
    if lattice.is_empty() {
        return Err(AttackError::Config("empty roadside lattice".into()));
    }
    let mut ranked = rank_lattice(&lattice, &frame.rig, anchors, params.phi_max);
    ranked.truncate(params.top_n);
    Ok(ranked)
}
