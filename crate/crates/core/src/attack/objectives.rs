use serde::{Deserialize, Serialize};

use super::AttackError;
use crate::classify::{constrained_delta_k, RuleLabel, RuleThresholds, RuleVerdict};
use crate::geometry::{chamfer_distance, resample_polyline, GeometryError, Polyline2D, Vec2};
use crate::oracle::{PredictedMap, PREDICTED_POINTS};
use crate::scene::{SceneFrame, Side};

/// Straightened target boundary `V_tar`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StraighteningTarget {
    pub target: Polyline2D,
    pub w_avg: f64,
    /// Index of the div vertex closest to the anchor.
    pub anchor_index: usize,
    /// Set when the reference ends before the diverging boundary does.
    pub truncated: bool,
}

/// Keeps `div` up to the anchor and continues with `refb` shifted onto
/// div's side by the mean pre-anchor road width.
pub fn make_straightening_target(
    div: &Polyline2D,
    refb: &Polyline2D,
    anchor: Vec2,
) -> Result<StraighteningTarget, GeometryError> {
    let dp = div.points();
    let k = (0..dp.len())
        .min_by(|&a, &b| dp[a].dist(anchor).total_cmp(&dp[b].dist(anchor)))
        .expect("polyline has points");
    let w_avg = dp[..=k].iter().map(|&p| refb.distance_to(p)).sum::<f64>() / (k + 1) as f64;

    let foot = refb.project(dp[k]);
    let rp = refb.points();
    let seg = foot.segment.min(rp.len() - 2);
    let tangent = rp[seg + 1] - rp[seg];
    let s = if tangent.cross(dp[k] - foot.point) < 0.0 {
        -1.0
    } else {
        1.0
    };

    let normals = refb.left_normals();
    let cum = refb.cumulative_lengths();
    let shifted = rp.iter().zip(&normals).map(|(&r, &n)| r + n * (s * w_avg));
    let mut pts: Vec<Vec2> = if k == 0 {
        shifted.collect()
    } else {
        let mut v = dp[..=k].to_vec();
        v.extend(
            shifted
                .zip(&cum)
                .filter(|(_, &c)| c > foot.arc_length + 1e-9)
                .map(|(p, _)| p),
        );
        v
    };
    if pts.len() < 2 && k == 0 {
        pts = dp.to_vec();
    }
    let div_rest = div.length() - div.cumulative_lengths()[k];
    let ref_rest = refb.length() - foot.arc_length;
    let truncated = ref_rest + 1e-6 < div_rest;
    if truncated {
        log::debug!("straightening target truncated: {ref_rest:.2} m of reference for {div_rest:.2} m of div");
    }
    let target = Polyline2D::new_dedup(pts, div.class())?;
    Ok(StraighteningTarget {
        target,
        w_avg,
        anchor_index: k,
        truncated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Straighten,
    EarlyTurn,
    Untargeted,
    SceneFlip,
}

impl std::str::FromStr for ObjectiveKind {
    type Err = AttackError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "straighten" | "rsa" => Ok(Self::Straighten),
            "early_turn" | "eta" => Ok(Self::EarlyTurn),
            "untargeted" => Ok(Self::Untargeted),
            "scene_flip" => Ok(Self::SceneFlip),
            _ => Err(AttackError::Config(format!("unknown objective '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipDirection {
    ToSymmetric,
    ToAsymmetric,
}

/// Scalar knobs shared by all objectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveWeights {
    pub alpha: f64,
    pub beta: f64,
    /// Loss contribution of a missing boundary (m).
    pub miss_penalty: f64,
    /// Outward displacement assumed for a missing boundary is twice this (m).
    pub corridor: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            miss_penalty: 50.0,
            corridor: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    pub target: Option<Polyline2D>,
    pub alpha: f64,
    pub beta: f64,
    pub gt_div: Option<Polyline2D>,
    pub centerline: Option<Polyline2D>,
    pub gt_left: Option<Polyline2D>,
    pub gt_right: Option<Polyline2D>,
    pub flip_direction: Option<FlipDirection>,
    pub miss_penalty: f64,
    pub corridor: f64,
    pub thresholds: RuleThresholds,
}

/// Diverging side and anchors used to aim an attack at `frame`. Symmetric
/// scenes have no anchor; the right boundary is used with a pseudo-anchor
/// `fallback_ahead` meters in front of the ego.
pub fn attack_focus(
    frame: &SceneFrame,
    verdict: &RuleVerdict,
    fallback_ahead: f64,
) -> (Side, Vec<Vec2>) {
    if verdict.label == RuleLabel::Asymmetric && !verdict.anchors.is_empty() {
        return (verdict.diverging_side, verdict.anchors.clone());
    }
    let b = &frame.right_boundary;
    let q = Vec2::new(frame.ego_pose.x, frame.ego_pose.y + fallback_ahead);
    (Side::Right, vec![b.project(q).point])
}

impl ObjectiveSpec {
    fn base(kind: ObjectiveKind, w: &ObjectiveWeights, thresholds: &RuleThresholds) -> Self {
        Self {
            kind,
            target: None,
            alpha: w.alpha,
            beta: w.beta,
            gt_div: None,
            centerline: None,
            gt_left: None,
            gt_right: None,
            flip_direction: None,
            miss_penalty: w.miss_penalty,
            corridor: w.corridor,
            thresholds: thresholds.clone(),
        }
    }

    /// Builds the objective of `kind` for a scene given its rule verdict.
    pub fn for_frame(
        kind: ObjectiveKind,
        frame: &SceneFrame,
        verdict: &RuleVerdict,
        anchors: &[Vec2],
        side: Side,
        w: &ObjectiveWeights,
        thresholds: &RuleThresholds,
    ) -> Result<Self, AttackError> {
        let mut spec = Self::base(kind, w, thresholds);
        let (div, refb) = frame
            .boundaries_by_side(side)
            .ok_or_else(|| AttackError::Config("objective needs a diverging side".into()))?;
        match kind {
            ObjectiveKind::Straighten => {
                let anchor = *anchors
                    .first()
                    .ok_or_else(|| AttackError::Config("no anchor for straightening".into()))?;
                let n = thresholds.resample_points;
                let t = make_straightening_target(
                    &resample_polyline(div, n)?,
                    &resample_polyline(refb, n)?,
                    anchor,
                )?;
                spec.target = Some(t.target);
                spec.gt_div = Some(div.clone());
            }
            ObjectiveKind::EarlyTurn => {
                spec.gt_div = Some(div.clone());
                spec.centerline = Some(frame.centerline.clone());
            }
            ObjectiveKind::Untargeted => {}
            ObjectiveKind::SceneFlip => {
                spec.flip_direction = Some(if verdict.label == RuleLabel::Asymmetric {
                    FlipDirection::ToSymmetric
                } else {
                    FlipDirection::ToAsymmetric
                });
            }
        }
        spec.gt_left = Some(frame.left_boundary.clone());
        spec.gt_right = Some(frame.right_boundary.clone());
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(AttackError::Config(
                "alpha and beta must be non-negative".into(),
            ));
        }
        let missing = match self.kind {
            ObjectiveKind::Straighten => self.target.is_none() || self.gt_div.is_none(),
            ObjectiveKind::EarlyTurn => self.gt_div.is_none() || self.centerline.is_none(),
            ObjectiveKind::Untargeted => self.gt_left.is_none() || self.gt_right.is_none(),
            ObjectiveKind::SceneFlip => {
                self.flip_direction.is_none() || self.gt_left.is_none() || self.gt_right.is_none()
            }
        };
        if missing {
            return Err(AttackError::Config(format!(
                "objective {:?} lacks a required field",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn loss(&self, pred: &PredictedMap) -> f64 {
        match self.kind {
            ObjectiveKind::Straighten => straightening_loss(pred, self),
            ObjectiveKind::EarlyTurn => directional_loss(pred, self),
            ObjectiveKind::Untargeted => untargeted_pair_loss(
                pred,
                self.gt_left.as_ref().expect("validated"),
                self.gt_right.as_ref().expect("validated"),
                self.miss_penalty,
            ),
            ObjectiveKind::SceneFlip => scene_flip_loss(pred, self),
        }
    }
}

/// Chamfer distance from the prediction matched to the diverging boundary
/// to the straightened target.
pub fn straightening_loss(pred: &PredictedMap, spec: &ObjectiveSpec) -> f64 {
    let (Some(target), Some(gt_div)) = (&spec.target, &spec.gt_div) else {
        return spec.miss_penalty;
    };
    pred.match_boundary(gt_div)
        .and_then(|e| chamfer_distance(&e.polyline, target).ok())
        .unwrap_or(spec.miss_penalty)
}

/// Signed displacement of `pred` from `gt_div` along the unit directions
/// from the centerline toward `gt_div`, after resampling all three to the
/// predicted point count. Positive is outward.
pub fn outward_offsets(
    pred: &Polyline2D,
    gt_div: &Polyline2D,
    center: &Polyline2D,
) -> Result<Vec<f64>, GeometryError> {
    let n = PREDICTED_POINTS;
    let (p, g, c) = (
        resample_polyline(pred, n)?,
        resample_polyline(gt_div, n)?,
        resample_polyline(center, n)?,
    );
    Ok(p.points()
        .iter()
        .zip(g.points())
        .zip(c.points())
        .map(|((pv, gv), cv)| (*pv - *gv).dot((*gv - *cv).normalized()))
        .collect())
}

/// Outward displacement rewarded by `alpha`, inward penalized by `beta`.
pub fn directional_loss(pred: &PredictedMap, spec: &ObjectiveSpec) -> f64 {
    let (Some(gt_div), Some(center)) = (&spec.gt_div, &spec.centerline) else {
        return 0.0;
    };
    let missing = -spec.alpha * spec.corridor * 2.0;
    let Some(m) = pred.match_boundary(gt_div) else {
        return missing;
    };
    let Ok(offsets) = outward_offsets(&m.polyline, gt_div, center) else {
        return missing;
    };
    let outward: f64 = offsets.iter().map(|o| -o.max(0.0)).sum();
    let inward: f64 = offsets.iter().map(|o| (-o).max(0.0)).sum();
    (spec.alpha * outward + spec.beta * inward) / offsets.len() as f64
}

/// Negated sum of left and right boundary Chamfer errors.
pub fn untargeted_loss(pred: &PredictedMap, frame: &SceneFrame, miss_penalty: f64) -> f64 {
    untargeted_pair_loss(
        pred,
        &frame.left_boundary,
        &frame.right_boundary,
        miss_penalty,
    )
}

fn untargeted_pair_loss(
    pred: &PredictedMap,
    left: &Polyline2D,
    right: &Polyline2D,
    miss_penalty: f64,
) -> f64 {
    let term = |gt: &Polyline2D| {
        pred.match_boundary(gt)
            .and_then(|e| chamfer_distance(&e.polyline, gt).ok())
            .unwrap_or(miss_penalty)
    };
    -(term(left) + term(right))
}

/// Constrained curvature difference of the predicted boundary pair, signed
/// by the flip direction.
pub fn scene_flip_loss(pred: &PredictedMap, spec: &ObjectiveSpec) -> f64 {
    let (Some(gl), Some(gr)) = (&spec.gt_left, &spec.gt_right) else {
        return 0.0;
    };
    let dk = match (pred.match_boundary(gl), pred.match_boundary(gr)) {
        (Some(l), Some(r)) => {
            constrained_delta_k(&l.polyline, &r.polyline, &spec.thresholds).unwrap_or(0.0)
        }
        _ => 0.0,
    };
    match spec.flip_direction {
        Some(FlipDirection::ToAsymmetric) => -dk,
        _ => dk,
    }
}
