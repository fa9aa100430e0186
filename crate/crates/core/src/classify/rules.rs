use serde::{Deserialize, Serialize};

use crate::geometry::{resample_polyline, CurvatureProfile, GeometryError, Polyline2D, Vec2};
use crate::scene::{AsymLabel, Side, MIN_BOUNDARY_LENGTH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleThresholds {
    /// Curvature-difference threshold (1/m).
    pub dk_thre: f64,
    /// Ceiling on the straighter side's regional curvature (1/m).
    pub kbar_thre: f64,
    /// Per-point threshold for anchor marking (1/m).
    pub anchor_dk_thre: f64,
    /// Regional-curvature window (points, odd).
    pub window_len: usize,
    /// Common point count both boundaries are resampled to.
    pub resample_points: usize,
}

impl Default for RuleThresholds {
    fn default() -> Self {
        Self {
            dk_thre: 0.3,
            kbar_thre: 0.15,
            anchor_dk_thre: 0.3,
            window_len: 5,
            resample_points: 100,
        }
    }
}

impl RuleThresholds {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.dk_thre > 0.0 && self.kbar_thre > 0.0 && self.anchor_dk_thre > 0.0) {
            return Err(GeometryError::InvalidGeometry(
                "classifier thresholds must be positive".into(),
            ));
        }
        if self.window_len == 0 || self.window_len % 2 == 0 {
            return Err(GeometryError::InvalidWindow(self.window_len));
        }
        if self.resample_points < 3 {
            return Err(GeometryError::InsufficientPoints {
                needed: 3,
                got: self.resample_points,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleLabel {
    Symmetric,
    Asymmetric,
    NoBoundary,
}

impl RuleLabel {
    pub fn as_asym(self) -> Option<AsymLabel> {
        match self {
            RuleLabel::Symmetric => Some(AsymLabel::Symmetric),
            RuleLabel::Asymmetric => Some(AsymLabel::Asymmetric),
            RuleLabel::NoBoundary => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleVerdict {
    pub label: RuleLabel,
    pub dk_max: f64,
    pub anchors: Vec<Vec2>,
    pub diverging_side: Side,
}

impl RuleVerdict {
    fn no_boundary() -> Self {
        Self {
            label: RuleLabel::NoBoundary,
            dk_max: 0.0,
            anchors: Vec::new(),
            diverging_side: Side::None,
        }
    }
}

struct Aligned {
    left: Polyline2D,
    right: Polyline2D,
    kl: CurvatureProfile,
    kr: CurvatureProfile,
}

fn align(
    left: &Polyline2D,
    right: &Polyline2D,
    th: &RuleThresholds,
) -> Result<Aligned, GeometryError> {
    let left = resample_polyline(left, th.resample_points)?;
    let right = resample_polyline(right, th.resample_points)?;
    let kl = CurvatureProfile::of(&left, th.window_len)?;
    let kr = CurvatureProfile::of(&right, th.window_len)?;
    Ok(Aligned {
        left,
        right,
        kl,
        kr,
    })
}

impl Aligned {
    fn diff(&self, t: usize) -> f64 {
        (self.kl.pointwise[t] - self.kr.pointwise[t]).abs()
    }

    fn constrained(&self, t: usize, th: &RuleThresholds) -> bool {
        self.kl.regional[t].min(self.kr.regional[t]) < th.kbar_thre
    }

    /// Largest aligned curvature difference among indices where the
    /// straighter side stays below `kbar_thre`, with its index.
    fn max_diff(&self, th: &RuleThresholds) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for t in 0..self.kl.pointwise.len() {
            if !self.constrained(t, th) {
                continue;
            }
            let d = self.diff(t);
            if best.is_none_or(|(_, b)| d > b) {
                best = Some((t, d));
            }
        }
        best
    }
}

/// Constrained maximum curvature difference between two boundaries.
pub fn constrained_delta_k(
    left: &Polyline2D,
    right: &Polyline2D,
    th: &RuleThresholds,
) -> Result<f64, GeometryError> {
    let a = align(left, right, th)?;
    Ok(a.max_diff(th).map_or(0.0, |(_, d)| d))
}

/// Rule-based symmetric/asymmetric classification of a boundary pair.
pub fn classify_rule_based(
    left: &Polyline2D,
    right: &Polyline2D,
    th: &RuleThresholds,
) -> RuleVerdict {
    if left.length() < MIN_BOUNDARY_LENGTH || right.length() < MIN_BOUNDARY_LENGTH {
        return RuleVerdict::no_boundary();
    }
    let Ok(a) = align(left, right, th) else {
        return RuleVerdict::no_boundary();
    };
    let Some((t_star, dk_max)) = a.max_diff(th) else {
        return RuleVerdict {
            label: RuleLabel::Symmetric,
            dk_max: 0.0,
            anchors: Vec::new(),
            diverging_side: Side::None,
        };
    };
    if dk_max <= th.dk_thre {
        return RuleVerdict {
            label: RuleLabel::Symmetric,
            dk_max,
            anchors: Vec::new(),
            diverging_side: Side::None,
        };
    }
    let side = if a.kl.regional[t_star] > a.kr.regional[t_star] {
        Side::Left
    } else {
        Side::Right
    };
    let (div, div_k, other_k) = match side {
        Side::Left => (&a.left, &a.kl, &a.kr),
        _ => (&a.right, &a.kr, &a.kl),
    };
    // Onsets of runs where the diverging side bends more than the other by
    // the anchor threshold while the other side stays straight.
    let mut anchors = Vec::new();
    let mut in_run = false;
    for t in 0..div.len() {
        let hit = a.diff(t) > th.anchor_dk_thre
            && div_k.pointwise[t] > other_k.pointwise[t]
            && a.constrained(t, th);
        if hit && !in_run {
            anchors.push(div.points()[t]);
        }
        in_run = hit;
    }
    if anchors.is_empty() {
        anchors.push(div.points()[t_star]);
    }
    RuleVerdict {
        label: RuleLabel::Asymmetric,
        dk_max,
        anchors,
        diverging_side: side,
    }
}

/// Classification tolerant of missing boundaries.
pub fn classify_optional(
    left: Option<&Polyline2D>,
    right: Option<&Polyline2D>,
    th: &RuleThresholds,
) -> RuleVerdict {
    match (left, right) {
        (Some(l), Some(r)) => classify_rule_based(l, r, th),
        _ => RuleVerdict::no_boundary(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Balance {
    pub n_total: usize,
    pub n_asym: usize,
    pub fraction: f64,
}

pub fn audit_dataset_balance(labels: &[AsymLabel]) -> Balance {
    let n_total = labels.len();
    let n_asym = labels
        .iter()
        .filter(|l| **l == AsymLabel::Asymmetric)
        .count();
    let fraction = if n_total == 0 {
        0.0
    } else {
        n_asym as f64 / n_total as f64
    };
    Balance {
        n_total,
        n_asym,
        fraction,
    }
}
