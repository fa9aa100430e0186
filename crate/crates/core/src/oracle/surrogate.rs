//! Deterministic surrogate map model with an explicit symmetry prior.
//!
//! The surrogate starts from the ground-truth map and keeps only what the
//! images still support: each densified ground-truth point snaps to the
//! strongest edge evidence inside a lateral corridor, points without
//! evidence are filled from their neighbors, and when the region around an
//! asymmetry anchor loses its evidence the diverging boundary is replaced
//! by the mirrored reference boundary. It is a stand-in for a learned model,
//! not a description of one.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::evidence::EvidenceMap;
use super::{MapOracle, OracleError, PredictedElement, PredictedMap, PREDICTED_POINTS};
use crate::attack::make_straightening_target;
use crate::classify::{classify_rule_based, RuleLabel, RuleThresholds};
use crate::geometry::{resample_by_spacing, resample_polyline, Polyline2D, Vec2};
use crate::raster::Image;
use crate::scene::{project_world_to_image, SceneFrame, Side};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateParams {
    /// Half-width of the evidence window in pixels.
    pub evidence_window: u32,
    pub evidence_thre: f64,
    /// Half-width of the lateral snap search (m).
    pub corridor: f64,
    pub corridor_step: f64,
    /// Half-width (points) of the median filter applied to snap offsets.
    pub offset_median_half: usize,
    /// Evidence margin within which a smaller snap offset is preferred.
    pub snap_tolerance: f64,
    /// Arc-length radius around an anchor inspected for evidence loss (m).
    pub mirror_window: f64,
    pub occlusion_fraction_thre: f64,
    /// Densification spacing of ground-truth elements (m).
    pub sample_spacing: f64,
    pub thresholds: RuleThresholds,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        Self {
            evidence_window: 4,
            evidence_thre: 0.3,
            corridor: 1.5,
            corridor_step: 0.25,
            snap_tolerance: 0.05,
            offset_median_half: 2,
            mirror_window: 4.0,
            occlusion_fraction_thre: 0.6,
            sample_spacing: 0.5,
            thresholds: RuleThresholds::default(),
        }
    }
}

impl SurrogateParams {
    /// Snap offsets ordered by preference on ties: smaller magnitude first,
    /// negative before positive.
    fn offsets(&self) -> Vec<f64> {
        let n = (self.corridor / self.corridor_step).round() as i64;
        let mut v: Vec<i64> = (-n..=n).collect();
        v.sort_by_key(|&i| (i.abs(), i));
        v.into_iter()
            .map(|i| i as f64 * self.corridor_step)
            .collect()
    }
}

struct Track {
    gt: Polyline2D,
    cum: Vec<f64>,
    snapped: Vec<Option<Vec2>>,
    evidence: Vec<f64>,
}

fn snap_element(
    el: &Polyline2D,
    frame: &SceneFrame,
    maps: &[EvidenceMap],
    params: &SurrogateParams,
    offsets: &[f64],
) -> Option<Track> {
    let gt = resample_by_spacing(el, params.sample_spacing).ok()?;
    let normals = gt.left_normals();
    let mut snapped = Vec::with_capacity(gt.len());
    let mut evidence = Vec::with_capacity(gt.len());
    for (q, n) in gt.points().iter().zip(&normals) {
        let Some((ci, _)) = frame.rig.best_facing(Vector3::new(q.x, q.y, 0.0)) else {
            snapped.push(None);
            evidence.push(0.0);
            continue;
        };
        let cam = &frame.rig.cameras[ci];
        let scores: Vec<f64> = offsets
            .iter()
            .map(|&o| {
                let p = *q + *n * o;
                match project_world_to_image(cam, Vector3::new(p.x, p.y, 0.0)) {
                    Some((u, v)) => maps[ci].score(u as u32, v as u32, params.evidence_window),
                    None => 0.0,
                }
            })
            .collect();
        let top = scores.iter().copied().fold(0.0, f64::max);
        // Offsets come in preference order, so the first near-maximal one wins.
        let pick = scores
            .iter()
            .position(|&e| e >= top - params.snap_tolerance)
            .unwrap_or(0);
        evidence.push(top);
        snapped.push((top >= params.evidence_thre).then_some(offsets[pick]));
    }
    // Median filtering of the offsets removes isolated snap outliers while
    // keeping shifts that persist over several points.
    let h = params.offset_median_half;
    let raw = snapped.clone();
    for j in 0..raw.len() {
        if raw[j].is_none() {
            continue;
        }
        let mut win: Vec<f64> = raw[j.saturating_sub(h)..(j + h + 1).min(raw.len())]
            .iter()
            .flatten()
            .copied()
            .collect();
        win.sort_by(f64::total_cmp);
        snapped[j] = Some(win[win.len() / 2]);
    }
    let snapped: Vec<Option<Vec2>> = snapped
        .iter()
        .zip(gt.points())
        .zip(&normals)
        .map(|((o, q), n)| o.map(|o| *q + *n * o))
        .collect();
    let cum = gt.cumulative_lengths();
    Some(Track {
        gt,
        cum,
        snapped,
        evidence,
    })
}

/// Fills lost points: interior runs by arc-length interpolation, end runs by
/// linear extrapolation. `None` when nothing survived.
fn fill(track: &Track) -> Option<Vec<Vec2>> {
    let valid: Vec<usize> = (0..track.snapped.len())
        .filter(|&i| track.snapped[i].is_some())
        .collect();
    let first = *valid.first()?;
    let last = *valid.last()?;
    let g = track.gt.points();
    let at = |i: usize| track.snapped[i].unwrap();
    let s = &track.cum;
    let extrap = |from: usize, other: Option<usize>, j: usize| -> Vec2 {
        match other {
            Some(k) if (s[k] - s[from]).abs() > 1e-12 => {
                let dir = (at(k) - at(from)) * (1.0 / (s[k] - s[from]));
                at(from) + dir * (s[j] - s[from])
            }
            _ => g[j] + (at(from) - g[from]),
        }
    };
    let mut out = Vec::with_capacity(g.len());
    let mut next_valid = 0usize;
    for j in 0..g.len() {
        if let Some(p) = track.snapped[j] {
            out.push(p);
            next_valid += 1;
            continue;
        }
        let p = if j < first {
            extrap(first, valid.get(1).copied(), j)
        } else if j > last {
            extrap(last, valid.len().checked_sub(2).map(|k| valid[k]), j)
        } else {
            let (a, b) = (valid[next_valid - 1], valid[next_valid]);
            let t = (s[j] - s[a]) / (s[b] - s[a]);
            at(a).lerp(at(b), t)
        };
        out.push(p);
    }
    Some(out)
}

fn arc_length_of(track: &Track, p: Vec2) -> f64 {
    track.gt.project(p).arc_length
}

/// Predicts the vectorized map of `frame` as seen through `images`.
pub fn surrogate_predict(
    frame: &SceneFrame,
    images: &[Image],
    params: &SurrogateParams,
) -> PredictedMap {
    let maps: Vec<EvidenceMap> = images.iter().map(EvidenceMap::new).collect();
    let offsets = params.offsets();
    let tracks: Vec<Option<Track>> = frame
        .gt_map
        .iter()
        .map(|el| snap_element(el, frame, &maps, params, &offsets))
        .collect();
    let mut filled: Vec<Option<Vec<Vec2>>> =
        tracks.iter().map(|t| t.as_ref().and_then(fill)).collect();

    // Symmetry fallback on the diverging boundary.
    let rv = classify_rule_based(
        &frame.left_boundary,
        &frame.right_boundary,
        &params.thresholds,
    );
    if rv.label == RuleLabel::Asymmetric {
        let (div_gt, ref_gt) = match rv.diverging_side {
            Side::Left => (&frame.left_boundary, &frame.right_boundary),
            _ => (&frame.right_boundary, &frame.left_boundary),
        };
        let di = frame.gt_map.iter().position(|e| e == div_gt);
        let ri = frame.gt_map.iter().position(|e| e == ref_gt);
        if let (Some(di), Some(ri)) = (di, ri) {
            if let (Some(track), Some(_), Some(div_pts), Some(ref_pts)) = (
                &tracks[di],
                &tracks[ri],
                filled[di].clone(),
                filled[ri].clone(),
            ) {
                for &anchor in &rv.anchors {
                    let sa = arc_length_of(track, anchor);
                    let window: Vec<usize> = (0..track.cum.len())
                        .filter(|&j| (track.cum[j] - sa).abs() <= params.mirror_window)
                        .collect();
                    if window.is_empty() {
                        continue;
                    }
                    let lost = window
                        .iter()
                        .filter(|&&j| track.snapped[j].is_none())
                        .count();
                    if (lost as f64) < params.occlusion_fraction_thre * window.len() as f64 {
                        continue;
                    }
                    // A lost run reaching back before the anchor is straightened
                    // from its start.
                    let ja = (0..track.cum.len())
                        .min_by(|&a, &b| {
                            (track.cum[a] - sa)
                                .abs()
                                .total_cmp(&(track.cum[b] - sa).abs())
                        })
                        .unwrap_or(0);
                    let mut j0 = ja;
                    while j0 > 0 && track.snapped[j0].is_none() && track.snapped[j0 - 1].is_none() {
                        j0 -= 1;
                    }
                    let cut = if j0 < ja {
                        div_pts[j0.saturating_sub(1)]
                    } else {
                        anchor
                    };
                    let div_poly = Polyline2D::new_dedup(div_pts.clone(), div_gt.class());
                    let ref_poly = Polyline2D::new_dedup(ref_pts.clone(), ref_gt.class());
                    if let (Ok(dp), Ok(rp)) = (div_poly, ref_poly) {
                        if let Ok(t) = make_straightening_target(&dp, &rp, cut) {
                            filled[di] = Some(t.target.points().to_vec());
                        }
                    }
                    break;
                }
            }
        }
    }

    let mut elements = Vec::new();
    for (el, (track, pts)) in frame.gt_map.iter().zip(tracks.iter().zip(filled)) {
        let (Some(track), Some(pts)) = (track, pts) else {
            continue;
        };
        let Ok(poly) = Polyline2D::new_dedup(pts, el.class()) else {
            continue;
        };
        if poly.length() < 1e-3 {
            continue;
        }
        let Ok(poly) = resample_polyline(&poly, PREDICTED_POINTS) else {
            continue;
        };
        let confidence = track.evidence.iter().sum::<f64>() / track.evidence.len() as f64;
        elements.push(PredictedElement {
            polyline: poly,
            confidence: confidence.clamp(0.0, 1.0),
        });
    }
    PredictedMap { elements }
}

#[derive(Debug, Clone)]
pub struct SurrogateOracle {
    pub params: SurrogateParams,
    queries: u64,
}

impl SurrogateOracle {
    pub fn new(params: SurrogateParams) -> Self {
        Self { params, queries: 0 }
    }
}

impl MapOracle for SurrogateOracle {
    fn predict(
        &mut self,
        frame: &SceneFrame,
        images: &[Image],
    ) -> Result<PredictedMap, OracleError> {
        self.queries += 1;
        Ok(surrogate_predict(frame, images, &self.params))
    }

    fn query_count(&self) -> u64 {
        self.queries
    }

    fn fresh(&self) -> Result<Box<dyn MapOracle>, OracleError> {
        Ok(Box::new(SurrogateOracle::new(self.params.clone())))
    }
}
