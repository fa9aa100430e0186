use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::geometry::{chamfer_distance, ClassTag, Polyline2D};
use crate::oracle::PredictedMap;

pub const DEFAULT_AP_THRESHOLDS: [f64; 3] = [0.5, 1.0, 1.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    pub per_class: BTreeMap<ClassTag, f64>,
    pub map: f64,
    /// Classes absent from the ground truth, left out of the mean.
    pub skipped: Vec<ClassTag>,
}

/// All-point interpolated area under the precision-recall curve of
/// detections given as `(confidence, is_true_positive)`. Ties in confidence
/// keep their input order.
pub fn average_precision(detections: &[(f64, bool)], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[b].0.total_cmp(&detections[a].0));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut recall = vec![0.0];
    let mut precision = vec![1.0];
    for i in order {
        if detections[i].1 {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (0..precision.len() - 1).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    (1..recall.len())
        .map(|i| (recall[i] - recall[i - 1]) * precision[i])
        .sum()
}

/// Greedy confidence-ordered matching within one scene: each prediction
/// takes the closest still-unmatched ground truth if it lies within
/// `threshold`.
fn match_scene(
    preds: &[(&Polyline2D, f64)],
    gts: &[&Polyline2D],
    threshold: f64,
) -> Vec<(f64, bool)> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].1.total_cmp(&preds[a].1));
    let mut taken = vec![false; gts.len()];
    let mut out = vec![(0.0, false); preds.len()];
    for i in order {
        let (poly, conf) = preds[i];
        let best = gts
            .iter()
            .enumerate()
            .filter(|(j, _)| !taken[*j])
            .filter_map(|(j, g)| chamfer_distance(poly, g).ok().map(|d| (j, d)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let hit = match best {
            Some((j, d)) if d <= threshold => {
                taken[j] = true;
                true
            }
            _ => false,
        };
        out[i] = (conf, hit);
    }
    out
}

/// Chamfer-threshold average precision per class and its mean over the
/// classes present in the ground truth.
pub fn map_ap(
    preds: &[PredictedMap],
    gts: &[Vec<Polyline2D>],
    thresholds: &[f64],
) -> Result<ApReport, EvalError> {
    if preds.len() != gts.len() {
        return Err(EvalError::Input(format!(
            "{} predictions for {} scenes",
            preds.len(),
            gts.len()
        )));
    }
    if thresholds.is_empty() || thresholds.windows(2).any(|w| w[0] > w[1]) || thresholds[0] <= 0.0 {
        return Err(EvalError::Input(
            "AP thresholds must be positive and ascending".into(),
        ));
    }
    let mut per_class = BTreeMap::new();
    let mut skipped = Vec::new();
    for class in ClassTag::ALL {
        let n_gt: usize = gts
            .iter()
            .map(|g| g.iter().filter(|e| e.class() == class).count())
            .sum();
        if n_gt == 0 {
            skipped.push(class);
            continue;
        }
        let mut total = 0.0;
        for &t in thresholds {
            let mut dets = Vec::new();
            for (p, g) in preds.iter().zip(gts) {
                let ps: Vec<(&Polyline2D, f64)> = p
                    .of_class(class)
                    .map(|e| (&e.polyline, e.confidence))
                    .collect();
                let gs: Vec<&Polyline2D> = g.iter().filter(|e| e.class() == class).collect();
                dets.extend(match_scene(&ps, &gs, t));
            }
            total += average_precision(&dets, n_gt);
        }
        per_class.insert(class, total / thresholds.len() as f64);
    }
    let map = if per_class.is_empty() {
        0.0
    } else {
        per_class.values().sum::<f64>() / per_class.len() as f64
    };
    Ok(ApReport {
        per_class,
        map,
        skipped,
    })
}
