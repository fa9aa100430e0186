use serde::{Deserialize, Serialize};

use super::planner::{PlanResult, Trajectory, VehicleParams};
use crate::geometry::{polyline_hits_polygon, Polyline2D, Vec2};
use crate::scene::Pose2;

/// Fraction of frames with at least one unreachable goal.
pub fn unreachable_goal_rate(results: &[PlanResult]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    results.iter().filter(|r| r.any_unreachable()).count() as f64 / results.len() as f64
}

/// True when the footprint at any pose of a reached trajectory touches any
/// of `boundaries`.
pub fn trajectories_unsafe(
    trajs: &[Trajectory],
    boundaries: &[&Polyline2D],
    vehicle: &VehicleParams,
) -> bool {
    let reach = vehicle.length.hypot(vehicle.width) / 2.0;
    trajs.iter().filter(|t| t.reached()).any(|t| {
        t.poses.iter().any(|&p| {
            let ring = vehicle.footprint(p);
            boundaries.iter().any(|b| {
                let near = b.points().windows(2).any(|w| {
                    crate::geometry::segment_distance(w[0], w[1], p.position(), p.position())
                        <= reach + 1e-6
                });
                near && polyline_hits_polygon(b.points(), &ring, 1e-6)
            })
        })
    })
}

/// Fraction of frames whose planned trajectories touch a ground-truth
/// boundary. Each frame pairs its trajectories with its boundaries.
pub fn unsafe_trajectory_rate(
    frames: &[(Vec<Trajectory>, Vec<Polyline2D>)],
    vehicle: &VehicleParams,
) -> f64 {
    if frames.is_empty() {
        return 0.0;
    }
    let n = frames
        .iter()
        .filter(|(t, b)| trajectories_unsafe(t, &b.iter().collect::<Vec<_>>(), vehicle))
        .count();
    n as f64 / frames.len() as f64
}

fn resample_poses(poses: &[Vec2], n: usize) -> Vec<Vec2> {
    let mut cum = vec![0.0];
    for w in poses.windows(2) {
        cum.push(cum.last().unwrap() + w[0].dist(w[1]));
    }
    let total = *cum.last().unwrap();
    (0..n)
        .map(|i| {
            let s = if n == 1 {
                0.0
            } else {
                total * i as f64 / (n - 1) as f64
            };
            let k = cum
                .partition_point(|&c| c <= s)
                .clamp(1, poses.len().max(2) - 1);
            if poses.len() == 1 || cum[k] - cum[k - 1] <= 0.0 {
                return poses[k.min(poses.len() - 1)];
            }
            let t = ((s - cum[k - 1]) / (cum[k] - cum[k - 1])).clamp(0.0, 1.0);
            poses[k - 1].lerp(poses[k], t)
        })
        .collect()
}

/// Mean pointwise distance after resampling both trajectories by arc length
/// to the larger pose count. `None` when either is empty.
pub fn ade(a: &[Pose2], b: &[Pose2]) -> Option<f64> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let n = a.len().max(b.len());
    let pa = resample_poses(&a.iter().map(|p| p.position()).collect::<Vec<_>>(), n);
    let pb = resample_poses(&b.iter().map(|p| p.position()).collect::<Vec<_>>(), n);
    Some(pa.iter().zip(&pb).map(|(p, q)| p.dist(*q)).sum::<f64>() / n as f64)
}

/// Counts behind the rates, kept alongside them in reports.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RateCounts {
    pub frames: usize,
    pub unreachable_frames: usize,
    pub unsafe_frames: usize,
}
