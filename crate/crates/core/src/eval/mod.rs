//! Downstream impact: map AP, planning on predicted maps, and the
//! unreachable-goal, unsafe-trajectory and displacement metrics.

mod ap;
mod dubins;
mod metrics;
mod planner;

pub use ap::{average_precision, map_ap, ApReport, DEFAULT_AP_THRESHOLDS};
pub use dubins::DubinsPath;
pub use metrics::{
    ade, trajectories_unsafe, unreachable_goal_rate, unsafe_trajectory_rate, RateCounts,
};
pub use planner::{
    path_is_free, plan, reachable_bfs, GoalStatus, OccupancyGrid, PlanResult, PlannerParams,
    PlanningProblem, Trajectory, VehicleParams,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ClassTag, Polyline2D};
use crate::oracle::PredictedMap;
use crate::scene::SceneFrame;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid evaluation input: {0}")]
    Input(String),
}

/// Planning outcome of one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEval {
    pub scene_id: String,
    pub plan: PlanResult,
    pub unreachable: bool,
    pub unsafe_trajectory: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRow {
    pub scene_id: String,
    pub goals: usize,
    pub reached: usize,
    pub start_blocked: bool,
    pub unreachable: bool,
    pub unsafe_trajectory: bool,
}

impl From<&SceneEval> for SceneRow {
    fn from(e: &SceneEval) -> Self {
        Self {
            scene_id: e.scene_id.clone(),
            goals: e.plan.trajectories.len(),
            reached: e.plan.trajectories.iter().filter(|t| t.reached()).count(),
            start_blocked: e.plan.start_blocked,
            unreachable: e.unreachable,
            unsafe_trajectory: e.unsafe_trajectory,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ap: ApReport,
    pub ugr: f64,
    pub uptr: f64,
    pub counts: RateCounts,
    /// Sorted by scene id.
    pub rows: Vec<SceneRow>,
}

fn gt_boundaries(frame: &SceneFrame) -> Vec<&Polyline2D> {
    frame
        .gt_map
        .iter()
        .filter(|e| e.class() == ClassTag::Boundary)
        .collect()
}

/// Plans from the ego pose to every goal of `frame` over the boundaries of
/// `pred`, and checks the result against the ground-truth boundaries.
pub fn evaluate_scene(
    frame: &SceneFrame,
    pred: &PredictedMap,
    params: &PlannerParams,
) -> SceneEval {
    let walls: Vec<&Polyline2D> = pred
        .of_class(ClassTag::Boundary)
        .map(|e| &e.polyline)
        .collect();
    let problem = PlanningProblem::from_boundaries(
        &walls,
        &frame.bev_range,
        frame.ego_pose,
        frame.goals(),
        params,
    );
    let plan = plan(&problem, params);
    let unsafe_trajectory =
        trajectories_unsafe(&plan.trajectories, &gt_boundaries(frame), &params.vehicle);
    SceneEval {
        scene_id: frame.scene_id.clone(),
        unreachable: plan.any_unreachable(),
        unsafe_trajectory,
        plan,
    }
}

/// Assembles a report; `frames`, `preds` and `evals` are index-aligned.
/// Output order depends only on scene ids.
pub fn build_report(
    frames: &[&SceneFrame],
    preds: &[PredictedMap],
    evals: &[SceneEval],
    thresholds: &[f64],
) -> Result<MetricReport, EvalError> {
    if frames.len() != preds.len() || frames.len() != evals.len() {
        return Err(EvalError::Input(
            "frames, predictions and evaluations differ in length".into(),
        ));
    }
    let mut order: Vec<usize> = (0..frames.len()).collect();
    order.sort_by(|&a, &b| frames[a].scene_id.cmp(&frames[b].scene_id));
    let gts: Vec<Vec<Polyline2D>> = order.iter().map(|&i| frames[i].gt_map.clone()).collect();
    let ps: Vec<PredictedMap> = order.iter().map(|&i| preds[i].clone()).collect();
    let ap = map_ap(&ps, &gts, thresholds)?;
    let rows: Vec<SceneRow> = order.iter().map(|&i| SceneRow::from(&evals[i])).collect();
    let n = rows.len();
    let counts = RateCounts {
        frames: n,
        unreachable_frames: rows.iter().filter(|r| r.unreachable).count(),
        unsafe_frames: rows.iter().filter(|r| r.unsafe_trajectory).count(),
    };
    let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    Ok(MetricReport {
        ap,
        ugr: frac(counts.unreachable_frames),
        uptr: frac(counts.unsafe_frames),
        counts,
        rows,
    })
}

/// Mean displacement between clean and attacked trajectories over goals
/// reached in both runs. Pairs are matched by scene id and goal order.
pub fn mean_ade(clean: &[SceneEval], attacked: &[SceneEval]) -> Option<f64> {
    let mut vals = Vec::new();
    for c in clean {
        let Some(a) = attacked.iter().find(|a| a.scene_id == c.scene_id) else {
            continue;
        };
        for (tc, ta) in c.plan.trajectories.iter().zip(&a.plan.trajectories) {
            if let Some(d) = ade(&tc.poses, &ta.poses) {
                vals.push(d);
            }
        }
    }
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}
