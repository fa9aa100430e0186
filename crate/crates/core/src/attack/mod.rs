//! Attack planning: roadside position ranking, attack objectives, black-box
//! position search with baselines, and patch-pattern descent.

mod objectives;
mod pgd;
mod ranking;
mod search;

pub use objectives::{
    attack_focus, directional_loss, make_straightening_target, outward_offsets, scene_flip_loss,
    straightening_loss, untargeted_loss, FlipDirection, ObjectiveKind, ObjectiveSpec,
    ObjectiveWeights, StraighteningTarget,
};
pub use pgd::{
    cells_to_pattern, optimize_patch, pgd_at_position, road_color_distance, PgdParams, PgdRun,
};
pub use ranking::{
    rank_lattice, rank_positions, roadside_lattice, score_position, Candidate, RankingParams,
    RoadsideRegion,
};
pub use search::{
    evaluate_config, optimize_blackbox, pso_search, random_search, PsoParams, RegionBounds,
    SearchTrace, TraceEntry,
};

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::interference::InterferenceError;
use crate::oracle::OracleError;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("attack config: {0}")]
    Config(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Interference(#[from] InterferenceError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
