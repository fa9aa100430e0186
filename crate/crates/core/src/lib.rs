//! Asymmetry-aware attacks on online vectorized HD-map construction:
//! synthetic road scenes, rule-based and VLM-based road-shape
//! classification, physical interference models, black-box map oracles,
//! attack search and downstream planning evaluation.

pub mod attack;
pub mod classify;
pub mod eval;
pub mod geometry;
pub mod interference;
pub mod oracle;
pub mod raster;
pub mod scene;
