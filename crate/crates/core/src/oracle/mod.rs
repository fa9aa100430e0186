//! Queryable map-construction models: the built-in symmetry-biased
//! surrogate and an adapter for external model processes.

mod evidence;
mod external;
mod surrogate;

pub use evidence::{edge_evidence, gradient_magnitude, EvidenceMap};
pub use external::{
    decode_message, encode_message, read_message, wire_to_map, write_message, ExternalOracle,
    WireElement, WireReply, WireRequest, WIRE_VERSION,
};
pub use surrogate::{surrogate_predict, SurrogateOracle, SurrogateParams};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{chamfer_distance, ClassTag, Polyline2D};
use crate::raster::Image;
use crate::scene::SceneFrame;

/// Point count every predicted polyline is resampled to.
pub const PREDICTED_POINTS: usize = 20;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle unavailable: {0}")]
    Unavailable(String),
    #[error("oracle reply decode error at byte {offset}: {message}")]
    Decode { offset: usize, message: String },
    #[error("oracle i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("oracle protocol: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedElement {
    #[serde(flatten)]
    pub polyline: Polyline2D,
    pub confidence: f64,
}

impl PredictedElement {
    pub fn class(&self) -> ClassTag {
        self.polyline.class()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictedMap {
    pub elements: Vec<PredictedElement>,
}

impl PredictedMap {
    pub fn of_class(&self, class: ClassTag) -> impl Iterator<Item = &PredictedElement> {
        self.elements.iter().filter(move |e| e.class() == class)
    }

    /// Boundary-class element closest in Chamfer distance to `gt`.
    pub fn match_boundary(&self, gt: &Polyline2D) -> Option<&PredictedElement> {
        self.of_class(ClassTag::Boundary)
            .filter_map(|e| chamfer_distance(&e.polyline, gt).ok().map(|d| (d, e)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, e)| e)
    }

    /// Predicted counterparts of the frame's designated left and right boundaries.
    pub fn designated_boundaries(
        &self,
        frame: &SceneFrame,
    ) -> (Option<&Polyline2D>, Option<&Polyline2D>) {
        (
            self.match_boundary(&frame.left_boundary)
                .map(|e| &e.polyline),
            self.match_boundary(&frame.right_boundary)
                .map(|e| &e.polyline),
        )
    }
}

/// Black-box map model `M`.
pub trait MapOracle: Send {
    fn predict(
        &mut self,
        frame: &SceneFrame,
        images: &[Image],
    ) -> Result<PredictedMap, OracleError>;

    /// Number of `predict` calls made so far.
    fn query_count(&self) -> u64;

    /// Independent instance with a zero query count.
    fn fresh(&self) -> Result<Box<dyn MapOracle>, OracleError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Surrogate,
    External,
}

impl std::str::FromStr for OracleKind {
    type Err = OracleError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "surrogate" => Ok(OracleKind::Surrogate),
            "external" => Ok(OracleKind::External),
            _ => Err(OracleError::Unavailable(format!(
                "unknown oracle kind '{s}'"
            ))),
        }
    }
}

/// External oracle process command line.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExternalCommand {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
}

pub fn make_oracle(
    kind: OracleKind,
    params: &SurrogateParams,
    external: Option<&ExternalCommand>,
) -> Result<Box<dyn MapOracle>, OracleError> {
    match kind {
        OracleKind::Surrogate => Ok(Box::new(SurrogateOracle::new(params.clone()))),
        OracleKind::External => {
            let cmd = external.ok_or_else(|| {
                OracleError::Unavailable("no external oracle command configured".into())
            })?;
            Ok(Box::new(ExternalOracle::spawn(cmd)?))
        }
    }
}
