//! Run configuration: one TOML file, overridable from the command line.
//!
//! ```toml
//! seed = 7
//! out = "runs/demo"
//!
//! [suite]
//! counts = { fork = 10, straight = 10 }
//!
//! [objective]
//! kind = "straighten"
//!
//! [attack]
//! vector = "blinding"
//! strategy = "ranked"
//! budget = 400
//!
//! [oracle]
//! kind = "surrogate"
//!
//! [vlm]
//! enabled = false
//! endpoint = "http://localhost:8000/v1/chat/completions"
//! token_env = "ASYMMAP_VLM_TOKEN"
//! ```
//!
//! Every other table (`classifier`, `ranking`, `attack.flashlight`,
//! `attack.pgd`, `attack.region`, `attack.pso`, `oracle.surrogate`,
//! `planner`, `eval`) is optional and takes the library defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use asymmap::attack::{ObjectiveKind, ObjectiveWeights, PgdParams, PsoParams, RankingParams, RegionBounds};
use asymmap::classify::RuleThresholds;
use asymmap::eval::{PlannerParams, DEFAULT_AP_THRESHOLDS};
use asymmap::interference::{AttackKind, FlashlightSpec};
use asymmap::oracle::{ExternalCommand, OracleKind, SurrogateParams};
use asymmap::scene::{RenderConfig, RoadKind, SuiteSpec};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Mandatory, from the file or `--seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub suite: SuiteConfig,
    /// Existing scene directories used instead of a generated suite.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scene_paths: Vec<PathBuf>,
    #[serde(default)]
    pub classifier: RuleThresholds,
    /// Defaults depend on the attack vector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranking: Option<RankingParams>,
    #[serde(default)]
    pub objective: ObjectiveConfig,
    #[serde(default)]
    pub attack: AttackSection,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub vlm: VlmConfig,
    #[serde(default)]
    pub planner: PlannerParams,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("asymmap-run")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub counts: BTreeMap<RoadKind, usize>,
    pub branch_curvature: (f64, f64),
    pub anchor_distance: (f64, f64),
    pub render: RenderConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        let s = SuiteSpec::balanced(5, 5, 0);
        Self { counts: s.counts, branch_curvature: s.branch_curvature, anchor_distance: s.anchor_distance, render: s.render }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub kind: ObjectiveKind,
    pub weights: ObjectiveWeights,
    /// Distance ahead of the ego of the pseudo-anchor used on scenes
    /// without an anchor (m).
    pub fallback_ahead: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self { kind: ObjectiveKind::Straighten, weights: ObjectiveWeights::default(), fallback_ahead: 12.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Ranked candidates, black-box for blinding and PGD for patches.
    Ranked,
    Random,
    Pso,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackScope {
    /// Scenes the classifier labels asymmetric.
    Asymmetric,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub vector: AttackKind,
    pub strategy: Strategy,
    pub scope: AttackScope,
    /// Oracle queries per scene.
    pub budget: usize,
    pub flashlight: FlashlightSpec,
    pub pgd: PgdParams,
    pub region: RegionBounds,
    pub pso: PsoParams,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self {
            vector: AttackKind::Blinding,
            strategy: Strategy::Ranked,
            scope: AttackScope::Asymmetric,
            budget: 400,
            flashlight: FlashlightSpec::default(),
            pgd: PgdParams::default(),
            region: RegionBounds::default(),
            pso: PsoParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub kind: OracleKind,
    pub surrogate: SurrogateParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external: Option<ExternalCommand>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { kind: OracleKind::Surrogate, surrogate: SurrogateParams::default(), external: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VlmConfig {
    pub enabled: bool,
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub token_env: String,
    pub max_retries: u32,
    pub timeout_s: u64,
}

impl Default for VlmConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            endpoint: String::new(),
            model: "gpt-4o".into(),
            token_env: "ASYMMAP_VLM_TOKEN".into(),
            max_retries: 3,
            timeout_s: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub ap_thresholds: Vec<f64>,
    /// Write one BEV overlay per scene.
    pub overlays: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { ap_thresholds: DEFAULT_AP_THRESHOLDS.to_vec(), overlays: true }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out: default_out(),
            suite: SuiteConfig::default(),
            scene_paths: Vec::new(),
            classifier: RuleThresholds::default(),
            ranking: None,
            objective: ObjectiveConfig::default(),
            attack: AttackSection::default(),
            oracle: OracleConfig::default(),
            vlm: VlmConfig::default(),
            planner: PlannerParams::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Relative paths inside the file resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in &mut cfg.scene_paths {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated config has a seed")
    }

    pub fn suite_spec(&self) -> SuiteSpec {
        SuiteSpec {
            counts: self.suite.counts.clone(),
            seed: self.seed(),
            branch_curvature: self.suite.branch_curvature,
            anchor_distance: self.suite.anchor_distance,
            render: self.suite.render.clone(),
        }
    }

    pub fn ranking_params(&self) -> RankingParams {
        self.ranking.clone().unwrap_or_else(|| match self.attack.vector {
            AttackKind::Blinding => RankingParams::blinding(self.attack.flashlight.beam_angle),
            AttackKind::Patch => RankingParams::patch(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed.is_none() {
            return Err(CliError::Config("a seed is required (config `seed` or --seed)".into()));
        }
        for p in &self.scene_paths {
            if !p.is_dir() {
                return Err(CliError::Config(format!("scene path {} does not exist", p.display())));
            }
        }
        self.classifier.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.ranking_params().validate()?;
        self.attack.flashlight.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.attack.vector == AttackKind::Patch {
            self.attack.pgd.validate()?;
            if self.attack.strategy != Strategy::Ranked {
                return Err(CliError::Config("patch attacks only support the ranked strategy".into()));
            }
        }
        if self.attack.budget == 0 {
            return Err(CliError::Config("attack.budget must be at least 1".into()));
        }
        let t = &self.eval.ap_thresholds;
        if t.is_empty() || t[0] <= 0.0 || t.windows(2).any(|w| w[0] > w[1]) {
            return Err(CliError::Config("eval.ap_thresholds must be positive and ascending".into()));
        }
        if self.oracle.kind == OracleKind::External && self.oracle.external.is_none() {
            return Err(CliError::Config("oracle.kind = external needs an [oracle.external] program".into()));
        }
        if self.vlm.enabled && self.vlm.endpoint.is_empty() {
            return Err(CliError::Config("vlm.enabled needs vlm.endpoint".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file() {
        let c = RunConfig::from_toml("seed = 3\n[suite]\ncounts = { fork = 2 }\n").unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.suite.counts[&RoadKind::Fork], 2);
        c.validate().unwrap();
    }

    #[test]
    fn seed_is_mandatory() {
        let c = RunConfig::from_toml("out = \"x\"").unwrap();
        assert!(matches!(c.validate(), Err(CliError::Config(m)) if m.contains("seed")));
    }

    #[test]
    fn unknown_keys_and_kinds_are_rejected() {
        assert!(RunConfig::from_toml("seed = 1\nbogus = 2").is_err());
        assert!(RunConfig::from_toml("seed = 1\n[suite]\ncounts = { roundabout = 2 }").is_err());
        assert!(RunConfig::from_toml("seed = 1\n[objective]\nkind = \"sideways\"").is_err());
    }

    #[test]
    fn missing_scene_path() {
        let mut c = RunConfig { seed: Some(1), ..Default::default() };
        c.scene_paths.push("/definitely/not/here".into());
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig { seed: Some(9), ..Default::default() };
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }
}
