use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ranking::{Candidate, RoadsideRegion};
use super::{AttackError, ObjectiveSpec};
use crate::geometry::Vec2;
use crate::interference::{apply_attack, AttackConfig, FlashlightSpec};
use crate::oracle::{MapOracle, PredictedMap};
use crate::scene::SceneFrame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub position: [f64; 3],
    pub loss: f64,
    /// Oracle queries spent so far, this evaluation included.
    pub queries: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accepted: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub seed: u64,
    pub entries: Vec<TraceEntry>,
    pub best: AttackConfig,
    pub best_loss: f64,
    pub total_queries: u64,
}

/// Applies `cfg`, queries the oracle once and scores the prediction.
pub fn evaluate_config(
    oracle: &mut dyn MapOracle,
    frame: &SceneFrame,
    spec: &ObjectiveSpec,
    cfg: &AttackConfig,
) -> Result<(f64, PredictedMap), AttackError> {
    let images = apply_attack(&frame.images, &frame.rig, cfg)?;
    let pred = oracle.predict(frame, &images)?;
    Ok((spec.loss(&pred), pred))
}

struct Recorder {
    start: u64,
    entries: Vec<TraceEntry>,
    best: Option<(f64, AttackConfig)>,
}

impl Recorder {
    fn new(oracle: &dyn MapOracle) -> Self {
        Self {
            start: oracle.query_count(),
            entries: Vec::new(),
            best: None,
        }
    }

    fn eval(
        &mut self,
        oracle: &mut dyn MapOracle,
        frame: &SceneFrame,
        spec: &ObjectiveSpec,
        cfg: AttackConfig,
        rank: Option<usize>,
    ) -> Result<f64, AttackError> {
        let (loss, _) = evaluate_config(oracle, frame, spec, &cfg)?;
        self.entries.push(TraceEntry {
            position: cfg.position,
            loss,
            queries: oracle.query_count() - self.start,
            rank,
            iteration: None,
            accepted: None,
        });
        if self.best.as_ref().is_none_or(|(b, _)| loss < *b) {
            self.best = Some((loss, cfg));
        }
        Ok(loss)
    }

    fn finish(self, seed: u64) -> Result<(AttackConfig, SearchTrace), AttackError> {
        let (best_loss, best) = self
            .best
            .ok_or_else(|| AttackError::Config("search evaluated nothing".into()))?;
        let total_queries = self.entries.last().map_or(0, |e| e.queries);
        Ok((
            best.clone(),
            SearchTrace {
                seed,
                entries: self.entries,
                best,
                best_loss,
                total_queries,
            },
        ))
    }
}

/// Evaluates ranked candidates in order until the budget or the list runs
/// out and keeps the lowest loss, ties going to the better rank.
pub fn optimize_blackbox(
    oracle: &mut dyn MapOracle,
    frame: &SceneFrame,
    spec: &ObjectiveSpec,
    candidates: &[Candidate],
    budget: usize,
    flashlight: &FlashlightSpec,
) -> Result<(AttackConfig, SearchTrace), AttackError> {
    if budget == 0 {
        return Err(AttackError::Config("budget must be at least 1".into()));
    }
    if candidates.is_empty() {
        return Err(AttackError::Config("no candidates to search".into()));
    }
    let mut rec = Recorder::new(oracle);
    for c in candidates.iter().take(budget) {
        rec.eval(
            oracle,
            frame,
            spec,
            AttackConfig::blinding(c.position, flashlight.clone()),
            Some(c.rank),
        )?;
    }
    rec.finish(0)
}

/// Bounds of the continuous roadside search space shared by the baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegionBounds {
    pub offset: (f64, f64),
    pub height: (f64, f64),
    /// Rejection-sampling attempts per draw before giving up.
    pub max_attempts: usize,
}

impl Default for RegionBounds {
    fn default() -> Self {
        Self {
            offset: (0.5, 3.0),
            height: (0.5, 2.0),
            max_attempts: 200,
        }
    }
}

fn region_point(region: &RoadsideRegion, b: &RegionBounds, x: [f64; 3]) -> Option<[f64; 3]> {
    if !(b.offset.0..=b.offset.1).contains(&x[1]) {
        return None;
    }
    let p = region.point_from_unit(x[0], x[1], x[2]);
    region.admissible(Vec2::new(p[0], p[1]), x[1]).then_some(p)
}

fn draw(
    region: &RoadsideRegion,
    b: &RegionBounds,
    rng: &mut ChaCha8Rng,
) -> Option<([f64; 3], [f64; 3])> {
    for _ in 0..b.max_attempts {
        let x = [
            rng.gen_range(0.0..2.0),
            rng.gen_range(b.offset.0..=b.offset.1),
            rng.gen_range(b.height.0..=b.height.1),
        ];
        if let Some(p) = region_point(region, b, x) {
            return Some((x, p));
        }
    }
    None
}

/// Uniform random roadside positions, one query each.
pub fn random_search(
    oracle: &mut dyn MapOracle,
    frame: &SceneFrame,
    spec: &ObjectiveSpec,
    bounds: &RegionBounds,
    budget: usize,
    seed: u64,
    flashlight: &FlashlightSpec,
) -> Result<(AttackConfig, SearchTrace), AttackError> {
    let region = RoadsideRegion::new(frame);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rec = Recorder::new(oracle);
    for _ in 0..budget {
        let Some((_, p)) = draw(&region, bounds, &mut rng) else {
            break;
        };
        rec.eval(
            oracle,
            frame,
            spec,
            AttackConfig::blinding(p, flashlight.clone()),
            None,
        )?;
    }
    rec.finish(seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoParams {
    pub particles: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
}

impl Default for PsoParams {
    fn default() -> Self {
        Self {
            particles: 20,
            inertia: 0.7,
            cognitive: 1.5,
            social: 1.5,
        }
    }
}

/// Particle-swarm search over (side and arc fraction, offset, height).
/// Inadmissible particle positions cost no query and score as the worst
/// loss seen.
#[allow(clippy::too_many_arguments)]
pub fn pso_search(
    oracle: &mut dyn MapOracle,
    frame: &SceneFrame,
    spec: &ObjectiveSpec,
    bounds: &RegionBounds,
    pso: &PsoParams,
    budget: usize,
    seed: u64,
    flashlight: &FlashlightSpec,
) -> Result<(AttackConfig, SearchTrace), AttackError> {
    if pso.particles == 0 {
        return Err(AttackError::Config(
            "pso needs at least one particle".into(),
        ));
    }
    let region = RoadsideRegion::new(frame);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = [0.0, bounds.offset.0, bounds.height.0];
    let hi = [2.0 - 1e-9, bounds.offset.1, bounds.height.1];
    let mut rec = Recorder::new(oracle);
    let mut xs = Vec::new();
    for _ in 0..pso.particles.min(budget) {
        let Some((x, _)) = draw(&region, bounds, &mut rng) else {
            break;
        };
        xs.push(x);
    }
    if xs.is_empty() {
        return rec.finish(seed);
    }
    let mut vs: Vec<[f64; 3]> = xs
        .iter()
        .map(|_| std::array::from_fn(|k| rng.gen_range(-1.0..=1.0) * (hi[k] - lo[k]) * 0.1))
        .collect();
    let mut pbest: Vec<([f64; 3], f64)> = xs.iter().map(|&x| (x, f64::INFINITY)).collect();
    let mut gbest = (xs[0], f64::INFINITY);
    let mut used = 0usize;
    'outer: loop {
        for i in 0..xs.len() {
            if used >= budget {
                break 'outer;
            }
            let loss = match region_point(&region, bounds, xs[i]) {
                Some(p) => {
                    used += 1;
                    rec.eval(
                        oracle,
                        frame,
                        spec,
                        AttackConfig::blinding(p, flashlight.clone()),
                        None,
                    )?
                }
                None => f64::INFINITY,
            };
            if loss < pbest[i].1 {
                pbest[i] = (xs[i], loss);
            }
            if loss < gbest.1 {
                gbest = (xs[i], loss);
            }
        }
        let before = used;
        for i in 0..xs.len() {
            for k in 0..3 {
                let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
                vs[i][k] = pso.inertia * vs[i][k]
                    + pso.cognitive * r1 * (pbest[i].0[k] - xs[i][k])
                    + pso.social * r2 * (gbest.0[k] - xs[i][k]);
                xs[i][k] = (xs[i][k] + vs[i][k]).clamp(lo[k], hi[k]);
            }
        }
        // A swarm stuck entirely outside the region would spin forever.
        if before == used
            && xs
                .iter()
                .all(|&x| region_point(&region, bounds, x).is_none())
        {
            break;
        }
    }
    rec.finish(seed)
}
