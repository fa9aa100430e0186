//! The five pipeline stages. Each reads only the run config and files
//! recorded by earlier stages, and records what it writes.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use asymmap::attack::{
    attack_focus, optimize_blackbox, optimize_patch, outward_offsets, pso_search, random_search, rank_positions,
    ObjectiveKind, ObjectiveSpec, SearchTrace,
};
use asymmap::classify::{
    audit_dataset_balance, classify_optional, classify_pipeline, Balance, PipelineVerdict, RuleLabel, VlmClient,
};
use asymmap::eval::{build_report, evaluate_scene, mean_ade, MetricReport, SceneEval};
use asymmap::geometry::Vec2;
use asymmap::interference::{apply_attack, AttackConfig, AttackKind};
use asymmap::oracle::{make_oracle, MapOracle, PredictedMap};
use asymmap::scene::{
    generate_scene, generate_suite, load_scene, save_scene, sha256_hex, AsymLabel, RoadKind, SceneFrame, Side,
    MANIFEST_FILE,
};

use crate::config::{AttackScope, RunConfig, Strategy};
use crate::error::{CliError, Result};
use crate::plots;
use crate::run::{to_json, RunDir, StageWriter, TOOL_VERSION};

/// A validated config bound to its run directory.
pub struct Ctx {
    pub cfg: RunConfig,
    pub run: RunDir,
    pub jobs: usize,
}

impl Ctx {
    pub fn new(cfg: RunConfig, jobs: usize) -> Result<Self> {
        cfg.validate()?;
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        let run = RunDir::new(cfg.out.clone());
        Ok(Self { cfg, run, jobs })
    }

    /// Maps `f` over `items` on `jobs` workers, keeping input order.
    fn par_map<T: Send, R: Send>(&self, items: Vec<T>, f: impl Fn(T) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| CliError::Internal(e.to_string()))?;
        pool.install(|| items.into_par_iter().map(f).collect::<Vec<_>>()).into_iter().collect()
    }

    fn oracle(&self) -> Result<OracleFactory> {
        let o = &self.cfg.oracle;
        Ok(OracleFactory(Mutex::new(make_oracle(o.kind, &o.surrogate, o.external.as_ref())?)))
    }
}

/// Hands out independent oracles to worker threads.
struct OracleFactory(Mutex<Box<dyn MapOracle>>);

impl OracleFactory {
    fn fresh(&self) -> Result<Box<dyn MapOracle>> {
        let base = self.0.lock().map_err(|_| CliError::Internal("oracle lock poisoned".into()))?;
        Ok(base.fresh()?)
    }
}

/// Per-scene seed that does not depend on scene order.
pub fn scene_seed(seed: u64, scene_id: &str) -> u64 {
    let h = sha256_hex(format!("{seed}:{scene_id}").as_bytes());
    u64::from_str_radix(&h[..16], 16).expect("hex digest")
}

// ---- gen ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneIndexEntry {
    pub scene_id: String,
    /// Run-relative scene directory.
    pub dir: String,
    pub road_kind: RoadKind,
    pub truth: Option<AsymLabel>,
}

pub const SCENE_INDEX: &str = "scenes/index.json";

pub fn cmd_gen(ctx: &Ctx) -> Result<Vec<SceneIndexEntry>> {
    let t0 = Instant::now();
    if ctx.cfg.suite.counts.values().all(|&n| n == 0) {
        return Err(CliError::Config("suite.counts is empty".into()));
    }
    let specs = generate_suite(&ctx.cfg.suite_spec());
    let run = &ctx.run;
    let parts = ctx.par_map(specs, |spec| {
        let frame = generate_scene(&spec)?;
        let rel = format!("scenes/{}", frame.scene_id);
        save_scene(&frame, &run.path(&rel))?;
        let mut w = StageWriter::default();
        w.record(run, &format!("{rel}/{MANIFEST_FILE}"))?;
        for cam in &frame.rig.cameras {
            w.record(run, &format!("{rel}/{}.png", cam.id))?;
        }
        let entry = SceneIndexEntry {
            scene_id: frame.scene_id.clone(),
            dir: rel,
            road_kind: frame.road_kind,
            truth: frame.truth.as_ref().map(|t| t.asym_label),
        };
        Ok((entry, w))
    })?;
    let mut w = StageWriter::default();
    let mut index = Vec::new();
    for (e, sw) in parts {
        w.merge(sw);
        index.push(e);
    }
    index.sort_by(|a, b| a.scene_id.cmp(&b.scene_id));
    if index.windows(2).any(|p| p[0].scene_id == p[1].scene_id) {
        return Err(CliError::Internal("suite produced duplicate scene ids".into()));
    }
    w.write_json(run, SCENE_INDEX, &index)?;
    run.commit("gen", w, t0.elapsed(), &ctx.cfg)?;
    Ok(index)
}

struct SceneSource {
    id: String,
    dir: PathBuf,
}

/// Scenes of this run, sorted by id: the configured scene paths, or the
/// generated suite.
fn scene_sources(ctx: &Ctx) -> Result<Vec<SceneSource>> {
    let mut out = Vec::new();
    if ctx.cfg.scene_paths.is_empty() {
        let rec = ctx.run.verify_stage("gen")?;
        let index: Vec<SceneIndexEntry> = ctx.run.read_json("gen", &rec, SCENE_INDEX)?;
        for e in index {
            out.push(SceneSource { id: e.scene_id, dir: ctx.run.path(&e.dir) });
        }
    } else {
        for dir in &ctx.cfg.scene_paths {
            let p = dir.join(MANIFEST_FILE);
            let bytes = std::fs::read(&p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            let v: serde_json::Value =
                serde_json::from_slice(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            let id = v
                .pointer("/frame/scene_id")
                .and_then(|s| s.as_str())
                .ok_or_else(|| CliError::Config(format!("{}: no scene id", p.display())))?;
            out.push(SceneSource { id: id.into(), dir: dir.clone() });
        }
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    if out.windows(2).any(|p| p[0].id == p[1].id) {
        return Err(CliError::Config("duplicate scene ids among the configured scenes".into()));
    }
    Ok(out)
}

fn load(src: &SceneSource) -> Result<SceneFrame> {
    let f = load_scene(&src.dir)?;
    if f.scene_id != src.id {
        return Err(CliError::Config(format!("{} holds scene {}, expected {}", src.dir.display(), f.scene_id, src.id)));
    }
    Ok(f)
}

// ---- classify ----

pub const VERDICTS: &str = "classify/verdicts.json";
pub const CLASSIFY_SUMMARY: &str = "classify/summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifySummary {
    pub scenes: usize,
    /// Truth label to final label to count. Scenes without truth are
    /// counted under "unknown".
    pub confusion: BTreeMap<String, BTreeMap<String, usize>>,
    /// Asymmetric is the positive class; `None` without truth labels.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub unrefined: usize,
    pub vlm_errors: usize,
    /// Share of asymmetric scenes among the final labels.
    pub balance: Balance,
}

fn label_name(l: Option<AsymLabel>) -> &'static str {
    match l {
        Some(AsymLabel::Symmetric) => "symmetric",
        Some(AsymLabel::Asymmetric) => "asymmetric",
        None => "no_boundary",
    }
}

pub fn summarize_verdicts(verdicts: &[PipelineVerdict], truth: &[Option<AsymLabel>]) -> ClassifySummary {
    let mut confusion: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    let mut any_truth = false;
    for (v, t) in verdicts.iter().zip(truth) {
        let row = t.map_or("unknown", |t| label_name(Some(t)));
        *confusion.entry(row.into()).or_default().entry(label_name(v.label).into()).or_default() += 1;
        let Some(t) = t else { continue };
        any_truth = true;
        let pos = v.label == Some(AsymLabel::Asymmetric);
        match (pos, *t == AsymLabel::Asymmetric) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    let ratio = |a: usize, b: usize| (any_truth && b > 0).then(|| a as f64 / b as f64);
    let labels: Vec<AsymLabel> = verdicts.iter().filter_map(|v| v.label).collect();
    ClassifySummary {
        scenes: verdicts.len(),
        confusion,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        unrefined: verdicts.iter().filter(|v| v.unrefined).count(),
        vlm_errors: verdicts.iter().filter(|v| v.vlm_error.is_some()).count(),
        balance: audit_dataset_balance(&labels),
    }
}

pub fn cmd_classify(ctx: &Ctx) -> Result<ClassifySummary> {
    let t0 = Instant::now();
    let sources = scene_sources(ctx)?;
    let vlm = ctx.cfg.vlm.enabled.then(|| {
        let mut c = VlmClient::new(&ctx.cfg.vlm.endpoint, &ctx.cfg.vlm.model).with_token_from_env(&ctx.cfg.vlm.token_env);
        c.max_retries = ctx.cfg.vlm.max_retries;
        c.timeout_s = ctx.cfg.vlm.timeout_s;
        c
    });
    let th = &ctx.cfg.classifier;
    let rows = ctx.par_map(sources, |src| {
        let frame = load(&src)?;
        let v = classify_pipeline(&frame, th, vlm.as_ref());
        Ok((v, frame.truth.as_ref().map(|t| t.asym_label)))
    })?;
    let (verdicts, truth): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let summary = summarize_verdicts(&verdicts, &truth);
    let mut w = StageWriter::default();
    w.write_json(&ctx.run, VERDICTS, &verdicts)?;
    w.write_json(&ctx.run, CLASSIFY_SUMMARY, &summary)?;
    w.write(&ctx.run, "classify/confusion.csv", &plots::confusion_csv(&summary)?)?;
    ctx.run.commit("classify", w, t0.elapsed(), &ctx.cfg)?;
    if summary.vlm_errors > 0 {
        return Err(CliError::External(format!(
            "{} of {} VLM refinements failed; verdicts kept the rule labels",
            summary.vlm_errors, summary.scenes
        )));
    }
    Ok(summary)
}

// ---- attack ----

pub const ATTACK_SUMMARY: &str = "attack/summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub scene_id: String,
    pub side: Side,
    pub anchors: Vec<Vec2>,
    pub position: [f64; 3],
    pub best_loss: f64,
    /// Queries spent by the search, within the budget.
    pub queries: u64,
    pub pre_label: RuleLabel,
    /// Rule label of the predicted boundary pair under the chosen attack.
    pub post_label: RuleLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRunSummary {
    pub objective: ObjectiveKind,
    pub vector: AttackKind,
    pub strategy: Strategy,
    pub budget: usize,
    pub scenes: Vec<AttackRecord>,
    /// Scenes left out by the attack scope.
    pub skipped: Vec<String>,
}

pub fn attack_dir(id: &str) -> String {
    format!("attack/{id}")
}

fn attack_scene(ctx: &Ctx, base: &OracleFactory, frame: &SceneFrame, v: &PipelineVerdict) -> Result<(AttackRecord, StageWriter)> {
    let cfg = &ctx.cfg;
    let a = &cfg.attack;
    let (side, anchors) = attack_focus(frame, &v.rule, cfg.objective.fallback_ahead);
    let spec = ObjectiveSpec::for_frame(
        cfg.objective.kind,
        frame,
        &v.rule,
        &anchors,
        side,
        &cfg.objective.weights,
        &cfg.classifier,
    )?;
    let seed = scene_seed(cfg.seed(), &frame.scene_id);
    let mut oracle = base.fresh()?;
    let o = oracle.as_mut();
    let (best, trace): (AttackConfig, SearchTrace) = match (a.vector, a.strategy) {
        (AttackKind::Blinding, Strategy::Ranked) => {
            let cands = rank_positions(frame, &anchors, &cfg.ranking_params())?;
            optimize_blackbox(o, frame, &spec, &cands, a.budget, &a.flashlight)?
        }
        (AttackKind::Blinding, Strategy::Random) => random_search(o, frame, &spec, &a.region, a.budget, seed, &a.flashlight)?,
        (AttackKind::Blinding, Strategy::Pso) => {
            pso_search(o, frame, &spec, &a.region, &a.pso, a.budget, seed, &a.flashlight)?
        }
        (AttackKind::Patch, _) => {
            let cands = rank_positions(frame, &anchors, &cfg.ranking_params())?;
            let pgd = asymmap::attack::PgdParams { seed, ..a.pgd.clone() };
            optimize_patch(o, frame, &spec, &cands, &pgd, a.budget)?
        }
    };
    if trace.total_queries > a.budget as u64 {
        return Err(CliError::Internal(format!("{}: search spent {} queries", frame.scene_id, trace.total_queries)));
    }
    let images = apply_attack(&frame.images, &frame.rig, &best).map_err(|e| CliError::Internal(e.to_string()))?;
    let pred = o.predict(frame, &images)?;
    let (l, r) = pred.designated_boundaries(frame);
    let post_label = classify_optional(l, r, &cfg.classifier).label;

    let dir = attack_dir(&frame.scene_id);
    let mut w = StageWriter::default();
    w.write_json(&ctx.run, &format!("{dir}/config.json"), &best)?;
    w.write_json(&ctx.run, &format!("{dir}/trace.json"), &trace)?;
    w.write_json(&ctx.run, &format!("{dir}/objective.json"), &spec)?;
    w.write_json(&ctx.run, &format!("{dir}/pred.json"), &pred)?;
    for (img, cam) in images.iter().zip(&frame.rig.cameras) {
        let png = img.encode_png().map_err(|e| CliError::Internal(e.to_string()))?;
        w.write(&ctx.run, &format!("{dir}/{}.png", cam.id), &png)?;
    }
    let record = AttackRecord {
        scene_id: frame.scene_id.clone(),
        side,
        anchors,
        position: best.position,
        best_loss: trace.best_loss,
        queries: trace.total_queries,
        pre_label: v.rule.label,
        post_label,
    };
    Ok((record, w))
}

pub fn cmd_attack(ctx: &Ctx) -> Result<AttackRunSummary> {
    let t0 = Instant::now();
    let sources = scene_sources(ctx)?;
    let rec = ctx.run.verify_stage("classify")?;
    let verdicts: Vec<PipelineVerdict> = ctx.run.read_json("classify", &rec, VERDICTS)?;
    let by_id: BTreeMap<&str, &PipelineVerdict> = verdicts.iter().map(|v| (v.scene_id.as_str(), v)).collect();
    let base = &ctx.oracle()?;
    let mut todo = Vec::new();
    let mut skipped = Vec::new();
    for src in sources {
        let v = *by_id.get(src.id.as_str()).ok_or_else(|| CliError::MissingArtifact {
            stage: "classify".into(),
            path: format!("{} (verdict for {})", ctx.run.path(VERDICTS).display(), src.id),
        })?;
        let take = match ctx.cfg.attack.scope {
            AttackScope::Asymmetric => v.label == Some(AsymLabel::Asymmetric),
            AttackScope::All => v.label.is_some(),
        };
        if take {
            todo.push((src, v.clone()));
        } else {
            skipped.push(src.id);
        }
    }
    // Stale per-scene artifacts from an earlier attack run must not linger.
    let _ = std::fs::remove_dir_all(ctx.run.path("attack"));
    let parts = ctx.par_map(todo, |(src, v)| {
        let frame = load(&src)?;
        attack_scene(ctx, base, &frame, &v)
    })?;
    let mut w = StageWriter::default();
    let mut scenes = Vec::new();
    for (r, sw) in parts {
        w.merge(sw);
        scenes.push(r);
    }
    let a = &ctx.cfg.attack;
    let summary = AttackRunSummary {
        objective: ctx.cfg.objective.kind,
        vector: a.vector,
        strategy: a.strategy,
        budget: a.budget,
        scenes,
        skipped,
    };
    w.write_json(&ctx.run, ATTACK_SUMMARY, &summary)?;
    ctx.run.commit("attack", w, t0.elapsed(), &ctx.cfg)?;
    Ok(summary)
}

// ---- eval ----

pub const REPORT: &str = "eval/report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackEval {
    pub objective: ObjectiveKind,
    pub vector: AttackKind,
    pub strategy: Strategy,
    pub budget: usize,
    /// Metrics of the attacked scenes without and with the attack.
    pub clean: MetricReport,
    pub attacked: MetricReport,
    pub delta_map_pp: f64,
    pub delta_ugr_pp: f64,
    pub delta_uptr_pp: f64,
    pub mean_ade: Option<f64>,
    /// Mean signed displacement of the predicted diverging boundary away
    /// from the lane centerline; positive is outward.
    pub mean_outward_offset: Option<f64>,
    pub total_queries: u64,
    pub max_scene_queries: u64,
    pub post_attack_symmetric: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tool_version: String,
    pub seed: u64,
    pub clean: MetricReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackEval>,
}

/// Persisted inputs of one scene's evaluation.
pub struct EvalScene {
    pub frame: SceneFrame,
    pub clean: PredictedMap,
    pub attacked: Option<(PredictedMap, ObjectiveSpec)>,
}

pub struct EvalOutput {
    pub report: EvalReport,
    pub clean: Vec<SceneEval>,
    /// Clean and attacked evaluations of attacked scenes.
    pub attacked: Vec<(SceneEval, SceneEval)>,
}

fn mean_offset(frame: &SceneFrame, pred: &PredictedMap, spec: &ObjectiveSpec) -> Option<f64> {
    let div = spec.gt_div.as_ref()?;
    let m = pred.match_boundary(div)?;
    let offs = outward_offsets(&m.polyline, div, &frame.centerline).ok()?;
    Some(offs.iter().sum::<f64>() / offs.len() as f64)
}

/// Plans over every prediction and assembles the report. `scenes` must be
/// sorted by scene id.
pub fn evaluate(ctx: &Ctx, scenes: Vec<EvalScene>, summary: Option<&AttackRunSummary>) -> Result<EvalOutput> {
    let params = ctx.cfg.planner;
    let evals = ctx.par_map(scenes, |s| {
        let clean = evaluate_scene(&s.frame, &s.clean, &params);
        let attacked = s.attacked.as_ref().map(|(p, spec)| (evaluate_scene(&s.frame, p, &params), mean_offset(&s.frame, p, spec)));
        Ok((s, clean, attacked))
    })?;
    let th = &ctx.cfg.eval.ap_thresholds;
    let frames: Vec<&SceneFrame> = evals.iter().map(|(s, _, _)| &s.frame).collect();
    let preds: Vec<PredictedMap> = evals.iter().map(|(s, _, _)| s.clean.clone()).collect();
    let clean_evals: Vec<SceneEval> = evals.iter().map(|(_, c, _)| c.clone()).collect();
    let clean = build_report(&frames, &preds, &clean_evals, th)?;

    let attack = match summary {
        None => None,
        Some(sum) => {
            let hit: Vec<_> = evals.iter().filter(|(s, _, a)| s.attacked.is_some() && a.is_some()).collect();
            let frames: Vec<&SceneFrame> = hit.iter().map(|(s, _, _)| &s.frame).collect();
            let cp: Vec<PredictedMap> = hit.iter().map(|(s, _, _)| s.clean.clone()).collect();
            let ap: Vec<PredictedMap> = hit.iter().map(|(s, _, _)| s.attacked.as_ref().unwrap().0.clone()).collect();
            let ce: Vec<SceneEval> = hit.iter().map(|(_, c, _)| c.clone()).collect();
            let ae: Vec<SceneEval> = hit.iter().map(|(_, _, a)| a.as_ref().unwrap().0.clone()).collect();
            let c = build_report(&frames, &cp, &ce, th)?;
            let a = build_report(&frames, &ap, &ae, th)?;
            let offs: Vec<f64> = hit.iter().filter_map(|(_, _, a)| a.as_ref().unwrap().1).collect();
            Some(AttackEval {
                objective: sum.objective,
                vector: sum.vector,
                strategy: sum.strategy,
                budget: sum.budget,
                delta_map_pp: (a.ap.map - c.ap.map) * 100.0,
                delta_ugr_pp: (a.ugr - c.ugr) * 100.0,
                delta_uptr_pp: (a.uptr - c.uptr) * 100.0,
                mean_ade: mean_ade(&ce, &ae),
                mean_outward_offset: (!offs.is_empty()).then(|| offs.iter().sum::<f64>() / offs.len() as f64),
                total_queries: sum.scenes.iter().map(|r| r.queries).sum(),
                max_scene_queries: sum.scenes.iter().map(|r| r.queries).max().unwrap_or(0),
                post_attack_symmetric: sum.scenes.iter().filter(|r| r.post_label == RuleLabel::Symmetric).count(),
                clean: c,
                attacked: a,
            })
        }
    };
    let attacked = evals
        .iter()
        .filter_map(|(_, c, a)| a.as_ref().map(|(ae, _)| (c.clone(), ae.clone())))
        .collect();
    let report = EvalReport { tool_version: TOOL_VERSION.into(), seed: ctx.cfg.seed(), clean, attack };
    Ok(EvalOutput { report, clean: clean_evals, attacked })
}

fn clean_pred_path(id: &str) -> String {
    format!("eval/clean/{id}.json")
}

/// Attack artifacts of the run, if the attack stage has been recorded.
fn attack_inputs(ctx: &Ctx) -> Result<Option<(crate::run::StageRecord, AttackRunSummary)>> {
    let Some(m) = ctx.run.manifest()? else { return Ok(None) };
    if !m.stages.contains_key("attack") {
        return Ok(None);
    }
    let rec = ctx.run.verify_stage("attack")?;
    let sum: AttackRunSummary = ctx.run.read_json("attack", &rec, ATTACK_SUMMARY)?;
    Ok(Some((rec, sum)))
}

fn attacked_of(
    ctx: &Ctx,
    attack: &Option<(crate::run::StageRecord, AttackRunSummary)>,
    id: &str,
) -> Result<Option<(PredictedMap, ObjectiveSpec)>> {
    let Some((rec, sum)) = attack else { return Ok(None) };
    if !sum.scenes.iter().any(|r| r.scene_id == id) {
        return Ok(None);
    }
    let dir = attack_dir(id);
    let pred = ctx.run.read_json("attack", rec, &format!("{dir}/pred.json"))?;
    let spec = ctx.run.read_json("attack", rec, &format!("{dir}/objective.json"))?;
    Ok(Some((pred, spec)))
}

pub fn cmd_eval(ctx: &Ctx) -> Result<EvalReport> {
    let t0 = Instant::now();
    let sources = scene_sources(ctx)?;
    let attack = attack_inputs(ctx)?;
    let base = &ctx.oracle()?;
    let scenes = ctx.par_map(sources, |src| {
        let mut frame = load(&src)?;
        let clean = base.fresh()?.predict(&frame, &frame.images)?;
        frame.images = Vec::new();
        let attacked = attacked_of(ctx, &attack, &src.id)?;
        Ok(EvalScene { frame, clean, attacked })
    })?;
    let mut w = StageWriter::default();
    for s in &scenes {
        w.write_json(&ctx.run, &clean_pred_path(&s.frame.scene_id), &s.clean)?;
    }
    let traces: Vec<(String, SearchTrace)> = match &attack {
        Some((rec, sum)) => sum
            .scenes
            .iter()
            .map(|r| Ok((r.scene_id.clone(), ctx.run.read_json("attack", rec, &format!("{}/trace.json", attack_dir(&r.scene_id)))?)))
            .collect::<Result<_>>()?,
        None => Vec::new(),
    };
    let overlays: Vec<(String, String)> = if ctx.cfg.eval.overlays {
        scenes
            .iter()
            .map(|s| {
                let pred = s.attacked.as_ref().map_or(&s.clean, |(p, _)| p);
                let target = s.attacked.as_ref().and_then(|(_, spec)| spec.target.as_ref());
                (format!("eval/overlays/{}.svg", s.frame.scene_id), plots::bev_overlay(&s.frame, pred, target))
            })
            .collect()
    } else {
        Vec::new()
    };
    let out = evaluate(ctx, scenes, attack.as_ref().map(|(_, s)| s))?;
    w.write_json(&ctx.run, REPORT, &out.report)?;
    w.write(&ctx.run, "eval/scenes.csv", &plots::scene_csv(&out)?)?;
    let (svg, csv) = plots::metric_bars(&out.report)?;
    w.write(&ctx.run, "eval/plots/metrics.svg", svg.as_bytes())?;
    w.write(&ctx.run, "eval/plots/metrics.csv", &csv)?;
    if !traces.is_empty() {
        let (svg, csv) = plots::convergence(&traces)?;
        w.write(&ctx.run, "eval/plots/convergence.svg", svg.as_bytes())?;
        w.write(&ctx.run, "eval/plots/convergence.csv", &csv)?;
    }
    for (rel, svg) in overlays {
        w.write(&ctx.run, &rel, svg.as_bytes())?;
    }
    ctx.run.commit("eval", w, t0.elapsed(), &ctx.cfg)?;
    Ok(out.report)
}

// ---- replay ----

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub report: EvalReport,
    pub identical: bool,
}

/// Recomputes the report from persisted artifacts with the config recorded
/// in the run manifest, and compares it byte for byte with the stored one.
pub fn cmd_replay(run_dir: impl Into<PathBuf>, jobs: usize) -> Result<ReplayOutcome> {
    let t0 = Instant::now();
    let run = RunDir::new(run_dir);
    let manifest = run.manifest()?.ok_or_else(|| CliError::MissingArtifact {
        stage: "gen".into(),
        path: run.path(crate::run::MANIFEST).display().to_string(),
    })?;
    let mut cfg = manifest.config.clone();
    cfg.out = run.root.clone();
    let ctx = Ctx::new(cfg, jobs)?;
    for stage in ["gen", "classify", "attack"] {
        if manifest.stages.contains_key(stage) {
            ctx.run.verify_stage(stage)?;
        }
    }
    let eval_rec = ctx.run.verify_stage("eval")?;
    let stored = ctx.run.read_verified("eval", &eval_rec, REPORT)?;
    let sources = scene_sources(&ctx)?;
    let attack = attack_inputs(&ctx)?;
    let scenes = ctx.par_map(sources, |src| {
        let mut frame = load(&src)?;
        frame.images = Vec::new();
        let clean = ctx.run.read_json("eval", &eval_rec, &clean_pred_path(&src.id))?;
        let attacked = attacked_of(&ctx, &attack, &src.id)?;
        Ok(EvalScene { frame, clean, attacked })
    })?;
    let out = evaluate(&ctx, scenes, attack.as_ref().map(|(_, s)| s))?;
    let bytes = to_json(&out.report);
    let identical = bytes == stored;
    let mut w = StageWriter::default();
    w.write(&ctx.run, "replay/report.json", &bytes)?;
    ctx.run.commit("replay", w, t0.elapsed(), &ctx.cfg)?;
    Ok(ReplayOutcome { report: out.report, identical })
}
