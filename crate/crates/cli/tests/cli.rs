use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use asymmap::classify::PipelineVerdict;
use asymmap::scene::{load_scene, AsymLabel};
use asymmap_cli::pipeline::{AttackRunSummary, ClassifySummary, EvalReport, SceneIndexEntry};
use serde::de::DeserializeOwned;

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asymmap")).args(args).current_dir(cwd).output().unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let o = bin(args, cwd);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn json<T: DeserializeOwned>(p: PathBuf) -> T {
    serde_json::from_slice(&fs::read(&p).unwrap()).unwrap()
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn gen_writes_labeled_manifests_deterministically() {
    let t = tempfile::tempdir().unwrap();
    ok(&["gen", "--out", "a", "--seed", "4", "--count", "fork=10"], t.path());
    ok(&["gen", "--out", "b", "--seed", "4", "--count", "fork=10"], t.path());
    let index: Vec<SceneIndexEntry> = json(t.path().join("a/scenes/index.json"));
    assert_eq!(index.len(), 10);
    for e in &index {
        let f = load_scene(&t.path().join("a").join(&e.dir)).unwrap();
        assert_eq!(f.truth.unwrap().asym_label, AsymLabel::Asymmetric);
    }
    assert_eq!(files(&t.path().join("a/scenes")), files(&t.path().join("b/scenes")));
}

#[test]
fn usage_and_config_errors_have_their_exit_codes() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(bin(&["gen", "--out", "a", "--seed", "1", "--count", "roundabout=2"], t.path()).status.code(), Some(2));
    assert_eq!(bin(&["attack", "--out", "a", "--seed", "1", "--objective", "sideways"], t.path()).status.code(), Some(2));
    assert_eq!(bin(&["fly"], t.path()).status.code(), Some(2));
    assert_eq!(bin(&["gen", "--out", "a"], t.path()).status.code(), Some(3));
    fs::write(t.path().join("bad.toml"), "seed = 1\n[suite]\ncounts = { roundabout = 1 }\n").unwrap();
    assert_eq!(bin(&["gen", "--config", "bad.toml"], t.path()).status.code(), Some(3));
    // Later stages without earlier ones name the missing stage.
    let o = bin(&["classify", "--out", "empty", "--seed", "1"], t.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gen stage"));
}

#[test]
fn external_service_failures_exit_4() {
    let t = tempfile::tempdir().unwrap();
    ok(&["gen", "--out", "r", "--seed", "2", "--count", "fork=1", "--count", "straight=1"], t.path());
    fs::write(
        t.path().join("ext.toml"),
        "seed = 2\nout = \"r\"\n[oracle]\nkind = \"external\"\nexternal = { program = \"/nonexistent/oracle\" }\n",
    )
    .unwrap();
    ok(&["classify", "--config", "ext.toml"], t.path());
    assert_eq!(bin(&["eval", "--config", "ext.toml"], t.path()).status.code(), Some(4));

    fs::write(
        t.path().join("vlm.toml"),
        "seed = 2\nout = \"r\"\n[vlm]\nenabled = true\nendpoint = \"http://127.0.0.1:9/v1/chat/completions\"\nmax_retries = 0\ntimeout_s = 5\n",
    )
    .unwrap();
    assert_eq!(bin(&["classify", "--config", "vlm.toml"], t.path()).status.code(), Some(4));
    // Verdicts are still written, keeping the rule labels.
    let v: Vec<PipelineVerdict> = json(t.path().join("r/classify/verdicts.json"));
    assert!(v.iter().any(|v| v.vlm_error.is_some()));
}

#[test]
fn classify_counts_match_an_independent_recount() {
    let t = tempfile::tempdir().unwrap();
    ok(&["gen", "--out", "r", "--seed", "8", "--count", "fork=4", "--count", "straight=3", "--count", "intersection=2", "--count", "merge=2"], t.path());
    ok(&["classify", "--out", "r", "--seed", "8", "--vlm", "off"], t.path());
    let s: ClassifySummary = json(t.path().join("r/classify/summary.json"));
    let v: Vec<PipelineVerdict> = json(t.path().join("r/classify/verdicts.json"));
    let index: Vec<SceneIndexEntry> = json(t.path().join("r/scenes/index.json"));
    let total: usize = s.confusion.values().flat_map(|r| r.values()).sum();
    assert_eq!(total, 11);
    assert!(v.iter().all(|v| v.unrefined));
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for e in &index {
        let pred = v.iter().find(|v| v.scene_id == e.scene_id).unwrap().label;
        let truth = e.truth.unwrap();
        tp += (pred == Some(AsymLabel::Asymmetric) && truth == AsymLabel::Asymmetric) as usize;
        fp += (pred == Some(AsymLabel::Asymmetric) && truth == AsymLabel::Symmetric) as usize;
        fn_ += (pred != Some(AsymLabel::Asymmetric) && truth == AsymLabel::Asymmetric) as usize;
    }
    assert_eq!(s.precision, Some(tp as f64 / (tp + fp) as f64));
    assert_eq!(s.recall, Some(tp as f64 / (tp + fn_) as f64));
    let csv = fs::read_to_string(t.path().join("r/classify/confusion.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("truth,predicted,count"));
}

#[test]
fn blinding_flips_the_fork_fixture_within_budget() {
    let t = tempfile::tempdir().unwrap();
    ok(&["gen", "--out", "r", "--seed", "11", "--count", "fork=1"], t.path());
    ok(&["classify", "--out", "r", "--seed", "11"], t.path());
    ok(&["attack", "--out", "r", "--seed", "11", "--budget", "400"], t.path());
    let s: AttackRunSummary = json(t.path().join("r/attack/summary.json"));
    assert_eq!(s.scenes.len(), 1);
    let r = &s.scenes[0];
    assert!(r.queries <= 400);
    assert_eq!(r.post_label, asymmap::classify::RuleLabel::Symmetric);
    let trace: asymmap::attack::SearchTrace = json(t.path().join(format!("r/attack/{}/trace.json", r.scene_id)));
    assert_eq!(trace.total_queries, trace.entries.last().unwrap().queries);
    assert!(trace.total_queries <= 400);

    // Random search spends exactly its budget.
    ok(&["attack", "--out", "r", "--seed", "11", "--strategy", "random", "--budget", "30"], t.path());
    let s: AttackRunSummary = json(t.path().join("r/attack/summary.json"));
    assert_eq!(s.scenes[0].queries, 30);
}

#[test]
fn eval_without_attack_has_no_attack_columns() {
    let t = tempfile::tempdir().unwrap();
    ok(&["gen", "--out", "r", "--seed", "3", "--count", "fork=2", "--count", "straight=1"], t.path());
    ok(&["classify", "--out", "r", "--seed", "3"], t.path());
    ok(&["eval", "--out", "r", "--seed", "3"], t.path());
    let text = fs::read_to_string(t.path().join("r/eval/report.json")).unwrap();
    assert!(!text.contains("\"attack\""));
    let r: EvalReport = serde_json::from_str(&text).unwrap();
    assert!(r.attack.is_none());
    for v in [r.clean.ugr, r.clean.uptr, r.clean.ap.map] {
        assert!((0.0..=1.0).contains(&v));
    }
    let csv = fs::read_to_string(t.path().join("r/eval/scenes.csv")).unwrap();
    assert!(!csv.contains("attacked"));
    assert!(!fs::read_to_string(t.path().join("r/eval/plots/metrics.csv")).unwrap().contains("attacked"));
    assert!(t.path().join("r/eval/plots/metrics.svg").exists());
    assert!(!t.path().join("r/eval/plots/convergence.svg").exists());
}

#[test]
fn attacked_run_replays_and_detects_tampering() {
    let t = tempfile::tempdir().unwrap();
    let args = |verb: &'static str| vec![verb, "--out", "r", "--seed", "6"];
    ok(&["gen", "--out", "r", "--seed", "6", "--count", "fork=3", "--count", "straight=1"], t.path());
    ok(&args("classify"), t.path());
    ok(&["attack", "--out", "r", "--seed", "6", "--budget", "30"], t.path());
    ok(&args("eval"), t.path());
    let r: EvalReport = json(t.path().join("r/eval/report.json"));
    let a = r.attack.as_ref().unwrap();
    for v in [a.attacked.ugr, a.attacked.uptr, a.attacked.ap.map, a.clean.ugr] {
        assert!((0.0..=1.0).contains(&v));
    }
    // UGR delta against a per-scene recount.
    let recount = a.attacked.rows.iter().filter(|r| r.unreachable).count() as i64
        - a.clean.rows.iter().filter(|r| r.unreachable).count() as i64;
    assert_eq!(a.delta_ugr_pp.signum() as i64, recount.signum());
    assert!(a.max_scene_queries <= 30);

    let o = ok(&["replay", "r"], t.path());
    assert!(String::from_utf8_lossy(&o.stdout).contains("identical"));
    assert_eq!(fs::read(t.path().join("r/replay/report.json")).unwrap(), fs::read(t.path().join("r/eval/report.json")).unwrap());

    let s: AttackRunSummary = json(t.path().join("r/attack/summary.json"));
    let trace = t.path().join(format!("r/attack/{}/trace.json", s.scenes[0].scene_id));
    let orig = fs::read(&trace).unwrap();
    fs::write(&trace, String::from_utf8(orig.clone()).unwrap().replacen("\"loss\": ", "\"loss\": 0", 1)).unwrap();
    let o = bin(&["replay", "r"], t.path());
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("checksum") && err.contains("attack stage"), "{err}");

    fs::write(&trace, &orig).unwrap();
    ok(&["replay", "r"], t.path());
    fs::remove_file(t.path().join("r/eval/report.json")).unwrap();
    let o = bin(&["replay", "r"], t.path());
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("eval stage") && err.contains("report.json"), "{err}");
}

#[test]
fn reports_do_not_depend_on_worker_count() {
    let t = tempfile::tempdir().unwrap();
    for (dir, jobs) in [("j1", "1"), ("j3", "3")] {
        let a = |verb: &'static str| vec![verb, "--out", dir, "--seed", "21", "--jobs", jobs];
        let mut g = a("gen");
        g.extend(["--count", "fork=3", "--count", "merge=1", "--count", "straight=2"]);
        ok(&g, t.path());
        ok(&a("classify"), t.path());
        let mut at = a("attack");
        at.extend(["--budget", "25"]);
        ok(&at, t.path());
        ok(&a("eval"), t.path());
    }
    let strip = |d: &str| -> Vec<(PathBuf, Vec<u8>)> {
        files(&t.path().join(d)).into_iter().filter(|(p, _)| p != Path::new("manifest.json")).collect()
    };
    let (a, b) = (strip("j1"), strip("j3"));
    assert_eq!(a.len(), b.len());
    for ((pa, ba), (pb, bb)) in a.iter().zip(&b) {
        assert_eq!(pa, pb);
        assert!(ba == bb, "{} differs", pa.display());
    }
}

#[test]
fn config_file_drives_the_run() {
    let t = tempfile::tempdir().unwrap();
    fs::write(
        t.path().join("run.toml"),
        r#"seed = 13
out = "cfgrun"

[suite]
counts = { fork = 1, straight = 1 }

[suite.render]
width = 200
height = 150

[objective]
kind = "early_turn"

[attack]
budget = 5

[eval]
overlays = false
"#,
    )
    .unwrap();
    for verb in ["gen", "classify", "attack", "eval"] {
        ok(&[verb, "--config", "run.toml"], t.path());
    }
    let m: asymmap_cli::run::RunManifest = json(t.path().join("cfgrun/manifest.json"));
    assert_eq!(m.config.seed, Some(13));
    assert_eq!(m.stages.len(), 4);
    let r: EvalReport = json(t.path().join("cfgrun/eval/report.json"));
    let a = r.attack.unwrap();
    assert_eq!(a.objective, asymmap::attack::ObjectiveKind::EarlyTurn);
    assert!(a.max_scene_queries <= 5);
    assert!(a.mean_outward_offset.is_some());
    assert!(!t.path().join("cfgrun/eval/overlays").exists());
}
