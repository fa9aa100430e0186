//! SVG plots and the CSV data behind them.

use svg::node::element::{Circle, Line, Polyline, Rectangle, Text};
use svg::Document;

use asymmap::attack::SearchTrace;
use asymmap::geometry::{ClassTag, Polyline2D};
use asymmap::oracle::PredictedMap;
use asymmap::scene::SceneFrame;

use crate::error::{CliError, Result};
use crate::pipeline::{ClassifySummary, EvalOutput, EvalReport};

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Internal(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::Internal(e.to_string()))
}

fn num(v: f64) -> String {
    format!("{v:.6}")
}

pub fn confusion_csv(s: &ClassifySummary) -> Result<Vec<u8>> {
    let rows = s
        .confusion
        .iter()
        .flat_map(|(truth, row)| row.iter().map(move |(pred, n)| vec![truth.clone(), pred.clone(), n.to_string()]))
        .collect();
    csv_bytes(&["truth", "predicted", "count"], rows)
}

pub fn scene_csv(out: &EvalOutput) -> Result<Vec<u8>> {
    let with_attack = out.report.attack.is_some();
    let mut header = vec!["scene_id", "goals", "clean_reached", "clean_unreachable", "clean_unsafe"];
    if with_attack {
        header.extend(["attacked_reached", "attacked_unreachable", "attacked_unsafe"]);
    }
    let reached = |e: &asymmap::eval::SceneEval| e.plan.trajectories.iter().filter(|t| t.reached()).count();
    let rows = out
        .clean
        .iter()
        .map(|c| {
            let mut r = vec![
                c.scene_id.clone(),
                c.plan.trajectories.len().to_string(),
                reached(c).to_string(),
                c.unreachable.to_string(),
                c.unsafe_trajectory.to_string(),
            ];
            if with_attack {
                match out.attacked.iter().find(|(ce, _)| ce.scene_id == c.scene_id) {
                    Some((_, a)) => r.extend([reached(a).to_string(), a.unreachable.to_string(), a.unsafe_trajectory.to_string()]),
                    None => r.extend([String::new(), String::new(), String::new()]),
                }
            }
            r
        })
        .collect();
    csv_bytes(&header, rows)
}

const W: f64 = 480.0;
const H: f64 = 320.0;
const MARGIN: f64 = 40.0;

fn label(x: f64, y: f64, s: impl Into<String>, anchor: &str) -> Text {
    Text::new(s)
        .set("x", x)
        .set("y", y)
        .set("font-family", "sans-serif")
        .set("font-size", 11)
        .set("text-anchor", anchor)
}

/// Grouped bars of mAP, UGR and UPTR in percent. The attacked group and
/// its columns appear only when the report has an attack section.
pub fn metric_bars(report: &EvalReport) -> Result<(String, Vec<u8>)> {
    let metrics = ["mAP", "UGR", "UPTR"];
    let pct = |m: &asymmap::eval::MetricReport| [m.ap.map * 100.0, m.ugr * 100.0, m.uptr * 100.0];
    let mut series: Vec<(&str, [f64; 3], &str)> = vec![("clean (all scenes)", pct(&report.clean), "#888888")];
    if let Some(a) = &report.attack {
        series.push(("clean (attacked scenes)", pct(&a.clean), "#4a7bd0"));
        series.push(("attacked", pct(&a.attacked), "#d04a4a"));
    }
    let mut header = vec!["metric", "clean_all"];
    if report.attack.is_some() {
        header.extend(["clean_attacked_scenes", "attacked"]);
    }
    let rows = (0..3)
        .map(|i| std::iter::once(metrics[i].to_string()).chain(series.iter().map(|s| num(s.1[i]))).collect())
        .collect();
    let csv = csv_bytes(&header, rows)?;

    let plot_h = H - 2.0 * MARGIN;
    let group_w = (W - 2.0 * MARGIN) / 3.0;
    let bar_w = group_w * 0.8 / series.len() as f64;
    let y_of = |v: f64| H - MARGIN - plot_h * v.clamp(0.0, 100.0) / 100.0;
    let mut doc = Document::new().set("viewBox", (0, 0, W, H)).set("width", W).set("height", H);
    doc = doc.add(Line::new().set("x1", MARGIN).set("y1", H - MARGIN).set("x2", W - MARGIN).set("y2", H - MARGIN).set("stroke", "black"));
    for t in [0.0, 50.0, 100.0] {
        doc = doc.add(label(MARGIN - 4.0, y_of(t) + 4.0, format!("{t:.0}%"), "end"));
    }
    for (i, m) in metrics.iter().enumerate() {
        let x0 = MARGIN + group_w * i as f64 + group_w * 0.1;
        for (k, (_, vals, color)) in series.iter().enumerate() {
            let y = y_of(vals[i]);
            doc = doc.add(
                Rectangle::new()
                    .set("x", x0 + bar_w * k as f64)
                    .set("y", y)
                    .set("width", bar_w * 0.9)
                    .set("height", H - MARGIN - y)
                    .set("fill", *color),
            );
        }
        doc = doc.add(label(x0 + group_w * 0.4, H - MARGIN + 14.0, *m, "middle"));
    }
    for (k, (name, _, color)) in series.iter().enumerate() {
        let y = 14.0 + 14.0 * k as f64;
        doc = doc.add(Rectangle::new().set("x", W - 170.0).set("y", y - 9.0).set("width", 10).set("height", 10).set("fill", *color));
        doc = doc.add(label(W - 155.0, y, *name, "start"));
    }
    Ok((doc.to_string(), csv))
}

/// Mean best-so-far loss against queries spent, over all traced scenes.
/// A scene whose search ended keeps its final best.
pub fn convergence(traces: &[(String, SearchTrace)]) -> Result<(String, Vec<u8>)> {
    let n = traces.iter().map(|(_, t)| t.entries.len()).max().unwrap_or(0);
    let mut curve = Vec::with_capacity(n);
    let mut bests: Vec<f64> = vec![f64::INFINITY; traces.len()];
    for q in 0..n {
        for (b, (_, t)) in bests.iter_mut().zip(traces) {
            if let Some(e) = t.entries.get(q) {
                *b = b.min(e.loss);
            }
        }
        let live: Vec<f64> = bests.iter().copied().filter(|b| b.is_finite()).collect();
        curve.push((q + 1, live.iter().sum::<f64>() / live.len().max(1) as f64));
    }
    let rows = curve.iter().map(|(q, l)| vec![q.to_string(), num(*l)]).collect();
    let csv = csv_bytes(&["queries", "mean_best_loss"], rows)?;

    let (lo, hi) = curve.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (_, l)| (a.min(*l), b.max(*l)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let xs = (W - 2.0 * MARGIN) / n.max(1) as f64;
    let pts: Vec<String> = curve
        .iter()
        .map(|(q, l)| format!("{:.2},{:.2}", MARGIN + xs * *q as f64, H - MARGIN - (H - 2.0 * MARGIN) * (l - lo) / span))
        .collect();
    let doc = Document::new()
        .set("viewBox", (0, 0, W, H))
        .set("width", W)
        .set("height", H)
        .add(Line::new().set("x1", MARGIN).set("y1", H - MARGIN).set("x2", W - MARGIN).set("y2", H - MARGIN).set("stroke", "black"))
        .add(Line::new().set("x1", MARGIN).set("y1", MARGIN).set("x2", MARGIN).set("y2", H - MARGIN).set("stroke", "black"))
        .add(Polyline::new().set("points", pts.join(" ")).set("fill", "none").set("stroke", "#d04a4a").set("stroke-width", 1.5))
        .add(label(W / 2.0, H - 10.0, "queries", "middle"))
        .add(label(MARGIN - 4.0, MARGIN + 4.0, format!("{hi:.3}"), "end"))
        .add(label(MARGIN - 4.0, H - MARGIN, format!("{lo:.3}"), "end"))
        .add(label(W / 2.0, 16.0, "mean best loss", "middle"));
    Ok((doc.to_string(), csv))
}

/// Top-down view: ground truth black, prediction green, target red dashed.
pub fn bev_overlay(frame: &SceneFrame, pred: &PredictedMap, target: Option<&Polyline2D>) -> String {
    let r = frame.bev_range;
    let s = 10.0;
    let (w, h) = ((r.x_max - r.x_min) * s, (r.y_max - r.y_min) * s);
    let to_px = |p: &Polyline2D| {
        p.points()
            .iter()
            .map(|q| format!("{:.1},{:.1}", (q.x - r.x_min) * s, (r.y_max - q.y) * s))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let line = |p: &Polyline2D, color: &str, width: f64| {
        Polyline::new().set("points", to_px(p)).set("fill", "none").set("stroke", color.to_string()).set("stroke-width", width)
    };
    let mut doc = Document::new()
        .set("viewBox", (0, 0, w, h))
        .set("width", w)
        .set("height", h)
        .add(Rectangle::new().set("width", w).set("height", h).set("fill", "white"));
    for g in &frame.gt_map {
        let width = if g.class() == ClassTag::Boundary { 2.0 } else { 1.0 };
        doc = doc.add(line(g, "black", width));
    }
    for e in &pred.elements {
        doc = doc.add(line(&e.polyline, "#2ca02c", 1.5));
    }
    if let Some(t) = target {
        doc = doc.add(line(t, "#d62728", 2.0).set("stroke-dasharray", "6,4"));
    }
    let e = frame.ego_pose;
    doc = doc.add(Circle::new().set("cx", (e.x - r.x_min) * s).set("cy", (r.y_max - e.y) * s).set("r", 4).set("fill", "#1f77b4"));
    doc.add(label(6.0, 14.0, frame.scene_id.clone(), "start")).to_string()
}
