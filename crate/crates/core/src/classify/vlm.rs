//! Refinement requests to an OpenAI-style chat-completion service.

use std::io::Write as _;
use std::path::PathBuf;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::prompt::SYSTEM_PROMPT;
use super::rules::{classify_rule_based, RuleLabel, RuleThresholds, RuleVerdict};
use crate::geometry::{ClassTag, Vec2};
use crate::raster::{Image, Rgb};
use crate::scene::{draw_segment, project_world_to_image, AsymLabel, BevRange, SceneFrame};

pub const FRONT_CAMERAS: [&str; 3] = ["CAM_FRONT", "CAM_FRONT_LEFT", "CAM_FRONT_RIGHT"];
const BOX_HALF_PX: f64 = 10.0;
const RED: Rgb = [1.0, 0.0, 0.0];

#[derive(Debug, Error)]
pub enum VlmError {
    #[error("refinement needs an asymmetric rule verdict")]
    NotAsymmetric,
    #[error("{endpoint}: authentication rejected (HTTP {status})")]
    Auth { endpoint: String, status: u16 },
    #[error("{endpoint}: {reason}")]
    Transport { endpoint: String, reason: String },
    #[error("{endpoint}: no usable verdict after {attempts} attempts: {reason}")]
    RefinementFailed {
        endpoint: String,
        attempts: u32,
        reason: String,
    },
    #[error("image encoding: {0}")]
    Encode(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VlmVerdict {
    pub label: AsymLabel,
    pub road_type: Option<String>,
    pub reasoning: String,
    pub raw_response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VlmRequest {
    pub scene_id: String,
    pub system_prompt: String,
    /// Boundary coordinates, rule statistics and anchors as JSON text.
    pub map_json: String,
    #[serde(with = "b64")]
    pub bev_png: Vec<u8>,
    #[serde(with = "b64_opt", default)]
    pub camera_png: Option<Vec<u8>>,
    pub camera_id: Option<String>,
    /// Number of red anchor boxes drawn in the camera image.
    pub boxes: usize,
    /// Set when no front-facing camera sees any anchor.
    pub no_camera_cue: bool,
}

mod b64 {
    use super::*;
    pub fn serialize<S: serde::Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&B64.encode(v))
    }
    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        B64.decode(s).map_err(serde::de::Error::custom)
    }
}

mod b64_opt {
    use super::*;
    pub fn serialize<S: serde::Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(b) => s.serialize_some(&B64.encode(b)),
            None => s.serialize_none(),
        }
    }
    pub fn deserialize<'de, D: serde::Deserializer<'de>>(
        d: D,
    ) -> Result<Option<Vec<u8>>, D::Error> {
        let s: Option<String> = Option::deserialize(d)?;
        s.map(|s| B64.decode(s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

impl VlmRequest {
    /// Chat-completion body with the images attached as data URLs.
    pub fn to_chat_body(&self, model: &str) -> Value {
        let mut content = vec![json!({"type": "text", "text": self.map_json})];
        let url = |png: &[u8]| format!("data:image/png;base64,{}", B64.encode(png));
        content.push(json!({"type": "image_url", "image_url": {"url": url(&self.bev_png)}}));
        if let Some(png) = &self.camera_png {
            content.push(json!({"type": "image_url", "image_url": {"url": url(png)}}));
        }
        json!({
            "model": model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": self.system_prompt},
                {"role": "user", "content": content},
            ],
        })
    }
}

/// BEV raster of the frame's boundaries, ego and anchors (white background).
pub fn render_bev_cue(frame: &SceneFrame, anchors: &[Vec2], px_per_m: f64) -> Image {
    let r: BevRange = frame.bev_range;
    let w = ((r.x_max - r.x_min) * px_per_m).round() as u32;
    let h = ((r.y_max - r.y_min) * px_per_m).round() as u32;
    let mut img = Image::filled(w, h, [1.0; 3]);
    let to_px = |p: Vec2| ((p.x - r.x_min) * px_per_m, (r.y_max - p.y) * px_per_m);
    for el in &frame.gt_map {
        let color = match el.class() {
            ClassTag::Boundary => [0.0; 3],
            ClassTag::Divider => [0.6, 0.6, 0.6],
            ClassTag::PedCrossing => [0.75, 0.75, 0.75],
        };
        for s in el.points().windows(2) {
            draw_segment(&mut img, to_px(s[0]), to_px(s[1]), 1.0, color);
        }
    }
    let ego = to_px(frame.ego_pose.position());
    fill_rect(
        &mut img,
        ego,
        0.95 * px_per_m,
        2.25 * px_per_m,
        [0.1, 0.3, 0.9],
    );
    for a in anchors {
        draw_box(&mut img, to_px(*a), 0.8 * px_per_m, RED);
    }
    img.quantize();
    img
}

fn fill_rect(img: &mut Image, c: (f64, f64), hw: f64, hh: f64, color: Rgb) {
    for y in 0..img.height {
        for x in 0..img.width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            if (px - c.0).abs() <= hw && (py - c.1).abs() <= hh {
                img.set(x, y, color);
            }
        }
    }
}

fn draw_box(img: &mut Image, c: (f64, f64), half: f64, color: Rgb) {
    let (x0, x1, y0, y1) = (c.0 - half, c.0 + half, c.1 - half, c.1 + half);
    for (a, b) in [
        ((x0, y0), (x1, y0)),
        ((x1, y0), (x1, y1)),
        ((x1, y1), (x0, y1)),
        ((x0, y1), (x0, y0)),
    ] {
        draw_segment(img, a, b, 1.0, color);
    }
}

pub fn build_vlm_request(frame: &SceneFrame, rv: &RuleVerdict) -> Result<VlmRequest, VlmError> {
    if rv.label != RuleLabel::Asymmetric {
        return Err(VlmError::NotAsymmetric);
    }
    let map_json = json!({
        "scene_id": frame.scene_id,
        "left_boundary": frame.left_boundary.points(),
        "right_boundary": frame.right_boundary.points(),
        "dk_max": rv.dk_max,
        "diverging_side": rv.diverging_side,
        "anchors": rv.anchors,
    })
    .to_string();
    let bev = render_bev_cue(frame, &rv.anchors, 8.0);
    let bev_png = bev
        .encode_png()
        .map_err(|e| VlmError::Encode(e.to_string()))?;

    // Front-facing camera that sees the most anchors; ties go to the
    // earlier entry of FRONT_CAMERAS.
    let mut best: Option<(usize, Vec<(f64, f64)>)> = None;
    if !frame.images.is_empty() {
        for id in FRONT_CAMERAS {
            let Some(ci) = frame.rig.index_of(id) else {
                continue;
            };
            let cam = &frame.rig.cameras[ci];
            let hits: Vec<(f64, f64)> = rv
                .anchors
                .iter()
                .filter_map(|a| project_world_to_image(cam, Vector3::new(a.x, a.y, 0.0)))
                .collect();
            if !hits.is_empty() && best.as_ref().is_none_or(|(_, b)| hits.len() > b.len()) {
                best = Some((ci, hits));
            }
        }
    }
    let (camera_png, camera_id, boxes) = match best {
        Some((ci, hits)) => {
            let mut img = frame.images[ci].clone();
            for uv in &hits {
                draw_box(&mut img, *uv, BOX_HALF_PX, RED);
            }
            let png = img
                .encode_png()
                .map_err(|e| VlmError::Encode(e.to_string()))?;
            (
                Some(png),
                Some(frame.rig.cameras[ci].id.clone()),
                hits.len(),
            )
        }
        None => (None, None, 0),
    };
    Ok(VlmRequest {
        scene_id: frame.scene_id.clone(),
        system_prompt: SYSTEM_PROMPT.to_string(),
        map_json,
        bev_png,
        no_camera_cue: camera_png.is_none(),
        camera_png,
        camera_id,
        boxes,
    })
}

/// Byte range of the first balanced JSON object in `text`.
pub fn extract_first_json_object(text: &str) -> Option<(usize, usize, Value)> {
    for (i, _) in text.match_indices('{') {
        let mut it = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        if let Some(Ok(v)) = it.next() {
            if v.is_object() {
                return Some((i, i + it.byte_offset(), v));
            }
        }
    }
    None
}

/// Parses a model reply; prose around the JSON object is kept in `reasoning`.
pub fn parse_vlm_reply(text: &str) -> Option<VlmVerdict> {
    let (start, end, v) = extract_first_json_object(text)?;
    let label_str = ["classification", "label"]
        .iter()
        .find_map(|k| v.get(*k)?.as_str())?
        .to_ascii_lowercase();
    let label = match label_str.trim() {
        "symmetric" => AsymLabel::Symmetric,
        "asymmetric" => AsymLabel::Asymmetric,
        _ => return None,
    };
    let road_type = v
        .get("road_type")
        .and_then(Value::as_str)
        .map(str::to_string);
    let mut parts = Vec::new();
    let prose = format!("{} {}", text[..start].trim(), text[end..].trim());
    if !prose.trim().is_empty() {
        parts.push(prose.trim().to_string());
    }
    if let Some(r) = v.get("reasoning").and_then(Value::as_str) {
        parts.push(r.to_string());
    }
    Some(VlmVerdict {
        label,
        road_type,
        reasoning: parts.join("\n"),
        raw_response: text.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VlmClient {
    pub endpoint: String,
    pub model: String,
    /// Bearer token, usually read from the environment.
    #[serde(skip)]
    pub token: Option<String>,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub timeout_s: u64,
    /// Append-only log of requests and replies.
    #[serde(default)]
    pub transcript: Option<PathBuf>,
}

impl VlmClient {
    pub fn new(endpoint: &str, model: &str) -> Self {
        Self {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            token: None,
            max_retries: 3,
            backoff_ms: 500,
            timeout_s: 60,
            transcript: None,
        }
    }

    pub fn with_token_from_env(mut self, var: &str) -> Self {
        self.token = std::env::var(var).ok().filter(|t| !t.is_empty());
        self
    }

    fn log(&self, entry: Value) {
        let Some(path) = &self.transcript else { return };
        let res = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .and_then(|mut f| writeln!(f, "{entry}"));
        if let Err(e) = res {
            log::warn!("cannot append VLM transcript {}: {e}", path.display());
        }
    }
}

enum Attempt {
    Done(VlmVerdict),
    Retry(String),
    Fatal(VlmError),
}

pub fn refine_with_vlm(client: &VlmClient, req: &VlmRequest) -> Result<VlmVerdict, VlmError> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(client.timeout_s)))
        .http_status_as_error(false)
        .build()
        .into();
    let body = req.to_chat_body(&client.model);
    let attempts = client.max_retries + 1;
    let mut last = String::new();
    for attempt in 0..attempts {
        if attempt > 0 {
            std::thread::sleep(Duration::from_millis(
                client.backoff_ms.saturating_mul(1 << (attempt - 1).min(16)),
            ));
        }
        let outcome = one_attempt(&agent, client, req, &body);
        match outcome {
            Attempt::Done(v) => return Ok(v),
            Attempt::Fatal(e) => return Err(e),
            Attempt::Retry(reason) => {
                log::warn!(
                    "VLM attempt {} for {} failed: {reason}",
                    attempt + 1,
                    req.scene_id
                );
                last = reason;
            }
        }
    }
    Err(VlmError::RefinementFailed {
        endpoint: client.endpoint.clone(),
        attempts,
        reason: last,
    })
}

fn one_attempt(agent: &ureq::Agent, client: &VlmClient, req: &VlmRequest, body: &Value) -> Attempt {
    let mut rb = agent
        .post(&client.endpoint)
        .header("Content-Type", "application/json");
    if let Some(t) = &client.token {
        rb = rb.header("Authorization", format!("Bearer {t}"));
    }
    let mut resp = match rb.send_json(body) {
        Ok(r) => r,
        Err(e) => return Attempt::Retry(format!("transport: {e}")),
    };
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().unwrap_or_default();
    client.log(json!({"scene_id": req.scene_id, "status": status, "response": text}));
    match status {
        401 | 403 => {
            return Attempt::Fatal(VlmError::Auth {
                endpoint: client.endpoint.clone(),
                status,
            })
        }
        200..=299 => {}
        429 | 500..=599 => return Attempt::Retry(format!("HTTP {status}")),
        _ => {
            return Attempt::Fatal(VlmError::Transport {
                endpoint: client.endpoint.clone(),
                reason: format!(
                    "HTTP {status}: {}",
                    text.chars().take(200).collect::<String>()
                ),
            })
        }
    }
    let content = serde_json::from_str::<Value>(&text).ok().and_then(|v| {
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
    });
    let Some(content) = content else {
        return Attempt::Retry("reply has no message content".into());
    };
    match parse_vlm_reply(&content) {
        Some(v) => Attempt::Done(v),
        None => Attempt::Retry("reply holds no verdict JSON".into()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineVerdict {
    pub scene_id: String,
    pub rule: RuleVerdict,
    pub vlm: Option<VlmVerdict>,
    /// Final label; `None` when the frame lacks boundaries.
    pub label: Option<AsymLabel>,
    /// True when the rule label was not confirmed or rejected by the VLM.
    pub unrefined: bool,
    pub vlm_error: Option<String>,
    pub no_camera_cue: bool,
}

/// Rule classification of the frame's designated boundaries, then optional
/// VLM confirmation of asymmetric verdicts. The VLM can only remove scenes
/// from the asymmetric set.
pub fn classify_pipeline(
    frame: &SceneFrame,
    th: &RuleThresholds,
    vlm: Option<&VlmClient>,
) -> PipelineVerdict {
    let rule = classify_rule_based(&frame.left_boundary, &frame.right_boundary, th);
    let mut out = PipelineVerdict {
        scene_id: frame.scene_id.clone(),
        label: rule.label.as_asym(),
        rule: rule.clone(),
        vlm: None,
        unrefined: true,
        vlm_error: None,
        no_camera_cue: false,
    };
    let Some(client) = vlm else { return out };
    if rule.label != RuleLabel::Asymmetric {
        out.unrefined = false;
        return out;
    }
    let res = build_vlm_request(frame, &rule).and_then(|req| {
        out.no_camera_cue = req.no_camera_cue;
        refine_with_vlm(client, &req)
    });
    match res {
        Ok(v) => {
            out.label = Some(v.label);
            out.vlm = Some(v);
            out.unrefined = false;
        }
        Err(e) => out.vlm_error = Some(e.to_string()),
    }
    out
}
