//! Adapter for map models running in a separate process.
//!
//! Messages are JSON documents framed by a big-endian `u32` byte length and
//! exchanged over the child's stdin/stdout. The first exchange is a
//! handshake carrying the wire version.

use std::io::{Read, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    ExternalCommand, MapOracle, OracleError, PredictedElement, PredictedMap, PREDICTED_POINTS,
};
use crate::geometry::{resample_polyline, ClassTag, Polyline2D, Vec2};
use crate::raster::Image;
use crate::scene::SceneFrame;

pub const WIRE_VERSION: u32 = 1;

/// Upper bound on a single message payload.
const MAX_MESSAGE: usize = 256 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WireRequest {
    Hello {
        version: u32,
    },
    Predict {
        frame_ref: String,
        /// Camera ids, index-aligned with `images`.
        cameras: Vec<String>,
        /// Base64-encoded PNG per camera.
        images: Vec<String>,
    },
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireElement {
    pub class: ClassTag,
    pub points: Vec<Vec2>,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WireReply {
    Hello {
        version: u32,
        #[serde(default)]
        name: String,
    },
    Map {
        elements: Vec<WireElement>,
    },
    Error {
        message: String,
    },
}

pub fn encode_message<T: Serialize>(msg: &T) -> Result<Vec<u8>, OracleError> {
    let body = serde_json::to_vec(msg).map_err(|e| OracleError::Protocol(e.to_string()))?;
    let len =
        u32::try_from(body.len()).map_err(|_| OracleError::Protocol("message too large".into()))?;
    let mut out = Vec::with_capacity(body.len() + 4);
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

/// Decodes one framed message. Error offsets count from the start of `frame`,
/// length prefix included.
pub fn decode_message<T: DeserializeOwned>(frame: &[u8]) -> Result<T, OracleError> {
    if frame.len() < 4 {
        return Err(OracleError::Decode {
            offset: frame.len(),
            message: "truncated length prefix".into(),
        });
    }
    let len = u32::from_be_bytes([frame[0], frame[1], frame[2], frame[3]]) as usize;
    let body = &frame[4..];
    if body.len() < len {
        return Err(OracleError::Decode {
            offset: frame.len(),
            message: format!(
                "payload truncated: expected {len} bytes, got {}",
                body.len()
            ),
        });
    }
    let body = &body[..len];
    serde_json::from_slice(body).map_err(|e| OracleError::Decode {
        offset: 4 + byte_offset(body, e.line(), e.column()),
        message: e.to_string(),
    })
}

fn byte_offset(body: &[u8], line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in body.split(|&b| b == b'\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(body.len());
        }
        offset += l.len() + 1;
    }
    body.len()
}

fn read_frame(r: &mut impl Read) -> Result<Vec<u8>, OracleError> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_MESSAGE {
        return Err(OracleError::Decode {
            offset: 0,
            message: format!("message length {n} exceeds limit"),
        });
    }
    let mut frame = Vec::with_capacity(n + 4);
    frame.extend_from_slice(&len);
    frame.resize(n + 4, 0);
    r.read_exact(&mut frame[4..])?;
    Ok(frame)
}

/// Reads one framed message from a stream.
pub fn read_message<T: DeserializeOwned>(r: &mut impl Read) -> Result<T, OracleError> {
    decode_message(&read_frame(r)?)
}

pub fn write_message<T: Serialize>(w: &mut impl Write, msg: &T) -> Result<(), OracleError> {
    w.write_all(&encode_message(msg)?)?;
    w.flush()?;
    Ok(())
}

/// Converts a wire reply into a map, resampling polylines to the fixed
/// cardinality and clamping confidences.
pub fn wire_to_map(elements: Vec<WireElement>) -> Result<PredictedMap, OracleError> {
    let mut out = Vec::with_capacity(elements.len());
    for el in elements {
        let poly = Polyline2D::new_dedup(el.points, el.class)
            .map_err(|e| OracleError::Protocol(e.to_string()))?;
        let poly = resample_polyline(&poly, PREDICTED_POINTS)
            .map_err(|e| OracleError::Protocol(e.to_string()))?;
        out.push(PredictedElement {
            polyline: poly,
            confidence: el.confidence.clamp(0.0, 1.0),
        });
    }
    Ok(PredictedMap { elements: out })
}

pub struct ExternalOracle {
    command: ExternalCommand,
    child: Child,
    stdin: ChildStdin,
    stdout: ChildStdout,
    queries: u64,
}

impl std::fmt::Debug for ExternalOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalOracle")
            .field("command", &self.command)
            .field("queries", &self.queries)
            .finish()
    }
}

impl ExternalOracle {
    /// Starts the process and performs the version handshake.
    pub fn spawn(command: &ExternalCommand) -> Result<Self, OracleError> {
        let mut child = Command::new(&command.program)
            .args(&command.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| {
                OracleError::Unavailable(format!("cannot start '{}': {e}", command.program))
            })?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let mut stdout = child.stdout.take().expect("piped stdout");
        let handshake = (|| {
            write_message(
                &mut stdin,
                &WireRequest::Hello {
                    version: WIRE_VERSION,
                },
            )?;
            read_message::<WireReply>(&mut stdout)
        })();
        match handshake {
            Ok(WireReply::Hello { version, .. }) if version == WIRE_VERSION => {}
            Ok(WireReply::Hello { version, .. }) => {
                let _ = child.kill();
                return Err(OracleError::Unavailable(format!(
                    "wire version mismatch: oracle speaks {version}, expected {WIRE_VERSION}"
                )));
            }
            Ok(other) => {
                let _ = child.kill();
                return Err(OracleError::Unavailable(format!(
                    "unexpected handshake reply: {other:?}"
                )));
            }
            Err(e) => {
                let _ = child.kill();
                return Err(OracleError::Unavailable(format!("handshake failed: {e}")));
            }
        }
        Ok(Self {
            command: command.clone(),
            child,
            stdin,
            stdout,
            queries: 0,
        })
    }
}

impl MapOracle for ExternalOracle {
    fn predict(
        &mut self,
        frame: &SceneFrame,
        images: &[Image],
    ) -> Result<PredictedMap, OracleError> {
        self.queries += 1;
        let mut encoded = Vec::with_capacity(images.len());
        for img in images {
            let png = img
                .encode_png()
                .map_err(|e| OracleError::Protocol(e.to_string()))?;
            encoded.push(base64::engine::general_purpose::STANDARD.encode(png));
        }
        let req = WireRequest::Predict {
            frame_ref: frame.scene_id.clone(),
            cameras: frame.rig.cameras.iter().map(|c| c.id.clone()).collect(),
            images: encoded,
        };
        write_message(&mut self.stdin, &req)?;
        match read_message::<WireReply>(&mut self.stdout)? {
            WireReply::Map { elements } => wire_to_map(elements),
            WireReply::Error { message } => Err(OracleError::Protocol(message)),
            WireReply::Hello { .. } => {
                Err(OracleError::Protocol("unexpected handshake message".into()))
            }
        }
    }

    fn query_count(&self) -> u64 {
        self.queries
    }

    fn fresh(&self) -> Result<Box<dyn MapOracle>, OracleError> {
        Ok(Box::new(ExternalOracle::spawn(&self.command)?))
    }
}

impl Drop for ExternalOracle {
    fn drop(&mut self) {
        let _ = write_message(&mut self.stdin, &WireRequest::Shutdown);
        if self.child.try_wait().ok().flatten().is_none() {
            let _ = self.child.kill();
        }
        let _ = self.child.wait();
    }
}
