//! Scene directories: a versioned JSON manifest plus one PNG per camera.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{SceneError, SceneFrame};
use crate::raster::Image;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "scene.json";

#[derive(Debug, Serialize, Deserialize)]
struct ImageEntry {
    camera: String,
    file: String,
    sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    frame: SceneFrame,
    images: Vec<ImageEntry>,
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: u32,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn io_err(path: &Path, source: std::io::Error) -> SceneError {
    SceneError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `frame` into `dir` (created if missing).
pub fn save_scene(frame: &SceneFrame, dir: &Path) -> Result<(), SceneError> {
    frame.validate()?;
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut images = Vec::new();
    for (img, cam) in frame.images.iter().zip(&frame.rig.cameras) {
        let bytes = img.encode_png().map_err(|e| SceneError::Decode {
            camera: cam.id.clone(),
            reason: e.to_string(),
        })?;
        let file = format!("{}.png", cam.id);
        let path = dir.join(&file);
        fs::write(&path, &bytes).map_err(|e| io_err(&path, e))?;
        images.push(ImageEntry {
            camera: cam.id.clone(),
            file,
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        frame: frame.clone(),
        images,
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| SceneError::Manifest {
        path: path.display().to_string(),
        source: e,
    })?;
    fs::write(&path, json).map_err(|e| io_err(&path, e))
}

/// Reads a scene directory written by [`save_scene`].
pub fn load_scene(dir: &Path) -> Result<SceneFrame, SceneError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read(&path).map_err(|e| io_err(&path, e))?;
    let mpath = path.display().to_string();
    let probe: VersionProbe = serde_json::from_slice(&text).map_err(|e| SceneError::Manifest {
        path: mpath.clone(),
        source: e,
    })?;
    if probe.schema_version != SCHEMA_VERSION {
        return Err(SceneError::SchemaVersion {
            found: probe.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    let manifest: Manifest = serde_json::from_slice(&text).map_err(|e| SceneError::Manifest {
        path: mpath,
        source: e,
    })?;
    let mut frame = manifest.frame;
    let mut images = Vec::new();
    for cam in &frame.rig.cameras {
        let Some(entry) = manifest.images.iter().find(|e| e.camera == cam.id) else {
            if manifest.images.is_empty() {
                break;
            }
            return Err(SceneError::Decode {
                camera: cam.id.clone(),
                reason: "missing image entry".into(),
            });
        };
        let ipath = dir.join(&entry.file);
        let bytes = fs::read(&ipath).map_err(|e| io_err(&ipath, e))?;
        let img = Image::decode_png(&bytes).map_err(|e| SceneError::Decode {
            camera: cam.id.clone(),
            reason: e.to_string(),
        })?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(SceneError::Checksum {
                camera: cam.id.clone(),
            });
        }
        images.push(img);
    }
    frame.images = images;
    frame.validate()?;
    Ok(frame)
}
