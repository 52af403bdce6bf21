//! Per-run manifest tying artifacts to their inputs.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::scene::Scene;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Hash of command, config, seed and scenes; equal inputs give equal ids.
    pub run_id: String,
    pub command: String,
    pub config: serde_json::Value,
    pub scene_hash: String,
    pub seed: u64,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
    pub artifacts: Vec<String>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Git blob id computed with SHA-256: `sha256("blob <len>\0" + content)`.
pub fn blob_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex(&h.finalize())
}

/// Tree-style hash over the scenes' serialized files, sorted by scene id.
pub fn scenes_hash<'a>(scenes: impl IntoIterator<Item = &'a Scene>) -> Result<String> {
    let mut entries = scenes
        .into_iter()
        .map(|s| Ok((s.scene_id().to_string(), blob_hash(s.to_json()?.as_bytes()))))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    let listing: String = entries.iter().map(|(id, h)| format!("{h} {id}.json\n")).collect();
    Ok(blob_hash(listing.as_bytes()))
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, scene_hash: String, seed: u64) -> Self {
        let key = format!("{command}\n{config}\n{scene_hash}\n{seed}");
        Self {
            run_id: blob_hash(key.as_bytes())[..16].to_string(),
            command: command.to_string(),
            config,
            scene_hash,
            seed,
            started_unix_s: unix_now(),
            finished_unix_s: 0,
            artifacts: Vec::new(),
        }
    }

    pub fn finish(&mut self, artifacts: Vec<String>) {
        self.artifacts = artifacts;
        self.finished_unix_s = unix_now();
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_scene, SceneGenParams, SceneType};

    #[test]
    fn blob_hash_matches_git_sha256_objects() {
        // `git hash-object --object-format=sha256` of an empty file.
        assert_eq!(
            blob_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }

    #[test]
    fn scene_hash_is_order_independent_and_content_sensitive() {
        let p = SceneGenParams::default();
        let a = generate_scene(0, SceneType::Kitchen, &p).unwrap();
        let b = generate_scene(1, SceneType::Kitchen, &p).unwrap();
        let c = generate_scene(2, SceneType::Kitchen, &p).unwrap();
        assert_eq!(scenes_hash([&a, &b]).unwrap(), scenes_hash([&b, &a]).unwrap());
        assert_ne!(scenes_hash([&a, &b]).unwrap(), scenes_hash([&a, &c]).unwrap());
    }

    #[test]
    fn run_id_depends_only_on_inputs() {
        let cfg = serde_json::json!({"x": 1});
        let a = RunManifest::new("train", cfg.clone(), "h".into(), 3);
        let b = RunManifest::new("train", cfg, "h".into(), 3);
        assert_eq!(a.run_id, b.run_id);
        assert_ne!(a.run_id, RunManifest::new("eval", serde_json::json!({"x": 1}), "h".into(), 3).run_id);
    }
}
