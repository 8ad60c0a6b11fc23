//! JSON-lines manifests and the record types stored in them.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::curation::BoundingBox;
use crate::error::{Error, Result};
use crate::toy::SceneSpec;

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| Error::Parse(e.to_string()))?;
        out.push(b'\n');
    }
    write_bytes(path, &out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    out.push(b'\n');
    write_bytes(path, &out)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

/// Writes `bytes`, creating parent directories as needed.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    f.write_all(bytes)
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// One synthetic video in a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub split: String,
    pub n_frames: usize,
    pub fps: f64,
    pub scene: SceneSpec,
}

/// One raw video offered to the curation pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurationRecord {
    pub video_id: String,
    /// Unit-norm identity embedding.
    pub embedding: Vec<f64>,
    pub frame_size: (u32, u32),
    pub bbox: BoundingBox,
    /// Pose-detection success per frame; its length is the video length.
    pub pose_valid: Vec<bool>,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/m.jsonl");
        let items = vec![BTreeMap::from([("a".to_string(), 1)]), BTreeMap::from([("b".to_string(), 2)])];
        write_jsonl(&p, &items).unwrap();
        assert_eq!(read_jsonl::<BTreeMap<String, i32>>(&p).unwrap(), items);
        fs::write(&p, "{\"a\": 1}\nnot json\n").unwrap();
        let err = read_jsonl::<BTreeMap<String, i32>>(&p).unwrap_err();
        assert!(err.to_string().contains(":2:"));
        assert!(matches!(read_jsonl::<u8>(&dir.path().join("x")), Err(Error::MissingInput(_))));
    }
}
