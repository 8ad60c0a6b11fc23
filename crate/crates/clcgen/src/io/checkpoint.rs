//! Toy denoiser checkpoints.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffusion::{NoiseSchedule, ScheduleConfig};
use crate::error::{Error, Result};
use crate::io::tensors::{read_tensors, write_tensors, Tensor};
use crate::toy::model::{N_PARAMS, PARAMS};
use crate::toy::{BlockCodec, ToyDenoiser, ToyHyper};

pub const FORMAT: &str = "clcgen-toy-1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format: String,
    pub params: Vec<ParamInfo>,
    pub schedule: ScheduleConfig,
    pub schedule_fingerprint: String,
    pub codec_factor: usize,
    pub codec_gain: f64,
    pub width: usize,
    pub height: usize,
    pub cell: usize,
    /// Seed the training set was generated from, when known.
    pub dataset_seed: Option<u64>,
    pub train: ToyHyper,
}

pub fn save_checkpoint(
    path: &Path,
    net: &ToyDenoiser,
    sched: &NoiseSchedule,
    train: &ToyHyper,
    dataset_seed: Option<u64>,
) -> Result<CheckpointManifest> {
    let shape = net.shape();
    let manifest = CheckpointManifest {
        format: FORMAT.into(),
        params: PARAMS
            .iter()
            .map(|(n, s, _)| ParamInfo {
                name: n.to_string(),
                shape: s.to_vec(),
            })
            .collect(),
        schedule: sched.config().clone(),
        schedule_fingerprint: sched.fingerprint(),
        codec_factor: net.codec().factor(),
        codec_gain: net.codec().gain(),
        width: shape.width * shape.factor,
        height: shape.height * shape.factor,
        cell: net.cell(),
        dataset_seed,
        train: train.clone(),
    };
    let theta = net.params();
    let tensors: BTreeMap<String, Tensor> = PARAMS
        .iter()
        .map(|(n, s, off)| {
            let len: usize = s.iter().product();
            (
                n.to_string(),
                Tensor {
                    shape: s.to_vec(),
                    data: theta[*off..off + len].to_vec(),
                },
            )
        })
        .collect();
    let text = serde_json::to_string(&manifest).map_err(|e| Error::Parse(e.to_string()))?;
    write_tensors(path, &tensors, &text)?;
    Ok(manifest)
}

/// Loads a checkpoint and rebuilds its schedule, checking the recorded
/// fingerprint against it.
pub fn load_checkpoint(path: &Path) -> Result<(ToyDenoiser, NoiseSchedule, CheckpointManifest)> {
    let (tensors, text) = read_tensors(path)?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    if manifest.format != FORMAT {
        return Err(Error::Parse(format!(
            "{}: unknown checkpoint format {}",
            path.display(),
            manifest.format
        )));
    }
    let sched = manifest.schedule.build()?;
    if sched.fingerprint() != manifest.schedule_fingerprint {
        return Err(Error::Validation(format!(
            "{}: schedule fingerprint mismatch",
            path.display()
        )));
    }
    let codec = BlockCodec::new(manifest.codec_factor, manifest.codec_gain)?;
    let mut net = ToyDenoiser::new(codec, manifest.width, manifest.height, manifest.cell)?;
    let mut theta = vec![0.0; N_PARAMS];
    for (n, s, off) in PARAMS {
        let t = tensors
            .get(n)
            .ok_or_else(|| Error::Parse(format!("{}: missing tensor {n}", path.display())))?;
        if t.shape != s {
            return Err(Error::shape(format!("{n} {s:?}"), format!("{:?}", t.shape)));
        }
        theta[off..off + t.data.len()].copy_from_slice(&t.data);
    }
    net.set_params(theta)?;
    Ok((net, sched, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.safetensors");
        let sched = ScheduleConfig::default().build().unwrap();
        let mut net = ToyDenoiser::new(BlockCodec::default(), 64, 64, 16).unwrap();
        let theta: Vec<f64> = (0..N_PARAMS).map(|i| (i as f64).sin()).collect();
        net.set_params(theta).unwrap();
        let m = save_checkpoint(&p, &net, &sched, &ToyHyper::default(), Some(7)).unwrap();
        let (back, s2, m2) = load_checkpoint(&p).unwrap();
        assert_eq!(back, net);
        assert_eq!(s2, sched);
        assert_eq!(m2, m);
        assert_eq!(m.params[0].shape, vec![9, 9]);
    }

    #[test]
    fn missing_file_is_missing_input() {
        let err = load_checkpoint(Path::new("/nonexistent/ckpt.safetensors")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
