use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::checkpoint::load_checkpoint;
use crate::io::config::ExperimentConfig;
use crate::io::frames::{read_frames, video_ids, write_frame};
use crate::io::manifest::write_json;
use crate::io::tensors::{write_tensors, Tensor};
use crate::latent::LatentGrid;
use crate::sampler::{generate_unbounded, generate_video, ConditioningBundle, FeedbackConfig, NoiseMode};
use crate::toy::scene::DEFAULT_FPS;
use crate::toy::{appearance, motion};

/// Written next to the generated frames.
#[derive(Debug, Serialize)]
struct RunManifest {
    checkpoint: PathBuf,
    schedule_fingerprint: String,
    ddim_steps: usize,
    beta: f64,
    noise_mode: NoiseMode,
    cfg_scale: f64,
    seed: u64,
    n_frames: usize,
    videos: Vec<RunVideo>,
}

#[derive(Debug, Serialize)]
struct RunVideo {
    video_id: String,
    source: String,
    seed: u64,
    n_frames: usize,
    /// Most latent grids held at once while streaming.
    peak_resident: Option<usize>,
}

pub(super) fn run(cfg: &ExperimentConfig) -> Result<()> {
    let (net, sched, manifest) = load_checkpoint(&cfg.paths.checkpoint)?;
    if cfg.feedback.is_flagged() {
        eprintln!(
            "warning: feedback gain {} is above the range where feedback usually helps",
            cfg.feedback.beta
        );
    }
    let val_dir = cfg.val_dir();
    // Without an explicit driving video every validation video is
    // re-generated from its own first frame.
    let jobs: Vec<(String, String)> = match &cfg.animate.driving {
        Some(d) => vec![(d.clone(), cfg.animate.source.clone().unwrap_or_else(|| d.clone()))],
        None => video_ids(&val_dir)?
            .into_iter()
            .map(|id| {
                let src = cfg.animate.source.clone().unwrap_or_else(|| id.clone());
                (id, src)
            })
            .collect(),
    };
    if jobs.is_empty() {
        return Err(Error::MissingInput(val_dir));
    }
    let out_root = cfg.paths.output.join("animate");
    let mut videos = Vec::new();
    for (i, (driving_id, source_id)) in jobs.iter().enumerate() {
        let driving = read_frames(&find_video(cfg, driving_id)?, DEFAULT_FPS)?;
        let source = read_frames(&find_video(cfg, source_id)?, DEFAULT_FPS)?;
        let first = source
            .frames
            .first()
            .ok_or_else(|| Error::Validation(format!("source video {source_id} has no frames")))?;
        if driving.is_empty() {
            return Err(Error::Validation(format!("driving video {driving_id} has no frames")));
        }
        let n_frames = cfg.animate.n_frames.unwrap_or(driving.len());
        if n_frames == 0 {
            return Err(Error::Config("animate.n_frames must be at least 1".into()));
        }
        let seed = cfg.feedback.seed.wrapping_add(i as u64);
        let fb = FeedbackConfig {
            seed,
            ..cfg.feedback.clone()
        };
        let app = appearance(first).to_vec();
        let motions = driving
            .frames
            .iter()
            .map(|f| motion(net.codec(), f))
            .collect::<Result<Vec<_>>>()?;
        // Driving motion loops when more frames are requested than it has.
        let cycled = motions.iter().cycle().take(n_frames).cloned();

        let dir = out_root.join(driving_id);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(format!("clearing {}", dir.display()), e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;

        let peak_resident = if cfg.animate.dump_latents {
            let cond = ConditioningBundle {
                appearance: app,
                motion: cycled.collect(),
            };
            let trace = generate_video(&net, net.codec(), &cond, &sched, &fb, n_frames)?;
            for (k, f) in trace.frames.iter().enumerate() {
                write_frame(&dir, k, f)?;
            }
            let tensors = BTreeMap::from([
                ("z0_hat".to_string(), stack(&trace.z0_hat)),
                ("inputs".to_string(), stack(&trace.inputs)),
                ("z_t".to_string(), stack(std::slice::from_ref(&trace.z_t))),
            ]);
            let meta = serde_json::json!({ "video_id": driving_id, "seed": seed }).to_string();
            write_tensors(&dir.join("latents.safetensors"), &tensors, &meta)?;
            None
        } else {
            let mut gen = generate_unbounded(&net, net.codec(), &app, cycled, net.shape(), &sched, &fb)?;
            let mut k = 0;
            for frame in gen.by_ref() {
                write_frame(&dir, k, &frame.map_err(|e| e.in_stage("animate"))?)?;
                k += 1;
            }
            Some(gen.peak_resident())
        };
        eprintln!("{driving_id}: {n_frames} frames");
        videos.push(RunVideo {
            video_id: driving_id.clone(),
            source: source_id.clone(),
            seed,
            n_frames,
            peak_resident,
        });
    }
    write_json(
        &out_root.join("run.json"),
        &RunManifest {
            checkpoint: cfg.paths.checkpoint.clone(),
            schedule_fingerprint: manifest.schedule_fingerprint,
            ddim_steps: sched.ddim_steps().len(),
            beta: cfg.feedback.beta,
            noise_mode: cfg.feedback.noise_mode,
            cfg_scale: cfg.feedback.cfg_scale,
            seed: cfg.feedback.seed,
            n_frames: videos.iter().map(|v| v.n_frames).max().unwrap_or(0),
            videos,
        },
    )
}

/// Looks a video id up in the validation split, then the training split.
fn find_video(cfg: &ExperimentConfig, id: &str) -> Result<PathBuf> {
    [cfg.val_dir(), cfg.train_dir()]
        .iter()
        .map(|d| d.join(id))
        .find(|p| p.is_dir())
        .ok_or_else(|| Error::MissingInput(cfg.val_dir().join(id)))
}

fn stack(grids: &[LatentGrid]) -> Tensor {
    let s = grids[0].shape();
    Tensor {
        shape: vec![grids.len(), s.channels, s.height, s.width],
        data: grids.iter().flat_map(|g| g.data().iter().copied()).collect(),
    }
}
