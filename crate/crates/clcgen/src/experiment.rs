//! Toy-world experiments shared by the CLI and the acceptance tests:
//! seeded clip suites, self-reenactment and the feedback-gain sweep.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::metrics::tje_multi;
use crate::sampler::{generate_video, ConditioningBundle, FeedbackConfig};
use crate::toy::{appearance, motion, render_clip, SceneSampler, SceneSpec, ToyDenoiser};
use crate::video::{Frame, VideoClip};

pub const DEFAULT_BETA_GRID: [f64; 5] = [0.0, 0.01, 0.05, 0.1, 0.2];

/// `n` scenes and their rendered clips, reproducible from `seed`.
pub fn make_suite(
    sampler: &SceneSampler,
    n: usize,
    n_frames: usize,
    seed: u64,
) -> Result<Vec<(SceneSpec, VideoClip)>> {
    sampler.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let spec = sampler.sample(&mut rng);
            let clip = render_clip(&spec, n_frames)?;
            Ok((spec, clip))
        })
        .collect()
}

/// Animates `source`'s appearance along the motion of `driving`.
pub fn animate(
    net: &ToyDenoiser,
    sched: &NoiseSchedule,
    cfg: &FeedbackConfig,
    source: &Frame,
    driving: &[Frame],
) -> Result<VideoClip> {
    let cond = ConditioningBundle {
        appearance: appearance(source).to_vec(),
        motion: driving
            .iter()
            .map(|f| motion(net.codec(), f))
            .collect::<Result<_>>()?,
    };
    let trace = generate_video(net, net.codec(), &cond, sched, cfg, driving.len())?;
    VideoClip::new(trace.frames, crate::toy::scene::DEFAULT_FPS)
}

/// TJE per video and offset when each clip is re-generated from its own
/// first frame and motion. Video `i` is sampled with seed `cfg.seed + i`.
pub fn suite_tje(
    net: &ToyDenoiser,
    sched: &NoiseSchedule,
    cfg: &FeedbackConfig,
    clips: &[VideoClip],
    deltas: &[usize],
) -> Result<Vec<Vec<f64>>> {
    clips
        .iter()
        .enumerate()
        .map(|(i, clip)| {
            let first = clip
                .frames
                .first()
                .ok_or_else(|| Error::param("suite clips must be non-empty"))?;
            let cfg = FeedbackConfig {
                seed: cfg.seed.wrapping_add(i as u64),
                ..cfg.clone()
            };
            let gen = animate(net, sched, &cfg, first, &clip.frames)?;
            Ok(tje_multi(clip, &gen, deltas)?
                .into_iter()
                .map(|r| r.mean_error)
                .collect())
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    /// Mean over videos and offsets.
    pub objective: f64,
    /// Mean over videos, per offset.
    pub per_delta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub deltas: Vec<usize>,
    pub rows: Vec<SweepRow>,
    pub selected: f64,
}

/// Index of the smallest objective, ties going to the smaller gain.
pub fn select_beta(rows: &[SweepRow]) -> Result<usize> {
    if rows.is_empty() {
        return Err(Error::Config("the beta grid is empty".into()));
    }
    let mut best = 0;
    for (i, r) in rows.iter().enumerate().skip(1) {
        let b = &rows[best];
        if r.objective < b.objective || (r.objective == b.objective && r.beta < b.beta) {
            best = i;
        }
    }
    Ok(best)
}

pub fn sweep_beta(
    net: &ToyDenoiser,
    sched: &NoiseSchedule,
    base: &FeedbackConfig,
    clips: &[VideoClip],
    betas: &[f64],
    deltas: &[usize],
) -> Result<SweepResult> {
    if betas.is_empty() {
        return Err(Error::Config("the beta grid is empty".into()));
    }
    if deltas.is_empty() {
        return Err(Error::Config("the offset list is empty".into()));
    }
    if clips.len() < 2 {
        return Err(Error::Validation(format!(
            "the sweep needs at least 2 validation videos, got {}",
            clips.len()
        )));
    }
    let mut rows = Vec::with_capacity(betas.len());
    for &beta in betas {
        let cfg = FeedbackConfig {
            beta,
            ..base.clone()
        };
        let table = suite_tje(net, sched, &cfg, clips, deltas)?;
        let per_delta: Vec<f64> = (0..deltas.len())
            .map(|d| table.iter().map(|r| r[d]).sum::<f64>() / table.len() as f64)
            .collect();
        let objective = per_delta.iter().sum::<f64>() / per_delta.len() as f64;
        rows.push(SweepRow {
            beta,
            objective,
            per_delta,
        });
    }
    let selected = rows[select_beta(&rows)?].beta;
    Ok(SweepResult {
        deltas: deltas.to_vec(),
        rows,
        selected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(beta: f64, objective: f64) -> SweepRow {
        SweepRow {
            beta,
            objective,
            per_delta: vec![objective],
        }
    }

    #[test]
    fn selection_breaks_ties_toward_small_gain() {
        let flat: Vec<_> = DEFAULT_BETA_GRID.iter().map(|&b| row(b, 3.0)).collect();
        assert_eq!(flat[select_beta(&flat).unwrap()].beta, 0.0);
        let rows = vec![row(0.1, 2.0), row(0.05, 2.0), row(0.0, 5.0)];
        assert_eq!(rows[select_beta(&rows).unwrap()].beta, 0.05);
        assert!(select_beta(&[]).is_err());
    }

    #[test]
    fn suites_are_seeded() {
        let s = SceneSampler::default();
        let a = make_suite(&s, 2, 3, 9).unwrap();
        let b = make_suite(&s, 2, 3, 9).unwrap();
        assert_eq!(a, b);
    }
}
