//! Per-frame denoiser training: every step draws a source frame for
//! appearance and a driving frame to reconstruct from the same clip.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{NoiseSchedule, PredictionTarget};
use crate::error::{Error, Result};
use crate::latent::LatentGrid;
use crate::sampler::Conditioning;
use crate::toy::codec::BlockCodec;
use crate::toy::encoders::{appearance, motion, Appearance};
use crate::toy::model::{ToyDenoiser, N_PARAMS};
use crate::video::VideoClip;

/// A clip with its latents and conditioning precomputed.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedClip {
    pub latents: Vec<LatentGrid>,
    pub motion: Vec<LatentGrid>,
    pub appearance: Vec<Appearance>,
    pub width: usize,
    pub height: usize,
}

impl PreparedClip {
    pub fn new(codec: &BlockCodec, clip: &VideoClip) -> Result<Self> {
        let first = clip
            .frames
            .first()
            .ok_or_else(|| Error::param("cannot prepare an empty clip"))?;
        Ok(PreparedClip {
            latents: clip.frames.iter().map(|f| codec.encode(f)).collect::<Result<_>>()?,
            motion: clip.frames.iter().map(|f| motion(codec, f)).collect::<Result<_>>()?,
            appearance: clip.frames.iter().map(appearance).collect(),
            width: first.width(),
            height: first.height(),
        })
    }

    pub fn len(&self) -> usize {
        self.latents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latents.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyHyper {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    /// Cosine decay ends at `lr * lr_floor`.
    pub lr_floor: f64,
    /// Probability of dropping all conditioning for a sample.
    pub p_drop: f64,
    pub seed: u64,
    pub target: PredictionTarget,
    pub cell: usize,
    /// Validation cadence in steps; 0 disables validation.
    pub eval_every: usize,
    pub eval_samples: usize,
}

impl Default for ToyHyper {
    fn default() -> Self {
        ToyHyper {
            steps: 2000,
            batch: 16,
            lr: 1e-2,
            lr_floor: 0.05,
            p_drop: 0.1,
            seed: 0,
            target: PredictionTarget::V,
            cell: 16,
            eval_every: 500,
            eval_samples: 40,
        }
    }
}

impl ToyHyper {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::Config("batch must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(0.0..=1.0).contains(&self.lr_floor) {
            return Err(Error::Config("need lr > 0 and lr_floor in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.p_drop) {
            return Err(Error::Config(format!("p_drop must lie in [0, 1], got {}", self.p_drop)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean batch loss of every step.
    pub loss: Vec<f64>,
    /// `(step, validation loss)` pairs.
    pub validation: Vec<(usize, f64)>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * grad[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * grad[i] * grad[i];
            theta[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

struct Sample<'a> {
    input: LatentGrid,
    z: LatentGrid,
    eps: LatentGrid,
    ab: f64,
    cond: Option<Conditioning<'a>>,
}

fn draw<'a, R: Rng>(
    rng: &mut R,
    clips: &'a [PreparedClip],
    sched: &NoiseSchedule,
    p_drop: f64,
) -> Result<Sample<'a>> {
    let clip = &clips[rng.random_range(0..clips.len())];
    let src = rng.random_range(0..clip.len());
    let drv = rng.random_range(0..clip.len());
    let t = rng.random_range(1..=sched.t_train());
    let ab = sched.alpha_bar(t)?;
    let z0 = &clip.latents[drv];
    let eps = LatentGrid::standard_normal(z0.shape(), rng);
    let z = z0.lincomb(ab.sqrt(), &eps, (1.0 - ab).sqrt())?;
    let dropped = rng.random::<f64>() < p_drop;
    let (input, cond) = if dropped {
        (z.clone(), None)
    } else {
        let m = &clip.motion[drv];
        let c = Conditioning {
            appearance: &clip.appearance[src],
            motion: m,
        };
        (z.add(m)?, Some(c))
    };
    Ok(Sample {
        input,
        z,
        eps,
        ab,
        cond,
    })
}

/// Prediction in the space of `target`, from a v prediction.
fn to_target(target: PredictionTarget, v: f64, z: f64, ab: f64) -> f64 {
    match target {
        PredictionTarget::V => v,
        PredictionTarget::Eps => (1.0 - ab).sqrt() * z + ab.sqrt() * v,
    }
}

fn target_value(target: PredictionTarget, s: &Sample<'_>, i: usize) -> f64 {
    let (e, z) = (s.eps.data()[i], s.z.data()[i]);
    let z0 = (z - (1.0 - s.ab).sqrt() * e) / s.ab.sqrt();
    match target {
        PredictionTarget::V => s.ab.sqrt() * e - (1.0 - s.ab).sqrt() * z0,
        PredictionTarget::Eps => e,
    }
}

fn l1(target: PredictionTarget, s: &Sample<'_>, v: &[f64]) -> f64 {
    v.iter()
        .enumerate()
        .map(|(i, &vi)| (to_target(target, vi, s.z.data()[i], s.ab) - target_value(target, s, i)).abs())
        .sum::<f64>()
        / v.len() as f64
}

/// Mean L1 over `n` noisy samples drawn with a fixed seed, so successive
/// calls score the same samples.
pub fn validation_loss(
    net: &ToyDenoiser,
    clips: &[PreparedClip],
    sched: &NoiseSchedule,
    target: PredictionTarget,
    n: usize,
    seed: u64,
) -> Result<f64> {
    if clips.is_empty() || n == 0 {
        return Err(Error::param("validation needs clips and samples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tot = 0.0;
    for _ in 0..n {
        let s = draw(&mut rng, clips, sched, 0.0)?;
        let v = net.predict_at(&s.input, s.ab, s.cond)?;
        tot += l1(target, &s, v.data());
    }
    Ok(tot / n as f64)
}

const VALIDATION_SEED: u64 = 99;

pub fn train_toy(
    clips: &[PreparedClip],
    val: Option<&[PreparedClip]>,
    codec: &BlockCodec,
    sched: &NoiseSchedule,
    hyper: &ToyHyper,
) -> Result<(ToyDenoiser, TrainReport)> {
    hyper.validate()?;
    let first = clips
        .iter()
        .find(|c| !c.is_empty())
        .ok_or_else(|| Error::param("training needs at least one non-empty clip"))?;
    if clips.iter().any(|c| c.is_empty()) {
        return Err(Error::param("training clips must be non-empty"));
    }
    let mut net = ToyDenoiser::new(codec.clone(), first.width, first.height, hyper.cell)?;
    let mut theta = net.params().to_vec();
    let mut adam = Adam::new(N_PARAMS);
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut report = TrainReport::default();
    let validate = |net: &ToyDenoiser, report: &mut TrainReport, step: usize| -> Result<()> {
        if let Some(v) = val.filter(|v| !v.is_empty()) {
            let l = validation_loss(net, v, sched, hyper.target, hyper.eval_samples.max(1), VALIDATION_SEED)?;
            report.validation.push((step, l));
        }
        Ok(())
    };

    for step in 0..hyper.steps {
        if hyper.eval_every > 0 && step % hyper.eval_every == 0 {
            validate(&net, &mut report, step)?;
        }
        let progress = step as f64 / hyper.steps as f64;
        let lr = hyper.lr * (hyper.lr_floor + (1.0 - hyper.lr_floor) * 0.5 * (1.0 + (PI * progress).cos()));
        let mut grad = vec![0.0; N_PARAMS];
        let mut loss = 0.0;
        for _ in 0..hyper.batch {
            let s = draw(&mut rng, clips, sched, hyper.p_drop)?;
            let scale = 1.0 / (s.input.shape().len() * hyper.batch) as f64;
            let chain = match hyper.target {
                PredictionTarget::V => 1.0,
                PredictionTarget::Eps => s.ab.sqrt(),
            };
            let v = net.predict_with_grad(
                &s.input,
                s.ab,
                s.cond,
                |v| {
                    v.iter()
                        .enumerate()
                        .map(|(i, &vi)| {
                            let d = to_target(hyper.target, vi, s.z.data()[i], s.ab) - target_value(hyper.target, &s, i);
                            d.signum() * chain * scale
                        })
                        .collect()
                },
                &mut grad,
            )?;
            loss += l1(hyper.target, &s, &v) / hyper.batch as f64;
        }
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDivergence { step, loss });
        }
        report.loss.push(loss);
        adam.step(&mut theta, &grad, lr);
        net.set_params(theta.clone())
            .map_err(|_| Error::TrainingDivergence { step, loss })?;
    }
    if hyper.eval_every > 0 {
        validate(&net, &mut report, hyper.steps)?;
    }
    Ok((net, report))
}
