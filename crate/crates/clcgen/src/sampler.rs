//! Autoregressive frame generation with closed-loop feedback: each frame is
//! sampled by deterministic DDIM from `x_k + m_k`, and the next frame's
//! starting latent is pulled from the noise anchor toward the latent just
//! produced.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{cfg_combine, ddim_step, NoiseSchedule};
use crate::error::{Error, Result};
use crate::latent::{LatentGrid, Shape};
use crate::toy::codec::BlockCodec;
use crate::video::Frame;

/// Gains above this are allowed but known to degrade output.
pub const BETA_WARN: f64 = 0.2;

/// Conditioning for one denoiser call.
#[derive(Clone, Copy, Debug)]
pub struct Conditioning<'a> {
    pub appearance: &'a [f64],
    pub motion: &'a LatentGrid,
}

pub trait Denoiser: Sync {
    /// v prediction for the sampler input at timestep `t`. With `cond`
    /// present the input already contains the motion encoding; `None`
    /// requests the unconditional branch, which drops appearance and motion
    /// together.
    fn predict_v(
        &self,
        input: &LatentGrid,
        t: usize,
        sched: &NoiseSchedule,
        cond: Option<Conditioning<'_>>,
    ) -> Result<LatentGrid>;
}

pub trait LatentDecoder {
    fn decode_latent(&self, z: &LatentGrid) -> Result<Frame>;
}

impl LatentDecoder for BlockCodec {
    fn decode_latent(&self, z: &LatentGrid) -> Result<Frame> {
        self.decode(z)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// One `z_T` drawn for the whole video.
    #[default]
    Fixed,
    /// A fresh `z_T` per frame, which also serves as that frame's anchor.
    Independent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackConfig {
    pub beta: f64,
    #[serde(default)]
    pub noise_mode: NoiseMode,
    pub seed: u64,
    #[serde(default = "one")]
    pub cfg_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        FeedbackConfig {
            beta: 0.05,
            noise_mode: NoiseMode::Fixed,
            seed: 0,
            cfg_scale: 1.0,
        }
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::param(format!("feedback gain must lie in [0, 1], got {beta}")));
    }
    Ok(())
}

impl FeedbackConfig {
    pub fn validate(&self) -> Result<()> {
        check_beta(self.beta)?;
        if !(self.cfg_scale >= 0.0 && self.cfg_scale.is_finite()) {
            return Err(Error::param(format!(
                "guidance scale must be finite and >= 0, got {}",
                self.cfg_scale
            )));
        }
        Ok(())
    }

    /// True when the gain is in the range where feedback tends to hurt.
    pub fn is_flagged(&self) -> bool {
        self.beta > BETA_WARN
    }
}

/// `z_T + beta (z0_hat - z_T)`, evaluated so both endpoints are exact.
pub fn feedback_update(z_t: &LatentGrid, z0_hat: &LatentGrid, beta: f64) -> Result<LatentGrid> {
    check_beta(beta)?;
    z_t.lincomb(1.0 - beta, z0_hat, beta)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditioningBundle {
    /// Source appearance, fixed for the whole video.
    pub appearance: Vec<f64>,
    /// One motion encoding per frame, shaped like the latent.
    pub motion: Vec<LatentGrid>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationTrace {
    pub z0_hat: Vec<LatentGrid>,
    /// Sampler input `x_k` of every frame, before the motion is added.
    pub inputs: Vec<LatentGrid>,
    /// The first frame's noise, shared by all frames in fixed mode.
    pub z_t: LatentGrid,
    pub frames: Vec<Frame>,
}

impl GenerationTrace {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Frame-by-frame state. Between frames it holds the anchor and the previous
/// clean latent; while a frame is denoised it holds the anchor, the input and
/// the working latent.
struct FrameLoop<'a, D: ?Sized> {
    denoiser: &'a D,
    sched: &'a NoiseSchedule,
    cfg: FeedbackConfig,
    appearance: &'a [f64],
    shape: Shape,
    rng: ChaCha8Rng,
    z_t: Option<LatentGrid>,
    /// Previous frame's clean latent, folded into the next input.
    prev: Option<LatentGrid>,
    frame: usize,
    peak_resident: usize,
}

impl<'a, D: Denoiser + ?Sized> FrameLoop<'a, D> {
    fn new(
        denoiser: &'a D,
        sched: &'a NoiseSchedule,
        cfg: &FeedbackConfig,
        appearance: &'a [f64],
        shape: Shape,
    ) -> Result<Self> {
        cfg.validate()?;
        Ok(FrameLoop {
            denoiser,
            sched,
            cfg: cfg.clone(),
            appearance,
            shape,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            z_t: None,
            prev: None,
            frame: 0,
            peak_resident: 0,
        })
    }

    fn predict(&self, z: &LatentGrid, t: usize, motion: &LatentGrid) -> Result<LatentGrid> {
        let cond = Conditioning {
            appearance: self.appearance,
            motion,
        };
        let u = z.add(motion)?;
        if self.cfg.cfg_scale == 1.0 {
            return self.denoiser.predict_v(&u, t, self.sched, Some(cond));
        }
        let (vc, vu) = std::thread::scope(|s| {
            let h = s.spawn(|| self.denoiser.predict_v(z, t, self.sched, None));
            let vc = self.denoiser.predict_v(&u, t, self.sched, Some(cond));
            (vc, h.join().expect("unconditional branch panicked"))
        });
        cfg_combine(&vu?, &vc?, self.cfg.cfg_scale)
    }

    /// Samples one frame; returns its input `x_k` and final latent.
    fn next(&mut self, motion: &LatentGrid) -> Result<(LatentGrid, LatentGrid)> {
        if motion.shape() != self.shape {
            return Err(Error::shape(self.shape, motion.shape()));
        }
        if self.z_t.is_none() || self.cfg.noise_mode == NoiseMode::Independent {
            self.z_t = Some(LatentGrid::standard_normal(self.shape, &mut self.rng));
        }
        let z_t = self.z_t.as_ref().expect("anchor is set");
        let x = match self.prev.take() {
            Some(z0) => feedback_update(z_t, &z0, self.cfg.beta)?,
            None => z_t.clone(),
        };
        let mut z = x.clone();
        let live = self.z_t.is_some() as usize + self.prev.is_some() as usize + 2;
        self.peak_resident = self.peak_resident.max(live);

        let steps = self.sched.ddim_steps();
        for (i, &t) in steps.iter().enumerate() {
            let t_next = steps.get(i + 1).copied().unwrap_or(0);
            let v = self.predict(&z, t, motion)?;
            z = ddim_step(&z, &v, t, t_next, self.sched)?;
            if !z.is_finite() {
                return Err(Error::NumericDivergence {
                    frame: self.frame,
                    timestep: t,
                });
            }
        }
        self.frame += 1;
        Ok((x, z))
    }

    /// Keeps the frame's latent for the next frame's feedback update.
    fn keep(&mut self, z0: LatentGrid) {
        self.prev = Some(z0);
    }
}

/// Generates `n_frames` frames from precomputed conditioning.
pub fn generate_video<D, Dec>(
    denoiser: &D,
    decoder: &Dec,
    cond: &ConditioningBundle,
    sched: &NoiseSchedule,
    cfg: &FeedbackConfig,
    n_frames: usize,
) -> Result<GenerationTrace>
where
    D: Denoiser + ?Sized,
    Dec: LatentDecoder + ?Sized,
{
    if n_frames == 0 {
        return Err(Error::param("n_frames must be at least 1"));
    }
    if cond.motion.len() < n_frames {
        return Err(Error::param(format!(
            "{} motion encodings for {n_frames} frames",
            cond.motion.len()
        )));
    }
    let shape = cond.motion[0].shape();
    let mut lp = FrameLoop::new(denoiser, sched, cfg, &cond.appearance, shape)?;
    let mut trace = GenerationTrace {
        z0_hat: Vec::with_capacity(n_frames),
        inputs: Vec::with_capacity(n_frames),
        z_t: LatentGrid::zeros(shape),
        frames: Vec::with_capacity(n_frames),
    };
    for m in &cond.motion[..n_frames] {
        let (x, z0) = lp.next(m)?;
        trace.frames.push(decoder.decode_latent(&z0)?);
        trace.inputs.push(x);
        trace.z0_hat.push(z0.clone());
        lp.keep(z0);
    }
    trace.z_t = match cfg.noise_mode {
        NoiseMode::Fixed => lp.z_t.take().expect("at least one frame"),
        NoiseMode::Independent => trace.inputs[0].clone(),
    };
    Ok(trace)
}

/// Streaming generator over an unbounded motion source. Memory use does not
/// grow with the number of frames produced.
pub struct UnboundedGenerator<'a, D: ?Sized, Dec: ?Sized, I> {
    lp: FrameLoop<'a, D>,
    decoder: &'a Dec,
    motion: I,
    failed: bool,
}

pub fn generate_unbounded<'a, D, Dec, I>(
    denoiser: &'a D,
    decoder: &'a Dec,
    appearance: &'a [f64],
    motion: I,
    shape: Shape,
    sched: &'a NoiseSchedule,
    cfg: &FeedbackConfig,
) -> Result<UnboundedGenerator<'a, D, Dec, I::IntoIter>>
where
    D: Denoiser + ?Sized,
    Dec: LatentDecoder + ?Sized,
    I: IntoIterator<Item = LatentGrid>,
{
    Ok(UnboundedGenerator {
        lp: FrameLoop::new(denoiser, sched, cfg, appearance, shape)?,
        decoder,
        motion: motion.into_iter(),
        failed: false,
    })
}

impl<D: ?Sized, Dec: ?Sized, I> UnboundedGenerator<'_, D, Dec, I> {
    /// Largest number of latent grids held at once so far.
    pub fn peak_resident(&self) -> usize {
        self.lp.peak_resident
    }

    /// Latent grids retained between frames.
    pub fn retained(&self) -> usize {
        self.lp.z_t.is_some() as usize + self.lp.prev.is_some() as usize
    }

    pub fn frames_emitted(&self) -> usize {
        self.lp.frame
    }
}

impl<D, Dec, I> Iterator for UnboundedGenerator<'_, D, Dec, I>
where
    D: Denoiser + ?Sized,
    Dec: LatentDecoder + ?Sized,
    I: Iterator<Item = LatentGrid>,
{
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let m = self.motion.next()?;
        let out = self.lp.next(&m).and_then(|(_, z0)| {
            let frame = self.decoder.decode_latent(&z0);
            self.lp.keep(z0);
            frame
        });
        self.failed = out.is_err();
        Some(out)
    }
}
