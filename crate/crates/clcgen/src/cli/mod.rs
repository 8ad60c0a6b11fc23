//! The `clcgen` command-line tool. Every command is a function of the
//! config file, the seed and its input files; outputs carry no timestamps.

mod animate;
mod curate;
mod evaluate;
mod plot;
mod sweep;
mod synth;
mod train;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::Result;
use crate::io::config::ExperimentConfig;
use crate::io::frames::{read_frames, video_ids};
use crate::sampler::NoiseMode;
use crate::toy::scene::DEFAULT_FPS;
use crate::video::VideoClip;

#[derive(Debug, Parser)]
#[command(name = "clcgen", version, about = "Closed-loop feedback video generation on a synthetic testbed")]
pub struct Cli {
    /// Experiment config (TOML). Relative paths inside it are resolved
    /// against its directory; without it, defaults are used relative to the
    /// working directory.
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,

    /// Feedback gain, overriding `feedback.beta`.
    #[arg(long, global = true)]
    pub beta: Option<f64>,

    /// Seed of the command being run: `synth.seed` for make-synth,
    /// `train.seed` for train, `curate.seed` for curate and
    /// `feedback.seed` otherwise.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[arg(long, global = true, value_enum)]
    pub noise_mode: Option<NoiseModeArg>,

    /// Number of frames to animate, overriding `animate.n_frames`.
    #[arg(long, global = true)]
    pub frames: Option<usize>,

    /// Output root, overriding `paths.output`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum NoiseModeArg {
    Fixed,
    Independent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Render the synthetic train/val clips and the curation fixture.
    MakeSynth,
    /// Train the toy denoiser and write a checkpoint.
    Train,
    /// Generate videos from a checkpoint with feedback sampling.
    Animate,
    /// Score generated videos against real ones.
    Evaluate,
    /// Grid-search the feedback gain on the validation split.
    SweepBeta,
    /// Run the curation pipeline over a manifest of raw videos.
    Curate,
    /// Render charts from evaluation and sweep outputs.
    Plot,
}

impl Cli {
    /// Loads the config and applies command-line overrides.
    pub fn resolve_config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(b) = self.beta {
            cfg.feedback.beta = b;
        }
        if let Some(s) = self.seed {
            match self.command {
                Command::MakeSynth => cfg.synth.seed = s,
                Command::Train => cfg.train.seed = s,
                Command::Curate => cfg.curate.seed = s,
                _ => cfg.feedback.seed = s,
            }
        }
        if let Some(m) = self.noise_mode {
            cfg.feedback.noise_mode = match m {
                NoiseModeArg::Fixed => NoiseMode::Fixed,
                NoiseModeArg::Independent => NoiseMode::Independent,
            };
        }
        if let Some(n) = self.frames {
            cfg.animate.n_frames = Some(n);
        }
        if let Some(o) = &self.out {
            cfg.paths.output = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.resolve_config()?;
    match cli.command {
        Command::MakeSynth => synth::run(&cfg),
        Command::Train => train::run(&cfg),
        Command::Animate => animate::run(&cfg),
        Command::Evaluate => evaluate::run(&cfg),
        Command::SweepBeta => sweep::run(&cfg),
        Command::Curate => curate::run(&cfg),
        Command::Plot => plot::run(&cfg),
    }
}

/// Every video under `dir`, in id order.
fn load_videos(dir: &Path) -> Result<Vec<(String, VideoClip)>> {
    video_ids(dir)?
        .into_iter()
        .map(|id| {
            let clip = read_frames(&dir.join(&id), DEFAULT_FPS)?;
            Ok((id, clip))
        })
        .collect()
}
