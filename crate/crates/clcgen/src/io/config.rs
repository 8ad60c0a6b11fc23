//! The experiment configuration file (TOML). Unknown keys are rejected and
//! relative paths are resolved against the file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::curation::{ClusterMode, DEFAULT_CLIP_LEN, DEFAULT_CROP, DEFAULT_THRESHOLD, DEFAULT_TRAIN_FRAC};
use crate::diffusion::ScheduleConfig;
use crate::error::{Error, Result};
use crate::experiment::DEFAULT_BETA_GRID;
use crate::io::manifest::read_text;
use crate::metrics::DEFAULT_DELTAS;
use crate::sampler::FeedbackConfig;
use crate::toy::{SceneSampler, ToyHyper};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Synthetic dataset root.
    pub data: PathBuf,
    pub checkpoint: PathBuf,
    /// Root for generated frames, reports and charts.
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            data: "data".into(),
            checkpoint: "checkpoints/toy.safetensors".into(),
            output: "out".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_frames: usize,
    pub scene: SceneSampler,
    /// Identities and videos per identity in the curation fixture.
    pub identities: usize,
    pub videos_per_identity: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 1000,
            n_train: 100,
            n_val: 10,
            n_frames: 50,
            scene: SceneSampler::default(),
            identities: 10,
            videos_per_identity: 3,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnimateConfig {
    /// Video whose first frame supplies the appearance (default: the
    /// driving video).
    pub source: Option<String>,
    /// Validation video supplying the motion (default: the first one).
    pub driving: Option<String>,
    /// Frames to generate; the driving motion loops when this exceeds its
    /// length. Defaults to the driving video's length.
    pub n_frames: Option<usize>,
    pub dump_latents: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    /// Directory of real videos, one subdirectory per video id (default:
    /// the validation split).
    pub real: Option<PathBuf>,
    /// Method name to a directory laid out like `real`.
    pub methods: BTreeMap<String, PathBuf>,
    pub metrics: Vec<String>,
    pub deltas: Vec<usize>,
    /// Also write the TJE chart next to the report.
    pub plot: bool,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            real: None,
            methods: BTreeMap::new(),
            metrics: ["tje", "psnr", "psnr_int", "ssim", "akd"].map(String::from).to_vec(),
            deltas: DEFAULT_DELTAS.to_vec(),
            plot: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub betas: Vec<f64>,
    /// Only `tje` (mean over the evaluation offsets) is built in.
    pub objective: String,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            betas: DEFAULT_BETA_GRID.to_vec(),
            objective: "tje".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurateConfig {
    /// Curation manifest (default: the fixture written by make-synth).
    pub manifest: Option<PathBuf>,
    pub threshold: f64,
    pub clustering: ClusterMode,
    pub clip_len: usize,
    pub crop: u32,
    pub train_frac: f64,
    pub seed: u64,
}

impl Default for CurateConfig {
    fn default() -> Self {
        CurateConfig {
            manifest: None,
            threshold: DEFAULT_THRESHOLD,
            clustering: ClusterMode::Components,
            clip_len: DEFAULT_CLIP_LEN,
            crop: DEFAULT_CROP,
            train_frac: DEFAULT_TRAIN_FRAC,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlotConfig {
    /// TrueType font for chart text.
    pub font: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub paths: Paths,
    pub schedule: ScheduleConfig,
    pub feedback: FeedbackConfig,
    pub synth: SynthConfig,
    pub train: ToyHyper,
    pub animate: AnimateConfig,
    pub evaluate: EvaluateConfig,
    pub sweep: SweepConfig,
    pub curate: CurateConfig,
    pub plot: PlotConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads, validates and resolves relative paths against `path`'s
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&read_text(path)?)?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        cfg.resolve(&base);
        Ok(cfg)
    }

    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.data);
        fix(&mut self.paths.checkpoint);
        fix(&mut self.paths.output);
        self.evaluate.real.as_mut().map(fix);
        self.evaluate.methods.values_mut().for_each(fix);
        self.curate.manifest.as_mut().map(fix);
        self.plot.font.as_mut().map(fix);
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| match e {
            Error::Parameter(m) => Error::Config(m),
            other => other,
        };
        self.schedule.build().map_err(cfg_err)?;
        self.feedback.validate().map_err(cfg_err)?;
        self.train.validate()?;
        self.synth.scene.validate()?;
        if self.synth.n_frames == 0 {
            return Err(Error::Config("synth.n_frames must be at least 1".into()));
        }
        if self.evaluate.deltas.is_empty() || self.evaluate.deltas.contains(&0) {
            return Err(Error::Config("evaluate.deltas must be a non-empty list of positive offsets".into()));
        }
        if self.evaluate.metrics.is_empty() {
            return Err(Error::Config("evaluate.metrics must not be empty".into()));
        }
        if self.sweep.betas.is_empty() {
            return Err(Error::Config("sweep.betas must not be empty".into()));
        }
        if let Some(b) = self.sweep.betas.iter().find(|b| !(0.0..=1.0).contains(*b)) {
            return Err(Error::Config(format!("sweep.betas entry {b} is outside [0, 1]")));
        }
        if self.sweep.objective != "tje" {
            return Err(Error::Config(format!(
                "unknown sweep objective {:?}; only \"tje\" is built in",
                self.sweep.objective
            )));
        }
        if !(self.curate.threshold > 0.0 && self.curate.threshold < 1.0) {
            return Err(Error::Config("curate.threshold must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn train_dir(&self) -> PathBuf {
        self.paths.data.join("train")
    }

    pub fn val_dir(&self) -> PathBuf {
        self.paths.data.join("val")
    }

    pub fn curation_manifest(&self) -> PathBuf {
        self.curate
            .manifest
            .clone()
            .unwrap_or_else(|| self.paths.data.join("curation.jsonl"))
    }
}
