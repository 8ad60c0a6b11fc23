use std::path::Path;

use crate::error::Result;
use crate::io::checkpoint::save_checkpoint;
use crate::io::config::ExperimentConfig;
use crate::io::manifest::write_json;
use crate::toy::{train_toy, BlockCodec, PreparedClip};

use super::load_videos;

pub(super) fn run(cfg: &ExperimentConfig) -> Result<()> {
    let codec = BlockCodec::default();
    let sched = cfg.schedule.build()?;
    let prepare = |dir: &Path| -> Result<Vec<PreparedClip>> {
        load_videos(dir)?
            .iter()
            .map(|(_, clip)| PreparedClip::new(&codec, clip))
            .collect()
    };
    let train = prepare(&cfg.train_dir())?;
    let val_dir = cfg.val_dir();
    let val = if val_dir.is_dir() { Some(prepare(&val_dir)?) } else { None };

    let (net, report) = train_toy(&train, val.as_deref(), &codec, &sched, &cfg.train)?;
    save_checkpoint(&cfg.paths.checkpoint, &net, &sched, &cfg.train, Some(cfg.synth.seed))?;
    write_json(&cfg.paths.output.join("train_report.json"), &report)?;
    if let Some((step, loss)) = report.validation.last() {
        eprintln!("validation L1 {loss:.4} at step {step}");
    }
    eprintln!("checkpoint written to {}", cfg.paths.checkpoint.display());
    Ok(())
}
