use crate::error::Result;
use crate::experiment::sweep_beta;
use crate::io::checkpoint::load_checkpoint;
use crate::io::config::ExperimentConfig;
use crate::io::manifest::{write_bytes, write_json};

use super::load_videos;

pub(super) fn run(cfg: &ExperimentConfig) -> Result<()> {
    let (net, sched, _) = load_checkpoint(&cfg.paths.checkpoint)?;
    let clips: Vec<_> = load_videos(&cfg.val_dir())?.into_iter().map(|(_, c)| c).collect();
    let result = sweep_beta(
        &net,
        &sched,
        &cfg.feedback,
        &clips,
        &cfg.sweep.betas,
        &cfg.evaluate.deltas,
    )?;

    let out = cfg.paths.output.join("sweep");
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["beta".to_string(), "objective".to_string()];
    header.extend(result.deltas.iter().map(|d| format!("tje_delta_{d}")));
    header.push("selected".into());
    let csv_err = |e: csv::Error| crate::Error::Parse(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for r in &result.rows {
        let mut rec = vec![r.beta.to_string(), r.objective.to_string()];
        rec.extend(r.per_delta.iter().map(f64::to_string));
        rec.push((r.beta == result.selected).to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| crate::Error::Parse(e.to_string()))?;
    write_bytes(&out.join("sweep.csv"), &bytes)?;
    write_json(&out.join("sweep.json"), &result)?;
    for r in &result.rows {
        eprintln!("beta {:<5} objective {:.4}", r.beta, r.objective);
    }
    eprintln!("selected beta {}", result.selected);
    Ok(())
}
