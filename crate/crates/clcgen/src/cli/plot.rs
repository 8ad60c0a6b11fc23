use crate::error::{Error, Result};
use crate::experiment::SweepResult;
use crate::io::config::ExperimentConfig;
use crate::io::manifest::read_json;
use crate::io::plot::{plot_sweep, plot_tje};
use crate::io::report::read_report;

pub(super) fn run(cfg: &ExperimentConfig) -> Result<()> {
    let font = cfg.plot.font.as_deref();
    let out = cfg.paths.output.join("plots");
    let report = cfg.paths.output.join("evaluate").join("report.csv");
    let sweep = cfg.paths.output.join("sweep").join("sweep.json");
    if !report.exists() && !sweep.exists() {
        return Err(Error::MissingInput(report));
    }
    if report.exists() {
        plot_tje(&read_report(&report)?, &out.join("tje.png"), font)?;
    }
    if sweep.exists() {
        let s: SweepResult = read_json(&sweep)?;
        plot_sweep(&s, &out.join("sweep.png"), font)?;
    }
    eprintln!("charts written to {}", out.display());
    Ok(())
}
