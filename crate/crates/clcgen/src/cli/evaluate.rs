use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::io::config::ExperimentConfig;
use crate::io::frames::{read_frames, video_ids};
use crate::io::manifest::write_json;
use crate::io::plot::plot_tje;
use crate::io::report::{with_aggregates, write_report, ReportRow, Value};
use crate::metrics::{
    akd, external_score, joint_validity, psnr_float, psnr_int, ssim, tje, toy_keypoints, KeypointSet,
    Region, ScorerRegistry,
};
use crate::toy::scene::DEFAULT_FPS;
use crate::video::{Frame, VideoClip};

pub(super) fn run(cfg: &ExperimentConfig) -> Result<()> {
    let ev = &cfg.evaluate;
    let real_dir = ev.real.clone().unwrap_or_else(|| cfg.val_dir());
    let methods: BTreeMap<String, PathBuf> = if ev.methods.is_empty() {
        BTreeMap::from([("clc".to_string(), cfg.paths.output.join("animate"))])
    } else {
        ev.methods.clone()
    };
    let registry = ScorerRegistry::from_env();
    let out_dir = cfg.paths.output.join("evaluate");

    let mut rows = Vec::new();
    let mut errors = Vec::new();
    let mut unsupported: Vec<String> = Vec::new();
    for id in video_ids(&real_dir)? {
        let real_path = real_dir.join(&id);
        let real = read_frames(&real_path, DEFAULT_FPS)?;
        let mut gens = Vec::new();
        for (method, dir) in &methods {
            let gen_path = dir.join(&id);
            if !gen_path.is_dir() {
                errors.push(format!("{method}: no generated video {}", gen_path.display()));
                continue;
            }
            gens.push((method, gen_path.clone(), read_frames(&gen_path, DEFAULT_FPS)?));
        }
        // Every method is scored on the same frames: the shortest length,
        // and for keypoints the frames detected in all of them.
        let n = gens.iter().map(|g| g.2.len()).fold(real.len(), usize::min);
        let real = truncate(&real, n)?;
        let gens = gens
            .into_iter()
            .map(|(m, p, c)| Ok((m, p, truncate(&c, n)?)))
            .collect::<Result<Vec<_>>>()?;
        let wants_akd = ev.metrics.iter().any(|m| m == "akd");
        let (real_kp, gen_kp, mask) = if wants_akd {
            let rk = toy_keypoints(&real);
            let gk: Vec<KeypointSet> = gens.iter().map(|g| toy_keypoints(&g.2)).collect();
            let mut all: Vec<&KeypointSet> = vec![&rk];
            all.extend(gk.iter());
            let mask = joint_validity(&all)?;
            (Some(rk), gk, mask)
        } else {
            (None, Vec::new(), Vec::new())
        };

        for (gi, (method, gen_path, gen)) in gens.iter().enumerate() {
            let row = |metric: &str, delta: Option<usize>, value: Value, frac: Option<f64>| ReportRow {
                video_id: id.clone(),
                method: (*method).clone(),
                metric: metric.into(),
                delta,
                value,
                detection_fraction: frac,
            };
            for metric in &ev.metrics {
                match metric.as_str() {
                    "tje" => {
                        for &d in &ev.deltas {
                            let r = tje(&real, gen, d).map_err(|e| e.in_stage("tje"))?;
                            rows.push(row("tje", Some(d), Value::Number(r.mean_error), None));
                        }
                    }
                    "psnr" => rows.push(row("psnr", None, Value::Number(frame_mean(&real, gen, psnr_float)?), None)),
                    "psnr_int" => rows.push(row("psnr_int", None, Value::Number(frame_mean(&real, gen, psnr_int)?), None)),
                    "ssim" => rows.push(row("ssim", None, Value::Number(frame_mean(&real, gen, ssim)?), None)),
                    "akd" => {
                        let rk = real_kp.as_ref().expect("computed when akd is requested");
                        let region = Region::Torso;
                        match akd(rk, &gen_kp[gi], region, Some(&mask)) {
                            Ok(r) => {
                                let name = format!("akd_{}", region.name());
                                let frac = Some(r.detection_fraction);
                                rows.push(row(&name, None, Value::Number(r.raw), frac));
                                rows.push(row(&format!("{name}_adjusted"), None, Value::Number(r.adjusted()?), frac));
                            }
                            Err(Error::UndefinedMetric(m)) => errors.push(format!("{method}/{id}: akd undefined: {m}")),
                            Err(e) => return Err(e),
                        }
                    }
                    other => match external_score(&registry, other, &real_path, gen_path) {
                        Ok(v) => rows.push(row(other, None, Value::Number(v), None)),
                        Err(Error::UnsupportedMetric(_)) => {
                            rows.push(row(other, None, Value::Unsupported, None));
                            if !unsupported.iter().any(|u| u == other) {
                                unsupported.push(other.to_string());
                            }
                        }
                        Err(e) => return Err(e.in_stage("external scorer")),
                    },
                }
            }
        }
    }
    let rows = with_aggregates(rows);
    write_report(&out_dir.join("report.csv"), &rows)?;
    write_json(&out_dir.join("errors.json"), &errors)?;
    if ev.plot {
        plot_tje(&rows, &out_dir.join("tje.png"), cfg.plot.font.as_deref())?;
    }
    for e in &errors {
        eprintln!("error: {e}");
    }
    if !errors.is_empty() {
        return Err(Error::Validation(format!(
            "{} evaluation errors, see {}",
            errors.len(),
            out_dir.join("errors.json").display()
        )));
    }
    if let Some(m) = unsupported.first() {
        return Err(Error::UnsupportedMetric(m.clone()));
    }
    Ok(())
}

fn truncate(clip: &VideoClip, n: usize) -> Result<VideoClip> {
    VideoClip::new(clip.frames[..n].to_vec(), clip.fps)
}

/// Per-frame metric averaged over the clip. Identical frames give an
/// infinite PSNR, which carries into the mean.
fn frame_mean(real: &VideoClip, gen: &VideoClip, f: fn(&Frame, &Frame) -> Result<f64>) -> Result<f64> {
    let mut total = 0.0;
    for (a, b) in real.frames.iter().zip(&gen.frames) {
        total += f(a, b)?;
    }
    Ok(total / real.len() as f64)
}
