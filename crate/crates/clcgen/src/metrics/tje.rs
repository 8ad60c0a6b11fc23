use serde::Serialize;

use crate::error::{Error, Result};
use crate::video::VideoClip;

/// Frame offsets reported by default.
pub const DEFAULT_DELTAS: [usize; 4] = [1, 2, 4, 8];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TjeResult {
    pub delta: usize,
    pub per_t_errors: Vec<f64>,
    pub mean_error: f64,
}

/// Temporal jitter error at offset `delta`.
///
/// For each t, the frame differences `I[t+delta] - I[t]` of both clips are
/// compared and the absolute discrepancy is averaged over every pixel and
/// channel. Values are signed reals on the 0..255 scale.
pub fn tje(real: &VideoClip, gen: &VideoClip, delta: usize) -> Result<TjeResult> {
    let n = real.len();
    if gen.len() != n {
        return Err(Error::shape(
            format!("{n} frames"),
            format!("{} frames", gen.len()),
        ));
    }
    if delta == 0 || delta >= n {
        return Err(Error::param(format!(
            "delta must satisfy 1 <= delta < {n}, got {delta}"
        )));
    }
    real.frames[0].ensure_same_size(&gen.frames[0])?;

    let per_t_errors: Vec<f64> = (0..n - delta)
        .map(|t| {
            let (r0, r1) = (real.frames[t].data(), real.frames[t + delta].data());
            let (g0, g1) = (gen.frames[t].data(), gen.frames[t + delta].data());
            let sum: f64 = (0..r0.len())
                .map(|i| {
                    let dr = r1[i] as f64 - r0[i] as f64;
                    let dg = g1[i] as f64 - g0[i] as f64;
                    (dr - dg).abs()
                })
                .sum();
            sum / r0.len() as f64
        })
        .collect();
    let mean_error = per_t_errors.iter().sum::<f64>() / per_t_errors.len() as f64;
    Ok(TjeResult {
        delta,
        per_t_errors,
        mean_error,
    })
}

pub fn tje_multi(real: &VideoClip, gen: &VideoClip, deltas: &[usize]) -> Result<Vec<TjeResult>> {
    deltas.iter().map(|&d| tje(real, gen, d)).collect()
}
