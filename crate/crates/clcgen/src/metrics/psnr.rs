use crate::error::Result;
use crate::video::Frame;

const PEAK_SQ: f64 = 255.0 * 255.0;

fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK_SQ / mse).log10()
    }
}

/// PSNR with the squared error accumulated in floating point.
/// Identical images give `f64::INFINITY`.
pub fn psnr_float(a: &Frame, b: &Frame) -> Result<f64> {
    a.ensure_same_size(b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(psnr_from_mse(sum / a.data().len() as f64))
}

/// PSNR as computed by pipelines that subtract and square in unsigned 8-bit
/// arithmetic. Both operations wrap, so large differences alias to small
/// ones and the score is inflated. Kept deliberately to reproduce that
/// behaviour next to [`psnr_float`].
pub fn psnr_int(a: &Frame, b: &Frame) -> Result<f64> {
    a.ensure_same_size(b)?;
    let sum: u64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x.wrapping_sub(y);
            d.wrapping_mul(d) as u64
        })
        .sum();
    Ok(psnr_from_mse(sum as f64 / a.data().len() as f64))
}
