use crate::error::{Error, Result};
use crate::video::Frame;

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const PEAK: f64 = 255.0;

fn gaussian_window() -> [f64; WINDOW] {
    let mut w = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - c;
        *v = (-x * x / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable "valid" filtering: output is (w - 10) x (h - 10).
fn filter(img: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let ow = w - WINDOW + 1;
    let oh = h - WINDOW + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..WINDOW).map(|i| k[i] * img[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM over an 11x11 Gaussian window (sigma 1.5) with K1 = 0.01,
/// K2 = 0.03, computed on BT.601 luma.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64> {
    a.ensure_same_size(b)?;
    let (w, h) = (a.width(), a.height());
    if w < WINDOW || h < WINDOW {
        return Err(Error::param(format!(
            "SSIM needs at least {WINDOW}x{WINDOW} pixels, got {w}x{h}"
        )));
    }
    let k = gaussian_window();
    let la = a.luma();
    let lb = b.luma();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();

    let mu_a = filter(&la, w, h, &k);
    let mu_b = filter(&lb, w, h, &k);
    let e_aa = filter(&prod(&la, &la), w, h, &k);
    let e_bb = filter(&prod(&lb, &lb), w, h, &k);
    let e_ab = filter(&prod(&la, &lb), w, h, &k);

    let c1 = (K1 * PEAK).powi(2);
    let c2 = (K2 * PEAK).powi(2);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn flat(v: u8) -> Frame {
        Frame::filled(16, 16, [v, v, v]).unwrap()
    }

    fn noisy(base: &Frame, amp: i16, seed: u64) -> Frame {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = base
            .data()
            .iter()
            .map(|&v| (v as i16 + rng.random_range(-amp..=amp)).clamp(0, 255) as u8)
            .collect();
        Frame::new(base.width(), base.height(), data).unwrap()
    }

    fn textured(seed: u64) -> Frame {
        noisy(&flat(128), 100, seed)
    }

    #[test]
    fn fixtures() {
        let t = textured(1);
        assert!((ssim(&t, &t).unwrap() - 1.0).abs() < 1e-12);
        assert!(ssim(&flat(0), &flat(255)).unwrap() < 0.01);
        let s = ssim(&t, &noisy(&t, 10, 2)).unwrap();
        assert!(s > 0.01 && s < 1.0, "{s}");
    }

    #[test]
    fn more_noise_scores_lower() {
        let t = textured(4);
        let mild = ssim(&t, &noisy(&t, 5, 5)).unwrap();
        let strong = ssim(&t, &noisy(&t, 60, 5)).unwrap();
        assert!(strong < mild);
    }

    #[test]
    fn too_small() {
        let f = Frame::filled(10, 16, [0, 0, 0]).unwrap();
        assert!(matches!(ssim(&f, &f), Err(Error::Parameter(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn bounded_and_self_identical(s1 in any::<u64>(), s2 in any::<u64>()) {
            let (a, b) = (textured(s1), textured(s2));
            let v = ssim(&a, &b).unwrap();
            prop_assert!((-1.0..=1.0).contains(&v));
            prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
