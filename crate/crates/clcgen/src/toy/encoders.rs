//! Conditioning encoders for the toy world: an appearance vector from the
//! source frame and a motion latent from each driving frame.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::Result;
use crate::latent::LatentGrid;
use crate::toy::codec::BlockCodec;
use crate::toy::scene::detect;
use crate::video::Frame;

pub const APPEARANCE_DIM: usize = 9;

pub type Appearance = [f64; APPEARANCE_DIM];

const KMEANS_ITERS: usize = 5;

fn mean(px: &[Vector3<f64>]) -> Vector3<f64> {
    if px.is_empty() {
        return Vector3::zeros();
    }
    px.iter().sum::<Vector3<f64>>() / px.len() as f64
}

/// `[shape color, (A + B) / 2, (B - A) / 2] / 255`, where `A` and `B` are the
/// two background tones found by 2-means on per-pixel chroma.
pub fn appearance(frame: &Frame) -> Appearance {
    let mask = detect(frame);
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    for (p, &hit) in frame.data().chunks_exact(3).zip(&mask) {
        let v = Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64);
        if hit {
            fg.push(v)
        } else {
            bg.push(v)
        }
    }
    let col = mean(&fg);
    let (a, b) = two_tones(&bg);
    let mid = (a + b) / 2.0;
    let half = (b - a) / 2.0;
    let mut out = [0.0; APPEARANCE_DIM];
    for ch in 0..3 {
        out[ch] = col[ch] / 255.0;
        out[3 + ch] = mid[ch] / 255.0;
        out[6 + ch] = half[ch] / 255.0;
    }
    out
}

fn two_tones(bg: &[Vector3<f64>]) -> (Vector3<f64>, Vector3<f64>) {
    let all = mean(bg);
    if bg.len() < 2 {
        return (all, all);
    }
    let chroma: Vec<Vector3<f64>> = bg.iter().map(|p| p.add_scalar(-p.mean())).collect();
    let center = mean(&chroma);
    let mut cov = Matrix3::zeros();
    for c in &chroma {
        let d = c - center;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let top = eig.eigenvalues.imax();
    let dir = eig.eigenvectors.column(top).into_owned();
    let mut label: Vec<bool> = chroma.iter().map(|c| (c - center).dot(&dir) > 0.0).collect();
    for _ in 0..KMEANS_ITERS {
        let (m0, m1) = split_means(&chroma, &label);
        let (Some(m0), Some(m1)) = (m0, m1) else {
            return (all, all);
        };
        label = chroma
            .iter()
            .map(|c| (c - m1).norm_squared() < (c - m0).norm_squared())
            .collect();
    }
    let (a, b) = split_means(bg, &label);
    let (Some(mut a), Some(mut b)) = (a, b) else {
        return (all, all);
    };
    // Order the tones so the result does not depend on the eigenvector sign.
    if (a[0], a[1], a[2]) > (b[0], b[1], b[2]) {
        std::mem::swap(&mut a, &mut b);
    }
    (a, b)
}

fn split_means(px: &[Vector3<f64>], label: &[bool]) -> (Option<Vector3<f64>>, Option<Vector3<f64>>) {
    let mut s = [Vector3::zeros(); 2];
    let mut n = [0usize; 2];
    for (p, &l) in px.iter().zip(label) {
        s[l as usize] += p;
        n[l as usize] += 1;
    }
    let avg = |i: usize| (n[i] > 0).then(|| s[i] / n[i] as f64);
    (avg(0), avg(1))
}

/// Codec analysis of the detected silhouette, replicated on all channels.
pub fn motion(codec: &BlockCodec, frame: &Frame) -> Result<LatentGrid> {
    let mask = detect(frame);
    let plane: Vec<f64> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    let planar = [plane.as_slice(), &plane, &plane].concat();
    codec.analyze(&planar, frame.width(), frame.height())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::scene::{render_clip, Background, SceneSpec, ShapeKind, Trajectory};

    fn scene() -> SceneSpec {
        let bits = (0..16).map(|i| i % 3 == 0).collect();
        SceneSpec {
            width: 64,
            height: 64,
            shape: ShapeKind::Square,
            color: [220.0, 100.0, 50.0],
            radius: 7.0,
            trajectory: Trajectory::Static { x: 30.0, y: 34.0 },
            background: Background::Cells {
                cell: 16,
                a: [110.0, 60.0, 80.0],
                b: [50.0, 100.0, 80.0],
                bits,
                offset: vec![0.0; 16],
            },
        }
    }

    #[test]
    fn recovers_scene_colors() {
        let clip = render_clip(&scene(), 1).unwrap();
        let a = appearance(&clip.frames[0]);
        let want = [220.0, 100.0, 50.0, 80.0, 80.0, 80.0, 30.0, -20.0, 0.0];
        for (got, w) in a.iter().zip(want) {
            assert!((got * 255.0 - w).abs() < 1e-9, "{a:?}");
        }
    }

    #[test]
    fn motion_latent_decodes_to_silhouette() {
        let codec = BlockCodec::default();
        let clip = render_clip(&scene(), 1).unwrap();
        let m = motion(&codec, &clip.frames[0]).unwrap();
        let (planar, w, h) = codec.synthesize(&m).unwrap();
        let mask = detect(&clip.frames[0]);
        for i in 0..w * h {
            let want = if mask[i] { 1.0 } else { 0.0 };
            assert!((planar[i] - want).abs() < 1e-12);
            assert!((planar[2 * w * h + i] - want).abs() < 1e-12);
        }
    }
}
