//! Fixed, training-free latent codec: an orthonormal Walsh-Hadamard transform
//! of every `f x f` pixel block, per color channel, scaled by a constant gain.

use crate::error::{Error, Result};
use crate::latent::{LatentGrid, Shape};
use crate::video::Frame;

pub const DEFAULT_GAIN: f64 = 3.0;

#[derive(Clone, Debug, PartialEq)]
pub struct BlockCodec {
    factor: usize,
    gain: f64,
    /// `factor^2 x factor^2` orthonormal Hadamard matrix, row-major.
    basis: Vec<f64>,
}

fn hadamard(n: usize) -> Vec<f64> {
    // Sylvester construction: H[i][j] = (-1)^popcount(i & j).
    let norm = (n as f64).sqrt();
    (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            if (i & j).count_ones() % 2 == 0 {
                1.0 / norm
            } else {
                -1.0 / norm
            }
        })
        .collect()
}

impl BlockCodec {
    pub fn new(factor: usize, gain: f64) -> Result<Self> {
        if !factor.is_power_of_two() || factor > 16 {
            return Err(Error::param(format!(
                "codec block size must be a power of two up to 16, got {factor}"
            )));
        }
        if !(gain > 0.0 && gain.is_finite()) {
            return Err(Error::param(format!("codec gain must be positive, got {gain}")));
        }
        Ok(BlockCodec {
            factor,
            gain,
            basis: hadamard(factor * factor),
        })
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn latent_shape(&self, width: usize, height: usize) -> Result<Shape> {
        let f = self.factor;
        if width % f != 0 || height % f != 0 || width == 0 || height == 0 {
            return Err(Error::shape(
                format!("frame dimensions divisible by {f}"),
                format!("{width}x{height}"),
            ));
        }
        Shape::new(3 * f * f, height / f, width / f, f)
    }

    /// Analysis of one `h x w` plane into `factor^2` coefficient maps.
    pub fn analyze_plane(&self, plane: &[f64], width: usize, height: usize) -> Result<Vec<f64>> {
        let shape = self.latent_shape(width, height)?;
        if plane.len() != width * height {
            return Err(Error::shape(width * height, plane.len()));
        }
        let f = self.factor;
        let nb = f * f;
        let (hl, wl) = (shape.height, shape.width);
        let mut out = vec![0.0; nb * hl * wl];
        let mut block = vec![0.0; nb];
        for by in 0..hl {
            for bx in 0..wl {
                for dy in 0..f {
                    for dx in 0..f {
                        block[dy * f + dx] = plane[(by * f + dy) * width + bx * f + dx];
                    }
                }
                for k in 0..nb {
                    let row = &self.basis[k * nb..(k + 1) * nb];
                    let c: f64 = row.iter().zip(&block).map(|(h, x)| h * x).sum();
                    out[(k * hl + by) * wl + bx] = c * self.gain;
                }
            }
        }
        Ok(out)
    }

    /// Inverse of [`BlockCodec::analyze_plane`] for `hl x wl` blocks.
    pub fn synthesize_plane(&self, coef: &[f64], hl: usize, wl: usize) -> Result<Vec<f64>> {
        let f = self.factor;
        let nb = f * f;
        if coef.len() != nb * hl * wl {
            return Err(Error::shape(nb * hl * wl, coef.len()));
        }
        let width = wl * f;
        let mut out = vec![0.0; hl * wl * nb];
        let mut c = vec![0.0; nb];
        for by in 0..hl {
            for bx in 0..wl {
                for (k, ck) in c.iter_mut().enumerate() {
                    *ck = coef[(k * hl + by) * wl + bx] / self.gain;
                }
                for dy in 0..f {
                    for dx in 0..f {
                        let p = dy * f + dx;
                        // The basis is symmetric, so row p equals column p.
                        let x: f64 = (0..nb).map(|k| self.basis[k * nb + p] * c[k]).sum();
                        out[(by * f + dy) * width + bx * f + dx] = x;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Linear analysis of a planar `3 x h x w` signal (no offset or scaling
    /// of the input).
    pub fn analyze(&self, planar: &[f64], width: usize, height: usize) -> Result<LatentGrid> {
        let shape = self.latent_shape(width, height)?;
        if planar.len() != 3 * width * height {
            return Err(Error::shape(3 * width * height, planar.len()));
        }
        let mut out = Vec::with_capacity(shape.len());
        for plane in planar.chunks_exact(width * height) {
            out.extend(self.analyze_plane(plane, width, height)?);
        }
        Ok(LatentGrid::from_raw(shape, out))
    }

    /// Inverse of [`BlockCodec::analyze`]; returns the planar signal and its
    /// width and height.
    pub fn synthesize(&self, latent: &LatentGrid) -> Result<(Vec<f64>, usize, usize)> {
        let shape = latent.shape();
        let f = self.factor;
        if shape.channels != 3 * f * f || shape.factor != f {
            return Err(Error::shape(
                format!("{} channels at factor {f}", 3 * f * f),
                shape,
            ));
        }
        let (hl, wl) = (shape.height, shape.width);
        let mut out = Vec::with_capacity(3 * hl * wl * f * f);
        for coef in latent.data().chunks_exact(f * f * hl * wl) {
            out.extend(self.synthesize_plane(coef, hl, wl)?);
        }
        Ok((out, wl * f, hl * f))
    }

    pub fn encode(&self, frame: &Frame) -> Result<LatentGrid> {
        let planar = planar_unit(frame);
        self.analyze(&planar, frame.width(), frame.height())
    }

    pub fn decode(&self, latent: &LatentGrid) -> Result<Frame> {
        let (planar, width, height) = self.synthesize(latent)?;
        let mut data = vec![0u8; 3 * width * height];
        for (i, px) in data.chunks_exact_mut(3).enumerate() {
            for (ch, p) in px.iter_mut().enumerate() {
                let x = planar[ch * width * height + i];
                *p = ((x + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8;
            }
        }
        Frame::new(width, height, data)
    }
}

impl Default for BlockCodec {
    fn default() -> Self {
        BlockCodec::new(4, DEFAULT_GAIN).expect("valid default codec")
    }
}

/// Interleaved RGB to planar `[-1, 1]`.
pub fn planar_unit(frame: &Frame) -> Vec<f64> {
    let n = frame.width() * frame.height();
    let mut out = vec![0.0; 3 * n];
    for (i, px) in frame.data().chunks_exact(3).enumerate() {
        for ch in 0..3 {
            out[ch * n + i] = px[ch] as f64 / 127.5 - 1.0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn basis_is_orthonormal() {
        let c = BlockCodec::default();
        let n = 16;
        for i in 0..n {
            for j in 0..n {
                let d: f64 = (0..n).map(|k| c.basis[i * n + k] * c.basis[j * n + k]).sum();
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn latent_geometry() {
        let c = BlockCodec::default();
        let s = c.latent_shape(64, 64).unwrap();
        assert_eq!((s.channels, s.height, s.width), (48, 16, 16));
        let bad = Frame::filled(63, 64, [0, 0, 0]).unwrap();
        assert!(matches!(c.encode(&bad), Err(Error::Shape { .. })));
    }

    #[test]
    fn constant_frame_has_only_dc() {
        let c = BlockCodec::default();
        let z = c.encode(&Frame::filled(8, 8, [255, 255, 255]).unwrap()).unwrap();
        let nonzero = z.data().iter().filter(|x| x.abs() > 1e-12).count();
        // One DC coefficient per block per channel.
        assert_eq!(nonzero, 3 * 4);
        assert!(z.data().iter().all(|&x| x.abs() < 1e-12 || (x - 4.0 * DEFAULT_GAIN).abs() < 1e-12));
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(data in proptest::collection::vec(any::<u8>(), 3 * 16 * 8), f in prop_oneof![Just(2usize), Just(4)]) {
            let frame = Frame::new(16, 8, data).unwrap();
            let c = BlockCodec::new(f, DEFAULT_GAIN).unwrap();
            let back = c.decode(&c.encode(&frame).unwrap()).unwrap();
            prop_assert_eq!(back, frame);
        }
    }
}
