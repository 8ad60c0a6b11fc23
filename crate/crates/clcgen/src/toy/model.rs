//! The toy denoiser: an analytic Gaussian-mixture posterior over each
//! background cell, with a small learned map from the appearance vector to
//! the mixture means.
//!
//! Each 16 px cell of the clean latent is modeled as one of two tones plus a
//! shared brightness offset along `g` and isotropic residual noise. Given the
//! noisy latent, the posterior mean of every component is closed form, so the
//! only learned quantities are the colors (via `W a + b`), the offset scale,
//! the residual variance and the null appearance used when conditioning is
//! dropped. Gradients are written out by hand and checked against finite
//! differences in the tests.

use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::latent::{LatentGrid, Shape};
use crate::sampler::{Conditioning, Denoiser};
use crate::toy::codec::BlockCodec;
use crate::toy::encoders::APPEARANCE_DIM;

const A: usize = APPEARANCE_DIM;

/// Flat parameter layout: name, shape, offset.
pub const PARAMS: [(&str, &[usize], usize); 5] = [
    ("w", &[A, A], 0),
    ("b", &[A], A * A),
    ("log_offset_scale", &[1], A * A + A),
    ("log_residual_var", &[1], A * A + A + 1),
    ("null_appearance", &[A], A * A + A + 2),
];

pub const N_PARAMS: usize = A * A + 2 * A + 2;

const I_B: usize = A * A;
const I_SB: usize = A * A + A;
const I_SR: usize = A * A + A + 1;
const I_NULL: usize = A * A + A + 2;

#[derive(Clone, Debug, PartialEq)]
pub struct ToyDenoiser {
    codec: BlockCodec,
    cell: usize,
    shape: Shape,
    theta: Vec<f64>,
    cell_of: Vec<usize>,
    n_cells: usize,
    /// Analysis of the all-ones plane; the `-1` offset of the codec input.
    ones: Vec<f64>,
}

/// Per-frame quantities derived from the motion input.
struct Basis {
    /// Coefficients of the background indicator, divided by 127.5.
    bg: Vec<f64>,
    /// Coefficients of the shape indicator, divided by 127.5.
    fg: Vec<f64>,
}

struct Scalars {
    sa: f64,
    s1: f64,
    sv: f64,
    alpha: f64,
    sb: f64,
    sr2: f64,
}

impl ToyDenoiser {
    pub fn new(codec: BlockCodec, width: usize, height: usize, cell: usize) -> Result<Self> {
        let shape = codec.latent_shape(width, height)?;
        let f = codec.factor();
        if cell % f != 0 || width % cell != 0 || height % cell != 0 {
            return Err(Error::param(format!(
                "cell {cell} must be a multiple of {f} that tiles {width}x{height}"
            )));
        }
        let cs = cell / f;
        let per_plane = shape.height * shape.width;
        let cells_x = shape.width / cs;
        let cell_of = (0..shape.len())
            .map(|i| {
                let pos = i % per_plane;
                let (y, x) = (pos / shape.width, pos % shape.width);
                (y / cs) * cells_x + x / cs
            })
            .collect();
        let ones = codec.analyze_plane(&vec![1.0; width * height], width, height)?;
        let mut theta = vec![0.0; N_PARAMS];
        for k in 0..A {
            theta[k * A + k] = 0.1;
        }
        theta[I_SB] = (127.5 * (-4.0f64).exp()).ln();
        theta[I_SR] = -2.0;
        Ok(ToyDenoiser {
            codec,
            cell,
            shape,
            theta,
            cell_of,
            n_cells: (width / cell) * (height / cell),
            ones,
        })
    }

    pub fn codec(&self) -> &BlockCodec {
        &self.codec
    }

    pub fn cell(&self) -> usize {
        self.cell
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.theta
    }

    pub fn set_params(&mut self, theta: Vec<f64>) -> Result<()> {
        if theta.len() != N_PARAMS {
            return Err(Error::shape(N_PARAMS, theta.len()));
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::param("parameters must be finite"));
        }
        self.theta = theta;
        Ok(())
    }

    pub fn null_appearance(&self) -> &[f64] {
        &self.theta[I_NULL..I_NULL + A]
    }

    fn basis(&self, motion: Option<&LatentGrid>) -> Result<Basis> {
        let plane_len = self.shape.height * self.shape.width * self.codec.factor().pow(2);
        let Some(m) = motion else {
            return Ok(Basis {
                bg: self.ones.iter().map(|x| x / 127.5).collect(),
                fg: vec![0.0; plane_len],
            });
        };
        m.ensure_same_shape(&LatentGrid::zeros(self.shape))?;
        let sil = self
            .codec
            .synthesize_plane(&m.data()[..plane_len], self.shape.height, self.shape.width)?;
        let (w, h) = (self.shape.width * self.codec.factor(), self.shape.height * self.codec.factor());
        let bg_plane: Vec<f64> = sil.iter().map(|s| 1.0 - s).collect();
        let mut bg = self.codec.analyze_plane(&bg_plane, w, h)?;
        let mut fg = self.codec.analyze_plane(&sil, w, h)?;
        bg.iter_mut().chain(fg.iter_mut()).for_each(|x| *x /= 127.5);
        Ok(Basis { bg, fg })
    }

    fn scalars(&self, ab: f64) -> Scalars {
        let sa = ab.sqrt();
        let s1 = (1.0 - ab).sqrt();
        let sr2 = self.theta[I_SR].exp();
        let sv = ab * sr2 + 1.0 - ab;
        Scalars {
            sa,
            s1,
            sv,
            alpha: sa * (1.0 - sr2) / sv,
            sb: self.theta[I_SB].exp(),
            sr2,
        }
    }

    /// `[col, mid, half]` in pixel units.
    fn colors(&self, a: &[f64]) -> [f64; A] {
        let mut c = [0.0; A];
        for (r, cr) in c.iter_mut().enumerate() {
            let row = &self.theta[r * A..(r + 1) * A];
            *cr = (row.iter().zip(a).map(|(w, x)| w * x).sum::<f64>() + self.theta[I_B + r]) * 255.0;
        }
        c
    }

    /// Core evaluation on the clean-latent frame `z = u - m`. With `grad`
    /// given as `(dL/dv, accumulator)`, also accumulates parameter gradients.
    fn run(
        &self,
        z: &[f64],
        ab: f64,
        appearance: Option<&[f64]>,
        basis: &Basis,
        grad: Option<(&[f64], &mut [f64])>,
    ) -> Vec<f64> {
        let n = z.len();
        let plane = basis.bg.len();
        let a = appearance.unwrap_or(self.null_appearance());
        let c = self.colors(a);
        let s = self.scalars(ab);
        let nc = self.n_cells;

        let mut m0 = vec![0.0; n];
        let mut h = vec![0.0; n];
        let mut g = vec![0.0; n];
        for i in 0..n {
            let (ch, j) = (i / plane, i % plane);
            m0[i] = c[3 + ch] * basis.bg[j] + c[ch] * basis.fg[j] - self.ones[j];
            h[i] = c[6 + ch] * basis.bg[j];
            g[i] = s.sb * basis.bg[j];
        }
        let mu = |k: usize, i: usize| if k == 0 { m0[i] - h[i] } else { m0[i] + h[i] };

        let mut gg = vec![0.0; nc];
        let mut p = vec![[0.0; 2]; nc];
        let mut yy = vec![[0.0; 2]; nc];
        for i in 0..n {
            let cc = self.cell_of[i];
            gg[cc] += g[i] * g[i];
            for k in 0..2 {
                let y = z[i] - s.sa * mu(k, i);
                p[cc][k] += g[i] * y;
                yy[cc][k] += y * y;
            }
        }
        let mut kappa = vec![0.0; nc];
        let mut gamma = vec![0.0; nc];
        let mut wts = vec![[0.0; 2]; nc];
        for cc in 0..nc {
            let d = s.sv + ab * gg[cc];
            kappa[cc] = ab / d;
            gamma[cc] = s.alpha * kappa[cc] + s.sa / d;
            let l: [f64; 2] =
                std::array::from_fn(|k| -0.5 * (yy[cc][k] - kappa[cc] * p[cc][k].powi(2)) / s.sv);
            let top = l[0].max(l[1]);
            let e = l.map(|x| (x - top).exp());
            let tot = e[0] + e[1];
            wts[cc] = e.map(|x| x / tot);
        }
        let comp = |k: usize, i: usize| {
            let cc = self.cell_of[i];
            let y = z[i] - s.sa * mu(k, i);
            s.s1 * (s.alpha * y - mu(k, i) - gamma[cc] * p[cc][k] * g[i])
        };
        let v: Vec<f64> = (0..n)
            .map(|i| {
                let w = wts[self.cell_of[i]];
                w[0] * comp(0, i) + w[1] * comp(1, i)
            })
            .collect();

        let Some((r, acc)) = grad else {
            return v;
        };

        // Cell reductions of the upstream gradient.
        let mut rv = vec![[0.0; 2]; nc];
        let mut rg = vec![0.0; nc];
        let mut ry = vec![[0.0; 2]; nc];
        for i in 0..n {
            let cc = self.cell_of[i];
            rg[cc] += r[i] * g[i];
            for k in 0..2 {
                rv[cc][k] += r[i] * comp(k, i);
                ry[cc][k] += r[i] * (z[i] - s.sa * mu(k, i));
            }
        }
        let mut d_alpha = 0.0;
        let mut d_sv = 0.0;
        let mut dl = vec![[0.0; 2]; nc];
        let mut dp = vec![[0.0; 2]; nc];
        let mut dgg = vec![0.0; nc];
        for cc in 0..nc {
            let w = wts[cc];
            let mean = w[0] * rv[cc][0] + w[1] * rv[cc][1];
            let d = s.sv + ab * gg[cc];
            let mut d_gamma = 0.0;
            let mut d_kappa = 0.0;
            for k in 0..2 {
                dl[cc][k] = w[k] * (rv[cc][k] - mean);
                dp[cc][k] = -s.s1 * gamma[cc] * w[k] * rg[cc];
                d_alpha += s.s1 * w[k] * ry[cc][k];
                d_gamma -= s.s1 * p[cc][k] * w[k] * rg[cc];
                let pk = p[cc][k];
                dp[cc][k] += dl[cc][k] * kappa[cc] * pk / s.sv;
                d_kappa += dl[cc][k] * pk * pk / (2.0 * s.sv);
                d_sv += dl[cc][k] * (yy[cc][k] - kappa[cc] * pk * pk) / (2.0 * s.sv * s.sv);
            }
            d_alpha += d_gamma * kappa[cc];
            d_kappa += d_gamma * s.alpha;
            let d_beta = d_gamma;
            let d_d = -d_kappa * ab / (d * d) - d_beta * s.sa / (d * d);
            d_sv += d_d;
            dgg[cc] = d_d * ab;
        }

        let mut dc = [0.0; A];
        let mut d_sb = 0.0;
        for i in 0..n {
            let cc = self.cell_of[i];
            let (ch, j) = (i / plane, i % plane);
            let w = wts[cc];
            let mut dmu = [0.0; 2];
            let mut dg = 2.0 * dgg[cc] * g[i];
            for k in 0..2 {
                let y = z[i] - s.sa * mu(k, i);
                let dy = s.s1 * s.alpha * w[k] * r[i] - dl[cc][k] * y / s.sv + dp[cc][k] * g[i];
                dmu[k] = -s.s1 * w[k] * r[i] - s.sa * dy;
                dg += -s.s1 * gamma[cc] * p[cc][k] * w[k] * r[i] + dp[cc][k] * y;
            }
            let dm0 = dmu[0] + dmu[1];
            let dh = dmu[1] - dmu[0];
            dc[3 + ch] += dm0 * basis.bg[j];
            dc[ch] += dm0 * basis.fg[j];
            dc[6 + ch] += dh * basis.bg[j];
            d_sb += dg * basis.bg[j];
        }

        acc[I_SB] += d_sb * s.sb;
        d_sv += d_alpha * (-s.alpha / s.sv);
        let d_sr2 = d_alpha * (-s.sa / s.sv) + d_sv * ab;
        acc[I_SR] += d_sr2 * s.sr2;
        for r_ in 0..A {
            let dcr = dc[r_] * 255.0;
            acc[I_B + r_] += dcr;
            for k in 0..A {
                acc[r_ * A + k] += dcr * a[k];
            }
            if appearance.is_none() {
                for k in 0..A {
                    acc[I_NULL + k] += dcr * self.theta[r_ * A + k];
                }
            }
        }
        v
    }

    fn split_input<'a>(&self, input: &'a LatentGrid, cond: Option<&Conditioning<'_>>) -> Result<Vec<f64>> {
        input.ensure_same_shape(&LatentGrid::zeros(self.shape))?;
        Ok(match cond {
            Some(c) => input.sub(c.motion)?.into_data(),
            None => input.data().to_vec(),
        })
    }

    /// v prediction at noise level `ab`; see [`Denoiser::predict_v`].
    pub fn predict_at(&self, input: &LatentGrid, ab: f64, cond: Option<Conditioning<'_>>) -> Result<LatentGrid> {
        if !(ab > 0.0 && ab < 1.0) {
            return Err(Error::param(format!("alpha_bar must lie in (0, 1), got {ab}")));
        }
        if let Some(c) = &cond {
            if c.appearance.len() != A {
                return Err(Error::shape(A, c.appearance.len()));
            }
        }
        let z = self.split_input(input, cond.as_ref())?;
        let basis = self.basis(cond.as_ref().map(|c| c.motion))?;
        let v = self.run(&z, ab, cond.as_ref().map(|c| c.appearance), &basis, None);
        Ok(LatentGrid::from_raw(self.shape, v))
    }

    /// Like [`ToyDenoiser::predict_at`], and adds `d loss / d theta` to
    /// `acc` given `d loss / d v`.
    pub fn predict_with_grad(
        &self,
        input: &LatentGrid,
        ab: f64,
        cond: Option<Conditioning<'_>>,
        dv: impl FnOnce(&[f64]) -> Vec<f64>,
        acc: &mut [f64],
    ) -> Result<Vec<f64>> {
        if acc.len() != N_PARAMS {
            return Err(Error::shape(N_PARAMS, acc.len()));
        }
        let z = self.split_input(input, cond.as_ref())?;
        let basis = self.basis(cond.as_ref().map(|c| c.motion))?;
        let a = cond.as_ref().map(|c| c.appearance);
        let v = self.run(&z, ab, a, &basis, None);
        let r = dv(&v);
        self.run(&z, ab, a, &basis, Some((&r, acc)));
        Ok(v)
    }
}

impl Denoiser for ToyDenoiser {
    fn predict_v(
        &self,
        input: &LatentGrid,
        t: usize,
        sched: &NoiseSchedule,
        cond: Option<Conditioning<'_>>,
    ) -> Result<LatentGrid> {
        self.predict_at(input, sched.alpha_bar(t)?, cond)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::toy::encoders::{appearance, motion};
    use crate::toy::scene::{render_clip, SceneSampler};

    fn small() -> (ToyDenoiser, LatentGrid, Vec<f64>, LatentGrid) {
        // A 32x32 canvas keeps the finite-difference sweep quick.
        let sampler = SceneSampler {
            width: 32,
            height: 32,
            radius: [4.0, 5.0],
            min_amplitude: 3.0,
            ..SceneSampler::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = sampler.sample(&mut rng);
        let clip = render_clip(&spec, 3).unwrap();
        let codec = BlockCodec::default();
        let mut net = ToyDenoiser::new(codec.clone(), 32, 32, 16).unwrap();
        let theta: Vec<f64> = net
            .params()
            .iter()
            .map(|x| x + rng.random_range(-0.05..0.05))
            .collect();
        net.set_params(theta).unwrap();
        let z0 = codec.encode(&clip.frames[1]).unwrap();
        let eps = LatentGrid::standard_normal(z0.shape(), &mut rng);
        let zt = z0.lincomb(0.8f64.sqrt(), &eps, 0.2f64.sqrt()).unwrap();
        let m = motion(&codec, &clip.frames[1]).unwrap();
        (net, zt, appearance(&clip.frames[0]).to_vec(), m)
    }

    fn loss(net: &ToyDenoiser, u: &LatentGrid, cond: Option<Conditioning<'_>>, target: &[f64]) -> f64 {
        let v = net.predict_at(u, 0.8, cond).unwrap();
        v.data().iter().zip(target).map(|(a, b)| 0.5 * (a - b).powi(2)).sum()
    }

    fn check_gradient(conditioned: bool) {
        let (mut net, zt, a, m) = small();
        let u = if conditioned { zt.add(&m).unwrap() } else { zt.clone() };
        let cond = || conditioned.then(|| Conditioning { appearance: &a, motion: &m });
        let target: Vec<f64> = zt.data().iter().map(|x| 0.3 * x).collect();
        let mut acc = vec![0.0; N_PARAMS];
        net.predict_with_grad(
            &u,
            0.8,
            cond(),
            |v| v.iter().zip(&target).map(|(a, b)| a - b).collect(),
            &mut acc,
        )
        .unwrap();
        let theta = net.params().to_vec();
        for (name, _, off) in PARAMS {
            let len = PARAMS.iter().find(|p| p.0 == name).unwrap().1.iter().product::<usize>();
            for k in off..off + len {
                let h = 1e-6;
                let mut tp = theta.clone();
                tp[k] += h;
                net.set_params(tp).unwrap();
                let lp = loss(&net, &u, cond(), &target);
                let mut tm = theta.clone();
                tm[k] -= h;
                net.set_params(tm).unwrap();
                let lm = loss(&net, &u, cond(), &target);
                let fd = (lp - lm) / (2.0 * h);
                let tol = 1e-5 * (1.0 + fd.abs());
                assert!(
                    (fd - acc[k]).abs() < tol,
                    "{name}[{}]: analytic {} vs numeric {fd}",
                    k - off,
                    acc[k]
                );
            }
        }
        net.set_params(theta).unwrap();
    }

    #[test]
    fn gradient_matches_finite_differences_conditioned() {
        check_gradient(true);
    }

    #[test]
    fn gradient_matches_finite_differences_unconditioned() {
        check_gradient(false);
    }

    #[test]
    fn output_shape_and_determinism() {
        let (net, zt, a, m) = small();
        let c = || Some(Conditioning { appearance: &a, motion: &m });
        let v1 = net.predict_at(&zt, 0.5, c()).unwrap();
        let v2 = net.predict_at(&zt, 0.5, c()).unwrap();
        assert_eq!(v1.shape(), zt.shape());
        assert_eq!(v1, v2);
        assert!(net.predict_at(&zt, 0.5, Some(Conditioning { appearance: &a[..3], motion: &m })).is_err());
    }

    #[test]
    fn parameter_budget() {
        assert!(N_PARAMS < 2_000_000);
        let (_, _, last) = PARAMS[PARAMS.len() - 1];
        assert_eq!(last + A, N_PARAMS);
    }
}
