//! Noise schedules, forward noising, v-parameterization, deterministic DDIM
//! stepping and classifier-free guidance.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::latent::LatentGrid;

/// Plain-text form of a linear schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub t_train: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub ddim_count: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            t_train: 1000,
            beta_min: 1e-4,
            beta_max: 0.02,
            ddim_count: 30,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        make_linear_schedule(self.t_train, self.beta_min, self.beta_max, self.ddim_count)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    config: ScheduleConfig,
    alpha_bar: Vec<f64>,
    ddim_steps: Vec<usize>,
}

/// Linear-β schedule with `ddim_count` inference steps spread evenly from
/// `t_train` down to 1.
pub fn make_linear_schedule(
    t_train: usize,
    beta_min: f64,
    beta_max: f64,
    ddim_count: usize,
) -> Result<NoiseSchedule> {
    if ddim_count == 0 || ddim_count > t_train {
        return Err(Error::param(format!(
            "need 1 <= ddim_count <= t_train, got ddim_count={ddim_count}, t_train={t_train}"
        )));
    }
    if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
        return Err(Error::param(format!(
            "need 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"
        )));
    }

    let mut alpha_bar = Vec::with_capacity(t_train + 1);
    alpha_bar.push(1.0);
    let mut acc = 1.0;
    for s in 0..t_train {
        let beta = if t_train == 1 {
            beta_min
        } else {
            beta_min + (beta_max - beta_min) * s as f64 / (t_train - 1) as f64
        };
        acc *= 1.0 - beta;
        alpha_bar.push(acc);
    }

    let ddim_steps = if ddim_count == 1 {
        vec![t_train]
    } else {
        let stride = (t_train - 1) as f64 / (ddim_count - 1) as f64;
        (0..ddim_count)
            .map(|i| (t_train as f64 - i as f64 * stride).round() as usize)
            .collect()
    };

    Ok(NoiseSchedule {
        config: ScheduleConfig {
            t_train,
            beta_min,
            beta_max,
            ddim_count,
        },
        alpha_bar,
        ddim_steps,
    })
}

impl NoiseSchedule {
    pub fn t_train(&self) -> usize {
        self.config.t_train
    }

    pub fn config(&self) -> &ScheduleConfig {
        &self.config
    }

    /// Cumulative products for t = 0..=T; entry 0 is exactly 1.
    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn ddim_steps(&self) -> &[usize] {
        &self.ddim_steps
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alpha_bar.get(t).copied().ok_or_else(|| {
            Error::param(format!("timestep {t} outside [0, {}]", self.t_train()))
        })
    }

    /// `(sqrt(ab), sqrt(1 - ab))` at timestep `t`.
    pub fn coefficients(&self, t: usize) -> Result<(f64, f64)> {
        let ab = self.alpha_bar(t)?;
        Ok((ab.sqrt(), (1.0 - ab).sqrt()))
    }

    /// Stable digest of the schedule parameters, recorded in checkpoints.
    pub fn fingerprint(&self) -> String {
        let c = &self.config;
        let text = format!(
            "linear:{}:{:e}:{:e}:{}",
            c.t_train, c.beta_min, c.beta_max, c.ddim_count
        );
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// `z_t = sqrt(ab) z0 + sqrt(1 - ab) eps`.
pub fn add_noise(
    z0: &LatentGrid,
    eps: &LatentGrid,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<LatentGrid> {
    let (a, s) = sched.coefficients(t)?;
    z0.lincomb(a, eps, s)
}

/// `v = sqrt(ab) eps - sqrt(1 - ab) z0`.
pub fn v_from_eps_z0(
    eps: &LatentGrid,
    z0: &LatentGrid,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<LatentGrid> {
    let (a, s) = sched.coefficients(t)?;
    eps.lincomb(a, z0, -s)
}

/// Recovers `(z0_hat, eps_hat)` from a noisy latent and a v prediction.
pub fn z0_eps_from_v(
    zt: &LatentGrid,
    v: &LatentGrid,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<(LatentGrid, LatentGrid)> {
    let (a, s) = sched.coefficients(t)?;
    let z0 = zt.lincomb(a, v, -s)?;
    let eps = zt.lincomb(s, v, a)?;
    Ok((z0, eps))
}

/// Deterministic (eta = 0) DDIM update from `t_cur` to `t_next`.
pub fn ddim_step(
    zt: &LatentGrid,
    v_hat: &LatentGrid,
    t_cur: usize,
    t_next: usize,
    sched: &NoiseSchedule,
) -> Result<LatentGrid> {
    if t_next >= t_cur {
        return Err(Error::param(format!(
            "DDIM step must move to an earlier timestep, got {t_cur} -> {t_next}"
        )));
    }
    let (z0, eps) = z0_eps_from_v(zt, v_hat, t_cur, sched)?;
    if t_next == 0 {
        return Ok(z0);
    }
    let (a, s) = sched.coefficients(t_next)?;
    z0.lincomb(a, &eps, s)
}

/// `uncond + scale * (cond - uncond)`, applied to v predictions.
pub fn cfg_combine(uncond: &LatentGrid, cond: &LatentGrid, scale: f64) -> Result<LatentGrid> {
    if !(scale >= 0.0) || !scale.is_finite() {
        return Err(Error::param(format!(
            "guidance scale must be finite and >= 0, got {scale}"
        )));
    }
    if scale == 1.0 {
        cond.ensure_same_shape(uncond)?;
        return Ok(cond.clone());
    }
    uncond.lincomb(1.0 - scale, cond, scale)
}

/// Regression target used when training a denoiser.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionTarget {
    #[default]
    V,
    Eps,
}

impl PredictionTarget {
    pub fn target(
        self,
        z0: &LatentGrid,
        eps: &LatentGrid,
        t: usize,
        sched: &NoiseSchedule,
    ) -> Result<LatentGrid> {
        match self {
            PredictionTarget::V => v_from_eps_z0(eps, z0, t, sched),
            PredictionTarget::Eps => {
                z0.ensure_same_shape(eps)?;
                Ok(eps.clone())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::Shape;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn scalar(x: f64) -> LatentGrid {
        LatentGrid::new(Shape::new(1, 1, 1, 1).unwrap(), vec![x]).unwrap()
    }

    /// A schedule whose timestep 1 has alpha_bar = 0.25 exactly.
    fn quarter() -> NoiseSchedule {
        make_linear_schedule(1, 0.75, 0.75, 1).unwrap()
    }

    #[test]
    fn default_schedule_shape() {
        let s = ScheduleConfig::default().build().unwrap();
        assert_eq!(s.alpha_bars().len(), 1001);
        assert_eq!(s.alpha_bars()[0], 1.0);
        assert_eq!(s.ddim_steps().len(), 30);
        assert_eq!(s.ddim_steps()[0], 1000);
        assert_eq!(*s.ddim_steps().last().unwrap(), 1);
        assert!(s.alpha_bars().windows(2).all(|w| w[1] < w[0]));
        assert!(s.ddim_steps().windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn single_step_schedule() {
        let s = make_linear_schedule(1, 0.5, 0.5, 1).unwrap();
        assert_eq!(s.alpha_bars(), &[1.0, 0.5]);
        assert_eq!(s.ddim_steps(), &[1]);
    }

    #[test]
    fn rejects_bad_schedules() {
        assert!(make_linear_schedule(10, 0.1, 0.1, 20).is_err());
        assert!(make_linear_schedule(10, 0.0, 0.1, 5).is_err());
        assert!(make_linear_schedule(10, 0.2, 0.1, 5).is_err());
        assert!(make_linear_schedule(10, 0.1, 1.0, 5).is_err());
        assert!(make_linear_schedule(10, 0.1, 0.2, 0).is_err());
    }

    #[test]
    fn add_noise_hand_values() {
        let s = quarter();
        let zt = add_noise(&scalar(2.0), &scalar(4.0), 1, &s).unwrap();
        assert_abs_diff_eq!(zt.data()[0], 1.0 + 0.75f64.sqrt() * 4.0, epsilon = 1e-12);
        let z0 = add_noise(&scalar(2.0), &scalar(4.0), 0, &s).unwrap();
        assert_eq!(z0.data()[0], 2.0);
    }

    #[test]
    fn v_hand_values() {
        let s = quarter();
        let v = v_from_eps_z0(&scalar(4.0), &scalar(2.0), 1, &s).unwrap();
        assert_abs_diff_eq!(v.data()[0], 2.0 - 0.75f64.sqrt() * 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.data()[0], 0.2679, epsilon = 1e-4);
        let v0 = v_from_eps_z0(&scalar(4.0), &scalar(2.0), 0, &s).unwrap();
        assert_eq!(v0.data()[0], 4.0);
    }

    #[test]
    fn inversion_hand_values() {
        let s = quarter();
        let (z0, _) = z0_eps_from_v(&scalar(1.0), &scalar(2.0), 1, &s).unwrap();
        assert_abs_diff_eq!(z0.data()[0], -1.2321, epsilon = 1e-4);
        let (z0, _) = z0_eps_from_v(&scalar(1.5), &scalar(2.0), 0, &s).unwrap();
        assert_eq!(z0.data()[0], 1.5);
    }

    #[test]
    fn ddim_to_zero_returns_z0_hat() {
        let s = ScheduleConfig::default().build().unwrap();
        let zt = scalar(0.3);
        let v = scalar(-0.7);
        let (z0, _) = z0_eps_from_v(&zt, &v, 500, &s).unwrap();
        assert_eq!(ddim_step(&zt, &v, 500, 0, &s).unwrap(), z0);
        assert!(ddim_step(&zt, &v, 500, 500, &s).is_err());
        let wide = LatentGrid::zeros(Shape::new(2, 1, 1, 1).unwrap());
        assert!(matches!(
            ddim_step(&zt, &wide, 500, 10, &s),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn cfg_examples() {
        let u = scalar(0.0);
        let c = scalar(2.0);
        assert_eq!(cfg_combine(&u, &c, 3.5).unwrap().data()[0], 7.0);
        assert_eq!(cfg_combine(&u, &c, 1.0).unwrap(), c);
        assert_eq!(cfg_combine(&u, &c, 0.0).unwrap(), u);
        assert!(cfg_combine(&u, &c, -1.0).is_err());
    }

    #[test]
    fn monte_carlo_variance_is_preserved() {
        use rand::SeedableRng;
        let s = ScheduleConfig::default().build().unwrap();
        let shape = Shape::new(1, 1, 100_000, 1).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let z0 = LatentGrid::standard_normal(shape, &mut rng);
        let eps = LatentGrid::standard_normal(shape, &mut rng);
        for t in [1, 250, 600, 1000] {
            let zt = add_noise(&z0, &eps, t, &s).unwrap();
            let n = zt.data().len() as f64;
            let mean = zt.data().iter().sum::<f64>() / n;
            let var = zt.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            assert!((var - 1.0).abs() < 0.02, "t={t} var={var}");
        }
    }

    proptest! {
        #[test]
        fn triangle_identities(
            z0 in -5.0f64..5.0,
            eps in -5.0f64..5.0,
            t in 0usize..=1000,
        ) {
            let s = ScheduleConfig::default().build().unwrap();
            let (z0g, eg) = (scalar(z0), scalar(eps));
            let zt = add_noise(&z0g, &eg, t, &s).unwrap();
            let v = v_from_eps_z0(&eg, &z0g, t, &s).unwrap();
            let (z0r, er) = z0_eps_from_v(&zt, &v, t, &s).unwrap();
            prop_assert!((z0r.data()[0] - z0).abs() < 1e-9);
            prop_assert!((er.data()[0] - eps).abs() < 1e-9);
            let back = add_noise(&z0r, &er, t, &s).unwrap();
            prop_assert!((back.data()[0] - zt.data()[0]).abs() < 1e-9);
        }

        #[test]
        fn cfg_fixed_point(a in -10.0f64..10.0, scale in 0.0f64..10.0) {
            let g = scalar(a);
            let out = cfg_combine(&g, &g, scale).unwrap();
            prop_assert!((out.data()[0] - a).abs() < 1e-12);
        }

        #[test]
        fn cfg_is_affine(u in -5.0f64..5.0, c in -5.0f64..5.0, scale in 0.0f64..8.0) {
            let out = cfg_combine(&scalar(u), &scalar(c), scale).unwrap();
            prop_assert!((out.data()[0] - (u + scale * (c - u))).abs() < 1e-9);
        }

        #[test]
        fn ddim_steps_strictly_decrease(t_train in 1usize..2000, count in 1usize..64) {
            prop_assume!(count <= t_train);
            let s = make_linear_schedule(t_train, 1e-4, 0.02, count).unwrap();
            let steps = s.ddim_steps();
            prop_assert_eq!(steps.len(), count);
            prop_assert_eq!(steps[0], t_train);
            prop_assert!(steps.windows(2).all(|w| w[1] < w[0]));
            prop_assert!(steps.iter().all(|&t| (1..=t_train).contains(&t)));
        }
    }
}
