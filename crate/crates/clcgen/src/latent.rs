use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Channel, height and width of a latent tensor plus the spatial downsampling
/// factor relating it to pixel space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub factor: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize, factor: usize) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::param(format!(
                "latent dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        if !factor.is_power_of_two() {
            return Err(Error::param(format!(
                "downsample factor must be a power of two, got {factor}"
            )));
        }
        Ok(Shape {
            channels,
            height,
            width,
            factor,
        })
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{}x{} (f={})",
            self.channels, self.height, self.width, self.factor
        )
    }
}

/// A dense `c x h x w` latent tensor in channel-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentGrid {
    shape: Shape,
    data: Vec<f64>,
}

impl LatentGrid {
    /// Builds a grid, rejecting wrong lengths and non-finite entries.
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::shape(
                format!("{} values", shape.len()),
                format!("{} values", data.len()),
            ));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::param(format!("latent entry {i} is not finite")));
        }
        Ok(LatentGrid { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        LatentGrid {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn standard_normal<R: Rng + ?Sized>(shape: Shape, rng: &mut R) -> Self {
        let data = (0..shape.len())
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        LatentGrid { shape, data }
    }

    /// Internal constructor for values produced by arithmetic on valid grids.
    pub(crate) fn from_raw(shape: Shape, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), shape.len());
        LatentGrid { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn ensure_same_shape(&self, other: &LatentGrid) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(self.shape, other.shape));
        }
        Ok(())
    }

    /// `a * self + b * other`, elementwise.
    pub fn lincomb(&self, a: f64, other: &LatentGrid, b: f64) -> Result<LatentGrid> {
        self.ensure_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(LatentGrid::from_raw(self.shape, data))
    }

    pub fn add(&self, other: &LatentGrid) -> Result<LatentGrid> {
        self.lincomb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &LatentGrid) -> Result<LatentGrid> {
        self.lincomb(1.0, other, -1.0)
    }

    pub fn scale(&self, a: f64) -> LatentGrid {
        LatentGrid::from_raw(self.shape, self.data.iter().map(|x| a * x).collect())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &LatentGrid) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max))
    }
}
