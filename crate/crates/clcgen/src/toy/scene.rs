//! Procedural moving-shape videos.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video::{Frame, VideoClip};

pub const DEFAULT_FPS: f64 = 20.0;

/// A pixel belongs to the shape when its brightest channel reaches this value.
pub const DETECT_THRESHOLD: u8 = 166;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Disc,
    Square,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Trajectory {
    Static {
        x: f64,
        y: f64,
    },
    Linear {
        x0: f64,
        y0: f64,
        vx: f64,
        vy: f64,
    },
    Sinusoid {
        cx: f64,
        cy: f64,
        ax: f64,
        ay: f64,
        wx: f64,
        wy: f64,
        px: f64,
        py: f64,
    },
}

impl Trajectory {
    /// Center keypoint at frame `k`.
    pub fn at(&self, k: usize) -> [f64; 2] {
        let k = k as f64;
        match *self {
            Trajectory::Static { x, y } => [x, y],
            Trajectory::Linear { x0, y0, vx, vy } => [x0 + vx * k, y0 + vy * k],
            Trajectory::Sinusoid {
                cx,
                cy,
                ax,
                ay,
                wx,
                wy,
                px,
                py,
            } => [cx + ax * (wx * k + px).sin(), cy + ay * (wy * k + py).sin()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Background {
    Flat {
        color: [f64; 3],
    },
    /// Square cells colored `a` or `b` by `bits`, each shifted in brightness
    /// by its `offset`. Cells are listed row-major.
    Cells {
        cell: usize,
        a: [f64; 3],
        b: [f64; 3],
        bits: Vec<bool>,
        offset: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub shape: ShapeKind,
    pub color: [f64; 3],
    pub radius: f64,
    pub trajectory: Trajectory,
    pub background: Background,
}

impl SceneSpec {
    pub fn validate(&self, n_frames: usize) -> Result<()> {
        if n_frames == 0 {
            return Err(Error::param("a clip needs at least one frame"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::param("canvas must be non-empty"));
        }
        if !(self.radius > 0.0) {
            return Err(Error::param(format!("radius must be positive, got {}", self.radius)));
        }
        if let Background::Cells {
            cell, bits, offset, ..
        } = &self.background
        {
            if *cell == 0 || self.width % cell != 0 || self.height % cell != 0 {
                return Err(Error::param(format!(
                    "background cell {cell} does not tile {}x{}",
                    self.width, self.height
                )));
            }
            let n = (self.width / cell) * (self.height / cell);
            if bits.len() != n || offset.len() != n {
                return Err(Error::param(format!(
                    "background needs {n} cells, got {} bits and {} offsets",
                    bits.len(),
                    offset.len()
                )));
            }
        }
        let r = self.radius;
        for k in 0..n_frames {
            let [x, y] = self.trajectory.at(k);
            if !(x - r >= 0.0
                && y - r >= 0.0
                && x + r <= self.width as f64
                && y + r <= self.height as f64)
            {
                return Err(Error::param(format!(
                    "trajectory leaves the canvas at frame {k}: center ({x:.2}, {y:.2})"
                )));
            }
        }
        Ok(())
    }

    pub fn background_at(&self, x: usize, y: usize) -> [f64; 3] {
        match &self.background {
            Background::Flat { color } => *color,
            Background::Cells {
                cell,
                a,
                b,
                bits,
                offset,
            } => {
                let id = (y / cell) * (self.width / cell) + x / cell;
                let base = if bits[id] { b } else { a };
                base.map(|c| c + offset[id])
            }
        }
    }

    /// Shape coverage of every pixel (1 inside, 0 outside), row-major.
    pub fn silhouette(&self, center: [f64; 2]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width * self.height);
        let r = self.radius;
        for y in 0..self.height {
            for x in 0..self.width {
                let dx = x as f64 + 0.5 - center[0];
                let dy = y as f64 + 0.5 - center[1];
                let inside = match self.shape {
                    ShapeKind::Disc => dx * dx + dy * dy <= r * r,
                    ShapeKind::Square => dx.abs() <= r && dy.abs() <= r,
                };
                out.push(if inside { 1.0 } else { 0.0 });
            }
        }
        out
    }

    pub fn render_frame(&self, k: usize) -> Frame {
        let sil = self.silhouette(self.trajectory.at(k));
        let mut data = Vec::with_capacity(3 * sil.len());
        for y in 0..self.height {
            for x in 0..self.width {
                let m = sil[y * self.width + x];
                let bg = self.background_at(x, y);
                for ch in 0..3 {
                    let v = bg[ch] * (1.0 - m) + self.color[ch] * m;
                    data.push(v.round().clamp(0.0, 255.0) as u8);
                }
            }
        }
        Frame::new(self.width, self.height, data).expect("canvas size checked")
    }
}

pub fn render_clip(spec: &SceneSpec, n_frames: usize) -> Result<VideoClip> {
    spec.validate(n_frames)?;
    let frames = (0..n_frames).map(|k| spec.render_frame(k)).collect();
    VideoClip::new(frames, DEFAULT_FPS)
}

/// Distribution of random training and evaluation scenes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSampler {
    pub width: usize,
    pub height: usize,
    pub cell: usize,
    /// Gray level shared by both background tones.
    pub base: [f64; 2],
    /// Length of the zero-mean color offset separating the two tones.
    pub chroma: f64,
    /// Per-cell brightness offsets are uniform in `[-jitter, jitter]`.
    pub jitter: f64,
    pub radius: [f64; 2],
    pub min_amplitude: f64,
    pub frequency: [f64; 2],
}

impl Default for SceneSampler {
    fn default() -> Self {
        SceneSampler {
            width: 64,
            height: 64,
            cell: 16,
            base: [60.0, 100.0],
            chroma: 45.0,
            jitter: 3.0,
            radius: [5.0, 9.0],
            min_amplitude: 8.0,
            frequency: [0.15, 0.25],
        }
    }
}

impl SceneSampler {
    pub fn validate(&self) -> Result<()> {
        let ordered = |r: [f64; 2]| r[0] <= r[1] && r[0].is_finite() && r[1].is_finite();
        if !(ordered(self.base) && ordered(self.radius) && ordered(self.frequency)) {
            return Err(Error::Config("sampler ranges must be finite with lo <= hi".into()));
        }
        if self.radius[0] <= 0.0 || self.chroma < 0.0 || self.jitter < 0.0 || self.min_amplitude < 0.0 {
            return Err(Error::Config("sampler magnitudes must be non-negative".into()));
        }
        let margin = self.radius[1] + 2.0 + self.min_amplitude;
        if 2.0 * margin >= self.width.min(self.height) as f64 {
            return Err(Error::Config(format!(
                "canvas {}x{} too small for radius {} and amplitude {}",
                self.width, self.height, self.radius[1], self.min_amplitude
            )));
        }
        if self.cell == 0 || self.width % self.cell != 0 || self.height % self.cell != 0 {
            return Err(Error::Config(format!("cell {} does not tile the canvas", self.cell)));
        }
        Ok(())
    }

    fn uniform<R: Rng + ?Sized>(rng: &mut R, r: [f64; 2]) -> f64 {
        if r[0] == r[1] {
            r[0]
        } else {
            rng.random_range(r[0]..r[1])
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SceneSpec {
        let base = Self::uniform(rng, self.base);
        let mut dv = [0.0; 3];
        loop {
            for d in &mut dv {
                *d = rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
            let mean = dv.iter().sum::<f64>() / 3.0;
            dv.iter_mut().for_each(|d| *d -= mean);
            let n = dv.iter().map(|d| d * d).sum::<f64>().sqrt();
            if n > 1e-6 {
                dv.iter_mut().for_each(|d| *d *= self.chroma / n);
                break;
            }
        }
        let n_cells = (self.width / self.cell) * (self.height / self.cell);
        let bits = (0..n_cells).map(|_| rng.random_bool(0.5)).collect();
        let offset = (0..n_cells)
            .map(|_| Self::uniform(rng, [-self.jitter, self.jitter]))
            .collect();

        let mut color = [0.0; 3];
        for c in &mut color {
            *c = rng.random_range(40.0..255.0);
        }
        color[rng.random_range(0..3)] = rng.random_range(200.0..255.0);
        let radius = Self::uniform(rng, self.radius);
        let shape = if rng.random_bool(0.5) {
            ShapeKind::Disc
        } else {
            ShapeKind::Square
        };

        let m = radius + 2.0;
        let am = self.min_amplitude;
        let (w, h) = (self.width as f64, self.height as f64);
        let cx = rng.random_range(m + am..w - m - am);
        let cy = rng.random_range(m + am..h - m - am);
        let ax = Self::uniform(rng, [am, am.max((cx - m).min(w - m - cx))]);
        let ay = Self::uniform(rng, [am, am.max((cy - m).min(h - m - cy))]);
        let trajectory = Trajectory::Sinusoid {
            cx,
            cy,
            ax,
            ay,
            wx: Self::uniform(rng, self.frequency),
            wy: Self::uniform(rng, self.frequency),
            px: rng.random_range(0.0..TAU),
            py: rng.random_range(0.0..TAU),
        };
        SceneSpec {
            width: self.width,
            height: self.height,
            shape,
            color,
            radius,
            trajectory,
            background: Background::Cells {
                cell: self.cell,
                a: dv.map(|d| base + d),
                b: dv.map(|d| base - d),
                bits,
                offset,
            },
        }
    }
}

/// Pixels whose brightest channel reaches [`DETECT_THRESHOLD`].
pub fn detect(frame: &Frame) -> Vec<bool> {
    frame
        .data()
        .chunks_exact(3)
        .map(|p| p.iter().copied().max().unwrap_or(0) >= DETECT_THRESHOLD)
        .collect()
}

/// Centroid of the detected shape in pixel coordinates, if any pixel fires.
pub fn shape_centroid(frame: &Frame) -> Option<[f64; 2]> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (i, hit) in detect(frame).into_iter().enumerate() {
        if hit {
            sx += (i % frame.width()) as f64 + 0.5;
            sy += (i / frame.width()) as f64 + 0.5;
            n += 1;
        }
    }
    (n > 0).then(|| [sx / n as f64, sy / n as f64])
}
