//! Closed-loop feedback sampling for autoregressive latent-diffusion video
//! generation, with temporal-consistency metrics, dataset curation tools and
//! a synthetic moving-shape world for end-to-end experiments.

pub mod cli;
pub mod curation;
pub mod diffusion;
pub mod error;
pub mod experiment;
pub mod io;
pub mod latent;
pub mod metrics;
pub mod sampler;
pub mod toy;
pub mod video;

pub use error::{Error, Result};
