//! On-disk formats: experiment configs, checkpoints and latent dumps, frame
//! directories, manifests, CSV reports and charts.

pub mod checkpoint;
pub mod config;
pub mod frames;
pub mod manifest;
pub mod plot;
pub mod report;
pub mod tensors;
