//! A synthetic world small enough to train and evaluate on a laptop: moving
//! shapes over a two-tone cell background, a fixed block-transform codec and
//! a compact conditioned denoiser.

pub mod codec;
pub mod encoders;
pub mod model;
pub mod scene;
pub mod train;

pub use codec::BlockCodec;
pub use encoders::{appearance, motion, Appearance, APPEARANCE_DIM};
pub use model::ToyDenoiser;
pub use scene::{
    detect, render_clip, shape_centroid, Background, SceneSampler, SceneSpec, ShapeKind, Trajectory,
};
pub use train::{train_toy, validation_loss, PreparedClip, ToyHyper, TrainReport};
