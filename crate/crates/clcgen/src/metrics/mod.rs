//! Video evaluation: temporal jitter, PSNR variants, SSIM, keypoint distance
//! and delegation to external scorers.

mod akd;
mod external;
mod psnr;
mod ssim;
mod tje;

pub use akd::{akd, akd_adjust, joint_validity, toy_keypoints, AkdResult, KeypointSet, Region};
pub use external::{external_score, ScorerRegistry, SCORER_PATH_ENV};
pub use psnr::{psnr_float, psnr_int};
pub use ssim::ssim;
pub use tje::{tje, tje_multi, TjeResult, DEFAULT_DELTAS};
