//! Frame directories: one zero-padded `frame_NNNNN.png` per frame.

use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;

use crate::error::{Error, Result};
use crate::video::{Frame, VideoClip};

pub fn frame_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("frame_{k:05}.png"))
}

pub fn write_frame(dir: &Path, k: usize, frame: &Frame) -> Result<()> {
    let path = frame_path(dir, k);
    let img = RgbImage::from_raw(frame.width() as u32, frame.height() as u32, frame.data().to_vec())
        .expect("frame buffer matches its size");
    img.save(&path)
        .map_err(|e| Error::io(format!("writing {}", path.display()), std::io::Error::other(e)))
}

pub fn write_frames(dir: &Path, frames: &[Frame]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    for (k, f) in frames.iter().enumerate() {
        write_frame(dir, k, f)?;
    }
    Ok(())
}

/// Reads every `frame_*.png` in `dir` in file-name order.
pub fn read_frames(dir: &Path, fps: f64) -> Result<VideoClip> {
    if !dir.is_dir() {
        return Err(Error::MissingInput(dir.to_path_buf()));
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(format!("listing {}", dir.display()), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with("frame_") && name.ends_with(".png")
        })
        .collect();
    paths.sort();
    let frames = paths
        .iter()
        .map(|p| {
            let img = image::open(p)
                .map_err(|e| Error::io(format!("reading {}", p.display()), std::io::Error::other(e)))?
                .to_rgb8();
            Frame::new(img.width() as usize, img.height() as usize, img.into_raw())
        })
        .collect::<Result<Vec<_>>>()?;
    VideoClip::new(frames, fps)
}

/// Names of the immediate subdirectories of `dir`, sorted.
pub fn video_ids(dir: &Path) -> Result<Vec<String>> {
    if !dir.is_dir() {
        return Err(Error::MissingInput(dir.to_path_buf()));
    }
    let mut ids: Vec<String> = fs::read_dir(dir)
        .map_err(|e| Error::io(format!("listing {}", dir.display()), e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().to_str().map(String::from))
        .collect();
    ids.sort();
    Ok(ids)
}
