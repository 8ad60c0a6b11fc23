use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::toy;
use crate::video::VideoClip;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Face,
    Hands,
    Torso,
    Lip,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::Face => "face",
            Region::Hands => "hands",
            Region::Torso => "torso",
            Region::Lip => "lip",
        }
    }
}

/// Per-frame landmarks grouped by body region, with a detection flag per
/// frame. Landmarks of invalid frames are ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct KeypointSet {
    valid: Vec<bool>,
    landmarks: BTreeMap<Region, Vec<Vec<[f64; 2]>>>,
}

impl KeypointSet {
    pub fn new(valid: Vec<bool>, landmarks: BTreeMap<Region, Vec<Vec<[f64; 2]>>>) -> Result<Self> {
        for (region, frames) in &landmarks {
            if frames.len() != valid.len() {
                return Err(Error::shape(
                    format!("{} frames of {} landmarks", valid.len(), region.name()),
                    format!("{} frames", frames.len()),
                ));
            }
            let mut counts = frames
                .iter()
                .zip(&valid)
                .filter(|(_, &ok)| ok)
                .map(|(pts, _)| pts.len());
            if let Some(first) = counts.next() {
                if counts.any(|c| c != first) {
                    return Err(Error::Validation(format!(
                        "{} landmark count varies across valid frames",
                        region.name()
                    )));
                }
            }
        }
        Ok(KeypointSet { valid, landmarks })
    }

    pub fn len(&self) -> usize {
        self.valid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valid.is_empty()
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn region(&self, region: Region) -> Option<&[Vec<[f64; 2]>]> {
        self.landmarks.get(&region).map(Vec::as_slice)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AkdResult {
    /// Mean landmark distance over frames valid in every compared set.
    pub raw: f64,
    /// Fraction of all frames where the generated landmarks were detected.
    pub detection_fraction: f64,
    pub frames_used: usize,
}

impl AkdResult {
    pub fn adjusted(&self) -> Result<f64> {
        akd_adjust(self.raw, self.detection_fraction)
    }
}

/// Frames valid in every set. All sets must have the same length.
pub fn joint_validity(sets: &[&KeypointSet]) -> Result<Vec<bool>> {
    let Some(first) = sets.first() else {
        return Ok(Vec::new());
    };
    let mut mask = first.valid.clone();
    for s in &sets[1..] {
        if s.len() != mask.len() {
            return Err(Error::shape(
                format!("{} frames", mask.len()),
                format!("{} frames", s.len()),
            ));
        }
        mask.iter_mut().zip(&s.valid).for_each(|(m, &v)| *m &= v);
    }
    Ok(mask)
}

/// Average keypoint distance for one region.
///
/// `mask`, when given, restricts averaging further; pass the output of
/// [`joint_validity`] over every compared method so that all methods are
/// scored on the same frames.
pub fn akd(
    real: &KeypointSet,
    gen: &KeypointSet,
    region: Region,
    mask: Option<&[bool]>,
) -> Result<AkdResult> {
    let mut joint = joint_validity(&[real, gen])?;
    if let Some(m) = mask {
        if m.len() != joint.len() {
            return Err(Error::shape(
                format!("{} mask entries", joint.len()),
                format!("{}", m.len()),
            ));
        }
        joint.iter_mut().zip(m).for_each(|(j, &v)| *j &= v);
    }
    let missing = || Error::param(format!("no {} landmarks", region.name()));
    let rp = real.region(region).ok_or_else(missing)?;
    let gp = gen.region(region).ok_or_else(missing)?;

    let mut total = 0.0;
    let mut count = 0usize;
    let mut frames_used = 0usize;
    for (k, _) in joint.iter().enumerate().filter(|(_, &ok)| ok) {
        if rp[k].len() != gp[k].len() {
            return Err(Error::shape(
                format!("{} landmarks", rp[k].len()),
                format!("{} landmarks at frame {k}", gp[k].len()),
            ));
        }
        for (a, b) in rp[k].iter().zip(&gp[k]) {
            total += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            count += 1;
        }
        frames_used += 1;
    }
    if count == 0 {
        return Err(Error::UndefinedMetric(format!(
            "no jointly valid {} landmarks",
            region.name()
        )));
    }
    let detected = gen.valid.iter().filter(|&&v| v).count();
    Ok(AkdResult {
        raw: total / count as f64,
        detection_fraction: detected as f64 / gen.len() as f64,
        frames_used,
    })
}

/// Rescales a raw AKD by the detection fraction so that methods whose
/// failed frames were excluded are not rewarded for failing.
pub fn akd_adjust(raw: f64, detection_fraction: f64) -> Result<f64> {
    if !(detection_fraction > 0.0) {
        return Err(Error::UndefinedMetric(format!(
            "detection fraction must be positive, got {detection_fraction}"
        )));
    }
    if detection_fraction > 1.0 {
        return Err(Error::param(format!(
            "detection fraction above 1: {detection_fraction}"
        )));
    }
    Ok(raw / detection_fraction)
}

/// Shape-centroid keypoints for clips of the synthetic world, reported under
/// [`Region::Torso`]. Frames without shape pixels are flagged invalid.
pub fn toy_keypoints(clip: &VideoClip) -> KeypointSet {
    let mut valid = Vec::with_capacity(clip.len());
    let mut points = Vec::with_capacity(clip.len());
    for frame in &clip.frames {
        match toy::shape_centroid(frame) {
            Some(c) => {
                valid.push(true);
                points.push(vec![c]);
            }
            None => {
                valid.push(false);
                points.push(Vec::new());
            }
        }
    }
    let landmarks = BTreeMap::from([(Region::Torso, points)]);
    KeypointSet { valid, landmarks }
}
