//! Dataset curation: identity de-duplication by embedding clustering, crop
//! validation, clip segmentation, identity-disjoint splits and attribute
//! histograms.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, SymmetricEigen};
use petgraph::unionfind::UnionFind;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.4;
pub const DEFAULT_CLIP_LEN: usize = 50;
pub const DEFAULT_CROP: u32 = 512;
pub const DEFAULT_TRAIN_FRAC: f64 = 0.9;

const NORM_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityRecord {
    pub video_id: String,
    pub embedding: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ClusterMode {
    /// Connected components of the thresholded cosine-similarity graph.
    #[default]
    Components,
    /// Components, then recursive spectral bisection of any component whose
    /// normalized-Laplacian Fiedler value falls below `min_connectivity`.
    Spectral { min_connectivity: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Clustering {
    /// Cluster id per video id. Ids are numbered by each cluster's smallest
    /// video id, so the result does not depend on input order.
    pub assignment: BTreeMap<String, usize>,
    /// One retained video per cluster (its smallest video id).
    pub representatives: Vec<String>,
}

impl Clustering {
    pub fn n_clusters(&self) -> usize {
        self.representatives.len()
    }

    pub fn members(&self, cluster: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, &c)| c == cluster)
            .map(|(v, _)| v.as_str())
            .collect()
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn validate_records(records: &[IdentityRecord]) -> Result<()> {
    let dim = records.first().map_or(0, |r| r.embedding.len());
    let mut seen = BTreeSet::new();
    for r in records {
        if r.embedding.len() != dim || dim == 0 {
            return Err(Error::Validation(format!(
                "embedding of {} has dimension {}, expected {dim}",
                r.video_id,
                r.embedding.len()
            )));
        }
        let norm = r.embedding.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::Validation(format!(
                "embedding of {} has norm {norm}, expected 1",
                r.video_id
            )));
        }
        if !seen.insert(r.video_id.as_str()) {
            return Err(Error::Validation(format!("duplicate video id {}", r.video_id)));
        }
    }
    Ok(())
}

pub fn cluster_identities(
    records: &[IdentityRecord],
    threshold: f64,
    mode: ClusterMode,
) -> Result<Clustering> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::param(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    validate_records(records)?;

    // Work in video-id order so every later step is order independent.
    let mut order: Vec<&IdentityRecord> = records.iter().collect();
    order.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    let n = order.len();

    let mut uf = UnionFind::<usize>::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if cosine(&order[i].embedding, &order[j].embedding) >= threshold {
                uf.union(i, j);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        groups.entry(uf.find(i)).or_default().push(i);
    }
    let mut parts: Vec<Vec<usize>> = groups.into_values().collect();

    if let ClusterMode::Spectral { min_connectivity } = mode {
        let mut refined = Vec::new();
        for p in parts {
            bisect(&order, p, threshold, min_connectivity, &mut refined);
        }
        parts = refined;
    }

    // Members are sorted, so the first member carries the smallest video id.
    parts.iter_mut().for_each(|p| p.sort_unstable());
    parts.sort_by_key(|p| p[0]);
    let mut assignment = BTreeMap::new();
    let mut representatives = Vec::with_capacity(parts.len());
    for (cid, p) in parts.iter().enumerate() {
        representatives.push(order[p[0]].video_id.clone());
        for &i in p {
            assignment.insert(order[i].video_id.clone(), cid);
        }
    }
    Ok(Clustering {
        assignment,
        representatives,
    })
}

fn bisect(
    order: &[&IdentityRecord],
    members: Vec<usize>,
    threshold: f64,
    min_connectivity: f64,
    out: &mut Vec<Vec<usize>>,
) {
    let m = members.len();
    if m < 3 {
        out.push(members);
        return;
    }
    let mut w = DMatrix::<f64>::zeros(m, m);
    for a in 0..m {
        for b in a + 1..m {
            let s = cosine(&order[members[a]].embedding, &order[members[b]].embedding);
            if s >= threshold {
                w[(a, b)] = s;
                w[(b, a)] = s;
            }
        }
    }
    let deg: Vec<f64> = (0..m).map(|a| w.row(a).sum()).collect();
    let mut lap = DMatrix::<f64>::identity(m, m);
    for a in 0..m {
        for b in 0..m {
            if a != b && w[(a, b)] != 0.0 {
                lap[(a, b)] = -w[(a, b)] / (deg[a] * deg[b]).sqrt();
            }
        }
    }
    let eig = SymmetricEigen::new(lap);
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let fiedler_val = eig.eigenvalues[idx[1]];
    if fiedler_val >= min_connectivity {
        out.push(members);
        return;
    }
    let vec = eig.eigenvectors.column(idx[1]);
    // Eigenvector sign is arbitrary; the partition itself is not.
    let (left, right): (Vec<usize>, Vec<usize>) =
        (0..m).partition(|&a| vec[a] / deg[a].sqrt() < 0.0);
    if left.is_empty() || right.is_empty() {
        out.push(members);
        return;
    }
    let pick = |side: Vec<usize>| side.into_iter().map(|a| members[a]).collect::<Vec<_>>();
    bisect(order, pick(left), threshold, min_connectivity, out);
    bisect(order, pick(right), threshold, min_connectivity, out);
}

/// Pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CropReject {
    Degenerate,
    InsufficientResolution,
    DoesNotFit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CropDecision {
    Accept,
    Reject(CropReject),
}

/// Decides whether a detected region yields a square `target x target`
/// crop. The crop is the square spanned by the longer box side, which must
/// reach `target` pixels and fit inside the frame.
pub fn validate_crop(frame_size: (u32, u32), bbox: BoundingBox, target: u32) -> Result<CropDecision> {
    let (fw, fh) = (frame_size.0 as i64, frame_size.1 as i64);
    if bbox.x0 < 0 || bbox.y0 < 0 || bbox.x1 > fw || bbox.y1 > fh {
        return Err(Error::Validation(format!(
            "box {bbox:?} exceeds {fw}x{fh} frame"
        )));
    }
    let (bw, bh) = (bbox.x1 - bbox.x0, bbox.y1 - bbox.y0);
    if bw <= 0 || bh <= 0 {
        return Ok(CropDecision::Reject(CropReject::Degenerate));
    }
    let side = bw.max(bh);
    if side < target as i64 {
        return Ok(CropDecision::Reject(CropReject::InsufficientResolution));
    }
    if side > fw.min(fh) {
        return Ok(CropDecision::Reject(CropReject::DoesNotFit));
    }
    Ok(CropDecision::Accept)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub video_id: String,
    pub start_frame: usize,
    pub length: usize,
    pub valid: bool,
}

/// Cuts each maximal run of pose-valid frames into `clip_len` pieces and
/// drops the remainder. Frames past the end of `pose_valid` count as invalid.
pub fn segment_clips(
    video_id: &str,
    video_len: usize,
    clip_len: usize,
    pose_valid: &[bool],
) -> Result<Vec<ClipRecord>> {
    if clip_len == 0 {
        return Err(Error::param("clip length must be at least 1"));
    }
    let mut clips = Vec::new();
    let mut k = 0;
    while k < video_len {
        if !pose_valid.get(k).copied().unwrap_or(false) {
            k += 1;
            continue;
        }
        let start = k;
        while k < video_len && pose_valid.get(k).copied().unwrap_or(false) {
            k += 1;
        }
        let run = k - start;
        for c in 0..run / clip_len {
            clips.push(ClipRecord {
                video_id: video_id.to_string(),
                start_frame: start + c * clip_len,
                length: clip_len,
                valid: true,
            });
        }
    }
    Ok(clips)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Split {
    pub train_clusters: Vec<usize>,
    pub test_clusters: Vec<usize>,
    pub train_clips: Vec<ClipRecord>,
    pub test_clips: Vec<ClipRecord>,
}

/// Splits at cluster level, so every clip of an identity lands on the same
/// side. Clips whose video is not in `clusters` are an error.
pub fn split_identities(
    clusters: &Clustering,
    clips: &[ClipRecord],
    train_frac: f64,
    seed: u64,
) -> Result<Split> {
    let n = clusters.n_clusters();
    if n < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 identity clusters to split, got {n}"
        )));
    }
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::param(format!(
            "train fraction must lie in (0, 1), got {train_frac}"
        )));
    }
    let n_train = ((n as f64 * train_frac).round() as usize).clamp(1, n - 1);
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train_clusters = ids[..n_train].to_vec();
    let mut test_clusters = ids[n_train..].to_vec();
    train_clusters.sort_unstable();
    test_clusters.sort_unstable();

    let train_set: BTreeSet<usize> = train_clusters.iter().copied().collect();
    let mut train_clips = Vec::new();
    let mut test_clips = Vec::new();
    for clip in clips {
        let cid = clusters.assignment.get(&clip.video_id).ok_or_else(|| {
            Error::Validation(format!("clip video {} has no identity cluster", clip.video_id))
        })?;
        if train_set.contains(cid) {
            train_clips.push(clip.clone());
        } else {
            test_clips.push(clip.clone());
        }
    }
    Ok(Split {
        train_clusters,
        test_clusters,
        train_clips,
        test_clips,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeRecord {
    pub attribute: String,
    pub label: String,
}

pub const OTHER_LABEL: &str = "other";

/// Known labels per attribute. Labels outside the vocabulary are counted
/// under [`OTHER_LABEL`]; attributes with no vocabulary keep every label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary(pub BTreeMap<String, BTreeSet<String>>);

impl Default for Vocabulary {
    fn default() -> Self {
        let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        Vocabulary(BTreeMap::from([
            ("gender".to_string(), set(&["female", "male"])),
            (
                "age".to_string(),
                set(&["0-17", "18-29", "30-44", "45-59", "60+"]),
            ),
            (
                "expression".to_string(),
                set(&[
                    "angry", "disgust", "fear", "happy", "neutral", "sad", "surprise",
                ]),
            ),
        ]))
    }
}

/// Normalized histogram per attribute.
pub type DemographicReport = BTreeMap<String, BTreeMap<String, f64>>;

pub fn demographic_report<I>(records: I, vocab: &Vocabulary) -> Result<DemographicReport>
where
    I: IntoIterator<Item = AttributeRecord>,
{
    let mut counts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for r in records {
        let label = match vocab.0.get(&r.attribute) {
            Some(known) if !known.contains(&r.label) => OTHER_LABEL.to_string(),
            _ => r.label,
        };
        *counts.entry(r.attribute).or_default().entry(label).or_default() += 1;
    }
    if counts.is_empty() {
        return Err(Error::Validation("no attribute records".into()));
    }
    Ok(counts
        .into_iter()
        .map(|(attr, hist)| {
            let total: usize = hist.values().sum();
            let norm = hist
                .into_iter()
                .map(|(l, c)| (l, c as f64 / total as f64))
                .collect();
            (attr, norm)
        })
        .collect())
}
