use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::curation::BoundingBox;
use crate::error::{Error, Result};
use crate::experiment::make_suite;
use crate::io::config::{ExperimentConfig, SynthConfig};
use crate::io::frames::write_frames;
use crate::io::manifest::{write_jsonl, CurationRecord, VideoRecord};
use crate::toy::scene::DEFAULT_FPS;

const EMBEDDING_DIM: usize = 64;

pub(super) fn run(cfg: &ExperimentConfig) -> Result<()> {
    let s = &cfg.synth;
    let root = &cfg.paths.data;
    let mut records = Vec::new();
    for (split, n, seed) in [
        ("train", s.n_train, s.seed),
        ("val", s.n_val, s.seed.wrapping_add(1)),
    ] {
        for (i, (spec, clip)) in make_suite(&s.scene, n, s.n_frames, seed)?.into_iter().enumerate() {
            let id = format!("{split}_{i:04}");
            write_frames(&root.join(split).join(&id), &clip.frames)?;
            records.push(VideoRecord {
                video_id: id,
                split: split.into(),
                n_frames: clip.len(),
                fps: DEFAULT_FPS,
                scene: spec,
            });
        }
    }
    write_jsonl(&root.join("manifest.jsonl"), &records)?;
    write_jsonl(&root.join("curation.jsonl"), &curation_fixture(s)?)?;
    eprintln!(
        "wrote {} train and {} val clips to {}",
        s.n_train,
        s.n_val,
        root.display()
    );
    Ok(())
}

/// Raw-video records with planted identities: each identity owns one axis
/// of the embedding space and its videos scatter around it, so clustering
/// at the default threshold recovers exactly the planted groups.
pub(super) fn curation_fixture(s: &SynthConfig) -> Result<Vec<CurationRecord>> {
    if s.identities == 0 || s.identities > EMBEDDING_DIM {
        return Err(Error::Config(format!(
            "synth.identities must lie in 1..={EMBEDDING_DIM}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed.wrapping_add(2));
    let genders = ["female", "male"];
    let ages = ["18-29", "30-44", "45-59", "60+"];
    let expressions = ["happy", "neutral", "sad", "surprise", "unlabelled"];
    let frame_size = (1280u32, 720u32);
    let mut out = Vec::new();
    for ident in 0..s.identities {
        let gender = *genders.choose(&mut rng).expect("non-empty");
        let age = *ages.choose(&mut rng).expect("non-empty");
        for v in 0..s.videos_per_identity {
            let mut e: Vec<f64> = (0..EMBEDDING_DIM)
                .map(|_| 0.08 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            e[ident] += 1.0;
            let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
            e.iter_mut().for_each(|x| *x /= norm);

            let side = rng.random_range(380..700i64);
            let x0 = rng.random_range(0..=(frame_size.0 as i64 - side));
            let y0 = rng.random_range(0..=(frame_size.1 as i64 - side.min(frame_size.1 as i64)));
            let bbox = BoundingBox {
                x0,
                y0,
                x1: x0 + side,
                y1: (y0 + side).min(frame_size.1 as i64),
            };

            let len = rng.random_range(60..240usize);
            let mut pose_valid = vec![true; len];
            for _ in 0..rng.random_range(0..3) {
                let at = rng.random_range(0..len);
                let gap = rng.random_range(1..12usize);
                pose_valid[at..(at + gap).min(len)].fill(false);
            }
            out.push(CurationRecord {
                video_id: format!("raw_{ident:03}_{v:02}"),
                embedding: e,
                frame_size,
                bbox,
                pose_valid,
                attributes: BTreeMap::from([
                    ("gender".to_string(), gender.to_string()),
                    ("age".to_string(), age.to_string()),
                    (
                        "expression".to_string(),
                        expressions.choose(&mut rng).expect("non-empty").to_string(),
                    ),
                ]),
            });
        }
    }
    Ok(out)
}
