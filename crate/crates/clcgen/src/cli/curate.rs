use std::collections::BTreeMap;

use serde::Serialize;

use crate::curation::{
    cluster_identities, demographic_report, segment_clips, split_identities, validate_crop, AttributeRecord,
    CropDecision, IdentityRecord, Vocabulary,
};
use crate::error::Result;
use crate::io::config::ExperimentConfig;
use crate::io::manifest::{read_jsonl, write_json, write_jsonl, CurationRecord};

#[derive(Serialize)]
struct ClusterReport {
    n_identities: usize,
    threshold: f64,
    clusters: Vec<Vec<String>>,
}

pub(super) fn run(cfg: &ExperimentConfig) -> Result<()> {
    let c = &cfg.curate;
    let records: Vec<CurationRecord> = read_jsonl(&cfg.curation_manifest()).map_err(|e| e.in_stage("load"))?;

    let ids: Vec<IdentityRecord> = records
        .iter()
        .map(|r| IdentityRecord {
            video_id: r.video_id.clone(),
            embedding: r.embedding.clone(),
        })
        .collect();
    let clustering = cluster_identities(&ids, c.threshold, c.clustering).map_err(|e| e.in_stage("cluster"))?;

    let mut crops = BTreeMap::new();
    let mut clips = Vec::new();
    let mut attributes = Vec::new();
    for r in &records {
        let decision = validate_crop(r.frame_size, r.bbox, c.crop).map_err(|e| e.in_stage("crop"))?;
        crops.insert(r.video_id.clone(), decision);
        if decision != CropDecision::Accept {
            continue;
        }
        let vc = segment_clips(&r.video_id, r.pose_valid.len(), c.clip_len, &r.pose_valid)
            .map_err(|e| e.in_stage("segment"))?;
        if !vc.is_empty() {
            attributes.extend(r.attributes.iter().map(|(a, l)| AttributeRecord {
                attribute: a.clone(),
                label: l.clone(),
            }));
        }
        clips.extend(vc);
    }
    let split = split_identities(&clustering, &clips, c.train_frac, c.seed).map_err(|e| e.in_stage("split"))?;
    let demographics =
        demographic_report(attributes, &Vocabulary::default()).map_err(|e| e.in_stage("demographics"))?;

    let out = cfg.paths.output.join("curate");
    write_json(
        &out.join("clusters.json"),
        &ClusterReport {
            n_identities: clustering.n_clusters(),
            threshold: c.threshold,
            clusters: (0..clustering.n_clusters())
                .map(|k| clustering.members(k).into_iter().map(String::from).collect())
                .collect(),
        },
    )?;
    write_json(&out.join("crops.json"), &crops)?;
    write_jsonl(&out.join("clips.jsonl"), &clips)?;
    write_json(&out.join("split.json"), &split)?;
    write_json(&out.join("demographics.json"), &demographics)?;
    eprintln!(
        "{} videos, {} identities, {} clips ({} train / {} test)",
        records.len(),
        clustering.n_clusters(),
        clips.len(),
        split.train_clips.len(),
        split.test_clips.len()
    );
    Ok(())
}
