//! Properties of the trained toy model. Training is shared between tests.

use std::sync::OnceLock;

use clcgen::diffusion::{NoiseSchedule, ScheduleConfig};
use clcgen::experiment::{animate, make_suite};
use clcgen::sampler::FeedbackConfig;
use clcgen::toy::*;
use clcgen::video::{Frame, VideoClip};

struct Fixture {
    net: ToyDenoiser,
    sched: NoiseSchedule,
    report: TrainReport,
    suite: Vec<(SceneSpec, VideoClip)>,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let sched = ScheduleConfig::default().build().unwrap();
        let codec = BlockCodec::default();
        let sampler = SceneSampler::default();
        let prep = |v: Vec<(SceneSpec, VideoClip)>| -> Vec<PreparedClip> {
            v.iter().map(|(_, c)| PreparedClip::new(&codec, c).unwrap()).collect()
        };
        let train = prep(make_suite(&sampler, 100, 50, 1000).unwrap());
        let val = prep(make_suite(&sampler, 5, 50, 77).unwrap());
        let hyper = ToyHyper::default();
        let (net, report) = train_toy(&train, Some(&val), &codec, &sched, &hyper).unwrap();
        Fixture {
            net,
            sched,
            report,
            suite: make_suite(&sampler, 6, 50, 2024).unwrap(),
        }
    })
}

#[test]
fn validation_loss_decreases_early() {
    let v = &fixture().report.validation;
    assert!(v.len() >= 3, "{v:?}");
    assert!(v[0].1 > v[1].1 && v[1].1 > v[2].1, "{v:?}");
}

#[test]
fn overfits_a_single_clip() {
    let sched = ScheduleConfig::default().build().unwrap();
    let codec = BlockCodec::default();
    let (_, clip) = make_suite(&SceneSampler::default(), 1, 50, 5).unwrap().remove(0);
    let p = vec![PreparedClip::new(&codec, &clip).unwrap()];
    let hyper = ToyHyper {
        steps: 2000,
        eval_every: 1000,
        ..ToyHyper::default()
    };
    let (_, rep) = train_toy(&p, Some(&p), &codec, &sched, &hyper).unwrap();
    let (first, last) = (rep.validation[0].1, rep.validation.last().unwrap().1);
    assert!(last < 0.1 * first, "{:?}", rep.validation);
}

#[test]
fn generated_shape_follows_the_driving_keypoints() {
    let f = fixture();
    let cfg = FeedbackConfig::default();
    let mut total = 0.0;
    let mut n = 0;
    for (spec, clip) in &f.suite {
        let gen = animate(&f.net, &f.sched, &cfg, &clip.frames[0], &clip.frames).unwrap();
        for (k, frame) in gen.frames.iter().enumerate() {
            let c = shape_centroid(frame).expect("shape detected in every frame");
            let p = spec.trajectory.at(k);
            total += ((c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2)).sqrt();
            n += 1;
        }
    }
    let mean = total / n as f64;
    assert!(mean < 2.0, "mean keypoint error {mean:.3} px");
}

fn mean_shape_color(frame: &Frame) -> Option<[f64; 3]> {
    let mut sum = [0.0; 3];
    let mut n = 0;
    for (px, hit) in frame.data().chunks_exact(3).zip(detect(frame)) {
        if hit {
            for c in 0..3 {
                sum[c] += px[c] as f64;
            }
            n += 1;
        }
    }
    (n > 0).then(|| sum.map(|s| s / n as f64))
}

#[test]
fn appearance_transfers_across_videos() {
    let f = fixture();
    let cfg = FeedbackConfig::default();
    let mut worst = 0.0f64;
    for i in 0..f.suite.len() {
        let (src_spec, src) = &f.suite[i];
        let (_, drv) = &f.suite[(i + 1) % f.suite.len()];
        let gen = animate(&f.net, &f.sched, &cfg, &src.frames[0], &drv.frames).unwrap();
        for frame in &gen.frames {
            let m = mean_shape_color(frame).expect("shape detected");
            for c in 0..3 {
                worst = worst.max((m[c] - src_spec.color[c]).abs());
            }
        }
    }
    assert!(worst <= 10.0, "worst per-channel color error {worst:.2}");
}
