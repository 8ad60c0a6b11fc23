//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. The trained-model criteria share one toy model.

use std::alloc::{GlobalAlloc, Layout, System};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicIsize, Ordering};
use std::time::Instant;

use clcgen::curation::{cluster_identities, segment_clips, split_identities, ClipRecord, ClusterMode, IdentityRecord};
use clcgen::diffusion::{add_noise, ddim_step, v_from_eps_z0, z0_eps_from_v, NoiseSchedule, ScheduleConfig};
use clcgen::experiment::{make_suite, suite_tje, sweep_beta, DEFAULT_BETA_GRID};
use clcgen::latent::{LatentGrid, Shape};
use clcgen::metrics::{akd_adjust, psnr_float, psnr_int, tje, DEFAULT_DELTAS};
use clcgen::sampler::{
    feedback_update, generate_unbounded, generate_video, ConditioningBundle, FeedbackConfig, NoiseMode,
};
use clcgen::toy::{appearance, motion, train_toy, BlockCodec, PreparedClip, SceneSampler, ToyDenoiser, ToyHyper};
use clcgen::video::{Frame, VideoClip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Tracks live heap bytes so the streaming criterion can check that memory
/// stays flat.
struct Counting;

static LIVE: AtomicIsize = AtomicIsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, l: Layout) -> *mut u8 {
        LIVE.fetch_add(l.size() as isize, Ordering::Relaxed);
        System.alloc(l)
    }

    unsafe fn dealloc(&self, p: *mut u8, l: Layout) {
        LIVE.fetch_sub(l.size() as isize, Ordering::Relaxed);
        System.dealloc(p, l)
    }

    unsafe fn realloc(&self, p: *mut u8, l: Layout, new: usize) -> *mut u8 {
        LIVE.fetch_add(new as isize - l.size() as isize, Ordering::Relaxed);
        System.realloc(p, l, new)
    }
}

#[global_allocator]
static ALLOC: Counting = Counting;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_grid(rng: &mut ChaCha8Rng, shape: Shape) -> LatentGrid {
    LatentGrid::standard_normal(shape, rng)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn feedback_geometry() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let shape = Shape::new(4, 8, 8, 1).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let zt = random_grid(&mut rng, shape);
        let z0 = random_grid(&mut rng, shape);
        let beta: f64 = rng.random_range(0.0..=1.0);
        let x = feedback_update(&zt, &z0, beta).unwrap();
        let ratio = dist(x.data(), zt.data()) / dist(z0.data(), zt.data());
        worst = worst.max((ratio - beta).abs());
    }
    let zt = random_grid(&mut rng, shape);
    let z0 = random_grid(&mut rng, shape);
    let ends = feedback_update(&zt, &z0, 0.0).unwrap() == zt && feedback_update(&zt, &z0, 1.0).unwrap() == z0;
    let secs = t0.elapsed().as_secs_f64();
    check(
        worst <= 1e-9 && ends && secs < 1.0,
        format!("max |ratio - beta| {worst:.2e}, endpoints exact {ends}, {secs:.3}s"),
    )
}

fn ddim_inversion() -> Outcome {
    let t0 = Instant::now();
    let sched = ScheduleConfig::default().build().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let shape = Shape::new(3, 16, 16, 1).unwrap();
    let z0: Vec<f64> = (0..shape.len()).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut z: Vec<f64> = random_grid(&mut rng, shape).into_data();
    let steps = sched.ddim_steps().to_vec();
    let ab = sched.alpha_bars();
    for (i, &t) in steps.iter().enumerate() {
        let (a, s) = (ab[t].sqrt(), (1.0 - ab[t]).sqrt());
        // Exact v for the known clean latent, written out by hand.
        let v: Vec<f64> = z.iter().zip(&z0).map(|(zi, ci)| a * (zi - a * ci) / s - s * ci).collect();
        let next = steps.get(i + 1).copied().unwrap_or(0);
        let zg = LatentGrid::new(shape, z).unwrap();
        let vg = LatentGrid::new(shape, v).unwrap();
        z = ddim_step(&zg, &vg, t, next, &sched).unwrap().into_data();
    }
    let err = z.iter().zip(&z0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let secs = t0.elapsed().as_secs_f64();
    check(
        err <= 1e-5 && steps.len() == 30 && secs < 1.0,
        format!("{} steps, max-abs error {err:.2e}, {secs:.3}s", steps.len()),
    )
}

fn parameterization_triangle() -> Outcome {
    let sched = ScheduleConfig::default().build().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let shape = Shape::new(1, 1, 4, 1).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let t = rng.random_range(1..=sched.t_train());
        let z0 = random_grid(&mut rng, shape);
        let eps = random_grid(&mut rng, shape);
        let zt = add_noise(&z0, &eps, t, &sched).unwrap();
        let v = v_from_eps_z0(&eps, &z0, t, &sched).unwrap();
        let (z0h, epsh) = z0_eps_from_v(&zt, &v, t, &sched).unwrap();
        let ab = sched.alpha_bars()[t];
        for i in 0..4 {
            let expect_v = ab.sqrt() * eps.data()[i] - (1.0 - ab).sqrt() * z0.data()[i];
            worst = worst
                .max((v.data()[i] - expect_v).abs())
                .max((z0h.data()[i] - z0.data()[i]).abs())
                .max((epsh.data()[i] - eps.data()[i]).abs());
        }
    }
    check(worst <= 1e-6, format!("10000 cases, max error {worst:.2e}"))
}

fn random_clip(rng: &mut ChaCha8Rng, w: usize, h: usize, n: usize) -> VideoClip {
    let frames = (0..n)
        .map(|_| Frame::new(w, h, (0..w * h * 3).map(|_| rng.random()).collect()).unwrap())
        .collect();
    VideoClip::new(frames, 20.0).unwrap()
}

/// TJE by explicit loops over time, rows, columns and channels.
fn tje_naive(real: &VideoClip, gen: &VideoClip, delta: usize) -> f64 {
    let n = real.len();
    let (w, h) = (real.frames[0].width(), real.frames[0].height());
    let mut total = 0.0;
    for t in 0..n - delta {
        let mut s = 0.0;
        for y in 0..h {
            for x in 0..w {
                let (r0, r1) = (real.frames[t].pixel(x, y), real.frames[t + delta].pixel(x, y));
                let (g0, g1) = (gen.frames[t].pixel(x, y), gen.frames[t + delta].pixel(x, y));
                for c in 0..3 {
                    let dr = r1[c] as f64 - r0[c] as f64;
                    let dg = g1[c] as f64 - g0[c] as f64;
                    s += (dr - dg).abs();
                }
            }
        }
        total += s / (w * h * 3) as f64;
    }
    total / (n - delta) as f64
}

fn tje_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut self_zero = true;
    for _ in 0..50 {
        let a = random_clip(&mut rng, 8, 8, 5);
        let b = random_clip(&mut rng, 8, 8, 5);
        for d in [1, 2, 4] {
            worst = worst.max((tje(&a, &b, d).unwrap().mean_error - tje_naive(&a, &b, d)).abs());
            self_zero &= tje(&a, &a, d).unwrap().mean_error == 0.0;
        }
    }
    check(
        worst <= 1e-9 && self_zero,
        format!("50 clips x 3 offsets, max deviation {worst:.2e}, self-TJE zero {self_zero}"),
    )
}

fn psnr_overflow() -> Outcome {
    let black = Frame::filled(16, 16, [0; 3]).unwrap();
    let white = Frame::filled(16, 16, [255; 3]).unwrap();
    let pf = psnr_float(&black, &white).unwrap();
    let pi = psnr_int(&black, &white).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let a: Vec<u8> = (0..768).map(|_| rng.random_range(15..=240)).collect();
        let b: Vec<u8> = a.iter().map(|&x| (x as i32 + rng.random_range(-15..=15)) as u8).collect();
        let (fa, fb) = (Frame::new(16, 16, a).unwrap(), Frame::new(16, 16, b).unwrap());
        let (x, y) = (psnr_float(&fa, &fb).unwrap(), psnr_int(&fa, &fb).unwrap());
        if x.is_finite() {
            worst = worst.max((x - y).abs());
        }
    }
    check(
        pf.abs() < 1e-12 && (pi - 48.13).abs() <= 0.01 && worst <= 1e-9,
        format!("0 vs 255: float {pf:.3} dB, int {pi:.3} dB; |diff|<=15 max gap {worst:.2e}"),
    )
}

fn akd_fixtures() -> Outcome {
    let a = akd_adjust(1.45, 1.45 / 1.523).unwrap();
    let b = akd_adjust(2.91, 2.91 / 10.070).unwrap();
    let r3 = |x: f64| (x * 1000.0).round() / 1000.0;
    check(r3(a) == 1.523 && r3(b) == 10.070, format!("{a:.3}, {b:.3}"))
}

struct Trained {
    net: ToyDenoiser,
    sched: NoiseSchedule,
    suite: Vec<VideoClip>,
    train_secs: f64,
}

/// Same data as `clcgen make-synth` with default settings: 100 training
/// clips from seed 1000 and a 10-video validation suite from seed 1001.
fn train_shared() -> Trained {
    let t0 = Instant::now();
    let sched = ScheduleConfig::default().build().unwrap();
    let sampler = SceneSampler::default();
    let codec = BlockCodec::default();
    let prep = |clips: Vec<(clcgen::toy::SceneSpec, VideoClip)>| -> Vec<PreparedClip> {
        clips.iter().map(|(_, c)| PreparedClip::new(&codec, c).unwrap()).collect()
    };
    let train = prep(make_suite(&sampler, 100, 50, 1000).unwrap());
    let suite: Vec<VideoClip> = make_suite(&sampler, 10, 50, 1001).unwrap().into_iter().map(|(_, c)| c).collect();
    let hyper = ToyHyper::default();
    let (net, _) = train_toy(&train, None, &codec, &sched, &hyper).unwrap();
    Trained {
        net,
        sched,
        suite,
        train_secs: t0.elapsed().as_secs_f64(),
    }
}

fn mean_col(table: &[Vec<f64>], col: usize) -> f64 {
    table.iter().map(|r| r[col]).sum::<f64>() / table.len() as f64
}

fn clc_ablation(m: &Trained) -> Outcome {
    let t0 = Instant::now();
    let base = FeedbackConfig::default();
    let off = suite_tje(&m.net, &m.sched, &FeedbackConfig { beta: 0.0, ..base.clone() }, &m.suite, &[4]).unwrap();
    let on = suite_tje(&m.net, &m.sched, &FeedbackConfig { beta: 0.05, ..base }, &m.suite, &[4]).unwrap();
    let wins = off.iter().zip(&on).filter(|(a, b)| b[0] < a[0]).count();
    let (m0, m5) = (mean_col(&off, 0), mean_col(&on, 0));
    let gain = 1.0 - m5 / m0;
    let secs = m.train_secs + t0.elapsed().as_secs_f64();
    check(
        wins >= 8 && gain >= 0.20 && secs <= 900.0,
        format!(
            "TJE(4) beta 0: {m0:.3}, beta 0.05: {m5:.3}; better on {wins}/10, improvement {:.1}%, {secs:.0}s with training",
            100.0 * gain
        ),
    )
}

fn beta_sweep(m: &Trained) -> Outcome {
    let sweep = sweep_beta(&m.net, &m.sched, &FeedbackConfig::default(), &m.suite, &DEFAULT_BETA_GRID, &DEFAULT_DELTAS)
        .unwrap();
    let obj = |b: f64| sweep.rows.iter().find(|r| r.beta == b).unwrap().objective;
    let ratio = obj(0.2) / obj(0.05);
    let objs: Vec<String> = sweep.rows.iter().map(|r| format!("{}:{:.3}", r.beta, r.objective)).collect();
    check(
        [0.01, 0.05, 0.1].contains(&sweep.selected) && ratio >= 1.3,
        format!("selected {}, obj(0.2)/obj(0.05) = {ratio:.2} [{}]", sweep.selected, objs.join(" ")),
    )
}

fn noise_modes(m: &Trained) -> Outcome {
    let fixed = FeedbackConfig::default();
    let indep = FeedbackConfig {
        noise_mode: NoiseMode::Independent,
        ..fixed.clone()
    };
    let f = mean_col(&suite_tje(&m.net, &m.sched, &fixed, &m.suite, &[1]).unwrap(), 0);
    let i = mean_col(&suite_tje(&m.net, &m.sched, &indep, &m.suite, &[1]).unwrap(), 0);
    check(i > f, format!("TJE(1) fixed {f:.3}, independent {i:.3}"))
}

fn unbounded(m: &Trained) -> Outcome {
    let clip = &m.suite[0];
    let codec = m.net.codec();
    let app = appearance(&clip.frames[0]).to_vec();
    let motions: Vec<LatentGrid> = clip.frames.iter().map(|f| motion(codec, f).unwrap()).collect();
    let cfg = FeedbackConfig::default();
    let batch = generate_video(
        &m.net,
        codec,
        &ConditioningBundle {
            appearance: app.clone(),
            motion: motions.clone(),
        },
        &m.sched,
        &cfg,
        50,
    )
    .unwrap();

    let mut gen = generate_unbounded(
        &m.net,
        codec,
        &app,
        motions.iter().cycle().take(1000).cloned(),
        m.net.shape(),
        &m.sched,
        &cfg,
    )
    .unwrap();
    let mut same = true;
    let (mut live_100, mut growth) = (0isize, 0isize);
    let mut n = 0;
    for frame in gen.by_ref() {
        let frame = frame.unwrap();
        if n < 50 {
            same &= frame == batch.frames[n];
        }
        drop(frame);
        n += 1;
        let live = LIVE.load(Ordering::Relaxed);
        if n == 100 {
            live_100 = live;
        } else if n > 100 {
            growth = growth.max(live - live_100);
        }
    }
    let peak = gen.peak_resident();
    check(
        n == 1000 && peak <= 3 && same && growth < 64 * 1024,
        format!(
            "{n} frames, peak resident grids {peak}, first 50 match batch {same}, heap growth after frame 100: {growth} bytes"
        ),
    )
}

fn curation() -> Outcome {
    let unit = |deg: f64| vec![deg.to_radians().cos(), deg.to_radians().sin()];
    let records: Vec<IdentityRecord> = [0.0, 8.0, 15.0, 85.0, 93.0, 100.0]
        .iter()
        .enumerate()
        .map(|(i, &d)| IdentityRecord {
            video_id: format!("v{i}"),
            embedding: unit(d),
        })
        .collect();
    let clustering = cluster_identities(&records, 0.4, ClusterMode::Components).unwrap();
    let k = clustering.n_clusters();

    let clips: Vec<ClipRecord> = records
        .iter()
        .flat_map(|r| segment_clips(&r.video_id, 150, 50, &[true; 150]).unwrap())
        .collect();
    let mut disjoint = true;
    for seed in 0..100 {
        let split = split_identities(&clustering, &clips, 0.5, seed).unwrap();
        let ids = |cs: &[ClipRecord]| -> std::collections::BTreeSet<usize> {
            cs.iter().map(|c| clustering.assignment[&c.video_id]).collect()
        };
        disjoint &= ids(&split.train_clips).is_disjoint(&ids(&split.test_clips));
    }
    let seg = segment_clips("x", 120, 50, &[true; 120]).unwrap();
    let two = seg.len() == 2 && seg.iter().all(|c| c.length == 50);
    check(
        k == 2 && disjoint && two,
        format!("{k} identities, disjoint over 100 seeds {disjoint}, 120 frames -> {} clips", seg.len()),
    )
}

fn hash_tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn cli_determinism() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_clcgen");
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "[synth]\nn_train = 3\nn_val = 2\nn_frames = 12\n\n[train]\nsteps = 40\neval_every = 20\n\n\
         [sweep]\nbetas = [0.0, 0.05]\n\n[evaluate]\nplot = true\n",
    )
    .unwrap();
    let commands = ["make-synth", "train", "animate", "evaluate", "sweep-beta", "curate", "plot"];
    let mut differing = Vec::new();
    for cmd in commands {
        let mut trees = Vec::new();
        for _ in 0..2 {
            let st = Command::new(exe).arg("-c").arg(&cfg).arg(cmd).output().unwrap();
            if !st.status.success() {
                return Err(format!("{cmd} failed: {}", String::from_utf8_lossy(&st.stderr)));
            }
            trees.push(hash_tree(dir.path()));
        }
        if trees[0] != trees[1] {
            differing.push(cmd);
        }
    }
    let n_files = hash_tree(dir.path()).len();
    check(
        differing.is_empty(),
        format!("{} commands run twice over {n_files} files; differing: {differing:?}", commands.len()),
    )
}

/// Runs one criterion, turning a panic into a failure.
fn run(name: &'static str, f: impl FnOnce() -> Outcome) -> (&'static str, Outcome) {
    let r = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    (name, r)
}

fn main() {
    let mut results = vec![
        run("feedback update geometry", feedback_geometry),
        run("DDIM oracle inversion", ddim_inversion),
        run("v / eps / z0 triangle", parameterization_triangle),
        run("TJE oracle equivalence", tje_oracle),
        run("PSNR overflow reproduction", psnr_overflow),
        run("AKD adjustment fixtures", akd_fixtures),
        run("curation", curation),
    ];
    let model = train_shared();
    results.push(run("CLC ablation trend", || clc_ablation(&model)));
    results.push(run("beta sweep shape", || beta_sweep(&model)));
    results.push(run("noise-mode ablation", || noise_modes(&model)));
    results.push(run("unbounded generation", || unbounded(&model)));
    results.push(run("CLI determinism", cli_determinism));

    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(d) => println!("PASS {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL {name}: {d}")
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
