//! Acceptance criteria 1–10. Runs as a plain binary (no libtest harness) so
//! that every criterion prints exactly one PASS/FAIL line.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use cogesture::bvh::{parse_bvh, write_bvh, DEFAULT_PRECISION};
use cogesture::checkpoint::Checkpoint;
use cogesture::dataset::{synthesize_toy_corpus, Dataset, ToyCorpusConfig};
use cogesture::diffusion::{
    generate_long, sample_segment, Guidance, LongOptions, SamplerMode, SegmentInputs,
};
use cogesture::features::{build_features, FeatureLayout, FeatureNormalizer};
use cogesture::nn::gradcheck::check_all;
use cogesture::nn::{Denoiser, ModelConfig};
use cogesture::selfcheck::{fgd_checks, forward_diffusion_moments, guidance_checks, rotation_checks, CheckResult};
use cogesture_cli::commands::{cmd_preprocess, cmd_sample, cmd_train, SampleRequest};
use cogesture_cli::config::RunConfig;
use ndarray::{s, Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TINY_TOML: &str = include_str!("../../../configs/tiny.toml");

// Tolerances and budgets, as stated by the criteria.
const GRAD_TOL: f64 = 1e-4;
const GRAD_BUDGET: Duration = Duration::from_secs(120);
const ROT_TOL: f64 = 1e-9;
const BVH_TOL: f64 = 1e-4;
const VELOCITY_TOL: f64 = 1e-6;
const MOMENT_TOL: f64 = 0.01;
const MIDPOINT_TOL: f64 = 1e-12;
const LOSS_TARGET: f64 = 0.01;
const LOSS_STEPS: u64 = 2000;
const OVERFIT_BUDGET: Duration = Duration::from_secs(600);
const SAMPLE_MSE_TARGET: f64 = 0.1;
const FGD_SHIFT_TOL: f64 = 0.05;
const FGD_SELF_TOL: f64 = 1e-8;
const PARALLEL_TOL: f64 = 1e-10;
/// Window over which the per-step loss is averaged before comparing with
/// the target; single steps see a random t and are noisy.
const LOSS_WINDOW: usize = 50;

/// Env var naming a BVH file or directory checked in addition to the toy corpus.
const USER_BVH_ENV: &str = "COGESTURE_USER_BVH";

type Outcome = Result<(bool, String), String>;

struct Context {
    root: tempfile::TempDir,
    trained: Option<PathBuf>,
    corpus: Option<PathBuf>,
}

fn all_pass(results: &[CheckResult]) -> bool {
    results.iter().all(|r| r.passed)
}

fn describe(results: &[CheckResult]) -> String {
    results.iter().map(|r| format!("{}={:.2e}", r.name, r.value)).collect::<Vec<_>>().join(" ")
}

fn c1_gradients(_: &mut Context) -> Outcome {
    let start = Instant::now();
    let reports = check_all(0);
    let elapsed = start.elapsed();
    let worst = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let ok = reports.iter().all(|r| r.max_rel_error <= GRAD_TOL) && elapsed < GRAD_BUDGET;
    let detail = reports.iter().map(|r| format!("{}={:.1e}", r.name, r.max_rel_error)).collect::<Vec<_>>().join(" ");
    Ok((ok, format!("worst {worst:.2e} <= {GRAD_TOL:.0e}, {:.1}s < 120s [{detail}]", elapsed.as_secs_f64())))
}

fn c2_rotations(_: &mut Context) -> Outcome {
    let r = rotation_checks(2);
    let ok = all_pass(&r) && r.iter().all(|c| c.tolerance <= ROT_TOL);
    Ok((ok, format!("1000 triples, {}", describe(&r))))
}

fn max_frame_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    if a.dim() != b.dim() {
        return f64::INFINITY;
    }
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn bvh_round_trip(path: &Path) -> Result<f64, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let a = parse_bvh(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let b = parse_bvh(&write_bvh(&a, DEFAULT_PRECISION)).map_err(|e| e.to_string())?;
    let mut worst = max_frame_diff(&a.frames, &b.frames);
    worst = worst.max((a.frame_time - b.frame_time).abs());
    for (ja, jb) in a.hierarchy.joints.iter().zip(&b.hierarchy.joints) {
        if ja.name != jb.name || ja.parent != jb.parent || ja.channels != jb.channels {
            return Ok(f64::INFINITY);
        }
        worst = (0..3).map(|k| (ja.offset[k] - jb.offset[k]).abs()).fold(worst, f64::max);
    }
    Ok(worst)
}

fn c3_bvh(ctx: &mut Context) -> Outcome {
    let corpus = ctx.root.path().join("bvh75");
    synthesize_toy_corpus(&corpus, &ToyCorpusConfig::default()).map_err(|e| e.to_string())?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(&corpus)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "bvh"))
        .collect();
    files.sort();
    let mut worst = 0.0f64;
    for f in &files {
        worst = worst.max(bvh_round_trip(f)?);
    }
    let mut detail = format!("toy corpus {} files max diff {worst:.1e}", files.len());
    match std::env::var_os(USER_BVH_ENV) {
        Some(p) => {
            let p = PathBuf::from(p);
            let user: Vec<PathBuf> = if p.is_dir() {
                std::fs::read_dir(&p)
                    .map_err(|e| e.to_string())?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|x| x.extension().is_some_and(|e| e == "bvh"))
                    .collect()
            } else {
                vec![p]
            };
            let mut uw = 0.0f64;
            for f in &user {
                uw = uw.max(bvh_round_trip(f)?);
            }
            worst = worst.max(uw);
            detail.push_str(&format!("; user files {} max diff {uw:.1e}", user.len()));
        }
        None => detail.push_str(&format!("; no user file ({USER_BVH_ENV} unset)")),
    }
    ctx.corpus = Some(corpus);
    Ok((worst <= BVH_TOL, detail))
}

fn c4_features(ctx: &mut Context) -> Outcome {
    let corpus = ctx.corpus.clone().ok_or("criterion 3 did not produce a corpus")?;
    let text = std::fs::read_to_string(corpus.join("001_Neutral_0_x_1_0.bvh")).map_err(|e| e.to_string())?;
    let clip = parse_bvh(&text).map_err(|e| e.to_string())?;
    let feats = build_features(&clip, 75).map_err(|e| e.to_string())?;
    let width = feats.data.ncols();
    let layout = FeatureLayout::new(75);
    let split_ok = width == 1141 && width == 13 + 15 * 75 + 3 && layout.gaze() == 1138;
    let mut worst = 0.0f64;
    for j in 0..75 {
        let (p, dp) = (layout.p_joint(j), layout.dp_joint(j));
        for k in 0..3 {
            let mut acc = feats.data[[0, p + k]];
            for f in 1..feats.num_frames() {
                acc += feats.data[[f - 1, dp + k]] / feats.fps;
                worst = worst.max((acc - feats.data[[f, p + k]]).abs());
            }
        }
    }
    Ok((split_ok && worst <= VELOCITY_TOL, format!("D={width} = 13 + 15*75 + 3, velocity integration error {worst:.1e}")))
}

fn c5_diffusion(_: &mut Context) -> Outcome {
    let (mean_err, var_err) = forward_diffusion_moments(5, 100_000);
    Ok((
        mean_err <= MOMENT_TOL && var_err <= MOMENT_TOL,
        format!("alpha_bar=0.5, 1e5 draws: mean rel err {mean_err:.2e}, var rel err {var_err:.2e}"),
    ))
}

fn c6_guidance(_: &mut Context) -> Outcome {
    let r = guidance_checks(6);
    let ok = all_pass(&r) && r.iter().all(|c| c.tolerance <= MIDPOINT_TOL);
    Ok((ok, describe(&r)))
}

fn tiny_config() -> Result<RunConfig, String> {
    RunConfig::from_toml(TINY_TOML).map_err(|e| e.to_string())
}

fn c7_overfit(ctx: &mut Context) -> Outcome {
    let cfg = tiny_config()?;
    let corpus = ctx.root.path().join("tiny_corpus");
    let toy = ToyCorpusConfig { clips: 4, frames: 40, joint_count: cfg.data.joint_count, fps: cfg.data.fps, seed: 0 };
    synthesize_toy_corpus(&corpus, &toy).map_err(|e| e.to_string())?;
    let data = ctx.root.path().join("tiny_data");
    cmd_preprocess(&corpus, &data, &cfg).map_err(|e| e.to_string())?;
    let ck = ctx.root.path().join("tiny_ck");
    let start = Instant::now();
    let out = cmd_train(&data, &ck, &cfg, None).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let losses: Vec<f64> = out.stats.iter().map(|s| s.loss).collect();
    let reached = (LOSS_WINDOW..=losses.len())
        .find(|&end| losses[end - LOSS_WINDOW..end].iter().sum::<f64>() / (LOSS_WINDOW as f64) < LOSS_TARGET)
        .map(|end| end as u64);
    let final_mean = losses[losses.len().saturating_sub(LOSS_WINDOW)..].iter().sum::<f64>() / LOSS_WINDOW as f64;

    let ds = Dataset::open(&data).map_err(|e| e.to_string())?;
    let trained = Checkpoint::load(&ck).map_err(|e| e.to_string())?;
    let schedule = trained.schedule.build().map_err(|e| e.to_string())?;
    let mut per_clip = Vec::new();
    let mut per_clip_frob = Vec::new();
    for (e, entry) in ds.manifest.entries.iter().enumerate() {
        let (mut sum, mut frob) = (0.0, 0.0);
        for w in 0..entry.windows.len() {
            let idx = (0..ds.len()).find(|&i| ds.locate(i).ok() == Some((e, w))).ok_or("window index")?;
            let ex = ds.load_window(idx).map_err(|e| e.to_string())?;
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + idx as u64);
            let alt = ex.cond.unconditional();
            let x0 = sample_segment(&trained.model, &ex.cond, &alt, cfg.sampling.gamma, &schedule, cfg.sampling.mode, &mut rng)
                .map_err(|e| e.to_string())?;
            let sq: f64 = (&x0 - &ex.x0).mapv(|v| v * v).sum();
            sum += sq / x0.len() as f64;
            frob += sq;
        }
        per_clip.push(sum / entry.windows.len() as f64);
        per_clip_frob.push(frob / entry.windows.len() as f64);
    }
    let worst = per_clip.iter().copied().fold(0.0, f64::max);
    ctx.trained = Some(ck);
    let ok = reached.is_some_and(|s| s <= LOSS_STEPS) && elapsed < OVERFIT_BUDGET && worst < SAMPLE_MSE_TARGET;
    Ok((
        ok,
        format!(
            "loss<{LOSS_TARGET} (mean of {LOSS_WINDOW} steps) first at step {}, final {final_mean:.4}, train {:.1}s; \
             per-clip sample MSE (per entry) max {worst:.4} {:?}; per-window Frobenius {:?}",
            reached.map_or("never".to_string(), |s| s.to_string()),
            elapsed.as_secs_f64(),
            per_clip.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>(),
            per_clip_frob.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>(),
        ),
    ))
}

fn c8_fgd(_: &mut Context) -> Outcome {
    let r = fgd_checks(8);
    let tol_ok = r.iter().all(|c| match c.name.as_str() {
        "fgd/unit_shift" => c.tolerance <= FGD_SHIFT_TOL,
        _ => c.tolerance <= FGD_SELF_TOL,
    });
    Ok((all_pass(&r) && tol_ok, describe(&r)))
}

fn c9_determinism(ctx: &mut Context) -> Outcome {
    let ck = ctx.trained.clone().ok_or("criterion 7 did not produce a checkpoint")?;
    let corpus = ctx.root.path().join("tiny_corpus");
    let stem = "002_Sad_0_x_1_0";
    let sample = |name: &str| -> Result<Vec<u8>, String> {
        let req = SampleRequest {
            checkpoint: ck.clone(),
            wav: corpus.join(format!("{stem}.wav")),
            textgrid: corpus.join(format!("{stem}.TextGrid")),
            emotion: cogesture::conditioning::Emotion::Sad,
            emotion2: None,
            gamma: None,
            seed: Some(7),
            mode: None,
            out: ctx.root.path().join(name),
            allow_untrained: false,
        };
        cmd_sample(&req).map_err(|e| e.to_string())?;
        std::fs::read(&req.out).map_err(|e| e.to_string())
    };
    let same_bvh = sample("a.bvh")? == sample("b.bvh")?;

    let data = ctx.root.path().join("tiny_data");
    let mut cfg = tiny_config()?;
    cfg.training.steps = 40;
    let run = |parallel: bool, dir: &str| -> Result<Vec<f64>, String> {
        let mut c = cfg.clone();
        c.training.parallel = parallel;
        let out = cmd_train(&data, &ctx.root.path().join(dir), &c, None).map_err(|e| e.to_string())?;
        Ok(out.stats.iter().map(|s| s.loss).collect())
    };
    let serial_a = run(false, "det_a")?;
    let serial_b = run(false, "det_b")?;
    let parallel = run(true, "det_c")?;
    let serial_same = serial_a == serial_b;
    let par_dev = serial_a.iter().zip(&parallel).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok((
        same_bvh && serial_same && par_dev <= PARALLEL_TOL,
        format!(
            "sample --seed 7 twice byte-identical: {same_bvh}; serial runs identical: {serial_same}; \
             parallel vs serial max loss diff {par_dev:.1e} over {} steps",
            serial_a.len()
        ),
    ))
}

fn c10_seed_chaining(_: &mut Context) -> Outcome {
    let c = ModelConfig { feature_dim: 31, seed_frames: 8, frames: 80, hidden: 16, layers: 1, heads: 2, ffn_dim: 32, window: 4, speech_dim: 8, text_dim: 4 };
    let model = Denoiser::new(c.clone(), 10).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let segments: Vec<SegmentInputs> = (0..3)
        .map(|k| SegmentInputs {
            speech: Array2::from_shape_fn((80, 8), |(i, j)| ((i * 7 + j * 3 + k) as f64 * 0.1).sin()),
            text: Array2::from_shape_fn((80, 4), |(i, j)| ((i + j * 5 + k) as f64 * 0.2).cos()),
        })
        .collect();
    let normalizer = FeatureNormalizer::new(Array1::from_elem(31, 0.3), Array1::from_elem(31, 1.7));
    let schedule = cogesture::diffusion::make_schedule(5, 1e-3, 0.3).map_err(|e| e.to_string())?;
    let options = LongOptions { emotion: cogesture::conditioning::Emotion::Relaxed, guidance: Guidance::Unconditional, gamma: 0.1, mode: SamplerMode::Consistent, fps: 20.0 };
    let out = generate_long(&model, &segments, Some(&normalizer), &schedule, &options, &mut rng).map_err(|e| e.to_string())?;
    let mut exact = true;
    for k in 0..segments.len() - 1 {
        let tail = out.normalized.slice(s![(k + 1) * 80 - 8..(k + 1) * 80, ..]);
        exact &= out.seeds[k + 1].view() == tail;
    }
    let frames = out.features.num_frames();
    Ok((
        exact && frames == segments.len() * 80,
        format!("{} segments -> {frames} frames; seeds of k+1 equal last 8 frames of k bitwise: {exact}", segments.len()),
    ))
}

fn main() {
    // `cargo test` passes libtest flags such as --nocapture; listing is the
    // only one that needs an answer.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut ctx = Context { root: tempfile::tempdir().expect("tempdir"), trained: None, corpus: None };
    let criteria: [(&str, fn(&mut Context) -> Outcome); 10] = [
        ("gradient fidelity", c1_gradients),
        ("rotation consistency", c2_rotations),
        ("BVH round trip", c3_bvh),
        ("feature layout", c4_features),
        ("forward-diffusion statistics", c5_diffusion),
        ("guidance identities", c6_guidance),
        ("desk-scale overfit", c7_overfit),
        ("FGD oracle", c8_fgd),
        ("determinism", c9_determinism),
        ("seed chaining", c10_seed_chaining),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = match check(&mut ctx) {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!ok);
        println!(
            "ACCEPTANCE {:>2} {} {name} ({:.1}s): {detail}",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
