use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use cogesture::bvh::{parse_bvh, parse_hierarchy, write_bvh, DEFAULT_PRECISION};
use cogesture::checkpoint::Checkpoint;
use cogesture::conditioning::{parse_matrix, Emotion};
use cogesture::dataset::{
    ingest, make_word_embedder, resample_clip, segment_conditions, synthesize_toy_corpus, Dataset, DatasetManifest,
    ToyCorpusConfig, MANIFEST_FILE,
};
use cogesture::diffusion::{generate_long, item_rng, Guidance, LongOptions, SamplerMode, StepStats, Trainer};
use cogesture::eval::{extract_rotation_features, fgd, mse};
use cogesture::features::{build_features, features_to_motion, GestureFeatureSequence};
use cogesture::nn::Denoiser;
use cogesture::selfcheck::{render_table, run_selfcheck, SelfCheckOptions};
use ndarray::{concatenate, s, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

pub const TRAIN_LOG: &str = "train_log.jsonl";

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

pub fn cmd_synth(out_dir: &Path, config: &ToyCorpusConfig) -> Result<Vec<String>, CliError> {
    Ok(synthesize_toy_corpus(out_dir, config)?)
}

/// Returns the manifest path (or where it would be written on a dry run).
pub fn cmd_preprocess(corpus_dir: &Path, out_dir: &Path, config: &RunConfig) -> Result<(PathBuf, DatasetManifest), CliError> {
    config.data.validate()?;
    let manifest = ingest(corpus_dir, out_dir, &config.data)?;
    Ok((out_dir.join(MANIFEST_FILE), manifest))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogLine {
    pub step: u64,
    pub t_mean: f64,
    pub loss: f64,
    pub grad_norm: f64,
    pub wall_ms: u64,
}

pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub stats: Vec<StepStats>,
}

fn save_checkpoint(trainer: &Trainer, ds: &Dataset, config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let ck = Checkpoint::from_trainer(
        trainer,
        config.diffusion.clone(),
        Some(ds.normalizer.clone()),
        Some(ds.manifest.skeleton.clone()),
        ds.manifest.fps,
        config.to_json(),
    );
    ck.save(out)?;
    Ok(())
}

/// Trains until `config.training.steps` updates have been applied in total.
/// Batch composition at step k depends only on (seed, k), so a resumed run
/// follows the same trajectory as an uninterrupted one.
pub fn cmd_train(data: &Path, out: &Path, config: &RunConfig, resume: Option<&Path>) -> Result<TrainOutcome, CliError> {
    let ds = Dataset::open(data)?;
    if ds.is_empty() {
        return Err(input("dataset has no windows"));
    }
    let mut config = config.clone();
    config.data = ds.manifest.config.clone();
    config.data.dry_run = false;
    config.validate()?;
    let model_config = config.model_config();
    let schedule = config.diffusion.build()?;

    let mut trainer = match resume {
        Some(dir) => {
            let ck = Checkpoint::load(dir)?;
            if ck.model.config != model_config {
                return Err(input(format!(
                    "checkpoint shape/config mismatch: checkpoint {:?}, config {:?}",
                    ck.model.config, model_config
                )));
            }
            if ck.schedule.build()?.steps() != schedule.steps() {
                return Err(input("checkpoint was trained with a different number of diffusion steps"));
            }
            let mut t = Trainer::new(ck.model, schedule, config.training_config())?;
            t.optimizer = ck.optimizer;
            t.optimizer.learning_rate = config.training.learning_rate;
            t
        }
        None => {
            let model = Denoiser::new(model_config, config.model.init_seed).map_err(|e| input(e.to_string()))?;
            Trainer::new(model, schedule, config.training_config())?
        }
    };

    std::fs::create_dir_all(out)?;
    let log_path = out.join(TRAIN_LOG);
    let file = OpenOptions::new().create(true).write(true).append(resume.is_some()).truncate(resume.is_none()).open(&log_path)?;
    let mut log = BufWriter::new(file);
    let start = Instant::now();
    let mut stats = Vec::new();
    let every = config.training.checkpoint_every;
    while trainer.step_count() < config.training.steps {
        let step = trainer.step_count();
        let mut rng = item_rng(config.training.seed, step, u64::MAX);
        let indices = ds.draw_indices(config.training.batch_size, &mut rng);
        let batch = ds.load_batch(&indices, &mut rng)?;
        let st = trainer.step(&batch)?;
        if !st.loss.is_finite() {
            return Err(CliError::Internal(format!("loss became non-finite at step {}", st.step)));
        }
        let line = LogLine {
            step: st.step,
            t_mean: st.t_mean,
            loss: st.loss,
            grad_norm: st.grad_norm,
            wall_ms: start.elapsed().as_millis() as u64,
        };
        serde_json::to_writer(&mut log, &line).map_err(|e| CliError::Internal(e.to_string()))?;
        log.write_all(b"\n")?;
        stats.push(st);
        if every > 0 && st.step % every == 0 {
            log.flush()?;
            save_checkpoint(&trainer, &ds, &config, out)?;
        }
    }
    log.flush()?;
    save_checkpoint(&trainer, &ds, &config, out)?;
    Ok(TrainOutcome { checkpoint: out.to_path_buf(), log: log_path, stats })
}

#[derive(Debug, Clone)]
pub struct SampleRequest {
    pub checkpoint: PathBuf,
    pub wav: PathBuf,
    pub textgrid: PathBuf,
    pub emotion: Emotion,
    pub emotion2: Option<Emotion>,
    pub gamma: Option<f64>,
    pub seed: Option<u64>,
    pub mode: Option<SamplerMode>,
    pub out: PathBuf,
    pub allow_untrained: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleSidecar {
    pub checkpoint: String,
    pub wav: String,
    pub textgrid: String,
    pub emotion: String,
    pub emotion2: Option<String>,
    pub gamma: f64,
    pub seed: u64,
    pub segments: usize,
    pub frames: usize,
    pub frame_time: f64,
    pub config_hash: String,
    pub config: serde_json::Value,
}

pub fn sidecar_path(bvh: &Path) -> PathBuf {
    let mut name = bvh.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

pub fn cmd_sample(req: &SampleRequest) -> Result<SampleSidecar, CliError> {
    let ck = Checkpoint::load(&req.checkpoint)?;
    if ck.optimizer.step == 0 && !req.allow_untrained {
        return Err(input("checkpoint is untrained (0 optimizer steps); pass --allow-untrained to sample anyway"));
    }
    let mut config: RunConfig = serde_json::from_value(ck.run_config.clone())
        .map_err(|e| input(format!("checkpoint carries an unreadable run config: {e}")))?;
    if let Some(g) = req.gamma {
        config.sampling.gamma = g;
    }
    if let Some(s) = req.seed {
        config.sampling.seed = s;
    }
    if let Some(m) = req.mode {
        config.sampling.mode = m;
    }
    let normalizer = ck.normalizer.as_ref().ok_or_else(|| input("checkpoint has no normalizer"))?;
    let skeleton = parse_hierarchy(ck.skeleton.as_deref().ok_or_else(|| input("checkpoint has no skeleton"))?)
        .map_err(|e| input(format!("checkpoint skeleton: {e}")))?;
    let stem = req.wav.file_stem().and_then(|s| s.to_str()).unwrap_or("sample").to_string();
    let words = make_word_embedder(&config.data)?;
    let segments = segment_conditions(&req.wav, &req.textgrid, &stem, &config.data, words.as_ref(), None)?;
    let options = LongOptions {
        emotion: req.emotion,
        guidance: req.emotion2.map_or(Guidance::Unconditional, Guidance::Emotion),
        gamma: config.sampling.gamma,
        mode: config.sampling.mode,
        fps: ck.fps,
    };
    let schedule = ck.schedule.build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.sampling.seed);
    let generated = generate_long(&ck.model, &segments, Some(normalizer), &schedule, &options, &mut rng)?;
    let clip = features_to_motion(&generated.features, &skeleton).map_err(|e| CliError::Internal(e.to_string()))?;
    if let Some(parent) = req.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&req.out, write_bvh(&clip, DEFAULT_PRECISION))?;
    let sidecar = SampleSidecar {
        checkpoint: req.checkpoint.display().to_string(),
        wav: req.wav.display().to_string(),
        textgrid: req.textgrid.display().to_string(),
        emotion: req.emotion.as_str().into(),
        emotion2: req.emotion2.map(|e| e.as_str().to_string()),
        gamma: config.sampling.gamma,
        seed: config.sampling.seed,
        segments: segments.len(),
        frames: clip.num_frames(),
        frame_time: clip.frame_time,
        config_hash: config.hash(),
        config: config.to_json(),
    };
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| CliError::Internal(e.to_string()))?;
    std::fs::write(sidecar_path(&req.out), json)?;
    Ok(sidecar)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    /// Normalized feature rows (D = 16 + 15·joints).
    Features,
    /// Per-joint ZYX Euler angles in radians (3·joints).
    Rotations,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    pub representation: Representation,
    pub value: f64,
    pub dim: usize,
    pub n_real: usize,
    pub n_generated: usize,
    pub config_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub real: String,
    pub generated: String,
    pub config_hash: String,
    pub metrics: Vec<MetricRecord>,
}

/// Denormalized (clip id, features) pairs from a manifest directory or a
/// directory of BVH files.
fn load_feature_set(path: &Path, reference: &Dataset) -> Result<Vec<(String, Array2<f64>)>, CliError> {
    if path.join(MANIFEST_FILE).is_file() || path.is_file() {
        let ds = Dataset::open(path)?;
        return (0..ds.manifest.entries.len())
            .map(|e| {
                let x = ds.clip_features(e)?;
                Ok((ds.manifest.entries[e].clip_id.clone(), ds.normalizer.denormalize_rows(&x)))
            })
            .collect();
    }
    if !path.is_dir() {
        return Err(input(format!("{} is neither a dataset nor a directory", path.display())));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "bvh"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(input(format!("no .bvh files in {}", path.display())));
    }
    files
        .iter()
        .map(|f| {
            let text = std::fs::read_to_string(f)?;
            let clip = parse_bvh(&text).map_err(|e| input(format!("{}: {e}", f.display())))?;
            let clip = resample_clip(&clip, reference.manifest.fps).map_err(|e| input(e.to_string()))?;
            let feats = build_features(&clip, clip.hierarchy.len()).map_err(|e| input(format!("{}: {e}", f.display())))?;
            let id = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            Ok((id, feats.data))
        })
        .collect()
}

fn to_representation(
    raw: &Array2<f64>,
    joint_count: usize,
    fps: f64,
    rep: Representation,
    reference: &Dataset,
) -> Result<Array2<f64>, CliError> {
    let d = reference.manifest.feature_dim;
    if raw.ncols() != d {
        return Err(input(format!("feature width {} does not match the real set's D={d}", raw.ncols())));
    }
    Ok(match rep {
        Representation::Features => reference.normalizer.normalize_rows(raw),
        Representation::Rotations => {
            let seq = GestureFeatureSequence::new(raw.clone(), fps, joint_count).map_err(|e| input(e.to_string()))?;
            extract_rotation_features(&seq)?
        }
    })
}

pub fn cmd_eval(
    real: &Path,
    generated: &Path,
    rep: Representation,
    paired: bool,
    config: &RunConfig,
) -> Result<EvalReport, CliError> {
    let reference = Dataset::open(real)?;
    let (j, fps) = (reference.manifest.joint_count, reference.manifest.fps);
    let real_set = load_feature_set(real, &reference)?;
    let gen_set = load_feature_set(generated, &reference)?;
    let convert = |set: &[(String, Array2<f64>)]| -> Result<Vec<(String, Array2<f64>)>, CliError> {
        set.iter().map(|(id, x)| Ok((id.clone(), to_representation(x, j, fps, rep, &reference)?))).collect()
    };
    let real_rep = convert(&real_set)?;
    let gen_rep = convert(&gen_set)?;
    let stack = |set: &[(String, Array2<f64>)]| {
        let views: Vec<_> = set.iter().map(|(_, x)| x.view()).collect();
        concatenate(Axis(0), &views).expect("equal widths")
    };
    let (r, g) = (stack(&real_rep), stack(&gen_rep));
    let hash = config.hash();
    let record = |metric: &str, value: f64| MetricRecord {
        metric: metric.into(),
        representation: rep,
        value,
        dim: r.ncols(),
        n_real: r.nrows(),
        n_generated: g.nrows(),
        config_hash: hash.clone(),
    };
    let mut metrics = vec![record("fgd", fgd(r.view(), g.view())?)];
    if paired {
        let mut ys = Vec::new();
        let mut yh = Vec::new();
        for (id, x) in &real_rep {
            let (_, y) = gen_rep
                .iter()
                .find(|(gid, _)| gid == id)
                .ok_or_else(|| input(format!("unpaired sets: no generated clip named {id}")))?;
            let n = x.nrows().min(y.nrows());
            ys.push(x.slice(s![..n, ..]).to_owned());
            yh.push(y.slice(s![..n, ..]).to_owned());
        }
        if gen_rep.len() != real_rep.len() {
            return Err(input(format!("unpaired sets: {} real vs {} generated clips", real_rep.len(), gen_rep.len())));
        }
        metrics.push(record("mse", mse(&ys, &yh)?));
    }
    Ok(EvalReport {
        real: real.display().to_string(),
        generated: generated.display().to_string(),
        config_hash: hash,
        metrics,
    })
}

pub fn cmd_selfcheck(options: SelfCheckOptions) -> Result<String, CliError> {
    let results = run_selfcheck(options);
    let table = render_table(&results);
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        eprint!("{table}");
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(table)
}

fn write_matrix(a: &Array2<f64>) -> String {
    let mut s = String::new();
    for row in a.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.9e}")).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    s
}

/// BVH → whitespace feature matrix (one frame per row, unnormalized).
pub fn cmd_bvh_to_features(bvh: &Path, out: &Path) -> Result<usize, CliError> {
    let clip = parse_bvh(&std::fs::read_to_string(bvh)?).map_err(|e| input(e.to_string()))?;
    let feats = build_features(&clip, clip.hierarchy.len()).map_err(|e| input(e.to_string()))?;
    std::fs::write(out, write_matrix(&feats.data))?;
    Ok(feats.data.ncols())
}

/// Feature matrix → BVH, taking the skeleton from a reference BVH.
pub fn cmd_features_to_bvh(features: &Path, skeleton_bvh: &Path, fps: f64, out: &Path) -> Result<usize, CliError> {
    let data = parse_matrix(&std::fs::read_to_string(features)?).map_err(|e| input(e.to_string()))?;
    let text = std::fs::read_to_string(skeleton_bvh)?;
    let skeleton = parse_hierarchy(&text).map_err(|e| input(e.to_string()))?;
    let seq = GestureFeatureSequence::new(data, fps, skeleton.len()).map_err(|e| input(e.to_string()))?;
    let clip = features_to_motion(&seq, &skeleton).map_err(|e| input(e.to_string()))?;
    std::fs::write(out, write_bvh(&clip, DEFAULT_PRECISION))?;
    Ok(clip.num_frames())
}
