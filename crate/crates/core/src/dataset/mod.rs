//! Preprocessed training windows: one JSON manifest plus one framed blob file
//! per clip.

pub mod blob;
pub mod toy;

use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use ndarray::{s, Array1, Array2, Ix1, Ix2};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bvh::{parse_bvh, parse_hierarchy, write_hierarchy, BvhError, MotionClip, SkeletonHierarchy};
use crate::conditioning::{
    embed_text, load_wav, parse_textgrid, peak_normalize, segment_samples, segment_speech, ConditionBundle,
    ConditioningError, Emotion, HashedNgramEmbedder, MelProjectionEmbedder, PrecomputedSpeech, SpeechEmbedder,
    TableEmbedder, WordEmbedder, PEAK_DBFS, SPEECH_DIM, TEXT_DIM,
};
use crate::diffusion::{SegmentInputs, TrainingExample};
use crate::features::{build_features, fit_normalizer, FeatureError, FeatureLayout, FeatureNormalizer};

pub use blob::{read_record, BlobWriter, DType, TensorRef};
pub use toy::{synthesize_toy_corpus, toy_skeleton, ToyCorpusConfig};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const NORMALIZER_BLOB: &str = "normalizer.bin";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("corrupt blob: {0}")]
    Corrupt(String),
    #[error("checksum mismatch in {0}")]
    Checksum(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("window index {index} out of range for {len} windows")]
    Index { index: usize, len: usize },
    #[error("no usable clips in {}", .0.display())]
    NoClips(PathBuf),
    #[error("clip {clip}: {source}")]
    Clip { clip: String, source: Box<DatasetError> },
    #[error(transparent)]
    Bvh(#[from] BvhError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Conditioning(#[from] ConditioningError),
    #[error("manifest json: {0}")]
    Json(#[from] serde_json::Error),
}

impl DatasetError {
    fn in_clip(self, clip: &str) -> Self {
        DatasetError::Clip { clip: clip.to_string(), source: Box::new(self) }
    }

    /// True for errors caused by the input corpus or manifest rather than by
    /// the environment.
    pub fn is_input_error(&self) -> bool {
        match self {
            DatasetError::Io(_) => false,
            DatasetError::Clip { source, .. } => source.is_input_error(),
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SpeechProvider {
    /// Log-mel spectrogram through a fixed random projection.
    Mel { seed: u64 },
    /// `{dir}/{clip_id}.txt`, one row per encoder frame at `rate` rows/s.
    Precomputed { dir: PathBuf, rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TextProvider {
    Hashed { seed: u64 },
    /// Word-vector table, hashed n-grams for missing words.
    Table { path: PathBuf, fallback_seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SeedPolicy {
    /// Preceding N frames, dataset mean for the first window of a clip.
    #[default]
    Preceding,
    /// Dataset mean for every window.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub fps: f64,
    pub window_frames: usize,
    pub seed_frames: usize,
    pub joint_count: usize,
    pub speech_dim: usize,
    pub text_dim: usize,
    pub speech: SpeechProvider,
    pub text: TextProvider,
    pub seed_policy: SeedPolicy,
    /// Validate and build the manifest without writing anything.
    pub dry_run: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            fps: 20.0,
            window_frames: 80,
            seed_frames: 8,
            joint_count: 75,
            speech_dim: SPEECH_DIM,
            text_dim: TEXT_DIM,
            speech: SpeechProvider::Mel { seed: 0 },
            text: TextProvider::Hashed { seed: 0 },
            seed_policy: SeedPolicy::Preceding,
            dry_run: false,
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(DatasetError::Config(format!("fps must be positive, got {}", self.fps)));
        }
        if self.window_frames == 0 || self.seed_frames == 0 || self.joint_count == 0 {
            return Err(DatasetError::Config("window_frames, seed_frames and joint_count must be nonzero".into()));
        }
        if self.speech_dim == 0 || self.text_dim == 0 {
            return Err(DatasetError::Config("embedding widths must be nonzero".into()));
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        FeatureLayout::new(self.joint_count).width()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceFiles {
    pub bvh: String,
    pub wav: String,
    pub textgrid: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowRef {
    pub start_frame: usize,
    pub x0: TensorRef,
    pub seed: TensorRef,
    pub speech: TensorRef,
    pub text: TensorRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipEntry {
    pub clip_id: String,
    pub emotion_label: String,
    pub sources: SourceFiles,
    /// Frame count after resampling to the dataset rate.
    pub frames: usize,
    pub blob: String,
    pub windows: Vec<WindowRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizerRef {
    pub blob: String,
    pub mean: TensorRef,
    pub std: TensorRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub fps: f64,
    pub window_frames: usize,
    pub seed_frames: usize,
    pub feature_dim: usize,
    pub joint_count: usize,
    pub speech_dim: usize,
    pub text_dim: usize,
    pub normalizer: NormalizerRef,
    /// BVH HIERARCHY section of the source skeleton.
    pub skeleton: String,
    pub config: IngestConfig,
    pub entries: Vec<ClipEntry>,
}

impl DatasetManifest {
    pub fn window_count(&self) -> usize {
        self.entries.iter().map(|e| e.windows.len()).sum()
    }

    /// Shape checks only; blob contents are verified when read.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::Manifest(m));
        if self.version != MANIFEST_VERSION {
            return bad(format!("version {} (expected {MANIFEST_VERSION})", self.version));
        }
        if FeatureLayout::new(self.joint_count).width() != self.feature_dim {
            return bad(format!("D={} does not match {} joints", self.feature_dim, self.joint_count));
        }
        let (m, n, d) = (self.window_frames, self.seed_frames, self.feature_dim);
        if self.normalizer.mean.shape != [d] || self.normalizer.std.shape != [d] {
            return bad("normalizer shape".into());
        }
        for e in &self.entries {
            if e.emotion_label.parse::<Emotion>().is_err() {
                return bad(format!("{}: unknown emotion {:?}", e.clip_id, e.emotion_label));
            }
            for w in &e.windows {
                let checks = [
                    ("x0", &w.x0, [m, d]),
                    ("seed", &w.seed, [n, d]),
                    ("speech", &w.speech, [m, self.speech_dim]),
                    ("text", &w.text, [m, self.text_dim]),
                ];
                for (name, r, shape) in checks {
                    if r.shape != shape {
                        return bad(format!("{} window {}: {name} shape {:?}, expected {shape:?}", e.clip_id, w.start_frame, r.shape));
                    }
                }
                if w.start_frame + m > e.frames {
                    return bad(format!("{} window {} runs past {} frames", e.clip_id, w.start_frame, e.frames));
                }
            }
        }
        Ok(())
    }
}

/// Resamples motion to `fps` by decimation when the ratio is an integer and
/// nearest-frame lookup otherwise.
pub fn resample_clip(clip: &MotionClip, fps: f64) -> Result<MotionClip, BvhError> {
    let src = clip.fps();
    if (src - fps).abs() <= 1e-6 * fps {
        return Ok(clip.clone());
    }
    let ratio = src / fps;
    let frames = clip.num_frames();
    let rows: Vec<usize> = if (ratio - ratio.round()).abs() < 1e-6 && ratio.round() >= 1.0 {
        (0..frames).step_by(ratio.round() as usize).collect()
    } else {
        let duration = frames as f64 / src;
        let out = (duration * fps).floor() as usize;
        (0..out).map(|i| ((i as f64 * ratio).round() as usize).min(frames - 1)).collect()
    };
    let data = clip.frames.select(ndarray::Axis(0), &rows);
    MotionClip::new(clip.hierarchy.clone(), data, 1.0 / fps)
}

/// Clip stems that have all three members, sorted. A stem with only some of
/// the members is an error naming the first missing file.
pub fn discover_triples(corpus_dir: &Path) -> Result<Vec<String>, DatasetError> {
    if !corpus_dir.is_dir() {
        return Err(DatasetError::MissingFile(corpus_dir.to_path_buf()));
    }
    let mut stems = BTreeSet::new();
    for entry in std::fs::read_dir(corpus_dir)? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if ["bvh", "wav", "TextGrid"].contains(&ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                stems.insert(stem.to_string());
            }
        }
    }
    for stem in &stems {
        for ext in ["bvh", "wav", "TextGrid"] {
            let p = corpus_dir.join(format!("{stem}.{ext}"));
            if !p.is_file() {
                return Err(DatasetError::MissingFile(p));
            }
        }
    }
    Ok(stems.into_iter().collect())
}

struct ParsedClip {
    stem: String,
    emotion: Emotion,
    skeleton: SkeletonHierarchy,
    features: Array2<f64>,
}

fn parse_clip(corpus_dir: &Path, stem: &str, config: &IngestConfig) -> Result<ParsedClip, DatasetError> {
    let emotion = Emotion::from_file_stem(stem)?;
    let text = std::fs::read_to_string(corpus_dir.join(format!("{stem}.bvh")))?;
    let clip = resample_clip(&parse_bvh(&text)?, config.fps)?;
    let features = build_features(&clip, config.joint_count)?.data;
    Ok(ParsedClip { stem: stem.to_string(), emotion, skeleton: clip.hierarchy, features })
}

fn make_speech_embedder(config: &IngestConfig, stem: &str) -> Result<Box<dyn SpeechEmbedder>, DatasetError> {
    Ok(match &config.speech {
        SpeechProvider::Mel { seed } => Box::new(MelProjectionEmbedder::with_dim(*seed, config.speech_dim)),
        SpeechProvider::Precomputed { dir, rate } => {
            let path = dir.join(format!("{stem}.txt"));
            if !path.is_file() {
                return Err(DatasetError::MissingFile(path));
            }
            Box::new(PrecomputedSpeech::load(path, *rate, config.speech_dim)?)
        }
    })
}

pub fn make_word_embedder(config: &IngestConfig) -> Result<Box<dyn WordEmbedder>, DatasetError> {
    Ok(match &config.text {
        TextProvider::Hashed { seed } => Box::new(HashedNgramEmbedder { seed: *seed, dim: config.text_dim }),
        TextProvider::Table { path, fallback_seed } => {
            if !path.is_file() {
                return Err(DatasetError::MissingFile(path.clone()));
            }
            Box::new(TableEmbedder::load(path, *fallback_seed, config.text_dim)?)
        }
    })
}

/// Speech and text conditioning for consecutive M-frame segments of one
/// recording. `segments = None` covers the whole audio, zero-padding the
/// last segment; extra segments past the audio get zero speech.
pub fn segment_conditions(
    wav: &Path,
    textgrid: &Path,
    stem: &str,
    config: &IngestConfig,
    words: &dyn WordEmbedder,
    segments: Option<usize>,
) -> Result<Vec<SegmentInputs>, DatasetError> {
    let (m, fps) = (config.window_frames, config.fps);
    for p in [wav, textgrid] {
        if !p.is_file() {
            return Err(DatasetError::MissingFile(p.to_path_buf()));
        }
    }
    let samples = peak_normalize(&load_wav(wav).map_err(ConditioningError::from)?, PEAK_DBFS);
    let audio = segment_speech(&samples, segment_samples(m, fps));
    let intervals = parse_textgrid(&std::fs::read_to_string(textgrid)?)?;
    let speech = make_speech_embedder(config, stem)?;
    (0..segments.unwrap_or(audio.len()))
        .map(|w| {
            let speech_rows = match audio.get(w) {
                Some(seg) => speech.embed(seg, w, m, fps)?,
                None => Array2::zeros((m, config.speech_dim)),
            };
            let text = embed_text(&intervals, (w * m) as f64 / fps, m, fps, words);
            Ok(SegmentInputs { speech: speech_rows, text })
        })
        .collect()
}

/// Windows of one clip, already encoded into a blob.
fn encode_clip(
    corpus_dir: &Path,
    clip: &ParsedClip,
    normalizer: &FeatureNormalizer,
    words: &dyn WordEmbedder,
    config: &IngestConfig,
) -> Result<(ClipEntry, Vec<u8>), DatasetError> {
    let (m, n) = (config.window_frames, config.seed_frames);
    let normalized = normalizer.normalize_rows(&clip.features);
    let mean_seed = Array2::<f64>::zeros((n, normalized.ncols()));
    let conditions = segment_conditions(
        &corpus_dir.join(format!("{}.wav", clip.stem)),
        &corpus_dir.join(format!("{}.TextGrid", clip.stem)),
        &clip.stem,
        config,
        words,
        Some(normalized.nrows() / m),
    )?;

    let mut writer = BlobWriter::default();
    let mut windows = Vec::new();
    for w in 0..normalized.nrows() / m {
        let start = w * m;
        let x0 = normalized.slice(s![start..start + m, ..]).to_owned();
        let seed = match config.seed_policy {
            SeedPolicy::Preceding if start >= n => normalized.slice(s![start - n..start, ..]).to_owned(),
            _ => mean_seed.clone(),
        };
        let SegmentInputs { speech: speech_rows, text: text_rows } = &conditions[w];
        windows.push(WindowRef {
            start_frame: start,
            x0: writer.push_array(&x0, DType::F32),
            seed: writer.push_array(&seed, DType::F32),
            speech: writer.push_array(speech_rows, DType::F32),
            text: writer.push_array(text_rows, DType::F32),
        });
    }
    let entry = ClipEntry {
        clip_id: clip.stem.clone(),
        emotion_label: clip.emotion.as_str().to_string(),
        sources: SourceFiles {
            bvh: format!("{}.bvh", clip.stem),
            wav: format!("{}.wav", clip.stem),
            textgrid: format!("{}.TextGrid", clip.stem),
        },
        frames: normalized.nrows(),
        blob: format!("{}.bin", clip.stem),
        windows,
    };
    Ok((entry, writer.bytes))
}

/// Preprocesses a corpus of `{stem}.bvh / .wav / .TextGrid` triples into
/// `out_dir`. Output bytes depend only on the corpus and config.
pub fn ingest(corpus_dir: &Path, out_dir: &Path, config: &IngestConfig) -> Result<DatasetManifest, DatasetError> {
    config.validate()?;
    let stems = discover_triples(corpus_dir)?;
    let parsed: Vec<ParsedClip> = stems
        .par_iter()
        .map(|stem| parse_clip(corpus_dir, stem, config).map_err(|e| e.in_clip(stem)))
        .collect::<Result<_, _>>()?;
    let needed = config.window_frames + config.seed_frames;
    let (kept, skipped): (Vec<_>, Vec<_>) = parsed.into_iter().partition(|c| c.features.nrows() >= needed);
    for c in &skipped {
        log::warn!("skipping {}: {} frames, need at least {needed}", c.stem, c.features.nrows());
    }
    let Some(first) = kept.first() else {
        return Err(DatasetError::NoClips(corpus_dir.to_path_buf()));
    };
    let skeleton = first.skeleton.clone();
    for c in &kept[1..] {
        let names = |s: &SkeletonHierarchy| s.joints.iter().map(|j| j.name.clone()).collect::<Vec<_>>();
        if names(&c.skeleton) != names(&skeleton) {
            return Err(DatasetError::Clip {
                clip: c.stem.clone(),
                source: Box::new(DatasetError::Config("skeleton differs from the first clip".into())),
            });
        }
    }

    let sequences: Vec<_> = kept
        .iter()
        .map(|c| crate::features::GestureFeatureSequence::new(c.features.clone(), config.fps, config.joint_count))
        .collect::<Result<_, _>>()?;
    let normalizer = fit_normalizer(&sequences)?;
    let words = make_word_embedder(config)?;
    let encoded: Vec<(ClipEntry, Vec<u8>)> = kept
        .par_iter()
        .map(|c| encode_clip(corpus_dir, c, &normalizer, words.as_ref(), config).map_err(|e| e.in_clip(&c.stem)))
        .collect::<Result<_, _>>()?;

    let mut norm_blob = BlobWriter::default();
    let mean = norm_blob.push(normalizer.mean.as_slice().expect("contiguous"), &[normalizer.dim()], DType::F64);
    let std = norm_blob.push(normalizer.std.as_slice().expect("contiguous"), &[normalizer.dim()], DType::F64);
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        fps: config.fps,
        window_frames: config.window_frames,
        seed_frames: config.seed_frames,
        feature_dim: config.feature_dim(),
        joint_count: config.joint_count,
        speech_dim: config.speech_dim,
        text_dim: config.text_dim,
        normalizer: NormalizerRef { blob: NORMALIZER_BLOB.into(), mean, std },
        skeleton: write_hierarchy(&skeleton),
        config: config.clone(),
        entries: encoded.iter().map(|(e, _)| e.clone()).collect(),
    };
    manifest.validate()?;
    if !config.dry_run {
        std::fs::create_dir_all(out_dir)?;
        blob::write_file(&out_dir.join(NORMALIZER_BLOB), &norm_blob.bytes)?;
        for (entry, bytes) in &encoded {
            blob::write_file(&out_dir.join(&entry.blob), bytes)?;
        }
        let json = serde_json::to_string_pretty(&manifest)?;
        blob::write_file(&out_dir.join(MANIFEST_FILE), json.as_bytes())?;
    }
    Ok(manifest)
}

/// An opened manifest. Reads are independent, so one `Dataset` can be shared
/// across threads.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub root: PathBuf,
    pub normalizer: FeatureNormalizer,
    /// (entry, window) for each flat window index.
    index: Vec<(usize, usize)>,
}

impl Dataset {
    /// `path` may be the manifest file or the directory containing it.
    pub fn open(path: &Path) -> Result<Self, DatasetError> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        if !file.is_file() {
            return Err(DatasetError::MissingFile(file));
        }
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        let manifest: DatasetManifest = serde_json::from_slice(&std::fs::read(&file)?)?;
        manifest.validate()?;
        for blob_name in std::iter::once(&manifest.normalizer.blob).chain(manifest.entries.iter().map(|e| &e.blob)) {
            let p = root.join(blob_name);
            if !p.is_file() {
                return Err(DatasetError::MissingFile(p));
            }
        }
        for e in &manifest.entries {
            let len = std::fs::metadata(root.join(&e.blob))?.len();
            if let Some(w) = e.windows.iter().find(|w| [&w.x0, &w.seed, &w.speech, &w.text].iter().any(|r| r.offset >= len)) {
                return Err(DatasetError::Manifest(format!("{} window {} points past the blob", e.clip_id, w.start_frame)));
            }
        }
        let mut reader = BufReader::new(File::open(root.join(&manifest.normalizer.blob))?);
        let mean = read_record(&mut reader, &manifest.normalizer.mean, "normalizer mean")?;
        let std = read_record(&mut reader, &manifest.normalizer.std, "normalizer std")?;
        let normalizer = FeatureNormalizer::new(into1(mean)?, into1(std)?);
        let index = manifest
            .entries
            .iter()
            .enumerate()
            .flat_map(|(e, entry)| (0..entry.windows.len()).map(move |w| (e, w)))
            .collect();
        Ok(Self { manifest, root, normalizer, index })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn skeleton(&self) -> Result<SkeletonHierarchy, DatasetError> {
        Ok(parse_hierarchy(&self.manifest.skeleton)?)
    }

    /// (entry, window) position of a flat window index.
    pub fn locate(&self, index: usize) -> Result<(usize, usize), DatasetError> {
        self.index.get(index).copied().ok_or(DatasetError::Index { index, len: self.len() })
    }

    pub fn load_window(&self, index: usize) -> Result<TrainingExample, DatasetError> {
        let (e, w) = self.locate(index)?;
        let entry = &self.manifest.entries[e];
        let win = &entry.windows[w];
        let mut reader = BufReader::new(File::open(self.root.join(&entry.blob))?);
        let what = |t: &str| format!("{} window {} {t}", entry.clip_id, win.start_frame);
        let x0 = into2(read_record(&mut reader, &win.x0, &what("x0"))?)?;
        let seed = into2(read_record(&mut reader, &win.seed, &what("seed"))?)?;
        let speech = into2(read_record(&mut reader, &win.speech, &what("speech"))?)?;
        let text = into2(read_record(&mut reader, &win.text, &what("text"))?)?;
        let emotion: Emotion = entry.emotion_label.parse()?;
        Ok(TrainingExample {
            x0,
            cond: ConditionBundle { seed, emotion: emotion.one_hot(), speech, text, seed_mask: false, emotion_mask: false },
        })
    }

    /// Loads `indices` in an order shuffled by `rng`.
    pub fn load_batch(&self, indices: &[usize], rng: &mut impl Rng) -> Result<Vec<TrainingExample>, DatasetError> {
        let mut order = indices.to_vec();
        order.shuffle(rng);
        order.into_iter().map(|i| self.load_window(i)).collect()
    }

    /// `batch` indices drawn uniformly with replacement.
    pub fn draw_indices(&self, batch: usize, rng: &mut impl Rng) -> Vec<usize> {
        (0..batch).map(|_| rng.random_range(0..self.len())).collect()
    }

    /// Normalized x0 windows of one clip, concatenated.
    pub fn clip_features(&self, entry: usize) -> Result<Array2<f64>, DatasetError> {
        let first = self.index.iter().position(|&(e, _)| e == entry).ok_or(DatasetError::Index {
            index: entry,
            len: self.manifest.entries.len(),
        })?;
        let count = self.manifest.entries[entry].windows.len();
        let parts: Vec<Array2<f64>> =
            (first..first + count).map(|i| self.load_window(i).map(|x| x.x0)).collect::<Result<_, _>>()?;
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        Ok(ndarray::concatenate(ndarray::Axis(0), &views).expect("equal widths"))
    }
}

fn into1(a: ndarray::ArrayD<f64>) -> Result<Array1<f64>, DatasetError> {
    a.into_dimensionality::<Ix1>().map_err(|e| DatasetError::Corrupt(e.to_string()))
}

fn into2(a: ndarray::ArrayD<f64>) -> Result<Array2<f64>, DatasetError> {
    a.into_dimensionality::<Ix2>().map_err(|e| DatasetError::Corrupt(e.to_string()))
}
