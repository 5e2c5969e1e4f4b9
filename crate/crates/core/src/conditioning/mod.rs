//! Condition inputs for the denoiser: seed gesture, emotion, speech and text.

pub mod emotion;
pub mod speech;
pub mod text;
pub mod textgrid;
pub mod wav;

use ndarray::{Array1, Array2};
use thiserror::Error;

pub use emotion::{encode_emotion, Emotion, EMOTION_COUNT};
pub use speech::{
    interpolate_rows, parse_matrix, segment_samples, segment_speech, MelProjectionEmbedder, PrecomputedSpeech, SpeechEmbedder,
    SpeechSegment, SPEECH_DIM,
};
pub use text::{embed_text, HashedNgramEmbedder, TableEmbedder, WordEmbedder, TEXT_DIM};
pub use textgrid::{parse_textgrid, write_textgrid, WordInterval};
pub use wav::{load_wav, peak_normalize, WavError, TARGET_SAMPLE_RATE};

pub const DEFAULT_SEED_FRAMES: usize = 8;
pub const DEFAULT_WINDOW_FRAMES: usize = 80;
pub const PEAK_DBFS: f64 = -3.0;

#[derive(Debug, Error)]
pub enum ConditioningError {
    #[error(transparent)]
    Wav(#[from] WavError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("embedding width {found}, expected {expected}")]
    EmbeddingWidth { expected: usize, found: usize },
    #[error("embedding file has {found} rows, segment needs at least {needed}")]
    EmbeddingRows { needed: usize, found: usize },
    #[error("textgrid: {0}")]
    TextGrid(String),
    #[error("textgrid has no interval tier named \"words\"")]
    MissingWordsTier,
    #[error("interval {word:?} has end {end} not after start {start}")]
    BadInterval { word: String, start: f64, end: f64 },
    #[error("intervals {first:?} and {second:?} overlap")]
    OverlappingIntervals { first: String, second: String },
    #[error("unknown emotion label {0:?}")]
    UnknownEmotion(String),
    #[error("condition shape mismatch: {0}")]
    Shape(String),
}

/// c = [s, e, a, v] for one window of M frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionBundle {
    /// N × D seed frames.
    pub seed: Array2<f64>,
    /// One-hot over [`Emotion::ALL`].
    pub emotion: Array1<f64>,
    /// M × speech width.
    pub speech: Array2<f64>,
    /// M × text width.
    pub text: Array2<f64>,
    pub seed_mask: bool,
    pub emotion_mask: bool,
}

impl ConditionBundle {
    pub fn frames(&self) -> usize {
        self.speech.nrows()
    }

    pub fn validate(&self, seed_frames: usize, feature_dim: usize) -> Result<(), ConditioningError> {
        let shape = |what: &str| Err(ConditioningError::Shape(what.to_string()));
        if self.seed.dim() != (seed_frames, feature_dim) {
            return shape(&format!("seed is {:?}, expected ({seed_frames}, {feature_dim})", self.seed.dim()));
        }
        if self.emotion.len() != EMOTION_COUNT {
            return shape(&format!("emotion has {} entries", self.emotion.len()));
        }
        if self.text.nrows() != self.speech.nrows() {
            return shape(&format!("speech has {} rows, text {}", self.speech.nrows(), self.text.nrows()));
        }
        Ok(())
    }

    /// c_∅ = [∅, ∅, a, v]: seed and emotion masked together.
    pub fn unconditional(&self) -> Self {
        Self { seed_mask: true, emotion_mask: true, ..self.clone() }
    }

    pub fn with_emotion(&self, emotion: Emotion) -> Self {
        Self { emotion: emotion.one_hot(), emotion_mask: false, ..self.clone() }
    }

    /// Seed with masking applied (zeros when masked).
    pub fn effective_seed(&self) -> Array2<f64> {
        if self.seed_mask {
            Array2::zeros(self.seed.raw_dim())
        } else {
            self.seed.clone()
        }
    }

    pub fn effective_emotion(&self) -> Array1<f64> {
        if self.emotion_mask {
            Array1::zeros(self.emotion.raw_dim())
        } else {
            self.emotion.clone()
        }
    }
}
