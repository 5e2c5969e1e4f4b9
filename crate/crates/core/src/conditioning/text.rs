//! Word embeddings aligned to gesture frames.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::textgrid::WordInterval;
use super::ConditioningError;

pub const TEXT_DIM: usize = 300;
pub const MIN_GRAM: usize = 3;
pub const MAX_GRAM: usize = 6;

pub trait WordEmbedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed_word(&self, word: &str) -> Array1<f64>;
}

fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Bag of hashed character n-grams. Each n-gram seeds its own generator, so
/// a vector depends only on (seed, n-gram) and never on vocabulary.
#[derive(Debug, Clone)]
pub struct HashedNgramEmbedder {
    pub seed: u64,
    pub dim: usize,
}

impl HashedNgramEmbedder {
    pub fn new(seed: u64) -> Self {
        Self { seed, dim: TEXT_DIM }
    }

    fn gram_vector(&self, gram: &str) -> Array1<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(gram.as_bytes(), self.seed));
        let scale = 1.0 / (self.dim as f64).sqrt();
        Array1::from_shape_simple_fn(self.dim, || {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        })
    }
}

impl WordEmbedder for HashedNgramEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_word(&self, word: &str) -> Array1<f64> {
        let padded: Vec<char> = format!("<{}>", word.to_lowercase()).chars().collect();
        let mut acc = Array1::zeros(self.dim);
        let mut count = 0usize;
        for n in MIN_GRAM..=MAX_GRAM {
            for gram in padded.windows(n) {
                acc += &self.gram_vector(&gram.iter().collect::<String>());
                count += 1;
            }
        }
        if count == 0 {
            // shorter than the smallest n-gram: hash the whole token
            return self.gram_vector(&padded.iter().collect::<String>());
        }
        acc / count as f64
    }
}

/// Word-vector table with hashed fallback for out-of-vocabulary words.
#[derive(Debug, Clone)]
pub struct TableEmbedder {
    table: HashMap<String, Array1<f64>>,
    fallback: HashedNgramEmbedder,
}

impl TableEmbedder {
    pub fn new(table: HashMap<String, Array1<f64>>, fallback_seed: u64, dim: usize) -> Result<Self, ConditioningError> {
        if let Some(v) = table.values().find(|v| v.len() != dim) {
            return Err(ConditioningError::EmbeddingWidth { expected: dim, found: v.len() });
        }
        Ok(Self { table, fallback: HashedNgramEmbedder { seed: fallback_seed, dim } })
    }

    /// Parses `word v1 .. vd` lines. A leading fastText-style `count dim`
    /// header line is skipped.
    pub fn parse(text: &str, fallback_seed: u64, dim: usize) -> Result<Self, ConditioningError> {
        let mut table = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let values: Vec<&str> = parts.collect();
            if i == 0 && values.len() == 1 && word.parse::<usize>().is_ok() {
                continue;
            }
            let v = values
                .iter()
                .map(|t| t.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| ConditioningError::Parse(format!("word table line {}", i + 1)))?;
            if v.len() != dim {
                return Err(ConditioningError::EmbeddingWidth { expected: dim, found: v.len() });
            }
            table.insert(word.to_lowercase(), Array1::from(v));
        }
        Self::new(table, fallback_seed, dim)
    }

    pub fn load(path: impl AsRef<Path>, fallback_seed: u64, dim: usize) -> Result<Self, ConditioningError> {
        Self::parse(&std::fs::read_to_string(path)?, fallback_seed, dim)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.table.contains_key(&word.to_lowercase())
    }
}

impl WordEmbedder for TableEmbedder {
    fn dim(&self) -> usize {
        self.fallback.dim
    }

    fn embed_word(&self, word: &str) -> Array1<f64> {
        match self.table.get(&word.to_lowercase()) {
            Some(v) => v.clone(),
            None => self.fallback.embed_word(word),
        }
    }
}

/// `frames × dim` matrix: frame `f` (time `segment_start + f / fps`) takes
/// the embedding of the word whose half-open interval covers it, or zeros.
pub fn embed_text(
    intervals: &[WordInterval],
    segment_start: f64,
    frames: usize,
    fps: f64,
    provider: &dyn WordEmbedder,
) -> Array2<f64> {
    let mut out = Array2::zeros((frames, provider.dim()));
    let mut cache: HashMap<&str, Array1<f64>> = HashMap::new();
    for f in 0..frames {
        let t = segment_start + f as f64 / fps;
        // intervals are sorted and disjoint
        let idx = intervals.partition_point(|w| w.end <= t);
        if let Some(w) = intervals.get(idx) {
            if w.start <= t && t < w.end {
                let v = cache.entry(w.word.as_str()).or_insert_with(|| provider.embed_word(&w.word));
                out.row_mut(f).assign(v);
            }
        }
    }
    out
}
