//! Speech segmentation and frame-rate speech embeddings.
//!
//! Two providers implement [`SpeechEmbedder`]:
//! * [`MelProjectionEmbedder`]: 80-bin log-mel filterbank (25 ms Hann
//!   window, hop of one gesture frame) followed by a fixed seeded random
//!   projection to the embedding width.
//! * [`PrecomputedSpeech`]: rows loaded from a text matrix produced by an
//!   external encoder, linearly interpolated to gesture-frame timestamps.

use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::wav::TARGET_SAMPLE_RATE;
use super::ConditioningError;

pub const SPEECH_DIM: usize = 1024;
pub const N_MELS: usize = 80;
pub const WINDOW_SAMPLES: usize = 400;
pub const N_FFT: usize = 512;
pub const LOG_FLOOR: f64 = 1e-10;

/// Fixed-length window of 16 kHz speech.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeechSegment {
    pub samples: Vec<f64>,
}

impl SpeechSegment {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / TARGET_SAMPLE_RATE as f64
    }
}

/// Samples per segment for `frames` gesture frames at `fps`.
pub fn segment_samples(frames: usize, fps: f64) -> usize {
    (frames as f64 * TARGET_SAMPLE_RATE as f64 / fps).round() as usize
}

/// Consecutive non-overlapping windows of `segment_len` samples; the last
/// window is zero-padded.
pub fn segment_speech(samples: &[f64], segment_len: usize) -> Vec<SpeechSegment> {
    samples
        .chunks(segment_len)
        .map(|chunk| {
            let mut s = chunk.to_vec();
            s.resize(segment_len, 0.0);
            SpeechSegment { samples: s }
        })
        .collect()
}

pub trait SpeechEmbedder: Send + Sync {
    fn dim(&self) -> usize;

    /// `frames × dim` embedding of segment number `segment_index`, with row
    /// `f` describing time `f / fps` inside the segment.
    fn embed(
        &self,
        segment: &SpeechSegment,
        segment_index: usize,
        frames: usize,
        fps: f64,
    ) -> Result<Array2<f64>, ConditioningError>;
}

/// Linear interpolation of `rows` (sampled at `rate` rows/s, first row at
/// time 0) at the given times. Times past the end clamp to the last row.
pub fn interpolate_rows(rows: &Array2<f64>, rate: f64, times: &[f64]) -> Array2<f64> {
    let n = rows.nrows();
    let mut out = Array2::zeros((times.len(), rows.ncols()));
    for (i, &t) in times.iter().enumerate() {
        let pos = (t * rate).max(0.0);
        let lo = (pos.floor() as usize).min(n - 1);
        let hi = (lo + 1).min(n - 1);
        let w = if hi == lo { 0.0 } else { pos - lo as f64 };
        let mut dst = out.row_mut(i);
        for ((d, a), b) in dst.iter_mut().zip(rows.row(lo)).zip(rows.row(hi)) {
            *d = a * (1.0 - w) + b * w;
        }
    }
    out
}

/// Triangular mel filters (HTK scale) over `n_fft / 2 + 1` bins.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: f64) -> Array2<f64> {
    let hz_to_mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let mel_to_hz = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let bins = n_fft / 2 + 1;
    let top = hz_to_mel(sample_rate / 2.0);
    let edges: Vec<f64> = (0..n_mels + 2).map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64)).collect();
    let mut fb = Array2::zeros((n_mels, bins));
    for m in 0..n_mels {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for b in 0..bins {
            let f = b as f64 * sample_rate / n_fft as f64;
            let w = if f > lo && f <= mid {
                (f - lo) / (mid - lo)
            } else if f > mid && f < hi {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
            fb[[m, b]] = w;
        }
    }
    fb
}

/// Deterministic baseline speech embedding.
pub struct MelProjectionEmbedder {
    seed: u64,
    filters: Array2<f64>,
    window: Vec<f64>,
    projection: Array2<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for MelProjectionEmbedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MelProjectionEmbedder").field("seed", &self.seed).field("dim", &self.projection.ncols()).finish()
    }
}

impl MelProjectionEmbedder {
    pub fn new(seed: u64) -> Self {
        Self::with_dim(seed, SPEECH_DIM)
    }

    pub fn with_dim(seed: u64, dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (N_MELS as f64).sqrt();
        let projection = Array2::from_shape_simple_fn((N_MELS, dim), || {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        });
        // periodic Hann
        let window = (0..WINDOW_SAMPLES)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / WINDOW_SAMPLES as f64).cos())
            .collect();
        Self {
            seed,
            filters: mel_filterbank(N_MELS, N_FFT, TARGET_SAMPLE_RATE as f64),
            window,
            projection,
            fft: FftPlanner::new().plan_fft_forward(N_FFT),
        }
    }

    /// `frames × 80` log-mel energies, one analysis window starting every
    /// `hop` samples.
    pub fn log_mel(&self, samples: &[f64], hop: usize, frames: usize) -> Array2<f64> {
        let bins = N_FFT / 2 + 1;
        let mut out = Array2::zeros((frames, N_MELS));
        let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];
        let mut power = vec![0.0; bins];
        for f in 0..frames {
            let start = f * hop;
            for (i, slot) in buf.iter_mut().enumerate() {
                let x = if i < WINDOW_SAMPLES { samples.get(start + i).copied().unwrap_or(0.0) * self.window[i] } else { 0.0 };
                *slot = Complex::new(x, 0.0);
            }
            self.fft.process(&mut buf);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            for m in 0..N_MELS {
                let e: f64 = self.filters.row(m).iter().zip(&power).map(|(w, p)| w * p).sum();
                out[[f, m]] = e.max(LOG_FLOOR).ln();
            }
        }
        out
    }
}

impl SpeechEmbedder for MelProjectionEmbedder {
    fn dim(&self) -> usize {
        self.projection.ncols()
    }

    fn embed(
        &self,
        segment: &SpeechSegment,
        _segment_index: usize,
        frames: usize,
        fps: f64,
    ) -> Result<Array2<f64>, ConditioningError> {
        let hop = (TARGET_SAMPLE_RATE as f64 / fps).round() as usize;
        let native = segment.len().div_ceil(hop).max(1);
        let mel = self.log_mel(&segment.samples, hop, native);
        let mel = if native == frames {
            mel
        } else {
            let native_rate = TARGET_SAMPLE_RATE as f64 / hop as f64;
            let times: Vec<f64> = (0..frames).map(|f| f as f64 / fps).collect();
            interpolate_rows(&mel, native_rate, &times)
        };
        Ok(mel.dot(&self.projection))
    }
}

/// Embeddings computed elsewhere, stored as one whitespace-separated row per
/// encoder frame, covering the whole recording.
#[derive(Debug, Clone)]
pub struct PrecomputedSpeech {
    pub rows: Array2<f64>,
    /// Encoder frames per second.
    pub rate: f64,
}

impl PrecomputedSpeech {
    pub fn new(rows: Array2<f64>, rate: f64, expected_dim: usize) -> Result<Self, ConditioningError> {
        if rows.ncols() != expected_dim {
            return Err(ConditioningError::EmbeddingWidth { expected: expected_dim, found: rows.ncols() });
        }
        if rows.nrows() == 0 {
            return Err(ConditioningError::EmbeddingRows { needed: 1, found: 0 });
        }
        Ok(Self { rows, rate })
    }

    pub fn load(path: impl AsRef<Path>, rate: f64, expected_dim: usize) -> Result<Self, ConditioningError> {
        let text = std::fs::read_to_string(path)?;
        let rows = parse_matrix(&text)?;
        Self::new(rows, rate, expected_dim)
    }
}

/// Whitespace-separated rows; blank lines and `#` comments are skipped.
pub fn parse_matrix(text: &str) -> Result<Array2<f64>, ConditioningError> {
    let mut width = None;
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let before = values.len();
        for tok in line.split_whitespace() {
            values.push(tok.parse::<f64>().map_err(|_| ConditioningError::Parse(format!("line {}: bad number {tok:?}", i + 1)))?);
        }
        let w = values.len() - before;
        match width {
            None => width = Some(w),
            Some(expected) if expected != w => {
                return Err(ConditioningError::EmbeddingWidth { expected, found: w });
            }
            _ => {}
        }
        rows += 1;
    }
    Ok(Array2::from_shape_vec((rows, width.unwrap_or(0)), values).expect("consistent row widths"))
}

impl SpeechEmbedder for PrecomputedSpeech {
    fn dim(&self) -> usize {
        self.rows.ncols()
    }

    fn embed(
        &self,
        segment: &SpeechSegment,
        segment_index: usize,
        frames: usize,
        fps: f64,
    ) -> Result<Array2<f64>, ConditioningError> {
        let start = segment_index as f64 * segment.duration();
        let first_row = (start * self.rate).floor() as usize;
        if first_row >= self.rows.nrows() {
            return Err(ConditioningError::EmbeddingRows { needed: first_row + 1, found: self.rows.nrows() });
        }
        let times: Vec<f64> = (0..frames).map(|f| start + f as f64 / fps).collect();
        Ok(interpolate_rows(&self.rows, self.rate, &times))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segmentation_counts_and_padding() {
        assert_eq!(segment_speech(&vec![0.1; 64000], 64000).len(), 1);
        let segs = segment_speech(&vec![0.1; 100000], 64000);
        assert_eq!(segs.len(), 2);
        assert!(segs.iter().all(|s| s.len() == 64000));
        assert_eq!(segs[1].samples.iter().filter(|&&x| x == 0.0).count(), 28000);
        assert!(segment_speech(&[], 64000).is_empty());
        assert_eq!(segment_samples(80, 20.0), 64000);
    }

    fn tone(len: usize, freq: f64) -> SpeechSegment {
        SpeechSegment {
            samples: (0..len).map(|i| 0.3 * (2.0 * std::f64::consts::PI * freq * i as f64 / 16000.0).sin()).collect(),
        }
    }

    #[test]
    fn baseline_shape_and_determinism() {
        let provider = MelProjectionEmbedder::new(7);
        let seg = tone(64000, 220.0);
        let a = provider.embed(&seg, 0, 80, 20.0).unwrap();
        assert_eq!(a.dim(), (80, 1024));
        let b = MelProjectionEmbedder::new(7).embed(&seg, 0, 80, 20.0).unwrap();
        assert_eq!(a, b);
        let c = MelProjectionEmbedder::new(8).embed(&seg, 0, 80, 20.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn silence_gives_identical_finite_rows() {
        let provider = MelProjectionEmbedder::new(1);
        let seg = SpeechSegment { samples: vec![0.0; 64000] };
        let e = provider.embed(&seg, 0, 80, 20.0).unwrap();
        assert!(e.iter().all(|v| v.is_finite()));
        let floor_row: Vec<f64> = (0..1024).map(|k| (0..N_MELS).map(|m| LOG_FLOOR.ln() * provider.projection[[m, k]]).sum()).collect();
        for row in e.rows() {
            for (a, b) in row.iter().zip(&floor_row) {
                assert!((a - b).abs() < 1e-9);
            }
            assert_eq!(row, e.row(0));
        }
    }

    #[test]
    fn mel_energy_peaks_near_tone_frequency() {
        let provider = MelProjectionEmbedder::new(1);
        let seg = tone(16000, 1000.0);
        let mel = provider.log_mel(&seg.samples, 800, 20);
        let row = mel.row(5);
        let peak = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        let fb = mel_filterbank(N_MELS, N_FFT, 16000.0);
        let bin = (1000.0 * N_FFT as f64 / 16000.0) as usize;
        assert!(fb[[peak, bin]] > 0.0 || fb[[peak, bin + 1]] > 0.0);
    }

    #[test]
    fn precomputed_rows_interpolate_to_frames() {
        // 50 rows/s, value equals the row index
        let rows = Array2::from_shape_fn((200, 4), |(r, _)| r as f64);
        let p = PrecomputedSpeech::new(rows, 50.0, 4).unwrap();
        let seg = SpeechSegment { samples: vec![0.0; 32000] };
        let e = p.embed(&seg, 1, 40, 20.0).unwrap();
        assert_eq!(e.nrows(), 40);
        // segment 1 starts at 2 s → row 100; frame 1 at 2.05 s → row 102.5
        assert!((e[[0, 0]] - 100.0).abs() < 1e-12);
        assert!((e[[1, 0]] - 102.5).abs() < 1e-12);
        assert!(p.embed(&seg, 2, 40, 20.0).is_err());
    }

    #[test]
    fn precomputed_width_checked() {
        let rows = Array2::zeros((3, 5));
        assert!(matches!(
            PrecomputedSpeech::new(rows, 50.0, 1024),
            Err(ConditioningError::EmbeddingWidth { expected: 1024, found: 5 })
        ));
        assert!(parse_matrix("1 2\n3\n").is_err());
    }
}
