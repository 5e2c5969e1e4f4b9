//! RIFF/WAVE decoding (PCM-16 and IEEE float-32), channel down-mixing and
//! windowed-sinc resampling.

use std::f64::consts::PI;
use std::path::Path;

use thiserror::Error;

pub const TARGET_SAMPLE_RATE: u32 = 16_000;

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Error)]
pub enum WavError {
    #[error("not a RIFF/WAVE file")]
    NotRiff,
    #[error("truncated WAV data: {0}")]
    Truncated(&'static str),
    #[error("unsupported WAV codec (format tag {0:#06x}); only PCM-16 and IEEE float-32 are supported")]
    UnsupportedCodec(u16),
    #[error("unsupported sample width: {bits} bits for format tag {format:#06x}")]
    UnsupportedBits { format: u16, bits: u16 },
    #[error("WAV declares zero channels or zero sample rate")]
    BadFormat,
    #[error("missing {0} chunk")]
    MissingChunk(&'static str),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedWav {
    pub sample_rate: u32,
    pub channels: u16,
    /// Interleaved samples scaled to `[-1, 1]`.
    pub samples: Vec<f64>,
}

impl DecodedWav {
    /// Channel average.
    pub fn to_mono(&self) -> Vec<f64> {
        let c = self.channels as usize;
        if c == 1 {
            return self.samples.clone();
        }
        self.samples.chunks_exact(c).map(|frame| frame.iter().sum::<f64>() / c as f64).collect()
    }
}

fn u16_at(b: &[u8], at: usize) -> Option<u16> {
    b.get(at..at + 2).map(|s| u16::from_le_bytes([s[0], s[1]]))
}

fn u32_at(b: &[u8], at: usize) -> Option<u32> {
    b.get(at..at + 4).map(|s| u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
}

pub fn decode_wav(bytes: &[u8]) -> Result<DecodedWav, WavError> {
    if bytes.len() < 12 {
        return Err(WavError::Truncated("RIFF header"));
    }
    if &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(WavError::NotRiff);
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4).ok_or(WavError::Truncated("chunk header"))? as usize;
        let body_start = pos + 8;
        let body_end = body_start.saturating_add(size);
        match id {
            b"fmt " => {
                if size < 16 || body_end > bytes.len() {
                    return Err(WavError::Truncated("fmt chunk"));
                }
                let body = &bytes[body_start..body_end];
                let mut format = u16_at(body, 0).unwrap();
                let channels = u16_at(body, 2).unwrap();
                let rate = u32_at(body, 4).unwrap();
                let bits = u16_at(body, 14).unwrap();
                if format == FORMAT_EXTENSIBLE {
                    // sub-format GUID starts at byte 24; its first two bytes carry the tag
                    format = u16_at(body, 24).ok_or(WavError::Truncated("extensible fmt chunk"))?;
                }
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => {
                // tolerate a data chunk whose declared size overruns the file
                let end = body_end.min(bytes.len());
                if body_end > bytes.len() && fmt.is_none() {
                    return Err(WavError::Truncated("data chunk"));
                }
                data = Some(&bytes[body_start..end]);
            }
            _ => {}
        }
        pos = body_end + (size & 1);
    }
    let (format, channels, sample_rate, bits) = fmt.ok_or(WavError::MissingChunk("fmt "))?;
    let data = data.ok_or(WavError::MissingChunk("data"))?;
    if channels == 0 || sample_rate == 0 {
        return Err(WavError::BadFormat);
    }
    let samples: Vec<f64> = match (format, bits) {
        (FORMAT_PCM, 16) => data.chunks_exact(2).map(|s| i16::from_le_bytes([s[0], s[1]]) as f64 / 32768.0).collect(),
        (FORMAT_IEEE_FLOAT, 32) => data
            .chunks_exact(4)
            .map(|s| (f32::from_le_bytes([s[0], s[1], s[2], s[3]]) as f64).clamp(-1.0, 1.0))
            .collect(),
        (FORMAT_PCM, _) | (FORMAT_IEEE_FLOAT, _) => return Err(WavError::UnsupportedBits { format, bits }),
        (other, _) => return Err(WavError::UnsupportedCodec(other)),
    };
    let whole = samples.len() - samples.len() % channels as usize;
    let mut samples = samples;
    samples.truncate(whole);
    Ok(DecodedWav { sample_rate, channels, samples })
}

/// Loads a WAV file as mono samples at 16 kHz in `[-1, 1]`.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Vec<f64>, WavError> {
    let bytes = std::fs::read(path)?;
    let wav = decode_wav(&bytes)?;
    let mono = wav.to_mono();
    Ok(resample(&mono, wav.sample_rate, TARGET_SAMPLE_RATE))
}

/// Encodes mono samples as 16-bit PCM.
pub fn encode_wav_pcm16(samples: &[f64], sample_rate: u32) -> Vec<u8> {
    encode(samples.len() * 2, 1, sample_rate, FORMAT_PCM, 16, |out| {
        for &s in samples {
            let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
            out.extend_from_slice(&v.to_le_bytes());
        }
    })
}

/// Encodes interleaved samples as IEEE float-32.
pub fn encode_wav_f32(samples: &[f64], channels: u16, sample_rate: u32) -> Vec<u8> {
    encode(samples.len() * 4, channels, sample_rate, FORMAT_IEEE_FLOAT, 32, |out| {
        for &s in samples {
            out.extend_from_slice(&(s as f32).to_le_bytes());
        }
    })
}

fn encode(data_len: usize, channels: u16, rate: u32, format: u16, bits: u16, body: impl FnOnce(&mut Vec<u8>)) -> Vec<u8> {
    let block_align = channels * bits / 8;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&format.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * block_align as u32).to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    body(&mut out);
    out
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

const SINC_ZERO_CROSSINGS: f64 = 48.0;
const KAISER_BETA: f64 = 10.0;
const PASSBAND: f64 = 0.95;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

struct SincKernel {
    cutoff: f64,
    half_width: f64,
    i0_beta: f64,
}

impl SincKernel {
    fn weight(&self, d: f64) -> f64 {
        if d.abs() > self.half_width {
            return 0.0;
        }
        let arg = 2.0 * self.cutoff * d;
        let sinc = if arg.abs() < 1e-12 { 1.0 } else { (PI * arg).sin() / (PI * arg) };
        let r = d / self.half_width;
        let window = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / self.i0_beta;
        2.0 * self.cutoff * sinc * window
    }
}

/// Most distinct fractional phases for which a weight table is precomputed.
const MAX_PHASES: u64 = 4096;

/// Band-limited resampling with a Kaiser-windowed sinc kernel.
/// Output length is `floor(len · to / from)`.
pub fn resample(input: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to || input.is_empty() {
        return input.to_vec();
    }
    let ratio = to as f64 / from as f64;
    let out_len = (input.len() as u64 * to as u64 / from as u64) as usize;
    // cutoff in cycles per input sample
    let cutoff = 0.5 * ratio.min(1.0) * PASSBAND;
    let kernel = SincKernel { cutoff, half_width: SINC_ZERO_CROSSINGS / (2.0 * cutoff), i0_beta: bessel_i0(KAISER_BETA) };
    let reach = kernel.half_width.ceil() as i64;

    let g = gcd(from as u64, to as u64);
    let (step, phases) = (from as u64 / g, to as u64 / g);
    let table: Option<Vec<Vec<f64>>> = (phases <= MAX_PHASES).then(|| {
        (0..phases)
            .map(|p| {
                let frac = p as f64 / phases as f64;
                (-reach..=reach + 1).map(|j| kernel.weight(frac - j as f64)).collect()
            })
            .collect()
    });

    let last = input.len() as i64 - 1;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len as u64 {
        let numer = n * step;
        let base = (numer / phases) as i64;
        let phase = numer % phases;
        let frac = phase as f64 / phases as f64;
        let mut acc = 0.0;
        for (idx, j) in (-reach..=reach + 1).enumerate() {
            let k = base + j;
            if k < 0 || k > last {
                continue;
            }
            let w = match &table {
                Some(t) => t[phase as usize][idx],
                None => kernel.weight(frac - j as f64),
            };
            acc += input[k as usize] * w;
        }
        out.push(acc);
    }
    out
}

/// Scales so that the absolute peak sits at `dbfs` (e.g. -3.0). Silence is
/// returned unchanged.
pub fn peak_normalize(samples: &[f64], dbfs: f64) -> Vec<f64> {
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak == 0.0 {
        return samples.to_vec();
    }
    let gain = 10f64.powf(dbfs / 20.0) / peak;
    samples.iter().map(|s| s * gain).collect()
}
