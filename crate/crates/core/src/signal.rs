//! WAV loading and the mean-pooled MFCC representation.
//!
//! The MFCC chain is: periodic Hann window, magnitude FFT, triangular HTK
//! mel filterbank, natural log with a floor, orthonormal DCT-II. Frames are
//! taken without padding, so a buffer of `len` samples yields
//! `(len - window) / hop + 1` frames.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::features::{column_means, FeatureSetId, FeatureVector};

pub const SAMPLE_RATE: u32 = 16_000;

/// Mono audio at 16 kHz with samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::UnsupportedSampleRate(sample_rate));
        }
        if samples.is_empty() {
            return Err(Error::InvalidData("audio buffer is empty".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("audio samples".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Loads a 16 kHz PCM WAV (16-bit integer or 32-bit float).
///
/// Multi-channel files are averaged down to mono. Files at any other sample
/// rate are rejected rather than resampled.
pub fn load_wav(path: &Path) -> Result<AudioBuffer> {
    let wav_err = |message: String| Error::Wav {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => wav_err(other.to_string()),
    })?;
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::UnsupportedSampleRate(spec.sample_rate));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_err(e.to_string()))?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_err(e.to_string()))?,
        (fmt, bits) => {
            return Err(wav_err(format!(
                "unsupported sample format {fmt:?} {bits}-bit (expected 16-bit PCM or 32-bit float)"
            )))
        }
    };
    let channels = usize::from(spec.channels.max(1));
    let samples = if channels == 1 {
        interleaved
    } else {
        log::warn!(
            "{}: {} channels mean-downmixed to mono",
            path.display(),
            channels
        );
        interleaved
            .chunks_exact(channels)
            .map(|c| c.iter().sum::<f64>() / channels as f64)
            .collect()
    };
    AudioBuffer::new(samples, spec.sample_rate)
}

/// Writes mono 16-bit PCM. Samples are scaled by 32768, rounded and clamped,
/// so a load round-trip is exact to within 1/32768.
pub fn write_wav_pcm16(path: &Path, samples: &[f64]) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let to_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(to_err)?;
    for &s in samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(to_err)?;
    }
    writer.finalize().map_err(to_err)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfccConfig {
    pub n_coeffs: usize,
    pub window: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            n_coeffs: 40,
            window: 2048,
            hop: 512,
            n_mels: 128,
            log_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.hop == 0 || self.hop > self.window {
            return Err(Error::Config(format!(
                "mfcc: need 0 < hop <= window (hop {}, window {})",
                self.hop, self.window
            )));
        }
        if self.n_coeffs == 0 || self.n_coeffs > self.n_mels {
            return Err(Error::Config(format!(
                "mfcc: need 0 < n_coeffs <= n_mels ({} > {})",
                self.n_coeffs, self.n_mels
            )));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::Config("mfcc: log_floor must be positive".into()));
        }
        Ok(())
    }

    pub fn n_frames(&self, len: usize) -> usize {
        if len < self.window {
            0
        } else {
            (len - self.window) / self.hop + 1
        }
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular HTK-mel filterbank over the non-negative FFT bins, spanning
/// 0 Hz to Nyquist. Rows are filters, columns FFT bins; each triangle peaks
/// at 1 on its centre frequency.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32) -> Array2<f64> {
    let n_bins = n_fft / 2 + 1;
    let nyquist = f64::from(sample_rate) / 2.0;
    let max_mel = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(max_mel * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = f64::from(sample_rate) / n_fft as f64;
    let mut fb = Array2::zeros((n_mels, n_bins));
    for m in 0..n_mels {
        let (lo, centre, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = if f > lo && f <= centre {
                (f - lo) / (centre - lo)
            } else if f > centre && f < hi {
                (hi - f) / (hi - centre)
            } else {
                0.0
            };
            fb[[m, k]] = w;
        }
    }
    fb
}

/// Centre frequency (Hz) of each mel filter.
pub fn mel_centres(n_mels: usize, sample_rate: u32) -> Vec<f64> {
    let max_mel = hz_to_mel(f64::from(sample_rate) / 2.0);
    (1..=n_mels)
        .map(|i| mel_to_hz(max_mel * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// Reusable MFCC extractor holding the window, filterbank, DCT basis and FFT
/// plan for one [`MfccConfig`].
pub struct Mfcc {
    config: MfccConfig,
    window: Vec<f64>,
    filterbank: Array2<f64>,
    dct: Array2<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Mfcc {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Mfcc").field("config", &self.config).finish()
    }
}

impl Mfcc {
    pub fn new(config: MfccConfig) -> Result<Self> {
        config.validate()?;
        let n = config.window;
        // periodic Hann
        let window = (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
            .collect();
        let filterbank = mel_filterbank(config.n_mels, n, SAMPLE_RATE);
        let dct = dct2_orthonormal(config.n_coeffs, config.n_mels);
        let fft = FftPlanner::new().plan_fft_forward(n);
        Ok(Self {
            config,
            window,
            filterbank,
            dct,
            fft,
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.config
    }

    pub fn filterbank(&self) -> &Array2<f64> {
        &self.filterbank
    }

    /// Log-mel energies (`n_frames × n_mels`), the input to the DCT.
    pub fn log_mel(&self, buffer: &AudioBuffer) -> Result<Array2<f64>> {
        let cfg = &self.config;
        let n_frames = cfg.n_frames(buffer.len());
        if n_frames == 0 {
            return Err(Error::InvalidData(format!(
                "buffer of {} samples is shorter than one {}-sample window",
                buffer.len(),
                cfg.window
            )));
        }
        let n_bins = cfg.window / 2 + 1;
        let mut out = Array2::zeros((n_frames, cfg.n_mels));
        let mut scratch = vec![Complex::new(0.0, 0.0); cfg.window];
        let mut magnitude = vec![0.0; n_bins];
        for t in 0..n_frames {
            let frame = &buffer.samples()[t * cfg.hop..t * cfg.hop + cfg.window];
            for ((z, &x), &w) in scratch.iter_mut().zip(frame).zip(&self.window) {
                *z = Complex::new(x * w, 0.0);
            }
            self.fft.process(&mut scratch);
            for (m, z) in magnitude.iter_mut().zip(&scratch) {
                *m = z.norm();
            }
            for (mel, filter) in self.filterbank.rows().into_iter().enumerate() {
                let energy: f64 = filter.iter().zip(&magnitude).map(|(w, m)| w * m).sum();
                out[[t, mel]] = energy.max(cfg.log_floor).ln();
            }
        }
        Ok(out)
    }

    /// MFCC frame matrix (`n_frames × n_coeffs`).
    pub fn frames(&self, buffer: &AudioBuffer) -> Result<Array2<f64>> {
        let log_mel = self.log_mel(buffer)?;
        let coeffs = log_mel.dot(&self.dct.t());
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("mfcc coefficients".into()));
        }
        Ok(coeffs)
    }
}

/// Orthonormal DCT-II basis, `n_out × n_in`.
fn dct2_orthonormal(n_out: usize, n_in: usize) -> Array2<f64> {
    let n = n_in as f64;
    Array2::from_shape_fn((n_out, n_in), |(k, i)| {
        let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        scale * (PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)).cos()
    })
}

/// MFCC frame matrix for `buffer` under `config`.
pub fn mfcc(buffer: &AudioBuffer, config: &MfccConfig) -> Result<Array2<f64>> {
    Mfcc::new(config.clone())?.frames(buffer)
}

/// Time-averages an MFCC frame matrix into one vector.
pub fn mean_pool(
    matrix: &Array2<f64>,
    utterance_id: &str,
    feature_set: FeatureSetId,
) -> Result<FeatureVector> {
    FeatureVector::new(utterance_id, feature_set, column_means(matrix)?)
}

/// Loads `path` and returns its 40-dim mean MFCC vector.
pub fn mfcc40_of_file(extractor: &Mfcc, path: &Path, utterance_id: &str) -> Result<FeatureVector> {
    let audio = load_wav(path)?;
    let frames = extractor.frames(&audio)?;
    mean_pool(&frames, utterance_id, FeatureSetId::Mfcc40)
}
