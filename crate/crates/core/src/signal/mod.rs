//! Time-domain preprocessing: zero-frequency filtering and fixed-length framing.

mod wav;
mod zff;

pub use wav::{read_wav, write_wav};
pub use zff::{trend_window_samples, zff_filter, DEFAULT_TREND_WINDOW_MS};

use crate::error::{invalid, Error, Result};

/// Frame length used by every sub-segmental embedder.
pub const DEFAULT_FRAME_MS: f64 = 250.0;
pub const DEFAULT_HOP_MS: f64 = 100.0;

/// Single-channel audio in 64-bit precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("waveform sample {i}")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub(crate) fn ms_to_samples(&self, ms: f64) -> usize {
        (ms * self.sample_rate_hz as f64 / 1000.0).round() as usize
    }
}

/// Options for [`frame`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameOptions {
    pub frame_ms: f64,
    pub hop_ms: f64,
    /// Zero-pad signals shorter than one frame up to a single full frame.
    pub pad_short: bool,
    /// Scale each frame to unit peak amplitude.
    pub normalize: bool,
}

impl Default for FrameOptions {
    fn default() -> Self {
        Self {
            frame_ms: DEFAULT_FRAME_MS,
            hop_ms: DEFAULT_HOP_MS,
            pad_short: true,
            normalize: false,
        }
    }
}

/// A waveform cut into equal-length analysis windows.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    frames: Vec<Vec<f64>>,
    frame_len_samples: usize,
    hop_samples: usize,
    pub source_id: String,
}

impl FrameSet {
    pub fn new(
        frames: Vec<Vec<f64>>,
        frame_len_samples: usize,
        hop_samples: usize,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        if frame_len_samples == 0 || hop_samples == 0 {
            return Err(invalid("frame length and hop must be positive"));
        }
        if let Some(i) = frames.iter().position(|f| f.len() != frame_len_samples) {
            return Err(Error::ShapeMismatch {
                context: format!("frame {i}"),
                expected: vec![frame_len_samples],
                actual: vec![frames[i].len()],
            });
        }
        Ok(Self {
            frames,
            frame_len_samples,
            hop_samples,
            source_id: source_id.into(),
        })
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn frame_len_samples(&self) -> usize {
        self.frame_len_samples
    }

    pub fn hop_samples(&self) -> usize {
        self.hop_samples
    }
}

/// Cuts `w` into contiguous frames of `frame_ms` at stride `hop_ms`.
///
/// A trailing partial frame is dropped. Signals shorter than one frame are
/// zero-padded at the tail when `pad_short` is set and rejected otherwise.
pub fn frame(w: &Waveform, id: &str, opts: &FrameOptions) -> Result<FrameSet> {
    if !(opts.frame_ms > 0.0) || !(opts.hop_ms > 0.0) {
        return Err(invalid(format!(
            "frame_ms and hop_ms must be positive (got {} and {})",
            opts.frame_ms, opts.hop_ms
        )));
    }
    let frame_len = w.ms_to_samples(opts.frame_ms);
    let hop = w.ms_to_samples(opts.hop_ms);
    if frame_len == 0 || hop == 0 {
        return Err(invalid("frame or hop shorter than one sample"));
    }
    let samples = w.samples();
    let mut frames = if samples.len() < frame_len {
        if !opts.pad_short {
            return Err(invalid(format!(
                "signal of {} samples is shorter than one frame ({frame_len})",
                samples.len()
            )));
        }
        let mut padded = samples.to_vec();
        padded.resize(frame_len, 0.0);
        vec![padded]
    } else {
        let n = (samples.len() - frame_len) / hop + 1;
        (0..n)
            .map(|i| samples[i * hop..i * hop + frame_len].to_vec())
            .collect()
    };
    if opts.normalize {
        for f in &mut frames {
            let peak = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if peak > 0.0 {
                f.iter_mut().for_each(|x| *x /= peak);
            }
        }
    }
    FrameSet::new(frames, frame_len, hop, id)
}
