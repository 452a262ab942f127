//! Task-specific CNN embedders on 250 ms frames: construction, training,
//! pre-activation embedding extraction, mean+std pooling, first-layer
//! filter analysis and external embedding files.

mod bemb;
mod filters;
mod pooling;
mod train;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use bemb::{
    embedding_file_from_bytes, embedding_file_to_bytes, load_external_embeddings,
    read_embedding_file, write_embedding_file, EmbeddingFile,
    EMBEDDING_MAGIC, EMBEDDING_VERSION,
};
pub use filters::{cumulative_frequency_response, FilterResponse, DEFAULT_N_FFT};
pub use pooling::{
    classify_eval, extract_frame_embeddings, pool_functionals, ClassificationReport,
    FrameEmbeddingSequence, UtteranceEmbedding,
};
pub use train::{train_embedder, EmbedderEpoch, EmbedderHistory, LabeledFrames};

use crate::data::LabelRecord;
use crate::error::{invalid, Error, Result};
use crate::metrics::{argmax, N_COUNTRIES, N_EMOTIONS};
use crate::nn::{LayerSpec, Network};
use crate::signal::{self, FrameOptions, FrameSet, Waveform};

/// Which label the embedder is trained to classify.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Ten-class dominant emotion.
    Er,
    /// Four-class native country.
    Cr,
}

impl Task {
    pub fn n_classes(self) -> usize {
        match self {
            Task::Er => N_EMOTIONS,
            Task::Cr => N_COUNTRIES,
        }
    }

    /// Class index of `record` for this task.
    pub fn label(self, record: &LabelRecord) -> Result<usize> {
        match self {
            Task::Er => Ok(hard_labels(&[record.intensities])?[0]),
            Task::Cr => Ok(record.country),
        }
    }
}

/// Network input signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    Raw,
    Zff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel_len: usize,
    pub stride: usize,
}

impl ConvSpec {
    pub const fn new(out_channels: usize, kernel_len: usize, stride: usize) -> Self {
        Self {
            out_channels,
            kernel_len,
            stride,
        }
    }
}

/// Default four-layer raw-waveform stack.
pub const DEFAULT_CONV_STACK: [ConvSpec; 4] = [
    ConvSpec::new(16, 30, 10),
    ConvSpec::new(16, 10, 2),
    ConvSpec::new(32, 5, 2),
    ConvSpec::new(32, 5, 2),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub task: Task,
    pub input_kind: InputKind,
    pub conv_stack: Vec<ConvSpec>,
    pub hidden_dim: usize,
    pub sample_rate_hz: u32,
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub normalize_frames: bool,
    pub zff_trend_ms: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub initial_lr: f64,
    /// Fraction of training speakers kept for training (rest: cross-validation).
    pub train_ratio: f64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            task: Task::Er,
            input_kind: InputKind::Raw,
            conv_stack: DEFAULT_CONV_STACK.to_vec(),
            hidden_dim: 10,
            sample_rate_hz: 16_000,
            frame_ms: signal::DEFAULT_FRAME_MS,
            hop_ms: signal::DEFAULT_HOP_MS,
            normalize_frames: false,
            zff_trend_ms: signal::DEFAULT_TREND_WINDOW_MS,
            batch_size: 64,
            max_epochs: 100,
            initial_lr: 1e-1,
            train_ratio: 0.9,
        }
    }
}

impl EmbedderConfig {
    pub fn n_classes(&self) -> usize {
        self.task.n_classes()
    }

    pub fn frame_len_samples(&self) -> usize {
        (self.frame_ms * self.sample_rate_hz as f64 / 1000.0).round() as usize
    }

    pub fn frame_options(&self) -> FrameOptions {
        FrameOptions {
            frame_ms: self.frame_ms,
            hop_ms: self.hop_ms,
            pad_short: true,
            normalize: self.normalize_frames,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(invalid("hidden_dim must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be at least 1"));
        }
        if !(self.initial_lr > 0.0) {
            return Err(invalid("initial_lr must be positive"));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(invalid("train_ratio must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Turns a waveform into network-ready frames (ZFF first when configured).
    pub fn prepare_frames(&self, w: &Waveform, id: &str) -> Result<FrameSet> {
        if w.sample_rate_hz() != self.sample_rate_hz {
            return Err(invalid(format!(
                "{id}: sample rate {} Hz, embedder expects {} Hz",
                w.sample_rate_hz(),
                self.sample_rate_hz
            )));
        }
        match self.input_kind {
            InputKind::Raw => signal::frame(w, id, &self.frame_options()),
            InputKind::Zff => {
                let z = signal::zff_filter(w, self.zff_trend_ms)?;
                signal::frame(&z, id, &self.frame_options())
            }
        }
    }
}

/// Layer stack for `cfg`: (conv, ReLU)* -> dense(hidden) -> ReLU ->
/// dense(n_classes) -> softmax.
pub fn embedder_layers(cfg: &EmbedderConfig) -> Result<Vec<LayerSpec>> {
    cfg.validate()?;
    let frame_len = cfg.frame_len_samples();
    let mut chain = vec![frame_len.to_string()];
    let (mut channels, mut len) = (1usize, frame_len);
    let mut layers = Vec::new();
    for (i, c) in cfg.conv_stack.iter().enumerate() {
        if c.out_channels == 0 || c.kernel_len == 0 || c.stride == 0 {
            return Err(invalid(format!("conv layer {i}: all parameters must be positive")));
        }
        if len < c.kernel_len {
            chain.push(format!("(kernel {} > length {len})", c.kernel_len));
            return Err(invalid(format!(
                "conv stack reduces temporal length below 1 at layer {i}: {}",
                chain.join(" -> ")
            )));
        }
        len = (len - c.kernel_len) / c.stride + 1;
        chain.push(len.to_string());
        layers.push(LayerSpec::Conv1d {
            in_channels: channels,
            out_channels: c.out_channels,
            kernel_len: c.kernel_len,
            stride: c.stride,
        });
        layers.push(LayerSpec::Relu);
        channels = c.out_channels;
    }
    layers.extend([
        LayerSpec::Dense {
            in_dim: channels * len,
            out_dim: cfg.hidden_dim,
        },
        LayerSpec::Relu,
        LayerSpec::Dense {
            in_dim: cfg.hidden_dim,
            out_dim: cfg.n_classes(),
        },
        LayerSpec::Softmax,
    ]);
    Ok(layers)
}

pub fn build_embedder<R: Rng + ?Sized>(cfg: &EmbedderConfig, rng: &mut R) -> Result<Network> {
    let layers = embedder_layers(cfg)?;
    Network::new(vec![1, cfg.frame_len_samples()], layers, rng)
}

/// Number of leading layers whose output is the pre-activation hidden
/// embedding, for a network laid out by [`embedder_layers`].
pub(crate) fn embedding_prefix_len(net: &Network) -> Result<usize> {
    let l = net.layers();
    let n = l.len();
    let tail_ok = n >= 4
        && matches!(l[n - 4], LayerSpec::Dense { .. })
        && matches!(l[n - 3], LayerSpec::Relu)
        && matches!(l[n - 2], LayerSpec::Dense { .. })
        && matches!(l[n - 1], LayerSpec::Softmax);
    if !tail_ok {
        return Err(invalid(
            "network does not end in dense -> relu -> dense -> softmax",
        ));
    }
    Ok(n - 3)
}

/// Argmax per row with ties going to the lowest index.
pub fn hard_labels(intensities: &[[f64; N_EMOTIONS]]) -> Result<Vec<usize>> {
    intensities
        .iter()
        .enumerate()
        .map(|(i, row)| {
            if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(invalid(format!("row {i}: intensity {v} outside [0, 1]")));
            }
            Ok(argmax(row))
        })
        .collect()
}

/// Speaker-disjoint split of `records` into (training, cross-validation).
///
/// `round(ratio * n_speakers)` speakers go to training, clamped so each side
/// keeps at least one speaker.
pub fn speaker_split<R: Rng + ?Sized>(
    records: &[LabelRecord],
    ratio: f64,
    rng: &mut R,
) -> Result<(Vec<LabelRecord>, Vec<LabelRecord>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(invalid(format!("split ratio {ratio} outside (0, 1)")));
    }
    let speakers: BTreeSet<&str> = records.iter().map(|r| r.speaker_id.as_str()).collect();
    if speakers.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "speaker_split needs at least 2 speakers, found {}",
            speakers.len()
        )));
    }
    let mut speakers: Vec<&str> = speakers.into_iter().collect();
    speakers.shuffle(rng);
    let n = speakers.len();
    let n_train = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
    let train_set: BTreeSet<&str> = speakers[..n_train].iter().copied().collect();
    let (train, cv) = records
        .iter()
        .cloned()
        .partition(|r| train_set.contains(r.speaker_id.as_str()));
    Ok((train, cv))
}
