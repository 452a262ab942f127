//! Desk-scale synthetic vocal-burst corpus with labels recoverable from the
//! waveform.
//!
//! * each emotion owns a narrow band of evenly spaced random-phase sinusoids
//!   whose RMS is `BAND_GAIN * intensity`;
//! * the country selects one of four carrier frequencies;
//! * the carrier is gated into Hann bursts whose repetition rate maps
//!   linearly onto age;
//! * every speaker adds a small carrier detune and a private noise floor.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LabelRecord, Split, AGE_RANGE_YEARS};
use crate::error::{invalid, Result};
use crate::metrics::{N_COUNTRIES, N_EMOTIONS};
use crate::signal::Waveform;

pub const EMOTION_BAND_CENTERS_HZ: [f64; N_EMOTIONS] = [
    1500.0, 2050.0, 2600.0, 3150.0, 3700.0, 4250.0, 4800.0, 5350.0, 5900.0, 6450.0,
];
pub const BAND_HALF_WIDTH_HZ: f64 = 50.0;
pub const BAND_GAIN: f64 = 0.25;
const TONES_PER_BAND: usize = 6;

pub const CARRIER_HZ: [f64; N_COUNTRIES] = [2325.0, 3425.0, 4525.0, 5625.0];
pub const CARRIER_AMP: f64 = 0.29;
const MAX_DETUNE: f64 = 0.005;
pub const BURST_MS: f64 = 20.0;
/// Burst rates for the youngest and oldest speakers.
pub const RATE_RANGE_HZ: (f64, f64) = (10.0, 40.0);

/// Each dominant emotion comes with a fixed secondary one.
const PARTNER: [usize; N_EMOTIONS] = [4, 8, 3, 7, 0, 6, 5, 2, 1, 8];

/// Tones of a band sit on an even grid across its width, far enough apart
/// that their energies add.
fn tone_offset_hz(j: usize) -> f64 {
    BAND_HALF_WIDTH_HZ * ((2 * j + 1) as f64 / TONES_PER_BAND as f64 - 1.0)
}

pub fn age_to_rate_hz(age_years: f64) -> f64 {
    let (a0, a1) = AGE_RANGE_YEARS;
    let (r0, r1) = RATE_RANGE_HZ;
    r0 + (age_years - a0) / (a1 - a0) * (r1 - r0)
}

pub fn rate_hz_to_age(rate_hz: f64) -> f64 {
    let (a0, a1) = AGE_RANGE_YEARS;
    let (r0, r1) = RATE_RANGE_HZ;
    a0 + (rate_hz - r0) / (r1 - r0) * (a1 - a0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_utterances: usize,
    pub n_speakers: usize,
    pub sample_rate_hz: u32,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::new(200, 20)
    }
}

impl SynthConfig {
    pub fn new(n_utterances: usize, n_speakers: usize) -> Self {
        Self {
            n_utterances,
            n_speakers,
            sample_rate_hz: 16_000,
            min_duration_s: 0.5,
            max_duration_s: 1.5,
        }
    }
}

/// Labels and waveforms, index-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub records: Vec<LabelRecord>,
    pub waveforms: Vec<Waveform>,
}

struct Speaker {
    id: String,
    split: Split,
    country: usize,
    age: f64,
    detune: f64,
    noise_rms: f64,
}

/// Generates a corpus. Speakers are partitioned 60/20/20 into
/// train/val/test (at least one per split) and countries are dealt
/// round-robin within each split, so every split with four or more speakers
/// covers all countries.
pub fn synth_dataset<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Result<SynthCorpus> {
    if cfg.n_speakers < 4 {
        return Err(invalid("synth_dataset: need at least 4 speakers"));
    }
    if cfg.n_utterances < cfg.n_speakers {
        return Err(invalid("synth_dataset: need at least one utterance per speaker"));
    }
    if cfg.sample_rate_hz < 16_000 {
        return Err(invalid("synth_dataset: sample rate must be at least 16 kHz"));
    }
    if !(cfg.min_duration_s > 0.0 && cfg.max_duration_s >= cfg.min_duration_s) {
        return Err(invalid("synth_dataset: invalid duration range"));
    }

    let n = cfg.n_speakers;
    let n_val = ((0.2 * n as f64).round() as usize).max(1);
    let n_test = n_val;
    let n_train = n - n_val - n_test;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut speakers: Vec<Option<Speaker>> = (0..n).map(|_| None).collect();
    let offset = rng.gen_range(0..N_COUNTRIES);
    for (pos, &spk) in order.iter().enumerate() {
        let (split, within) = if pos < n_train {
            (Split::Train, pos)
        } else if pos < n_train + n_val {
            (Split::Val, pos - n_train)
        } else {
            (Split::Test, pos - n_train - n_val)
        };
        let (a0, a1) = AGE_RANGE_YEARS;
        speakers[spk] = Some(Speaker {
            id: format!("spk_{spk:03}"),
            split,
            country: (within + offset) % N_COUNTRIES,
            age: rng.gen_range(a0..=a1),
            detune: rng.gen_range(-MAX_DETUNE..=MAX_DETUNE),
            noise_rms: rng.gen_range(0.006..0.018),
        });
    }
    let speakers: Vec<Speaker> = speakers.into_iter().map(Option::unwrap).collect();

    let fs = cfg.sample_rate_hz as f64;
    let mut records = Vec::with_capacity(cfg.n_utterances);
    let mut waveforms = Vec::with_capacity(cfg.n_utterances);
    for u in 0..cfg.n_utterances {
        let spk = &speakers[u % n];
        let duration = rng.gen_range(cfg.min_duration_s..=cfg.max_duration_s);
        let len = (duration * fs).round() as usize;

        let dominant = rng.gen_range(0..N_EMOTIONS);
        let level = rng.gen_range(0.6..1.0);
        let mut intensities = [0.0; N_EMOTIONS];
        for (k, v) in intensities.iter_mut().enumerate() {
            *v = if k == dominant {
                level
            } else if k == PARTNER[dominant] {
                level * rng.gen_range(0.3..0.6)
            } else {
                rng.gen_range(0.0..0.15)
            };
        }

        let mut s = vec![0.0; len];
        let tone_amp = (2.0 / TONES_PER_BAND as f64).sqrt();
        for (k, &inten) in intensities.iter().enumerate() {
            let gain = BAND_GAIN * inten * tone_amp;
            for j in 0..TONES_PER_BAND {
                let f = EMOTION_BAND_CENTERS_HZ[k] + tone_offset_hz(j);
                let phase = rng.gen_range(0.0..2.0 * PI);
                let w = 2.0 * PI * f / fs;
                for (i, v) in s.iter_mut().enumerate() {
                    *v += gain * (w * i as f64 + phase).sin();
                }
            }
        }

        let carrier = CARRIER_HZ[spk.country] * (1.0 + spk.detune);
        let rate = age_to_rate_hz(spk.age);
        let burst_len = (BURST_MS * fs / 1000.0).round() as usize;
        let period = fs / rate;
        let mut start = rng.gen_range(0.0..period);
        let wc = 2.0 * PI * carrier / fs;
        let phase = rng.gen_range(0.0..2.0 * PI);
        while (start as usize) < len {
            let s0 = start as usize;
            for j in 0..burst_len.min(len - s0) {
                let hann = 0.5 - 0.5 * (2.0 * PI * j as f64 / burst_len as f64).cos();
                s[s0 + j] += CARRIER_AMP * hann * (wc * (s0 + j) as f64 + phase).sin();
            }
            start += period;
        }

        let a = spk.noise_rms * 3f64.sqrt();
        for v in &mut s {
            *v += rng.gen_range(-a..a);
        }

        records.push(LabelRecord {
            utterance_id: format!("utt_{u:05}"),
            speaker_id: spk.id.clone(),
            split: spk.split,
            country: spk.country,
            age_years: spk.age,
            intensities,
        });
        waveforms.push(Waveform::new(s, cfg.sample_rate_hz)?);
    }
    Ok(SynthCorpus { records, waveforms })
}
