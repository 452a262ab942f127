//! Per-utterance labels, manifest files and the synthetic corpus.

mod manifest;
mod synth;

pub use manifest::{
    parse_manifest, parse_manifest_with, write_manifest, LabelRecord, ManifestOptions, Split,
    AGE_RANGE_YEARS,
};
pub use synth::{
    age_to_rate_hz, rate_hz_to_age, synth_dataset, SynthConfig, SynthCorpus, BAND_GAIN,
    BAND_HALF_WIDTH_HZ, BURST_MS, CARRIER_AMP, CARRIER_HZ, EMOTION_BAND_CENTERS_HZ, RATE_RANGE_HZ,
};

/// Emotion columns in manifest order.
pub const EMOTIONS: [&str; 10] = [
    "amusement",
    "awe",
    "awkwardness",
    "distress",
    "excitement",
    "fear",
    "horror",
    "sadness",
    "surprise",
    "triumph",
];

/// Country class ids 0..4.
pub const COUNTRIES: [&str; 4] = ["usa", "china", "venezuela", "south_africa"];
