//! Experiment orchestration: configuration, the per-seed pipeline and
//! report / plot-data emission.

mod config;
mod run;

use std::path::Path;

pub use config::{
    DataConfig, ExperimentConfig, FeatureSource, MtlOverrides, SystemConfig, DEFAULT_SEEDS,
    HYBRID_SYSTEM,
};
pub use run::{
    embed_corpus, history_csv, load_corpus, mean_std, run_experiment, stage_rng, train_embedder_on_corpus,
    Corpus, ExperimentSummary, SeedResult, SystemSummary,
};

use crate::embedder::{cumulative_frequency_response, FilterResponse};
use crate::error::Result;
use crate::nn::load_network;

/// Writes the first-layer cumulative frequency response of a saved
/// network as `frequency_hz,magnitude` rows from 0 to fs/2.
pub fn emit_filter_plot(
    model_path: impl AsRef<Path>,
    out_path: impl AsRef<Path>,
    n_fft: usize,
    sample_rate_hz: u32,
) -> Result<FilterResponse> {
    let net = load_network(model_path)?;
    let response = cumulative_frequency_response(&net, n_fft, sample_rate_hz)?;
    std::fs::write(out_path, response.to_csv())?;
    Ok(response)
}
