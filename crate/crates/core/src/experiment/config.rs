use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SynthConfig;
use crate::embedder::EmbedderConfig;
use crate::error::{Error, Result};
use crate::mtl::{HybridSpec, LossTerms, MtlConfig, MtlPreset};

/// Default number of repeated runs.
pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

/// Where labels and audio come from. Exactly one of `manifest` and `synth`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Manifest CSV; audio is read from `<wav_dir>/<utterance_id>.wav`.
    pub manifest: Option<PathBuf>,
    pub wav_dir: Option<PathBuf>,
    /// Accept ages outside the corpus range.
    pub allow_any_age: bool,
    /// Generate a synthetic corpus from the run seed instead.
    pub synth: Option<SynthConfig>,
}

/// One source of fixed-length features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureSource {
    /// Train an embedder on the training split and pool its embeddings.
    Embedder(EmbedderConfig),
    /// Load a `BEMB` embedding file.
    File(PathBuf),
}

/// A named system: its features (early-fused when more than one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub name: String,
    pub features: Vec<FeatureSource>,
}

/// Optional overrides of the preset's training settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MtlOverrides {
    pub hidden1: Option<usize>,
    pub hidden2: Option<usize>,
    pub leaky_slope: Option<f64>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub loss_terms: Option<LossTerms>,
    pub standardize_features: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub data: DataConfig,
    #[serde(default = "default_preset")]
    pub preset: MtlPreset,
    #[serde(default)]
    pub mtl: MtlOverrides,
    pub systems: Vec<SystemConfig>,
    /// Adds a system named `hybrid` built from the listed sources.
    #[serde(default)]
    pub hybrid: Option<HybridSpec>,
}

fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}

fn default_preset() -> MtlPreset {
    MtlPreset::Sys1
}

/// Name reserved for the hybrid system.
pub const HYBRID_SYSTEM: &str = "hybrid";

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML file; relative paths inside are resolved against the
    /// file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let Some(p) = self.data.manifest.as_mut() {
            fix(p);
        }
        if let Some(p) = self.data.wav_dir.as_mut() {
            fix(p);
        }
        for s in &mut self.systems {
            for f in &mut s.features {
                if let FeatureSource::File(p) = f {
                    fix(p);
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.systems.is_empty() {
            return bad("at least one system is required".into());
        }
        match (&self.data.manifest, &self.data.synth) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return bad("data needs exactly one of `manifest` and `synth`".into()),
        }
        let needs_audio = self
            .systems
            .iter()
            .flat_map(|s| &s.features)
            .any(|f| matches!(f, FeatureSource::Embedder(_)));
        if needs_audio && self.data.manifest.is_some() && self.data.wav_dir.is_none() {
            return bad("embedder features with a manifest need `data.wav_dir`".into());
        }
        let mut names = BTreeSet::new();
        for s in &self.systems {
            if s.features.is_empty() {
                return bad(format!("system `{}` has no feature sources", s.name));
            }
            let valid_name = !s.name.is_empty()
                && s.name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !valid_name {
                return bad(format!("system name `{}` must be [A-Za-z0-9_-]+", s.name));
            }
            if s.name == HYBRID_SYSTEM || !names.insert(s.name.as_str()) {
                return bad(format!("system name `{}` is reserved or repeated", s.name));
            }
            for f in &s.features {
                if let FeatureSource::Embedder(e) = f {
                    e.validate().map_err(|err| Error::Config(format!("{}: {err}", s.name)))?;
                }
            }
        }
        if let Some(h) = &self.hybrid {
            for src in [&h.emotion_source, &h.age_source, &h.country_source] {
                if !names.contains(src.as_str()) {
                    return bad(format!("hybrid source `{src}` is not a configured system"));
                }
            }
        }
        self.mtl_config().validate()
    }

    pub fn mtl_config(&self) -> MtlConfig {
        self.mtl.apply(MtlConfig::preset(self.preset))
    }
}

impl MtlOverrides {
    /// `base` with every set field replaced.
    pub fn apply(&self, base: MtlConfig) -> MtlConfig {
        let mut c = base;
        c.hidden1 = self.hidden1.unwrap_or(c.hidden1);
        c.hidden2 = self.hidden2.unwrap_or(c.hidden2);
        c.leaky_slope = self.leaky_slope.unwrap_or(c.leaky_slope);
        c.learning_rate = self.learning_rate.unwrap_or(c.learning_rate);
        c.batch_size = self.batch_size.unwrap_or(c.batch_size);
        c.max_epochs = self.max_epochs.unwrap_or(c.max_epochs);
        c.patience = self.patience.unwrap_or(c.patience);
        c.loss_terms = self.loss_terms.unwrap_or(c.loss_terms);
        c.standardize_features = self.standardize_features.unwrap_or(c.standardize_features);
        c
    }
}
