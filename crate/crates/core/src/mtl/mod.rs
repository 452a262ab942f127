//! Multi-task learner: a shared two-layer leaky-ReLU trunk with emotion,
//! age and country heads, plus early and hybrid fusion.

mod fusion;
mod persist;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use fusion::{
    early_fuse, hybrid_fuse, read_predictions, write_predictions, HybridSpec, Predictions,
};
pub use persist::{load_mtl, mtl_from_bytes, mtl_to_bytes, read_mtl_header, save_mtl, MtlHeader};
pub use train::{join_examples, score_predictions, train_mtl, MtlEpoch, MtlExample, MtlHistory};

use crate::embedder::UtteranceEmbedding;
use crate::error::{invalid, Error, Result};
use crate::metrics::{N_COUNTRIES, N_EMOTIONS};
use crate::nn::{
    loss_cross_entropy, loss_cross_entropy_grad, ForwardCache, Gradients, LayerSpec, Network,
    Tensor, DEFAULT_LEAKY_SLOPE,
};

/// Hidden-layer sizes of the two standard configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MtlPreset {
    #[serde(rename = "sys1")]
    Sys1,
    #[serde(rename = "sys2")]
    Sys2,
}

impl MtlPreset {
    pub fn hidden_dims(self) -> (usize, usize) {
        match self {
            MtlPreset::Sys1 => (128, 64),
            MtlPreset::Sys2 => (256, 128),
        }
    }
}

/// How the task losses are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossTerms {
    /// Mean of emotion MSE, age MSE and country cross-entropy.
    #[default]
    Three,
    /// Mean of one MSE over the 11 regression outputs and the cross-entropy.
    Two,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MtlConfig {
    pub hidden1: usize,
    pub hidden2: usize,
    pub leaky_slope: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation-loss improvement before stopping.
    pub patience: usize,
    pub loss_terms: LossTerms,
    /// Z-score input features with training-set statistics.
    pub standardize_features: bool,
}

impl Default for MtlConfig {
    fn default() -> Self {
        Self::preset(MtlPreset::Sys1)
    }
}

impl MtlConfig {
    pub fn preset(preset: MtlPreset) -> Self {
        let (hidden1, hidden2) = preset.hidden_dims();
        Self {
            hidden1,
            hidden2,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 300,
            patience: 20,
            loss_terms: LossTerms::Three,
            standardize_features: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden2 == 0 || self.hidden1 < self.hidden2 {
            return Err(Error::Config(format!(
                "hidden dims must satisfy hidden1 >= hidden2 >= 1, got ({}, {})",
                self.hidden1, self.hidden2
            )));
        }
        if !(self.leaky_slope.is_finite() && self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("leaky_slope and learning_rate must be finite, lr > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Mean and standard deviation used to standardize a quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    pub const IDENTITY: Standardizer = Standardizer { mean: 0.0, std: 1.0 };

    /// Population statistics; a zero spread falls back to 1.
    pub fn fit(values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return Err(invalid("cannot fit a standardizer to no values"));
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        Ok(Self { mean, std })
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Raw head outputs before clamping and denormalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MtlOutput {
    pub emotions: [f64; N_EMOTIONS],
    pub age_norm: f64,
    pub country_probs: [f64; N_COUNTRIES],
}

/// Training target with the age already standardized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MtlTarget {
    pub emotions: [f64; N_EMOTIONS],
    pub age_norm: f64,
    pub country: usize,
}

impl MtlTarget {
    fn validate(&self) -> Result<()> {
        if self.emotions.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(invalid(format!("target intensities outside [0, 1]: {:?}", self.emotions)));
        }
        if !self.age_norm.is_finite() {
            return Err(invalid("target age is not finite"));
        }
        if self.country >= N_COUNTRIES {
            return Err(invalid(format!("target country {} out of range", self.country)));
        }
        Ok(())
    }
}

/// Gradients of the combined loss with respect to each head output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MtlOutputGrad {
    pub emotions: [f64; N_EMOTIONS],
    pub age_norm: f64,
    pub country_probs: [f64; N_COUNTRIES],
}

fn country_tensor(p: &[f64; N_COUNTRIES]) -> Tensor {
    Tensor::from_parts(vec![N_COUNTRIES], p.to_vec())
}

/// Combined task loss for one utterance.
pub fn mtl_loss(pred: &MtlOutput, target: &MtlTarget, terms: LossTerms) -> Result<f64> {
    target.validate()?;
    let sq_emo: f64 = pred
        .emotions
        .iter()
        .zip(&target.emotions)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    let sq_age = (pred.age_norm - target.age_norm).powi(2);
    let ce = loss_cross_entropy(&country_tensor(&pred.country_probs), target.country)?;
    Ok(match terms {
        LossTerms::Three => (sq_emo / N_EMOTIONS as f64 + sq_age + ce) / 3.0,
        LossTerms::Two => ((sq_emo + sq_age) / (N_EMOTIONS + 1) as f64 + ce) / 2.0,
    })
}

pub fn mtl_loss_grad(pred: &MtlOutput, target: &MtlTarget, terms: LossTerms) -> Result<MtlOutputGrad> {
    target.validate()?;
    let (emo_scale, age_scale, ce_scale) = match terms {
        LossTerms::Three => (2.0 / (3.0 * N_EMOTIONS as f64), 2.0 / 3.0, 1.0 / 3.0),
        LossTerms::Two => {
            let s = 2.0 / (2.0 * (N_EMOTIONS + 1) as f64);
            (s, s, 0.5)
        }
    };
    let mut emotions = [0.0; N_EMOTIONS];
    for (g, (p, t)) in emotions.iter_mut().zip(pred.emotions.iter().zip(&target.emotions)) {
        *g = emo_scale * (p - t);
    }
    let ce = loss_cross_entropy_grad(&country_tensor(&pred.country_probs), target.country)?;
    let mut country_probs = [0.0; N_COUNTRIES];
    for (g, d) in country_probs.iter_mut().zip(ce.data()) {
        *g = ce_scale * d;
    }
    Ok(MtlOutputGrad {
        emotions,
        age_norm: age_scale * (pred.age_norm - target.age_norm),
        country_probs,
    })
}

/// Inference output for one utterance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MtlPrediction {
    /// Clamped to [0, 1].
    pub emotions: [f64; N_EMOTIONS],
    pub age_years: f64,
    pub country_probs: [f64; N_COUNTRIES],
}

/// Parameter gradients for the trunk and the three heads.
#[derive(Debug, Clone)]
pub struct MtlGradients {
    pub trunk: Gradients,
    pub emotion: Gradients,
    pub age: Gradients,
    pub country: Gradients,
}

impl MtlGradients {
    /// Same order as [`MtlModel::params_mut`].
    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.trunk
            .iter()
            .chain(self.emotion.iter())
            .chain(self.age.iter())
            .chain(self.country.iter())
    }

    pub fn scale(&mut self, c: f64) {
        for g in [&mut self.trunk, &mut self.emotion, &mut self.age, &mut self.country] {
            g.scale(c);
        }
    }

    pub fn clear(&mut self) {
        for g in [&mut self.trunk, &mut self.emotion, &mut self.age, &mut self.country] {
            g.clear();
        }
    }
}

struct MtlCache {
    trunk: ForwardCache,
    emotion: ForwardCache,
    age: ForwardCache,
    country: ForwardCache,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MtlModel {
    trunk: Network,
    emotion_head: Network,
    age_head: Network,
    country_head: Network,
    /// Per-feature standardization applied before the trunk.
    feature_norm: Vec<Standardizer>,
    age_norm: Standardizer,
}

/// Trunk dense(h1) → leaky-ReLU → dense(h2) → leaky-ReLU and heads
/// dense(10), dense(1), dense(4) + softmax. Normalization starts as identity.
pub fn build_mtl<R: Rng + ?Sized>(cfg: &MtlConfig, input_dim: usize, rng: &mut R) -> Result<MtlModel> {
    cfg.validate()?;
    if input_dim == 0 {
        return Err(invalid("input_dim must be at least 1"));
    }
    let (h1, h2) = (cfg.hidden1, cfg.hidden2);
    let slope = cfg.leaky_slope;
    let trunk = Network::new(
        vec![input_dim],
        vec![
            LayerSpec::Dense { in_dim: input_dim, out_dim: h1 },
            LayerSpec::LeakyRelu { slope },
            LayerSpec::Dense { in_dim: h1, out_dim: h2 },
            LayerSpec::LeakyRelu { slope },
        ],
        rng,
    )?;
    let head = |out_dim: usize, softmax: bool, rng: &mut R| {
        let mut layers = vec![LayerSpec::Dense { in_dim: h2, out_dim }];
        if softmax {
            layers.push(LayerSpec::Softmax);
        }
        Network::new(vec![h2], layers, rng)
    };
    let emotion_head = head(N_EMOTIONS, false, rng)?;
    let age_head = head(1, false, rng)?;
    let country_head = head(N_COUNTRIES, true, rng)?;
    Ok(MtlModel {
        trunk,
        emotion_head,
        age_head,
        country_head,
        feature_norm: vec![Standardizer::IDENTITY; input_dim],
        age_norm: Standardizer::IDENTITY,
    })
}

impl MtlModel {
    pub(crate) fn from_parts(
        trunk: Network,
        emotion_head: Network,
        age_head: Network,
        country_head: Network,
        feature_norm: Vec<Standardizer>,
        age_norm: Standardizer,
    ) -> Result<Self> {
        let model = Self {
            trunk,
            emotion_head,
            age_head,
            country_head,
            feature_norm,
            age_norm,
        };
        model.check_layout()?;
        Ok(model)
    }

    fn check_layout(&self) -> Result<()> {
        let h2 = self.trunk.output_shape();
        let ok = self.trunk.input_shape().len() == 1
            && h2.len() == 1
            && self.feature_norm.len() == self.input_dim()
            && [&self.emotion_head, &self.age_head, &self.country_head]
                .iter()
                .all(|h| h.input_shape() == h2)
            && self.emotion_head.output_shape() == [N_EMOTIONS]
            && self.age_head.output_shape() == [1]
            && self.country_head.output_shape() == [N_COUNTRIES]
            && matches!(self.country_head.layers().last(), Some(LayerSpec::Softmax));
        if !ok {
            return Err(invalid("inconsistent multi-task model layout"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.input_shape()[0]
    }

    /// `(hidden1, hidden2)`.
    pub fn hidden_dims(&self) -> (usize, usize) {
        (self.trunk.shape_at(1)[0], self.trunk.output_shape()[0])
    }

    pub fn head_dims(&self) -> (usize, usize, usize) {
        (N_EMOTIONS, 1, N_COUNTRIES)
    }

    pub fn trunk(&self) -> &Network {
        &self.trunk
    }

    pub fn heads(&self) -> [&Network; 3] {
        [&self.emotion_head, &self.age_head, &self.country_head]
    }

    pub fn feature_norm(&self) -> &[Standardizer] {
        &self.feature_norm
    }

    pub fn age_norm(&self) -> Standardizer {
        self.age_norm
    }

    pub fn set_feature_norm(&mut self, norm: Vec<Standardizer>) -> Result<()> {
        if norm.len() != self.input_dim() {
            return Err(invalid(format!(
                "feature normalization has {} entries for input dim {}",
                norm.len(),
                self.input_dim()
            )));
        }
        self.feature_norm = norm;
        Ok(())
    }

    pub fn set_age_norm(&mut self, norm: Standardizer) {
        self.age_norm = norm;
    }

    pub fn param_count(&self) -> usize {
        self.trunk.param_count()
            + self.emotion_head.param_count()
            + self.age_head.param_count()
            + self.country_head.param_count()
    }

    /// Trunk parameters, then emotion, age and country heads.
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.trunk
            .params_mut()
            .chain(self.emotion_head.params_mut())
            .chain(self.age_head.params_mut())
            .chain(self.country_head.params_mut())
    }

    pub fn zero_grads(&self) -> MtlGradients {
        MtlGradients {
            trunk: self.trunk.zero_grads(),
            emotion: self.emotion_head.zero_grads(),
            age: self.age_head.zero_grads(),
            country: self.country_head.zero_grads(),
        }
    }

    fn standardized(&self, features: &[f64]) -> Result<Tensor> {
        if features.len() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                context: "multi-task input".into(),
                expected: vec![self.input_dim()],
                actual: vec![features.len()],
            });
        }
        let x = features
            .iter()
            .zip(&self.feature_norm)
            .map(|(&v, n)| n.normalize(v))
            .collect();
        Ok(Tensor::from_parts(vec![features.len()], x))
    }

    fn forward_cached(&self, features: &[f64]) -> Result<MtlCache> {
        let trunk = self.trunk.forward(&self.standardized(features)?)?;
        let h = trunk.output();
        Ok(MtlCache {
            emotion: self.emotion_head.forward(h)?,
            age: self.age_head.forward(h)?,
            country: self.country_head.forward(h)?,
            trunk,
        })
    }

    fn output_of(cache: &MtlCache) -> MtlOutput {
        MtlOutput {
            emotions: cache.emotion.output().data().try_into().unwrap(),
            age_norm: cache.age.output().data()[0],
            country_probs: cache.country.output().data().try_into().unwrap(),
        }
    }

    /// Raw head outputs for one feature vector.
    pub fn forward(&self, features: &[f64]) -> Result<MtlOutput> {
        Ok(Self::output_of(&self.forward_cached(features)?))
    }

    /// Adds the gradient of [`mtl_loss`] for one example into `grads` and
    /// returns the loss.
    pub fn accumulate_gradients(
        &self,
        features: &[f64],
        target: &MtlTarget,
        terms: LossTerms,
        grads: &mut MtlGradients,
    ) -> Result<f64> {
        let cache = self.forward_cached(features)?;
        let out = Self::output_of(&cache);
        let loss = mtl_loss(&out, target, terms)?;
        let g = mtl_loss_grad(&out, target, terms)?;
        let mut dh = self.emotion_head.backward_accumulate(
            &cache.emotion,
            &Tensor::from_parts(vec![N_EMOTIONS], g.emotions.to_vec()),
            &mut grads.emotion,
        )?;
        let parts = [
            self.age_head.backward_accumulate(
                &cache.age,
                &Tensor::from_parts(vec![1], vec![g.age_norm]),
                &mut grads.age,
            )?,
            self.country_head.backward_accumulate(
                &cache.country,
                &Tensor::from_parts(vec![N_COUNTRIES], g.country_probs.to_vec()),
                &mut grads.country,
            )?,
        ];
        for p in &parts {
            for (a, b) in dh.data_mut().iter_mut().zip(p.data()) {
                *a += b;
            }
        }
        self.trunk.backward_accumulate(&cache.trunk, &dh, &mut grads.trunk)?;
        Ok(loss)
    }

    /// Clamped intensities, age in years and country distribution.
    pub fn predict(&self, features: &[f64]) -> Result<MtlPrediction> {
        let out = self.forward(features)?;
        Ok(MtlPrediction {
            emotions: out.emotions.map(|e| e.clamp(0.0, 1.0)),
            age_years: self.age_norm.denormalize(out.age_norm),
            country_probs: out.country_probs,
        })
    }

    pub fn predict_all(&self, embeddings: &[UtteranceEmbedding]) -> Result<Predictions> {
        embeddings
            .iter()
            .map(|e| Ok((e.utterance_id.clone(), self.predict(&e.vector)?)))
            .collect()
    }
}
