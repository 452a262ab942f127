use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{build_mtl, MtlConfig, MtlModel, MtlTarget, Predictions, Standardizer};
use crate::data::{LabelRecord, Split};
use crate::embedder::UtteranceEmbedding;
use crate::error::{invalid, Error, Result};
use crate::metrics::{full_report, MetricReport, ScoredItem, N_EMOTIONS};
use crate::nn::OptimizerState;

/// One utterance's fixed-length features with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MtlExample {
    pub utterance_id: String,
    pub features: Vec<f64>,
    pub emotions: [f64; N_EMOTIONS],
    pub age_years: f64,
    pub country: usize,
}

/// Pairs manifest records (optionally of one split) with their embeddings,
/// sorted by utterance id. Every selected record must have an embedding.
pub fn join_examples(
    embeddings: &[UtteranceEmbedding],
    records: &[LabelRecord],
    split: Option<Split>,
) -> Result<Vec<MtlExample>> {
    let by_id: HashMap<&str, &UtteranceEmbedding> =
        embeddings.iter().map(|e| (e.utterance_id.as_str(), e)).collect();
    let mut missing = Vec::new();
    let mut out = Vec::new();
    for r in records.iter().filter(|r| split.map_or(true, |s| r.split == s)) {
        match by_id.get(r.utterance_id.as_str()) {
            Some(e) => out.push(MtlExample {
                utterance_id: r.utterance_id.clone(),
                features: e.vector.clone(),
                emotions: r.intensities,
                age_years: r.age_years,
                country: r.country,
            }),
            None => missing.push(r.utterance_id.clone()),
        }
    }
    if !missing.is_empty() {
        missing.sort();
        return Err(Error::MissingIds(missing));
    }
    out.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
    Ok(out)
}

/// Scores a prediction set against manifest labels. Every prediction must
/// have a record.
pub fn score_predictions(predictions: &Predictions, records: &[LabelRecord]) -> Result<MetricReport> {
    let by_id: HashMap<&str, &LabelRecord> =
        records.iter().map(|r| (r.utterance_id.as_str(), r)).collect();
    let missing: Vec<String> = predictions
        .keys()
        .filter(|id| !by_id.contains_key(id.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingIds(missing));
    }
    let items: Vec<ScoredItem> = predictions
        .iter()
        .map(|(id, p)| {
            let r = by_id[id.as_str()];
            ScoredItem {
                id,
                pred_emotions: &p.emotions,
                pred_age: p.age_years,
                pred_country_probs: &p.country_probs,
                true_emotions: &r.intensities,
                true_age: r.age_years,
                true_country: r.country,
            }
        })
        .collect();
    full_report(&items)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MtlEpoch {
    pub train_loss: f64,
    pub val_loss: f64,
    /// `None` when the score is undefined for this epoch's predictions.
    pub val_s_mtl: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MtlHistory {
    pub epochs: Vec<MtlEpoch>,
    pub best_epoch: Option<usize>,
}

impl MtlHistory {
    pub fn best_val_loss(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.epochs[e].val_loss)
    }
}

fn target(model: &MtlModel, ex: &MtlExample) -> MtlTarget {
    MtlTarget {
        emotions: ex.emotions,
        age_norm: model.age_norm().normalize(ex.age_years),
        country: ex.country,
    }
}

fn mean_loss(model: &MtlModel, set: &[MtlExample], cfg: &MtlConfig) -> Result<f64> {
    let mut total = 0.0;
    for ex in set {
        total += super::mtl_loss(&model.forward(&ex.features)?, &target(model, ex), cfg.loss_terms)?;
    }
    Ok(total / set.len() as f64)
}

fn val_score(model: &MtlModel, set: &[MtlExample]) -> Option<f64> {
    let preds = set
        .iter()
        .map(|ex| model.predict(&ex.features))
        .collect::<Result<Vec<_>>>()
        .ok()?;
    let items: Vec<ScoredItem> = set
        .iter()
        .zip(&preds)
        .map(|(ex, p)| ScoredItem {
            id: &ex.utterance_id,
            pred_emotions: &p.emotions,
            pred_age: p.age_years,
            pred_country_probs: &p.country_probs,
            true_emotions: &ex.emotions,
            true_age: ex.age_years,
            true_country: ex.country,
        })
        .collect();
    full_report(&items).ok().map(|r| r.s_mtl)
}

/// Minibatch Adam on the combined loss. Feature and age statistics come
/// from the training set and are stored in the model. Returns the model
/// with the lowest validation loss; stops after `patience` epochs without
/// improvement.
pub fn train_mtl<R: Rng + ?Sized>(
    cfg: &MtlConfig,
    train: &[MtlExample],
    val: &[MtlExample],
    rng: &mut R,
) -> Result<(MtlModel, MtlHistory)> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(invalid("train_mtl needs non-empty training and validation sets"));
    }
    let dim = train[0].features.len();
    if let Some(ex) = train.iter().chain(val).find(|ex| ex.features.len() != dim) {
        return Err(Error::ShapeMismatch {
            context: format!("features of {}", ex.utterance_id),
            expected: vec![dim],
            actual: vec![ex.features.len()],
        });
    }
    let mut model = build_mtl(cfg, dim, rng)?;
    model.set_age_norm(Standardizer::fit(train.iter().map(|ex| ex.age_years))?);
    if cfg.standardize_features {
        let norm = (0..dim)
            .map(|j| Standardizer::fit(train.iter().map(|ex| ex.features[j])))
            .collect::<Result<Vec<_>>>()?;
        model.set_feature_norm(norm)?;
    }
    let mut history = MtlHistory::default();
    if cfg.max_epochs == 0 {
        return Ok((model, history));
    }

    let mut opt = OptimizerState::adam(cfg.learning_rate);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grads = model.zero_grads();
    let mut best: Option<(MtlModel, f64)> = None;
    let mut since_best = 0;
    for epoch in 0..cfg.max_epochs {
        order.shuffle(rng);
        let mut train_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.clear();
            for &i in batch {
                let t = target(&model, &train[i]);
                train_loss +=
                    model.accumulate_gradients(&train[i].features, &t, cfg.loss_terms, &mut grads)?;
            }
            grads.scale(1.0 / batch.len() as f64);
            opt.step(model.params_mut(), grads.iter())?;
        }
        let val_loss = mean_loss(&model, val, cfg)?;
        let val_s_mtl = val_score(&model, val);
        history.epochs.push(MtlEpoch {
            train_loss: train_loss / train.len() as f64,
            val_loss,
            val_s_mtl,
        });
        log::debug!(
            "mtl epoch {epoch}: train {:.4} val {val_loss:.4} s_mtl {val_s_mtl:?}",
            train_loss / train.len() as f64
        );
        if best.as_ref().map_or(true, |(_, l)| val_loss < *l) {
            best = Some((model.clone(), val_loss));
            history.best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let (model, _) = best.expect("at least one epoch ran");
    Ok((model, history))
}
