use rand::seq::SliceRandom;
use rand::Rng;

use super::{build_embedder, EmbedderConfig};
use crate::error::{invalid, Result};
use crate::nn::{
    loss_cross_entropy, loss_cross_entropy_grad, LrEvent, LrSchedule, Network, OptimizerState,
    Tensor,
};
use crate::signal::FrameSet;

/// Frames of one utterance with its class; every frame carries the label.
#[derive(Debug, Clone)]
pub struct LabeledFrames {
    pub frames: FrameSet,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbedderEpoch {
    pub train_loss: f64,
    pub crossval_loss: f64,
    /// Learning rate used during the epoch.
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbedderHistory {
    pub epochs: Vec<EmbedderEpoch>,
    /// Index into `epochs` of the returned parameters.
    pub best_epoch: Option<usize>,
    pub warnings: Vec<String>,
}

impl EmbedderHistory {
    pub fn best_crossval_loss(&self) -> Option<f64> {
        self.best_epoch.map(|i| self.epochs[i].crossval_loss)
    }
}

pub(crate) fn frame_tensor(frame: &[f64]) -> Tensor {
    Tensor::from_parts(vec![1, frame.len()], frame.to_vec())
}

fn mean_loss(net: &Network, items: &[(&[f64], usize)]) -> Result<f64> {
    let mut total = 0.0;
    for &(frame, label) in items {
        let p = net.predict(&frame_tensor(frame))?;
        total += loss_cross_entropy(&p, label)?;
    }
    Ok(total / items.len() as f64)
}

fn flatten(set: &[LabeledFrames]) -> Vec<(&[f64], usize)> {
    set.iter()
        .flat_map(|u| u.frames.frames().iter().map(move |f| (f.as_slice(), u.label)))
        .collect()
}

/// Frame-level SGD with cross-entropy and the halve-on-plateau schedule.
///
/// Stops after `max_epochs` or once the learning rate is exhausted at its
/// floor, and returns the parameters with the lowest cross-validation loss.
pub fn train_embedder<R: Rng + ?Sized>(
    cfg: &EmbedderConfig,
    train: &[LabeledFrames],
    crossval: &[LabeledFrames],
    rng: &mut R,
) -> Result<(Network, EmbedderHistory)> {
    cfg.validate()?;
    if train.is_empty() || crossval.is_empty() {
        return Err(invalid(
            "train_embedder needs at least one training and one cross-validation utterance",
        ));
    }
    let n_classes = cfg.n_classes();
    if let Some(u) = train.iter().chain(crossval).find(|u| u.label >= n_classes) {
        return Err(invalid(format!(
            "{}: label {} outside 0..{n_classes}",
            u.frames.source_id, u.label
        )));
    }
    let mut net = build_embedder(cfg, rng)?;
    let mut history = EmbedderHistory::default();
    for c in 0..n_classes {
        if !train.iter().any(|u| u.label == c) {
            history
                .warnings
                .push(format!("class {c} absent from the training subset"));
        }
    }
    for w in &history.warnings {
        log::warn!("{w}");
    }
    if cfg.max_epochs == 0 {
        return Ok((net, history));
    }

    let train_items = flatten(train);
    let cv_items = flatten(crossval);
    let mut schedule = LrSchedule::new(cfg.initial_lr);
    let mut opt = OptimizerState::sgd(schedule.current_lr);
    let mut order: Vec<usize> = (0..train_items.len()).collect();
    let mut grads = net.zero_grads();
    let mut best: Option<(Network, f64)> = None;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(rng);
        opt.learning_rate = schedule.current_lr;
        let mut train_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.clear();
            for &i in batch {
                let (frame, label) = train_items[i];
                let cache = net.forward(&frame_tensor(frame))?;
                train_loss += loss_cross_entropy(cache.output(), label)?;
                let g = loss_cross_entropy_grad(cache.output(), label)?;
                net.backward_accumulate(&cache, &g, &mut grads)?;
            }
            grads.scale(1.0 / batch.len() as f64);
            opt.step(net.params_mut(), grads.iter())?;
        }
        let crossval_loss = mean_loss(&net, &cv_items)?;
        history.epochs.push(EmbedderEpoch {
            train_loss: train_loss / train_items.len() as f64,
            crossval_loss,
            learning_rate: opt.learning_rate,
        });
        log::debug!(
            "embedder epoch {epoch}: train {:.4} crossval {crossval_loss:.4} lr {:.2e}",
            train_loss / train_items.len() as f64,
            opt.learning_rate
        );
        if best.as_ref().map_or(true, |(_, l)| crossval_loss < *l) {
            best = Some((net.clone(), crossval_loss));
            history.best_epoch = Some(epoch);
        }
        if schedule.update(crossval_loss) == LrEvent::Exhausted {
            break;
        }
    }
    let (net, _) = best.expect("at least one epoch ran");
    Ok((net, history))
}
