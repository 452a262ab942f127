use super::Tensor;
use crate::error::{Error, Result};

/// Probabilities are clamped to this before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

fn same_shape(pred: &Tensor, target: &Tensor) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            context: "loss".into(),
            expected: target.shape().to_vec(),
            actual: pred.shape().to_vec(),
        });
    }
    Ok(())
}

/// Mean over all elements of the squared difference.
pub fn loss_mse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    same_shape(pred, target)?;
    let n = pred.len() as f64;
    Ok(pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

/// Gradient of [`loss_mse`] with respect to `pred`.
pub fn loss_mse_grad(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    same_shape(pred, target)?;
    let n = pred.len() as f64;
    let g = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| 2.0 * (p - t) / n)
        .collect();
    Ok(Tensor::from_parts(pred.shape().to_vec(), g))
}

fn check_distribution(probs: &Tensor, class_index: usize) -> Result<()> {
    if class_index >= probs.len() {
        return Err(Error::InvalidArgument(format!(
            "class index {class_index} out of range for {} classes",
            probs.len()
        )));
    }
    let sum: f64 = probs.data().iter().sum();
    if (sum - 1.0).abs() > 1e-6 || probs.data().iter().any(|&p| p < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cross-entropy input is not a distribution (sum {sum})"
        )));
    }
    Ok(())
}

/// `-ln(probs[class_index])` with the probability floored at [`PROB_FLOOR`].
pub fn loss_cross_entropy(probs: &Tensor, class_index: usize) -> Result<f64> {
    check_distribution(probs, class_index)?;
    Ok(-probs.data()[class_index].max(PROB_FLOOR).ln())
}

/// Gradient of [`loss_cross_entropy`] with respect to the probabilities.
pub fn loss_cross_entropy_grad(probs: &Tensor, class_index: usize) -> Result<Tensor> {
    check_distribution(probs, class_index)?;
    let mut g = vec![0.0; probs.len()];
    let p = probs.data()[class_index];
    // The floor is flat below PROB_FLOOR.
    if p > PROB_FLOOR {
        g[class_index] = -1.0 / p;
    }
    Ok(Tensor::from_parts(probs.shape().to_vec(), g))
}
