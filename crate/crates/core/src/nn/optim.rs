use super::Tensor;
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    /// Plain SGD, no momentum.
    Sgd,
    Adam,
}

/// Optimizer plus its per-parameter state.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    pub learning_rate: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl OptimizerState {
    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Adam, learning_rate)
    }

    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            m: Vec::new(),
            v: Vec::new(),
            step: 0,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. Fails without touching anything if a gradient is
    /// non-finite or the layouts disagree.
    pub fn step<'a, 'b>(
        &mut self,
        params: impl IntoIterator<Item = &'a mut Tensor>,
        grads: impl IntoIterator<Item = &'b Tensor>,
    ) -> Result<()> {
        let mut params: Vec<&mut Tensor> = params.into_iter().collect();
        let grads: Vec<&Tensor> = grads.into_iter().collect();
        if params.len() != grads.len() {
            return Err(Error::InvalidArgument(format!(
                "{} parameter tensors but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(&grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::ShapeMismatch {
                    context: format!("gradient {i}"),
                    expected: p.shape().to_vec(),
                    actual: g.shape().to_vec(),
                });
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient {i}")));
            }
        }
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(&grads) {
                    for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.m.is_empty() {
                    self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
                    self.v = self.m.clone();
                } else if self.m.len() != grads.len()
                    || self.m.iter().zip(&grads).any(|(m, g)| m.len() != g.len())
                {
                    return Err(Error::InvalidArgument(
                        "adam state does not match parameter layout".into(),
                    ));
                }
                self.step += 1;
                let t = self.step as i32;
                let c1 = 1.0 - ADAM_BETA1.powi(t);
                let c2 = 1.0 - ADAM_BETA2.powi(t);
                for (k, (p, g)) in params.iter_mut().zip(&grads).enumerate() {
                    let (m, v) = (&mut self.m[k], &mut self.v[k]);
                    for (j, (w, &d)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * d;
                        v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * d * d;
                        let m_hat = m[j] / c1;
                        let v_hat = v[j] / c2;
                        *w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
                    }
                }
            }
        }
        Ok(())
    }
}
