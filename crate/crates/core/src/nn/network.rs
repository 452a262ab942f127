use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LayerSpec, Tensor};
use crate::error::{Error, Result};

/// A feed-forward layer stack with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    /// Per layer: `[weight, bias]` or empty.
    params: Vec<Vec<Tensor>>,
    /// Per layer input shape; the last entry is the output shape.
    shapes: Vec<Vec<usize>>,
    rng_seed: u64,
}

/// Layer inputs recorded by [`Network::forward`], needed for backward.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Tensor>,
    output: Tensor,
}

impl ForwardCache {
    pub fn output(&self) -> &Tensor {
        &self.output
    }

    /// Input seen by layer `i` (so `layer_input(i + 1)` is layer `i`'s output).
    pub fn layer_input(&self, i: usize) -> &Tensor {
        &self.inputs[i]
    }
}

/// Parameter gradients laid out like [`Network`] parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<Tensor>>);

impl Gradients {
    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.0.iter().flatten()
    }

    pub fn scale(&mut self, c: f64) {
        for t in self.0.iter_mut().flatten() {
            t.data_mut().iter_mut().for_each(|v| *v *= c);
        }
    }

    pub fn clear(&mut self) {
        for t in self.0.iter_mut().flatten() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

fn chain_shapes(input_shape: &[usize], layers: &[LayerSpec]) -> Result<Vec<Vec<usize>>> {
    let mut shapes = vec![input_shape.to_vec()];
    for (i, l) in layers.iter().enumerate() {
        l.validate(i)?;
        let next = l.output_shape(i, shapes.last().unwrap())?;
        shapes.push(next);
    }
    Ok(shapes)
}

impl Network {
    /// Builds a network and initializes weights uniformly in
    /// `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn new<R: Rng + ?Sized>(
        input_shape: Vec<usize>,
        layers: Vec<LayerSpec>,
        rng: &mut R,
    ) -> Result<Self> {
        let rng_seed = rng.gen();
        Self::seeded(input_shape, layers, rng_seed)
    }

    pub fn seeded(input_shape: Vec<usize>, layers: Vec<LayerSpec>, rng_seed: u64) -> Result<Self> {
        let shapes = chain_shapes(&input_shape, &layers)?;
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let params = layers
            .iter()
            .map(|l| {
                let (fan_in, fan_out) = l.fans();
                let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
                l.param_shapes()
                    .into_iter()
                    .enumerate()
                    .map(|(j, shape)| {
                        let n = shape.iter().product();
                        let data = if j == 0 {
                            (0..n).map(|_| rng.gen_range(-limit..=limit)).collect()
                        } else {
                            vec![0.0; n]
                        };
                        Tensor::from_parts(shape, data)
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            input_shape,
            layers,
            params,
            shapes,
            rng_seed,
        })
    }

    /// Reassembles a network from stored parameters.
    pub fn from_parts(
        input_shape: Vec<usize>,
        layers: Vec<LayerSpec>,
        params: Vec<Vec<Tensor>>,
        rng_seed: u64,
    ) -> Result<Self> {
        let shapes = chain_shapes(&input_shape, &layers)?;
        if params.len() != layers.len() {
            return Err(Error::InvalidArgument(format!(
                "{} parameter groups for {} layers",
                params.len(),
                layers.len()
            )));
        }
        for (i, (l, p)) in layers.iter().zip(&params).enumerate() {
            let want = l.param_shapes();
            let got: Vec<Vec<usize>> = p.iter().map(|t| t.shape().to_vec()).collect();
            if want != got {
                return Err(Error::Layer {
                    index: i,
                    kind: l.kind_name(),
                    message: format!("parameter shapes {got:?}, expected {want:?}"),
                });
            }
        }
        Ok(Self {
            input_shape,
            layers,
            params,
            shapes,
            rng_seed,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().unwrap()
    }

    /// Input shape of layer `i`; `i == layers().len()` gives the output shape.
    pub fn shape_at(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Vec<Tensor>] {
        &self.params
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.params.iter_mut().flatten()
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().flatten().map(Tensor::len).sum()
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients(
            self.params
                .iter()
                .map(|p| p.iter().map(|t| Tensor::zeros(t.shape())).collect())
                .collect(),
        )
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.input_shape.as_slice() {
            let kind = self.layers.first().map_or("input", LayerSpec::kind_name);
            return Err(Error::Layer {
                index: 0,
                kind,
                message: format!(
                    "input shape {:?} does not match network input {:?}",
                    x.shape(),
                    self.input_shape
                ),
            });
        }
        Ok(())
    }

    /// Full forward pass keeping every layer input for [`Network::backward`].
    pub fn forward(&self, x: &Tensor) -> Result<ForwardCache> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            let next = l.forward(&self.params[i], &cur, self.shapes[i + 1].clone());
            inputs.push(cur);
            cur = next;
        }
        Ok(ForwardCache {
            inputs,
            output: cur,
        })
    }

    /// Output of the first `n_layers` layers, without caching.
    pub fn forward_prefix(&self, x: &Tensor, n_layers: usize) -> Result<Tensor> {
        self.check_input(x)?;
        if n_layers > self.layers.len() {
            return Err(Error::InvalidArgument(format!(
                "prefix of {n_layers} layers requested from a {}-layer network",
                self.layers.len()
            )));
        }
        let mut cur = x.clone();
        for i in 0..n_layers {
            cur = self.layers[i].forward(&self.params[i], &cur, self.shapes[i + 1].clone());
        }
        Ok(cur)
    }

    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_prefix(x, self.layers.len())
    }

    /// Exact gradients of a scalar loss given `dL/d output`. Returns the
    /// parameter gradients and `dL/d input`.
    pub fn backward(&self, cache: &ForwardCache, loss_grad: &Tensor) -> Result<(Gradients, Tensor)> {
        let mut grads = self.zero_grads();
        let dx = self.backward_accumulate(cache, loss_grad, &mut grads)?;
        Ok((grads, dx))
    }

    /// Like [`Network::backward`] but adds into existing gradients.
    pub fn backward_accumulate(
        &self,
        cache: &ForwardCache,
        loss_grad: &Tensor,
        grads: &mut Gradients,
    ) -> Result<Tensor> {
        let stale = cache.inputs.len() != self.layers.len()
            || cache
                .inputs
                .iter()
                .zip(&self.shapes)
                .any(|(t, s)| t.shape() != s.as_slice())
            || cache.output.shape() != self.output_shape();
        if stale {
            return Err(Error::InvalidArgument(
                "forward cache does not match this network".into(),
            ));
        }
        if loss_grad.shape() != self.output_shape() {
            return Err(Error::ShapeMismatch {
                context: "loss gradient".into(),
                expected: self.output_shape().to_vec(),
                actual: loss_grad.shape().to_vec(),
            });
        }
        if grads.0.len() != self.layers.len() {
            return Err(Error::InvalidArgument("gradient buffer layout mismatch".into()));
        }
        let mut g = loss_grad.clone();
        for i in (0..self.layers.len()).rev() {
            g = self.layers[i].backward(&self.params[i], &cache.inputs[i], &g, &mut grads.0[i]);
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv_net(kernel: &[f64]) -> Network {
        let spec = LayerSpec::Conv1d {
            in_channels: 1,
            out_channels: 1,
            kernel_len: kernel.len(),
            stride: 1,
        };
        Network::from_parts(
            vec![1, 4],
            vec![spec],
            vec![vec![
                Tensor::new(vec![1, 1, kernel.len()], kernel.to_vec()).unwrap(),
                Tensor::zeros(&[1]),
            ]],
            0,
        )
        .unwrap()
    }

    #[test]
    fn conv_is_cross_correlation() {
        let net = conv_net(&[1.0, 0.0, -1.0]);
        let x = Tensor::new(vec![1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(net.predict(&x).unwrap().data(), &[-2.0, -2.0]);
    }

    #[test]
    fn identity_dense_passes_input_through() {
        let mut w = vec![0.0; 9];
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        let net = Network::from_parts(
            vec![3],
            vec![LayerSpec::Dense { in_dim: 3, out_dim: 3 }],
            vec![vec![Tensor::new(vec![3, 3], w).unwrap(), Tensor::zeros(&[3])]],
            0,
        )
        .unwrap();
        let x = Tensor::vector(vec![0.3, -1.0, 7.0]).unwrap();
        assert_eq!(net.predict(&x).unwrap(), x);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let net = Network::seeded(vec![2], vec![LayerSpec::Softmax], 0).unwrap();
        let y = net.predict(&Tensor::vector(vec![0.0, 0.0]).unwrap()).unwrap();
        assert_eq!(y.data(), &[0.5, 0.5]);
    }

    #[test]
    fn dense_base_case_gradient() {
        // y = w x, L = y, x = 2 => dL/dw = 2.
        let net = Network::from_parts(
            vec![1],
            vec![LayerSpec::Dense { in_dim: 1, out_dim: 1 }],
            vec![vec![Tensor::new(vec![1, 1], vec![0.7]).unwrap(), Tensor::zeros(&[1])]],
            0,
        )
        .unwrap();
        let cache = net.forward(&Tensor::vector(vec![2.0]).unwrap()).unwrap();
        let (g, dx) = net.backward(&cache, &Tensor::vector(vec![1.0]).unwrap()).unwrap();
        assert_eq!(g.0[0][0].data(), &[2.0]);
        assert_eq!(g.0[0][1].data(), &[1.0]);
        assert_eq!(dx.data(), &[0.7]);
    }

    #[test]
    fn relu_blocks_gradient_for_negative_input() {
        let net = Network::seeded(vec![3], vec![LayerSpec::Relu], 0).unwrap();
        let cache = net.forward(&Tensor::vector(vec![-0.5, 0.2, -3.0]).unwrap()).unwrap();
        let (_, dx) = net.backward(&cache, &Tensor::vector(vec![1.0, 1.0, 1.0]).unwrap()).unwrap();
        assert_eq!(dx.data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn shape_mismatch_names_layer() {
        let layers = vec![
            LayerSpec::Dense { in_dim: 4, out_dim: 3 },
            LayerSpec::Relu,
            LayerSpec::Dense { in_dim: 5, out_dim: 2 },
        ];
        let err = Network::seeded(vec![4], layers, 1).unwrap_err().to_string();
        assert!(err.contains("layer 2 (dense)"), "{err}");

        let net = Network::seeded(vec![4], vec![LayerSpec::Dense { in_dim: 4, out_dim: 3 }], 1).unwrap();
        let err = net.forward(&Tensor::vector(vec![1.0; 5]).unwrap()).unwrap_err().to_string();
        assert!(err.contains("layer 0 (dense)"), "{err}");
    }

    #[test]
    fn stale_cache_is_rejected() {
        let a = Network::seeded(vec![4], vec![LayerSpec::Dense { in_dim: 4, out_dim: 3 }], 1).unwrap();
        let b = Network::seeded(
            vec![4],
            vec![LayerSpec::Dense { in_dim: 4, out_dim: 3 }, LayerSpec::Relu],
            1,
        )
        .unwrap();
        let cache = a.forward(&Tensor::vector(vec![1.0; 4]).unwrap()).unwrap();
        assert!(b.backward(&cache, &Tensor::vector(vec![1.0; 3]).unwrap()).is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let layers = vec![
            LayerSpec::Conv1d { in_channels: 1, out_channels: 3, kernel_len: 4, stride: 2 },
            LayerSpec::Relu,
            LayerSpec::Dense { in_dim: 3 * 7, out_dim: 5 },
            LayerSpec::Softmax,
        ];
        let a = Network::seeded(vec![1, 16], layers.clone(), 42).unwrap();
        let b = Network::seeded(vec![1, 16], layers, 42).unwrap();
        let x = Tensor::new(vec![1, 16], (0..16).map(|i| (i as f64).cos()).collect()).unwrap();
        let ya = a.predict(&x).unwrap();
        let yb = b.predict(&x).unwrap();
        assert_eq!(
            ya.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            yb.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn init_respects_glorot_bound() {
        let net = Network::seeded(vec![10], vec![LayerSpec::Dense { in_dim: 10, out_dim: 20 }], 3).unwrap();
        let limit = (6.0f64 / 30.0).sqrt();
        assert!(net.params()[0][0].data().iter().all(|w| w.abs() <= limit));
        assert!(net.params()[0][1].data().iter().all(|&b| b == 0.0));
    }
}
