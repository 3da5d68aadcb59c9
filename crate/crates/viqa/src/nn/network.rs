use rand::Rng;
use rand_xoshiro::Xoshiro256PlusPlus;

use super::layer::{Layer, LayerGrad};
use super::{NnError, Tensor};

/// An ordered stack of layers applied in sequence.
#[derive(Clone, Debug)]
pub struct Network {
    pub layers: Vec<Layer>,
}

/// Per-layer activations retained by a forward pass: `activations[0]` is the
/// network input, `activations[i + 1]` the output of layer `i`.
#[derive(Clone, Debug)]
pub struct Trace {
    pub activations: Vec<Tensor>,
}

impl Trace {
    pub fn output(&self) -> &Tensor {
        self.activations.last().expect("trace never empty")
    }
}

/// Gradients for every layer of a network, `None` for stateless layers.
#[derive(Clone, Debug)]
pub struct NetGrads {
    pub layers: Vec<Option<LayerGrad>>,
}

impl NetGrads {
    pub fn zeros_like(net: &Network) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| match l {
                Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias, .. } => {
                    Some(LayerGrad {
                        weight: Tensor::zeros(weight.shape()),
                        bias: Tensor::zeros(bias.shape()),
                    })
                }
                _ => None,
            })
            .collect();
        Self { layers }
    }

    pub fn add_assign(&mut self, other: &NetGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
                for (x, y) in a.weight.data_mut().iter_mut().zip(b.weight.data()) {
                    *x += y;
                }
                for (x, y) in a.bias.data_mut().iter_mut().zip(b.bias.data()) {
                    *x += y;
                }
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for layer in self.layers.iter_mut().flatten() {
            for v in layer.weight.data_mut() {
                *v *= factor;
            }
            for v in layer.bias.data_mut() {
                *v *= factor;
            }
        }
    }

    /// Flat parameter-order view (weights then bias per layer).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in self.layers.iter().flatten() {
            out.extend_from_slice(layer.weight.data());
            out.extend_from_slice(layer.bias.data());
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flatten()
            .flat_map(|l| l.weight.data().iter().chain(l.bias.data()))
            .fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .flatten()
            .all(|l| l.weight.all_finite() && l.bias.all_finite())
    }
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    pub fn forward(&self, input: &Tensor) -> Result<Trace, NnError> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.clone());
        for layer in &self.layers {
            let next = layer.forward(activations.last().unwrap())?;
            activations.push(next);
        }
        Ok(Trace { activations })
    }

    /// Analytic gradients of the scalar whose output gradient is `out_grad`.
    /// Returns per-layer parameter gradients and the input gradient.
    pub fn backward(
        &self,
        trace: &Trace,
        out_grad: &Tensor,
    ) -> Result<(NetGrads, Tensor), NnError> {
        self.backward_impl(trace, out_grad, false)
    }

    /// Backward pass with the guided rule at every relu: positions whose
    /// forward input or incoming gradient is negative are zeroed. Only the
    /// input gradient is meaningful for visualization, but parameter
    /// gradients are produced by the same sweep.
    pub fn guided_backward(&self, trace: &Trace, out_grad: &Tensor) -> Result<Tensor, NnError> {
        let (_, input_grad) = self.backward_impl(trace, out_grad, true)?;
        Ok(input_grad)
    }

    fn backward_impl(
        &self,
        trace: &Trace,
        out_grad: &Tensor,
        guided: bool,
    ) -> Result<(NetGrads, Tensor), NnError> {
        if trace.activations.len() != self.layers.len() + 1 {
            return Err(NnError::ShapeMismatch(format!(
                "stale trace: {} activations for {} layers",
                trace.activations.len(),
                self.layers.len()
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut grad = out_grad.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.activations[i];
            let output = &trace.activations[i + 1];
            let (layer_grad, input_grad) = layer.backward(input, output, &grad, guided)?;
            grads.push(layer_grad);
            grad = input_grad;
        }
        grads.reverse();
        Ok((NetGrads { layers: grads }, grad))
    }

    /// Flattened parameters in layer order, weights before bias.
    pub fn params_to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            if let Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias, .. } = layer {
                out.extend_from_slice(weight.data());
                out.extend_from_slice(bias.data());
            }
        }
        out
    }

    pub fn load_params(&mut self, flat: &[f64]) -> Result<(), NnError> {
        if flat.len() != self.param_count() {
            return Err(NnError::ShapeMismatch(format!(
                "{} params for a network of {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        self.for_each_param_mut(|p| {
            *p = flat[offset];
            offset += 1;
        });
        Ok(())
    }

    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for layer in &mut self.layers {
            if let Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias, .. } = layer {
                for v in weight.data_mut() {
                    f(v);
                }
                for v in bias.data_mut() {
                    f(v);
                }
            }
        }
    }

    pub fn get_param(&self, index: usize) -> f64 {
        let mut i = index;
        for layer in &self.layers {
            if let Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias, .. } = layer {
                if i < weight.len() {
                    return weight.data()[i];
                }
                i -= weight.len();
                if i < bias.len() {
                    return bias.data()[i];
                }
                i -= bias.len();
            }
        }
        panic!("parameter index {index} out of range");
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let mut i = index;
        for layer in &mut self.layers {
            if let Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias, .. } = layer {
                if i < weight.len() {
                    weight.data_mut()[i] = value;
                    return;
                }
                i -= weight.len();
                if i < bias.len() {
                    bias.data_mut()[i] = value;
                    return;
                }
                i -= bias.len();
            }
        }
        panic!("parameter index {index} out of range");
    }

    /// Boolean sign masks of every relu input in `trace`, used by the
    /// gradient checker to detect kink crossings.
    pub fn relu_masks(&self, trace: &Trace) -> Vec<Vec<bool>> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, Layer::Relu))
            .map(|(i, _)| trace.activations[i].data().iter().map(|&v| v > 0.0).collect())
            .collect()
    }
}

/// Seeded He-uniform / Xavier-uniform initialization: a parameterized layer
/// followed by a relu (before the next parameterized layer) gets He fan-in
/// scaling, everything else Xavier. Biases start at zero.
pub fn he_xavier_init(net: &mut Network, rng: &mut Xoshiro256PlusPlus) {
    let relu_next: Vec<bool> = (0..net.layers.len())
        .map(|i| {
            for layer in &net.layers[i + 1..] {
                match layer {
                    Layer::Relu => return true,
                    Layer::Dense { .. } | Layer::Conv2d { .. } => return false,
                    Layer::Sigmoid | Layer::Softplus => return false,
                    Layer::GlobalAvgPool => continue,
                }
            }
            false
        })
        .collect();
    for (i, layer) in net.layers.iter_mut().enumerate() {
        let (weight, fan_in, fan_out) = match layer {
            Layer::Dense { weight, .. } => {
                let (out_dim, in_dim) = (weight.shape()[0], weight.shape()[1]);
                (weight, in_dim, out_dim)
            }
            Layer::Conv2d { weight, .. } => {
                let [oc, ic, k] = [weight.shape()[0], weight.shape()[1], weight.shape()[2]];
                (weight, ic * k * k, oc * k * k)
            }
            _ => continue,
        };
        let limit = if relu_next[i] {
            (6.0 / fan_in as f64).sqrt()
        } else {
            (6.0 / (fan_in + fan_out) as f64).sqrt()
        };
        for v in weight.data_mut() {
            *v = rng.gen_range(-limit..limit);
        }
    }
}
