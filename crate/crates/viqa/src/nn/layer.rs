use super::{NnError, Tensor};

/// One network layer. Parameterized layers own their weights; activations
/// and pooling are stateless.
#[derive(Clone, Debug)]
pub enum Layer {
    /// Fully connected: weight `[out, in]`, bias `[out]`.
    Dense { weight: Tensor, bias: Tensor },
    /// Valid 2-D convolution: weight `[oc, ic, k, k]`, bias `[oc]`.
    Conv2d {
        weight: Tensor,
        bias: Tensor,
        stride: usize,
    },
    Relu,
    Sigmoid,
    Softplus,
    /// `[c, h, w] -> [c]` spatial mean.
    GlobalAvgPool,
}

/// Gradients for one parameterized layer, shaped like its weight and bias.
#[derive(Clone, Debug)]
pub struct LayerGrad {
    pub weight: Tensor,
    pub bias: Tensor,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    let y = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    // Keep the output strictly inside (0, 1) even at saturation.
    y.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

pub(crate) fn softplus(x: f64) -> f64 {
    // max(x, 0) + ln(1 + e^-|x|), always positive.
    let v = x.max(0.0) + (-x.abs()).exp().ln_1p();
    v.max(f64::MIN_POSITIVE)
}

impl Layer {
    pub fn new_dense(in_dim: usize, out_dim: usize) -> Layer {
        Layer::Dense {
            weight: Tensor::zeros(&[out_dim, in_dim]),
            bias: Tensor::zeros(&[out_dim]),
        }
    }

    pub fn new_conv2d(in_ch: usize, out_ch: usize, kernel: usize, stride: usize) -> Layer {
        Layer::Conv2d {
            weight: Tensor::zeros(&[out_ch, in_ch, kernel, kernel]),
            bias: Tensor::zeros(&[out_ch]),
            stride,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Conv2d { .. } => "conv2d",
            Layer::Relu => "relu",
            Layer::Sigmoid => "sigmoid",
            Layer::Softplus => "softplus",
            Layer::GlobalAvgPool => "gap",
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Dense { weight, bias } | Layer::Conv2d { weight, bias, .. } => {
                weight.len() + bias.len()
            }
            _ => 0,
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor, NnError> {
        match self {
            Layer::Dense { weight, bias } => {
                let out_dim = weight.shape()[0];
                let in_dim = weight.shape()[1];
                if input.len() != in_dim {
                    return Err(NnError::ShapeMismatch(format!(
                        "dense expects {in_dim} inputs, got {}",
                        input.len()
                    )));
                }
                let w = weight.data();
                let x = input.data();
                let mut out = bias.data().to_vec();
                for (o, slot) in out.iter_mut().enumerate() {
                    let row = &w[o * in_dim..(o + 1) * in_dim];
                    let mut acc = 0.0;
                    for (wi, xi) in row.iter().zip(x) {
                        acc += wi * xi;
                    }
                    *slot += acc;
                }
                Tensor::from_vec(&[out_dim], out)
            }
            Layer::Conv2d {
                weight,
                bias,
                stride,
            } => {
                let [oc, ic, k, _] = [
                    weight.shape()[0],
                    weight.shape()[1],
                    weight.shape()[2],
                    weight.shape()[3],
                ];
                let shape = input.shape();
                if shape.len() != 3 || shape[0] != ic || shape[1] < k || shape[2] < k {
                    return Err(NnError::ShapeMismatch(format!(
                        "conv2d expects [{ic}, >={k}, >={k}], got {shape:?}"
                    )));
                }
                let (h, w) = (shape[1], shape[2]);
                let oh = (h - k) / stride + 1;
                let ow = (w - k) / stride + 1;
                let x = input.data();
                let wt = weight.data();
                let mut out = vec![0.0f64; oc * oh * ow];
                for o in 0..oc {
                    let b = bias.data()[o];
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut acc = b;
                            for i in 0..ic {
                                let wbase = ((o * ic) + i) * k * k;
                                let xbase = i * h * w;
                                for ky in 0..k {
                                    let xrow = xbase + (oy * stride + ky) * w + ox * stride;
                                    let wrow = wbase + ky * k;
                                    for kx in 0..k {
                                        acc += wt[wrow + kx] * x[xrow + kx];
                                    }
                                }
                            }
                            out[(o * oh + oy) * ow + ox] = acc;
                        }
                    }
                }
                Tensor::from_vec(&[oc, oh, ow], out)
            }
            Layer::Relu => Ok(Tensor::from_vec(
                input.shape(),
                input.data().iter().map(|&v| v.max(0.0)).collect(),
            )?),
            Layer::Sigmoid => Ok(Tensor::from_vec(
                input.shape(),
                input.data().iter().map(|&v| sigmoid(v)).collect(),
            )?),
            Layer::Softplus => Ok(Tensor::from_vec(
                input.shape(),
                input.data().iter().map(|&v| softplus(v)).collect(),
            )?),
            Layer::GlobalAvgPool => {
                let shape = input.shape();
                if shape.len() != 3 {
                    return Err(NnError::ShapeMismatch(format!(
                        "gap expects [c, h, w], got {shape:?}"
                    )));
                }
                let (c, hw) = (shape[0], shape[1] * shape[2]);
                let x = input.data();
                let out = (0..c)
                    .map(|i| x[i * hw..(i + 1) * hw].iter().sum::<f64>() / hw as f64)
                    .collect();
                Tensor::from_vec(&[c], out)
            }
        }
    }

    /// Gradient of a scalar with output-gradient `out_grad` through this
    /// layer. Returns parameter gradients (for parameterized layers) and the
    /// gradient with respect to the layer input. With `guided` set, relu
    /// backward additionally zeroes positions whose incoming gradient is
    /// negative.
    pub fn backward(
        &self,
        input: &Tensor,
        output: &Tensor,
        out_grad: &Tensor,
        guided: bool,
    ) -> Result<(Option<LayerGrad>, Tensor), NnError> {
        if out_grad.shape() != output.shape() {
            return Err(NnError::ShapeMismatch(format!(
                "gradient shape {:?} does not match output {:?}",
                out_grad.shape(),
                output.shape()
            )));
        }
        match self {
            Layer::Dense { weight, .. } => {
                let out_dim = weight.shape()[0];
                let in_dim = weight.shape()[1];
                let w = weight.data();
                let x = input.data();
                let g = out_grad.data();
                let mut wgrad = vec![0.0f64; out_dim * in_dim];
                let mut igrad = vec![0.0f64; in_dim];
                for o in 0..out_dim {
                    let go = g[o];
                    let row = &w[o * in_dim..(o + 1) * in_dim];
                    let wrow = &mut wgrad[o * in_dim..(o + 1) * in_dim];
                    for i in 0..in_dim {
                        wrow[i] = go * x[i];
                        igrad[i] += go * row[i];
                    }
                }
                Ok((
                    Some(LayerGrad {
                        weight: Tensor::from_vec(&[out_dim, in_dim], wgrad)?,
                        bias: Tensor::from_vec(&[out_dim], g.to_vec())?,
                    }),
                    Tensor::from_vec(&[in_dim], igrad)?,
                ))
            }
            Layer::Conv2d {
                weight, stride, ..
            } => {
                let [oc, ic, k, _] = [
                    weight.shape()[0],
                    weight.shape()[1],
                    weight.shape()[2],
                    weight.shape()[3],
                ];
                let (h, w) = (input.shape()[1], input.shape()[2]);
                let (oh, ow) = (output.shape()[1], output.shape()[2]);
                let x = input.data();
                let wt = weight.data();
                let g = out_grad.data();
                let mut wgrad = vec![0.0f64; wt.len()];
                let mut bgrad = vec![0.0f64; oc];
                let mut igrad = vec![0.0f64; x.len()];
                for o in 0..oc {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let go = g[(o * oh + oy) * ow + ox];
                            if go == 0.0 {
                                continue;
                            }
                            bgrad[o] += go;
                            for i in 0..ic {
                                let wbase = ((o * ic) + i) * k * k;
                                let xbase = i * h * w;
                                for ky in 0..k {
                                    let xrow = xbase + (oy * stride + ky) * w + ox * stride;
                                    let wrow = wbase + ky * k;
                                    for kx in 0..k {
                                        wgrad[wrow + kx] += go * x[xrow + kx];
                                        igrad[xrow + kx] += go * wt[wrow + kx];
                                    }
                                }
                            }
                        }
                    }
                }
                Ok((
                    Some(LayerGrad {
                        weight: Tensor::from_vec(weight.shape(), wgrad)?,
                        bias: Tensor::from_vec(&[oc], bgrad)?,
                    }),
                    Tensor::from_vec(input.shape(), igrad)?,
                ))
            }
            Layer::Relu => {
                let data = input
                    .data()
                    .iter()
                    .zip(out_grad.data())
                    .map(|(&x, &g)| {
                        let mut v = if x > 0.0 { g } else { 0.0 };
                        if guided && g < 0.0 {
                            v = 0.0;
                        }
                        v
                    })
                    .collect();
                Ok((None, Tensor::from_vec(input.shape(), data)?))
            }
            Layer::Sigmoid => {
                let data = output
                    .data()
                    .iter()
                    .zip(out_grad.data())
                    .map(|(&y, &g)| g * y * (1.0 - y))
                    .collect();
                Ok((None, Tensor::from_vec(input.shape(), data)?))
            }
            Layer::Softplus => {
                let data = input
                    .data()
                    .iter()
                    .zip(out_grad.data())
                    .map(|(&x, &g)| g * sigmoid(x))
                    .collect();
                Ok((None, Tensor::from_vec(input.shape(), data)?))
            }
            Layer::GlobalAvgPool => {
                let shape = input.shape();
                let (c, hw) = (shape[0], shape[1] * shape[2]);
                let g = out_grad.data();
                let mut data = vec![0.0f64; input.len()];
                for i in 0..c {
                    let gi = g[i] / hw as f64;
                    for v in &mut data[i * hw..(i + 1) * hw] {
                        *v = gi;
                    }
                }
                Ok((None, Tensor::from_vec(shape, data)?))
            }
        }
    }
}
