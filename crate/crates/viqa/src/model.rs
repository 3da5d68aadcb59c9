//! The learned quality model: a patch-based score predictor that pools
//! per-patch qualities with learned positive weights, a conditional
//! discriminator ("guider") over score/image pairs used during adversarial
//! training, and guided-backprop saliency extraction.

use std::io::Write as _;
use std::path::Path;

use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use thiserror::Error;

use crate::nn::{
    he_xavier_init, read_network, write_network, Layer, NetGrads, Network, NnError, SliceReader,
    Tensor, Trace,
};
use crate::raster::{assemble_tiles, extract_patch_grid, ImageBuffer, ImageError, Patch};

/// Quality-head outputs are multiplied by this to reach the 0-100 score
/// scale, so the dense stack itself works near unit magnitude.
pub const SCORE_SCALE: f64 = 100.0;
/// Additive floor keeping every pooled weight strictly positive.
pub const WEIGHT_EPS: f64 = 1e-6;
/// The discriminator consumes scores divided by this.
pub const DISC_SCORE_SCALE: f64 = 100.0;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("model file: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Architecture of the patch encoder: a stack of 3x3 stride-2 convolutions
/// (one per entry of `conv_channels`, each followed by relu), global average
/// pooling, and a dense projection to `feature_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub feature_dim: usize,
    pub conv_channels: Vec<usize>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            feature_dim: 64,
            conv_channels: vec![6, 12, 24],
        }
    }
}

impl EncoderConfig {
    /// A one-conv configuration small enough for finite-difference checks.
    pub fn tiny(feature_dim: usize) -> Self {
        Self {
            feature_dim,
            conv_channels: vec![2],
        }
    }

    pub fn build_encoder(&self, in_channels: usize) -> Network {
        let mut layers = Vec::new();
        let mut ch = in_channels;
        for &out in &self.conv_channels {
            layers.push(Layer::new_conv2d(ch, out, 3, 2));
            layers.push(Layer::Relu);
            ch = out;
        }
        layers.push(Layer::GlobalAvgPool);
        layers.push(Layer::new_dense(ch, self.feature_dim));
        Network::new(layers)
    }
}

/// Hidden widths of the four-dense-layer estimator heads. The taper halves
/// from the feature dimension; at D = 2048 the published 512/64/8 taper is
/// used instead.
fn head_widths(feature_dim: usize) -> [usize; 3] {
    if feature_dim == 2048 {
        [512, 64, 8]
    } else {
        [
            (feature_dim / 2).max(1),
            (feature_dim / 4).max(1),
            (feature_dim / 8).max(1),
        ]
    }
}

/// Four dense layers tapering to one output, relu between hidden layers,
/// with an optional final activation layer.
fn build_head(input_dim: usize, feature_dim: usize, final_activation: Option<Layer>) -> Network {
    let [h1, h2, h3] = head_widths(feature_dim);
    let mut layers = vec![
        Layer::new_dense(input_dim, h1),
        Layer::Relu,
        Layer::new_dense(h1, h2),
        Layer::Relu,
        Layer::new_dense(h2, h3),
        Layer::Relu,
        Layer::new_dense(h3, 1),
    ];
    if let Some(act) = final_activation {
        layers.push(act);
    }
    Network::new(layers)
}

/// The quality score predictor: per-patch spatial features, a positive
/// weight estimator over feature+position, a quality estimator over
/// features, and weighted-average pooling of the per-patch qualities.
#[derive(Clone, Debug)]
pub struct PredictorModel {
    pub encoder: Network,
    /// Input `feature_dim + 2`; softplus output, floored by [`WEIGHT_EPS`].
    pub weight_head: Network,
    /// Input `feature_dim`; linear output on the unit scale, multiplied by
    /// [`SCORE_SCALE`].
    pub quality_head: Network,
    pub patch_size: usize,
    /// Image half-dimensions used to normalize patch positions to [-1, 1].
    pub position_scale: [f64; 2],
    pub feature_dim: usize,
    pub in_channels: usize,
}

/// The human-perception guider: a separate patch encoder plus a sigmoid
/// discriminator over `concat(sf_d, sf_r, sf_d - sf_r, score)`.
#[derive(Clone, Debug)]
pub struct GuiderModel {
    pub encoder: Network,
    pub disc_head: Network,
    pub patch_size: usize,
    pub feature_dim: usize,
    pub in_channels: usize,
}

/// Per-patch weights and qualities together with the pooled score.
#[derive(Clone, Debug)]
pub struct ScoreBreakdown {
    pub weights: Vec<f64>,
    pub qualities: Vec<f64>,
    pub score: f64,
}

/// Weighted-average pooling of per-patch qualities; weights must be
/// positive, making the result a convex combination.
pub fn pool_scores(weights: &[f64], qualities: &[f64]) -> f64 {
    debug_assert_eq!(weights.len(), qualities.len());
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (&w, &q) in weights.iter().zip(qualities) {
        num += w * q;
        den += w;
    }
    num / den
}

/// Converts patch pixels (channel-planar already) to a centered `[c, p, p]`
/// tensor; shifting to [-0.5, 0.5] keeps first-layer activations balanced.
pub fn patch_to_tensor(patch: &Patch) -> Tensor {
    let p = patch.pixels.width();
    let c = patch.pixels.channels();
    Tensor::from_vec(
        &[c, p, p],
        patch
            .pixels
            .data()
            .iter()
            .map(|&v| v as f64 - 0.5)
            .collect(),
    )
    .expect("patch buffer length matches its shape")
}

/// Runs the spatial encoder on one patch, producing its feature vector.
pub fn encode_patch(encoder: &Network, patch: &Patch) -> Result<Tensor, NnError> {
    let trace = encoder.forward(&patch_to_tensor(patch))?;
    Ok(trace.output().clone())
}

pub fn build_predictor(
    cfg: &EncoderConfig,
    in_channels: usize,
    patch_size: usize,
    image_dims: (usize, usize),
    rng: &mut Xoshiro256PlusPlus,
) -> Result<PredictorModel, ModelError> {
    let mut encoder = cfg.build_encoder(in_channels);
    let mut weight_head = build_head(cfg.feature_dim + 2, cfg.feature_dim, Some(Layer::Softplus));
    let mut quality_head = build_head(cfg.feature_dim, cfg.feature_dim, None);
    he_xavier_init(&mut encoder, rng);
    he_xavier_init(&mut weight_head, rng);
    he_xavier_init(&mut quality_head, rng);
    // Start predictions mid-scale: the final quality bias is the pooled
    // score when features carry no signal yet.
    if let Some(Layer::Dense { bias, .. }) = quality_head
        .layers
        .iter_mut()
        .rev()
        .find(|l| matches!(l, Layer::Dense { .. }))
    {
        bias.data_mut()[0] = 0.5;
    }
    let model = PredictorModel {
        encoder,
        weight_head,
        quality_head,
        patch_size,
        position_scale: [image_dims.0 as f64 / 2.0, image_dims.1 as f64 / 2.0],
        feature_dim: cfg.feature_dim,
        in_channels,
    };
    // Reject patch sizes the conv stack cannot reduce.
    model
        .encoder
        .forward(&Tensor::zeros(&[in_channels, patch_size, patch_size]))?;
    Ok(model)
}

pub fn build_guider(
    cfg: &EncoderConfig,
    in_channels: usize,
    patch_size: usize,
    rng: &mut Xoshiro256PlusPlus,
) -> Result<GuiderModel, ModelError> {
    let mut encoder = cfg.build_encoder(in_channels);
    let mut disc_head = build_head(3 * cfg.feature_dim + 1, cfg.feature_dim, Some(Layer::Sigmoid));
    he_xavier_init(&mut encoder, rng);
    he_xavier_init(&mut disc_head, rng);
    let model = GuiderModel {
        encoder,
        disc_head,
        patch_size,
        feature_dim: cfg.feature_dim,
        in_channels,
    };
    model
        .encoder
        .forward(&Tensor::zeros(&[in_channels, patch_size, patch_size]))?;
    Ok(model)
}

/// One patch's forward state retained for backprop.
pub struct PatchForward {
    pub enc_trace: Trace,
    pub weight_trace: Trace,
    pub quality_trace: Trace,
    pub weight: f64,
    pub quality: f64,
}

/// Full forward pass of the predictor over one image.
pub struct PredictorForward {
    pub patches: Vec<PatchForward>,
    pub breakdown: ScoreBreakdown,
}

/// Parameter gradients for all three predictor networks.
pub struct PredictorGrads {
    pub encoder: NetGrads,
    pub weight_head: NetGrads,
    pub quality_head: NetGrads,
}

impl PredictorGrads {
    pub fn zeros_like(model: &PredictorModel) -> Self {
        Self {
            encoder: NetGrads::zeros_like(&model.encoder),
            weight_head: NetGrads::zeros_like(&model.weight_head),
            quality_head: NetGrads::zeros_like(&model.quality_head),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.encoder.add_assign(&other.encoder);
        self.weight_head.add_assign(&other.weight_head);
        self.quality_head.add_assign(&other.quality_head);
    }

    pub fn scale(&mut self, factor: f64) {
        self.encoder.scale(factor);
        self.weight_head.scale(factor);
        self.quality_head.scale(factor);
    }

    pub fn max_abs(&self) -> f64 {
        self.encoder
            .max_abs()
            .max(self.weight_head.max_abs())
            .max(self.quality_head.max_abs())
    }

    pub fn all_finite(&self) -> bool {
        self.encoder.all_finite()
            && self.weight_head.all_finite()
            && self.quality_head.all_finite()
    }
}

impl PredictorModel {
    pub fn normalized_position(&self, patch: &Patch) -> [f64; 2] {
        [
            patch.position[0] / self.position_scale[0],
            patch.position[1] / self.position_scale[1],
        ]
    }

    /// Forward pass retaining every trace needed for backprop.
    pub fn forward_full(&self, img: &ImageBuffer) -> Result<PredictorForward, ModelError> {
        let set = extract_patch_grid(img, self.patch_size)?;
        let patches: Vec<PatchForward> = set
            .patches
            .par_iter()
            .map(|patch| self.forward_patch(patch))
            .collect::<Result<_, NnError>>()?;
        let weights: Vec<f64> = patches.iter().map(|p| p.weight).collect();
        let qualities: Vec<f64> = patches.iter().map(|p| p.quality).collect();
        let score = pool_scores(&weights, &qualities);
        Ok(PredictorForward {
            patches,
            breakdown: ScoreBreakdown {
                weights,
                qualities,
                score,
            },
        })
    }

    fn forward_patch(&self, patch: &Patch) -> Result<PatchForward, NnError> {
        let enc_trace = self.encoder.forward(&patch_to_tensor(patch))?;
        let sf = enc_trace.output();
        let pf = {
            let p = self.normalized_position(patch);
            Tensor::from_vec(&[2], vec![p[0], p[1]]).expect("fixed shape")
        };
        let cf = Tensor::concat(&[sf, &pf]);
        let weight_trace = self.weight_head.forward(&cf)?;
        let quality_trace = self.quality_head.forward(sf)?;
        let weight = weight_trace.output().data()[0] + WEIGHT_EPS;
        let quality = SCORE_SCALE * quality_trace.output().data()[0];
        Ok(PatchForward {
            enc_trace,
            weight_trace,
            quality_trace,
            weight,
            quality,
        })
    }

    /// Pooled score and per-patch breakdown for one image.
    pub fn predict(&self, img: &ImageBuffer) -> Result<ScoreBreakdown, ModelError> {
        Ok(self.forward_full(img)?.breakdown)
    }

    /// Backpropagates `score_grad = dL/d(pooled score)` into parameter
    /// gradients for the encoder and both heads.
    pub fn backward_score(
        &self,
        fwd: &PredictorForward,
        score_grad: f64,
    ) -> Result<PredictorGrads, ModelError> {
        let total_weight: f64 = fwd.breakdown.weights.iter().sum();
        let score = fwd.breakdown.score;
        let per_patch: Vec<PredictorGrads> = fwd
            .patches
            .par_iter()
            .map(|p| {
                // d score / d q_i and d score / d w_i of the weighted mean.
                let g_quality = score_grad * p.weight / total_weight * SCORE_SCALE;
                let g_weight = score_grad * (p.quality - score) / total_weight;
                let (quality_grads, sf_from_quality) = self
                    .quality_head
                    .backward(&p.quality_trace, &Tensor::scalar(g_quality))?;
                let (weight_grads, cf_grad) = self
                    .weight_head
                    .backward(&p.weight_trace, &Tensor::scalar(g_weight))?;
                let d = self.feature_dim;
                let mut sf_grad = Tensor::zeros(&[d]);
                for i in 0..d {
                    sf_grad.data_mut()[i] = sf_from_quality.data()[i] + cf_grad.data()[i];
                }
                let (encoder_grads, _) = self.encoder.backward(&p.enc_trace, &sf_grad)?;
                Ok(PredictorGrads {
                    encoder: encoder_grads,
                    weight_head: weight_grads,
                    quality_head: quality_grads,
                })
            })
            .collect::<Result<_, NnError>>()?;
        let mut total = PredictorGrads::zeros_like(self);
        for g in &per_patch {
            total.add_assign(g);
        }
        Ok(total)
    }

    /// Guided-backprop saliency of the pooled score with respect to the
    /// input pixels, reassembled to the image layout, absolute values
    /// max-normalized to `[0, 1]`.
    pub fn saliency_map(&self, img: &ImageBuffer) -> Result<ImageBuffer, ModelError> {
        let set = extract_patch_grid(img, self.patch_size)?;
        let fwd = self.forward_full(img)?;
        let total_weight: f64 = fwd.breakdown.weights.iter().sum();
        let score = fwd.breakdown.score;
        let p = self.patch_size;
        let maps: Vec<Vec<f64>> = fwd
            .patches
            .par_iter()
            .map(|patch| {
                let g_quality = patch.weight / total_weight * SCORE_SCALE;
                let g_weight = (patch.quality - score) / total_weight;
                let sf_from_quality = self
                    .quality_head
                    .guided_backward(&patch.quality_trace, &Tensor::scalar(g_quality))?;
                let cf_grad = self
                    .weight_head
                    .guided_backward(&patch.weight_trace, &Tensor::scalar(g_weight))?;
                let d = self.feature_dim;
                let mut sf_grad = Tensor::zeros(&[d]);
                for i in 0..d {
                    sf_grad.data_mut()[i] = sf_from_quality.data()[i] + cf_grad.data()[i];
                }
                let pixel_grad = self.encoder.guided_backward(&patch.enc_trace, &sf_grad)?;
                // Collapse channels by the per-pixel maximum magnitude.
                let data = pixel_grad.data();
                let mut map = vec![0.0f64; p * p];
                for c in 0..self.in_channels {
                    for (i, slot) in map.iter_mut().enumerate() {
                        *slot = slot.max(data[c * p * p + i].abs());
                    }
                }
                Ok(map)
            })
            .collect::<Result<_, NnError>>()?;
        let peak = maps
            .iter()
            .flat_map(|m| m.iter())
            .fold(0.0f64, |acc, &v| acc.max(v));
        let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
        let tiles: Vec<ImageBuffer> = maps
            .iter()
            .map(|m| {
                ImageBuffer::new(p, p, 1, m.iter().map(|&v| (v * scale) as f32).collect())
                    .expect("normalized saliency stays in range")
            })
            .collect();
        let refs: Vec<&ImageBuffer> = tiles.iter().collect();
        Ok(assemble_tiles(&refs, set.grid)?)
    }
}

/// Mean encoder feature over the patch grid of one image, with the per-patch
/// traces retained for backprop.
pub struct ImageEncoding {
    pub traces: Vec<Trace>,
    pub mean_feature: Tensor,
}

/// Gradients of the guider's two networks.
pub struct GuiderGrads {
    pub encoder: NetGrads,
    pub disc_head: NetGrads,
}

impl GuiderGrads {
    pub fn zeros_like(model: &GuiderModel) -> Self {
        Self {
            encoder: NetGrads::zeros_like(&model.encoder),
            disc_head: NetGrads::zeros_like(&model.disc_head),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.encoder.add_assign(&other.encoder);
        self.disc_head.add_assign(&other.disc_head);
    }

    pub fn scale(&mut self, factor: f64) {
        self.encoder.scale(factor);
        self.disc_head.scale(factor);
    }

    pub fn max_abs(&self) -> f64 {
        self.encoder.max_abs().max(self.disc_head.max_abs())
    }

    pub fn all_finite(&self) -> bool {
        self.encoder.all_finite() && self.disc_head.all_finite()
    }
}

impl GuiderModel {
    /// Encodes every patch of `img` and averages the features.
    pub fn encode_image(&self, img: &ImageBuffer) -> Result<ImageEncoding, ModelError> {
        let set = extract_patch_grid(img, self.patch_size)?;
        let traces: Vec<Trace> = set
            .patches
            .par_iter()
            .map(|patch| self.encoder.forward(&patch_to_tensor(patch)))
            .collect::<Result<_, NnError>>()?;
        let d = self.feature_dim;
        let mut mean = Tensor::zeros(&[d]);
        for trace in &traces {
            for (m, &v) in mean.data_mut().iter_mut().zip(trace.output().data()) {
                *m += v;
            }
        }
        let n = traces.len() as f64;
        for m in mean.data_mut() {
            *m /= n;
        }
        Ok(ImageEncoding {
            traces,
            mean_feature: mean,
        })
    }

    /// Discriminator input `concat(sf_d, sf_r, sf_d - sf_r, score / 100)`.
    pub fn disc_input(&self, sf_d: &Tensor, sf_r: &Tensor, score: f64) -> Tensor {
        let diff = Tensor::from_vec(
            &[self.feature_dim],
            sf_d.data()
                .iter()
                .zip(sf_r.data())
                .map(|(&a, &b)| a - b)
                .collect(),
        )
        .expect("fixed shape");
        let s = Tensor::scalar(score / DISC_SCORE_SCALE);
        Tensor::concat(&[sf_d, sf_r, &diff, &s])
    }

    /// Forward through the discriminator head; the trace output is the
    /// probability that `score` is a human rating.
    pub fn forward_disc(
        &self,
        sf_d: &Tensor,
        sf_r: &Tensor,
        score: f64,
    ) -> Result<Trace, ModelError> {
        Ok(self.disc_head.forward(&self.disc_input(sf_d, sf_r, score))?)
    }

    /// Probability that `score` is a human rating for the given image pair.
    pub fn discriminate(
        &self,
        score: f64,
        img_d: &ImageBuffer,
        img_r: &ImageBuffer,
    ) -> Result<f64, ModelError> {
        if !img_d.same_shape(img_r) {
            return Err(ModelError::Nn(NnError::ShapeMismatch(
                "distorted and reference images differ in shape".into(),
            )));
        }
        let enc_d = self.encode_image(img_d)?;
        let enc_r = self.encode_image(img_r)?;
        let trace = self.forward_disc(&enc_d.mean_feature, &enc_r.mean_feature, score)?;
        Ok(trace.output().data()[0])
    }

    /// Splits a gradient on the disc input into gradients on the two mean
    /// features (folding in the difference block) and the raw score.
    pub fn split_disc_input_grad(&self, input_grad: &Tensor) -> (Tensor, Tensor, f64) {
        let d = self.feature_dim;
        let g = input_grad.data();
        let mut gd = Tensor::zeros(&[d]);
        let mut gr = Tensor::zeros(&[d]);
        for i in 0..d {
            gd.data_mut()[i] = g[i] + g[2 * d + i];
            gr.data_mut()[i] = g[d + i] - g[2 * d + i];
        }
        let g_score = g[3 * d] / DISC_SCORE_SCALE;
        (gd, gr, g_score)
    }

    /// Accumulates encoder gradients for one encoded image given the
    /// gradient on its mean feature.
    pub fn backward_encoder(
        &self,
        encoding: &ImageEncoding,
        mean_grad: &Tensor,
    ) -> Result<NetGrads, ModelError> {
        let n = encoding.traces.len() as f64;
        let per_patch = Tensor::from_vec(
            &[self.feature_dim],
            mean_grad.data().iter().map(|&v| v / n).collect(),
        )
        .expect("fixed shape");
        let grads: Vec<NetGrads> = encoding
            .traces
            .par_iter()
            .map(|trace| self.encoder.backward(trace, &per_patch).map(|(g, _)| g))
            .collect::<Result<_, NnError>>()?;
        let mut total = NetGrads::zeros_like(&self.encoder);
        for g in &grads {
            total.add_assign(g);
        }
        Ok(total)
    }
}

const MODEL_MAGIC: &str = "viqa-model v1";

/// Writes the predictor (and optionally the guider) into the model
/// container: textual metadata, then one network section per component.
pub fn save_model(
    path: &Path,
    predictor: &PredictorModel,
    guider: Option<&GuiderModel>,
) -> Result<(), ModelError> {
    let mut out: Vec<u8> = Vec::new();
    writeln!(out, "{MODEL_MAGIC}")?;
    writeln!(out, "patch_size {}", predictor.patch_size)?;
    writeln!(out, "feature_dim {}", predictor.feature_dim)?;
    writeln!(out, "in_channels {}", predictor.in_channels)?;
    writeln!(
        out,
        "position_scale {} {}",
        predictor.position_scale[0], predictor.position_scale[1]
    )?;
    writeln!(out, "networks {}", if guider.is_some() { 5 } else { 3 })?;
    write_network(&mut out, "encoder", &predictor.encoder)?;
    write_network(&mut out, "weight_head", &predictor.weight_head)?;
    write_network(&mut out, "quality_head", &predictor.quality_head)?;
    if let Some(g) = guider {
        write_network(&mut out, "guider_encoder", &g.encoder)?;
        write_network(&mut out, "guider_head", &g.disc_head)?;
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a model container written by [`save_model`].
pub fn load_model(path: &Path) -> Result<(PredictorModel, Option<GuiderModel>), ModelError> {
    let bytes = std::fs::read(path)?;
    let mut reader = SliceReader::new(&bytes);
    let magic = reader.read_line().map_err(ModelError::Nn)?;
    if magic != MODEL_MAGIC {
        return Err(ModelError::Format(format!(
            "bad magic '{magic}', expected '{MODEL_MAGIC}'"
        )));
    }
    let mut patch_size = None;
    let mut feature_dim = None;
    let mut in_channels = None;
    let mut position_scale = None;
    let mut network_count = None;
    while network_count.is_none() {
        let line = reader.read_line().map_err(ModelError::Nn)?;
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("patch_size") => patch_size = fields.next().and_then(|v| v.parse().ok()),
            Some("feature_dim") => feature_dim = fields.next().and_then(|v| v.parse().ok()),
            Some("in_channels") => in_channels = fields.next().and_then(|v| v.parse().ok()),
            Some("position_scale") => {
                let x: Option<f64> = fields.next().and_then(|v| v.parse().ok());
                let y: Option<f64> = fields.next().and_then(|v| v.parse().ok());
                position_scale = x.zip(y).map(|(a, b)| [a, b]);
            }
            Some("networks") => network_count = fields.next().and_then(|v| v.parse::<usize>().ok()),
            other => {
                return Err(ModelError::Format(format!(
                    "unexpected metadata line '{other:?}'"
                )))
            }
        }
    }
    let (patch_size, feature_dim, in_channels, position_scale, network_count) = (
        patch_size.ok_or_else(|| ModelError::Format("missing patch_size".into()))?,
        feature_dim.ok_or_else(|| ModelError::Format("missing feature_dim".into()))?,
        in_channels.ok_or_else(|| ModelError::Format("missing in_channels".into()))?,
        position_scale.ok_or_else(|| ModelError::Format("missing position_scale".into()))?,
        network_count.ok_or_else(|| ModelError::Format("missing network count".into()))?,
    );
    if network_count != 3 && network_count != 5 {
        return Err(ModelError::Format(format!(
            "expected 3 or 5 networks, found {network_count}"
        )));
    }
    let mut networks = Vec::with_capacity(network_count);
    for expected in ["encoder", "weight_head", "quality_head", "guider_encoder", "guider_head"]
        .iter()
        .take(network_count)
    {
        let (name, net) = read_network(&mut reader).map_err(ModelError::Nn)?;
        if name != *expected {
            return Err(ModelError::Format(format!(
                "expected network '{expected}', found '{name}'"
            )));
        }
        networks.push(net);
    }
    let mut iter = networks.into_iter();
    let predictor = PredictorModel {
        encoder: iter.next().unwrap(),
        weight_head: iter.next().unwrap(),
        quality_head: iter.next().unwrap(),
        patch_size,
        position_scale,
        feature_dim,
        in_channels,
    };
    let guider = if network_count == 5 {
        Some(GuiderModel {
            encoder: iter.next().unwrap(),
            disc_head: iter.next().unwrap(),
            patch_size,
            feature_dim,
            in_channels,
        })
    } else {
        None
    };
    Ok((predictor, guider))
}
