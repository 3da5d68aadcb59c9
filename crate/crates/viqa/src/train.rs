//! Minimax training of the predictor against the human-perception guider:
//! the two decomposed losses, the alternating update loop, scene-grouped
//! k-fold splitting, and dataset manifest I/O.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    build_guider, build_predictor, EncoderConfig, GuiderGrads, GuiderModel, ModelError,
    PredictorGrads, PredictorModel,
};
use crate::nn::{adam_step, AdamState, NnError};
use crate::raster::{load_image, ImageBuffer, ImageError};
use crate::stats::{evaluate, EvalReport, FoldStats, StatsError};

/// Probabilities are clamped here before entering a logarithm.
pub const BCE_CLAMP: f64 = 1e-7;

const GUIDER_SEED_SALT: u64 = 0x9e3779b97f4a7c15;
const SHUFFLE_SEED_SALT: u64 = 0x6a09e667f3bcc908;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("inconsistent sample dimensions: {0}")]
    InconsistentDims(String),
    #[error("{scenes} distinct scenes cannot fill {k} folds")]
    TooFewScenes { scenes: usize, k: usize },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("numeric failure at epoch {epoch}, batch {batch}: {detail}")]
    Numeric {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One labelled training pair. Reference images are shared between the
/// distortions of a scene.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub dist_image: Arc<ImageBuffer>,
    pub ref_image: Arc<ImageBuffer>,
    /// Opinion score on the 0-100 scale.
    pub mos: f64,
    pub scene_id: String,
    pub codec: String,
    pub strength: f64,
}

/// Training hyperparameters. The defaults mirror the published setup:
/// batch 6, learning rate 2e-4, lambda 100, one guider step per predictor
/// step, 64 px patches.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
    pub d_steps_per_p_step: usize,
    /// Off reproduces the "without critic" configuration: the guider is
    /// never built and lambda is forced to zero.
    pub adversarial: bool,
    pub patch_size: usize,
    pub encoder: EncoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 6,
            lr: 2e-4,
            lambda: 100.0,
            epochs: 30,
            seed: 0,
            d_steps_per_p_step: 1,
            adversarial: true,
            patch_size: 64,
            encoder: EncoderConfig::default(),
        }
    }
}

/// Per-epoch loop telemetry; guider fields are absent without the critic,
/// validation fields absent without a validation set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disc_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_plcc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_srocc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_rmse: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    /// One JSON object per line, one line per epoch.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.epochs {
            out.push_str(&serde_json::to_string(record).expect("history serializes"));
            out.push('\n');
        }
        out
    }
}

/// Binary cross-entropy `J(p, target)` with clamped probability.
pub fn bce(p: f64, target: f64) -> f64 {
    let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

/// Predictor objective over a batch: squared score error plus the
/// lambda-weighted cross-entropy of fooling the guider. Returned guider
/// gradients are identically zero; the guider only relays a gradient into
/// the predicted score.
pub fn predictor_loss(
    predictor: &PredictorModel,
    guider: Option<&GuiderModel>,
    batch: &[&TrainSample],
    lambda: f64,
) -> Result<(f64, PredictorGrads, Option<GuiderGrads>), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    use rayon::prelude::*;
    let per_sample: Vec<(f64, PredictorGrads)> = batch
        .par_iter()
        .map(|sample| {
            let fwd = predictor.forward_full(&sample.dist_image)?;
            let predicted = fwd.breakdown.score;
            let err = predicted - sample.mos;
            let mut loss = err * err;
            let mut score_grad = 2.0 * err;
            if let (Some(g), true) = (guider, lambda > 0.0) {
                let enc_d = g.encode_image(&sample.dist_image)?;
                let enc_r = g.encode_image(&sample.ref_image)?;
                let trace =
                    g.forward_disc(&enc_d.mean_feature, &enc_r.mean_feature, predicted)?;
                let prob = trace.output().data()[0];
                loss += lambda * bce(prob, 1.0);
                // d lambda*J(p, 1) / dp = -lambda / p, then through the head
                // to its score input. Guider parameters receive nothing.
                let dp = -lambda / prob.max(BCE_CLAMP);
                let (_, input_grad) = g
                    .disc_head
                    .backward(&trace, &crate::nn::Tensor::scalar(dp))?;
                let (_, _, g_score) = g.split_disc_input_grad(&input_grad);
                score_grad += g_score;
            }
            let sample_grads = predictor.backward_score(&fwd, score_grad)?;
            Ok((loss, sample_grads))
        })
        .collect::<Result<_, TrainError>>()?;
    let mut total_loss = 0.0f64;
    let mut grads = PredictorGrads::zeros_like(predictor);
    for (loss, sample_grads) in &per_sample {
        total_loss += loss;
        grads.add_assign(sample_grads);
    }
    let scale = 1.0 / batch.len() as f64;
    grads.scale(scale);
    Ok((
        total_loss * scale,
        grads,
        guider.map(GuiderGrads::zeros_like),
    ))
}

/// Guider objective over a batch: classify the human score as human and the
/// predictor's score as synthetic. The predictor is treated as fixed; its
/// returned gradients are identically zero.
pub struct GuiderLossOutput {
    pub loss: f64,
    pub guider_grads: GuiderGrads,
    /// Always zero: the predictor is a constant in this objective.
    pub predictor_grads: PredictorGrads,
    /// Fraction of the 2N classifications the guider gets right.
    pub accuracy: f64,
}

pub fn guider_loss(
    predictor: &PredictorModel,
    guider: &GuiderModel,
    batch: &[&TrainSample],
) -> Result<GuiderLossOutput, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    use rayon::prelude::*;
    let per_sample: Vec<(f64, GuiderGrads, usize)> = batch
        .par_iter()
        .map(|sample| {
            let predicted = predictor.predict(&sample.dist_image)?.score;
            let enc_d = guider.encode_image(&sample.dist_image)?;
            let enc_r = guider.encode_image(&sample.ref_image)?;

            let trace_h =
                guider.forward_disc(&enc_d.mean_feature, &enc_r.mean_feature, sample.mos)?;
            let trace_p =
                guider.forward_disc(&enc_d.mean_feature, &enc_r.mean_feature, predicted)?;
            let p_h = trace_h.output().data()[0];
            let p_p = trace_p.output().data()[0];
            let loss = bce(p_h, 1.0) + bce(p_p, 0.0);
            let correct = usize::from(p_h > 0.5) + usize::from(p_p < 0.5);

            // dJ(p,1)/dp = -1/p ; dJ(p,0)/dp = 1/(1-p).
            let dp_h = -1.0 / p_h.max(BCE_CLAMP);
            let dp_p = 1.0 / (1.0 - p_p).max(BCE_CLAMP);
            let (head_h, input_h) = guider
                .disc_head
                .backward(&trace_h, &crate::nn::Tensor::scalar(dp_h))?;
            let (head_p, input_p) = guider
                .disc_head
                .backward(&trace_p, &crate::nn::Tensor::scalar(dp_p))?;
            let mut grads = GuiderGrads::zeros_like(guider);
            grads.disc_head.add_assign(&head_h);
            grads.disc_head.add_assign(&head_p);

            let (gd_h, gr_h, _) = guider.split_disc_input_grad(&input_h);
            let (gd_p, gr_p, _) = guider.split_disc_input_grad(&input_p);
            let mut gd = gd_h;
            for (a, b) in gd.data_mut().iter_mut().zip(gd_p.data()) {
                *a += b;
            }
            let mut gr = gr_h;
            for (a, b) in gr.data_mut().iter_mut().zip(gr_p.data()) {
                *a += b;
            }
            grads
                .encoder
                .add_assign(&guider.backward_encoder(&enc_d, &gd)?);
            grads
                .encoder
                .add_assign(&guider.backward_encoder(&enc_r, &gr)?);
            Ok((loss, grads, correct))
        })
        .collect::<Result<_, TrainError>>()?;
    let mut total_loss = 0.0f64;
    let mut grads = GuiderGrads::zeros_like(guider);
    let mut correct = 0usize;
    for (loss, sample_grads, hits) in &per_sample {
        total_loss += loss;
        grads.add_assign(sample_grads);
        correct += hits;
    }
    let scale = 1.0 / batch.len() as f64;
    grads.scale(scale);
    Ok(GuiderLossOutput {
        loss: total_loss * scale,
        guider_grads: grads,
        predictor_grads: PredictorGrads::zeros_like(predictor),
        accuracy: correct as f64 / (2 * batch.len()) as f64,
    })
}

struct PredictorOptimizer {
    encoder: AdamState,
    weight_head: AdamState,
    quality_head: AdamState,
}

impl PredictorOptimizer {
    fn new(model: &PredictorModel) -> Self {
        Self {
            encoder: AdamState::new(model.encoder.param_count()),
            weight_head: AdamState::new(model.weight_head.param_count()),
            quality_head: AdamState::new(model.quality_head.param_count()),
        }
    }

    fn step(
        &mut self,
        model: &mut PredictorModel,
        grads: &PredictorGrads,
        lr: f64,
    ) -> Result<(), NnError> {
        adam_step(&mut model.encoder, &grads.encoder, &mut self.encoder, lr)?;
        adam_step(
            &mut model.weight_head,
            &grads.weight_head,
            &mut self.weight_head,
            lr,
        )?;
        adam_step(
            &mut model.quality_head,
            &grads.quality_head,
            &mut self.quality_head,
            lr,
        )
    }
}

struct GuiderOptimizer {
    encoder: AdamState,
    disc_head: AdamState,
}

impl GuiderOptimizer {
    fn new(model: &GuiderModel) -> Self {
        Self {
            encoder: AdamState::new(model.encoder.param_count()),
            disc_head: AdamState::new(model.disc_head.param_count()),
        }
    }

    fn step(
        &mut self,
        model: &mut GuiderModel,
        grads: &GuiderGrads,
        lr: f64,
    ) -> Result<(), NnError> {
        adam_step(&mut model.encoder, &grads.encoder, &mut self.encoder, lr)?;
        adam_step(
            &mut model.disc_head,
            &grads.disc_head,
            &mut self.disc_head,
            lr,
        )
    }
}

/// Trains a predictor (and, when adversarial, a guider) on `dataset`.
/// Identical configuration and dataset reproduce bit-identical models.
pub fn train(
    dataset: &[TrainSample],
    validation: Option<&[TrainSample]>,
    cfg: &TrainConfig,
) -> Result<(PredictorModel, Option<GuiderModel>, TrainHistory), TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let dims = {
        let first = &dataset[0].dist_image;
        (first.width(), first.height(), first.channels())
    };
    for s in dataset {
        let d = (
            s.dist_image.width(),
            s.dist_image.height(),
            s.dist_image.channels(),
        );
        if d != dims || !s.ref_image.same_shape(&s.dist_image) {
            return Err(TrainError::InconsistentDims(format!(
                "scene {}: {d:?} vs {dims:?}",
                s.scene_id
            )));
        }
    }

    let mut model_rng = Xoshiro256PlusPlus::seed_from_u64(cfg.seed);
    let mut predictor = build_predictor(
        &cfg.encoder,
        dims.2,
        cfg.patch_size,
        (dims.0, dims.1),
        &mut model_rng,
    )?;
    let mut guider = if cfg.adversarial {
        let mut guider_rng = Xoshiro256PlusPlus::seed_from_u64(cfg.seed ^ GUIDER_SEED_SALT);
        Some(build_guider(
            &cfg.encoder,
            dims.2,
            cfg.patch_size,
            &mut guider_rng,
        )?)
    } else {
        None
    };
    let lambda = if cfg.adversarial { cfg.lambda } else { 0.0 };

    let mut p_opt = PredictorOptimizer::new(&predictor);
    let mut g_opt = guider.as_ref().map(GuiderOptimizer::new);
    let mut shuffle_rng = Xoshiro256PlusPlus::seed_from_u64(cfg.seed ^ SHUFFLE_SEED_SALT);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = TrainHistory::default();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut p_losses = Vec::new();
        let mut d_losses = Vec::new();
        let mut d_accs = Vec::new();
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&TrainSample> = chunk.iter().map(|&i| &dataset[i]).collect();
            if let (Some(g), Some(opt)) = (guider.as_mut(), g_opt.as_mut()) {
                for _ in 0..cfg.d_steps_per_p_step.max(1) {
                    let out = guider_loss(&predictor, g, &batch)?;
                    if !out.loss.is_finite() || !out.guider_grads.all_finite() {
                        return Err(TrainError::Numeric {
                            epoch,
                            batch: batch_idx,
                            detail: format!("guider loss {}", out.loss),
                        });
                    }
                    opt.step(g, &out.guider_grads, cfg.lr)?;
                    d_losses.push(out.loss);
                    d_accs.push(out.accuracy);
                }
            }
            let (loss, grads, _) = predictor_loss(&predictor, guider.as_ref(), &batch, lambda)?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(TrainError::Numeric {
                    epoch,
                    batch: batch_idx,
                    detail: format!("predictor loss {loss}"),
                });
            }
            p_opt.step(&mut predictor, &grads, cfg.lr)?;
            p_losses.push(loss);
        }

        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (val_plcc, val_srocc, val_rmse) = match validation {
            Some(val) if !val.is_empty() => match evaluate(&predictor, val) {
                Ok((p, s, r)) => (Some(p), Some(s), Some(r)),
                Err(_) => (None, None, None),
            },
            _ => (None, None, None),
        };
        history.epochs.push(EpochRecord {
            epoch,
            loss_p: mean(&p_losses),
            loss_d: (!d_losses.is_empty()).then(|| mean(&d_losses)),
            disc_accuracy: (!d_accs.is_empty()).then(|| mean(&d_accs)),
            val_plcc,
            val_srocc,
            val_rmse,
        });
    }
    Ok((predictor, guider, history))
}

/// Scene-grouped k-fold split: scenes (never samples) are partitioned into
/// `k` folds of near-equal scene counts. Returns per-fold (train, test)
/// sample indices.
pub fn kfold_split(
    samples: &[TrainSample],
    k: usize,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>, TrainError> {
    if k < 2 {
        return Err(TrainError::TooFewScenes {
            scenes: 0,
            k,
        });
    }
    let mut scenes: Vec<&str> = {
        let set: std::collections::BTreeSet<&str> =
            samples.iter().map(|s| s.scene_id.as_str()).collect();
        set.into_iter().collect()
    };
    if scenes.len() < k {
        return Err(TrainError::TooFewScenes {
            scenes: scenes.len(),
            k,
        });
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    scenes.shuffle(&mut rng);
    let mut fold_of_scene: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, scene) in scenes.iter().enumerate() {
        fold_of_scene.insert(scene, i % k);
    }
    let mut folds = vec![(Vec::new(), Vec::new()); k];
    for (idx, sample) in samples.iter().enumerate() {
        let fold = fold_of_scene[sample.scene_id.as_str()];
        for (f, (train_idx, test_idx)) in folds.iter_mut().enumerate() {
            if f == fold {
                test_idx.push(idx);
            } else {
                train_idx.push(idx);
            }
        }
    }
    Ok(folds)
}

/// Cross-validated evaluation: trains one model per fold and scores it on
/// the held-out fold. Folds run in parallel; each is independently seeded
/// by the shared config, so the result does not depend on scheduling.
pub fn kfold_evaluate(
    samples: &[TrainSample],
    cfg: &TrainConfig,
    k: usize,
    pooled: bool,
) -> Result<EvalReport, TrainError> {
    use rayon::prelude::*;
    let folds = kfold_split(samples, k, cfg.seed)?;
    let outcomes: Vec<(FoldStats, Vec<f64>, Vec<f64>)> = folds
        .par_iter()
        .map(|(train_idx, test_idx)| {
            let train_set: Vec<TrainSample> =
                train_idx.iter().map(|&i| samples[i].clone()).collect();
            let test_set: Vec<TrainSample> =
                test_idx.iter().map(|&i| samples[i].clone()).collect();
            let (model, _, _) = train(&train_set, None, cfg)?;
            let mut predictions = Vec::with_capacity(test_set.len());
            let mut targets = Vec::with_capacity(test_set.len());
            for s in &test_set {
                predictions.push(model.predict(&s.dist_image)?.score);
                targets.push(s.mos);
            }
            let stats = FoldStats {
                plcc: crate::stats::plcc(&predictions, &targets)?,
                srocc: crate::stats::srocc(&predictions, &targets)?,
                rmse: crate::stats::rmse(&predictions, &targets)?,
                n: test_set.len(),
            };
            Ok((stats, predictions, targets))
        })
        .collect::<Result<_, TrainError>>()?;
    let fold_stats: Vec<FoldStats> = outcomes.iter().map(|(f, _, _)| f.clone()).collect();
    if pooled {
        let mut predictions = Vec::new();
        let mut targets = Vec::new();
        for (_, p, t) in &outcomes {
            predictions.extend_from_slice(p);
            targets.extend_from_slice(t);
        }
        Ok(EvalReport::from_pooled(fold_stats, &predictions, &targets)?)
    } else {
        Ok(EvalReport::from_folds(fold_stats))
    }
}

/// Reads a dataset manifest (`ref_path,dist_path,mos,scene_id,codec,strength`),
/// resolving relative paths against the manifest's directory. Images shared
/// between rows are loaded once.
pub fn load_manifest(path: &Path) -> Result<Vec<TrainSample>, TrainError> {
    let base = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| TrainError::Manifest(e.to_string()))?;
    {
        let headers = reader
            .headers()
            .map_err(|e| TrainError::Manifest(e.to_string()))?;
        let expected = ["ref_path", "dist_path", "mos", "scene_id", "codec", "strength"];
        let got: Vec<&str> = headers.iter().collect();
        if got != expected {
            return Err(TrainError::Manifest(format!(
                "header {got:?}, expected {expected:?}"
            )));
        }
    }
    let mut cache: BTreeMap<PathBuf, Arc<ImageBuffer>> = BTreeMap::new();
    let mut load_cached = |rel: &str| -> Result<Arc<ImageBuffer>, TrainError> {
        let full = if Path::new(rel).is_absolute() {
            PathBuf::from(rel)
        } else {
            base.join(rel)
        };
        if let Some(img) = cache.get(&full) {
            return Ok(img.clone());
        }
        let img = Arc::new(load_image(&full)?);
        cache.insert(full, img.clone());
        Ok(img)
    };
    let mut samples = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| TrainError::Manifest(e.to_string()))?;
        if record.len() != 6 {
            return Err(TrainError::Manifest(format!(
                "row {line}: {} fields, expected 6",
                record.len()
            )));
        }
        let mos: f64 = record[2]
            .parse()
            .map_err(|_| TrainError::Manifest(format!("row {line}: bad mos '{}'", &record[2])))?;
        if !(0.0..=100.0).contains(&mos) {
            return Err(TrainError::Manifest(format!(
                "row {line}: mos {mos} outside 0-100"
            )));
        }
        let strength: f64 = record[5].parse().map_err(|_| {
            TrainError::Manifest(format!("row {line}: bad strength '{}'", &record[5]))
        })?;
        samples.push(TrainSample {
            ref_image: load_cached(&record[0])?,
            dist_image: load_cached(&record[1])?,
            mos,
            scene_id: record[3].to_string(),
            codec: record[4].to_string(),
            strength,
        });
    }
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_guider;
    use crate::nn::Layer;

    fn micro_config() -> TrainConfig {
        TrainConfig {
            batch_size: 2,
            epochs: 2,
            seed: 42,
            adversarial: false,
            patch_size: 8,
            encoder: EncoderConfig::tiny(4),
            ..Default::default()
        }
    }

    fn micro_samples(n: usize, scenes: usize) -> Vec<TrainSample> {
        (0..n)
            .map(|i| {
                let reference = Arc::new(crate::distortion::synth_scene(i as u64, 16, 8, 1));
                let distorted = Arc::new(crate::distortion::gaussian_blur(
                    &reference,
                    0.3 + i as f64 * 0.2,
                ));
                TrainSample {
                    dist_image: distorted,
                    ref_image: reference,
                    mos: 90.0 - 7.0 * i as f64,
                    scene_id: format!("scene{}", i % scenes),
                    codec: "blur".into(),
                    strength: i as f64,
                }
            })
            .collect()
    }

    #[test]
    fn bce_hand_values() {
        assert!((bce(0.5, 1.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce(0.5, 0.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(bce(0.0, 1.0).is_finite());
        assert!(bce(1.0, 0.0).is_finite());
    }

    #[test]
    fn bce_symmetric_sum_is_bounded_below() {
        for i in 1..200 {
            let p = i as f64 / 200.0;
            let sum = bce(p, 1.0) + bce(p, 0.0);
            assert!(sum >= 2.0 * std::f64::consts::LN_2 - 1e-12, "p={p}: {sum}");
        }
        let at_half = bce(0.5, 1.0) + bce(0.5, 0.0);
        assert!((at_half - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn predictor_loss_is_mean_squared_error_without_critic() {
        let samples = micro_samples(3, 3);
        let cfg = micro_config();
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(cfg.seed);
        let predictor = build_predictor(&cfg.encoder, 1, 8, (16, 8), &mut rng).unwrap();

        // Offset targets by exactly 10 from the model's own predictions.
        let shifted: Vec<TrainSample> = samples
            .iter()
            .map(|s| {
                let predicted = predictor.predict(&s.dist_image).unwrap().score;
                TrainSample {
                    mos: predicted - 10.0,
                    ..s.clone()
                }
            })
            .collect();
        let batch: Vec<&TrainSample> = shifted.iter().collect();
        let (loss, _, none_grads) = predictor_loss(&predictor, None, &batch, 0.0).unwrap();
        assert!((loss - 100.0).abs() < 1e-9, "loss {loss}");
        assert!(none_grads.is_none());

        let exact: Vec<TrainSample> = samples
            .iter()
            .map(|s| {
                let predicted = predictor.predict(&s.dist_image).unwrap().score;
                TrainSample {
                    mos: predicted,
                    ..s.clone()
                }
            })
            .collect();
        let batch: Vec<&TrainSample> = exact.iter().collect();
        let (loss, grads, _) = predictor_loss(&predictor, None, &batch, 0.0).unwrap();
        assert!(loss.abs() < 1e-18, "perfect predictor loss {loss}");
        assert!(grads.max_abs() < 1e-9);
    }

    fn zero_final_dense(net: &mut crate::nn::Network) {
        if let Some(Layer::Dense { weight, bias }) = net
            .layers
            .iter_mut()
            .rev()
            .find(|l| matches!(l, Layer::Dense { .. }))
        {
            for v in weight.data_mut() {
                *v = 0.0;
            }
            for v in bias.data_mut() {
                *v = 0.0;
            }
        }
    }

    #[test]
    fn pinned_guider_contributes_lambda_ln2() {
        let samples = micro_samples(2, 2);
        let cfg = micro_config();
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(cfg.seed);
        let predictor = build_predictor(&cfg.encoder, 1, 8, (16, 8), &mut rng).unwrap();
        let mut guider = build_guider(&cfg.encoder, 1, 8, &mut rng).unwrap();
        zero_final_dense(&mut guider.disc_head);

        let batch: Vec<&TrainSample> = samples.iter().collect();
        let (base, _, _) = predictor_loss(&predictor, None, &batch, 0.0).unwrap();
        let (with_critic, _, g_grads) =
            predictor_loss(&predictor, Some(&guider), &batch, 100.0).unwrap();
        let adversarial_term = with_critic - base;
        assert!(
            (adversarial_term - 100.0 * std::f64::consts::LN_2).abs() < 1e-9,
            "term {adversarial_term}"
        );
        assert_eq!(g_grads.unwrap().max_abs(), 0.0);
    }

    #[test]
    fn pinned_guider_loss_is_two_ln2() {
        let samples = micro_samples(2, 2);
        let cfg = micro_config();
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(7);
        let predictor = build_predictor(&cfg.encoder, 1, 8, (16, 8), &mut rng).unwrap();
        let mut guider = build_guider(&cfg.encoder, 1, 8, &mut rng).unwrap();
        zero_final_dense(&mut guider.disc_head);
        let batch: Vec<&TrainSample> = samples.iter().collect();
        let out = guider_loss(&predictor, &guider, &batch).unwrap();
        assert!(
            (out.loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-12,
            "loss {}",
            out.loss
        );
        assert_eq!(out.predictor_grads.max_abs(), 0.0);
        // Head sees a constant-zero path, so only its final layer is inert;
        // encoder gradients flow from the feature blocks.
        assert!(out.guider_grads.all_finite());
    }

    #[test]
    fn training_is_deterministic() {
        let samples = micro_samples(6, 3);
        let cfg = TrainConfig {
            epochs: 2,
            adversarial: true,
            lambda: 10.0,
            ..micro_config()
        };
        let (m1, g1, h1) = train(&samples, None, &cfg).unwrap();
        let (m2, g2, h2) = train(&samples, None, &cfg).unwrap();
        assert_eq!(m1.encoder.params_to_vec(), m2.encoder.params_to_vec());
        assert_eq!(
            m1.quality_head.params_to_vec(),
            m2.quality_head.params_to_vec()
        );
        assert_eq!(
            g1.unwrap().disc_head.params_to_vec(),
            g2.unwrap().disc_head.params_to_vec()
        );
        assert_eq!(h1.to_jsonl(), h2.to_jsonl());
    }

    #[test]
    fn lambda_zero_matches_no_critic_trajectory() {
        let samples = micro_samples(6, 3);
        let base_cfg = micro_config();
        let off = train(&samples, None, &base_cfg).unwrap();
        let on_zero = train(
            &samples,
            None,
            &TrainConfig {
                adversarial: true,
                lambda: 0.0,
                ..base_cfg
            },
        )
        .unwrap();
        assert_eq!(
            off.0.encoder.params_to_vec(),
            on_zero.0.encoder.params_to_vec()
        );
        assert_eq!(
            off.0.quality_head.params_to_vec(),
            on_zero.0.quality_head.params_to_vec()
        );
        assert!(on_zero.1.is_some(), "guider still trains");
    }

    #[test]
    fn no_critic_history_has_no_guider_entries() {
        let samples = micro_samples(4, 2);
        let (_, guider, history) = train(&samples, None, &micro_config()).unwrap();
        assert!(guider.is_none());
        for line in history.to_jsonl().lines() {
            assert!(!line.contains("loss_d"));
            assert!(!line.contains("disc_accuracy"));
        }
    }

    #[test]
    fn kfold_partitions_scenes() {
        let samples: Vec<TrainSample> = (0..60)
            .flat_map(|scene| {
                (0..2).map(move |j| {
                    let img = Arc::new(ImageBuffer::zeros(8, 8, 1));
                    TrainSample {
                        dist_image: img.clone(),
                        ref_image: img,
                        mos: 50.0,
                        scene_id: format!("s{scene:02}"),
                        codec: "x".into(),
                        strength: j as f64,
                    }
                })
            })
            .collect();
        let folds = kfold_split(&samples, 5, 3).unwrap();
        assert_eq!(folds.len(), 5);
        let mut seen = std::collections::BTreeSet::new();
        for (train_idx, test_idx) in &folds {
            let test_scenes: std::collections::BTreeSet<&str> = test_idx
                .iter()
                .map(|&i| samples[i].scene_id.as_str())
                .collect();
            assert_eq!(test_scenes.len(), 12, "each fold holds 12 scenes");
            let train_scenes: std::collections::BTreeSet<&str> = train_idx
                .iter()
                .map(|&i| samples[i].scene_id.as_str())
                .collect();
            assert!(test_scenes.is_disjoint(&train_scenes));
            for s in test_scenes {
                assert!(seen.insert(s), "scene {s} in two test folds");
            }
            assert_eq!(train_idx.len() + test_idx.len(), samples.len());
        }
        assert_eq!(seen.len(), 60);
    }

    #[test]
    fn kfold_rejects_too_few_scenes() {
        let samples = micro_samples(4, 2);
        assert!(matches!(
            kfold_split(&samples, 5, 0),
            Err(TrainError::TooFewScenes { scenes: 2, k: 5 })
        ));
    }

    #[test]
    fn manifest_round_trip_shares_references() {
        use crate::distortion::{build_dataset, DistortionKind, DistortionSpec};
        let dir = tempfile::tempdir().unwrap();
        let refs_dir = dir.path().join("refs");
        std::fs::create_dir_all(&refs_dir).unwrap();
        let mut refs = Vec::new();
        for i in 0..2 {
            let img = crate::distortion::synth_scene(i, 192, 192, 1);
            let p = refs_dir.join(format!("sc{i}.png"));
            crate::raster::save_image(&img, &p).unwrap();
            refs.push(p);
        }
        let specs = vec![
            DistortionSpec {
                kind: DistortionKind::Noise,
                strength: 0.05,
                seed: 4,
            },
            DistortionSpec {
                kind: DistortionKind::Noise,
                strength: 0.1,
                seed: 4,
            },
        ];
        let manifest = build_dataset(&refs, &specs, &dir.path().join("data")).unwrap();
        let samples = load_manifest(&manifest).unwrap();
        assert_eq!(samples.len(), 4);
        assert!(Arc::ptr_eq(&samples[0].ref_image, &samples[1].ref_image));
        assert!(!Arc::ptr_eq(&samples[0].ref_image, &samples[2].ref_image));
        assert!((0.0..=100.0).contains(&samples[0].mos));
        assert_eq!(samples[0].codec, "noise");
    }

    #[test]
    fn manifest_rejects_bad_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,b,c\n1,2,3\n").unwrap();
        assert!(matches!(
            load_manifest(&path),
            Err(TrainError::Manifest(_))
        ));
    }
}
