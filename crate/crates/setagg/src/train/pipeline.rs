//! The end-to-end model and its three-stage trainer: per-frame embedder,
//! aggregation block, mapping unit, and a linear softmax classifier, trained
//! by (1) frame-level classification of the embedder, (2) auto-encoder
//! pretraining of the mapping with aggregation fixed at identity/zero, and
//! (3) end-to-end fine-tuning.

use super::io::{read_json_file, write_json_file};
use super::loss::softmax_cross_entropy;
use super::optimizer::{poly_lr, sgd_momentum_step, OptimizerConfig};
use super::Dataset;
use crate::aggregation::{self, AggregationOutput, AggregationParams};
use crate::error::{Error, Result};
use crate::frames::{embed_frames, embedder_backward, EmbedCache, FrameEmbedder};
use crate::linalg::Matrix;
use crate::mapping::{
    accumulate_grads, apply_layer_grads, flatten_mats, pretrain_autoencoder, Activation,
    ForwardCache, LayerGrads, Mlp, PretrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Version stamp of the model file layout.
pub const FORMAT_VERSION: u32 = 1;

/// Everything needed to map a raw video to class logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u32,
    pub embedder: FrameEmbedder,
    pub aggregation: AggregationParams,
    /// The mapping unit (the pretrained encoder).
    pub mapping: Mlp,
    /// `K x m` linear classifier over the mapping output.
    pub classifier_weights: Matrix,
    pub classifier_bias: Vec<f64>,
    /// Class names in sorted order; row i of the classifier scores
    /// `labels[i]`.
    pub labels: Vec<String>,
    /// When set, that label is the catch-all class for subjects outside the
    /// gallery; predicting it means rejection.
    pub unknown_label: Option<String>,
}

impl ModelBundle {
    /// Fresh bundle for training: near-identity aggregation, He-initialized
    /// mapping of the given sizes (rectifier hidden layers, identity final),
    /// zero classifier.
    pub fn init(
        embedder: FrameEmbedder,
        frames_per_video: usize,
        outputs: usize,
        groups: usize,
        mapping_sizes: &[usize],
        labels: Vec<String>,
        unknown_label: Option<String>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let d = embedder.out_dim();
        let aggregation = AggregationParams::init_near_identity(
            d,
            frames_per_video,
            outputs,
            groups,
            0.01,
            rng,
        )?;
        if mapping_sizes.first() != Some(&(groups * d * d)) {
            return Err(Error::ShapeMismatch {
                context: "ModelBundle::init",
                expected: format!("mapping input size {}", groups * d * d),
                found: format!("{:?}", mapping_sizes.first()),
            });
        }
        let acts: Vec<Activation> = (0..mapping_sizes.len() - 1)
            .map(|i| {
                if i + 2 == mapping_sizes.len() {
                    Activation::Identity
                } else {
                    Activation::Relu
                }
            })
            .collect();
        let mapping = Mlp::he_init(mapping_sizes, &acts, rng)?;
        let bundle = Self {
            format_version: FORMAT_VERSION,
            classifier_weights: Matrix::zeros(labels.len(), mapping.out_dim()),
            classifier_bias: vec![0.0; labels.len()],
            embedder,
            aggregation,
            mapping,
            labels,
            unknown_label,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    /// Checks the dimension chain end to end.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported model format version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        self.aggregation.validate()?;
        let d = self.embedder.out_dim();
        if self.aggregation.dim() != d {
            return Err(Error::ShapeMismatch {
                context: "ModelBundle::validate",
                expected: format!("aggregation over dim {d}"),
                found: format!("{}", self.aggregation.dim()),
            });
        }
        let flat = self.aggregation.groups * d * d;
        if self.mapping.in_dim() != flat {
            return Err(Error::ShapeMismatch {
                context: "ModelBundle::validate",
                expected: format!("mapping input {flat}"),
                found: format!("{}", self.mapping.in_dim()),
            });
        }
        if self.classifier_weights.cols() != self.mapping.out_dim()
            || self.classifier_weights.rows() != self.labels.len()
            || self.classifier_bias.len() != self.labels.len()
        {
            return Err(Error::ShapeMismatch {
                context: "ModelBundle::validate",
                expected: format!(
                    "{}x{} classifier",
                    self.labels.len(),
                    self.mapping.out_dim()
                ),
                found: format!(
                    "{}x{} with bias {}",
                    self.classifier_weights.rows(),
                    self.classifier_weights.cols(),
                    self.classifier_bias.len()
                ),
            });
        }
        if self.labels.is_empty() {
            return Err(Error::EmptyInput("ModelBundle.labels"));
        }
        let mut sorted = self.labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted != self.labels {
            return Err(Error::InvalidConfig(
                "model labels must be unique and sorted".into(),
            ));
        }
        if let Some(u) = &self.unknown_label {
            if !self.labels.contains(u) {
                return Err(Error::InvalidConfig(format!(
                    "unknown label {u:?} is not among the model labels"
                )));
            }
        }
        Ok(())
    }

    /// Frame count every video is resampled to.
    pub fn frames_per_video(&self) -> usize {
        self.aggregation.frame_count()
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }

    /// Index a training video's label resolves to: its own class when
    /// enrolled, else the catch-all class when one is configured.
    fn training_index(&self, label: &str) -> Result<usize> {
        if let Some(i) = self.class_index(label) {
            return Ok(i);
        }
        if let Some(u) = &self.unknown_label {
            return Ok(self.class_index(u).expect("validated membership"));
        }
        Err(Error::InvalidConfig(format!(
            "video label {label:?} is not among the model labels and no unknown class is configured"
        )))
    }

    /// Full forward pass from raw frames to logits.
    pub fn forward_video(&self, frames: &[Vec<f64>]) -> Result<(Vec<f64>, VideoCache)> {
        let resampled = resample_raw(frames, self.frames_per_video())?;
        let (features, embed) = embed_frames(&resampled, &self.embedder)?;
        let agg = aggregation::forward(&features, &self.aggregation)?;
        let flat = flatten_mats(&agg.pooled);
        let (code, mapping) = self.mapping.forward(&flat)?;
        let mut logits = self.classifier_weights.matvec(&code)?;
        for (l, b) in logits.iter_mut().zip(&self.classifier_bias) {
            *l += b;
        }
        Ok((
            logits,
            VideoCache {
                resampled,
                embed,
                agg,
                mapping,
                code,
            },
        ))
    }

    /// The fixed-length representation of a video: the pooled matrices. The
    /// shape depends only on model configuration, never on the frame count.
    pub fn representation(&self, frames: &[Vec<f64>]) -> Result<Vec<Matrix>> {
        let resampled = resample_raw(frames, self.frames_per_video())?;
        let (features, _) = embed_frames(&resampled, &self.embedder)?;
        Ok(aggregation::forward(&features, &self.aggregation)?.pooled)
    }

    /// Gradients of a scalar loss with respect to every trainable tensor,
    /// given the gradient at the logits.
    pub fn backward_video(&self, d_logits: &[f64], cache: &VideoCache) -> Result<VideoGrads> {
        if d_logits.len() != self.labels.len() {
            return Err(Error::ShapeMismatch {
                context: "ModelBundle::backward_video",
                expected: format!("{} logit gradients", self.labels.len()),
                found: format!("{}", d_logits.len()),
            });
        }
        let m = self.mapping.out_dim();
        let mut cls_w = Matrix::zeros(self.labels.len(), m);
        for r in 0..self.labels.len() {
            for c in 0..m {
                cls_w[(r, c)] = d_logits[r] * cache.code[c];
            }
        }
        let d_code = self.classifier_weights.transpose().matvec(d_logits)?;
        let (d_flat, mapping) = self.mapping.backward(&d_code, &cache.mapping)?;

        let d = self.aggregation.dim();
        let t = self.aggregation.groups;
        let mut out_grads = Vec::with_capacity(t);
        for g in 0..t {
            out_grads.push(Matrix::new(d, d, d_flat[g * d * d..(g + 1) * d * d].to_vec())?);
        }
        let agg = aggregation::backward(&out_grads, &cache.agg, &self.aggregation)?;
        let embedder = embedder_backward(&agg.input, &cache.embed, &self.embedder)?;
        Ok(VideoGrads {
            classifier_weights: cls_w,
            classifier_bias: d_logits.to_vec(),
            mapping,
            agg_mix: agg.mix,
            agg_bias: agg.bias,
            embedder,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        write_json_file(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bundle: Self = read_json_file(path)?;
        bundle.validate()?;
        Ok(bundle)
    }
}

/// Forward-pass intermediates for one video.
#[derive(Clone, Debug)]
pub struct VideoCache {
    pub resampled: Vec<Vec<f64>>,
    pub embed: EmbedCache,
    pub agg: AggregationOutput,
    pub mapping: ForwardCache,
    pub code: Vec<f64>,
}

/// Gradients for every trainable tensor of the bundle.
#[derive(Clone, Debug)]
pub struct VideoGrads {
    pub classifier_weights: Matrix,
    pub classifier_bias: Vec<f64>,
    pub mapping: Vec<LayerGrads>,
    pub agg_mix: Matrix,
    pub agg_bias: Matrix,
    /// Empty for a passthrough embedder.
    pub embedder: Vec<LayerGrads>,
}

impl VideoGrads {
    fn add(&mut self, other: &VideoGrads) -> Result<()> {
        self.classifier_weights = self.classifier_weights.add(&other.classifier_weights)?;
        for (a, b) in self.classifier_bias.iter_mut().zip(&other.classifier_bias) {
            *a += b;
        }
        accumulate_grads(&mut self.mapping, &other.mapping)?;
        self.agg_mix = self.agg_mix.add(&other.agg_mix)?;
        self.agg_bias = self.agg_bias.add(&other.agg_bias)?;
        accumulate_grads(&mut self.embedder, &other.embedder)?;
        Ok(())
    }
}

/// Resamples raw frames to exactly `target` frames: uniform subsampling when
/// longer, cyclic repetition when shorter.
pub fn resample_raw(frames: &[Vec<f64>], target: usize) -> Result<Vec<Vec<f64>>> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("resample_raw"));
    }
    Ok(aggregation::resample_indices(frames.len(), target)
        .into_iter()
        .map(|i| frames[i].clone())
        .collect())
}

/// Optimizer configuration for each stage. A stage with `max_iter == 0` is
/// skipped entirely.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSchedule {
    /// Frame-level embedder training; a no-op for passthrough embedders.
    pub stage1: OptimizerConfig,
    /// Auto-encoder pretraining of the mapping unit.
    pub stage2: OptimizerConfig,
    /// End-to-end fine-tuning.
    pub stage3: OptimizerConfig,
    pub pretrain: PretrainConfig,
}

impl Default for StageSchedule {
    fn default() -> Self {
        // desk-scale budgets; production-scale counts belong in run configs
        Self {
            stage1: OptimizerConfig { max_iter: 0, ..Default::default() },
            stage2: OptimizerConfig { max_iter: 2000, ..Default::default() },
            stage3: OptimizerConfig { max_iter: 5000, ..Default::default() },
            pretrain: PretrainConfig::default(),
        }
    }
}

/// Per-stage loss curves.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub stage1: Vec<f64>,
    pub stage2: Vec<f64>,
    pub stage3: Vec<f64>,
}

/// Runs the three-stage protocol and returns the trained bundle plus the
/// loss recorded at every iteration of every stage.
pub fn train_three_stage(
    train: &Dataset,
    mut bundle: ModelBundle,
    schedule: &StageSchedule,
) -> Result<(ModelBundle, TrainHistory)> {
    train.validate()?;
    bundle.validate()?;
    for v in &train.videos {
        bundle.training_index(&v.label)?;
        if v.dim() != bundle.embedder.in_dim() {
            return Err(Error::ShapeMismatch {
                context: "train_three_stage",
                expected: format!("raw frames of dim {}", bundle.embedder.in_dim()),
                found: format!("{} in video labeled {:?}", v.dim(), v.label),
            });
        }
    }
    let mut history = TrainHistory::default();

    if schedule.stage1.max_iter > 0 && bundle.embedder.is_trainable() {
        history.stage1 = stage1_embedder(train, &mut bundle, &schedule.stage1)?;
    }
    if schedule.stage2.max_iter > 0 {
        history.stage2 = stage2_pretrain(train, &mut bundle, schedule)?;
    }
    if schedule.stage3.max_iter > 0 {
        history.stage3 = stage3_finetune(train, &mut bundle, &schedule.stage3)?;
    }
    Ok((bundle, history))
}

/// Fraction of videos whose top logit matches their (training-resolved)
/// label.
pub fn training_accuracy(bundle: &ModelBundle, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("training_accuracy"));
    }
    let mut correct = 0usize;
    for v in &dataset.videos {
        let want = bundle.training_index(&v.label)?;
        let (logits, _) = bundle.forward_video(&v.frames)?;
        let top = argmax(&logits);
        if top == want {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Stage 1: train the embedder with a throwaway per-frame softmax head.
fn stage1_embedder(
    train: &Dataset,
    bundle: &mut ModelBundle,
    opt: &OptimizerConfig,
) -> Result<Vec<f64>> {
    opt.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opt.seed);
    let k = bundle.labels.len();
    let d = bundle.embedder.out_dim();
    let mut head_w = Matrix::zeros(k, d);
    let mut head_b = vec![0.0; k];
    let mut head_vel_w = vec![0.0; k * d];
    let mut head_vel_b = vec![0.0; k];
    let net_shapes: Vec<usize> = bundle
        .embedder
        .network()
        .expect("stage 1 requires a trainable embedder")
        .param_shapes();
    let mut net_vel: Vec<Vec<f64>> = net_shapes.iter().map(|&n| vec![0.0; n]).collect();

    let mut losses = Vec::with_capacity(opt.max_iter);
    for iter in 0..opt.max_iter {
        let mut loss_sum = 0.0;
        let mut frame_count = 0usize;
        let mut net_grads: Vec<LayerGrads> = Vec::new();
        let mut gw = Matrix::zeros(k, d);
        let mut gb = vec![0.0; k];
        // gather the batch first so the frame count (and hence the mean
        // normalization) is known before backprop
        let picks: Vec<usize> = (0..opt.batch_videos)
            .map(|_| rng.gen_range(0..train.len()))
            .collect();
        let mut batch: Vec<(usize, Vec<Vec<f64>>)> = Vec::with_capacity(picks.len());
        for &vi in &picks {
            let video = &train.videos[vi];
            let label = bundle.training_index(&video.label)?;
            let resampled = resample_raw(&video.frames, opt.frames_per_video)?;
            frame_count += resampled.len();
            batch.push((label, resampled));
        }
        let scale = 1.0 / frame_count as f64;
        for (label, resampled) in &batch {
            let net = bundle.embedder.network().expect("trainable");
            let (features, cache) = embed_frames(resampled, &bundle.embedder)?;
            let mut feature_grads = Matrix::zeros(d, resampled.len());
            for j in 0..resampled.len() {
                let e = features.frame(j);
                let mut logits = head_w.matvec(&e)?;
                for (l, b) in logits.iter_mut().zip(&head_b) {
                    *l += b;
                }
                let (loss, mut d_logits) = softmax_cross_entropy(&logits, *label)?;
                loss_sum += loss * scale;
                for v in &mut d_logits {
                    *v *= scale;
                }
                for r in 0..k {
                    for c in 0..d {
                        gw[(r, c)] += d_logits[r] * e[c];
                    }
                    gb[r] += d_logits[r];
                }
                let ge = head_w.transpose().matvec(&d_logits)?;
                for i in 0..d {
                    feature_grads[(i, j)] = ge[i];
                }
            }
            let g = embedder_backward(&feature_grads, &cache, &bundle.embedder)?;
            accumulate_grads(&mut net_grads, &g)?;
            let _ = net;
        }
        if !loss_sum.is_finite() {
            return Err(Error::Training {
                stage: 1,
                iteration: iter,
                reason: "loss diverged to non-finite".into(),
            });
        }
        losses.push(loss_sum);
        let lr = poly_lr(iter, opt)?;
        sgd_momentum_step(head_w.data_mut(), gw.data(), &mut head_vel_w, lr, opt)?;
        sgd_momentum_step(&mut head_b, &gb, &mut head_vel_b, lr, opt)?;
        let net = bundle.embedder.network_mut().expect("trainable");
        apply_layer_grads(net, &net_grads, &mut net_vel, lr, opt)?;
    }
    Ok(losses)
}

/// Stage 2: auto-encoder pretraining of the mapping on aggregation outputs
/// computed with the mixing fixed at (rectangular) identity and zero bias.
fn stage2_pretrain(
    train: &Dataset,
    bundle: &mut ModelBundle,
    schedule: &StageSchedule,
) -> Result<Vec<f64>> {
    let opt = &schedule.stage2;
    opt.validate()?;
    let d = bundle.embedder.out_dim();
    let n = bundle.frames_per_video();
    let q = bundle.aggregation.output_count();
    let t = bundle.aggregation.groups;
    let mut fixed_mix = Matrix::zeros(n, q);
    for i in 0..n.min(q) {
        fixed_mix[(i, i)] = 1.0;
    }
    let fixed = AggregationParams::new(fixed_mix, Matrix::zeros(d, q), t)?;

    let mut samples = Vec::with_capacity(train.len());
    for video in &train.videos {
        let resampled = resample_raw(&video.frames, n)?;
        let (features, _) = embed_frames(&resampled, &bundle.embedder)?;
        let out = aggregation::forward(&features, &fixed)?;
        samples.push(flatten_mats(&out.pooled));
    }

    let sizes: Vec<usize> = std::iter::once(bundle.mapping.in_dim())
        .chain(bundle.mapping.layers().iter().map(|l| l.out_dim()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opt.seed);
    let pre = pretrain_autoencoder(&samples, &sizes, &schedule.pretrain, opt, &mut rng)?;
    bundle.mapping = pre.encoder;
    Ok(pre.loss_history)
}

/// Stage 3: end-to-end fine-tuning with minibatch softmax cross-entropy.
fn stage3_finetune(
    train: &Dataset,
    bundle: &mut ModelBundle,
    opt: &OptimizerConfig,
) -> Result<Vec<f64>> {
    opt.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opt.seed);
    let mut vel_cls_w = vec![0.0; bundle.classifier_weights.data().len()];
    let mut vel_cls_b = vec![0.0; bundle.classifier_bias.len()];
    let mut vel_map: Vec<Vec<f64>> = bundle
        .mapping
        .param_shapes()
        .iter()
        .map(|&n| vec![0.0; n])
        .collect();
    let mut vel_mix = vec![0.0; bundle.aggregation.mix.data().len()];
    let mut vel_bias = vec![0.0; bundle.aggregation.bias.data().len()];
    let mut vel_net: Vec<Vec<f64>> = bundle
        .embedder
        .network()
        .map(|net| net.param_shapes().iter().map(|&n| vec![0.0; n]).collect())
        .unwrap_or_default();

    let mut losses = Vec::with_capacity(opt.max_iter);
    for iter in 0..opt.max_iter {
        let mut loss_sum = 0.0;
        let mut acc: Option<VideoGrads> = None;
        let scale = 1.0 / opt.batch_videos as f64;
        for _ in 0..opt.batch_videos {
            let video = &train.videos[rng.gen_range(0..train.len())];
            let label = bundle.training_index(&video.label)?;
            let (logits, cache) = bundle.forward_video(&video.frames)?;
            let (loss, mut d_logits) = softmax_cross_entropy(&logits, label)?;
            loss_sum += loss * scale;
            for v in &mut d_logits {
                *v *= scale;
            }
            let grads = bundle.backward_video(&d_logits, &cache)?;
            match &mut acc {
                None => acc = Some(grads),
                Some(a) => a.add(&grads)?,
            }
        }
        if !loss_sum.is_finite() {
            return Err(Error::Training {
                stage: 3,
                iteration: iter,
                reason: "loss diverged to non-finite".into(),
            });
        }
        losses.push(loss_sum);
        let grads = acc.expect("batch_videos >= 1 enforced by validate");
        let lr = poly_lr(iter, opt)?;
        sgd_momentum_step(
            bundle.classifier_weights.data_mut(),
            grads.classifier_weights.data(),
            &mut vel_cls_w,
            lr,
            opt,
        )?;
        sgd_momentum_step(
            &mut bundle.classifier_bias,
            &grads.classifier_bias,
            &mut vel_cls_b,
            lr,
            opt,
        )?;
        apply_layer_grads(&mut bundle.mapping, &grads.mapping, &mut vel_map, lr, opt)?;
        sgd_momentum_step(
            bundle.aggregation.mix.data_mut(),
            grads.agg_mix.data(),
            &mut vel_mix,
            lr,
            opt,
        )?;
        sgd_momentum_step(
            bundle.aggregation.bias.data_mut(),
            grads.agg_bias.data(),
            &mut vel_bias,
            lr,
            opt,
        )?;
        if let Some(net) = bundle.embedder.network_mut() {
            apply_layer_grads(net, &grads.embedder, &mut vel_net, lr, opt)?;
        }
    }
    Ok(losses)
}
