//! Open-set identification: probes are matched against enrolled gallery
//! classes; a probe from outside the gallery should be rejected, by score
//! threshold or by an explicit catch-all class.

use super::loss::softmax;
use super::optimizer::{poly_lr, sgd_momentum_step, OptimizerConfig};
use super::pipeline::{argmax, resample_raw, ModelBundle};
use super::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Open-set identification metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpenSetMetrics {
    /// Fraction of probes handled correctly under the open-set rule: an
    /// enrolled probe must be accepted as its own class, an alien probe
    /// must be rejected.
    pub accuracy: f64,
    /// Closed-set rank-1 accuracy over probes whose class is enrolled,
    /// ignoring rejection.
    pub known_only_accuracy: f64,
    /// Fraction of alien probes that were (wrongly) accepted.
    pub false_accept_rate: f64,
    pub probes: usize,
    pub known_probes: usize,
    pub unknown_probes: usize,
}

/// Per-probe decision of the shared open-set rule.
///
/// Given logits over all model classes: if the model has a catch-all class
/// and it wins the overall argmax, the probe is rejected outright. Otherwise the
/// probe is assigned the best enrolled class, with the softmax posterior
/// over enrolled classes as its confidence score, and accepted iff the
/// score clears the threshold.
fn decide(
    logits: &[f64],
    labels: &[String],
    unknown_label: Option<&str>,
    enrolled_idx: &[usize],
    threshold: f64,
) -> (Option<usize>, usize) {
    if let Some(u) = unknown_label {
        let top = argmax(logits);
        if labels[top] == u {
            // still compute the closed-set choice for known-only accuracy
            let best = best_enrolled(logits, enrolled_idx);
            return (None, best);
        }
    }
    let best = best_enrolled(logits, enrolled_idx);
    let enrolled_logits: Vec<f64> = enrolled_idx.iter().map(|&i| logits[i]).collect();
    let posterior = softmax(&enrolled_logits);
    let score = enrolled_idx
        .iter()
        .position(|&i| i == best)
        .map(|p| posterior[p])
        .expect("best index comes from enrolled_idx");
    if score >= threshold {
        (Some(best), best)
    } else {
        (None, best)
    }
}

fn best_enrolled(logits: &[f64], enrolled_idx: &[usize]) -> usize {
    let mut best = enrolled_idx[0];
    for &i in enrolled_idx {
        if logits[i] > logits[best] {
            best = i;
        }
    }
    best
}

/// Computes the metrics from per-probe logits. `scored` pairs each probe's
/// true label with its logits over `labels`.
pub fn open_set_metrics(
    scored: &[(String, Vec<f64>)],
    labels: &[String],
    unknown_label: Option<&str>,
    enrolled: &BTreeSet<String>,
    threshold: f64,
) -> Result<OpenSetMetrics> {
    if scored.is_empty() {
        return Err(Error::EmptyInput("open_set_metrics: probe set"));
    }
    let enrolled_idx: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| enrolled.contains(*l) && Some(l.as_str()) != unknown_label)
        .map(|(i, _)| i)
        .collect();
    if enrolled_idx.is_empty() {
        return Err(Error::EmptyInput(
            "open_set_metrics: no enrolled gallery class is known to the model",
        ));
    }
    let mut correct = 0usize;
    let mut known = 0usize;
    let mut known_rank1 = 0usize;
    let mut unknown = 0usize;
    let mut false_accepts = 0usize;
    for (true_label, logits) in scored {
        if logits.len() != labels.len() {
            return Err(Error::ShapeMismatch {
                context: "open_set_metrics",
                expected: format!("{} logits", labels.len()),
                found: format!("{}", logits.len()),
            });
        }
        let (accepted, closed_choice) =
            decide(logits, labels, unknown_label, &enrolled_idx, threshold);
        let is_known = enrolled.contains(true_label)
            && Some(true_label.as_str()) != unknown_label;
        if is_known {
            known += 1;
            if &labels[closed_choice] == true_label {
                known_rank1 += 1;
            }
            if accepted.map(|i| &labels[i] == true_label).unwrap_or(false) {
                correct += 1;
            }
        } else {
            unknown += 1;
            if accepted.is_some() {
                false_accepts += 1;
            } else {
                correct += 1;
            }
        }
    }
    Ok(OpenSetMetrics {
        accuracy: correct as f64 / scored.len() as f64,
        known_only_accuracy: if known == 0 {
            f64::NAN
        } else {
            known_rank1 as f64 / known as f64
        },
        false_accept_rate: if unknown == 0 {
            0.0
        } else {
            false_accepts as f64 / unknown as f64
        },
        probes: scored.len(),
        known_probes: known,
        unknown_probes: unknown,
    })
}

/// Scores every probe with the full model and applies the open-set rule.
/// The gallery's only role is naming the enrolled classes.
pub fn evaluate_open_set(
    model: &ModelBundle,
    gallery: &Dataset,
    probe: &Dataset,
    threshold: f64,
) -> Result<OpenSetMetrics> {
    if probe.is_empty() {
        return Err(Error::EmptyInput("evaluate_open_set: probe set"));
    }
    if gallery.is_empty() {
        return Err(Error::EmptyInput("evaluate_open_set: gallery set"));
    }
    model.validate()?;
    let enrolled: BTreeSet<String> = gallery.videos.iter().map(|v| v.label.clone()).collect();
    let mut scored = Vec::with_capacity(probe.len());
    for v in &probe.videos {
        let (logits, _) = model.forward_video(&v.frames)?;
        scored.push((v.label.clone(), logits));
    }
    open_set_metrics(
        &scored,
        &model.labels,
        model.unknown_label.as_deref(),
        &enrolled,
        threshold,
    )
}

/// The comparison baseline: average the frames and classify the mean vector
/// with a linear softmax model. First-order pooling only — it sees nothing
/// of a video's second-order structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanPoolBaseline {
    pub classifier_weights: Matrix,
    pub classifier_bias: Vec<f64>,
    pub labels: Vec<String>,
    pub unknown_label: Option<String>,
    pub frames_per_video: usize,
}

impl MeanPoolBaseline {
    fn mean_vector(&self, frames: &[Vec<f64>]) -> Result<Vec<f64>> {
        let resampled = resample_raw(frames, self.frames_per_video)?;
        let d = resampled[0].len();
        let mut mean = vec![0.0; d];
        for f in &resampled {
            for (m, v) in mean.iter_mut().zip(f) {
                *m += v / self.frames_per_video as f64;
            }
        }
        Ok(mean)
    }

    pub fn logits(&self, frames: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mean = self.mean_vector(frames)?;
        let mut logits = self.classifier_weights.matvec(&mean)?;
        for (l, b) in logits.iter_mut().zip(&self.classifier_bias) {
            *l += b;
        }
        Ok(logits)
    }

    fn class_index(&self, label: &str) -> Result<usize> {
        if let Ok(i) = self.labels.binary_search_by(|l| l.as_str().cmp(label)) {
            return Ok(i);
        }
        if let Some(u) = &self.unknown_label {
            return Ok(self
                .labels
                .binary_search_by(|l| l.as_str().cmp(u))
                .expect("unknown label is a model label"));
        }
        Err(Error::InvalidConfig(format!(
            "video label {label:?} is not among the baseline labels"
        )))
    }
}

/// Trains the baseline under the same optimizer recipe, batch layout, and
/// seed as a stage-3 run, so model-vs-baseline comparisons are like for
/// like.
pub fn train_mean_pool_baseline(
    train: &Dataset,
    labels: Vec<String>,
    unknown_label: Option<String>,
    opt: &OptimizerConfig,
) -> Result<(MeanPoolBaseline, Vec<f64>)> {
    train.validate()?;
    opt.validate()?;
    let d = train.videos[0].dim();
    let mut baseline = MeanPoolBaseline {
        classifier_weights: Matrix::zeros(labels.len(), d),
        classifier_bias: vec![0.0; labels.len()],
        labels,
        unknown_label,
        frames_per_video: opt.frames_per_video,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opt.seed);
    let mut vel_w = vec![0.0; baseline.classifier_weights.data().len()];
    let mut vel_b = vec![0.0; baseline.classifier_bias.len()];
    let k = baseline.labels.len();
    let mut losses = Vec::with_capacity(opt.max_iter);
    for iter in 0..opt.max_iter {
        let mut loss_sum = 0.0;
        let mut gw = Matrix::zeros(k, d);
        let mut gb = vec![0.0; k];
        let scale = 1.0 / opt.batch_videos as f64;
        for _ in 0..opt.batch_videos {
            let video = &train.videos[rng.gen_range(0..train.len())];
            let label = baseline.class_index(&video.label)?;
            let mean = baseline.mean_vector(&video.frames)?;
            let logits = baseline.logits(&video.frames)?;
            let (loss, mut d_logits) = super::loss::softmax_cross_entropy(&logits, label)?;
            loss_sum += loss * scale;
            for v in &mut d_logits {
                *v *= scale;
            }
            for r in 0..k {
                for c in 0..d {
                    gw[(r, c)] += d_logits[r] * mean[c];
                }
                gb[r] += d_logits[r];
            }
        }
        if !loss_sum.is_finite() {
            return Err(Error::Training {
                stage: 3,
                iteration: iter,
                reason: "baseline loss diverged to non-finite".into(),
            });
        }
        losses.push(loss_sum);
        let lr = poly_lr(iter, opt)?;
        sgd_momentum_step(
            baseline.classifier_weights.data_mut(),
            gw.data(),
            &mut vel_w,
            lr,
            opt,
        )?;
        sgd_momentum_step(&mut baseline.classifier_bias, &gb, &mut vel_b, lr, opt)?;
    }
    Ok((baseline, losses))
}

/// Applies the same open-set rule to the baseline's scores.
pub fn evaluate_open_set_baseline(
    baseline: &MeanPoolBaseline,
    gallery: &Dataset,
    probe: &Dataset,
    threshold: f64,
) -> Result<OpenSetMetrics> {
    if probe.is_empty() {
        return Err(Error::EmptyInput("evaluate_open_set_baseline: probe set"));
    }
    if gallery.is_empty() {
        return Err(Error::EmptyInput("evaluate_open_set_baseline: gallery set"));
    }
    let enrolled: BTreeSet<String> = gallery.videos.iter().map(|v| v.label.clone()).collect();
    let mut scored = Vec::with_capacity(probe.len());
    for v in &probe.videos {
        scored.push((v.label.clone(), baseline.logits(&v.frames)?));
    }
    open_set_metrics(
        &scored,
        &baseline.labels,
        baseline.unknown_label.as_deref(),
        &enrolled,
        threshold,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::AggregationParams;
    use crate::frames::FrameEmbedder;
    use crate::mapping::{Activation, DenseLayer, Mlp};
    use crate::train::pipeline::FORMAT_VERSION;
    use crate::train::Video;
    use rand::Rng;

    /// A hand-built model that flawlessly separates span(e1) videos from
    /// span(e2) videos via their covariance diagonal.
    fn perfect_bundle() -> ModelBundle {
        let d = 2;
        let mapping = Mlp::new(vec![DenseLayer {
            weights: Matrix::identity(d * d),
            bias: vec![0.0; d * d],
            activation: Activation::Identity,
        }])
        .unwrap();
        // logit_a = C00 - C11, logit_b = C11 - C00
        let classifier = Matrix::from_rows(&[
            &[1.0, 0.0, 0.0, -1.0],
            &[-1.0, 0.0, 0.0, 1.0],
        ])
        .unwrap();
        ModelBundle {
            format_version: FORMAT_VERSION,
            embedder: FrameEmbedder::passthrough(d),
            aggregation: AggregationParams::new(
                Matrix::identity(4),
                Matrix::zeros(d, 4),
                1,
            )
            .unwrap(),
            mapping,
            classifier_weights: classifier,
            classifier_bias: vec![0.0, 0.0],
            labels: vec!["a".into(), "b".into()],
            unknown_label: None,
        }
    }

    /// Zero-mean frames alternating +1/-1 along one axis, so the video's
    /// covariance is exactly the unit matrix on that axis (covariance is
    /// about spread, not location — constant frames carry no signal).
    fn axis_video(label: &str, axis: usize) -> Video {
        let frames = (0..6)
            .map(|i| {
                let mut f = vec![0.0, 0.0];
                f[axis] = if i % 2 == 0 { 1.0 } else { -1.0 };
                f
            })
            .collect();
        Video {
            label: label.into(),
            frames,
        }
    }

    fn axis_dataset(specs: &[(&str, usize)]) -> Dataset {
        Dataset {
            videos: specs
                .iter()
                .map(|(l, axis)| axis_video(l, *axis))
                .collect(),
        }
    }

    #[test]
    fn closed_set_perfect_model_scores_one() {
        let model = perfect_bundle();
        let gallery = axis_dataset(&[("a", 0), ("b", 1)]);
        let metrics =
            evaluate_open_set(&model, &gallery, &gallery, f64::NEG_INFINITY).unwrap();
        assert_eq!(metrics.accuracy, 1.0);
        assert_eq!(metrics.known_only_accuracy, 1.0);
        assert_eq!(metrics.false_accept_rate, 0.0);
        assert_eq!(metrics.known_probes, 2);
        assert_eq!(metrics.unknown_probes, 0);
    }

    #[test]
    fn infinite_threshold_rejects_everything() {
        let model = perfect_bundle();
        let gallery = axis_dataset(&[("a", 0), ("b", 1)]);
        // two known probes, one alien
        let probe = axis_dataset(&[("a", 0), ("b", 1), ("zz", 0)]);
        let metrics = evaluate_open_set(&model, &gallery, &probe, f64::INFINITY).unwrap();
        assert!((metrics.accuracy - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(metrics.false_accept_rate, 0.0);
        // closed-set choice is unaffected by the threshold
        assert_eq!(metrics.known_only_accuracy, 1.0);
    }

    #[test]
    fn threshold_separates_known_from_alien() {
        let model = perfect_bundle();
        // every probe scores 1/(1+e^-2) ~ 0.8808, so 0.8 accepts them all;
        // the alien lives on axis 0 and collides with class a, so no
        // threshold could save it — this checks the bookkeeping
        let gallery = axis_dataset(&[("a", 0), ("b", 1)]);
        let probe = axis_dataset(&[("a", 0), ("b", 1), ("zz", 0)]);
        let metrics = evaluate_open_set(&model, &gallery, &probe, 0.8).unwrap();
        assert_eq!(metrics.known_probes, 2);
        assert_eq!(metrics.unknown_probes, 1);
        // alien accepted as class a: one false accept
        assert_eq!(metrics.false_accept_rate, 1.0);
        assert!((metrics.accuracy - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn explicit_unknown_class_rejects_without_threshold() {
        // model with a third catch-all class whose logit tracks off-diagonal
        // energy; here we simply force it by construction
        let mut model = perfect_bundle();
        model.labels = vec!["a".into(), "b".into(), "zz-unknown".into()];
        model.unknown_label = Some("zz-unknown".into());
        // third row fires when C00 and C11 are balanced (neither axis wins)
        model.classifier_weights = Matrix::from_rows(&[
            &[2.0, 0.0, 0.0, -2.0],
            &[-2.0, 0.0, 0.0, 2.0],
            &[0.0, 0.0, 0.0, 0.0],
        ])
        .unwrap();
        model.classifier_bias = vec![-0.5, -0.5, 0.6];
        let gallery = axis_dataset(&[("a", 0), ("b", 1)]);
        // balanced-energy alien: both axes active, so C00 == C11 and the
        // class logits cancel while the catch-all bias wins
        let alien = Video {
            label: "intruder".into(),
            frames: (0..6)
                .map(|i| {
                    if i % 2 == 0 {
                        vec![1.0, 0.0]
                    } else {
                        vec![0.0, 1.0]
                    }
                })
                .collect(),
        };
        let mut probe = axis_dataset(&[("a", 0), ("b", 1)]);
        probe.videos.push(alien);
        let metrics = evaluate_open_set(&model, &gallery, &probe, f64::NEG_INFINITY).unwrap();
        assert_eq!(metrics.accuracy, 1.0, "metrics: {metrics:?}");
        assert_eq!(metrics.false_accept_rate, 0.0);
    }

    #[test]
    fn relabeling_classes_does_not_change_metrics() {
        let model = perfect_bundle();
        let gallery = axis_dataset(&[("a", 0), ("b", 1)]);
        let probe = axis_dataset(&[("a", 0), ("a", 0), ("b", 1), ("zz", 1)]);
        let before = evaluate_open_set(&model, &gallery, &probe, 0.5).unwrap();

        // consistent renaming that also flips the sort order
        let rename = |l: &str| -> String {
            match l {
                "a" => "zebra".into(),
                "b" => "ant".into(),
                other => other.into(),
            }
        };
        let mut model2 = model.clone();
        model2.labels = vec!["ant".into(), "zebra".into()];
        // row for "ant" (old b) first, then "zebra" (old a)
        model2.classifier_weights = Matrix::from_rows(&[
            &[-1.0, 0.0, 0.0, 1.0],
            &[1.0, 0.0, 0.0, -1.0],
        ])
        .unwrap();
        let relabel = |ds: &Dataset| Dataset {
            videos: ds
                .videos
                .iter()
                .map(|v| Video {
                    label: rename(&v.label),
                    frames: v.frames.clone(),
                })
                .collect(),
        };
        let after =
            evaluate_open_set(&model2, &relabel(&gallery), &relabel(&probe), 0.5).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn empty_probe_or_gallery_is_an_error() {
        let model = perfect_bundle();
        let gallery = axis_dataset(&[("a", 0)]);
        assert!(matches!(
            evaluate_open_set(&model, &gallery, &Dataset::default(), 0.5),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            evaluate_open_set(&model, &Dataset::default(), &gallery, 0.5),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn gallery_disjoint_from_model_labels_is_an_error() {
        let model = perfect_bundle();
        let gallery = axis_dataset(&[("other", 0)]);
        let probe = axis_dataset(&[("a", 0)]);
        assert!(matches!(
            evaluate_open_set(&model, &gallery, &probe, 0.5),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn mean_pool_baseline_learns_mean_separable_classes() {
        // classes with distinct means are exactly what mean pooling can do
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut videos = Vec::new();
        for (label, mean) in [("a", [2.0, 0.0]), ("b", [0.0, 2.0])] {
            for _ in 0..6 {
                videos.push(Video {
                    label: label.into(),
                    frames: (0..8)
                        .map(|_| {
                            vec![
                                mean[0] + rng.gen_range(-0.3..0.3),
                                mean[1] + rng.gen_range(-0.3..0.3),
                            ]
                        })
                        .collect(),
                });
            }
        }
        let train = Dataset { videos };
        let opt = OptimizerConfig {
            max_iter: 300,
            batch_videos: 6,
            frames_per_video: 8,
            ..Default::default()
        };
        let (baseline, losses) =
            train_mean_pool_baseline(&train, train.labels_sorted(), None, &opt).unwrap();
        assert!(losses[0] > *losses.last().unwrap());
        let metrics =
            evaluate_open_set_baseline(&baseline, &train, &train, f64::NEG_INFINITY).unwrap();
        assert_eq!(metrics.accuracy, 1.0);
    }

    #[test]
    fn baseline_training_is_deterministic() {
        let train = axis_dataset(&[("a", 0), ("a", 0), ("b", 1), ("b", 1)]);
        let opt = OptimizerConfig {
            max_iter: 50,
            batch_videos: 4,
            frames_per_video: 6,
            ..Default::default()
        };
        let (b1, l1) =
            train_mean_pool_baseline(&train, train.labels_sorted(), None, &opt).unwrap();
        let (b2, l2) =
            train_mean_pool_baseline(&train, train.labels_sorted(), None, &opt).unwrap();
        assert_eq!(b1, b2);
        assert_eq!(l1, l2);
    }
}
