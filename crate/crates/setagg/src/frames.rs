//! Per-frame feature extraction. A pluggable embedder stands in for the
//! heavyweight per-frame CNN: raw inputs are assumed to be precomputed
//! feature vectors (or toy vectors), optionally passed through a small
//! trainable network before aggregation.

use crate::aggregation::FeatureMatrix;
use crate::error::{Error, Result};
use crate::mapping::{ForwardCache, LayerGrads, Mlp};
use serde::{Deserialize, Serialize};

/// Maps one raw frame vector to one feature column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FrameEmbedder {
    /// Raw vectors are already the features.
    Passthrough { dim: usize },
    /// A single affine map (an [`Mlp`] with one identity layer).
    Linear(Mlp),
    /// A small trainable network.
    Mlp(Mlp),
}

impl FrameEmbedder {
    pub fn passthrough(dim: usize) -> Self {
        FrameEmbedder::Passthrough { dim }
    }

    /// Output feature dimension d.
    pub fn out_dim(&self) -> usize {
        match self {
            FrameEmbedder::Passthrough { dim } => *dim,
            FrameEmbedder::Linear(net) | FrameEmbedder::Mlp(net) => net.out_dim(),
        }
    }

    /// Expected raw frame dimension.
    pub fn in_dim(&self) -> usize {
        match self {
            FrameEmbedder::Passthrough { dim } => *dim,
            FrameEmbedder::Linear(net) | FrameEmbedder::Mlp(net) => net.in_dim(),
        }
    }

    pub fn is_trainable(&self) -> bool {
        !matches!(self, FrameEmbedder::Passthrough { .. })
    }

    pub fn network(&self) -> Option<&Mlp> {
        match self {
            FrameEmbedder::Passthrough { .. } => None,
            FrameEmbedder::Linear(net) | FrameEmbedder::Mlp(net) => Some(net),
        }
    }

    pub fn network_mut(&mut self) -> Option<&mut Mlp> {
        match self {
            FrameEmbedder::Passthrough { .. } => None,
            FrameEmbedder::Linear(net) | FrameEmbedder::Mlp(net) => Some(net),
        }
    }
}

/// Per-video cache of the embedder's forward pass, one entry per frame.
#[derive(Clone, Debug, Default)]
pub struct EmbedCache {
    caches: Vec<ForwardCache>,
}

/// Embeds a video: column i of the result is the embedding of `raw[i]`.
pub fn embed_frames(
    raw: &[Vec<f64>],
    embedder: &FrameEmbedder,
) -> Result<(FeatureMatrix, EmbedCache)> {
    if raw.is_empty() {
        return Err(Error::EmptyInput("embed_frames"));
    }
    let want = embedder.in_dim();
    for (i, frame) in raw.iter().enumerate() {
        if frame.len() != want {
            return Err(Error::ShapeMismatch {
                context: "embed_frames",
                expected: format!("frames of length {want}"),
                found: format!("{} at frame {i}", frame.len()),
            });
        }
    }
    match embedder.network() {
        None => Ok((FeatureMatrix::from_frames(raw)?, EmbedCache::default())),
        Some(net) => {
            let mut cols = Vec::with_capacity(raw.len());
            let mut caches = Vec::with_capacity(raw.len());
            for frame in raw {
                let (out, cache) = net.forward(frame)?;
                cols.push(out);
                caches.push(cache);
            }
            Ok((FeatureMatrix::from_frames(&cols)?, EmbedCache { caches }))
        }
    }
}

/// Backpropagates a gradient on the feature matrix through the embedder.
/// Returns the summed parameter gradients (empty for passthrough, which has
/// nothing to train) and discards raw-input gradients.
pub fn embedder_backward(
    feature_grads: &crate::linalg::Matrix,
    cache: &EmbedCache,
    embedder: &FrameEmbedder,
) -> Result<Vec<LayerGrads>> {
    let net = match embedder.network() {
        None => return Ok(Vec::new()),
        Some(net) => net,
    };
    if feature_grads.rows() != net.out_dim() || feature_grads.cols() != cache.caches.len() {
        return Err(Error::ShapeMismatch {
            context: "embedder_backward",
            expected: format!("{}x{} feature gradients", net.out_dim(), cache.caches.len()),
            found: format!("{}x{}", feature_grads.rows(), feature_grads.cols()),
        });
    }
    let mut acc: Vec<LayerGrads> = Vec::new();
    for (j, frame_cache) in cache.caches.iter().enumerate() {
        let g = feature_grads.column(j);
        let (_, grads) = net.backward(&g, frame_cache)?;
        crate::mapping::accumulate_grads(&mut acc, &grads)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::mapping::{Activation, DenseLayer};
    use crate::testutil::{randn_matrix, randn_vec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear(w: Matrix) -> FrameEmbedder {
        let bias = vec![0.0; w.rows()];
        FrameEmbedder::Linear(
            Mlp::new(vec![DenseLayer {
                weights: w,
                bias,
                activation: Activation::Identity,
            }])
            .unwrap(),
        )
    }

    #[test]
    fn passthrough_is_identity() {
        let raw = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        let (fm, cache) = embed_frames(&raw, &FrameEmbedder::passthrough(2)).unwrap();
        assert_eq!(fm.frames(), 3);
        for (j, frame) in raw.iter().enumerate() {
            assert_eq!(&fm.frame(j), frame);
        }
        assert!(cache.caches.is_empty());
    }

    #[test]
    fn zero_linear_embedder_gives_zero_features() {
        let raw = vec![vec![1.0, -2.0, 3.0], vec![0.5, 0.0, -1.0]];
        let (fm, _) = embed_frames(&raw, &linear(Matrix::zeros(2, 3))).unwrap();
        assert_eq!(fm.dim(), 2);
        assert_eq!(fm.matrix().max_abs(), 0.0);
    }

    #[test]
    fn mlp_embedder_matches_per_frame_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::he_init(&[3, 5, 4], &[Activation::Tanh, Activation::Identity], &mut rng)
            .unwrap();
        let embedder = FrameEmbedder::Mlp(net.clone());
        let raw: Vec<Vec<f64>> = (0..4).map(|_| randn_vec(3, &mut rng)).collect();
        let (fm, _) = embed_frames(&raw, &embedder).unwrap();
        for (j, frame) in raw.iter().enumerate() {
            let want = net.predict(frame).unwrap();
            assert_eq!(fm.frame(j), want);
        }
    }

    #[test]
    fn embed_rejects_ragged_and_empty() {
        let e = FrameEmbedder::passthrough(2);
        assert!(matches!(
            embed_frames(&[], &e),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            embed_frames(&[vec![1.0, 2.0], vec![1.0]], &e),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn backward_passthrough_is_noop() {
        let e = FrameEmbedder::passthrough(2);
        let raw = vec![vec![1.0, 2.0]];
        let (_, cache) = embed_frames(&raw, &e).unwrap();
        let grads = embedder_backward(&Matrix::zeros(2, 1), &cache, &e).unwrap();
        assert!(grads.is_empty());
    }

    #[test]
    fn backward_zero_grads_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = FrameEmbedder::Mlp(
            Mlp::he_init(&[3, 4, 2], &[Activation::Tanh, Activation::Identity], &mut rng)
                .unwrap(),
        );
        let raw: Vec<Vec<f64>> = (0..3).map(|_| randn_vec(3, &mut rng)).collect();
        let (_, cache) = embed_frames(&raw, &e).unwrap();
        let grads = embedder_backward(&Matrix::zeros(2, 3), &cache, &e).unwrap();
        for g in grads {
            assert_eq!(g.weights.max_abs(), 0.0);
            assert!(g.bias.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn backward_single_frame_reduces_to_mlp_backward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::he_init(&[3, 4, 2], &[Activation::Tanh, Activation::Identity], &mut rng)
            .unwrap();
        let e = FrameEmbedder::Mlp(net.clone());
        let raw = vec![randn_vec(3, &mut rng)];
        let (_, cache) = embed_frames(&raw, &e).unwrap();
        let g = randn_vec(2, &mut rng);
        let via_embedder =
            embedder_backward(&Matrix::from_columns(&[g.clone()]).unwrap(), &cache, &e).unwrap();

        let (_, direct_cache) = net.forward(&raw[0]).unwrap();
        let (_, direct) = net.backward(&g, &direct_cache).unwrap();
        for (a, b) in via_embedder.iter().zip(&direct) {
            assert_eq!(a.weights, b.weights);
            assert_eq!(a.bias, b.bias);
        }
    }

    #[test]
    fn backward_sums_per_frame_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::he_init(&[2, 3, 2], &[Activation::Sigmoid, Activation::Identity], &mut rng)
            .unwrap();
        let e = FrameEmbedder::Mlp(net.clone());
        let raw: Vec<Vec<f64>> = (0..3).map(|_| randn_vec(2, &mut rng)).collect();
        let (_, cache) = embed_frames(&raw, &e).unwrap();
        let gm = randn_matrix(2, 3, &mut rng);
        let summed = embedder_backward(&gm, &cache, &e).unwrap();

        // loop oracle: backward each frame separately and add
        let mut expect: Vec<crate::mapping::LayerGrads> = Vec::new();
        for j in 0..3 {
            let (_, c) = net.forward(&raw[j]).unwrap();
            let (_, g) = net.backward(&gm.column(j), &c).unwrap();
            crate::mapping::accumulate_grads(&mut expect, &g).unwrap();
        }
        for (a, b) in summed.iter().zip(&expect) {
            assert!(a.weights.sub(&b.weights).unwrap().max_abs() < 1e-14);
            for (x, y) in a.bias.iter().zip(&b.bias) {
                assert!((x - y).abs() < 1e-14);
            }
        }
    }
}
