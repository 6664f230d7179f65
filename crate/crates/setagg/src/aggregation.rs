//! Differentiable aggregation block turning an ordered set of frame feature
//! vectors into a fixed number of symmetric positive semi-definite matrices.
//!
//! The block is a chain of four layers: subtract the mean frame, mix frames
//! with a learned matrix applied on the transpose (`Y = Xc W + b`), take the
//! outer product of every mixed column, and average-pool the outer products
//! in consecutive groups. Output shape depends only on the configured group
//! count and feature dimension, never on how many frames came in.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// A `d x n` set of frame feature vectors, one column per frame, in frame
/// order. At least one frame, all entries finite.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    mat: Matrix,
}

impl FeatureMatrix {
    pub fn new(mat: Matrix) -> Result<Self> {
        if mat.cols() == 0 || mat.rows() == 0 {
            return Err(Error::EmptyInput("FeatureMatrix::new"));
        }
        if !mat.is_finite() {
            return Err(Error::NonFinite("FeatureMatrix::new"));
        }
        Ok(Self { mat })
    }

    /// Builds from per-frame vectors, preserving order.
    pub fn from_frames(frames: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_columns(frames)?)
    }

    /// Feature dimension d.
    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    /// Frame count n.
    pub fn frames(&self) -> usize {
        self.mat.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.mat
    }

    pub fn frame(&self, i: usize) -> Vec<f64> {
        self.mat.column(i)
    }
}

/// Learnable state of the aggregation block.
///
/// `mix` is the frame-mixing matrix (one row per expected input frame, one
/// column per mixed output vector), `bias` is added to every mixed output,
/// and `groups` is how many pooled matrices come out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregationParams {
    pub mix: Matrix,
    pub bias: Matrix,
    pub groups: usize,
}

impl AggregationParams {
    pub fn new(mix: Matrix, bias: Matrix, groups: usize) -> Result<Self> {
        let p = Self { mix, bias, groups };
        p.validate()?;
        Ok(p)
    }

    /// Frame count the mixing matrix is sized for.
    pub fn frame_count(&self) -> usize {
        self.mix.rows()
    }

    /// Number of mixed output vectors (columns of `mix`).
    pub fn output_count(&self) -> usize {
        self.mix.cols()
    }

    /// Feature dimension implied by the bias.
    pub fn dim(&self) -> usize {
        self.bias.rows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 {
            return Err(Error::InvalidConfig("aggregation groups must be >= 1".into()));
        }
        if self.mix.rows() == 0 || self.mix.cols() == 0 {
            return Err(Error::EmptyInput("AggregationParams.mix"));
        }
        if self.bias.cols() != self.mix.cols() {
            return Err(Error::ShapeMismatch {
                context: "AggregationParams",
                expected: format!("bias with {} columns", self.mix.cols()),
                found: format!("{}x{}", self.bias.rows(), self.bias.cols()),
            });
        }
        if self.output_count() % self.groups != 0 {
            return Err(Error::BadGrouping {
                count: self.output_count(),
                groups: self.groups,
            });
        }
        if !self.mix.is_finite() || !self.bias.is_finite() {
            return Err(Error::NonFinite("AggregationParams"));
        }
        Ok(())
    }

    /// Training initializer: identity-like mixing (truncated or padded to
    /// `n_train x q`) plus Gaussian noise, zero bias. Starts the block close
    /// to a plain covariance descriptor.
    pub fn init_near_identity(
        dim: usize,
        n_train: usize,
        outputs: usize,
        groups: usize,
        noise: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut mix = Matrix::zeros(n_train, outputs);
        for i in 0..n_train.min(outputs) {
            mix[(i, i)] = 1.0;
        }
        for v in mix.data_mut() {
            let eps: f64 = rng.sample(StandardNormal);
            *v += noise * eps;
        }
        Self::new(mix, Matrix::zeros(dim, outputs), groups)
    }
}

/// Forward-pass result: the pooled matrices plus every intermediate the
/// backward pass needs.
#[derive(Clone, Debug)]
pub struct AggregationOutput {
    /// The `groups` pooled matrices, each `d x d` symmetric PSD.
    pub pooled: Vec<Matrix>,
    /// Mean frame vector.
    pub mean: Vec<f64>,
    /// Centered input (`d x n`).
    pub centered: Matrix,
    /// Mixed outputs `Y = Xc W + b` (`d x q`).
    pub mixed: Matrix,
}

/// Frame indices used to stretch or shrink an n-frame video to `target`
/// frames: uniform subsampling when n > target, cyclic repetition when
/// n < target.
pub fn resample_indices(frames: usize, target: usize) -> Vec<usize> {
    (0..target)
        .map(|i| if frames >= target { i * frames / target } else { i % frames })
        .collect()
}

/// Resamples a feature set to exactly `target` frames (see
/// [`resample_indices`]). Identity when the count already matches.
pub fn resample(x: &FeatureMatrix, target: usize) -> Result<FeatureMatrix> {
    if target == 0 {
        return Err(Error::InvalidConfig("resample target must be >= 1".into()));
    }
    if x.frames() == target {
        return Ok(x.clone());
    }
    let idx = resample_indices(x.frames(), target);
    let cols: Vec<Vec<f64>> = idx.iter().map(|&i| x.frame(i)).collect();
    FeatureMatrix::from_frames(&cols)
}

/// Subtracts the mean frame from every column. Returns the centered columns
/// and the mean vector.
pub fn minus_mean(x: &FeatureMatrix) -> (Matrix, Vec<f64>) {
    let d = x.dim();
    let n = x.frames();
    let mut mean = vec![0.0; d];
    let m = x.matrix();
    for j in 0..n {
        for i in 0..d {
            mean[i] += m[(i, j)];
        }
    }
    for v in &mut mean {
        *v /= n as f64;
    }
    let mut centered = m.clone();
    for j in 0..n {
        for i in 0..d {
            centered[(i, j)] -= mean[i];
        }
    }
    (centered, mean)
}

/// Linear mixing across the frame dimension: `Y = Xc W + b`.
pub fn transpose_fc(centered: &Matrix, mix: &Matrix, bias: &Matrix) -> Result<Matrix> {
    if centered.cols() != mix.rows() {
        return Err(Error::ShapeMismatch {
            context: "transpose_fc",
            expected: format!("mixing matrix with {} rows", centered.cols()),
            found: format!("{}x{}", mix.rows(), mix.cols()),
        });
    }
    if bias.rows() != centered.rows() || bias.cols() != mix.cols() {
        return Err(Error::ShapeMismatch {
            context: "transpose_fc",
            expected: format!("bias of {}x{}", centered.rows(), mix.cols()),
            found: format!("{}x{}", bias.rows(), bias.cols()),
        });
    }
    centered.matmul(mix)?.add(bias)
}

/// Outer product of every column with itself. Each result is symmetric PSD
/// of rank at most one.
pub fn outer_products(mixed: &Matrix) -> Vec<Matrix> {
    let d = mixed.rows();
    (0..mixed.cols())
        .map(|j| {
            let y = mixed.column(j);
            let mut c = Matrix::zeros(d, d);
            for a in 0..d {
                for b in 0..d {
                    c[(a, b)] = y[a] * y[b];
                }
            }
            c
        })
        .collect()
}

/// Plain average pooling of consecutive groups: the list is split into
/// `groups` equal consecutive blocks and each block is averaged.
pub fn group_avg_pool(mats: &[Matrix], groups: usize) -> Result<Vec<Matrix>> {
    if groups == 0 || mats.len() % groups != 0 {
        return Err(Error::BadGrouping {
            count: mats.len(),
            groups,
        });
    }
    let per = mats.len() / groups;
    let mut out = Vec::with_capacity(groups);
    for g in 0..groups {
        let mut acc = mats[g * per].clone();
        for m in &mats[g * per + 1..(g + 1) * per] {
            acc = acc.add(m)?;
        }
        out.push(acc.scale(1.0 / per as f64));
    }
    Ok(out)
}

/// Full forward pass. The input must already hold exactly
/// `params.frame_count()` frames; use [`resample`] first for anything else.
///
/// Pooling normalizes by frames-per-group (`n / groups`) rather than by the
/// number of matrices actually pooled, so the identity-mixing configuration
/// reproduces the population covariance exactly and a subspace-basis mixing
/// configuration reproduces the scaled subspace projector.
pub fn forward(x: &FeatureMatrix, params: &AggregationParams) -> Result<AggregationOutput> {
    params.validate()?;
    if x.frames() != params.frame_count() {
        return Err(Error::ShapeMismatch {
            context: "aggregation::forward",
            expected: format!("{} frames", params.frame_count()),
            found: format!("{}", x.frames()),
        });
    }
    if x.dim() != params.dim() {
        return Err(Error::ShapeMismatch {
            context: "aggregation::forward",
            expected: format!("feature dim {}", params.dim()),
            found: format!("{}", x.dim()),
        });
    }
    let (centered, mean) = minus_mean(x);
    let mixed = transpose_fc(&centered, &params.mix, &params.bias)?;

    let n = x.frames() as f64;
    let t = params.groups;
    let q = params.output_count();
    let per = q / t;
    let d = x.dim();
    let inv_group = t as f64 / n;

    let mut pooled = Vec::with_capacity(t);
    for g in 0..t {
        let mut acc = Matrix::zeros(d, d);
        for j in g * per..(g + 1) * per {
            let y = mixed.column(j);
            for a in 0..d {
                for b in 0..d {
                    acc[(a, b)] += y[a] * y[b];
                }
            }
        }
        pooled.push(acc.scale(inv_group));
    }
    Ok(AggregationOutput {
        pooled,
        mean,
        centered,
        mixed,
    })
}

/// Gradients of a scalar loss with respect to the block's input and
/// parameters.
#[derive(Clone, Debug)]
pub struct AggregationGrads {
    /// d loss / d input, `d x n`.
    pub input: Matrix,
    /// d loss / d mix, `n x q`.
    pub mix: Matrix,
    /// d loss / d bias, `d x q`.
    pub bias: Matrix,
}

/// Backward pass through all four layers.
///
/// For an upstream gradient G on pooled matrix i, every mixed column in that
/// group receives `(Gᵀ + G) y / (n / t)`; the mixing layer then follows the
/// usual linear rules and the centering layer applies its exact Jacobian
/// (subtract the mean of the column gradients).
pub fn backward(
    out_grads: &[Matrix],
    cache: &AggregationOutput,
    params: &AggregationParams,
) -> Result<AggregationGrads> {
    params.validate()?;
    let d = params.dim();
    let n = params.frame_count();
    let q = params.output_count();
    let t = params.groups;
    let per = q / t;
    if out_grads.len() != t {
        return Err(Error::ShapeMismatch {
            context: "aggregation::backward",
            expected: format!("{t} output gradients"),
            found: format!("{}", out_grads.len()),
        });
    }
    for g in out_grads {
        if g.rows() != d || g.cols() != d {
            return Err(Error::ShapeMismatch {
                context: "aggregation::backward",
                expected: format!("{d}x{d} output gradients"),
                found: format!("{}x{}", g.rows(), g.cols()),
            });
        }
    }
    if cache.mixed.rows() != d || cache.mixed.cols() != q || cache.centered.cols() != n {
        return Err(Error::ShapeMismatch {
            context: "aggregation::backward",
            expected: format!("cache for {d}x{n} input and {q} outputs"),
            found: format!(
                "centered {}x{}, mixed {}x{}",
                cache.centered.rows(),
                cache.centered.cols(),
                cache.mixed.rows(),
                cache.mixed.cols()
            ),
        });
    }

    let inv_group = t as f64 / n as f64;
    let mut d_mixed = Matrix::zeros(d, q);
    for g in 0..t {
        let sym = out_grads[g].transpose().add(&out_grads[g])?;
        for j in g * per..(g + 1) * per {
            let y = cache.mixed.column(j);
            let gy = sym.matvec(&y)?;
            for i in 0..d {
                d_mixed[(i, j)] = inv_group * gy[i];
            }
        }
    }

    let d_mix = cache.centered.transpose().matmul(&d_mixed)?;
    let d_bias = d_mixed.clone();
    let d_centered = d_mixed.matmul(&params.mix.transpose())?;

    // Exact Jacobian of centering: subtract the mean of the column gradients.
    let mut col_mean = vec![0.0; d];
    for j in 0..n {
        for i in 0..d {
            col_mean[i] += d_centered[(i, j)];
        }
    }
    for v in &mut col_mean {
        *v /= n as f64;
    }
    let mut d_input = d_centered;
    for j in 0..n {
        for i in 0..d {
            d_input[(i, j)] -= col_mean[i];
        }
    }

    Ok(AggregationGrads {
        input: d_input,
        mix: d_mix,
        bias: d_bias,
    })
}
