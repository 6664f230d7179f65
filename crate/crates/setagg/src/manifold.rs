//! SPD and Grassmann manifold representations and metrics, plus parameter
//! constructors showing the aggregation block subsumes both classical
//! descriptors: identity mixing reproduces the covariance matrix, and a
//! pseudo-inverse-based mixing reproduces the scaled subspace projector.

use crate::aggregation::{self, minus_mean, AggregationParams, FeatureMatrix};
use crate::error::{Error, Result};
use crate::linalg::{
    check_symmetric, frobenius_norm, matrix_log, pseudo_inverse, sym_eig, Matrix,
};
use serde::{Deserialize, Serialize};

/// Smallest eigenvalue accepted without regularization by the distance ops.
pub const SPD_REG_THRESHOLD: f64 = 1e-10;
/// Regularization strength relative to the mean diagonal: `λ = 1e-6 tr(C)/d`.
pub const SPD_REG_SCALE: f64 = 1e-6;
/// Relative eigen-gap below which a subspace truncation is flagged degenerate.
const EIGEN_GAP_TOL: f64 = 1e-10;

/// A symmetric matrix treated as a point on (or near) the SPD manifold.
///
/// Construction enforces symmetry and finiteness only; aggregation outputs
/// are often merely positive semi-definite, so strict definiteness is
/// enforced by the operations that need it (the log map), after the
/// documented regularization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpdMatrix {
    mat: Matrix,
}

impl SpdMatrix {
    /// Validates squareness, symmetry within the linalg tolerance, and
    /// finiteness, then stores the exactly-symmetrized matrix.
    pub fn new(mat: Matrix) -> Result<Self> {
        check_symmetric(&mat, "SpdMatrix::new")?;
        if !mat.is_finite() {
            return Err(Error::NonFinite("SpdMatrix::new"));
        }
        Ok(Self {
            mat: mat.symmetrized(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.mat
    }

    pub fn into_matrix(self) -> Matrix {
        self.mat
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let eig = sym_eig(&self.mat)?;
        Ok(*eig.eigenvalues.last().expect("non-empty spectrum"))
    }

    /// `C + λI` with `λ = 1e-6 tr(C)/d`.
    pub fn regularized(&self) -> Self {
        let d = self.dim();
        let lambda = SPD_REG_SCALE * self.mat.trace() / d as f64;
        let mut mat = self.mat.clone();
        for i in 0..d {
            mat[(i, i)] += lambda;
        }
        Self { mat }
    }
}

/// Sample covariance with population normalization: `(1/n) Σ (s−μ)(s−μ)ᵀ`.
pub fn covariance_descriptor(x: &FeatureMatrix) -> SpdMatrix {
    let (centered, _) = minus_mean(x);
    let n = x.frames() as f64;
    let cov = centered
        .matmul(&centered.transpose())
        .expect("centered input times its transpose is always conformable")
        .scale(1.0 / n);
    SpdMatrix::new(cov).expect("covariance is symmetric and finite by construction")
}

/// Log-Euclidean distance `‖log Ca − log Cb‖_F`.
///
/// If either argument has an eigenvalue below `1e-10`, both are replaced by
/// their regularized forms (`C + λI`, λ scaled to each matrix's own trace)
/// before taking logs, so near-PSD inputs compare on equal footing. A matrix
/// that is still not positive definite afterwards is a domain error.
pub fn log_euclidean_distance(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch {
            context: "log_euclidean_distance",
            expected: format!("{0}x{0}", a.dim()),
            found: format!("{0}x{0}", b.dim()),
        });
    }
    let needs_reg = a.min_eigenvalue()? < SPD_REG_THRESHOLD
        || b.min_eigenvalue()? < SPD_REG_THRESHOLD;
    let (ra, rb) = if needs_reg {
        (a.regularized(), b.regularized())
    } else {
        (a.clone(), b.clone())
    };
    let la = matrix_log(ra.matrix())?;
    let lb = matrix_log(rb.matrix())?;
    Ok(frobenius_norm(&la.sub(&lb)?))
}

/// A point on the Grassmann manifold: a subspace of R^d held as an
/// orthonormal basis, with diagnostics from the truncation that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrassmannPoint {
    /// `d x q`, orthonormal columns.
    pub basis: Matrix,
    /// Fraction of the total eigenvalue mass of XXᵀ captured by the kept q
    /// directions. No threshold is enforced; callers judge adequacy.
    pub captured_mass: f64,
    /// True when the eigen-gap at the cut is numerically zero, i.e. the
    /// kept subspace is not uniquely determined. Distances remain
    /// basis-invariant, so ties are benign but worth surfacing.
    pub degenerate: bool,
}

impl GrassmannPoint {
    pub fn dim(&self) -> usize {
        self.basis.rows()
    }

    pub fn subspace_dim(&self) -> usize {
        self.basis.cols()
    }

    /// Projector `YYᵀ` onto the subspace.
    pub fn projector(&self) -> Matrix {
        self.basis
            .matmul(&self.basis.transpose())
            .expect("basis times its transpose is always conformable")
    }
}

/// Basis of the dominant q-dimensional subspace of the columns of X: the
/// eigenvectors of `XXᵀ` with the q largest eigenvalues.
pub fn grassmann_basis(x: &FeatureMatrix, q: usize) -> Result<GrassmannPoint> {
    let d = x.dim();
    if q == 0 {
        return Err(Error::InvalidConfig(
            "grassmann subspace dimension must be >= 1".into(),
        ));
    }
    if q > d {
        return Err(Error::ShapeMismatch {
            context: "grassmann_basis",
            expected: format!("subspace dimension <= {d}"),
            found: format!("{q}"),
        });
    }
    let m = x.matrix();
    let gram = m.matmul(&m.transpose())?;
    let eig = sym_eig(&gram)?;
    let total: f64 = eig.eigenvalues.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateInput(
            "grassmann_basis: input has no nonzero direction".into(),
        ));
    }
    let kept: f64 = eig.eigenvalues[..q].iter().sum();
    let degenerate = q < d
        && (eig.eigenvalues[q - 1] - eig.eigenvalues[q]).abs()
            <= EIGEN_GAP_TOL * eig.eigenvalues[0];
    let mut basis = Matrix::zeros(d, q);
    for j in 0..q {
        for i in 0..d {
            basis[(i, j)] = eig.eigenvectors[(i, j)];
        }
    }
    Ok(GrassmannPoint {
        basis,
        captured_mass: kept / total,
        degenerate,
    })
}

/// Projection distance `(1/√2)‖YaYaᵀ − YbYbᵀ‖_F`; invariant to the choice of
/// basis within each subspace.
pub fn grassmann_distance(a: &GrassmannPoint, b: &GrassmannPoint) -> Result<f64> {
    if a.dim() != b.dim() || a.subspace_dim() != b.subspace_dim() {
        return Err(Error::ShapeMismatch {
            context: "grassmann_distance",
            expected: format!("{}x{} basis", a.dim(), a.subspace_dim()),
            found: format!("{}x{}", b.dim(), b.subspace_dim()),
        });
    }
    let diff = a.projector().sub(&b.projector())?;
    Ok(frobenius_norm(&diff) / std::f64::consts::SQRT_2)
}

/// Aggregation parameters that reproduce [`covariance_descriptor`] exactly:
/// identity mixing, zero bias, one group.
pub fn aggregation_as_covariance(dim: usize, frames: usize) -> Result<AggregationParams> {
    AggregationParams::new(Matrix::identity(frames), Matrix::zeros(dim, frames), 1)
}

/// Result of [`aggregation_as_grassmann`]: the constructed parameters plus a
/// warning flag.
#[derive(Clone, Debug)]
pub struct GrassmannAggregation {
    pub params: AggregationParams,
    /// The dominant subspace used to build the parameters.
    pub point: GrassmannPoint,
    /// True when X has numerical rank below q. The reproduction argument
    /// needs the basis to lie inside the column space of X, so expect a
    /// looser match in this case.
    pub rank_deficient: bool,
}

/// Aggregation parameters that reproduce the Grassmann representation of X:
/// with `W = X†Y` and `b = X̄X†Y` the block outputs `(1/n) YYᵀ`, the scaled
/// projector onto the dominant q-dimensional subspace.
pub fn aggregation_as_grassmann(x: &FeatureMatrix, q: usize) -> Result<GrassmannAggregation> {
    let point = grassmann_basis(x, q)?;
    let m = x.matrix();
    let pinv = pseudo_inverse(m)?;
    let mix = pinv.matmul(&point.basis)?;

    // b = X̄X†Y = x̄ (1ᵀ W): outer product of the mean frame with the column
    // sums of the mixing matrix.
    let (_, mean) = minus_mean(x);
    let mut bias = Matrix::zeros(x.dim(), q);
    for j in 0..q {
        let col_sum: f64 = (0..mix.rows()).map(|k| mix[(k, j)]).sum();
        for i in 0..x.dim() {
            bias[(i, j)] = mean[i] * col_sum;
        }
    }

    // numerical rank of X from the spectrum of XXᵀ, with the usual
    // singular-value cutoff σ_max · max(d, n) · ε
    let gram = m.matmul(&m.transpose())?;
    let eig = sym_eig(&gram)?;
    let sigma_max = eig.eigenvalues[0].max(0.0).sqrt();
    let cutoff = sigma_max * m.rows().max(m.cols()) as f64 * f64::EPSILON;
    let rank = eig
        .eigenvalues
        .iter()
        .filter(|&&l| l.max(0.0).sqrt() > cutoff)
        .count();

    Ok(GrassmannAggregation {
        params: AggregationParams::new(mix, bias, 1)?,
        point,
        rank_deficient: rank < q,
    })
}

/// Convenience wrapper: run the aggregation block configured by
/// [`aggregation_as_grassmann`] and return its single pooled output.
pub fn grassmann_via_aggregation(x: &FeatureMatrix, q: usize) -> Result<(Matrix, bool)> {
    let built = aggregation_as_grassmann(x, q)?;
    let out = aggregation::forward(x, &built.params)?;
    Ok((
        out.pooled.into_iter().next().expect("one group configured"),
        built.rank_deficient,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{randn_matrix, random_spd, random_symmetric};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fm_cols(cols: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix::from_frames(cols).unwrap()
    }

    #[test]
    fn covariance_hand_examples() {
        let c = covariance_descriptor(&fm_cols(&[vec![1.0, 0.0], vec![-1.0, 0.0]]));
        assert_eq!(c.matrix().data(), &[1.0, 0.0, 0.0, 0.0]);

        let c = covariance_descriptor(&fm_cols(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        assert_eq!(c.matrix().data(), &[1.0, 1.0, 1.0, 1.0]);

        let c = covariance_descriptor(&fm_cols(&vec![vec![5.0, -2.0]; 4]));
        assert_eq!(c.matrix().max_abs(), 0.0);
    }

    #[test]
    fn log_euclidean_hand_values() {
        let i2 = SpdMatrix::new(Matrix::identity(2)).unwrap();
        assert!(log_euclidean_distance(&i2, &i2).unwrap() < 1e-15);

        let e_i = SpdMatrix::new(Matrix::identity(2).scale(std::f64::consts::E)).unwrap();
        let d = log_euclidean_distance(&i2, &e_i).unwrap();
        assert!((d - std::f64::consts::SQRT_2).abs() < 1e-12, "d = {d}");

        let a = SpdMatrix::new(Matrix::diag(&[1.0, (2.0f64).exp().powi(1)])).unwrap();
        let b = Matrix::diag(&[1.0, std::f64::consts::E.powi(2)]);
        let d = log_euclidean_distance(&SpdMatrix::new(b).unwrap(), &i2).unwrap();
        assert!((d - 2.0).abs() < 1e-12, "d = {d}");
        drop(a);
    }

    #[test]
    fn log_euclidean_regularizes_singular_inputs() {
        // rank-1 covariance (two frames): min eigenvalue 0
        let sing = covariance_descriptor(&fm_cols(&[vec![1.0, 0.0, 0.0], vec![3.0, 0.0, 0.0]]));
        assert!(sing.min_eigenvalue().unwrap().abs() < 1e-14);
        assert!(matches!(
            matrix_log(sing.matrix()),
            Err(Error::NotPositiveDefinite { .. })
        ));
        let i3 = SpdMatrix::new(Matrix::identity(3)).unwrap();
        let d = log_euclidean_distance(&sing, &i3).unwrap();
        assert!(d.is_finite() && d > 0.0);
        // symmetric in arguments even when only one side is singular
        let d2 = log_euclidean_distance(&i3, &sing).unwrap();
        assert!((d - d2).abs() < 1e-12);
    }

    #[test]
    fn log_euclidean_zero_matrix_still_fails() {
        // trace 0 gives λ = 0, so regularization cannot rescue the zero matrix
        let z = SpdMatrix::new(Matrix::zeros(2, 2)).unwrap();
        let i2 = SpdMatrix::new(Matrix::identity(2)).unwrap();
        assert!(matches!(
            log_euclidean_distance(&z, &i2),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn grassmann_basis_hand_example() {
        // X = [[1,1],[0,0]]: XXᵀ = diag(2,0), top eigenvector +e1
        let x = fm_cols(&[vec![1.0, 0.0], vec![1.0, 0.0]]);
        let p = grassmann_basis(&x, 1).unwrap();
        assert!((p.basis[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(p.basis[(1, 0)].abs() < 1e-12);
        assert!((p.captured_mass - 1.0).abs() < 1e-12);
        assert!(!p.degenerate);
    }

    #[test]
    fn grassmann_basis_full_q_gives_identity_projector() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = FeatureMatrix::new(randn_matrix(3, 6, &mut rng)).unwrap();
        let p = grassmann_basis(&x, 3).unwrap();
        let diff = p.projector().sub(&Matrix::identity(3)).unwrap().max_abs();
        assert!(diff < 1e-10, "projector off identity by {diff}");
        assert!((p.captured_mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grassmann_basis_is_orthonormal_and_matches_projector_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x = FeatureMatrix::new(randn_matrix(4, 6, &mut rng)).unwrap();
        let p = grassmann_basis(&x, 2).unwrap();
        let gram = p.basis.transpose().matmul(&p.basis).unwrap();
        assert!(gram.sub(&Matrix::identity(2)).unwrap().max_abs() < 1e-10);

        // independent projector: sum of vᵢvᵢᵀ over the top two eigenvectors
        let eig = sym_eig(&x.matrix().matmul(&x.matrix().transpose()).unwrap()).unwrap();
        let mut proj = Matrix::zeros(4, 4);
        for j in 0..2 {
            for a in 0..4 {
                for b in 0..4 {
                    proj[(a, b)] += eig.eigenvectors[(a, j)] * eig.eigenvectors[(b, j)];
                }
            }
        }
        assert!(p.projector().sub(&proj).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn grassmann_basis_errors() {
        let x = fm_cols(&[vec![1.0, 0.0]]);
        assert!(matches!(
            grassmann_basis(&x, 3),
            Err(Error::ShapeMismatch { .. })
        ));
        let zero = fm_cols(&[vec![0.0, 0.0], vec![0.0, 0.0]]);
        assert!(matches!(
            grassmann_basis(&zero, 1),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn grassmann_basis_flags_tied_gap() {
        // isotropic X: XXᵀ = I scaled, every cut is tied
        let x = fm_cols(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let p = grassmann_basis(&x, 1).unwrap();
        assert!(p.degenerate);
    }

    #[test]
    fn grassmann_distance_hand_values() {
        let e1 = GrassmannPoint {
            basis: Matrix::from_columns(&[vec![1.0, 0.0]]).unwrap(),
            captured_mass: 1.0,
            degenerate: false,
        };
        let e2 = GrassmannPoint {
            basis: Matrix::from_columns(&[vec![0.0, 1.0]]).unwrap(),
            captured_mass: 1.0,
            degenerate: false,
        };
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let diag = GrassmannPoint {
            basis: Matrix::from_columns(&[vec![s, s]]).unwrap(),
            captured_mass: 1.0,
            degenerate: false,
        };
        assert!((grassmann_distance(&e1, &e2).unwrap() - 1.0).abs() < 1e-12);
        let d = grassmann_distance(&e1, &diag).unwrap();
        assert!((d - s).abs() < 1e-12, "d = {d}");
        assert!(grassmann_distance(&e1, &e1).unwrap() < 1e-12);
    }

    #[test]
    fn grassmann_distance_dimension_mismatch() {
        let a = GrassmannPoint {
            basis: Matrix::from_columns(&[vec![1.0, 0.0]]).unwrap(),
            captured_mass: 1.0,
            degenerate: false,
        };
        let b = GrassmannPoint {
            basis: Matrix::from_columns(&[vec![1.0, 0.0, 0.0]]).unwrap(),
            captured_mass: 1.0,
            degenerate: false,
        };
        assert!(matches!(
            grassmann_distance(&a, &b),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn covariance_equivalence_dual_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        for _ in 0..20 {
            let d = rng.gen_range(1..=16);
            let n = rng.gen_range(2..=64);
            let x = FeatureMatrix::new(randn_matrix(d, n, &mut rng)).unwrap();
            let params = aggregation_as_covariance(d, n).unwrap();
            let out = aggregation::forward(&x, &params).unwrap();
            let cov = covariance_descriptor(&x);
            let diff = out.pooled[0].sub(cov.matrix()).unwrap().max_abs();
            assert!(diff < 1e-12, "d={d} n={n} diff={diff}");
        }
    }

    #[test]
    fn grassmann_equivalence_full_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let d = rng.gen_range(2..=12);
            let n = rng.gen_range(d..=d + 12);
            let q = rng.gen_range(1..=d);
            let x = FeatureMatrix::new(randn_matrix(d, n, &mut rng)).unwrap();
            let built = aggregation_as_grassmann(&x, q).unwrap();
            assert!(!built.rank_deficient);

            // Eq-chain intermediate: mixing the centered input plus bias must
            // equal mixing the raw input, which must equal the basis itself.
            let out = aggregation::forward(&x, &built.params).unwrap();
            let xw = x.matrix().matmul(&built.params.mix).unwrap();
            assert!(out.mixed.sub(&xw).unwrap().max_abs() < 1e-8);
            assert!(xw.sub(&built.point.basis).unwrap().max_abs() < 1e-8);

            let target = built.point.projector().scale(1.0 / n as f64);
            let num = frobenius_norm(&out.pooled[0].sub(&target).unwrap());
            let den = frobenius_norm(&target);
            assert!(num / den < 1e-8, "d={d} n={n} q={q} rel={}", num / den);
        }
    }

    #[test]
    fn grassmann_equivalence_scaled_orthogonal_rows_full_q() {
        // orthogonal rows with distinct scales, q = d: projector is I
        let x = FeatureMatrix::new(
            Matrix::from_rows(&[
                &[2.0, 0.0, 0.0, 0.0],
                &[0.0, -3.0, 0.0, 0.0],
                &[0.0, 0.0, 0.5, 0.0],
            ])
            .unwrap(),
        )
        .unwrap();
        let (out, flag) = grassmann_via_aggregation(&x, 3).unwrap();
        assert!(!flag);
        let target = Matrix::identity(3).scale(1.0 / 4.0);
        assert!(out.sub(&target).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn grassmann_equivalence_rank_one() {
        // all columns along u = (3,4)/5, q = 1: output is (1/n) uuᵀ
        let u = [0.6, 0.8];
        let cols: Vec<Vec<f64>> = [1.0, -2.0, 0.5]
            .iter()
            .map(|&s| vec![s * u[0], s * u[1]])
            .collect();
        let x = fm_cols(&cols);
        let built = aggregation_as_grassmann(&x, 1).unwrap();
        assert!(!built.rank_deficient);
        let out = aggregation::forward(&x, &built.params).unwrap();
        let mut target = Matrix::zeros(2, 2);
        for a in 0..2 {
            for b in 0..2 {
                target[(a, b)] = u[a] * u[b] / 3.0;
            }
        }
        assert!(out.pooled[0].sub(&target).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn grassmann_rank_deficient_is_flagged() {
        // rank-1 input but q = 2
        let x = fm_cols(&[vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0]]);
        let built = aggregation_as_grassmann(&x, 2).unwrap();
        assert!(built.rank_deficient);
    }

    fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let s = random_symmetric(n, rng);
        sym_eig(&s).unwrap().eigenvectors
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn log_euclidean_metric_axioms(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = 4;
            let a = SpdMatrix::new(random_spd(d, 0.1, 10.0, &mut rng)).unwrap();
            let b = SpdMatrix::new(random_spd(d, 0.1, 10.0, &mut rng)).unwrap();
            let c = SpdMatrix::new(random_spd(d, 0.1, 10.0, &mut rng)).unwrap();
            let dab = log_euclidean_distance(&a, &b).unwrap();
            let dba = log_euclidean_distance(&b, &a).unwrap();
            let dac = log_euclidean_distance(&a, &c).unwrap();
            let dcb = log_euclidean_distance(&c, &b).unwrap();
            prop_assert_eq!(dab, dba);
            prop_assert!(log_euclidean_distance(&a, &a).unwrap() < 1e-12);
            prop_assert!(dab <= dac + dcb + 1e-10);
        }

        #[test]
        fn grassmann_distance_basis_invariant(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = 5;
            let q = 2;
            let xa = FeatureMatrix::new(randn_matrix(d, 8, &mut rng)).unwrap();
            let xb = FeatureMatrix::new(randn_matrix(d, 8, &mut rng)).unwrap();
            let a = grassmann_basis(&xa, q).unwrap();
            let b = grassmann_basis(&xb, q).unwrap();

            let rot = random_orthogonal(q, &mut rng);
            let a_rot = GrassmannPoint {
                basis: a.basis.matmul(&rot).unwrap(),
                ..a.clone()
            };
            let d0 = grassmann_distance(&a, &b).unwrap();
            let d1 = grassmann_distance(&a_rot, &b).unwrap();
            prop_assert!((d0 - d1).abs() < 1e-10);
            prop_assert!(grassmann_distance(&a, &a_rot).unwrap() < 1e-10);
            // metric axioms
            prop_assert_eq!(d0, grassmann_distance(&b, &a).unwrap());
            let c = grassmann_basis(
                &FeatureMatrix::new(randn_matrix(d, 8, &mut rng)).unwrap(), q).unwrap();
            let dac = grassmann_distance(&a, &c).unwrap();
            let dcb = grassmann_distance(&c, &b).unwrap();
            prop_assert!(d0 <= dac + dcb + 1e-10);
        }
    }
}
