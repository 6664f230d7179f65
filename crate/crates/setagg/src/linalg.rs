//! Dense real matrix kernel: symmetric eigendecomposition, matrix log/exp,
//! Moore-Penrose pseudo-inverse, and norms.
//!
//! Everything works on plain `f64` matrices in row-major layout and is
//! deterministic for a fixed input. Matrices are immutable values; all
//! operations return fresh allocations.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Index, IndexMut};

/// Relative asymmetry tolerated before an input is rejected as non-symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenvalues at or below this floor are a domain error for [`matrix_log`].
/// No silent clamping happens here; callers that want regularization must
/// apply it explicitly before taking the log.
pub const SPD_EIG_FLOOR: f64 = 1e-12;

const JACOBI_MAX_SWEEPS: usize = 64;

/// Dense row-major `f64` matrix. Entry `(r, c)` lives at `data[r * cols + c]`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, checking length and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                context: "Matrix::new",
                expected: format!("{} values for {rows}x{cols}", rows * cols),
                found: format!("{}", data.len()),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("Matrix::new"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from slices of rows. All rows must have equal length.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(Error::EmptyInput("Matrix::from_rows"));
        }
        let c = rows[0].len();
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::ShapeMismatch {
                context: "Matrix::from_rows",
                expected: format!("rows of length {c}"),
                found: "ragged rows".to_string(),
            });
        }
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            data.extend_from_slice(row);
        }
        Self::new(r, c, data)
    }

    /// Builds a diagonal matrix from the given entries.
    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in entries.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix column by column.
    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        if cols.is_empty() {
            return Err(Error::EmptyInput("Matrix::from_columns"));
        }
        let rows = cols[0].len();
        if cols.iter().any(|c| c.len() != rows) {
            return Err(Error::ShapeMismatch {
                context: "Matrix::from_columns",
                expected: format!("columns of length {rows}"),
                found: "ragged columns".to_string(),
            });
        }
        let mut m = Self::zeros(rows, cols.len());
        for (j, col) in cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        if !m.data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("Matrix::from_columns"));
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch {
                context: "matmul",
                expected: format!("{} rows on the right", self.cols),
                found: format!("{}x{}", other.rows, other.cols),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let lhs = k * other.cols;
                let dst = i * other.cols;
                for j in 0..other.cols {
                    out.data[dst + j] += a * other.data[lhs + j];
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(Error::ShapeMismatch {
                context: "matvec",
                expected: format!("vector of length {}", self.cols),
                found: format!("{}", v.len()),
            });
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    fn zip_with(&self, other: &Matrix, context: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::ShapeMismatch {
                context,
                expected: format!("{}x{}", self.rows, self.cols),
                found: format!("{}x{}", other.rows, other.cols),
            });
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute difference to the transpose, relative to the largest entry.
    pub fn relative_asymmetry(&self) -> f64 {
        debug_assert!(self.is_square());
        let mut asym: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                asym = asym.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        let scale = self.max_abs();
        if scale == 0.0 {
            0.0
        } else {
            asym / scale
        }
    }

    /// `(M + Mᵀ) / 2`, exact for already symmetric input.
    pub fn symmetrized(&self) -> Matrix {
        debug_assert!(self.is_square());
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// Eigendecomposition of a symmetric matrix: `C = U diag(λ) Uᵀ` with
/// eigenvalues sorted in descending order and orthonormal eigenvector columns.
#[derive(Clone, Debug)]
pub struct EigDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

impl EigDecomposition {
    /// Rebuilds `U diag(λ) Uᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let u = &self.eigenvectors;
        let n = u.rows();
        let mut out = Matrix::zeros(n, n);
        for k in 0..self.eigenvalues.len() {
            let lam = self.eigenvalues[k];
            for i in 0..n {
                let uik = u[(i, k)] * lam;
                for j in 0..n {
                    out[(i, j)] += uik * u[(j, k)];
                }
            }
        }
        out
    }
}

/// Validates that `c` is square, finite, and symmetric within
/// [`SYMMETRY_TOL`] relative asymmetry.
pub fn check_symmetric(c: &Matrix, context: &'static str) -> Result<()> {
    if !c.is_square() {
        return Err(Error::NotSquare {
            rows: c.rows(),
            cols: c.cols(),
        });
    }
    if !c.is_finite() {
        return Err(Error::NonFinite(context));
    }
    let asym = c.relative_asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric {
            asymmetry: asym,
            limit: SYMMETRY_TOL,
        });
    }
    Ok(())
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Eigenvalues come back in descending order. Each eigenvector is
/// sign-normalized so its first non-negligible component is positive,
/// which makes outputs reproducible.
pub fn sym_eig(c: &Matrix) -> Result<EigDecomposition> {
    check_symmetric(c, "sym_eig")?;
    let n = c.rows();
    let mut a = c.symmetrized();
    let mut v = Matrix::identity(n);

    let fro = frobenius_norm(&a);
    let stop = 1e-15 * fro.max(f64::MIN_POSITIVE);

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if (2.0 * off).sqrt() <= stop {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                // Rotation angle that zeroes a_pq (Jacobi rotation).
                let theta = 0.5 * (a[(q, q)] - a[(p, p)]) / apq;
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let cos = 1.0 / (1.0 + t * t).sqrt();
                let sin = t * cos;

                let app = a[(p, p)];
                let aqq = a[(q, q)];
                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    let new_p = cos * akp - sin * akq;
                    let new_q = sin * akp + cos * akq;
                    a[(k, p)] = new_p;
                    a[(p, k)] = new_p;
                    a[(k, q)] = new_q;
                    a[(q, k)] = new_q;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = cos * vkp - sin * vkq;
                    v[(k, q)] = sin * vkp + cos * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::EigenNonConvergence { size: n });
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).unwrap());

    let mut eigenvalues = Vec::with_capacity(n);
    let mut eigenvectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvalues.push(diag[src]);
        let col = v.column(src);
        let peak = col.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let lead = col.iter().find(|x| x.abs() > 1e-12 * peak).copied();
        let flip = matches!(lead, Some(x) if x < 0.0);
        for i in 0..n {
            eigenvectors[(i, dst)] = if flip { -col[i] } else { col[i] };
        }
    }
    Ok(EigDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Applies a scalar function to the spectrum of a symmetric matrix:
/// `U diag(f(λ)) Uᵀ`. The result is explicitly symmetrized.
fn spectral_map(c: &Matrix, f: impl Fn(f64) -> Result<f64>) -> Result<Matrix> {
    let eig = sym_eig(c)?;
    let mapped: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| f(l))
        .collect::<Result<_>>()?;
    let rebuilt = EigDecomposition {
        eigenvalues: mapped,
        eigenvectors: eig.eigenvectors,
    }
    .reconstruct();
    Ok(rebuilt.symmetrized())
}

/// Matrix logarithm of a strictly positive definite matrix:
/// `U diag(ln λ) Uᵀ`. Eigenvalues at or below [`SPD_EIG_FLOOR`] are rejected.
pub fn matrix_log(c: &Matrix) -> Result<Matrix> {
    spectral_map(c, |l| {
        if l <= SPD_EIG_FLOOR {
            Err(Error::NotPositiveDefinite {
                eigenvalue: l,
                threshold: SPD_EIG_FLOOR,
            })
        } else {
            Ok(l.ln())
        }
    })
}

/// Matrix exponential of a symmetric matrix: `U diag(e^λ) Uᵀ`.
/// Always produces a symmetric positive definite result; `exp(0) = I`.
pub fn matrix_exp(s: &Matrix) -> Result<Matrix> {
    spectral_map(s, |l| Ok(l.exp()))
}

/// Moore-Penrose pseudo-inverse via one-sided Jacobi SVD.
///
/// Singular values below `max(rows, cols) * eps * σ_max` are treated as zero,
/// so exactly rank-deficient inputs invert cleanly on their range.
pub fn pseudo_inverse(x: &Matrix) -> Result<Matrix> {
    if !x.is_finite() {
        return Err(Error::NonFinite("pseudo_inverse"));
    }
    if x.rows() < x.cols() {
        return Ok(pseudo_inverse(&x.transpose())?.transpose());
    }
    let m = x.rows();
    let n = x.cols();

    // Orthogonalize the columns of w by plane rotations; v accumulates them,
    // preserving x * v = w throughout.
    let mut w = x.clone();
    let mut v = Matrix::identity(n);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..m {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    alpha += wp * wp;
                    beta += wq * wq;
                    gamma += wp * wq;
                }
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cos = 1.0 / (1.0 + t * t).sqrt();
                let sin = cos * t;
                for i in 0..m {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    w[(i, p)] = cos * wp - sin * wq;
                    w[(i, q)] = sin * wp + cos * wq;
                }
                for i in 0..n {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = cos * vp - sin * vq;
                    v[(i, q)] = sin * vp + cos * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let sq_norms: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| w[(i, j)] * w[(i, j)]).sum())
        .collect();
    let sigma_max = sq_norms.iter().fold(0.0_f64, |a, &b| a.max(b)).sqrt();
    let cutoff = sigma_max * (m.max(n) as f64) * f64::EPSILON;

    // x† = v diag(1/σ²) wᵀ over the numerically nonzero spectrum.
    let mut pinv = Matrix::zeros(n, m);
    for j in 0..n {
        let sigma = sq_norms[j].sqrt();
        if sigma <= cutoff {
            continue;
        }
        let inv_sq = 1.0 / sq_norms[j];
        for r in 0..n {
            let vr = v[(r, j)] * inv_sq;
            if vr == 0.0 {
                continue;
            }
            for c in 0..m {
                pinv[(r, c)] += vr * w[(c, j)];
            }
        }
    }
    Ok(pinv)
}

/// Square root of the sum of squared entries.
pub fn frobenius_norm(m: &Matrix) -> f64 {
    m.data().iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Serializes a matrix in the plain text exchange format: first line
/// `rows cols`, then one line per row of space-separated decimals with
/// 17 significant digits (enough to round-trip `f64` exactly).
pub fn write_matrix_text(m: &Matrix) -> String {
    let mut out = format!("{} {}\n", m.rows(), m.cols());
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Parses the text format produced by [`write_matrix_text`].
pub fn parse_matrix_text(text: &str) -> Result<Matrix> {
    let mut tokens = text.split_whitespace();
    let rows: usize = tokens
        .next()
        .ok_or_else(|| Error::Parse("missing row count".into()))?
        .parse()
        .map_err(|e| Error::Parse(format!("row count: {e}")))?;
    let cols: usize = tokens
        .next()
        .ok_or_else(|| Error::Parse("missing column count".into()))?
        .parse()
        .map_err(|e| Error::Parse(format!("column count: {e}")))?;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let tok = tokens
            .next()
            .ok_or_else(|| Error::Parse(format!("expected {} entries", rows * cols)))?;
        let v: f64 = tok
            .parse()
            .map_err(|e| Error::Parse(format!("bad entry {tok:?}: {e}")))?;
        data.push(v);
    }
    if tokens.next().is_some() {
        return Err(Error::Parse(format!(
            "trailing data after {} entries",
            rows * cols
        )));
    }
    Matrix::new(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{randn_matrix, random_spd, random_symmetric};
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sym_eig_identity() {
        let eig = sym_eig(&Matrix::identity(3)).unwrap();
        for l in &eig.eigenvalues {
            assert!((l - 1.0).abs() < 1e-14);
        }
        let u = &eig.eigenvectors;
        let gram = u.transpose().matmul(u).unwrap();
        assert!(frobenius_norm(&gram.sub(&Matrix::identity(3)).unwrap()) < 1e-12);
    }

    #[test]
    fn sym_eig_diagonal_sorted_descending() {
        let eig = sym_eig(&Matrix::diag(&[2.0, 5.0])).unwrap();
        assert_eq!(eig.eigenvalues, vec![5.0, 2.0]);
        // sign convention picks +e2, +e1
        assert!((eig.eigenvectors[(1, 0)] - 1.0).abs() < 1e-14);
        assert!((eig.eigenvectors[(0, 1)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sym_eig_reconstructs_random_5x5() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = random_symmetric(5, &mut rng);
        let eig = sym_eig(&c).unwrap();
        let resid = frobenius_norm(&eig.reconstruct().sub(&c).unwrap());
        assert!(resid < 1e-10 * frobenius_norm(&c).max(1.0), "residual {resid}");
    }

    #[test]
    fn sym_eig_rejects_bad_input() {
        let rect = Matrix::zeros(2, 3);
        assert!(matches!(sym_eig(&rect), Err(Error::NotSquare { .. })));
        let asym = Matrix::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&asym), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn matrix_log_identity_is_zero() {
        let l = matrix_log(&Matrix::identity(4)).unwrap();
        assert!(l.max_abs() < 1e-14);
    }

    #[test]
    fn matrix_log_diagonal() {
        let e = std::f64::consts::E;
        let l = matrix_log(&Matrix::diag(&[e, e * e])).unwrap();
        assert!((l[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((l[(1, 1)] - 2.0).abs() < 1e-12);
        assert!(l[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn matrix_log_reports_offending_eigenvalue() {
        let c = Matrix::diag(&[1.0, -2.0]);
        match matrix_log(&c) {
            Err(Error::NotPositiveDefinite { eigenvalue, .. }) => {
                assert!((eigenvalue + 2.0).abs() < 1e-12)
            }
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn matrix_exp_zero_is_identity() {
        let e = matrix_exp(&Matrix::zeros(3, 3)).unwrap();
        assert!(frobenius_norm(&e.sub(&Matrix::identity(3)).unwrap()) < 1e-14);
    }

    #[test]
    fn matrix_exp_diagonal() {
        let e = std::f64::consts::E;
        let m = matrix_exp(&Matrix::diag(&[1.0, 2.0])).unwrap();
        assert!((m[(0, 0)] - e).abs() < 1e-12);
        assert!((m[(1, 1)] - e * e).abs() < 1e-11);
    }

    #[test]
    fn matrix_exp_rejects_asymmetric() {
        let asym = Matrix::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]).unwrap();
        assert!(matches!(matrix_exp(&asym), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn log_exp_round_trip_spd_5x5() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = random_spd(5, 0.1, 10.0, &mut rng);
        let back = matrix_exp(&matrix_log(&c).unwrap()).unwrap();
        let rel = frobenius_norm(&back.sub(&c).unwrap()) / frobenius_norm(&c);
        assert!(rel < 1e-10, "relative error {rel}");
    }

    #[test]
    fn exp_log_round_trip_symmetric_4x4() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let s = random_symmetric(4, &mut rng);
        let back = matrix_log(&matrix_exp(&s).unwrap()).unwrap();
        let rel = frobenius_norm(&back.sub(&s).unwrap()) / frobenius_norm(&s).max(1.0);
        assert!(rel < 1e-10, "relative error {rel}");
    }

    fn penrose_residuals(x: &Matrix, p: &Matrix) -> [f64; 4] {
        let xp = x.matmul(p).unwrap();
        let px = p.matmul(x).unwrap();
        [
            frobenius_norm(&xp.matmul(x).unwrap().sub(x).unwrap()),
            frobenius_norm(&px.matmul(p).unwrap().sub(p).unwrap()),
            frobenius_norm(&xp.sub(&xp.transpose()).unwrap()),
            frobenius_norm(&px.sub(&px.transpose()).unwrap()),
        ]
    }

    #[test]
    fn pseudo_inverse_identity() {
        let p = pseudo_inverse(&Matrix::identity(3)).unwrap();
        assert!(frobenius_norm(&p.sub(&Matrix::identity(3)).unwrap()) < 1e-12);
    }

    #[test]
    fn pseudo_inverse_singular_diagonal() {
        let p = pseudo_inverse(&Matrix::diag(&[2.0, 0.0])).unwrap();
        assert!((p[(0, 0)] - 0.5).abs() < 1e-14);
        assert_eq!(p[(1, 1)], 0.0);
    }

    #[test]
    fn pseudo_inverse_penrose_conditions_3x5() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = randn_matrix(3, 5, &mut rng);
        let p = pseudo_inverse(&x).unwrap();
        assert_eq!((p.rows(), p.cols()), (5, 3));
        for r in penrose_residuals(&x, &p) {
            assert!(r < 1e-8, "penrose residual {r}");
        }
    }

    #[test]
    fn pseudo_inverse_penrose_up_to_64() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(m, n) in &[(16usize, 16usize), (64, 40), (40, 64), (64, 64)] {
            let x = randn_matrix(m, n, &mut rng);
            let p = pseudo_inverse(&x).unwrap();
            let scale = frobenius_norm(&x).max(1.0);
            for r in penrose_residuals(&x, &p) {
                assert!(r / scale < 1e-8, "penrose residual {r} for {m}x{n}");
            }
        }
    }

    #[test]
    fn frobenius_norm_examples() {
        assert_eq!(frobenius_norm(&Matrix::zeros(3, 2)), 0.0);
        assert!((frobenius_norm(&Matrix::identity(2)) - 2.0_f64.sqrt()).abs() < 1e-15);
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]).unwrap();
        // scalar-loop oracle: sqrt(1 + 4 + 4 + 16) = 5
        let mut acc = 0.0;
        for &v in m.data() {
            acc += v * v;
        }
        assert_eq!(acc.sqrt(), 5.0);
        assert_eq!(frobenius_norm(&m), 5.0);
    }

    #[test]
    fn matrix_text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = randn_matrix(4, 3, &mut rng);
        let text = write_matrix_text(&m);
        let back = parse_matrix_text(&text).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn matrix_text_rejects_garbage() {
        assert!(parse_matrix_text("2 2\n1 2 3").is_err());
        assert!(parse_matrix_text("2 2\n1 2 3 x").is_err());
        assert!(parse_matrix_text("2 2\n1 2 3 4 5").is_err());
        assert!(parse_matrix_text("").is_err());
    }

    #[test]
    fn matrix_new_validates() {
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::new(1, 2, vec![f64::NAN, 0.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn eig_reconstruction_holds(seed in 0u64..1000, n in 1usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let scale = 10f64.powi((seed % 7) as i32 - 3);
            let c = random_symmetric(n, &mut rng).scale(scale);
            let eig = sym_eig(&c).unwrap();
            let resid = frobenius_norm(&eig.reconstruct().sub(&c).unwrap());
            prop_assert!(resid <= 1e-10 * frobenius_norm(&c).max(f64::MIN_POSITIVE));
            let gram = eig.eigenvectors.transpose().matmul(&eig.eigenvectors).unwrap();
            prop_assert!(frobenius_norm(&gram.sub(&Matrix::identity(n)).unwrap()) < 1e-10);
        }

        #[test]
        fn log_exp_mutual_inverses(seed in 0u64..1000, n in 1usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = random_spd(n, 1e-6, 1e6, &mut rng);
            let back = matrix_exp(&matrix_log(&c).unwrap()).unwrap();
            let rel = frobenius_norm(&back.sub(&c).unwrap()) / frobenius_norm(&c);
            prop_assert!(rel <= 1e-9, "relative error {}", rel);
        }

        #[test]
        fn penrose_conditions_hold(seed in 0u64..1000, m in 1usize..9, n in 1usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = randn_matrix(m, n, &mut rng);
            let p = pseudo_inverse(&x).unwrap();
            let scale = frobenius_norm(&x).max(1.0);
            for r in penrose_residuals(&x, &p) {
                prop_assert!(r / scale < 1e-8);
            }
        }
    }
}
