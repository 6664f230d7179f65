//! Manifold metrics on set descriptors: covariance matrices compared with
//! the log-Euclidean distance, and principal subspaces compared with the
//! Grassmann (projection) distance.
//!
//! Two videos of the same "identity" (frames drawn from the same subspace)
//! land close under both metrics; a different identity lands far away.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use setagg::aggregation::FeatureMatrix;
use setagg::manifold::{
    covariance_descriptor, grassmann_basis, grassmann_distance, log_euclidean_distance,
};
use setagg::Matrix;

/// Frames spanning a fixed 2-dim subspace of R^6, with small noise.
fn video(basis: &Matrix, n: usize, noise: f64, rng: &mut ChaCha8Rng) -> FeatureMatrix {
    let frames: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let alpha: Vec<f64> = (0..basis.cols())
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let mut f = basis.matvec(&alpha).unwrap();
            for v in &mut f {
                let eps: f64 = rng.sample(StandardNormal);
                *v += noise * eps;
            }
            f
        })
        .collect();
    FeatureMatrix::from_frames(&frames).unwrap()
}

fn orthonormal(d: usize, s: usize, rng: &mut ChaCha8Rng) -> Matrix {
    // Gram-Schmidt on Gaussian columns
    let mut basis = Matrix::zeros(d, s);
    for j in 0..s {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for k in 0..j {
            let dot: f64 = (0..d).map(|i| v[i] * basis[(i, k)]).sum();
            for i in 0..d {
                v[i] -= dot * basis[(i, k)];
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for i in 0..d {
            basis[(i, j)] = v[i] / norm;
        }
    }
    basis
}

fn main() -> setagg::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (d, s) = (6, 2);
    let basis_a = orthonormal(d, s, &mut rng);
    let basis_b = orthonormal(d, s, &mut rng);

    let a1 = video(&basis_a, 40, 0.05, &mut rng);
    let a2 = video(&basis_a, 64, 0.05, &mut rng);
    let b1 = video(&basis_b, 48, 0.05, &mut rng);

    // second-order descriptor: the covariance matrix, an SPD point
    let (ca1, ca2, cb1) = (
        covariance_descriptor(&a1),
        covariance_descriptor(&a2),
        covariance_descriptor(&b1),
    );
    let within = log_euclidean_distance(&ca1, &ca2)?;
    let between = log_euclidean_distance(&ca1, &cb1)?;
    println!("log-Euclidean distance between covariance descriptors");
    println!("  same identity      {within:.4}");
    println!("  different identity {between:.4}");
    assert!(within < between);

    // subspace descriptor: the dominant q-dim subspace, a Grassmann point
    let (ga1, ga2, gb1) = (
        grassmann_basis(&a1, s)?,
        grassmann_basis(&a2, s)?,
        grassmann_basis(&b1, s)?,
    );
    let within = grassmann_distance(&ga1, &ga2)?;
    let between = grassmann_distance(&ga1, &gb1)?;
    println!("Grassmann distance between dominant {s}-dim subspaces");
    println!("  same identity      {within:.4}");
    println!("  different identity {between:.4}");
    assert!(within < between);

    println!("captured spectral mass of the first subspace: {:.4}", ga1.captured_mass);
    Ok(())
}
