//! Gradient check of the aggregation block: analytic gradients of a scalar
//! loss with respect to the input frames, the mixing matrix, and the bias,
//! compared against central finite differences.
//!
//! The loss is the summed squared Frobenius norm of the pooled outputs, so
//! the upstream gradient of pooled matrix C_i is simply 2*C_i.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use setagg::aggregation::{self, AggregationParams, FeatureMatrix};
use setagg::Matrix;

const STEP: f64 = 1e-5;

fn loss(x: &Matrix, mix: &Matrix, bias: &Matrix, groups: usize) -> setagg::Result<f64> {
    let params = AggregationParams::new(mix.clone(), bias.clone(), groups)?;
    let out = aggregation::forward(&FeatureMatrix::new(x.clone())?, &params)?;
    Ok(out
        .pooled
        .iter()
        .map(|c| c.data().iter().map(|v| v * v).sum::<f64>())
        .sum())
}

fn main() -> setagg::Result<()> {
    let (d, n, q, t) = (3, 8, 4, 2);
    println!("aggregation block: {d}-dim features, {n} frames, {q} mixed outputs, {t} pooled matrices");

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut randn = |rows: usize, cols: usize| {
        let mut m = Matrix::zeros(rows, cols);
        for v in m.data_mut() {
            *v = rng.sample::<f64, _>(StandardNormal);
        }
        m
    };
    let x = randn(d, n);
    let mix = randn(n, q);
    let bias = randn(d, q);

    let params = AggregationParams::new(mix.clone(), bias.clone(), t)?;
    let out = aggregation::forward(&FeatureMatrix::new(x.clone())?, &params)?;
    let upstream: Vec<Matrix> = out.pooled.iter().map(|c| c.scale(2.0)).collect();
    let grads = aggregation::backward(&upstream, &out, &params)?;

    for (name, base, analytic) in [
        ("input frames X", &x, &grads.input),
        ("mixing matrix W", &mix, &grads.mix),
        ("bias b", &bias, &grads.bias),
    ] {
        let mut worst = 0.0f64;
        for r in 0..base.rows() {
            for c in 0..base.cols() {
                let mut plus = base.clone();
                plus[(r, c)] += STEP;
                let mut minus = base.clone();
                minus[(r, c)] -= STEP;
                let (lp, lm) = if std::ptr::eq(base, &x) {
                    (loss(&plus, &mix, &bias, t)?, loss(&minus, &mix, &bias, t)?)
                } else if std::ptr::eq(base, &mix) {
                    (loss(&x, &plus, &bias, t)?, loss(&x, &minus, &bias, t)?)
                } else {
                    (loss(&x, &mix, &plus, t)?, loss(&x, &mix, &minus, t)?)
                };
                let numeric = (lp - lm) / (2.0 * STEP);
                let exact = analytic[(r, c)];
                let rel = (exact - numeric).abs() / exact.abs().max(numeric.abs()).max(1.0);
                worst = worst.max(rel);
            }
        }
        println!("  {name:<16} worst relative error {worst:.3e}");
        assert!(worst < 1e-5, "{name} gradient mismatch");
    }
    println!("analytic gradients match finite differences to < 1e-5");
    Ok(())
}
