//! Auto-encoder pretraining of the mapping unit. The mapping MLP that sits
//! between the aggregation block and the classifier is first trained to
//! reconstruct flattened SPD descriptors through a bottleneck; the encoder
//! half then initializes the mapping for supervised fine-tuning.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use setagg::aggregation::FeatureMatrix;
use setagg::manifold::covariance_descriptor;
use setagg::mapping::{pretrain_autoencoder, PretrainConfig};
use setagg::train::OptimizerConfig;

fn main() -> setagg::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (d, n_frames, samples) = (4, 24, 200);

    // flattened covariance descriptors of random Gaussian "videos"
    let mut data = Vec::with_capacity(samples);
    for _ in 0..samples {
        let frames: Vec<Vec<f64>> = (0..n_frames)
            .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let c = covariance_descriptor(&FeatureMatrix::from_frames(&frames)?);
        data.push(c.matrix().data().to_vec());
    }

    let sizes = [d * d, 4 * d * d, d * d]; // bottleneck equal to the input
    let opt = OptimizerConfig {
        max_iter: 2000,
        base_lr: 0.01,
        seed: 1,
        ..Default::default()
    };
    let cfg = PretrainConfig::default();
    let pre = pretrain_autoencoder(&data, &sizes, &cfg, &opt, &mut rng)?;

    let h = &pre.loss_history;
    println!("reconstruction + weight-decay loss over {} iterations:", opt.max_iter);
    for i in [0, 10, 50, 100, 500, 1000, 2000] {
        println!("  iter {i:>5}: {:.6}", h[i]);
    }
    let (initial, last) = (h[0], *h.last().unwrap());
    println!("final/initial = {:.4}", last / initial);
    assert!(last < 0.1 * initial, "pretraining should cut the loss by 10x");
    println!(
        "encoder: {} -> {} -> {} (decoder mirrored)",
        sizes[0], sizes[1], sizes[2]
    );
    Ok(())
}
