//! The fixed-length contract: videos of any frame count map to
//! representations of identical shape, so one classifier serves them all.
//!
//! Inputs longer than the training frame count are uniformly subsampled;
//! shorter ones are cyclically repeated. Nothing about the model needs to be
//! reconfigured per input.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use setagg::frames::FrameEmbedder;
use setagg::train::ModelBundle;

fn main() -> setagg::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let d = 6;
    let model = ModelBundle::init(
        FrameEmbedder::passthrough(d),
        16,              // training frame count
        16,              // mixed outputs
        2,               // two pooled matrices
        &[2 * d * d, 48, 24],
        vec!["a".into(), "b".into(), "c".into()],
        None,
        &mut rng,
    )?;

    println!("model expects {} frames internally", model.frames_per_video());
    let mut shapes = Vec::new();
    for n in [8usize, 16, 32] {
        let frames: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let pooled = model.representation(&frames)?;
        let (logits, _) = model.forward_video(&frames)?;
        let shape: Vec<(usize, usize)> = pooled.iter().map(|m| (m.rows(), m.cols())).collect();
        println!(
            "  {n:>2}-frame video -> {} pooled matrices of {}x{}, {} logits",
            pooled.len(),
            shape[0].0,
            shape[0].1,
            logits.len()
        );
        shapes.push(shape);
    }
    assert!(shapes.windows(2).all(|w| w[0] == w[1]));
    println!("all representations share one shape; the classifier never changes");
    Ok(())
}
