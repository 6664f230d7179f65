//! Synthetic set-identification data. Each class is a random low-dimensional
//! subspace of the ambient space; each video draws frames from that subspace
//! plus isotropic noise. Classes therefore differ in second-order structure
//! while every class's mean frame is near zero — exactly the regime where
//! aggregated representations beat mean pooling.

use super::{Dataset, Video};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Generator settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Total classes generated, known and unknown together.
    pub classes: usize,
    /// Dimension of each class's subspace.
    pub subspace_dim: usize,
    /// Ambient frame dimension d.
    pub dim: usize,
    /// Training videos per known class.
    pub videos_per_class: usize,
    /// Enrollment videos per known class.
    pub gallery_videos_per_class: usize,
    /// Test videos per class, known and unknown alike.
    pub probe_videos_per_class: usize,
    /// Inclusive range the per-video frame count is drawn from.
    pub frames_range: (usize, usize),
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
    /// Trailing fraction of classes held out as unknown: they appear only
    /// in the probe set.
    pub unknown_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 10,
            subspace_dim: 3,
            dim: 16,
            videos_per_class: 12,
            gallery_videos_per_class: 2,
            probe_videos_per_class: 4,
            frames_range: (8, 32),
            noise: 0.1,
            unknown_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.dim == 0 {
            return Err(Error::InvalidConfig(
                "classes and dim must be >= 1".into(),
            ));
        }
        if self.subspace_dim == 0 || self.subspace_dim > self.dim {
            return Err(Error::InvalidConfig(format!(
                "subspace_dim must be in 1..={}, got {}",
                self.dim, self.subspace_dim
            )));
        }
        if self.frames_range.0 == 0 || self.frames_range.0 > self.frames_range.1 {
            return Err(Error::InvalidConfig(format!(
                "frames_range must be a nonempty range of positive counts, got {:?}",
                self.frames_range
            )));
        }
        if !(0.0..=1.0).contains(&self.unknown_fraction) {
            return Err(Error::InvalidConfig(format!(
                "unknown_fraction must be in [0, 1], got {}",
                self.unknown_fraction
            )));
        }
        if self.noise < 0.0 || !self.noise.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "noise must be a nonnegative real, got {}",
                self.noise
            )));
        }
        if self.unknown_classes() >= self.classes
            && (self.videos_per_class > 0 || self.gallery_videos_per_class > 0)
        {
            return Err(Error::InvalidConfig(
                "unknown_fraction leaves no known class".into(),
            ));
        }
        Ok(())
    }

    /// Number of trailing classes held out as unknown.
    pub fn unknown_classes(&self) -> usize {
        (self.classes as f64 * self.unknown_fraction).round() as usize
    }

    pub fn known_classes(&self) -> usize {
        self.classes - self.unknown_classes()
    }
}

/// Orthonormal columns spanning a uniformly random s-dimensional subspace,
/// by modified Gram-Schmidt on a Gaussian matrix.
fn random_orthonormal(d: usize, s: usize, rng: &mut ChaCha8Rng) -> Matrix {
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
        // a Gaussian draw is almost surely independent of the span so far
        for i in 0..d {
            basis[(i, j)] = v[i] / norm;
        }
    }
    basis
}

fn class_label(idx: usize) -> String {
    format!("s{idx:04}")
}

/// Generates the three splits. Known classes populate train, gallery, and
/// probe; unknown classes populate only the probe. Bit-identical output for
/// a fixed config.
pub fn synth_generate(cfg: &SynthConfig) -> Result<(Dataset, Dataset, Dataset)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let known = cfg.known_classes();

    let mut train = Dataset::default();
    let mut gallery = Dataset::default();
    let mut probe = Dataset::default();

    for class in 0..cfg.classes {
        let basis = random_orthonormal(cfg.dim, cfg.subspace_dim, &mut rng);
        let label = class_label(class);
        let is_known = class < known;

        let make_video = |rng: &mut ChaCha8Rng| -> Video {
            let n = rng.gen_range(cfg.frames_range.0..=cfg.frames_range.1);
            let frames = (0..n)
                .map(|_| {
                    let alpha: Vec<f64> = (0..cfg.subspace_dim)
                        .map(|_| rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    let mut f = basis.matvec(&alpha).expect("basis is d x s");
                    for v in &mut f {
                        let eps: f64 = rng.sample(StandardNormal);
                        *v += cfg.noise * eps;
                    }
                    f
                })
                .collect();
            Video {
                label: label.clone(),
                frames,
            }
        };

        if is_known {
            for _ in 0..cfg.videos_per_class {
                train.videos.push(make_video(&mut rng));
            }
            for _ in 0..cfg.gallery_videos_per_class {
                gallery.videos.push(make_video(&mut rng));
            }
        }
        for _ in 0..cfg.probe_videos_per_class {
            probe.videos.push(make_video(&mut rng));
        }
    }
    Ok((train, gallery, probe))
}
