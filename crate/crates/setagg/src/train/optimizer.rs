//! SGD with momentum, L2 weight decay, and polynomial learning-rate decay.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Hyper-parameters of the optimizer and batch layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub base_lr: f64,
    /// Exponent of the polynomial decay schedule.
    pub power: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub max_iter: usize,
    /// Videos per minibatch.
    pub batch_videos: usize,
    /// Frames every video is resampled to before aggregation.
    pub frames_per_video: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            base_lr: 0.01,
            power: 0.05,
            momentum: 0.9,
            weight_decay: 0.0005,
            max_iter: 5000,
            batch_videos: 12,
            frames_per_video: 16,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0) || !self.base_lr.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "base_lr must be positive, got {}",
                self.base_lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be >= 1".into()));
        }
        if !self.power.is_finite() || self.power < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "power must be nonnegative, got {}",
                self.power
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "weight_decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        if self.batch_videos == 0 || self.frames_per_video == 0 {
            return Err(Error::InvalidConfig(
                "batch_videos and frames_per_video must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Copy with a different iteration budget; convenient for per-stage
    /// overrides.
    pub fn with_max_iter(&self, max_iter: usize) -> Self {
        Self { max_iter, ..self.clone() }
    }
}

/// Polynomial decay: `base_lr * (1 - iter/max_iter)^power`.
pub fn poly_lr(iter: usize, cfg: &OptimizerConfig) -> Result<f64> {
    cfg.validate()?;
    if iter > cfg.max_iter {
        return Err(Error::InvalidConfig(format!(
            "schedule iteration {iter} exceeds max_iter {}",
            cfg.max_iter
        )));
    }
    let frac = 1.0 - iter as f64 / cfg.max_iter as f64;
    Ok(cfg.base_lr * frac.powf(cfg.power))
}

/// One momentum step on a flat tensor:
/// `v <- momentum*v - lr*(g + weight_decay*w); w <- w + v`.
///
/// `lr` comes from [`poly_lr`] at the caller's current iteration.
pub fn sgd_momentum_step(
    params: &mut [f64],
    grads: &[f64],
    velocity: &mut [f64],
    lr: f64,
    cfg: &OptimizerConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::ShapeMismatch {
            context: "sgd_momentum_step",
            expected: format!("{} elements", params.len()),
            found: format!("grads {}, velocity {}", grads.len(), velocity.len()),
        });
    }
    for g in grads {
        if !g.is_finite() {
            return Err(Error::NonFinite("sgd_momentum_step: gradient"));
        }
    }
    for ((w, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = cfg.momentum * *v - lr * (g + cfg.weight_decay * *w);
        *w += *v;
    }
    Ok(())
}

/// Velocity buffers for a list of tensors, zero-initialized to match shapes.
#[derive(Clone, Debug, Default)]
pub struct Velocities {
    bufs: Vec<Vec<f64>>,
}

impl Velocities {
    pub fn for_shapes(lens: &[usize]) -> Self {
        Self {
            bufs: lens.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn buf(&mut self, i: usize) -> &mut [f64] {
        &mut self.bufs[i]
    }
}
