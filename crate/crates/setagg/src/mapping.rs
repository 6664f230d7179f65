//! The mapping unit: a small MLP applied to flattened aggregation outputs,
//! initialized by auto-encoder pretraining so the fine-tuning stage starts
//! from a reconstruction-faithful embedding.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::train::optimizer::{poly_lr, sgd_momentum_step, OptimizerConfig};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Element-wise nonlinearity applied after each affine layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative as a function of the pre-activation.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 - s)
            }
            Activation::Tanh => 1.0 - x.tanh().powi(2),
        }
    }
}

/// One affine layer plus nonlinearity: `out = τ(W z + b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `out_dim x in_dim`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }
}

/// A stack of dense layers with chained dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
}

/// Per-layer intermediates kept by [`Mlp::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Activation entering each layer; `inputs[0]` is the network input.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation `W z + b` of each layer.
    preacts: Vec<Vec<f64>>,
}

/// Gradients for one layer, shaped like the layer itself.
#[derive(Clone, Debug)]
pub struct LayerGrads {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::EmptyInput("Mlp::new"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(Error::ShapeMismatch {
                    context: "Mlp::new",
                    expected: format!("bias of length {} in layer {i}", l.out_dim()),
                    found: format!("{}", l.bias.len()),
                });
            }
            if !l.weights.is_finite() || l.bias.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("Mlp::new"));
            }
            if i > 0 && layers[i - 1].out_dim() != l.in_dim() {
                return Err(Error::ShapeMismatch {
                    context: "Mlp::new",
                    expected: format!("layer {i} input {}", layers[i - 1].out_dim()),
                    found: format!("{}", l.in_dim()),
                });
            }
        }
        Ok(Self { layers })
    }

    /// Weights ~ N(0, 2/fan_in), zero biases. `sizes` lists the input
    /// dimension followed by each layer's output dimension; `activations`
    /// has one entry per layer.
    pub fn he_init(
        sizes: &[usize],
        activations: &[Activation],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if sizes.len() < 2 || activations.len() != sizes.len() - 1 {
            return Err(Error::InvalidConfig(format!(
                "he_init needs >= 2 sizes and one activation per layer, got {} sizes and {} activations",
                sizes.len(),
                activations.len()
            )));
        }
        let layers = sizes
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let std = (2.0 / fan_in as f64).sqrt();
                let mut weights = Matrix::zeros(fan_out, fan_in);
                for v in weights.data_mut() {
                    let eps: f64 = rng.sample(StandardNormal);
                    *v = std * eps;
                }
                DenseLayer {
                    weights,
                    bias: vec![0.0; fan_out],
                    activation,
                }
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("nonempty").out_dim()
    }

    /// Flat sizes of every parameter tensor, weights then bias per layer;
    /// matches the gradient layout of [`Mlp::backward`].
    pub fn param_shapes(&self) -> Vec<usize> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.data().len(), l.bias.len()])
            .collect()
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if input.len() != self.in_dim() {
            return Err(Error::ShapeMismatch {
                context: "Mlp::forward",
                expected: format!("input of length {}", self.in_dim()),
                found: format!("{}", input.len()),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut z = input.to_vec();
        for layer in &self.layers {
            let mut pre = layer.weights.matvec(&z)?;
            for (p, b) in pre.iter_mut().zip(&layer.bias) {
                *p += b;
            }
            inputs.push(z);
            z = pre.iter().map(|&v| layer.activation.apply(v)).collect();
            preacts.push(pre);
        }
        Ok((z, ForwardCache { inputs, preacts }))
    }

    /// Forward without keeping the cache.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.0)
    }

    /// Exact gradients of a scalar loss given its gradient at the output.
    /// Returns the gradient at the input and one [`LayerGrads`] per layer.
    pub fn backward(
        &self,
        out_grad: &[f64],
        cache: &ForwardCache,
    ) -> Result<(Vec<f64>, Vec<LayerGrads>)> {
        if out_grad.len() != self.out_dim() {
            return Err(Error::ShapeMismatch {
                context: "Mlp::backward",
                expected: format!("gradient of length {}", self.out_dim()),
                found: format!("{}", out_grad.len()),
            });
        }
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::ShapeMismatch {
                context: "Mlp::backward",
                expected: format!("cache for {} layers", self.layers.len()),
                found: format!("{}", cache.inputs.len()),
            });
        }
        let mut grads = vec![
            LayerGrads {
                weights: Matrix::zeros(1, 1),
                bias: Vec::new(),
            };
            self.layers.len()
        ];
        let mut g = out_grad.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let pre = &cache.preacts[i];
            let input = &cache.inputs[i];
            if pre.len() != layer.out_dim() || input.len() != layer.in_dim() {
                return Err(Error::ShapeMismatch {
                    context: "Mlp::backward",
                    expected: format!("cache entry {}x{}", layer.out_dim(), layer.in_dim()),
                    found: format!("{}x{}", pre.len(), input.len()),
                });
            }
            let gz: Vec<f64> = g
                .iter()
                .zip(pre)
                .map(|(&go, &p)| go * layer.activation.derivative(p))
                .collect();
            let mut gw = Matrix::zeros(layer.out_dim(), layer.in_dim());
            for r in 0..layer.out_dim() {
                for c in 0..layer.in_dim() {
                    gw[(r, c)] = gz[r] * input[c];
                }
            }
            g = layer.weights.transpose().matvec(&gz)?;
            grads[i] = LayerGrads {
                weights: gw,
                bias: gz,
            };
        }
        Ok((g, grads))
    }
}

/// Accumulates per-sample layer gradients into a running sum.
pub fn accumulate_grads(acc: &mut Vec<LayerGrads>, grads: &[LayerGrads]) -> Result<()> {
    if acc.is_empty() {
        acc.extend(grads.iter().cloned());
        return Ok(());
    }
    if acc.len() != grads.len() {
        return Err(Error::ShapeMismatch {
            context: "accumulate_grads",
            expected: format!("{} layers", acc.len()),
            found: format!("{}", grads.len()),
        });
    }
    for (a, g) in acc.iter_mut().zip(grads) {
        a.weights = a.weights.add(&g.weights)?;
        for (x, y) in a.bias.iter_mut().zip(&g.bias) {
            *x += y;
        }
    }
    Ok(())
}

/// Scales every accumulated gradient tensor in place.
pub fn scale_grads(grads: &mut [LayerGrads], s: f64) {
    for g in grads {
        for v in g.weights.data_mut() {
            *v *= s;
        }
        for v in &mut g.bias {
            *v *= s;
        }
    }
}

/// Flattens matrices row-major and concatenates them; the vector form fed
/// to the mapping unit. Symmetric redundancy is kept deliberately — no
/// half-vectorization.
pub fn flatten_mats(mats: &[Matrix]) -> Vec<f64> {
    let mut out = Vec::with_capacity(mats.iter().map(|m| m.data().len()).sum());
    for m in mats {
        out.extend_from_slice(m.data());
    }
    out
}

/// Auto-encoder pretraining settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    /// Weight-decay coefficient of the reconstruction objective. Applied
    /// inside the loss to every weight matrix of both encoder and decoder;
    /// the optimizer's own `weight_decay` is not applied on top during
    /// pretraining.
    pub eta: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { eta: 0.0005 }
    }
}

/// Reconstruction objective: `(1/N) Σ ‖c − F′(F(c))‖² + η Σ_k ‖W_k‖²_F`,
/// with the weight sum running over both encoder and decoder layers.
/// Returns the loss and exact gradients for both networks.
pub fn autoencoder_loss(
    samples: &[Vec<f64>],
    encoder: &Mlp,
    decoder: &Mlp,
    cfg: &PretrainConfig,
) -> Result<(f64, Vec<LayerGrads>, Vec<LayerGrads>)> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("autoencoder_loss"));
    }
    if cfg.eta < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "eta must be nonnegative, got {}",
            cfg.eta
        )));
    }
    let n = samples.len() as f64;
    let mut loss = 0.0;
    let mut enc_grads: Vec<LayerGrads> = Vec::new();
    let mut dec_grads: Vec<LayerGrads> = Vec::new();
    for c in samples {
        let (code, enc_cache) = encoder.forward(c)?;
        let (recon, dec_cache) = decoder.forward(&code)?;
        if recon.len() != c.len() {
            return Err(Error::ShapeMismatch {
                context: "autoencoder_loss",
                expected: format!("reconstruction of length {}", c.len()),
                found: format!("{}", recon.len()),
            });
        }
        let residual: Vec<f64> = recon.iter().zip(c).map(|(r, t)| r - t).collect();
        loss += residual.iter().map(|v| v * v).sum::<f64>() / n;
        let d_recon: Vec<f64> = residual.iter().map(|v| 2.0 * v / n).collect();
        let (d_code, dg) = decoder.backward(&d_recon, &dec_cache)?;
        let (_, eg) = encoder.backward(&d_code, &enc_cache)?;
        accumulate_grads(&mut dec_grads, &dg)?;
        accumulate_grads(&mut enc_grads, &eg)?;
    }
    // weight decay on every weight matrix (not biases)
    for (net, grads) in [(encoder, &mut enc_grads), (decoder, &mut dec_grads)] {
        for (layer, g) in net.layers().iter().zip(grads.iter_mut()) {
            loss += cfg.eta
                * layer.weights.data().iter().map(|v| v * v).sum::<f64>();
            for (gv, wv) in g.weights.data_mut().iter_mut().zip(layer.weights.data()) {
                *gv += 2.0 * cfg.eta * wv;
            }
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("autoencoder_loss"));
    }
    Ok((loss, enc_grads, dec_grads))
}

/// Output of [`pretrain_autoencoder`].
#[derive(Clone, Debug)]
pub struct Pretrained {
    pub encoder: Mlp,
    pub decoder: Mlp,
    /// Loss at each iteration, evaluated before that iteration's update;
    /// one extra trailing entry records the final loss.
    pub loss_history: Vec<f64>,
}

/// Default mapping architecture for flattened inputs of length `input_dim`:
/// one hidden layer four times wider, embedding size equal to the input.
pub fn default_encoder_sizes(input_dim: usize) -> Vec<usize> {
    vec![input_dim, 4 * input_dim, input_dim]
}

fn mirrored(sizes: &[usize]) -> Vec<usize> {
    sizes.iter().rev().copied().collect()
}

fn activations_for(sizes: &[usize]) -> Vec<Activation> {
    // rectifier on hidden layers, identity on the last: reconstructions are
    // unbounded matrix entries
    let layers = sizes.len() - 1;
    (0..layers)
        .map(|i| {
            if i + 1 == layers {
                Activation::Identity
            } else {
                Activation::Relu
            }
        })
        .collect()
}

/// Trains an auto-encoder with full-batch gradient descent under the
/// momentum/poly-decay recipe of `opt` and returns the encoder (the mapping
/// unit's initialization), the decoder, and the per-iteration loss history.
///
/// `encoder_sizes` lists the encoder dimensions from input to embedding; the
/// decoder mirrors them. Regularization comes from `cfg.eta` inside the
/// loss; `opt.weight_decay` is deliberately not applied here as well.
pub fn pretrain_autoencoder(
    samples: &[Vec<f64>],
    encoder_sizes: &[usize],
    cfg: &PretrainConfig,
    opt: &OptimizerConfig,
    rng: &mut impl Rng,
) -> Result<Pretrained> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("pretrain_autoencoder"));
    }
    opt.validate()?;
    let dim = samples[0].len();
    if encoder_sizes.first() != Some(&dim) {
        return Err(Error::ShapeMismatch {
            context: "pretrain_autoencoder",
            expected: format!("encoder input size {dim}"),
            found: format!("{:?}", encoder_sizes.first()),
        });
    }
    for (i, s) in samples.iter().enumerate() {
        if s.len() != dim {
            return Err(Error::ShapeMismatch {
                context: "pretrain_autoencoder",
                expected: format!("sample of length {dim}"),
                found: format!("{} at index {i}", s.len()),
            });
        }
    }
    let dec_sizes = mirrored(encoder_sizes);
    let mut encoder = Mlp::he_init(encoder_sizes, &activations_for(encoder_sizes), rng)?;
    let mut decoder = Mlp::he_init(&dec_sizes, &activations_for(&dec_sizes), rng)?;

    let mut enc_vel: Vec<Vec<f64>> = encoder.param_shapes().iter().map(|&n| vec![0.0; n]).collect();
    let mut dec_vel: Vec<Vec<f64>> = decoder.param_shapes().iter().map(|&n| vec![0.0; n]).collect();
    let step_cfg = OptimizerConfig {
        weight_decay: 0.0,
        ..opt.clone()
    };

    let mut history = Vec::with_capacity(opt.max_iter + 1);
    for iter in 0..opt.max_iter {
        let (loss, enc_grads, dec_grads) =
            autoencoder_loss(samples, &encoder, &decoder, cfg).map_err(|e| match e {
                // auto-encoder pretraining is stage 2 of the pipeline
                Error::NonFinite(_) => Error::Training {
                    stage: 2,
                    iteration: iter,
                    reason: "loss diverged to non-finite".into(),
                },
                other => other,
            })?;
        history.push(loss);
        let lr = poly_lr(iter, opt)?;
        apply_layer_grads(&mut encoder, &enc_grads, &mut enc_vel, lr, &step_cfg)?;
        apply_layer_grads(&mut decoder, &dec_grads, &mut dec_vel, lr, &step_cfg)?;
    }
    let (final_loss, _, _) = autoencoder_loss(samples, &encoder, &decoder, cfg)?;
    history.push(final_loss);
    Ok(Pretrained {
        encoder,
        decoder,
        loss_history: history,
    })
}

/// One SGD step over every tensor of an MLP. Velocity layout follows
/// [`Mlp::param_shapes`].
pub fn apply_layer_grads(
    net: &mut Mlp,
    grads: &[LayerGrads],
    velocities: &mut [Vec<f64>],
    lr: f64,
    cfg: &OptimizerConfig,
) -> Result<()> {
    if grads.len() != net.layers().len() || velocities.len() != 2 * grads.len() {
        return Err(Error::ShapeMismatch {
            context: "apply_layer_grads",
            expected: format!("{} layer grads and twice as many velocities", net.layers().len()),
            found: format!("{} grads, {} velocities", grads.len(), velocities.len()),
        });
    }
    for (i, (layer, g)) in net.layers_mut().iter_mut().zip(grads).enumerate() {
        let (vw, vb) = {
            let (a, b) = velocities.split_at_mut(2 * i + 1);
            (&mut a[2 * i], &mut b[0])
        };
        sgd_momentum_step(layer.weights.data_mut(), g.weights.data(), vw, lr, cfg)?;
        sgd_momentum_step(&mut layer.bias, &g.bias, vb, lr, cfg)?;
    }
    Ok(())
}
