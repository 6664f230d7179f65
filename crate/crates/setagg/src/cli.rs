//! Batch command-line interface: dataset synthesis, training, evaluation,
//! gradient checking, and manifold distances. Output is plain `key=value`
//! lines (one per line) so scripts can parse results, and exit codes are
//! stable: 0 success, 1 numerical/training failure, 2 usage error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::aggregation::{self, AggregationParams, FeatureMatrix};
use crate::error::{Error, Result};
use crate::frames::FrameEmbedder;
use crate::linalg::Matrix;
use crate::manifold::{
    covariance_descriptor, grassmann_basis, grassmann_distance, log_euclidean_distance,
    SpdMatrix,
};
use crate::mapping::{
    default_encoder_sizes, pretrain_autoencoder, Activation, Mlp, PretrainConfig,
};
use crate::train::eval::{
    evaluate_open_set_baseline, train_mean_pool_baseline, MeanPoolBaseline,
};
use crate::train::io::{
    read_dataset, read_json_file, read_matrix_file, write_dataset, write_json_file,
};
use crate::train::pipeline::{resample_raw, training_accuracy};
use crate::train::{
    evaluate_open_set, train_three_stage, ModelBundle, OptimizerConfig, StageSchedule,
};
use crate::train::{synth_generate, SynthConfig};

/// Command completed.
pub const EXIT_OK: i32 = 0;
/// Numerical or training failure at runtime: divergence, a tolerance not
/// met, a matrix outside a metric's domain.
pub const EXIT_NUMERIC: i32 = 1;
/// Bad invocation: unknown flags, invalid values or files, or refusing to
/// overwrite an output without `--force`.
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "setagg",
    version,
    about = "Fixed-length manifold representations for variable-length feature sets",
    subcommand_required = true,
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compare analytic aggregation gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Generate a synthetic train/gallery/probe split.
    Synth(SynthArgs),
    /// Pretrain the mapping unit as an auto-encoder over descriptors.
    PretrainMap(PretrainMapArgs),
    /// Train the full model with the three-stage protocol.
    Train(TrainArgs),
    /// Open-set identification metrics for a trained model.
    Eval(EvalArgs),
    /// Distance between two matrices under a manifold metric.
    Dist(DistArgs),
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Feature dimension d.
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
    /// Input frame count n.
    #[arg(long, default_value_t = 8)]
    pub frames: usize,
    /// Mixed output count q (columns of the mixing matrix).
    #[arg(long, default_value_t = 4)]
    pub outputs: usize,
    /// Pooled matrix count t; must divide --outputs.
    #[arg(long, default_value_t = 2)]
    pub groups: usize,
    #[arg(long, env = "SETAGG_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Largest accepted relative error between analytic and numeric
    /// gradients.
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Directory receiving train.jsonl, gallery.jsonl, and probe.jsonl.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// JSON file holding a full generator config; explicit flags override
    /// its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Total classes, known and unknown together.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Dimension of each class's subspace.
    #[arg(long)]
    pub subspace_dim: Option<usize>,
    /// Ambient frame dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Training videos per known class.
    #[arg(long)]
    pub videos_per_class: Option<usize>,
    /// Enrollment videos per known class.
    #[arg(long)]
    pub gallery_videos_per_class: Option<usize>,
    /// Probe videos per class, known and unknown alike.
    #[arg(long)]
    pub probe_videos_per_class: Option<usize>,
    /// Smallest per-video frame count.
    #[arg(long)]
    pub frames_min: Option<usize>,
    /// Largest per-video frame count.
    #[arg(long)]
    pub frames_max: Option<usize>,
    /// Standard deviation of the additive Gaussian noise.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Trailing fraction of classes held out as probe-only unknowns.
    #[arg(long)]
    pub unknown_fraction: Option<f64>,
    #[arg(long, env = "SETAGG_SEED")]
    pub seed: Option<u64>,
    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct PretrainMapArgs {
    /// Training dataset (line-delimited video records).
    #[arg(long)]
    pub data: PathBuf,
    /// Output path for the pretrained encoder (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional output path for the loss history (JSON array).
    #[arg(long)]
    pub history_out: Option<PathBuf>,
    /// Encoder layer sizes from input to embedding, comma separated.
    /// Defaults to d^2,4*d^2,d^2 for feature dimension d.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Frames every video is resampled to before its descriptor.
    #[arg(long, default_value_t = 16)]
    pub frames_per_video: usize,
    /// Full-batch gradient-descent iterations.
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    #[arg(long, default_value_t = 0.01)]
    pub base_lr: f64,
    /// Weight-decay coefficient inside the reconstruction loss.
    #[arg(long, default_value_t = 0.0005)]
    pub eta: f64,
    #[arg(long, env = "SETAGG_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training dataset (line-delimited video records).
    #[arg(long)]
    pub data: PathBuf,
    /// Output model path (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional output path for per-stage loss histories (JSON).
    #[arg(long)]
    pub history_out: Option<PathBuf>,
    /// JSON file holding a full stage schedule; explicit flags override
    /// its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Iterations of frame-embedder training (no-op for passthrough).
    #[arg(long)]
    pub stage1_iters: Option<usize>,
    /// Iterations of auto-encoder pretraining of the mapping unit.
    #[arg(long)]
    pub stage2_iters: Option<usize>,
    /// Iterations of end-to-end fine-tuning.
    #[arg(long)]
    pub stage3_iters: Option<usize>,
    /// Base learning rate for every stage.
    #[arg(long)]
    pub base_lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Exponent of the polynomial learning-rate decay.
    #[arg(long)]
    pub power: Option<f64>,
    /// Videos per minibatch.
    #[arg(long)]
    pub batch_videos: Option<usize>,
    /// Frames every video is resampled to before aggregation.
    #[arg(long)]
    pub frames_per_video: Option<usize>,
    /// Auto-encoder weight-decay coefficient (stage 2).
    #[arg(long)]
    pub eta: Option<f64>,
    /// Seed for initialization and every stage.
    #[arg(long, env = "SETAGG_SEED")]
    pub seed: Option<u64>,
    /// Mixed output count q of the aggregation block; defaults to the
    /// training frame count.
    #[arg(long)]
    pub outputs: Option<usize>,
    /// Pooled matrix count t.
    #[arg(long, default_value_t = 1)]
    pub groups: usize,
    /// Mapping layer sizes from flattened input to embedding, comma
    /// separated; the first must equal groups*d^2.
    #[arg(long, value_delimiter = ',')]
    pub mapping_sizes: Option<Vec<usize>>,
    /// Per-frame embedder in front of the aggregation block.
    #[arg(long, value_enum, default_value_t = EmbedderKind::Passthrough)]
    pub embedder: EmbedderKind,
    /// Embedder output dimension (linear/mlp only); defaults to the raw
    /// frame dimension.
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Hidden width of the mlp embedder; defaults to twice its output.
    #[arg(long)]
    pub embed_hidden: Option<usize>,
    /// Catch-all class: training videos with labels outside the class list
    /// flow into it, and predicting it means rejection.
    #[arg(long)]
    pub unknown_label: Option<String>,
    /// Train the first-order mean-pooling baseline instead of the full
    /// model, under the stage-3 recipe and seed.
    #[arg(long)]
    pub baseline: bool,
    /// Worker count; only 1 is supported (runs are single-threaded so they
    /// are bit-reproducible).
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Trained model JSON (a baseline model with --baseline).
    #[arg(long)]
    pub model: PathBuf,
    /// Enrollment videos; their labels name the classes open to
    /// identification.
    #[arg(long)]
    pub gallery: PathBuf,
    /// Videos to identify; labels outside the gallery count as unknown.
    #[arg(long)]
    pub probe: PathBuf,
    /// Acceptance threshold on the top-class softmax score; -inf accepts
    /// every top choice.
    #[arg(long, default_value_t = f64::NEG_INFINITY, allow_hyphen_values = true)]
    pub threshold: f64,
    /// Optional metrics output path (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Interpret --model as a mean-pooling baseline.
    #[arg(long)]
    pub baseline: bool,
    /// Accepted for interface uniformity; evaluation is deterministic.
    #[arg(long, env = "SETAGG_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker count; only 1 is supported.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct DistArgs {
    /// Manifold metric to apply.
    #[arg(long, value_enum)]
    pub metric: Metric,
    /// Subspace dimension for the Grassmann metric; the inputs are then
    /// read as d x n frame matrices whose dominant subspaces are compared.
    #[arg(long)]
    pub subspace_dim: Option<usize>,
    /// Accepted for interface uniformity; the distances are deterministic.
    #[arg(long, env = "SETAGG_SEED", default_value_t = 0)]
    pub seed: u64,
    /// First matrix file (text format: a "rows cols" header line, then one
    /// line of space-separated decimals per row).
    pub a: PathBuf,
    /// Second matrix file.
    pub b: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    /// Log-Euclidean distance between two SPD matrices.
    Logeuclid,
    /// Principal-subspace distance between two frame sets.
    Grassmann,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EmbedderKind {
    /// Raw frame vectors are used as features unchanged.
    Passthrough,
    /// One trainable affine map per frame.
    Linear,
    /// A small trainable per-frame network.
    Mlp,
}

/// Parses `args` (first element is the program name) and runs the selected
/// command, returning the process exit code instead of exiting, so the CLI
/// can be driven in-process by tests.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version are successes; everything else is usage
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}

fn dispatch(cmd: &Command) -> Result<i32> {
    match cmd {
        Command::Gradcheck(a) => run_gradcheck(a),
        Command::Synth(a) => run_synth(a),
        Command::PretrainMap(a) => run_pretrain_map(a),
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::Dist(a) => run_dist(a),
    }
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::EigenNonConvergence { .. }
        | Error::NotPositiveDefinite { .. }
        | Error::DegenerateInput(_)
        | Error::NonFinite(_)
        | Error::Training { .. } => EXIT_NUMERIC,
        _ => EXIT_USAGE,
    }
}

fn ensure_writable(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::InvalidConfig(format!(
            "{} exists; pass --force to overwrite it",
            path.display()
        )));
    }
    Ok(())
}

fn check_workers(workers: usize) -> Result<()> {
    if workers != 1 {
        return Err(Error::InvalidConfig(format!(
            "only --workers 1 is supported (runs are single-threaded so they \
             are bit-reproducible), got {workers}"
        )));
    }
    Ok(())
}

/// Central-difference step for the gradient check.
const FD_STEP: f64 = 1e-5;

fn run_gradcheck(a: &GradcheckArgs) -> Result<i32> {
    if a.dim == 0 || a.frames == 0 || a.outputs == 0 {
        return Err(Error::InvalidConfig(
            "dim, frames, and outputs must be >= 1".into(),
        ));
    }
    if a.groups == 0 || a.outputs % a.groups != 0 {
        return Err(Error::BadGrouping {
            count: a.outputs,
            groups: a.groups,
        });
    }
    if !a.tol.is_finite() || a.tol < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "tol must be a nonnegative real, got {}",
            a.tol
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut randn = |rows: usize, cols: usize| {
        let mut m = Matrix::zeros(rows, cols);
        for v in m.data_mut() {
            *v = rng.sample::<f64, _>(StandardNormal);
        }
        m
    };
    let x = randn(a.dim, a.frames);
    let mix = randn(a.frames, a.outputs);
    let bias = randn(a.dim, a.outputs);

    // loss: sum of squared Frobenius norms of the pooled outputs, so the
    // upstream gradient of pooled matrix i is 2*C_i
    let loss_at = |x: &Matrix, mix: &Matrix, bias: &Matrix| -> Result<f64> {
        let params = AggregationParams::new(mix.clone(), bias.clone(), a.groups)?;
        let out = aggregation::forward(&FeatureMatrix::new(x.clone())?, &params)?;
        Ok(out
            .pooled
            .iter()
            .map(|c| c.data().iter().map(|v| v * v).sum::<f64>())
            .sum())
    };
    let params = AggregationParams::new(mix.clone(), bias.clone(), a.groups)?;
    let out = aggregation::forward(&FeatureMatrix::new(x.clone())?, &params)?;
    let upstream: Vec<Matrix> = out.pooled.iter().map(|c| c.scale(2.0)).collect();
    let grads = aggregation::backward(&upstream, &out, &params)?;

    let mut worst_overall = 0.0f64;
    for (name, base, analytic) in [
        ("input", &x, &grads.input),
        ("mix", &mix, &grads.mix),
        ("bias", &bias, &grads.bias),
    ] {
        let mut worst = 0.0f64;
        let mut at = (0usize, 0usize);
        let mut pair = (0.0f64, 0.0f64);
        for r in 0..base.rows() {
            for c in 0..base.cols() {
                let mut plus = base.clone();
                plus[(r, c)] += FD_STEP;
                let mut minus = base.clone();
                minus[(r, c)] -= FD_STEP;
                let (lp, lm) = match name {
                    "input" => (loss_at(&plus, &mix, &bias)?, loss_at(&minus, &mix, &bias)?),
                    "mix" => (loss_at(&x, &plus, &bias)?, loss_at(&x, &minus, &bias)?),
                    _ => (loss_at(&x, &mix, &plus)?, loss_at(&x, &mix, &minus)?),
                };
                let numeric = (lp - lm) / (2.0 * FD_STEP);
                let exact = analytic[(r, c)];
                let rel =
                    (exact - numeric).abs() / exact.abs().max(numeric.abs()).max(1.0);
                if rel > worst {
                    worst = rel;
                    at = (r, c);
                    pair = (exact, numeric);
                }
            }
        }
        println!(
            "param={name} max_rel_err={worst:.3e} worst=({},{}) analytic={:.16e} numeric={:.16e}",
            at.0, at.1, pair.0, pair.1
        );
        worst_overall = worst_overall.max(worst);
    }
    let pass = worst_overall <= a.tol;
    println!(
        "max_rel_err={worst_overall:.3e} tol={:.3e} status={}",
        a.tol,
        if pass { "pass" } else { "fail" }
    );
    Ok(if pass { EXIT_OK } else { EXIT_NUMERIC })
}

fn run_synth(a: &SynthArgs) -> Result<i32> {
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => read_json_file(p)?,
        None => SynthConfig::default(),
    };
    if let Some(v) = a.classes {
        cfg.classes = v;
    }
    if let Some(v) = a.subspace_dim {
        cfg.subspace_dim = v;
    }
    if let Some(v) = a.dim {
        cfg.dim = v;
    }
    if let Some(v) = a.videos_per_class {
        cfg.videos_per_class = v;
    }
    if let Some(v) = a.gallery_videos_per_class {
        cfg.gallery_videos_per_class = v;
    }
    if let Some(v) = a.probe_videos_per_class {
        cfg.probe_videos_per_class = v;
    }
    if let Some(v) = a.frames_min {
        cfg.frames_range.0 = v;
    }
    if let Some(v) = a.frames_max {
        cfg.frames_range.1 = v;
    }
    if let Some(v) = a.noise {
        cfg.noise = v;
    }
    if let Some(v) = a.unknown_fraction {
        cfg.unknown_fraction = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    cfg.validate()?;

    let (train, gallery, probe) = synth_generate(&cfg)?;
    fs::create_dir_all(&a.out_dir)?;
    let outputs = [
        ("train", a.out_dir.join("train.jsonl"), &train),
        ("gallery", a.out_dir.join("gallery.jsonl"), &gallery),
        ("probe", a.out_dir.join("probe.jsonl"), &probe),
    ];
    for (_, path, _) in &outputs {
        ensure_writable(path, a.force)?;
    }
    for (name, path, ds) in &outputs {
        write_dataset(path, ds)?;
        println!("{name}={} videos={}", path.display(), ds.len());
    }
    println!("seed={}", cfg.seed);
    Ok(EXIT_OK)
}

fn run_pretrain_map(a: &PretrainMapArgs) -> Result<i32> {
    let ds = read_dataset(&a.data)?;
    ds.validate()?;
    ensure_writable(&a.out, a.force)?;
    if let Some(h) = &a.history_out {
        ensure_writable(h, a.force)?;
    }
    let d = ds.videos[0].dim();
    let mut samples = Vec::with_capacity(ds.len());
    for v in &ds.videos {
        let resampled = resample_raw(&v.frames, a.frames_per_video)?;
        let fx = FeatureMatrix::from_frames(&resampled)?;
        samples.push(covariance_descriptor(&fx).matrix().data().to_vec());
    }
    let sizes = a
        .sizes
        .clone()
        .unwrap_or_else(|| default_encoder_sizes(d * d));
    let opt = OptimizerConfig {
        base_lr: a.base_lr,
        max_iter: a.iters,
        seed: a.seed,
        ..Default::default()
    };
    let cfg = PretrainConfig { eta: a.eta };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let pre = pretrain_autoencoder(&samples, &sizes, &cfg, &opt, &mut rng)?;
    write_json_file(&a.out, &pre.encoder)?;
    if let Some(h) = &a.history_out {
        write_json_file(h, &pre.loss_history)?;
    }
    println!("samples={}", samples.len());
    println!(
        "initial_loss={:.16e}",
        pre.loss_history.first().copied().unwrap_or(f64::NAN)
    );
    println!(
        "final_loss={:.16e}",
        pre.loss_history.last().copied().unwrap_or(f64::NAN)
    );
    println!("encoder={}", a.out.display());
    Ok(EXIT_OK)
}

fn run_train(a: &TrainArgs) -> Result<i32> {
    check_workers(a.workers)?;
    let ds = read_dataset(&a.data)?;
    ds.validate()?;
    ensure_writable(&a.out, a.force)?;
    if let Some(h) = &a.history_out {
        ensure_writable(h, a.force)?;
    }

    let mut schedule: StageSchedule = match &a.config {
        Some(p) => read_json_file(p)?,
        None => StageSchedule::default(),
    };
    for s in [
        &mut schedule.stage1,
        &mut schedule.stage2,
        &mut schedule.stage3,
    ] {
        if let Some(v) = a.base_lr {
            s.base_lr = v;
        }
        if let Some(v) = a.momentum {
            s.momentum = v;
        }
        if let Some(v) = a.weight_decay {
            s.weight_decay = v;
        }
        if let Some(v) = a.power {
            s.power = v;
        }
        if let Some(v) = a.batch_videos {
            s.batch_videos = v;
        }
        if let Some(v) = a.frames_per_video {
            s.frames_per_video = v;
        }
        if let Some(v) = a.seed {
            s.seed = v;
        }
    }
    if let Some(v) = a.stage1_iters {
        schedule.stage1.max_iter = v;
    }
    if let Some(v) = a.stage2_iters {
        schedule.stage2.max_iter = v;
    }
    if let Some(v) = a.stage3_iters {
        schedule.stage3.max_iter = v;
    }
    if let Some(v) = a.eta {
        schedule.pretrain.eta = v;
    }

    let mut labels = ds.labels_sorted();
    if let Some(u) = &a.unknown_label {
        if !labels.contains(u) {
            labels.push(u.clone());
            labels.sort();
        }
    }

    if a.baseline {
        let (baseline, losses) = train_mean_pool_baseline(
            &ds,
            labels,
            a.unknown_label.clone(),
            &schedule.stage3,
        )?;
        write_json_file(&a.out, &baseline)?;
        println!("kind=baseline");
        println!("iters={}", losses.len());
        println!(
            "final_loss={:.16e}",
            losses.last().copied().unwrap_or(f64::NAN)
        );
        println!("model={}", a.out.display());
        return Ok(EXIT_OK);
    }

    let seed = a.seed.unwrap_or(schedule.stage3.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw_dim = ds.videos[0].dim();
    let embed_dim = a.embed_dim.unwrap_or(raw_dim);
    let embedder = match a.embedder {
        EmbedderKind::Passthrough => {
            if embed_dim != raw_dim {
                return Err(Error::InvalidConfig(
                    "--embed-dim requires --embedder linear or mlp".into(),
                ));
            }
            FrameEmbedder::passthrough(raw_dim)
        }
        EmbedderKind::Linear => FrameEmbedder::Linear(Mlp::he_init(
            &[raw_dim, embed_dim],
            &[Activation::Identity],
            &mut rng,
        )?),
        EmbedderKind::Mlp => {
            let hidden = a.embed_hidden.unwrap_or(2 * embed_dim);
            FrameEmbedder::Mlp(Mlp::he_init(
                &[raw_dim, hidden, embed_dim],
                &[Activation::Relu, Activation::Identity],
                &mut rng,
            )?)
        }
    };

    let d = embedder.out_dim();
    let frames_per_video = schedule.stage3.frames_per_video;
    let outputs = a.outputs.unwrap_or(frames_per_video);
    let mapping_sizes = a
        .mapping_sizes
        .clone()
        .unwrap_or_else(|| default_encoder_sizes(a.groups * d * d));
    let bundle = ModelBundle::init(
        embedder,
        frames_per_video,
        outputs,
        a.groups,
        &mapping_sizes,
        labels,
        a.unknown_label.clone(),
        &mut rng,
    )?;
    let (trained, history) = train_three_stage(&ds, bundle, &schedule)?;
    let accuracy = training_accuracy(&trained, &ds)?;
    trained.save(&a.out)?;
    if let Some(h) = &a.history_out {
        write_json_file(h, &history)?;
    }
    println!("kind=full");
    println!("stage1_iters={}", history.stage1.len());
    // the stage-2 history carries one trailing final-loss entry
    println!("stage2_iters={}", history.stage2.len().saturating_sub(1));
    println!("stage3_iters={}", history.stage3.len());
    if let Some(l) = history.stage2.last() {
        println!("stage2_final_loss={l:.16e}");
    }
    if let Some(l) = history.stage3.last() {
        println!("stage3_final_loss={l:.16e}");
    }
    println!("train_accuracy={accuracy:.16e}");
    println!("model={}", a.out.display());
    Ok(EXIT_OK)
}

fn run_eval(a: &EvalArgs) -> Result<i32> {
    check_workers(a.workers)?;
    let _ = a.seed; // deterministic regardless; accepted for uniformity
    let gallery = read_dataset(&a.gallery)?;
    let probe = read_dataset(&a.probe)?;
    if let Some(out) = &a.out {
        ensure_writable(out, a.force)?;
    }
    let metrics = if a.baseline {
        let baseline: MeanPoolBaseline = read_json_file(&a.model)?;
        evaluate_open_set_baseline(&baseline, &gallery, &probe, a.threshold)?
    } else {
        let model = ModelBundle::load(&a.model)?;
        evaluate_open_set(&model, &gallery, &probe, a.threshold)?
    };
    if let Some(out) = &a.out {
        write_json_file(out, &metrics)?;
        println!("metrics={}", out.display());
    }
    println!("accuracy={:.16e}", metrics.accuracy);
    println!("known_only_accuracy={:.16e}", metrics.known_only_accuracy);
    println!("false_accept_rate={:.16e}", metrics.false_accept_rate);
    println!("probes={}", metrics.probes);
    println!("known_probes={}", metrics.known_probes);
    println!("unknown_probes={}", metrics.unknown_probes);
    Ok(EXIT_OK)
}

fn run_dist(args: &DistArgs) -> Result<i32> {
    let _ = args.seed; // deterministic regardless; accepted for uniformity
    let ma = read_matrix_file(&args.a)?;
    let mb = read_matrix_file(&args.b)?;
    let d = match args.metric {
        Metric::Logeuclid => {
            if args.subspace_dim.is_some() {
                return Err(Error::InvalidConfig(
                    "--subspace-dim only applies to --metric grassmann".into(),
                ));
            }
            log_euclidean_distance(&SpdMatrix::new(ma)?, &SpdMatrix::new(mb)?)?
        }
        Metric::Grassmann => {
            let q = args.subspace_dim.ok_or_else(|| {
                Error::InvalidConfig("--metric grassmann requires --subspace-dim".into())
            })?;
            let pa = grassmann_basis(&FeatureMatrix::new(ma)?, q)?;
            let pb = grassmann_basis(&FeatureMatrix::new(mb)?, q)?;
            grassmann_distance(&pa, &pb)?
        }
    };
    // 12 significant digits
    println!("{d:.11e}");
    Ok(EXIT_OK)
}
