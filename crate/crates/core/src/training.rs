//! Feature standardization and the SGD training loop.
//!
//! The loop is deterministic: the parameter initialization, the per-epoch
//! shuffles, and the fixed-order gradient accumulation are all driven by the
//! run seed, so a `(seed, config, dataset)` triple pins the trained model
//! bit for bit.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, LabeledSequence};
use crate::error::{Error, Result};
use crate::model::{CrfParams, ModelDims};
use crate::objectives::{
    global_nll, l2_penalty, memm_nll, piecewise_nll, pseudolikelihood_nll, pwpl_nll, BnMode,
    GradientSet, PairSample,
};

/// Features with sample standard deviation below this are treated as constant.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Which loss drives the SGD loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Exact sequence likelihood on the raw factorization.
    Global,
    /// Exact sequence likelihood with the batch-norm fold applied.
    GlobalFolded,
    /// Local per-object approximation with batch-normalized context.
    MemmBn,
    /// Local per-object approximation, no normalization.
    Memm,
    Pseudolikelihood,
    Piecewise,
    Pwpl,
}

impl Objective {
    pub const ALL: [Objective; 7] = [
        Objective::Global,
        Objective::GlobalFolded,
        Objective::MemmBn,
        Objective::Memm,
        Objective::Pseudolikelihood,
        Objective::Piecewise,
        Objective::Pwpl,
    ];

    /// Whether decoding should use the batch-norm folded transition matrix.
    pub fn uses_bn(self) -> bool {
        matches!(self, Objective::MemmBn | Objective::GlobalFolded)
    }

    fn is_local(self) -> bool {
        matches!(self, Objective::Memm | Objective::MemmBn)
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Objective::Global => "global",
            Objective::GlobalFolded => "global_folded",
            Objective::MemmBn => "memm_bn",
            Objective::Memm => "memm",
            Objective::Pseudolikelihood => "pseudolikelihood",
            Objective::Piecewise => "piecewise",
            Objective::Pwpl => "pwpl",
        };
        f.write_str(name)
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(Objective::Global),
            "global_folded" => Ok(Objective::GlobalFolded),
            "memm_bn" => Ok(Objective::MemmBn),
            "memm" => Ok(Objective::Memm),
            "pseudolikelihood" => Ok(Objective::Pseudolikelihood),
            "piecewise" => Ok(Objective::Piecewise),
            "pwpl" => Ok(Objective::Pwpl),
            other => Err(Error::Argument(format!(
                "unknown objective {other:?}; expected one of global, global_folded, memm_bn, \
                 memm, pseudolikelihood, piecewise, pwpl"
            ))),
        }
    }
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub objective: Objective,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub l2: f64,
    pub embed_dim: usize,
    pub epochs: usize,
    pub seed: u64,
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::MemmBn,
            lr: 0.05,
            momentum: 0.9,
            batch_size: 128,
            l2: 5e-4,
            embed_dim: 32,
            epochs: 30,
            seed: 0,
            init_scale: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Argument("lr must be finite and >= 0".into()));
        }
        if !(self.momentum >= 0.0 && self.momentum < 1.0) {
            return Err(Error::Argument("momentum must be in [0, 1)".into()));
        }
        let min_batch = if self.objective == Objective::MemmBn { 2 } else { 1 };
        if self.batch_size < min_batch {
            return Err(Error::Argument(format!(
                "batch_size must be >= {min_batch} for objective {}",
                self.objective
            )));
        }
        if !(self.l2 >= 0.0) {
            return Err(Error::Argument("l2 must be >= 0".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Argument("epochs must be >= 1".into()));
        }
        if !(self.init_scale >= 0.0) {
            return Err(Error::Argument("init_scale must be >= 0".into()));
        }
        Ok(())
    }
}

/// Per-feature standardization statistics estimated from a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: Array1<f64>,
    /// Population standard deviation, floored at [`SIGMA_FLOOR`].
    pub std: Array1<f64>,
}

impl FeatureStats {
    /// Standardize one feature matrix in place.
    pub fn transform(&self, features: &mut Array2<f64>) {
        for mut row in features.rows_mut() {
            for (f, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[f]) / self.std[f];
            }
        }
    }

    /// Standardize every sequence of a dataset, recording the stats on it.
    pub fn apply(&self, dataset: &Dataset) -> Dataset {
        let mut out = dataset.clone();
        for seq in &mut out.sequences {
            self.transform(&mut seq.features);
        }
        out.stats = Some(self.clone());
        out
    }
}

/// Estimate per-feature mean and standard deviation over every object of the
/// dataset, and return the standardized copy alongside the statistics.
pub fn standardize_features(dataset: &Dataset) -> Result<(FeatureStats, Dataset)> {
    let total = dataset.num_objects();
    if total == 0 {
        return Err(Error::Argument("cannot standardize an empty dataset".into()));
    }
    let s = dataset.feature_dim;
    let mut mean = Array1::<f64>::zeros(s);
    for seq in &dataset.sequences {
        for row in seq.features.rows() {
            mean += &row;
        }
    }
    mean.mapv_inplace(|v| v / total as f64);

    let mut var = Array1::<f64>::zeros(s);
    for seq in &dataset.sequences {
        for row in seq.features.rows() {
            for (f, &v) in row.iter().enumerate() {
                let c = v - mean[f];
                var[f] += c * c;
            }
        }
    }
    let std = var.mapv(|v| (v / total as f64).sqrt().max(SIGMA_FLOOR));
    let stats = FeatureStats { mean, std };
    let standardized = stats.apply(dataset);
    Ok((stats, standardized))
}

/// Flatten a dataset into neighbor/object pairs: one sample per object, with
/// `prev_label = None` for the first object of each sequence.
pub fn make_pair_samples(dataset: &Dataset) -> Vec<PairSample> {
    let mut samples = Vec::with_capacity(dataset.num_objects());
    for seq in &dataset.sequences {
        for t in 0..seq.labels.len() {
            samples.push(PairSample {
                prev_label: (t > 0).then(|| seq.labels[t - 1]),
                features: seq.features.row(t).to_owned(),
                label: seq.labels[t],
            });
        }
    }
    samples
}

/// One line of the loss history.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean data loss per object over the epoch (L2 excluded).
    pub loss: f64,
    pub seconds: f64,
}

fn sgd_step(
    params: &mut CrfParams,
    velocity: &mut GradientSet,
    grads: &GradientSet,
    lr: f64,
    momentum: f64,
) {
    velocity.scale(momentum);
    velocity.add_scaled(grads, 1.0);
    params.neighbor_embed.scaled_add(-lr, &velocity.neighbor_embed);
    params.class_embed.scaled_add(-lr, &velocity.class_embed);
    params.unary_weights.scaled_add(-lr, &velocity.unary_weights);
    params.bias.scaled_add(-lr, &velocity.bias);
    params.bn.gamma.scaled_add(-lr, &velocity.bn_scale);
    params.bn.beta.scaled_add(-lr, &velocity.bn_shift);
}

/// Train a model from scratch with mini-batch SGD.
///
/// Local objectives shuffle and batch individual pair samples; the
/// sequence-level objectives shuffle whole sequences and normalize each
/// batch's loss and gradient by its object count so learning rates stay
/// comparable. The L2 penalty enters once per optimization step.
pub fn sgd_train(config: &TrainConfig, dataset: &Dataset) -> Result<(CrfParams, Vec<EpochRecord>)> {
    config.validate()?;
    if dataset.num_sequences() == 0 {
        return Err(Error::Argument("cannot train on an empty dataset".into()));
    }
    let dims = ModelDims::new(dataset.feature_dim, dataset.num_classes, config.embed_dim)?;
    let mut params = CrfParams::init(dims, config.seed, config.init_scale)?;
    let mut velocity = GradientSet::zeros(dims);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));
    let mut history = Vec::with_capacity(config.epochs);

    if config.objective.is_local() {
        let samples = make_pair_samples(dataset);
        let mode = if config.objective == Objective::MemmBn {
            BnMode::Train
        } else {
            BnMode::Off
        };
        let mut order: Vec<usize> = (0..samples.len()).collect();
        for epoch in 0..config.epochs {
            let start = Instant::now();
            order.shuffle(&mut shuffle_rng);
            let mut epoch_loss = 0.0;
            let mut chunks: Vec<&[usize]> = order.chunks(config.batch_size).collect();
            // batch normalization cannot run on a stray single sample
            if mode == BnMode::Train && chunks.len() > 1 {
                if let Some(last) = chunks.last() {
                    if last.len() < 2 {
                        chunks.pop();
                    }
                }
            }
            for (step, chunk) in chunks.iter().enumerate() {
                let batch: Vec<PairSample> =
                    chunk.iter().map(|&i| samples[i].clone()).collect();
                let (loss, mut grads, stats) = memm_nll(&params, &batch, mode)?;
                if !loss.is_finite() {
                    return Err(Error::Training(format!(
                        "non-finite loss at epoch {epoch}, step {step}"
                    )));
                }
                epoch_loss += loss * batch.len() as f64;
                if config.l2 > 0.0 {
                    let (_, l2_grads) = l2_penalty(&params, config.l2)?;
                    grads.add_scaled(&l2_grads, 1.0);
                }
                sgd_step(&mut params, &mut velocity, &grads, config.lr, config.momentum);
                if let Some(stats) = stats {
                    let momentum = params.bn.momentum;
                    params.bn.running_mean =
                        &params.bn.running_mean * (1.0 - momentum) + &stats.mean * momentum;
                    params.bn.running_var =
                        &params.bn.running_var * (1.0 - momentum) + &stats.var * momentum;
                }
            }
            let counted: usize = chunks.iter().map(|c| c.len()).sum();
            history.push(EpochRecord {
                epoch,
                loss: epoch_loss / counted as f64,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
    } else {
        let mut order: Vec<usize> = (0..dataset.num_sequences()).collect();
        for epoch in 0..config.epochs {
            let start = Instant::now();
            order.shuffle(&mut shuffle_rng);
            let mut epoch_loss = 0.0;
            for (step, chunk) in order.chunks(config.batch_size).enumerate() {
                let batch: Vec<LabeledSequence> = chunk
                    .iter()
                    .map(|&i| dataset.sequences[i].clone())
                    .collect();
                let objects: usize = batch.iter().map(LabeledSequence::len).sum();
                let (loss, mut grads) = match config.objective {
                    Objective::Global => global_nll(&params, &batch, false)?,
                    Objective::GlobalFolded => global_nll(&params, &batch, true)?,
                    Objective::Pseudolikelihood => pseudolikelihood_nll(&params, &batch)?,
                    Objective::Piecewise => piecewise_nll(&params, &batch)?,
                    Objective::Pwpl => pwpl_nll(&params, &batch)?,
                    Objective::Memm | Objective::MemmBn => unreachable!("local objective"),
                };
                if !loss.is_finite() {
                    return Err(Error::Training(format!(
                        "non-finite loss at epoch {epoch}, step {step}"
                    )));
                }
                epoch_loss += loss;
                grads.scale(1.0 / objects as f64);
                if config.l2 > 0.0 {
                    let (_, l2_grads) = l2_penalty(&params, config.l2)?;
                    grads.add_scaled(&l2_grads, 1.0);
                }
                sgd_step(&mut params, &mut velocity, &grads, config.lr, config.momentum);
            }
            history.push(EpochRecord {
                epoch,
                loss: epoch_loss / dataset.num_objects() as f64,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
    }

    params.validate()?;
    Ok((params, history))
}

/// Render the loss history as the plain-text table emitted next to a model.
pub fn history_table(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch\tloss\tseconds\n");
    for rec in history {
        out.push_str(&format!("{}\t{:.12}\t{:.3}\n", rec.epoch, rec.loss, rec.seconds));
    }
    out
}
