//! Training objectives and their analytic gradients.
//!
//! Five ways to fit the same parameter set: the exact sequence likelihood
//! (optionally with the batch-norm fold applied to the transition matrix),
//! a locally normalized per-object approximation with optional batch-norm on
//! the context embedding, and the three classical surrogates
//! (pseudolikelihood, piecewise, piecewise-pseudolikelihood). All gradients
//! are derived by hand and checked against central finite differences.

use ndarray::{Array1, Array2};

use crate::batchnorm::{bn_backward, bn_forward_infer, bn_forward_train, BnStats};
use crate::data::LabeledSequence;
use crate::error::{Error, Result};
use crate::model::CrfParams;
use crate::trellis::{
    forward_backward, node_marginals, pair_marginals, sequence_log_likelihood, ScoreTable,
};

/// Per-parameter gradient accumulators, mirroring [`CrfParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub neighbor_embed: Array2<f64>,
    pub class_embed: Array2<f64>,
    pub unary_weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub bn_scale: Array1<f64>,
    pub bn_shift: Array1<f64>,
}

impl GradientSet {
    pub fn zeros(dims: crate::model::ModelDims) -> Self {
        let (s, m, d) = (dims.feature_dim, dims.num_classes, dims.embed_dim);
        Self {
            neighbor_embed: Array2::zeros((d, m)),
            class_embed: Array2::zeros((d, m)),
            unary_weights: Array2::zeros((s, m)),
            bias: Array1::zeros(m),
            bn_scale: Array1::zeros(d),
            bn_shift: Array1::zeros(d),
        }
    }

    /// `self += c * other`, blockwise.
    pub fn add_scaled(&mut self, other: &GradientSet, c: f64) {
        self.neighbor_embed.scaled_add(c, &other.neighbor_embed);
        self.class_embed.scaled_add(c, &other.class_embed);
        self.unary_weights.scaled_add(c, &other.unary_weights);
        self.bias.scaled_add(c, &other.bias);
        self.bn_scale.scaled_add(c, &other.bn_scale);
        self.bn_shift.scaled_add(c, &other.bn_shift);
    }

    pub fn scale(&mut self, c: f64) {
        self.neighbor_embed.mapv_inplace(|v| v * c);
        self.class_embed.mapv_inplace(|v| v * c);
        self.unary_weights.mapv_inplace(|v| v * c);
        self.bias.mapv_inplace(|v| v * c);
        self.bn_scale.mapv_inplace(|v| v * c);
        self.bn_shift.mapv_inplace(|v| v * c);
    }

    pub fn is_finite(&self) -> bool {
        self.neighbor_embed.iter().all(|v| v.is_finite())
            && self.class_embed.iter().all(|v| v.is_finite())
            && self.unary_weights.iter().all(|v| v.is_finite())
            && self.bias.iter().all(|v| v.is_finite())
            && self.bn_scale.iter().all(|v| v.is_finite())
            && self.bn_shift.iter().all(|v| v.is_finite())
    }
}

/// One training sample for the locally normalized objective: the class of the
/// left neighbor (`None` for the first object of a sequence), the object
/// representation, and the true class.
#[derive(Debug, Clone)]
pub struct PairSample {
    pub prev_label: Option<usize>,
    pub features: Array1<f64>,
    pub label: usize,
}

/// How the context embedding is normalized inside [`memm_nll`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Mini-batch statistics over the neighbored samples.
    Train,
    /// Running statistics.
    Infer,
    /// No normalization; the raw embedding column is the context vector.
    Off,
}

fn softmax_terms(logits: &Array1<f64>, label: usize) -> (f64, Array1<f64>) {
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut probs = logits.mapv(|v| (v - max).exp());
    let total: f64 = probs.sum();
    let loss = total.ln() + max - logits[label];
    probs.mapv_inplace(|p| p / total);
    (loss, probs)
}

/// Unary score rows for a whole sequence: `features . U + b` per position.
fn unary_rows(params: &CrfParams, seq: &LabeledSequence) -> Result<Array2<f64>> {
    if seq.features.ncols() != params.dims.feature_dim {
        return Err(Error::Dimension(format!(
            "sequence features have width {}, model expects {}",
            seq.features.ncols(),
            params.dims.feature_dim
        )));
    }
    Ok(seq.features.dot(&params.unary_weights) + &params.bias)
}

fn check_sequences(params: &CrfParams, sequences: &[LabeledSequence]) -> Result<()> {
    if sequences.is_empty() {
        return Err(Error::Argument("empty batch of sequences".into()));
    }
    for seq in sequences {
        if seq.labels.iter().any(|&y| y >= params.dims.num_classes) {
            return Err(Error::Argument("label out of range".into()));
        }
    }
    Ok(())
}

// The batch-norm fold treated as a differentiable reparameterization of the
// transition matrix: running statistics stay constant, gradients flow to the
// embeddings and to gamma/beta.
struct FoldPieces {
    left_factor: Array2<f64>,
    inv_std: Array1<f64>,
}

fn fold_pieces(params: &CrfParams) -> FoldPieces {
    let bn = &params.bn;
    let inv_std = bn.running_var.mapv(|v| 1.0 / (v + bn.eps).sqrt());
    let mut left = params.neighbor_embed.clone();
    for (f, mut row) in left.rows_mut().into_iter().enumerate() {
        row.mapv_inplace(|x| (x - bn.running_mean[f]) * inv_std[f] * bn.gamma[f] + bn.beta[f]);
    }
    FoldPieces {
        left_factor: left,
        inv_std,
    }
}

/// Distribute a gradient on the transition matrix back onto the factors.
fn chain_transition_grad(
    params: &CrfParams,
    left_factor: &Array2<f64>,
    fold: Option<&FoldPieces>,
    d_transition: &Array2<f64>,
    grads: &mut GradientSet,
) {
    // transition = left_factor^T . class_embed
    let d_left = params.class_embed.dot(&d_transition.t());
    grads.class_embed += &left_factor.dot(d_transition);
    match fold {
        None => grads.neighbor_embed += &d_left,
        Some(pieces) => {
            let bn = &params.bn;
            for (f, row) in d_left.rows().into_iter().enumerate() {
                let istd = pieces.inv_std[f];
                for (i, &g) in row.iter().enumerate() {
                    grads.neighbor_embed[[f, i]] += g * istd * bn.gamma[f];
                    grads.bn_scale[f] +=
                        g * (params.neighbor_embed[[f, i]] - bn.running_mean[f]) * istd;
                    grads.bn_shift[f] += g;
                }
            }
        }
    }
}

/// Exact negative log-likelihood of whole sequences, summed over the batch.
///
/// With `use_bn_fold` the transition matrix is the batch-norm folded product
/// (running statistics held constant) and gradients reach gamma and beta.
pub fn global_nll(
    params: &CrfParams,
    sequences: &[LabeledSequence],
    use_bn_fold: bool,
) -> Result<(f64, GradientSet)> {
    check_sequences(params, sequences)?;
    let fold = use_bn_fold.then(|| fold_pieces(params));
    let left_factor = fold
        .as_ref()
        .map(|p| p.left_factor.clone())
        .unwrap_or_else(|| params.neighbor_embed.clone());
    let transition = left_factor.t().dot(&params.class_embed);

    let mut loss = 0.0;
    let mut grads = GradientSet::zeros(params.dims);
    let mut d_transition = Array2::zeros(transition.dim());

    for seq in sequences {
        let unary = unary_rows(params, seq)?;
        let st = ScoreTable::new(unary, transition.clone())?;
        let trellis = forward_backward(&st)?;
        loss -= sequence_log_likelihood(&st, &trellis, &seq.labels)?;

        // unary block: expected occupancy minus observed
        let mut d_unary = node_marginals(&trellis);
        for (t, &y) in seq.labels.iter().enumerate() {
            d_unary[[t, y]] -= 1.0;
        }
        grads.unary_weights += &seq.features.t().dot(&d_unary);
        for row in d_unary.rows() {
            grads.bias += &row;
        }

        // transition block: expected pair counts minus observed
        if seq.labels.len() >= 2 {
            for (t, slice) in pair_marginals(&st, &trellis)?.into_iter().enumerate() {
                d_transition += &slice;
                d_transition[[seq.labels[t], seq.labels[t + 1]]] -= 1.0;
            }
        }
    }

    chain_transition_grad(params, &left_factor, fold.as_ref(), &d_transition, &mut grads);
    Ok((loss, grads))
}

/// Locally normalized objective over neighbor/object pairs: mean negative log
/// of the per-object conditional, with the context embedding optionally
/// batch-normalized.
///
/// Returns the mini-batch statistics of the context embedding in train mode
/// (when at least one sample has a neighbor) for the caller's running-average
/// update.
pub fn memm_nll(
    params: &CrfParams,
    batch: &[PairSample],
    mode: BnMode,
) -> Result<(f64, GradientSet, Option<BnStats>)> {
    if batch.is_empty() {
        return Err(Error::Argument("empty batch of pair samples".into()));
    }
    let (s, m, d) = (
        params.dims.feature_dim,
        params.dims.num_classes,
        params.dims.embed_dim,
    );
    for sample in batch {
        if sample.label >= m || sample.prev_label.is_some_and(|p| p >= m) {
            return Err(Error::Argument("label out of range".into()));
        }
        if sample.features.len() != s {
            return Err(Error::Dimension(format!(
                "sample features have length {}, model expects {s}",
                sample.features.len()
            )));
        }
    }

    let neighbored: Vec<usize> = (0..batch.len())
        .filter(|&i| batch[i].prev_label.is_some())
        .collect();

    // context vectors for the neighbored samples, one row each
    let mut raw_context = Array2::zeros((neighbored.len(), d));
    for (row, &i) in neighbored.iter().enumerate() {
        let prev = batch[i].prev_label.expect("filtered");
        for f in 0..d {
            raw_context[[row, f]] = params.neighbor_embed[[f, prev]];
        }
    }
    let (context, cache, stats) = match mode {
        BnMode::Off => (raw_context.clone(), None, None),
        BnMode::Infer => (bn_forward_infer(raw_context.view(), &params.bn)?, None, None),
        BnMode::Train => {
            if neighbored.is_empty() {
                (raw_context.clone(), None, None)
            } else if neighbored.len() < 2 {
                return Err(Error::Statistics(
                    "train-mode batch normalization needs at least 2 neighbored samples".into(),
                ));
            } else {
                let (y, cache, stats) = bn_forward_train(raw_context.view(), &params.bn)?;
                (y, Some(cache), Some(stats))
            }
        }
    };

    let inv_batch = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grads = GradientSet::zeros(params.dims);
    let mut d_context = Array2::zeros((neighbored.len(), d));

    let mut neighbor_row = 0usize;
    for (i, sample) in batch.iter().enumerate() {
        let mut logits = sample.features.dot(&params.unary_weights) + &params.bias;
        let has_context = sample.prev_label.is_some();
        if has_context {
            logits += &context.row(neighbor_row).dot(&params.class_embed);
        }
        let (sample_loss, mut d_logits) = softmax_terms(&logits, sample.label);
        loss += sample_loss * inv_batch;
        d_logits[sample.label] -= 1.0;
        d_logits.mapv_inplace(|v| v * inv_batch);

        for (f, &h) in sample.features.iter().enumerate() {
            for y in 0..m {
                grads.unary_weights[[f, y]] += h * d_logits[y];
            }
        }
        grads.bias += &d_logits;

        if has_context {
            let ctx = context.row(neighbor_row);
            for f in 0..d {
                for y in 0..m {
                    grads.class_embed[[f, y]] += ctx[f] * d_logits[y];
                }
            }
            let dc = params.class_embed.dot(&d_logits);
            for f in 0..d {
                d_context[[neighbor_row, f]] = dc[f];
            }
            neighbor_row += 1;
        }
        let _ = i;
    }

    // route the context gradient back through the chosen normalization
    match (mode, cache) {
        (BnMode::Off, _) => {
            for (row, &i) in neighbored.iter().enumerate() {
                let prev = batch[i].prev_label.expect("filtered");
                for f in 0..d {
                    grads.neighbor_embed[[f, prev]] += d_context[[row, f]];
                }
            }
        }
        (BnMode::Infer, _) => {
            let bn = &params.bn;
            let inv_std = bn.running_var.mapv(|v| 1.0 / (v + bn.eps).sqrt());
            for (row, &i) in neighbored.iter().enumerate() {
                let prev = batch[i].prev_label.expect("filtered");
                for f in 0..d {
                    let g = d_context[[row, f]];
                    grads.neighbor_embed[[f, prev]] += g * bn.gamma[f] * inv_std[f];
                    grads.bn_scale[f] +=
                        g * (raw_context[[row, f]] - bn.running_mean[f]) * inv_std[f];
                    grads.bn_shift[f] += g;
                }
            }
        }
        (BnMode::Train, Some(cache)) => {
            let (d_inputs, d_gamma, d_beta) = bn_backward(&cache, d_context.view(), &params.bn)?;
            for (row, &i) in neighbored.iter().enumerate() {
                let prev = batch[i].prev_label.expect("filtered");
                for f in 0..d {
                    grads.neighbor_embed[[f, prev]] += d_inputs[[row, f]];
                }
            }
            grads.bn_scale += &d_gamma;
            grads.bn_shift += &d_beta;
        }
        (BnMode::Train, None) => {} // no neighbored samples: context path unused
    }

    Ok((loss, grads, stats))
}

/// Pseudolikelihood: each position conditioned on both chain neighbors, with
/// the raw factorization (no batch norm). Summed over positions and sequences.
pub fn pseudolikelihood_nll(
    params: &CrfParams,
    sequences: &[LabeledSequence],
) -> Result<(f64, GradientSet)> {
    check_sequences(params, sequences)?;
    let transition = params.transition_raw();
    let m = params.dims.num_classes;

    let mut loss = 0.0;
    let mut grads = GradientSet::zeros(params.dims);
    let mut d_transition = Array2::zeros((m, m));

    for seq in sequences {
        let unary = unary_rows(params, seq)?;
        let n = seq.labels.len();
        for t in 0..n {
            let mut scores = unary.row(t).to_owned();
            if t > 0 {
                scores += &transition.row(seq.labels[t - 1]);
            }
            if t + 1 < n {
                scores += &transition.column(seq.labels[t + 1]);
            }
            let (node_loss, mut delta) = softmax_terms(&scores, seq.labels[t]);
            loss += node_loss;
            delta[seq.labels[t]] -= 1.0;

            for (f, &h) in seq.features.row(t).iter().enumerate() {
                for y in 0..m {
                    grads.unary_weights[[f, y]] += h * delta[y];
                }
            }
            grads.bias += &delta;
            if t > 0 {
                for y in 0..m {
                    d_transition[[seq.labels[t - 1], y]] += delta[y];
                }
            }
            if t + 1 < n {
                for y in 0..m {
                    d_transition[[y, seq.labels[t + 1]]] += delta[y];
                }
            }
        }
    }

    chain_transition_grad(params, &params.neighbor_embed, None, &d_transition, &mut grads);
    Ok((loss, grads))
}

/// Piecewise surrogate: every chain factor normalized on its own. Interior
/// pieces normalize over all (previous, current) class pairs; the first
/// position has no left variable and normalizes over the current class only.
pub fn piecewise_nll(
    params: &CrfParams,
    sequences: &[LabeledSequence],
) -> Result<(f64, GradientSet)> {
    check_sequences(params, sequences)?;
    let transition = params.transition_raw();
    let m = params.dims.num_classes;

    let mut loss = 0.0;
    let mut grads = GradientSet::zeros(params.dims);
    let mut d_transition = Array2::zeros((m, m));

    for seq in sequences {
        let unary = unary_rows(params, seq)?;
        let n = seq.labels.len();

        // boundary piece: plain softmax over the first label
        let first = unary.row(0).to_owned();
        let (first_loss, mut delta) = softmax_terms(&first, seq.labels[0]);
        loss += first_loss;
        delta[seq.labels[0]] -= 1.0;
        for (f, &h) in seq.features.row(0).iter().enumerate() {
            for y in 0..m {
                grads.unary_weights[[f, y]] += h * delta[y];
            }
        }
        grads.bias += &delta;

        for t in 1..n {
            // factor table over (previous class c, current class a)
            let urow = unary.row(t);
            let mut max = f64::NEG_INFINITY;
            for c in 0..m {
                for a in 0..m {
                    max = max.max(transition[[c, a]] + urow[a]);
                }
            }
            let mut total = 0.0;
            let mut joint = Array2::zeros((m, m));
            for c in 0..m {
                for a in 0..m {
                    let w = (transition[[c, a]] + urow[a] - max).exp();
                    joint[[c, a]] = w;
                    total += w;
                }
            }
            let observed = transition[[seq.labels[t - 1], seq.labels[t]]] + urow[seq.labels[t]];
            loss += total.ln() + max - observed;
            joint.mapv_inplace(|w| w / total);

            // current-class marginal drives the unary gradient
            let mut delta = Array1::zeros(m);
            for c in 0..m {
                for a in 0..m {
                    delta[a] += joint[[c, a]];
                }
            }
            delta[seq.labels[t]] -= 1.0;
            for (f, &h) in seq.features.row(t).iter().enumerate() {
                for y in 0..m {
                    grads.unary_weights[[f, y]] += h * delta[y];
                }
            }
            grads.bias += &delta;

            d_transition += &joint;
            d_transition[[seq.labels[t - 1], seq.labels[t]]] -= 1.0;
        }
    }

    chain_transition_grad(params, &params.neighbor_embed, None, &d_transition, &mut grads);
    Ok((loss, grads))
}

// Accumulates the input-independent backwards conditional of the node-split
// pseudolikelihood: -log p(previous | current) under the transition column of
// the observed current class.
fn pwpl_backward_accumulate(
    transition: &Array2<f64>,
    sequences: &[LabeledSequence],
    d_transition: &mut Array2<f64>,
) -> f64 {
    let mut loss = 0.0;
    for seq in sequences {
        for t in 1..seq.labels.len() {
            let column = transition.column(seq.labels[t]).to_owned();
            let (term, mut q) = softmax_terms(&column, seq.labels[t - 1]);
            loss += term;
            q[seq.labels[t - 1]] -= 1.0;
            for c in 0..transition.nrows() {
                d_transition[[c, seq.labels[t]]] += q[c];
            }
        }
    }
    loss
}

/// The backwards half of the piecewise-pseudolikelihood objective. Reads only
/// the two embedding matrices and the label sequences, never the unary
/// parameters or the object features.
pub fn pwpl_backward_nll(
    params: &CrfParams,
    sequences: &[LabeledSequence],
) -> Result<(f64, GradientSet)> {
    check_sequences(params, sequences)?;
    let transition = params.transition_raw();
    let mut grads = GradientSet::zeros(params.dims);
    let mut d_transition = Array2::zeros(transition.dim());
    let loss = pwpl_backward_accumulate(&transition, sequences, &mut d_transition);
    chain_transition_grad(params, &params.neighbor_embed, None, &d_transition, &mut grads);
    Ok((loss, grads))
}

/// Piecewise-pseudolikelihood: per position, the locally normalized forward
/// conditional (no batch norm) plus the input-independent backwards
/// conditional. The first position contributes only the forward term.
pub fn pwpl_nll(params: &CrfParams, sequences: &[LabeledSequence]) -> Result<(f64, GradientSet)> {
    check_sequences(params, sequences)?;
    let transition = params.transition_raw();
    let m = params.dims.num_classes;

    let mut forward_loss = 0.0;
    let mut grads = GradientSet::zeros(params.dims);
    let mut d_transition = Array2::zeros((m, m));

    for seq in sequences {
        let unary = unary_rows(params, seq)?;
        for t in 0..seq.labels.len() {
            let mut scores = unary.row(t).to_owned();
            if t > 0 {
                scores += &transition.row(seq.labels[t - 1]);
            }
            let (term, mut delta) = softmax_terms(&scores, seq.labels[t]);
            forward_loss += term;
            delta[seq.labels[t]] -= 1.0;
            for (f, &h) in seq.features.row(t).iter().enumerate() {
                for y in 0..m {
                    grads.unary_weights[[f, y]] += h * delta[y];
                }
            }
            grads.bias += &delta;
            if t > 0 {
                for y in 0..m {
                    d_transition[[seq.labels[t - 1], y]] += delta[y];
                }
            }
        }
    }

    let backward_loss = pwpl_backward_accumulate(&transition, sequences, &mut d_transition);
    chain_transition_grad(params, &params.neighbor_embed, None, &d_transition, &mut grads);
    Ok((forward_loss + backward_loss, grads))
}

/// Quadratic penalty on the embedding and unary weight matrices. The bias and
/// the batch-norm scale/shift are exempt.
pub fn l2_penalty(params: &CrfParams, lambda: f64) -> Result<(f64, GradientSet)> {
    if !(lambda >= 0.0) {
        return Err(Error::Argument("l2 lambda must be >= 0".into()));
    }
    let mut grads = GradientSet::zeros(params.dims);
    if lambda == 0.0 {
        return Ok((0.0, grads));
    }
    let sq = |a: &Array2<f64>| a.iter().map(|v| v * v).sum::<f64>();
    let loss = 0.5
        * lambda
        * (sq(&params.neighbor_embed) + sq(&params.class_embed) + sq(&params.unary_weights));
    grads.neighbor_embed = params.neighbor_embed.mapv(|v| lambda * v);
    grads.class_embed = params.class_embed.mapv(|v| lambda * v);
    grads.unary_weights = params.unary_weights.mapv(|v| lambda * v);
    Ok((loss, grads))
}

/// Number of scalar parameters the gradient checker perturbs.
pub fn param_count(dims: crate::model::ModelDims) -> usize {
    let (s, m, d) = (dims.feature_dim, dims.num_classes, dims.embed_dim);
    2 * d * m + s * m + m + 2 * d
}

fn param_slot(params: &mut CrfParams, index: usize) -> &mut f64 {
    let (s, m, d) = (
        params.dims.feature_dim,
        params.dims.num_classes,
        params.dims.embed_dim,
    );
    let mut i = index;
    if i < d * m {
        return &mut params.neighbor_embed.as_slice_mut().unwrap()[i];
    }
    i -= d * m;
    if i < d * m {
        return &mut params.class_embed.as_slice_mut().unwrap()[i];
    }
    i -= d * m;
    if i < s * m {
        return &mut params.unary_weights.as_slice_mut().unwrap()[i];
    }
    i -= s * m;
    if i < m {
        return &mut params.bias.as_slice_mut().unwrap()[i];
    }
    i -= m;
    if i < d {
        return &mut params.bn.gamma.as_slice_mut().unwrap()[i];
    }
    i -= d;
    &mut params.bn.beta.as_slice_mut().unwrap()[i]
}

fn grad_slot(grads: &GradientSet, dims: crate::model::ModelDims, index: usize) -> f64 {
    let (s, m, d) = (dims.feature_dim, dims.num_classes, dims.embed_dim);
    let mut i = index;
    if i < d * m {
        return grads.neighbor_embed.as_slice().unwrap()[i];
    }
    i -= d * m;
    if i < d * m {
        return grads.class_embed.as_slice().unwrap()[i];
    }
    i -= d * m;
    if i < s * m {
        return grads.unary_weights.as_slice().unwrap()[i];
    }
    i -= s * m;
    if i < m {
        return grads.bias.as_slice().unwrap()[i];
    }
    i -= m;
    if i < d {
        return grads.bn_scale.as_slice().unwrap()[i];
    }
    i -= d;
    grads.bn_shift.as_slice().unwrap()[i]
}

/// Central finite differences over every parameter entry (both embeddings,
/// unary weights, bias, batch-norm scale and shift; running statistics are
/// constants, not parameters).
///
/// Returns the maximum relative error `|a - n| / max(1e-8, |a| + |n|)` between
/// the analytic gradient `a` and the numeric estimate `n`.
pub fn finite_diff_check<F>(objective: F, params: &CrfParams, step: f64) -> Result<f64>
where
    F: Fn(&CrfParams) -> Result<(f64, GradientSet)>,
{
    if !(step > 0.0) {
        return Err(Error::Argument("finite-difference step must be > 0".into()));
    }
    let (_, analytic) = objective(params)?;
    let mut work = params.clone();
    let mut worst: f64 = 0.0;
    for i in 0..param_count(params.dims) {
        let original = *param_slot(&mut work, i);
        *param_slot(&mut work, i) = original + step;
        let (plus, _) = objective(&work)?;
        *param_slot(&mut work, i) = original - step;
        let (minus, _) = objective(&work)?;
        *param_slot(&mut work, i) = original;

        let numeric = (plus - minus) / (2.0 * step);
        let a = grad_slot(&analytic, params.dims, i);
        worst = worst.max((a - numeric).abs() / f64::max(1e-8, a.abs() + numeric.abs()));
    }
    Ok(worst)
}
