//! The comparison systems: a context-free softmax classifier, a CRF whose
//! pairwise potentials are smoothed transition frequencies with a
//! cross-validated unary/pairwise weight, and an EM-trained mixture of Markov
//! chains that picks a transition model per sequence.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::trellis::{decode, DecodeMode, ScoreTable};
use crate::training::{EpochRecord, TrainConfig};

/// Softmax classifier over individual objects; no context.
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryModel {
    pub unary_weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl UnaryModel {
    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn scores(&self, features: ArrayView1<f64>) -> Result<Array1<f64>> {
        if features.len() != self.unary_weights.nrows() {
            return Err(Error::Dimension(format!(
                "feature vector has length {}, expected {}",
                features.len(),
                self.unary_weights.nrows()
            )));
        }
        Ok(features.dot(&self.unary_weights) + &self.bias)
    }

    /// Log-softmax class probabilities for every row of a feature matrix.
    pub fn log_prob_rows(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        let mut out = features.dot(&self.unary_weights) + &self.bias;
        for mut row in out.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.mapv_inplace(|v| v - lse);
        }
        Ok(out)
    }
}

/// Fit the unary baseline by SGD on the mean softmax cross-entropy over
/// individual objects, with L2 on the weight matrix.
pub fn train_unary(dataset: &Dataset, config: &TrainConfig) -> Result<(UnaryModel, Vec<EpochRecord>)> {
    config.validate()?;
    if dataset.num_objects() == 0 {
        return Err(Error::Argument("cannot train on an empty dataset".into()));
    }
    let (s, m) = (dataset.feature_dim, dataset.num_classes);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let scale = config.init_scale;
    let mut weights = Array2::from_shape_fn((s, m), |_| rng.random_range(-scale..=scale));
    let mut bias = Array1::zeros(m);
    let mut vel_w = Array2::<f64>::zeros((s, m));
    let mut vel_b = Array1::<f64>::zeros(m);

    // flatten objects once; shuffling works on indices
    let mut objects: Vec<(ArrayView1<f64>, usize)> = Vec::with_capacity(dataset.num_objects());
    for seq in &dataset.sequences {
        for (t, &y) in seq.labels.iter().enumerate() {
            objects.push((seq.features.row(t), y));
        }
    }
    let mut order: Vec<usize> = (0..objects.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let start = std::time::Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let inv = 1.0 / chunk.len() as f64;
            let mut grad_w = Array2::<f64>::zeros((s, m));
            let mut grad_b = Array1::<f64>::zeros(m);
            let mut loss = 0.0;
            for &i in chunk {
                let (h, y) = objects[i];
                let logits = h.dot(&weights) + &bias;
                let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let mut probs = logits.mapv(|v| (v - max).exp());
                let total: f64 = probs.sum();
                loss += (total.ln() + max - logits[y]) * inv;
                probs.mapv_inplace(|p| p / total);
                probs[y] -= 1.0;
                for (f, &hf) in h.iter().enumerate() {
                    for c in 0..m {
                        grad_w[[f, c]] += hf * probs[c] * inv;
                    }
                }
                grad_b.scaled_add(inv, &probs);
            }
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss at epoch {epoch}, step {step}"
                )));
            }
            epoch_loss += loss * chunk.len() as f64;
            if config.l2 > 0.0 {
                grad_w.scaled_add(config.l2, &weights);
            }
            vel_w.mapv_inplace(|v| v * config.momentum);
            vel_w.scaled_add(1.0, &grad_w);
            weights.scaled_add(-config.lr, &vel_w);
            vel_b.mapv_inplace(|v| v * config.momentum);
            vel_b.scaled_add(1.0, &grad_b);
            bias.scaled_add(-config.lr, &vel_b);
        }
        history.push(EpochRecord {
            epoch,
            loss: epoch_loss / objects.len() as f64,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok((
        UnaryModel {
            unary_weights: weights,
            bias,
        },
        history,
    ))
}

/// Smoothed first-order transition frequencies estimated from label sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionStats {
    /// Row `i` holds `log p(next = j | current = i)`.
    pub log_prob: Array2<f64>,
    pub alpha: f64,
}

/// Estimate `p(j | i) = (count(i -> j) + alpha) / (count(i -> .) + alpha * m)`.
/// Rows with no observations and `alpha = 0` fall back to uniform.
pub fn transition_stats(
    sequences: &[Vec<usize>],
    num_classes: usize,
    alpha: f64,
) -> Result<TransitionStats> {
    if !(alpha >= 0.0) {
        return Err(Error::Argument("smoothing alpha must be >= 0".into()));
    }
    let m = num_classes;
    let mut counts = Array2::<f64>::zeros((m, m));
    for seq in sequences {
        if let Some(&bad) = seq.iter().find(|&&y| y >= m) {
            return Err(Error::Argument(format!(
                "label {bad} out of range for {m} classes"
            )));
        }
        for t in 1..seq.len() {
            counts[[seq[t - 1], seq[t]]] += 1.0;
        }
    }
    let mut log_prob = Array2::zeros((m, m));
    for i in 0..m {
        let row_total = counts.row(i).sum();
        let denom = row_total + alpha * m as f64;
        for j in 0..m {
            let p = if denom > 0.0 {
                (counts[[i, j]] + alpha) / denom
            } else {
                1.0 / m as f64
            };
            log_prob[[i, j]] = p.ln();
        }
    }
    Ok(TransitionStats { log_prob, alpha })
}

pub(crate) fn weighted_transition(log_prob: &Array2<f64>, weight: f64) -> Array2<f64> {
    // weight 0 must kill -inf entries instead of producing NaN
    if weight == 0.0 {
        Array2::zeros(log_prob.dim())
    } else {
        log_prob.mapv(|v| v * weight)
    }
}

/// Decode one sequence of unary log-probabilities against weighted transition
/// statistics.
pub fn stats_crf_decode(
    unary_log_probs: &Array2<f64>,
    stats: &TransitionStats,
    weight: f64,
    mode: DecodeMode,
) -> Result<Vec<usize>> {
    if !(weight >= 0.0) {
        return Err(Error::Argument("transition weight must be >= 0".into()));
    }
    let st = ScoreTable::new(
        unary_log_probs.clone(),
        weighted_transition(&stats.log_prob, weight),
    )?;
    Ok(decode(&st, mode)?.0)
}

/// Pick the grid weight with the lowest validation object error; ties break
/// toward the smaller weight. Returns `(weight, error_rate_percent)`.
pub fn cross_validate_weight(
    unary: &UnaryModel,
    stats: &TransitionStats,
    validation: &Dataset,
    grid: &[f64],
    mode: DecodeMode,
) -> Result<(f64, f64)> {
    if grid.is_empty() {
        return Err(Error::Argument("weight grid must be nonempty".into()));
    }
    let mut grid = grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    let mut best_w = grid[0];
    let mut best_err = f64::INFINITY;
    for &w in &grid {
        let mut wrong = 0usize;
        let mut total = 0usize;
        for seq in &validation.sequences {
            let log_probs = unary.log_prob_rows(&seq.features)?;
            let labels = stats_crf_decode(&log_probs, stats, w, mode)?;
            total += labels.len();
            wrong += labels
                .iter()
                .zip(&seq.labels)
                .filter(|(a, b)| a != b)
                .count();
        }
        let err = 100.0 * wrong as f64 / total as f64;
        if err < best_err {
            best_err = err;
            best_w = w;
        }
    }
    Ok((best_w, best_err))
}

/// One Markov chain of a mixture: prior weight, initial distribution, and a
/// row-stochastic transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovComponent {
    pub prior: f64,
    pub initial: Array1<f64>,
    pub transition: Array2<f64>,
}

/// Mixture of first-order Markov chains over label sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    pub components: Vec<MarkovComponent>,
    pub num_classes: usize,
}

impl MixtureModel {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// `ln prior + ln p(sequence | component)`.
    pub fn component_log_likelihood(&self, component: usize, labels: &[usize]) -> f64 {
        let c = &self.components[component];
        let mut ll = c.prior.ln() + c.initial[labels[0]].ln();
        for t in 1..labels.len() {
            ll += c.transition[[labels[t - 1], labels[t]]].ln();
        }
        ll
    }

    /// Most probable component for a label sequence; ties break toward the
    /// lowest component index.
    pub fn select_component(&self, labels: &[usize]) -> usize {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0usize;
        for c in 0..self.k() {
            let ll = self.component_log_likelihood(c, labels);
            if ll > best {
                best = ll;
                arg = c;
            }
        }
        arg
    }
}

/// Fit a mixture of `k` Markov chains with EM. Returns the model and the
/// per-iteration objective trace, evaluated before each M-step.
///
/// The trace records the quantity the smoothed M-step actually ascends: the
/// data log-likelihood plus `smoothing * sum(ln p)` over every initial and
/// transition probability (the Dirichlet term of additive smoothing). It is
/// non-decreasing per iteration; with zero smoothing it is the plain data
/// log-likelihood.
pub fn em_mixture_markov(
    sequences: &[Vec<usize>],
    num_classes: usize,
    k: usize,
    iterations: usize,
    seed: u64,
    smoothing: f64,
) -> Result<(MixtureModel, Vec<f64>)> {
    if k == 0 {
        return Err(Error::Argument("k must be >= 1".into()));
    }
    if k > sequences.len() {
        return Err(Error::Argument(format!(
            "k = {k} exceeds the {} available sequences",
            sequences.len()
        )));
    }
    if !(smoothing >= 0.0) {
        return Err(Error::Argument("smoothing must be >= 0".into()));
    }
    for seq in sequences {
        if seq.is_empty() {
            return Err(Error::Argument("sequences must be nonempty".into()));
        }
        if seq.iter().any(|&y| y >= num_classes) {
            return Err(Error::Argument("label out of range".into()));
        }
    }

    let m = num_classes;
    let n = sequences.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // a chain estimated from responsibility-weighted counts with additive
    // smoothing; degenerate denominators fall back to uniform
    let fit_component = |weights: &dyn Fn(usize) -> f64, prior: f64, alpha: f64| {
        let mut initial = Array1::<f64>::zeros(m);
        let mut counts = Array2::<f64>::zeros((m, m));
        for (i, seq) in sequences.iter().enumerate() {
            let w = weights(i);
            initial[seq[0]] += w;
            for t in 1..seq.len() {
                counts[[seq[t - 1], seq[t]]] += w;
            }
        }
        let weight_total = initial.sum();
        let init_denom = weight_total + alpha * m as f64;
        let initial = if init_denom > 0.0 {
            initial.mapv(|v| (v + alpha) / init_denom)
        } else {
            Array1::from_elem(m, 1.0 / m as f64)
        };
        let mut transition = Array2::zeros((m, m));
        for i in 0..m {
            let row_total = counts.row(i).sum();
            let denom = row_total + alpha * m as f64;
            for j in 0..m {
                transition[[i, j]] = if denom > 0.0 {
                    (counts[[i, j]] + alpha) / denom
                } else {
                    1.0 / m as f64
                };
            }
        }
        MarkovComponent {
            prior,
            initial,
            transition,
        }
    };

    let m_step = |resp: &Array2<f64>| -> MixtureModel {
        let components = (0..k)
            .map(|c| {
                let prior = resp.column(c).sum() / n as f64;
                fit_component(&|i| resp[[i, c]], prior, smoothing)
            })
            .collect();
        MixtureModel {
            components,
            num_classes: m,
        }
    };

    // Furthest-first seeding: grow the seed set with the sequence that the
    // existing seed chains explain worst (mean log-likelihood per position).
    // Random responsibilities tend to start every component at the pooled
    // statistics, a symmetric point EM is slow to leave. Seeds get add-one
    // smoothing: a single-sequence chain must not punish near misses harder
    // than fully disjoint sequences.
    let seed_alpha = smoothing.max(1.0);
    let mut seed_ids = vec![rng.random_range(0..n)];
    let mut seed_components =
        vec![fit_component(&|i| f64::from(u8::from(i == seed_ids[0])), 1.0, seed_alpha)];
    while seed_ids.len() < k {
        let mut furthest = (f64::INFINITY, usize::MAX);
        for i in 0..n {
            if seed_ids.contains(&i) {
                continue;
            }
            let seq = &sequences[i];
            let mut best = f64::NEG_INFINITY;
            for c in &seed_components {
                let mut ll = c.initial[seq[0]].ln();
                for t in 1..seq.len() {
                    ll += c.transition[[seq[t - 1], seq[t]]].ln();
                }
                best = best.max(ll / seq.len() as f64);
            }
            if best < furthest.0 {
                furthest = (best, i);
            }
        }
        let id = furthest.1;
        seed_ids.push(id);
        seed_components.push(fit_component(&|i| f64::from(u8::from(i == id)), 1.0, seed_alpha));
    }
    let mut responsibilities = Array2::zeros((n, k));
    for (i, seq) in sequences.iter().enumerate() {
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (c, comp) in seed_components.iter().enumerate() {
            let mut ll = comp.initial[seq[0]].ln();
            for t in 1..seq.len() {
                ll += comp.transition[[seq[t - 1], seq[t]]].ln();
            }
            if ll > best.0 {
                best = (ll, c);
            }
        }
        responsibilities[[i, best.1]] = 1.0;
    }

    let smoothing_term = |model: &MixtureModel| -> f64 {
        if smoothing == 0.0 {
            return 0.0;
        }
        let mut total = 0.0;
        for c in &model.components {
            total += c.initial.iter().map(|p| p.ln()).sum::<f64>();
            total += c.transition.iter().map(|p| p.ln()).sum::<f64>();
        }
        smoothing * total
    };

    let mut model = m_step(&responsibilities);
    let mut trace = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        // E-step: posterior over components per sequence, plus the trace value
        let mut total_ll = 0.0;
        for (i, seq) in sequences.iter().enumerate() {
            let lls: Vec<f64> = (0..k)
                .map(|c| model.component_log_likelihood(c, seq))
                .collect();
            let max = lls.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = max + lls.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total_ll += lse;
            for c in 0..k {
                responsibilities[[i, c]] = (lls[c] - lse).exp();
            }
        }
        trace.push(total_ll + smoothing_term(&model));
        model = m_step(&responsibilities);
    }
    Ok((model, trace))
}

/// Decode with the mixture: select the component that best explains the
/// unary-argmax proxy labeling, then run the weighted stats decode with that
/// component's transitions.
pub fn mixture_decode(
    mixture: &MixtureModel,
    unary_log_probs: &Array2<f64>,
    weight: f64,
    mode: DecodeMode,
) -> Result<Vec<usize>> {
    if !(weight >= 0.0) {
        return Err(Error::Argument("transition weight must be >= 0".into()));
    }
    let proxy: Vec<usize> = unary_log_probs
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0usize;
            for (y, &v) in row.iter().enumerate() {
                if v > best {
                    best = v;
                    arg = y;
                }
            }
            arg
        })
        .collect();
    let component = mixture.select_component(&proxy);
    let log_trans = mixture.components[component].transition.mapv(f64::ln);
    let st = ScoreTable::new(
        unary_log_probs.clone(),
        weighted_transition(&log_trans, weight),
    )?;
    Ok(decode(&st, mode)?.0)
}
