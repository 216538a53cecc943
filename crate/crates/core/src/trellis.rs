//! Exact inference on a linear chain of class labels.
//!
//! Everything runs in the log domain with 64-bit floats. The first position
//! carries no pairwise term (the chain has no left neighbor there), so the
//! forward recursion starts from the unary scores alone. A brute-force
//! enumeration oracle backs the dynamic programs in tests.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Log-domain scores for one sequence: per-position unary rows plus a shared
/// transition matrix. `-inf` entries are allowed and mark forbidden choices;
/// `NaN` and `+inf` are rejected.
#[derive(Debug, Clone)]
pub struct ScoreTable {
    /// `len x num_classes` unary log-potentials.
    pub unary: Array2<f64>,
    /// `num_classes x num_classes`; entry `(i, j)` scores left class `i`
    /// followed by class `j`.
    pub transition: Array2<f64>,
}

impl ScoreTable {
    pub fn new(unary: Array2<f64>, transition: Array2<f64>) -> Result<Self> {
        let m = unary.ncols();
        if unary.nrows() < 1 {
            return Err(Error::Argument("sequence must have at least one position".into()));
        }
        if transition.dim() != (m, m) {
            return Err(Error::Dimension(format!(
                "transition is {:?}, expected ({m}, {m})",
                transition.dim()
            )));
        }
        let ok = |v: &f64| !v.is_nan() && *v != f64::INFINITY;
        if !unary.iter().all(ok) || !transition.iter().all(ok) {
            return Err(Error::Numeric("scores must not contain NaN or +inf".into()));
        }
        Ok(Self { unary, transition })
    }

    pub fn len(&self) -> usize {
        self.unary.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.unary.nrows() == 0
    }

    pub fn num_classes(&self) -> usize {
        self.unary.ncols()
    }

    /// Unnormalized log score of one full labeling.
    pub fn labeling_score(&self, labels: &[usize]) -> Result<f64> {
        self.check_labels(labels)?;
        let mut acc = self.unary[[0, labels[0]]];
        for t in 1..labels.len() {
            acc += self.transition[[labels[t - 1], labels[t]]];
            acc += self.unary[[t, labels[t]]];
        }
        Ok(acc)
    }

    fn check_labels(&self, labels: &[usize]) -> Result<()> {
        if labels.len() != self.len() {
            return Err(Error::Argument(format!(
                "got {} labels for a sequence of length {}",
                labels.len(),
                self.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= self.num_classes()) {
            return Err(Error::Argument(format!(
                "label {bad} out of range for {} classes",
                self.num_classes()
            )));
        }
        Ok(())
    }
}

/// Overflow-safe `log(sum(exp(v)))`.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Argument("log_sum_exp of an empty vector".into()));
    }
    Ok(lse(values.iter().copied()))
}

// Internal variant for iterators known to be nonempty.
fn lse(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Forward/backward messages and the log partition function.
#[derive(Debug, Clone)]
pub struct Trellis {
    pub log_alpha: Array2<f64>,
    pub log_beta: Array2<f64>,
    pub log_z: f64,
}

/// Run the forward-backward recursions over a score table.
pub fn forward_backward(st: &ScoreTable) -> Result<Trellis> {
    let (n, m) = (st.len(), st.num_classes());
    let mut log_alpha = Array2::from_elem((n, m), f64::NEG_INFINITY);
    let mut log_beta = Array2::zeros((n, m));

    for y in 0..m {
        log_alpha[[0, y]] = st.unary[[0, y]];
    }
    for t in 1..n {
        for y in 0..m {
            let prev = (0..m).map(|p| log_alpha[[t - 1, p]] + st.transition[[p, y]]);
            log_alpha[[t, y]] = st.unary[[t, y]] + lse(prev);
        }
    }
    for t in (0..n.saturating_sub(1)).rev() {
        for y in 0..m {
            let next = (0..m)
                .map(|q| st.transition[[y, q]] + st.unary[[t + 1, q]] + log_beta[[t + 1, q]]);
            log_beta[[t, y]] = lse(next);
        }
    }

    let log_z = lse((0..m).map(|y| log_alpha[[n - 1, y]]));
    if !log_z.is_finite() {
        return Err(Error::Numeric(format!(
            "log partition function is {log_z}; no admissible labeling"
        )));
    }
    Ok(Trellis {
        log_alpha,
        log_beta,
        log_z,
    })
}

/// Log-probability of one labeling under the chain distribution. Never above
/// zero up to rounding.
pub fn sequence_log_likelihood(st: &ScoreTable, trellis: &Trellis, labels: &[usize]) -> Result<f64> {
    Ok(st.labeling_score(labels)? - trellis.log_z)
}

/// Per-position posterior distribution over classes, `len x num_classes`.
pub fn node_marginals(trellis: &Trellis) -> Array2<f64> {
    let (n, m) = trellis.log_alpha.dim();
    Array2::from_shape_fn((n, m), |(t, y)| {
        (trellis.log_alpha[[t, y]] + trellis.log_beta[[t, y]] - trellis.log_z).exp()
    })
}

/// Posterior over label pairs at each adjacent position, `len - 1` slices of
/// `num_classes x num_classes`.
pub fn pair_marginals(st: &ScoreTable, trellis: &Trellis) -> Result<Vec<Array2<f64>>> {
    let (n, m) = (st.len(), st.num_classes());
    if n < 2 {
        return Err(Error::Argument(
            "pair marginals need a sequence of length >= 2".into(),
        ));
    }
    let mut out = Vec::with_capacity(n - 1);
    for t in 0..n - 1 {
        out.push(Array2::from_shape_fn((m, m), |(i, j)| {
            (trellis.log_alpha[[t, i]]
                + st.transition[[i, j]]
                + st.unary[[t + 1, j]]
                + trellis.log_beta[[t + 1, j]]
                - trellis.log_z)
                .exp()
        }));
    }
    Ok(out)
}

/// Most probable labeling and its unnormalized log score.
///
/// Ties resolve toward the lowest class index at the final maximization and
/// at every backtrack step, so decoding is deterministic.
pub fn viterbi(st: &ScoreTable) -> (Vec<usize>, f64) {
    let (n, m) = (st.len(), st.num_classes());
    let mut delta = Array2::from_elem((n, m), f64::NEG_INFINITY);
    let mut back = Array2::zeros((n, m));

    for y in 0..m {
        delta[[0, y]] = st.unary[[0, y]];
    }
    for t in 1..n {
        for y in 0..m {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0usize;
            for p in 0..m {
                let v = delta[[t - 1, p]] + st.transition[[p, y]];
                if v > best {
                    best = v;
                    arg = p;
                }
            }
            delta[[t, y]] = st.unary[[t, y]] + best;
            back[[t, y]] = arg;
        }
    }

    let mut best = f64::NEG_INFINITY;
    let mut last = 0usize;
    for y in 0..m {
        if delta[[n - 1, y]] > best {
            best = delta[[n - 1, y]];
            last = y;
        }
    }
    let mut labels = vec![0usize; n];
    labels[n - 1] = last;
    for t in (0..n - 1).rev() {
        labels[t] = back[[t + 1, labels[t + 1]]];
    }
    (labels, best)
}

/// Decoding rule applied to a score table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    /// Most probable label sequence.
    Viterbi,
    /// Independent per-position argmax of the node marginals.
    Marginal,
}

impl std::str::FromStr for DecodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "viterbi" => Ok(DecodeMode::Viterbi),
            "marginal" => Ok(DecodeMode::Marginal),
            other => Err(Error::Argument(format!(
                "unknown decode mode {other:?}; expected viterbi or marginal"
            ))),
        }
    }
}

/// Decode one sequence. Marginal mode also returns the marginal probability
/// of each chosen label as a per-object confidence.
pub fn decode(st: &ScoreTable, mode: DecodeMode) -> Result<(Vec<usize>, Option<Vec<f64>>)> {
    match mode {
        DecodeMode::Viterbi => Ok((viterbi(st).0, None)),
        DecodeMode::Marginal => {
            let trellis = forward_backward(st)?;
            let marginals = node_marginals(&trellis);
            let mut labels = Vec::with_capacity(st.len());
            let mut confidences = Vec::with_capacity(st.len());
            for row in marginals.rows() {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0usize;
                for (y, &p) in row.iter().enumerate() {
                    if p > best {
                        best = p;
                        arg = y;
                    }
                }
                labels.push(arg);
                confidences.push(best);
            }
            Ok((labels, Some(confidences)))
        }
    }
}

/// Everything the exhaustive enumeration can tell us about a small instance.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub log_z: f64,
    pub best_labels: Vec<usize>,
    pub best_score: f64,
    pub node_marginals: Array2<f64>,
    pub pair_marginals: Vec<Array2<f64>>,
}

const ORACLE_LIMIT: u64 = 1_000_000;

/// Compute partition function, marginals, and the argmax labeling by explicit
/// enumeration over every label sequence. Ties in the argmax resolve the same
/// way `viterbi` resolves them (lowest class index, backtracking from the
/// final position).
pub fn brute_force_oracle(st: &ScoreTable) -> Result<OracleResult> {
    let (n, m) = (st.len(), st.num_classes());
    let mut total: u64 = 1;
    for _ in 0..n {
        total = total
            .checked_mul(m as u64)
            .filter(|&t| t <= ORACLE_LIMIT)
            .ok_or_else(|| {
                Error::Capacity(format!("enumeration of {m}^{n} sequences exceeds {ORACLE_LIMIT}"))
            })?;
    }

    let mut scores = Vec::with_capacity(total as usize);
    let mut labels = vec![0usize; n];
    let mut best_score = f64::NEG_INFINITY;
    let mut best_labels = labels.clone();
    for code in 0..total {
        // position 0 is the least significant digit: enumeration order then
        // matches the backtracking tie-break of `viterbi`
        let mut rem = code;
        for slot in labels.iter_mut() {
            *slot = (rem % m as u64) as usize;
            rem /= m as u64;
        }
        let mut acc = st.unary[[0, labels[0]]];
        for t in 1..n {
            acc += st.transition[[labels[t - 1], labels[t]]];
            acc += st.unary[[t, labels[t]]];
        }
        if acc > best_score {
            best_score = acc;
            best_labels.copy_from_slice(&labels);
        }
        scores.push(acc);
    }

    let log_z = lse(scores.iter().copied());
    if !log_z.is_finite() {
        return Err(Error::Numeric("no admissible labeling".into()));
    }

    let mut node = Array2::zeros((n, m));
    let mut pair = vec![Array2::zeros((m, m)); n.saturating_sub(1)];
    for (code, &score) in scores.iter().enumerate() {
        let w = (score - log_z).exp();
        let mut rem = code as u64;
        let mut prev = 0usize;
        for t in 0..n {
            let y = (rem % m as u64) as usize;
            rem /= m as u64;
            node[[t, y]] += w;
            if t > 0 {
                pair[t - 1][[prev, y]] += w;
            }
            prev = y;
        }
    }

    Ok(OracleResult {
        log_z,
        best_labels,
        best_score,
        node_marginals: node,
        pair_marginals: pair,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_table(rng: &mut ChaCha8Rng, n: usize, m: usize) -> ScoreTable {
        ScoreTable::new(
            Array2::from_shape_fn((n, m), |_| rng.random_range(-2.0..2.0)),
            Array2::from_shape_fn((m, m), |_| rng.random_range(-2.0..2.0)),
        )
        .unwrap()
    }

    #[test]
    fn log_sum_exp_basics() {
        assert_eq!(log_sum_exp(&[0.0]).unwrap(), 0.0);
        let v = log_sum_exp(&[1.0_f64.ln(), 3.0_f64.ln()]).unwrap();
        assert!((v - 4.0_f64.ln()).abs() < 1e-12);
        let big = log_sum_exp(&[1000.0, 1000.0]).unwrap();
        assert!((big - (1000.0 + 2.0_f64.ln())).abs() < 1e-12);
        assert_eq!(
            log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]).unwrap(),
            f64::NEG_INFINITY
        );
        assert!(matches!(log_sum_exp(&[]), Err(Error::Argument(_))));
    }

    #[test]
    fn uniform_model_partition_function() {
        let st = ScoreTable::new(Array2::zeros((3, 4)), Array2::zeros((4, 4))).unwrap();
        let tr = forward_backward(&st).unwrap();
        assert!((tr.log_z - 3.0 * 4.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_position_partition_function_is_row_lse() {
        let st = ScoreTable::new(array![[0.3, -1.0, 2.0]], Array2::zeros((3, 3))).unwrap();
        let tr = forward_backward(&st).unwrap();
        let expect = log_sum_exp(&[0.3, -1.0, 2.0]).unwrap();
        assert!((tr.log_z - expect).abs() < 1e-12);
    }

    #[test]
    fn random_instances_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..25 {
            let st = random_table(&mut rng, 5, 4);
            let tr = forward_backward(&st).unwrap();
            let oracle = brute_force_oracle(&st).unwrap();
            assert!((tr.log_z - oracle.log_z).abs() < 1e-9, "trial {trial}");

            let node = node_marginals(&tr);
            for (a, b) in node.iter().zip(oracle.node_marginals.iter()) {
                assert!((a - b).abs() < 1e-8);
            }
            let pair = pair_marginals(&st, &tr).unwrap();
            for (pa, pb) in pair.iter().zip(oracle.pair_marginals.iter()) {
                for (a, b) in pa.iter().zip(pb.iter()) {
                    assert!((a - b).abs() < 1e-8);
                }
            }

            let (labels, score) = viterbi(&st);
            assert_eq!(score.to_bits(), oracle.best_score.to_bits(), "trial {trial}");
            assert_eq!(labels, oracle.best_labels, "trial {trial}");
        }
    }

    #[test]
    fn sequence_log_likelihood_uniform_and_single() {
        let st = ScoreTable::new(Array2::zeros((3, 4)), Array2::zeros((4, 4))).unwrap();
        let tr = forward_backward(&st).unwrap();
        let ll = sequence_log_likelihood(&st, &tr, &[1, 3, 0]).unwrap();
        assert!((ll + 3.0 * 4.0_f64.ln()).abs() < 1e-12);

        let st1 = ScoreTable::new(array![[1.0, -0.5, 0.2]], Array2::zeros((3, 3))).unwrap();
        let tr1 = forward_backward(&st1).unwrap();
        let z = log_sum_exp(&[1.0, -0.5, 0.2]).unwrap();
        let ll1 = sequence_log_likelihood(&st1, &tr1, &[2]).unwrap();
        assert!((ll1 - (0.2 - z)).abs() < 1e-12);
    }

    #[test]
    fn sequence_log_likelihood_matches_oracle_and_is_nonpositive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let st = random_table(&mut rng, 4, 3);
            let tr = forward_backward(&st).unwrap();
            let oracle = brute_force_oracle(&st).unwrap();
            let labels = [2, 0, 1, 1];
            let ll = sequence_log_likelihood(&st, &tr, &labels).unwrap();
            let direct = st.labeling_score(&labels).unwrap() - oracle.log_z;
            assert!((ll - direct).abs() < 1e-9);
            assert!(ll <= 1e-12);
        }
    }

    #[test]
    fn sequence_log_likelihood_rejects_bad_labels() {
        let st = ScoreTable::new(Array2::zeros((2, 3)), Array2::zeros((3, 3))).unwrap();
        let tr = forward_backward(&st).unwrap();
        assert!(sequence_log_likelihood(&st, &tr, &[0, 5]).is_err());
        assert!(sequence_log_likelihood(&st, &tr, &[0]).is_err());
    }

    #[test]
    fn node_marginals_uniform_and_single_position() {
        let st = ScoreTable::new(Array2::zeros((3, 4)), Array2::zeros((4, 4))).unwrap();
        let tr = forward_backward(&st).unwrap();
        for &p in node_marginals(&tr).iter() {
            assert!((p - 0.25).abs() < 1e-12);
        }

        let st1 = ScoreTable::new(array![[1.0, 2.0, 0.0]], Array2::zeros((3, 3))).unwrap();
        let tr1 = forward_backward(&st1).unwrap();
        let node = node_marginals(&tr1);
        let z: f64 = [1.0_f64, 2.0, 0.0].iter().map(|v| v.exp()).sum();
        for (y, &p) in node.row(0).iter().enumerate() {
            let expect = [1.0_f64, 2.0, 0.0][y].exp() / z;
            assert!((p - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_marginals_uniform_and_forbidden_transitions() {
        let st = ScoreTable::new(Array2::zeros((3, 4)), Array2::zeros((4, 4))).unwrap();
        let tr = forward_backward(&st).unwrap();
        for slice in pair_marginals(&st, &tr).unwrap() {
            for &p in slice.iter() {
                assert!((p - 1.0 / 16.0).abs() < 1e-12);
            }
        }

        // off-diagonal transitions forbidden: all pair mass sits on the diagonal
        let mut trans = Array2::from_elem((3, 3), f64::NEG_INFINITY);
        for i in 0..3 {
            trans[[i, i]] = 0.0;
        }
        let st = ScoreTable::new(Array2::zeros((4, 3)), trans).unwrap();
        let tr = forward_backward(&st).unwrap();
        for slice in pair_marginals(&st, &tr).unwrap() {
            for i in 0..3 {
                for j in 0..3 {
                    if i == j {
                        assert!((slice[[i, j]] - 1.0 / 3.0).abs() < 1e-12);
                    } else {
                        assert_eq!(slice[[i, j]], 0.0);
                    }
                }
            }
        }

        let st1 = ScoreTable::new(Array2::zeros((1, 3)), Array2::zeros((3, 3))).unwrap();
        let tr1 = forward_backward(&st1).unwrap();
        assert!(pair_marginals(&st1, &tr1).is_err());
    }

    #[test]
    fn marginals_are_proper_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let st = random_table(&mut rng, 6, 4);
            let tr = forward_backward(&st).unwrap();
            for row in node_marginals(&tr).rows() {
                assert!(row.iter().all(|&p| p >= 0.0));
                assert!((row.sum() - 1.0).abs() < 1e-10);
            }
            for slice in pair_marginals(&st, &tr).unwrap() {
                assert!(slice.iter().all(|&p| p >= 0.0));
                assert!((slice.sum() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn pair_marginals_marginalize_to_node_marginals() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let st = random_table(&mut rng, 5, 4);
        let tr = forward_backward(&st).unwrap();
        let node = node_marginals(&tr);
        let pair = pair_marginals(&st, &tr).unwrap();
        for t in 0..4 {
            for i in 0..4 {
                let sum_j = pair[t].row(i).sum();
                assert!((sum_j - node[[t, i]]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn alpha_beta_consistency_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..30 {
            let n = rng.random_range(1..=6);
            let m = rng.random_range(2..=5);
            let st = random_table(&mut rng, n, m);
            let tr = forward_backward(&st).unwrap();
            for t in 0..n {
                let v: Vec<f64> = (0..m)
                    .map(|y| tr.log_alpha[[t, y]] + tr.log_beta[[t, y]])
                    .collect();
                assert!((log_sum_exp(&v).unwrap() - tr.log_z).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn constant_shift_of_one_position_moves_log_z_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let st = random_table(&mut rng, 5, 4);
        let tr = forward_backward(&st).unwrap();
        let node = node_marginals(&tr);

        let c = 1.7;
        let mut shifted = st.clone();
        for y in 0..4 {
            shifted.unary[[2, y]] += c;
        }
        let tr2 = forward_backward(&shifted).unwrap();
        assert!((tr2.log_z - tr.log_z - c).abs() < 1e-10);
        for (a, b) in node_marginals(&tr2).iter().zip(node.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn viterbi_all_zero_scores_breaks_ties_to_class_zero() {
        let st = ScoreTable::new(Array2::zeros((4, 3)), Array2::zeros((3, 3))).unwrap();
        let (labels, score) = viterbi(&st);
        assert_eq!(labels, vec![0, 0, 0, 0]);
        assert_eq!(score, 0.0);
    }

    #[test]
    fn viterbi_zero_transition_is_positionwise_argmax() {
        let unary = array![[0.0, 3.0, 1.0], [2.0, 0.0, 1.0], [0.0, 1.0, 5.0]];
        let st = ScoreTable::new(unary, Array2::zeros((3, 3))).unwrap();
        let (labels, _) = viterbi(&st);
        assert_eq!(labels, vec![1, 0, 2]);
    }

    #[test]
    fn viterbi_beats_random_labelings() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let st = random_table(&mut rng, 6, 4);
        let (_, best) = viterbi(&st);
        for _ in 0..100 {
            let labels: Vec<usize> = (0..6).map(|_| rng.random_range(0..4)).collect();
            assert!(st.labeling_score(&labels).unwrap() <= best);
        }
    }

    #[test]
    fn oracle_is_self_consistent_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let st = random_table(&mut rng, 4, 3);
        let oracle = brute_force_oracle(&st).unwrap();
        // uniform model reduces to n * ln m
        let uni = ScoreTable::new(Array2::zeros((3, 4)), Array2::zeros((4, 4))).unwrap();
        assert!((brute_force_oracle(&uni).unwrap().log_z - 3.0 * 4.0_f64.ln()).abs() < 1e-12);
        // exp of per-sequence scores sums back to exp(log_z)
        let mut total = 0.0;
        for code in 0..81u64 {
            let mut rem = code;
            let labels: Vec<usize> = (0..4)
                .map(|_| {
                    let y = (rem % 3) as usize;
                    rem /= 3;
                    y
                })
                .collect();
            total += st.labeling_score(&labels).unwrap().exp();
        }
        assert!((total.ln() - oracle.log_z).abs() < 1e-9);
        // single position reduces to softmax quantities
        let st1 = ScoreTable::new(array![[1.0, 0.0]], Array2::zeros((2, 2))).unwrap();
        let o1 = brute_force_oracle(&st1).unwrap();
        assert_eq!(o1.best_labels, vec![0]);
        assert!((o1.node_marginals[[0, 0]] - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn oracle_rejects_oversized_instances() {
        let st = ScoreTable::new(Array2::zeros((30, 4)), Array2::zeros((4, 4))).unwrap();
        assert!(matches!(brute_force_oracle(&st), Err(Error::Capacity(_))));
    }

    #[test]
    fn score_table_rejects_nan_and_positive_infinity() {
        let mut unary = Array2::zeros((2, 2));
        unary[[0, 0]] = f64::NAN;
        assert!(ScoreTable::new(unary, Array2::zeros((2, 2))).is_err());
        let mut trans = Array2::zeros((2, 2));
        trans[[1, 1]] = f64::INFINITY;
        assert!(ScoreTable::new(Array2::zeros((2, 2)), trans).is_err());
    }
}
