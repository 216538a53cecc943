//! Evaluation metrics: object-level error rate, recall at a calibrated
//! precision target, and cosine analysis of the learned class embeddings.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::model::CrfParams;

/// Outcome of a threshold-calibrated evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Percent of objects whose predicted label is wrong.
    pub error_rate: f64,
    /// Percent of accepted objects that are correct.
    pub precision: f64,
    /// Percent of all objects that are accepted and correct.
    pub recall: f64,
    /// Confidence threshold that produced the precision/recall pair.
    pub threshold: f64,
    pub objects: usize,
    pub accepted: usize,
    pub correct_accepted: usize,
    /// False when no threshold reached the precision target; the report then
    /// carries the maximum-precision point instead.
    pub target_attained: bool,
}

impl EvalReport {
    /// Fixed-order key/value block for human consumption.
    pub fn text_block(&self) -> String {
        format!(
            "error_rate: {:.4}\nprecision: {:.4}\nrecall: {:.4}\nthreshold: {:.12}\n\
             objects: {}\naccepted: {}\ncorrect_accepted: {}\ntarget_attained: {}\n",
            self.error_rate,
            self.precision,
            self.recall,
            self.threshold,
            self.objects,
            self.accepted,
            self.correct_accepted,
            self.target_attained
        )
    }

    /// Single tab-separated line for scripting.
    pub fn tsv_line(&self) -> String {
        format!(
            "{:.4}\t{:.4}\t{:.4}\t{:.12}\t{}\t{}\t{}\t{}",
            self.error_rate,
            self.precision,
            self.recall,
            self.threshold,
            self.objects,
            self.accepted,
            self.correct_accepted,
            self.target_attained
        )
    }
}

/// Percent of mismatched labels.
pub fn error_rate(predicted: &[usize], gold: &[usize]) -> Result<f64> {
    if predicted.len() != gold.len() {
        return Err(Error::Argument(format!(
            "{} predictions vs {} gold labels",
            predicted.len(),
            gold.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::Argument("no objects to score".into()));
    }
    let wrong = predicted.iter().zip(gold).filter(|(a, b)| a != b).count();
    Ok(100.0 * wrong as f64 / predicted.len() as f64)
}

/// Sweep acceptance thresholds over the observed confidences and report the
/// smallest threshold whose precision reaches the target (this maximizes
/// recall). When the target is unattainable the maximum-precision point is
/// returned with `target_attained = false`.
pub fn recall_at_precision(
    confidences: &[f64],
    predicted: &[usize],
    gold: &[usize],
    precision_target: f64,
) -> Result<EvalReport> {
    let n = confidences.len();
    if n == 0 {
        return Err(Error::Argument("no objects to score".into()));
    }
    if predicted.len() != n || gold.len() != n {
        return Err(Error::Argument(
            "confidences, predictions, and gold labels must align".into(),
        ));
    }
    if !(precision_target >= 0.0 && precision_target <= 100.0) {
        return Err(Error::Argument(
            "precision target must lie in [0, 100]".into(),
        ));
    }

    let overall_error = error_rate(predicted, gold)?;
    // order objects by confidence descending; every observed confidence is a
    // candidate threshold accepting a prefix
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        confidences[b]
            .partial_cmp(&confidences[a])
            .expect("finite confidences")
            .then(a.cmp(&b))
    });

    let mut best: Option<EvalReport> = None;
    let mut correct_so_far = 0usize;
    let mut i = 0usize;
    while i < n {
        // extend the prefix to include every object tied at this confidence
        let tau = confidences[order[i]];
        while i < n && confidences[order[i]] == tau {
            if predicted[order[i]] == gold[order[i]] {
                correct_so_far += 1;
            }
            i += 1;
        }
        let accepted = i;
        let precision = 100.0 * correct_so_far as f64 / accepted as f64;
        let recall = 100.0 * correct_so_far as f64 / n as f64;
        let report = EvalReport {
            error_rate: overall_error,
            precision,
            recall,
            threshold: tau,
            objects: n,
            accepted,
            correct_accepted: correct_so_far,
            target_attained: precision >= precision_target,
        };
        if report.target_attained {
            // thresholds shrink as the prefix grows; the last attaining
            // prefix has the smallest threshold and the largest recall
            best = Some(report);
        } else if best.is_none()
            || best
                .as_ref()
                .is_some_and(|b| !b.target_attained && report.precision > b.precision)
        {
            best = Some(report);
        }
    }
    Ok(best.expect("nonempty input"))
}

/// Rank the other classes by cosine similarity of their embedding columns.
/// Ties break toward the lower class index; zero-norm comparison columns are
/// skipped.
pub fn nearest_neighbors(
    embedding: ArrayView2<f64>,
    class: usize,
    top_k: usize,
) -> Result<Vec<(usize, f64)>> {
    let m = embedding.ncols();
    if class >= m {
        return Err(Error::Argument(format!(
            "class {class} out of range for {m} classes"
        )));
    }
    let query = embedding.column(class);
    let query_norm = query.dot(&query).sqrt();
    if query_norm == 0.0 {
        return Err(Error::Argument(format!(
            "class {class} has a zero-norm embedding column"
        )));
    }
    let mut ranked: Vec<(usize, f64)> = Vec::with_capacity(m - 1);
    for other in 0..m {
        if other == class {
            continue;
        }
        let column = embedding.column(other);
        let norm = column.dot(&column).sqrt();
        if norm == 0.0 {
            continue;
        }
        ranked.push((other, query.dot(&column) / (query_norm * norm)));
    }
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite cosine").then(a.0.cmp(&b.0)));
    ranked.truncate(top_k);
    Ok(ranked)
}

/// Write one line per class: the class index followed by its neighbor
/// embedding column and its target embedding column, space separated at full
/// round-trip precision.
pub fn export_embeddings(params: &CrfParams, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for class in 0..params.dims.num_classes {
        let mut line = class.to_string();
        for &v in params.neighbor_embed.column(class) {
            line.push(' ');
            line.push_str(&v.to_string());
        }
        for &v in params.class_embed.column(class) {
            line.push(' ');
            line.push_str(&v.to_string());
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}
