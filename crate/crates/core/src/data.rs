//! Datasets: the on-disk format, train/test splitting, and a synthetic
//! generator for benchmarking.
//!
//! The generator imitates the regime the model is built for: many classes
//! arranged in groups whose members are nearly indistinguishable by their
//! features, while the label chain carries strong left-to-right structure
//! (heavy self-repetition and within-group transitions).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::training::FeatureStats;

/// One ordered sequence of objects: a feature row and a class label per
/// position.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    /// `len x feature_dim`, one row per object.
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

impl LabeledSequence {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// A collection of labeled sequences with consistent dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sequences: Vec<LabeledSequence>,
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Standardization statistics, present once features were standardized.
    pub stats: Option<FeatureStats>,
}

impl Dataset {
    pub fn new(
        sequences: Vec<LabeledSequence>,
        num_classes: usize,
        feature_dim: usize,
    ) -> Result<Self> {
        for (i, seq) in sequences.iter().enumerate() {
            if seq.is_empty() {
                return Err(Error::Argument(format!("sequence {i} is empty")));
            }
            if seq.features.nrows() != seq.labels.len() {
                return Err(Error::Shape(format!(
                    "sequence {i}: {} feature rows vs {} labels",
                    seq.features.nrows(),
                    seq.labels.len()
                )));
            }
            if seq.features.ncols() != feature_dim {
                return Err(Error::Shape(format!(
                    "sequence {i}: feature width {} vs declared {feature_dim}",
                    seq.features.ncols()
                )));
            }
            if let Some(&bad) = seq.labels.iter().find(|&&y| y >= num_classes) {
                return Err(Error::Shape(format!(
                    "sequence {i}: label {bad} out of range for {num_classes} classes"
                )));
            }
            if seq.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("sequence {i}: non-finite feature")));
            }
        }
        Ok(Self {
            sequences,
            num_classes,
            feature_dim,
            stats: None,
        })
    }

    pub fn num_sequences(&self) -> usize {
        self.sequences.len()
    }

    pub fn num_objects(&self) -> usize {
        self.sequences.iter().map(LabeledSequence::len).sum()
    }

    pub fn label_sequences(&self) -> Vec<Vec<usize>> {
        self.sequences.iter().map(|s| s.labels.clone()).collect()
    }

    /// All gold labels in sequence order, flattened.
    pub fn flat_labels(&self) -> Vec<usize> {
        self.sequences.iter().flat_map(|s| s.labels.clone()).collect()
    }
}

/// Configuration of the synthetic benchmark generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub num_classes: usize,
    /// Classes `[g * group_size, (g+1) * group_size)` form group `g`.
    pub group_size: usize,
    pub feature_dim: usize,
    /// Probability that the next label repeats the current one.
    pub p_repeat: f64,
    /// Probability that the next label is drawn uniformly from the other
    /// members of the current label's group.
    pub p_group: f64,
    /// Feature-mean separation between members of one group.
    pub delta_within: f64,
    /// Radius of the sphere the group centroids sit on.
    pub delta_between: f64,
    pub noise_sigma: f64,
    pub length_min: usize,
    pub length_max: usize,
    pub num_sequences: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_classes: 50,
            group_size: 5,
            feature_dim: 16,
            p_repeat: 0.5,
            p_group: 0.3,
            delta_within: 0.4,
            delta_between: 4.0,
            noise_sigma: 1.0,
            length_min: 4,
            length_max: 12,
            num_sequences: 2500,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Argument("num_classes must be >= 2".into()));
        }
        if self.group_size == 0 || self.num_classes % self.group_size != 0 {
            return Err(Error::Argument(
                "group_size must divide num_classes".into(),
            ));
        }
        if self.p_group > 0.0 && self.group_size < 2 {
            return Err(Error::Argument(
                "p_group > 0 needs groups of at least 2 classes".into(),
            ));
        }
        if self.feature_dim < 1 {
            return Err(Error::Argument("feature_dim must be >= 1".into()));
        }
        if !(self.p_repeat >= 0.0 && self.p_group >= 0.0 && self.p_repeat + self.p_group <= 1.0) {
            return Err(Error::Argument(
                "need p_repeat, p_group >= 0 with p_repeat + p_group <= 1".into(),
            ));
        }
        if self.length_min < 2 || self.length_max < self.length_min {
            return Err(Error::Argument(
                "need 2 <= length_min <= length_max".into(),
            ));
        }
        if self.num_sequences == 0 {
            return Err(Error::Argument("num_sequences must be >= 1".into()));
        }
        if !(self.noise_sigma >= 0.0) || !(self.delta_within >= 0.0) || !(self.delta_between >= 0.0)
        {
            return Err(Error::Argument(
                "noise and separation scales must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// The exact label transition matrix the generator samples from. Repeats
    /// happen only through the dedicated repeat branch; the group and uniform
    /// branches exclude the current label.
    pub fn transition_matrix(&self) -> Array2<f64> {
        let m = self.num_classes;
        let g = self.group_size;
        let p_rest = 1.0 - self.p_repeat - self.p_group;
        let mut t = Array2::zeros((m, m));
        for i in 0..m {
            let group = i / g;
            for j in 0..m {
                let mut p = 0.0;
                if j == i {
                    p += self.p_repeat;
                } else {
                    p += p_rest / (m - 1) as f64;
                    if j / g == group {
                        p += self.p_group / (g - 1) as f64;
                    }
                }
                t[[i, j]] = p;
            }
        }
        t
    }

    // Class feature means are derived from the seed alone, so they do not
    // shift when num_sequences changes.
    fn class_means(&self) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        let (m, s) = (self.num_classes, self.feature_dim);
        let num_groups = m / self.group_size;
        let unit = |rng: &mut ChaCha8Rng| -> Array1<f64> {
            loop {
                let v: Array1<f64> = Array1::from_shape_fn(s, |_| StandardNormal.sample(rng));
                let norm = v.dot(&v).sqrt();
                if norm > 1e-12 {
                    return v / norm;
                }
            }
        };
        let mut means = Array2::zeros((m, s));
        for g in 0..num_groups {
            let centroid = unit(&mut rng) * self.delta_between;
            for member in 0..self.group_size {
                let offset = unit(&mut rng) * self.delta_within;
                let row = g * self.group_size + member;
                for f in 0..s {
                    means[[row, f]] = centroid[f] + offset[f];
                }
            }
        }
        means
    }
}

/// Sample a dataset from the configured label chain and feature model. Fully
/// determined by `cfg.seed`.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let means = cfg.class_means();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (m, s, g) = (cfg.num_classes, cfg.feature_dim, cfg.group_size);

    let mut sequences = Vec::with_capacity(cfg.num_sequences);
    for _ in 0..cfg.num_sequences {
        let n = rng.random_range(cfg.length_min..=cfg.length_max);
        let mut labels = Vec::with_capacity(n);
        labels.push(rng.random_range(0..m));
        for _ in 1..n {
            let current = *labels.last().expect("nonempty");
            let u: f64 = rng.random();
            let next = if u < cfg.p_repeat {
                current
            } else if u < cfg.p_repeat + cfg.p_group {
                // another member of the current group
                let base = current / g * g;
                let pick = rng.random_range(0..g - 1);
                let candidate = base + pick;
                if candidate >= current {
                    candidate + 1
                } else {
                    candidate
                }
            } else {
                // any other class
                let pick = rng.random_range(0..m - 1);
                if pick >= current {
                    pick + 1
                } else {
                    pick
                }
            };
            labels.push(next);
        }
        let mut features = Array2::zeros((n, s));
        for (t, &y) in labels.iter().enumerate() {
            for f in 0..s {
                let noise: f64 = StandardNormal.sample(&mut rng);
                features[[t, f]] = means[[y, f]] + cfg.noise_sigma * noise;
            }
        }
        sequences.push(LabeledSequence { features, labels });
    }
    Dataset::new(sequences, m, s)
}

#[derive(Serialize, Deserialize)]
struct SequenceRecord {
    labels: Vec<usize>,
    features: Vec<Vec<f64>>,
}

const DATA_HEADER_PREFIX: &str = "CECRF-DATA v1";

/// Write a dataset as line-delimited text: a header with the dimensions,
/// then one record per sequence.
pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(
        out,
        "{DATA_HEADER_PREFIX} m={} s={}",
        dataset.num_classes, dataset.feature_dim
    )?;
    for seq in &dataset.sequences {
        let record = SequenceRecord {
            labels: seq.labels.clone(),
            features: seq.features.rows().into_iter().map(|r| r.to_vec()).collect(),
        };
        let line = serde_json::to_string(&record)
            .map_err(|e| Error::Argument(format!("serialization failed: {e}")))?;
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let rest = line.strip_prefix(DATA_HEADER_PREFIX).ok_or_else(|| Error::Version(format!(
        "unrecognized dataset header {line:?}; expected {DATA_HEADER_PREFIX:?}"
    )))?;
    let mut m = None;
    let mut s = None;
    for token in rest.split_whitespace() {
        if let Some(v) = token.strip_prefix("m=") {
            m = v.parse::<usize>().ok();
        } else if let Some(v) = token.strip_prefix("s=") {
            s = v.parse::<usize>().ok();
        }
    }
    match (m, s) {
        (Some(m), Some(s)) => Ok((m, s)),
        _ => Err(Error::Parse {
            line: 1,
            message: "header must carry m=<int> s=<int>".into(),
        }),
    }
}

/// Read a dataset written by [`save_dataset`].
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        message: "empty file".into(),
    })??;
    let (num_classes, feature_dim) = parse_header(&header)?;

    let mut sequences = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SequenceRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if record.labels.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "sequence has no objects".into(),
            });
        }
        if record.labels.len() != record.features.len() {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "{} labels but {} feature rows",
                    record.labels.len(),
                    record.features.len()
                ),
            });
        }
        let n = record.labels.len();
        let mut features = Array2::zeros((n, feature_dim));
        for (t, row) in record.features.iter().enumerate() {
            if row.len() != feature_dim {
                return Err(Error::Shape(format!(
                    "line {line_no}: feature row has width {}, header says s={feature_dim}",
                    row.len()
                )));
            }
            for (f, &v) in row.iter().enumerate() {
                features[[t, f]] = v;
            }
        }
        if let Some(&bad) = record.labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Shape(format!(
                "line {line_no}: label {bad} out of range, header says m={num_classes}"
            )));
        }
        sequences.push(LabeledSequence {
            features,
            labels: record.labels,
        });
    }
    Dataset::new(sequences, num_classes, feature_dim)
}

/// Split a dataset by a seeded permutation of whole sequences. The train part
/// takes the floor of `train_fraction * n`, clamped so both sides stay
/// nonempty.
pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if dataset.num_sequences() < 2 {
        return Err(Error::Argument(
            "splitting needs at least 2 sequences".into(),
        ));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Argument(
            "train_fraction must lie strictly between 0 and 1".into(),
        ));
    }
    let n = dataset.num_sequences();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let train_count = ((train_fraction * n as f64).floor() as usize).clamp(1, n - 1);

    let pick = |ids: &[usize]| Dataset {
        sequences: ids.iter().map(|&i| dataset.sequences[i].clone()).collect(),
        num_classes: dataset.num_classes,
        feature_dim: dataset.feature_dim,
        stats: dataset.stats.clone(),
    };
    Ok((pick(&order[..train_count]), pick(&order[train_count..])))
}
