//! The versioned binary model container and batch decoding.
//!
//! One format holds every model kind this crate trains. Layout: the magic
//! bytes `CECRF1`, the three dimensions as little-endian u64, one flag byte
//! (model kind in the low bits, bit 6 marks appended feature statistics),
//! then the payload as little-endian f64 in a fixed order per kind. Trained
//! models carry the training-set standardization statistics so inference can
//! reproduce the training-time feature transform.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::baselines::{MarkovComponent, MixtureModel, TransitionStats, UnaryModel};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{CrfParams, FoldedCrf, ModelDims};
use crate::training::FeatureStats;
use crate::trellis::{decode, DecodeMode, ScoreTable};

const MAGIC: &[u8; 6] = b"CECRF1";

const TAG_RAW: u8 = 0x00;
const TAG_FOLDED: u8 = 0x01;
const TAG_RAW_BN: u8 = 0x02;
const TAG_UNARY: u8 = 0x10;
const TAG_STATS: u8 = 0x11;
const TAG_MIXTURE: u8 = 0x12;
const FLAG_FEATURE_STATS: u8 = 0x40;

/// Any model this crate can persist.
#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    /// Full parameter set. `bn_active` records whether decoding should fold
    /// the batch-norm statistics into the transition matrix.
    Raw { params: CrfParams, bn_active: bool },
    /// Materialized pairwise matrix plus the unary block.
    Folded(FoldedCrf),
    Unary(UnaryModel),
    StatsCrf {
        unary: UnaryModel,
        stats: TransitionStats,
        weight: f64,
    },
    Mixture {
        unary: UnaryModel,
        mixture: MixtureModel,
        weight: f64,
    },
}

impl SavedModel {
    pub fn kind_name(&self) -> &'static str {
        match self {
            SavedModel::Raw { bn_active: true, .. } => "crf (embedding, bn-folded decode)",
            SavedModel::Raw { bn_active: false, .. } => "crf (embedding)",
            SavedModel::Folded(_) => "crf (folded)",
            SavedModel::Unary(_) => "unary",
            SavedModel::StatsCrf { .. } => "pairwise-statistics crf",
            SavedModel::Mixture { .. } => "mixture of markov chains",
        }
    }

    fn dims(&self) -> (u64, u64, u64) {
        match self {
            SavedModel::Raw { params, .. } => (
                params.dims.feature_dim as u64,
                params.dims.num_classes as u64,
                params.dims.embed_dim as u64,
            ),
            SavedModel::Folded(f) => (
                f.dims.feature_dim as u64,
                f.dims.num_classes as u64,
                f.dims.embed_dim as u64,
            ),
            SavedModel::Unary(u) => {
                (u.unary_weights.nrows() as u64, u.num_classes() as u64, 0)
            }
            SavedModel::StatsCrf { unary, .. } | SavedModel::Mixture { unary, .. } => (
                unary.unary_weights.nrows() as u64,
                unary.num_classes() as u64,
                0,
            ),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.dims().1 as usize
    }

    pub fn feature_dim(&self) -> usize {
        self.dims().0 as usize
    }
}

/// A saved model together with its feature standardization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: SavedModel,
    pub feature_stats: Option<FeatureStats>,
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn vec1(&mut self, a: &Array1<f64>) {
        for &v in a {
            self.f64(v);
        }
    }

    fn mat(&mut self, a: &Array2<f64>) {
        for &v in a {
            self.f64(v);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Shape(format!(
                "model file truncated: wanted {} more bytes at offset {}, file has {}",
                n,
                self.pos,
                self.bytes.len()
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn vec1(&mut self, len: usize) -> Result<Array1<f64>> {
        let mut out = Array1::zeros(len);
        for v in out.iter_mut() {
            *v = self.f64()?;
        }
        Ok(out)
    }

    fn mat(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((rows, cols));
        for v in out.iter_mut() {
            *v = self.f64()?;
        }
        Ok(out)
    }
}

/// Serialize a model (with optional feature statistics) to `path`.
pub fn save_model(file: &ModelFile, path: impl AsRef<Path>) -> Result<()> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MAGIC);
    let (s, m, d) = file.model.dims();
    w.u64(s);
    w.u64(m);
    w.u64(d);
    let tag = match &file.model {
        SavedModel::Raw { bn_active: false, .. } => TAG_RAW,
        SavedModel::Raw { bn_active: true, .. } => TAG_RAW_BN,
        SavedModel::Folded(_) => TAG_FOLDED,
        SavedModel::Unary(_) => TAG_UNARY,
        SavedModel::StatsCrf { .. } => TAG_STATS,
        SavedModel::Mixture { .. } => TAG_MIXTURE,
    };
    let flag = tag | if file.feature_stats.is_some() { FLAG_FEATURE_STATS } else { 0 };
    w.buf.push(flag);

    match &file.model {
        SavedModel::Raw { params, .. } => {
            w.mat(&params.neighbor_embed);
            w.mat(&params.class_embed);
            w.mat(&params.unary_weights);
            w.vec1(&params.bias);
            w.vec1(&params.bn.gamma);
            w.vec1(&params.bn.beta);
            w.vec1(&params.bn.running_mean);
            w.vec1(&params.bn.running_var);
            w.f64(params.bn.eps);
            w.f64(params.bn.momentum);
        }
        SavedModel::Folded(f) => {
            w.mat(&f.transition);
            w.mat(&f.unary_weights);
            w.vec1(&f.bias);
        }
        SavedModel::Unary(u) => {
            w.mat(&u.unary_weights);
            w.vec1(&u.bias);
        }
        SavedModel::StatsCrf { unary, stats, weight } => {
            w.mat(&unary.unary_weights);
            w.vec1(&unary.bias);
            w.mat(&stats.log_prob);
            w.f64(stats.alpha);
            w.f64(*weight);
        }
        SavedModel::Mixture { unary, mixture, weight } => {
            w.mat(&unary.unary_weights);
            w.vec1(&unary.bias);
            w.u64(mixture.k() as u64);
            for c in &mixture.components {
                w.f64(c.prior);
                w.vec1(&c.initial);
                w.mat(&c.transition);
            }
            w.f64(*weight);
        }
    }
    if let Some(stats) = &file.feature_stats {
        w.vec1(&stats.mean);
        w.vec1(&stats.std);
    }
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&w.buf)?;
    out.flush()?;
    Ok(())
}

/// Read a model written by [`save_model`].
pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = Reader { bytes: &bytes, pos: 0 };

    let magic = r.take(6)?;
    if magic != MAGIC {
        return Err(Error::Version(format!(
            "bad magic {:?}; expected {:?}",
            &magic,
            std::str::from_utf8(MAGIC).expect("ascii")
        )));
    }
    let s = r.u64()? as usize;
    let m = r.u64()? as usize;
    let d = r.u64()? as usize;
    let flag = r.take(1)?[0];
    let has_stats = flag & FLAG_FEATURE_STATS != 0;
    let tag = flag & !FLAG_FEATURE_STATS;

    let unary_block = |r: &mut Reader| -> Result<UnaryModel> {
        Ok(UnaryModel {
            unary_weights: r.mat(s, m)?,
            bias: r.vec1(m)?,
        })
    };

    let model = match tag {
        TAG_RAW | TAG_RAW_BN => {
            let dims = ModelDims::new(s, m, d)
                .map_err(|e| Error::Shape(format!("bad stored dims: {e}")))?;
            let neighbor_embed = r.mat(d, m)?;
            let class_embed = r.mat(d, m)?;
            let unary_weights = r.mat(s, m)?;
            let bias = r.vec1(m)?;
            let gamma = r.vec1(d)?;
            let beta = r.vec1(d)?;
            let running_mean = r.vec1(d)?;
            let running_var = r.vec1(d)?;
            let eps = r.f64()?;
            let momentum = r.f64()?;
            SavedModel::Raw {
                params: CrfParams {
                    neighbor_embed,
                    class_embed,
                    unary_weights,
                    bias,
                    bn: crate::model::BnParams {
                        gamma,
                        beta,
                        running_mean,
                        running_var,
                        eps,
                        momentum,
                    },
                    dims,
                },
                bn_active: tag == TAG_RAW_BN,
            }
        }
        TAG_FOLDED => {
            let dims = ModelDims::new(s, m, d)
                .map_err(|e| Error::Shape(format!("bad stored dims: {e}")))?;
            SavedModel::Folded(FoldedCrf {
                transition: r.mat(m, m)?,
                unary_weights: r.mat(s, m)?,
                bias: r.vec1(m)?,
                dims,
            })
        }
        TAG_UNARY => SavedModel::Unary(unary_block(&mut r)?),
        TAG_STATS => {
            let unary = unary_block(&mut r)?;
            let log_prob = r.mat(m, m)?;
            let alpha = r.f64()?;
            let weight = r.f64()?;
            SavedModel::StatsCrf {
                unary,
                stats: TransitionStats { log_prob, alpha },
                weight,
            }
        }
        TAG_MIXTURE => {
            let unary = unary_block(&mut r)?;
            let k = r.u64()? as usize;
            let mut components = Vec::with_capacity(k);
            for _ in 0..k {
                components.push(MarkovComponent {
                    prior: r.f64()?,
                    initial: r.vec1(m)?,
                    transition: r.mat(m, m)?,
                });
            }
            let weight = r.f64()?;
            SavedModel::Mixture {
                unary,
                mixture: MixtureModel {
                    components,
                    num_classes: m,
                },
                weight,
            }
        }
        other => {
            return Err(Error::Version(format!(
                "unknown model type tag 0x{other:02x}"
            )))
        }
    };

    let feature_stats = if has_stats {
        Some(FeatureStats {
            mean: r.vec1(s)?,
            std: r.vec1(s)?,
        })
    } else {
        None
    };

    if r.pos != bytes.len() {
        return Err(Error::Shape(format!(
            "model file has {} trailing bytes; contents disagree with the declared dims",
            bytes.len() - r.pos
        )));
    }
    Ok(ModelFile {
        model,
        feature_stats,
    })
}

/// Decoded labels for one sequence, with per-object confidences in marginal
/// mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SequencePrediction {
    pub labels: Vec<usize>,
    pub confidences: Option<Vec<f64>>,
}

fn decode_potentials(
    unary_weights: &Array2<f64>,
    bias: &Array1<f64>,
    transition: &Array2<f64>,
    dataset: &Dataset,
    mode: DecodeMode,
) -> Result<Vec<SequencePrediction>> {
    dataset
        .sequences
        .par_iter()
        .map(|seq| {
            let unary = seq.features.dot(unary_weights) + bias;
            let st = ScoreTable::new(unary, transition.clone())?;
            let (labels, confidences) = decode(&st, mode)?;
            Ok(SequencePrediction {
                labels,
                confidences,
            })
        })
        .collect()
}

impl ModelFile {
    /// Apply the stored standardization to a raw dataset. Datasets that were
    /// already standardized, or models without stored statistics, pass
    /// through unchanged.
    pub fn standardize(&self, dataset: &Dataset) -> Dataset {
        if dataset.stats.is_some() {
            return dataset.clone();
        }
        match &self.feature_stats {
            Some(stats) => stats.apply(dataset),
            None => dataset.clone(),
        }
    }

    /// Decode every sequence of a (standardized) dataset. Sequences decode
    /// independently and in parallel; the output order matches the input.
    pub fn decode_dataset(
        &self,
        dataset: &Dataset,
        mode: DecodeMode,
    ) -> Result<Vec<SequencePrediction>> {
        if dataset.feature_dim != self.model.feature_dim() {
            return Err(Error::Dimension(format!(
                "dataset has {} features, model expects {}",
                dataset.feature_dim,
                self.model.feature_dim()
            )));
        }
        if dataset.num_classes > self.model.num_classes() {
            return Err(Error::Dimension(format!(
                "dataset declares {} classes, model knows {}",
                dataset.num_classes,
                self.model.num_classes()
            )));
        }
        match &self.model {
            SavedModel::Raw { params, bn_active } => {
                let transition = if *bn_active {
                    params.fold_bn().transition
                } else {
                    params.transition_raw()
                };
                decode_potentials(&params.unary_weights, &params.bias, &transition, dataset, mode)
            }
            SavedModel::Folded(f) => {
                decode_potentials(&f.unary_weights, &f.bias, &f.transition, dataset, mode)
            }
            SavedModel::Unary(u) => {
                let m = u.num_classes();
                let transition = Array2::zeros((m, m));
                decode_potentials(&u.unary_weights, &u.bias, &transition, dataset, mode)
            }
            SavedModel::StatsCrf { unary, stats, weight } => {
                let transition = crate::baselines::weighted_transition(&stats.log_prob, *weight);
                dataset
                    .sequences
                    .par_iter()
                    .map(|seq| {
                        let log_probs = unary.log_prob_rows(&seq.features)?;
                        let st = ScoreTable::new(log_probs, transition.clone())?;
                        let (labels, confidences) = decode(&st, mode)?;
                        Ok(SequencePrediction { labels, confidences })
                    })
                    .collect()
            }
            SavedModel::Mixture { unary, mixture, weight } => dataset
                .sequences
                .par_iter()
                .map(|seq| {
                    let log_probs = unary.log_prob_rows(&seq.features)?;
                    let proxy: Vec<usize> = log_probs
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
                        log_probs,
                        crate::baselines::weighted_transition(&log_trans, *weight),
                    )?;
                    let (labels, confidences) = decode(&st, mode)?;
                    Ok(SequencePrediction { labels, confidences })
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{em_mixture_markov, transition_stats};
    use crate::data::{generate_synthetic, SynthConfig};
    use crate::model::BnParams;
    use ndarray::array;
    use tempfile::tempdir;

    fn random_raw(seed: u64, bn_active: bool) -> ModelFile {
        let dims = ModelDims::new(3, 4, 2).unwrap();
        let mut params = CrfParams::init(dims, seed, 0.7).unwrap();
        params.bn = BnParams {
            gamma: array![1.1, 0.9],
            beta: array![0.05, -0.2],
            running_mean: array![0.3, -0.1],
            running_var: array![1.2, 0.8],
            eps: 1e-5,
            momentum: 0.1,
        };
        ModelFile {
            model: SavedModel::Raw { params, bn_active },
            feature_stats: Some(FeatureStats {
                mean: array![0.1, -0.5, 2.0],
                std: array![1.0, 0.5, 3.0],
            }),
        }
    }

    #[test]
    fn raw_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.bin");
        for bn_active in [false, true] {
            let file = random_raw(5, bn_active);
            save_model(&file, &path).unwrap();
            let loaded = load_model(&path).unwrap();
            assert_eq!(file, loaded);
        }
    }

    #[test]
    fn folded_and_baseline_round_trips() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.bin");

        let raw = random_raw(6, true);
        let folded = match &raw.model {
            SavedModel::Raw { params, .. } => params.fold_bn(),
            _ => unreachable!(),
        };
        let file = ModelFile {
            model: SavedModel::Folded(folded),
            feature_stats: None,
        };
        save_model(&file, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), file);

        let unary = UnaryModel {
            unary_weights: array![[0.3, -0.2], [1.0, 0.0], [0.5, 0.5]],
            bias: array![0.1, -0.1],
        };
        let file = ModelFile {
            model: SavedModel::Unary(unary.clone()),
            feature_stats: None,
        };
        save_model(&file, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), file);

        let stats = transition_stats(&[vec![0, 1, 1, 0]], 2, 0.5).unwrap();
        let file = ModelFile {
            model: SavedModel::StatsCrf {
                unary: unary.clone(),
                stats,
                weight: 1.5,
            },
            feature_stats: None,
        };
        save_model(&file, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), file);

        let (mixture, _) =
            em_mixture_markov(&[vec![0, 1, 0], vec![1, 1, 1]], 2, 2, 5, 3, 0.5).unwrap();
        let file = ModelFile {
            model: SavedModel::Mixture {
                unary,
                mixture,
                weight: 0.5,
            },
            feature_stats: None,
        };
        save_model(&file, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), file);
    }

    #[test]
    fn bad_magic_and_unknown_tag_are_version_errors() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.bin");
        std::fs::write(&path, b"NOTAMODEL").unwrap();
        assert!(matches!(load_model(&path), Err(Error::Version(_))));

        let file = random_raw(7, false);
        save_model(&file, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[6 + 24] = 0x3f; // unknown tag
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Version(_))));
    }

    #[test]
    fn truncated_or_padded_files_are_shape_errors() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let file = random_raw(8, false);
        save_model(&file, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        // a file claiming one more class column than it carries
        std::fs::write(&path, &bytes[..bytes.len() - 16]).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Shape(_))));

        let mut padded = bytes.clone();
        padded.extend_from_slice(&[0u8; 8]);
        std::fs::write(&path, &padded).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Shape(_))));
    }

    #[test]
    fn decode_paths_run_for_every_model_kind() {
        let cfg = SynthConfig {
            num_classes: 4,
            group_size: 2,
            feature_dim: 3,
            num_sequences: 6,
            length_min: 2,
            length_max: 4,
            seed: 3,
            ..SynthConfig::default()
        };
        let ds = generate_synthetic(&cfg).unwrap();

        let dims = ModelDims::new(3, 4, 2).unwrap();
        let params = CrfParams::init(dims, 1, 0.3).unwrap();
        let unary = UnaryModel {
            unary_weights: params.unary_weights.clone(),
            bias: params.bias.clone(),
        };
        let stats = transition_stats(&ds.label_sequences(), 4, 1.0).unwrap();
        let (mixture, _) = em_mixture_markov(&ds.label_sequences(), 4, 2, 5, 0, 1.0).unwrap();

        let models = vec![
            SavedModel::Raw { params: params.clone(), bn_active: false },
            SavedModel::Raw { params: params.clone(), bn_active: true },
            SavedModel::Folded(params.fold_bn()),
            SavedModel::Unary(unary.clone()),
            SavedModel::StatsCrf { unary: unary.clone(), stats, weight: 1.0 },
            SavedModel::Mixture { unary, mixture, weight: 1.0 },
        ];
        for model in models {
            let file = ModelFile { model, feature_stats: None };
            for mode in [DecodeMode::Viterbi, DecodeMode::Marginal] {
                let preds = file.decode_dataset(&ds, mode).unwrap();
                assert_eq!(preds.len(), ds.num_sequences());
                for (pred, seq) in preds.iter().zip(&ds.sequences) {
                    assert_eq!(pred.labels.len(), seq.len());
                    match mode {
                        DecodeMode::Viterbi => assert!(pred.confidences.is_none()),
                        DecodeMode::Marginal => {
                            let conf = pred.confidences.as_ref().unwrap();
                            assert!(conf.iter().all(|&c| (0.0..=1.0 + 1e-9).contains(&c)));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn unary_decode_is_positionwise_argmax() {
        let cfg = SynthConfig {
            num_classes: 4,
            group_size: 2,
            feature_dim: 3,
            num_sequences: 4,
            seed: 9,
            ..SynthConfig::default()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(2);
        let unary = UnaryModel {
            unary_weights: Array2::from_shape_fn((3, 4), |_| {
                rand::Rng::random_range(&mut rng, -1.0..1.0)
            }),
            bias: Array1::zeros(4),
        };
        let file = ModelFile {
            model: SavedModel::Unary(unary.clone()),
            feature_stats: None,
        };
        let preds = file.decode_dataset(&ds, DecodeMode::Viterbi).unwrap();
        for (pred, seq) in preds.iter().zip(&ds.sequences) {
            for (t, &label) in pred.labels.iter().enumerate() {
                let scores = unary.scores(seq.features.row(t)).unwrap();
                let mut best = 0usize;
                for y in 0..4 {
                    if scores[y] > scores[best] {
                        best = y;
                    }
                }
                assert_eq!(label, best);
            }
        }
    }
}
