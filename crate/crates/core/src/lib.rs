//! Sequence classification with a linear-chain CRF whose pairwise potentials
//! are factorized through learned class embeddings.
//!
//! The transition matrix between `m` classes is the product of two
//! `d x m` embedding matrices (one for a class as the left neighbor, one for
//! it as the prediction target), so context structure generalizes across
//! class pairs instead of being memorized per pair. Training optimizes a
//! locally normalized per-object approximation of the sequence likelihood,
//! with batch normalization on the context embedding; the exact global
//! likelihood and the classical pseudolikelihood, piecewise, and
//! piecewise-pseudolikelihood surrogates are implemented alongside it, each
//! with hand-derived, finite-difference-checked gradients. Decoding is exact
//! dynamic programming over the folded transition matrix.
//!
//! The crate also ships the comparison systems (context-free softmax,
//! pairwise-statistics CRF with a cross-validated weight, EM mixture of
//! Markov chains), a synthetic benchmark generator, evaluation metrics, and
//! a batch CLI tying the pipeline together.

pub mod baselines;
pub mod batchnorm;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod objectives;
pub mod persist;
pub mod training;
pub mod trellis;

pub use baselines::{MixtureModel, TransitionStats, UnaryModel};
pub use data::{Dataset, LabeledSequence, SynthConfig};
pub use error::{Error, Result};
pub use eval::EvalReport;
pub use model::{BnParams, CrfParams, FoldedCrf, ModelDims};
pub use objectives::{BnMode, GradientSet, PairSample};
pub use persist::{load_model, save_model, ModelFile, SavedModel, SequencePrediction};
pub use training::{FeatureStats, Objective, TrainConfig};
pub use trellis::{DecodeMode, ScoreTable, Trellis};
