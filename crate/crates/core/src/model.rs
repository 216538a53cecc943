//! Learnable parameters of the class-embedding CRF.
//!
//! The pairwise potential matrix is factorized through two low-dimensional
//! class embeddings: a neighbor embedding (how a class behaves as the left
//! context) and a target embedding (how a class is predicted). Folding the
//! batch-norm statistics into the neighbor embedding produces a plain
//! transition matrix that exact inference can consume.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Default batch-norm epsilon when the caller does not override it.
pub const BN_EPS_DEFAULT: f64 = 1e-5;
/// Default batch-norm running-statistics momentum.
pub const BN_MOMENTUM_DEFAULT: f64 = 0.1;

/// Problem dimensions: feature width `s`, class count `m`, embedding width `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    /// Feature dimensionality of each object representation.
    pub feature_dim: usize,
    /// Number of classes.
    pub num_classes: usize,
    /// Class-embedding dimensionality.
    pub embed_dim: usize,
}

impl ModelDims {
    pub fn new(feature_dim: usize, num_classes: usize, embed_dim: usize) -> Result<Self> {
        if feature_dim < 1 {
            return Err(Error::Dimension("feature_dim must be >= 1".into()));
        }
        if num_classes < 2 {
            return Err(Error::Dimension("num_classes must be >= 2".into()));
        }
        if embed_dim < 1 || embed_dim > num_classes {
            return Err(Error::Dimension(format!(
                "embed_dim must be in [1, num_classes]; got {} with {} classes",
                embed_dim, num_classes
            )));
        }
        Ok(Self {
            feature_dim,
            num_classes,
            embed_dim,
        })
    }
}

/// Batch-normalization state for the neighbor-embedding output.
///
/// Running statistics follow the `new = (1 - momentum) * old + momentum * batch`
/// convention, so `momentum = 0.1` keeps 90% of the old estimate per update.
#[derive(Debug, Clone, PartialEq)]
pub struct BnParams {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub eps: f64,
    pub momentum: f64,
}

impl BnParams {
    /// Identity state: unit scale, zero shift, standard-normal running stats.
    pub fn identity(embed_dim: usize) -> Self {
        Self {
            gamma: Array1::ones(embed_dim),
            beta: Array1::zeros(embed_dim),
            running_mean: Array1::zeros(embed_dim),
            running_var: Array1::ones(embed_dim),
            eps: BN_EPS_DEFAULT,
            momentum: BN_MOMENTUM_DEFAULT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.gamma.len();
        if self.beta.len() != d || self.running_mean.len() != d || self.running_var.len() != d {
            return Err(Error::Dimension(
                "batch-norm parameter vectors must share one length".into(),
            ));
        }
        if self.running_var.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::Argument(
                "running variance entries must be finite and >= 0".into(),
            ));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Argument("bn eps must be > 0".into()));
        }
        if !(self.momentum > 0.0 && self.momentum < 1.0) {
            return Err(Error::Argument("bn momentum must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// All learnable parameters of the class-embedding CRF.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfParams {
    /// Left-neighbor class embeddings, `embed_dim x num_classes`.
    pub neighbor_embed: Array2<f64>,
    /// Target class embeddings, `embed_dim x num_classes`.
    pub class_embed: Array2<f64>,
    /// Unary potential weights, `feature_dim x num_classes`.
    pub unary_weights: Array2<f64>,
    /// Per-class bias, `num_classes`.
    pub bias: Array1<f64>,
    pub bn: BnParams,
    pub dims: ModelDims,
}

/// Inference-ready parameters: the pairwise matrix is fully materialized.
///
/// Also the natural home of a directly parameterized (log-linear) pairwise
/// matrix, which is what `transition` is when no factorization is involved.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldedCrf {
    /// Pairwise potentials, `num_classes x num_classes`; entry `(i, j)` scores
    /// the transition from left class `i` to class `j`.
    pub transition: Array2<f64>,
    pub unary_weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub dims: ModelDims,
}

fn unary_scores_impl(
    unary_weights: &Array2<f64>,
    bias: &Array1<f64>,
    features: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    if features.len() != unary_weights.nrows() {
        return Err(Error::Dimension(format!(
            "feature vector has length {}, expected {}",
            features.len(),
            unary_weights.nrows()
        )));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("feature vector contains non-finite values".into()));
    }
    Ok(features.dot(unary_weights) + bias)
}

impl CrfParams {
    /// Seeded initialization: embeddings and unary weights uniform on
    /// `[-scale, scale]`, bias zero, batch-norm at identity.
    pub fn init(dims: ModelDims, seed: u64, scale: f64) -> Result<Self> {
        if !(scale >= 0.0) || !scale.is_finite() {
            return Err(Error::Argument("init scale must be finite and >= 0".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, m, d) = (dims.feature_dim, dims.num_classes, dims.embed_dim);
        // Draw order is part of the determinism contract: R, then Q, then U,
        // each row-major.
        let mut draw = |rows: usize, cols: usize| {
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..=scale))
        };
        Ok(Self {
            neighbor_embed: draw(d, m),
            class_embed: draw(d, m),
            unary_weights: draw(s, m),
            bias: Array1::zeros(m),
            bn: BnParams::identity(d),
            dims,
        })
    }

    /// Per-class scores `h^T U + b` for one object representation.
    pub fn unary_scores(&self, features: ArrayView1<f64>) -> Result<Array1<f64>> {
        unary_scores_impl(&self.unary_weights, &self.bias, features)
    }

    /// Raw factorized pairwise matrix `R^T Q`, without batch-norm folding.
    pub fn transition_raw(&self) -> Array2<f64> {
        self.neighbor_embed.t().dot(&self.class_embed)
    }

    /// Fold the batch-norm inference transform into the neighbor embedding and
    /// materialize the pairwise matrix.
    ///
    /// Row `i` of the result is the inference-normalized neighbor embedding of
    /// class `i` dotted with every target embedding.
    pub fn fold_bn(&self) -> FoldedCrf {
        let bn = &self.bn;
        let inv_std = bn.running_var.mapv(|v| 1.0 / (v + bn.eps).sqrt());
        let mut normalized = self.neighbor_embed.clone();
        for (mut row, ((&mean, &istd), (&g, &b))) in normalized.rows_mut().into_iter().zip(
            bn.running_mean
                .iter()
                .zip(inv_std.iter())
                .zip(bn.gamma.iter().zip(bn.beta.iter())),
        ) {
            row.mapv_inplace(|x| (x - mean) * istd * g + b);
        }
        FoldedCrf {
            transition: normalized.t().dot(&self.class_embed),
            unary_weights: self.unary_weights.clone(),
            bias: self.bias.clone(),
            dims: self.dims,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (s, m, d) = (
            self.dims.feature_dim,
            self.dims.num_classes,
            self.dims.embed_dim,
        );
        if self.neighbor_embed.dim() != (d, m)
            || self.class_embed.dim() != (d, m)
            || self.unary_weights.dim() != (s, m)
            || self.bias.len() != m
            || self.bn.gamma.len() != d
        {
            return Err(Error::Dimension(
                "parameter shapes disagree with model dims".into(),
            ));
        }
        self.bn.validate()?;
        let finite = self.neighbor_embed.iter().all(|v| v.is_finite())
            && self.class_embed.iter().all(|v| v.is_finite())
            && self.unary_weights.iter().all(|v| v.is_finite())
            && self.bias.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Numeric("parameters contain non-finite entries".into()));
        }
        Ok(())
    }
}

impl FoldedCrf {
    pub fn unary_scores(&self, features: ArrayView1<f64>) -> Result<Array1<f64>> {
        unary_scores_impl(&self.unary_weights, &self.bias, features)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batchnorm::bn_forward_infer;
    use ndarray::array;

    fn dims(s: usize, m: usize, d: usize) -> ModelDims {
        ModelDims::new(s, m, d).unwrap()
    }

    #[test]
    fn init_is_deterministic_for_a_seed() {
        let a = CrfParams::init(dims(3, 4, 2), 7, 0.1).unwrap();
        let b = CrfParams::init(dims(3, 4, 2), 7, 0.1).unwrap();
        assert_eq!(a, b);
        let c = CrfParams::init(dims(3, 4, 2), 8, 0.1).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_scale_zero_gives_zero_weights() {
        let p = CrfParams::init(dims(3, 4, 2), 1, 0.0).unwrap();
        assert!(p.neighbor_embed.iter().all(|&v| v == 0.0));
        assert!(p.class_embed.iter().all(|&v| v == 0.0));
        assert!(p.unary_weights.iter().all(|&v| v == 0.0));
        assert!(p.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_shapes_follow_dims() {
        let p = CrfParams::init(dims(3, 4, 2), 0, 0.1).unwrap();
        assert_eq!(p.neighbor_embed.dim(), (2, 4));
        assert_eq!(p.class_embed.dim(), (2, 4));
        assert_eq!(p.unary_weights.dim(), (3, 4));
        assert_eq!(p.bias.len(), 4);
        assert!(ModelDims::new(3, 4, 5).is_err());
        assert!(ModelDims::new(3, 1, 1).is_err());
        assert!(ModelDims::new(0, 4, 2).is_err());
    }

    #[test]
    fn unary_scores_with_zero_weights_returns_bias() {
        let mut p = CrfParams::init(dims(2, 2, 1), 0, 0.0).unwrap();
        p.bias = array![1.0, 2.0];
        let v = p.unary_scores(array![3.0, -4.0].view()).unwrap();
        assert_eq!(v, array![1.0, 2.0]);
    }

    #[test]
    fn unary_scores_basis_vector_selects_weight_row() {
        let mut p = CrfParams::init(dims(3, 4, 2), 3, 0.5).unwrap();
        p.bias.fill(0.0);
        let e0 = array![1.0, 0.0, 0.0];
        let v = p.unary_scores(e0.view()).unwrap();
        for y in 0..4 {
            assert_eq!(v[y], p.unary_weights[[0, y]]);
        }
    }

    #[test]
    fn unary_scores_matches_elementwise_sum() {
        let p = CrfParams::init(dims(4, 3, 2), 11, 0.7).unwrap();
        let h = array![0.3, -1.2, 2.0, 0.05];
        let v = p.unary_scores(h.view()).unwrap();
        for y in 0..3 {
            let mut expect = p.bias[y];
            for f in 0..4 {
                expect += h[f] * p.unary_weights[[f, y]];
            }
            assert!((v[y] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn unary_scores_rejects_wrong_length() {
        let p = CrfParams::init(dims(3, 4, 2), 0, 0.1).unwrap();
        assert!(matches!(
            p.unary_scores(array![1.0, 2.0].view()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn fold_identity_bn_recovers_raw_factorization_exactly() {
        let mut p = CrfParams::init(dims(3, 4, 2), 5, 0.3).unwrap();
        p.bn.eps = 0.0; // identity state: gamma=1, beta=0, mean=0, var=1
        let folded = p.fold_bn();
        let raw = p.transition_raw();
        for (a, b) in folded.transition.iter().zip(raw.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn fold_with_zero_class_embedding_is_zero() {
        let mut p = CrfParams::init(dims(3, 4, 2), 5, 0.3).unwrap();
        p.class_embed.fill(0.0);
        assert!(p.fold_bn().transition.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fold_matches_infer_mode_batchnorm_per_column() {
        let mut p = CrfParams::init(dims(2, 3, 2), 9, 0.8).unwrap();
        p.bn.gamma = array![0.7, 1.3];
        p.bn.beta = array![-0.2, 0.4];
        p.bn.running_mean = array![0.1, -0.3];
        p.bn.running_var = array![0.5, 2.0];
        let folded = p.fold_bn();
        // columns of R as a batch, normalized with running statistics
        let batch = p.neighbor_embed.t().to_owned();
        let normalized = bn_forward_infer(batch.view(), &p.bn).unwrap();
        let expect = normalized.dot(&p.class_embed);
        for (a, b) in folded.transition.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fold_is_linear_in_class_embedding() {
        let mut p = CrfParams::init(dims(2, 3, 2), 4, 0.6).unwrap();
        p.bn.running_mean = array![0.2, -0.1];
        p.bn.running_var = array![1.5, 0.9];
        let base = p.fold_bn().transition;
        p.class_embed.mapv_inplace(|v| 2.0 * v);
        let doubled = p.fold_bn().transition;
        for (a, b) in doubled.iter().zip(base.iter()) {
            assert_eq!(*a, 2.0 * *b);
        }
    }
}
