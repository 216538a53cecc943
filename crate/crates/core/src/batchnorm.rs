//! Mini-batch normalization with exact backpropagation.
//!
//! Train mode standardizes each feature by the biased batch statistics and
//! returns the freshly updated running statistics instead of mutating them,
//! so the training loop stays the single owner of parameter state. Inference
//! mode is a fixed affine map per feature.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::model::BnParams;

/// Intermediate values kept from a train-mode forward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub batch_mean: Array1<f64>,
    pub batch_var: Array1<f64>,
    pub normalized: Array2<f64>,
    pub inputs: Array2<f64>,
}

/// Batch statistics handed back for the running-average update.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

fn check_width(got: usize, bn: &BnParams) -> Result<()> {
    if got != bn.gamma.len() {
        return Err(Error::Dimension(format!(
            "batch has {} features, batch-norm state has {}",
            got,
            bn.gamma.len()
        )));
    }
    Ok(())
}

/// Train-mode forward pass over a `batch x features` matrix.
///
/// Uses the biased (population) batch variance, matching what gets stored in
/// the running statistics so the folded inference transform agrees with
/// train-time normalization without a correction factor.
pub fn bn_forward_train(
    inputs: ArrayView2<f64>,
    bn: &BnParams,
) -> Result<(Array2<f64>, BnCache, BnStats)> {
    let batch = inputs.nrows();
    if batch < 2 {
        return Err(Error::Statistics(format!(
            "train-mode batch normalization needs at least 2 rows, got {}",
            batch
        )));
    }
    check_width(inputs.ncols(), bn)?;

    let batch_mean: Array1<f64> = inputs.mean_axis(Axis(0)).expect("nonempty batch");
    let mut batch_var = Array1::<f64>::zeros(inputs.ncols());
    for row in inputs.rows() {
        for (f, &x) in row.iter().enumerate() {
            let c = x - batch_mean[f];
            batch_var[f] += c * c;
        }
    }
    batch_var.mapv_inplace(|v| v / batch as f64);

    let inv_std = batch_var.mapv(|v| 1.0 / (v + bn.eps).sqrt());
    let mut normalized = inputs.to_owned();
    for mut row in normalized.rows_mut() {
        for (f, x) in row.iter_mut().enumerate() {
            *x = (*x - batch_mean[f]) * inv_std[f];
        }
    }
    let mut outputs = normalized.clone();
    for mut row in outputs.rows_mut() {
        for (f, x) in row.iter_mut().enumerate() {
            *x = *x * bn.gamma[f] + bn.beta[f];
        }
    }

    let updated = BnStats {
        mean: &bn.running_mean * (1.0 - bn.momentum) + &batch_mean * bn.momentum,
        var: &bn.running_var * (1.0 - bn.momentum) + &batch_var * bn.momentum,
    };
    let cache = BnCache {
        batch_mean,
        batch_var,
        normalized,
        inputs: inputs.to_owned(),
    };
    Ok((outputs, cache, updated))
}

/// Inference-mode forward pass: normalize with the running statistics.
pub fn bn_forward_infer(inputs: ArrayView2<f64>, bn: &BnParams) -> Result<Array2<f64>> {
    check_width(inputs.ncols(), bn)?;
    let inv_std = bn.running_var.mapv(|v| 1.0 / (v + bn.eps).sqrt());
    let mut out = inputs.to_owned();
    for mut row in out.rows_mut() {
        for (f, x) in row.iter_mut().enumerate() {
            *x = (*x - bn.running_mean[f]) * inv_std[f] * bn.gamma[f] + bn.beta[f];
        }
    }
    Ok(out)
}

/// Exact gradients of the train-mode forward map.
///
/// Returns `(grad_inputs, grad_gamma, grad_beta)`.
pub fn bn_backward(
    cache: &BnCache,
    grad_out: ArrayView2<f64>,
    bn: &BnParams,
) -> Result<(Array2<f64>, Array1<f64>, Array1<f64>)> {
    let (batch, width) = cache.normalized.dim();
    if grad_out.dim() != (batch, width) {
        return Err(Error::Dimension(format!(
            "grad_out is {:?}, cache expects ({}, {})",
            grad_out.dim(),
            batch,
            width
        )));
    }
    check_width(width, bn)?;

    let mut grad_gamma = Array1::<f64>::zeros(width);
    let mut grad_beta = Array1::<f64>::zeros(width);
    for (g_row, n_row) in grad_out.rows().into_iter().zip(cache.normalized.rows()) {
        for f in 0..width {
            grad_gamma[f] += g_row[f] * n_row[f];
            grad_beta[f] += g_row[f];
        }
    }

    // grad through xhat = (x - mean) / sqrt(var + eps), with mean and var both
    // functions of the batch:
    //   dx_i = istd/B * (B*dxhat_i - sum_j dxhat_j - xhat_i * sum_j dxhat_j*xhat_j)
    let inv_std = cache.batch_var.mapv(|v| 1.0 / (v + bn.eps).sqrt());
    let b = batch as f64;
    let mut sum_dxhat = Array1::<f64>::zeros(width);
    let mut sum_dxhat_xhat = Array1::<f64>::zeros(width);
    for (g_row, n_row) in grad_out.rows().into_iter().zip(cache.normalized.rows()) {
        for f in 0..width {
            let dxhat = g_row[f] * bn.gamma[f];
            sum_dxhat[f] += dxhat;
            sum_dxhat_xhat[f] += dxhat * n_row[f];
        }
    }
    let mut grad_in = Array2::<f64>::zeros((batch, width));
    for i in 0..batch {
        for f in 0..width {
            let dxhat = grad_out[[i, f]] * bn.gamma[f];
            grad_in[[i, f]] = inv_std[f] / b
                * (b * dxhat - sum_dxhat[f] - cache.normalized[[i, f]] * sum_dxhat_xhat[f]);
        }
    }
    Ok((grad_in, grad_gamma, grad_beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bn(d: usize) -> BnParams {
        BnParams::identity(d)
    }

    #[test]
    fn identical_rows_collapse_to_beta() {
        let mut p = bn(3);
        p.beta = array![0.5, -1.0, 2.0];
        let x = array![[1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [1.0, 2.0, 3.0]];
        let (y, _, _) = bn_forward_train(x.view(), &p).unwrap();
        for row in y.rows() {
            for (f, &v) in row.iter().enumerate() {
                assert!((v - p.beta[f]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn standardized_column_passes_through_at_zero_eps() {
        let mut p = bn(1);
        p.eps = 0.0;
        let x = array![[-1.0], [1.0]];
        let (y, _, _) = bn_forward_train(x.view(), &p).unwrap();
        assert_eq!(y, array![[-1.0], [1.0]]);
    }

    #[test]
    fn train_outputs_have_zero_mean_and_scaled_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_fn((16, 4), |_| rng.random_range(-3.0..3.0));
        let p = bn(4);
        let (y, cache, _) = bn_forward_train(x.view(), &p).unwrap();
        for f in 0..4 {
            let col = y.column(f);
            let mean = col.sum() / 16.0;
            assert!(mean.abs() <= 1e-12, "mean was {mean}");
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 16.0;
            let expect = cache.batch_var[f] / (cache.batch_var[f] + p.eps);
            assert!((var - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn train_rejects_single_row() {
        let x = array![[1.0, 2.0]];
        assert!(matches!(
            bn_forward_train(x.view(), &bn(2)),
            Err(Error::Statistics(_))
        ));
    }

    #[test]
    fn running_stats_update_uses_momentum() {
        let mut p = bn(1);
        p.momentum = 0.25;
        p.running_mean = array![2.0];
        p.running_var = array![4.0];
        let x = array![[0.0], [2.0]]; // batch mean 1, biased var 1
        let (_, _, stats) = bn_forward_train(x.view(), &p).unwrap();
        assert!((stats.mean[0] - (0.75 * 2.0 + 0.25 * 1.0)).abs() < 1e-15);
        assert!((stats.var[0] - (0.75 * 4.0 + 0.25 * 1.0)).abs() < 1e-15);
    }

    #[test]
    fn infer_with_identity_stats_and_zero_eps_is_identity() {
        let mut p = bn(2);
        p.eps = 0.0;
        let x = array![[0.3, -1.2], [5.0, 0.0]];
        let y = bn_forward_infer(x.view(), &p).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn infer_at_running_mean_returns_beta() {
        let mut p = bn(2);
        p.running_mean = array![1.5, -0.5];
        p.running_var = array![2.0, 0.3];
        p.beta = array![7.0, -3.0];
        p.gamma = array![2.0, 0.5];
        let x = array![[1.5, -0.5]];
        let y = bn_forward_infer(x.view(), &p).unwrap();
        assert!((y[[0, 0]] - 7.0).abs() < 1e-15);
        assert!((y[[0, 1]] + 3.0).abs() < 1e-15);
    }

    #[test]
    fn backward_zero_grad_out_gives_zeros() {
        let x = array![[1.0, 2.0], [3.0, -1.0], [0.0, 0.5]];
        let p = bn(2);
        let (_, cache, _) = bn_forward_train(x.view(), &p).unwrap();
        let g = Array2::zeros((3, 2));
        let (gi, gg, gb) = bn_backward(&cache, g.view(), &p).unwrap();
        assert!(gi.iter().all(|&v| v == 0.0));
        assert!(gg.iter().all(|&v| v == 0.0));
        assert!(gb.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_zero_gamma_gates_input_grad() {
        let x = array![[1.0, 2.0], [3.0, -1.0], [0.0, 0.5]];
        let mut p = bn(2);
        p.gamma.fill(0.0);
        let (_, cache, _) = bn_forward_train(x.view(), &p).unwrap();
        let g = array![[1.0, -0.5], [0.2, 0.7], [-1.1, 0.4]];
        let (gi, gg, _) = bn_backward(&cache, g.view(), &p).unwrap();
        assert!(gi.iter().all(|&v| v == 0.0));
        for f in 0..2 {
            let expect: f64 = (0..3).map(|i| g[[i, f]] * cache.normalized[[i, f]]).sum();
            assert!((gg[f] - expect).abs() < 1e-12);
        }
    }

    // Finite differences of a scalarized forward pass against the analytic
    // backward, on inputs, gamma, and beta.
    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let x = Array2::from_shape_fn((5, 3), |_| rng.random_range(-2.0..2.0));
        let mut p = bn(3);
        p.gamma = array![1.3, 0.7, -0.4];
        p.beta = array![0.2, -0.9, 0.05];
        let weights = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));

        let loss = |x: &Array2<f64>, p: &BnParams| -> f64 {
            let (y, _, _) = bn_forward_train(x.view(), p).unwrap();
            (&y * &weights).sum()
        };

        let (_, cache, _) = bn_forward_train(x.view(), &p).unwrap();
        let (gi, gg, gb) = bn_backward(&cache, weights.view(), &p).unwrap();

        let step = 1e-6;
        let rel = |a: f64, n: f64| (a - n).abs() / f64::max(1e-8, a.abs() + n.abs());

        for i in 0..5 {
            for f in 0..3 {
                let mut xp = x.clone();
                xp[[i, f]] += step;
                let mut xm = x.clone();
                xm[[i, f]] -= step;
                let numeric = (loss(&xp, &p) - loss(&xm, &p)) / (2.0 * step);
                assert!(rel(gi[[i, f]], numeric) < 1e-5, "input ({i},{f})");
            }
        }
        for f in 0..3 {
            let mut pp = p.clone();
            pp.gamma[f] += step;
            let mut pm = p.clone();
            pm.gamma[f] -= step;
            let numeric = (loss(&x, &pp) - loss(&x, &pm)) / (2.0 * step);
            assert!(rel(gg[f], numeric) < 1e-5, "gamma {f}");

            let mut pp = p.clone();
            pp.beta[f] += step;
            let mut pm = p.clone();
            pm.beta[f] -= step;
            let numeric = (loss(&x, &pp) - loss(&x, &pm)) / (2.0 * step);
            assert!(rel(gb[f], numeric) < 1e-5, "beta {f}");
        }
    }
}
