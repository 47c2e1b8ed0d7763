//! Loss functions and their gradients.
//!
//! Loss *values* are reduced in `f64` regardless of the training element
//! type (they feed logs and reports, not gradients); gradients stay in the
//! element type. All reductions run sequentially in index order so results
//! never depend on the execution mode.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Row-wise softmax of `[N, K]` logits, stabilised by max subtraction.
pub fn softmax_probabilities<T: Element>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    if logits.rank() != 2 {
        return Err(Error::ShapeMismatch {
            context: "softmax logits (expected [N, K])",
            expected: vec![2],
            actual: logits.shape().to_vec(),
        });
    }
    let k = logits.dim(1);
    let mut probs = logits.clone();
    for row in probs.data_mut().chunks_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    Ok(probs)
}

/// Mean softmax cross-entropy over the batch and its logits gradient.
///
/// Returns `(mean_ce, d mean_ce / d logits)`. The gradient of the *mean*
/// is `(softmax(logits) - onehot(label)) / N` per row.
pub fn softmax_cross_entropy<T: Element>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(f64, Tensor<T>)> {
    if logits.rank() != 2 {
        return Err(Error::ShapeMismatch {
            context: "cross-entropy logits (expected [N, K])",
            expected: vec![2],
            actual: logits.shape().to_vec(),
        });
    }
    let (n, k) = (logits.dim(0), logits.dim(1));
    if labels.len() != n {
        return Err(Error::ShapeMismatch {
            context: "cross-entropy labels",
            expected: vec![n],
            actual: vec![labels.len()],
        });
    }
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(Error::LabelOutOfRange {
                index: i,
                value: l,
                limit: k,
            });
        }
    }
    if n == 0 {
        return Err(Error::EmptyDataset {
            detail: "cross-entropy over an empty batch".into(),
        });
    }
    let inv_n = T::from_f64_lossy(1.0 / n as f64);
    let mut grad = softmax_probabilities(logits)?;
    let mut total = 0.0f64;
    for (row, &label) in grad.data_mut().chunks_mut(k).zip(labels) {
        // -log p_label, from the already-normalised probabilities.
        total += -(row[label].to_f64_lossy().max(f64::MIN_POSITIVE)).ln();
        row[label] = row[label] - T::one();
        for v in row.iter_mut() {
            *v = *v * inv_n;
        }
    }
    Ok((total / n as f64, grad))
}

/// Mean absolute error over every element, and its gradient with respect
/// to the reconstruction: `sign(xhat - x) / count`.
pub fn mean_absolute_error<T: Element>(
    x: &Tensor<T>,
    xhat: &Tensor<T>,
) -> Result<(f64, Tensor<T>)> {
    if x.shape() != xhat.shape() {
        return Err(Error::ShapeMismatch {
            context: "mean absolute error operands",
            expected: x.shape().to_vec(),
            actual: xhat.shape().to_vec(),
        });
    }
    if x.is_empty() {
        return Err(Error::EmptyDataset {
            detail: "mean absolute error over an empty tensor".into(),
        });
    }
    let count = x.len();
    let inv = T::from_f64_lossy(1.0 / count as f64);
    let mut grad = Tensor::zeros(x.shape().to_vec());
    let mut total = 0.0f64;
    for ((&a, &b), g) in x
        .data()
        .iter()
        .zip(xhat.data())
        .zip(grad.data_mut().iter_mut())
    {
        let diff = b - a;
        total += diff.to_f64_lossy().abs();
        *g = if diff > T::zero() {
            inv
        } else if diff < T::zero() {
            -inv
        } else {
            T::zero()
        };
    }
    Ok((total / count as f64, grad))
}

/// KL divergence of `N(mu, diag(exp(logvar)))` from the standard normal,
/// averaged over the batch:
///
/// `KL = mean_n 0.5 · Σ_d (exp(logvar) + mu² - 1 - logvar)`.
///
/// Returns `(kl, d kl/d mu, d kl/d logvar)`.
pub fn kl_standard_normal<T: Element>(
    mu: &Tensor<T>,
    logvar: &Tensor<T>,
) -> Result<(f64, Tensor<T>, Tensor<T>)> {
    if mu.shape() != logvar.shape() || mu.rank() != 2 {
        return Err(Error::ShapeMismatch {
            context: "kl divergence expects mu and logvar [N, L]",
            expected: mu.shape().to_vec(),
            actual: logvar.shape().to_vec(),
        });
    }
    let n = mu.dim(0);
    if n == 0 {
        return Err(Error::EmptyDataset {
            detail: "kl divergence over an empty batch".into(),
        });
    }
    let inv_n = T::from_f64_lossy(1.0 / n as f64);
    let half = T::from_f64_lossy(0.5);
    let mut dmu = Tensor::zeros(mu.shape().to_vec());
    let mut dlv = Tensor::zeros(mu.shape().to_vec());
    let mut total = 0.0f64;
    for i in 0..mu.len() {
        let m = mu.data()[i];
        let lv = logvar.data()[i];
        let var = lv.exp();
        total += 0.5 * (var + m * m - T::one() - lv).to_f64_lossy();
        dmu.data_mut()[i] = m * inv_n;
        dlv.data_mut()[i] = half * (var - T::one()) * inv_n;
    }
    Ok((total / n as f64, dmu, dlv))
}
