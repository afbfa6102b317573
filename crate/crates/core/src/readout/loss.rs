//! Cross-entropy losses over batches of logits.
//!
//! Both losses are the negative log-likelihood, averaged over the batch
//! (rows). Returned gradients are with respect to the logits and already
//! include the `1 / batch` factor.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::scalar::{sigmoid, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    SoftmaxCe,
    SigmoidCe,
}

impl LossKind {
    /// Scores reported for evaluation: softmax probabilities or per-node
    /// sigmoids.
    pub fn probabilities<T: Scalar>(self, logits: ArrayView1<'_, T>) -> ndarray::Array1<T> {
        match self {
            LossKind::SoftmaxCe => softmax(logits),
            LossKind::SigmoidCe => logits.mapv(sigmoid),
        }
    }

    pub fn loss<T: Scalar>(self, logits: ArrayView2<'_, T>, targets: ArrayView2<'_, T>) -> Result<(T, Array2<T>)> {
        match self {
            LossKind::SoftmaxCe => softmax_ce_loss(logits, targets),
            LossKind::SigmoidCe => sigmoid_ce_loss(logits, targets),
        }
    }

    /// Same as [`loss`](Self::loss) with targets given as class labels.
    pub fn loss_for_labels<T: Scalar>(self, logits: ArrayView2<'_, T>, labels: &[usize]) -> Result<(T, Array2<T>)> {
        let targets = one_hot::<T>(labels, logits.ncols())?;
        self.loss(logits, targets.view())
    }
}

pub fn softmax<T: Scalar>(logits: ArrayView1<'_, T>) -> ndarray::Array1<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out = logits.mapv(|z| (z - max).exp());
    let sum: T = out.iter().copied().sum();
    out.mapv_inplace(|v| v / sum);
    out
}

pub fn one_hot<T: Scalar>(labels: &[usize], classes: usize) -> Result<Array2<T>> {
    let mut out = Array2::zeros((labels.len(), classes));
    for (row, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        out[(row, label)] = T::one();
    }
    Ok(out)
}

pub fn softmax_ce_loss<T: Scalar>(logits: ArrayView2<'_, T>, targets: ArrayView2<'_, T>) -> Result<(T, Array2<T>)> {
    check_dim("target rows", logits.nrows(), targets.nrows())?;
    check_dim("target columns", logits.ncols(), targets.ncols())?;
    if logits.nrows() == 0 {
        return Err(Error::Empty("loss batch"));
    }
    let batch = T::of(logits.nrows() as f64);
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = T::zero();
    for (row, ((z, y), mut g)) in logits
        .axis_iter(Axis(0))
        .zip(targets.axis_iter(Axis(0)))
        .zip(grad.axis_iter_mut(Axis(0)))
        .enumerate()
    {
        let mut hot = None;
        for (j, &v) in y.iter().enumerate() {
            if v == T::one() && hot.is_none() {
                hot = Some(j);
            } else if v != T::zero() {
                return Err(Error::NotOneHot { row });
            }
        }
        let target = hot.ok_or(Error::NotOneHot { row })?;
        let max = z.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = z.iter().map(|&v| (v - max).exp()).sum();
        let log_norm = max + sum.ln();
        total += log_norm - z[target];
        Zip::from(&mut g).and(&z).and(&y).for_each(|g, &zi, &yi| {
            *g = ((zi - log_norm).exp() - yi) / batch;
        });
    }
    Ok((total / batch, grad))
}

pub fn sigmoid_ce_loss<T: Scalar>(logits: ArrayView2<'_, T>, targets: ArrayView2<'_, T>) -> Result<(T, Array2<T>)> {
    check_dim("target rows", logits.nrows(), targets.nrows())?;
    check_dim("target columns", logits.ncols(), targets.ncols())?;
    if logits.nrows() == 0 {
        return Err(Error::Empty("loss batch"));
    }
    for ((row, col), &v) in targets.indexed_iter() {
        if v != T::zero() && v != T::one() {
            return Err(Error::NonBinaryTarget {
                row,
                col,
                value: v.f64(),
            });
        }
    }
    let batch = T::of(logits.nrows() as f64);
    let mut total = T::zero();
    let mut grad = Array2::zeros(logits.raw_dim());
    Zip::from(&mut grad).and(&logits).and(&targets).for_each(|g, &z, &y| {
        // max(z, 0) - z y + log(1 + exp(-|z|))
        total += z.max(T::zero()) - z * y + (-z.abs()).exp().ln_1p();
        *g = (sigmoid(z) - y) / batch;
    });
    Ok((total / batch, grad))
}
