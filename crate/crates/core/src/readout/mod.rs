//! Linear readout `W_out` from (optionally thresholded) reservoir states to
//! per-place scores, trained by mini-batch gradient descent.

mod loss;
mod optim;
mod train;

pub use loss::{one_hot, sigmoid_ce_loss, softmax, softmax_ce_loss, LossKind};
pub use optim::Optimizer;
pub(crate) use train::label_accuracy;
pub use train::{train, EpochStats, TrainConfig, TrainOutcome, ValidationSet};

pub(crate) use optim::OptimizerState;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{check_dim, Result};
use crate::scalar::Scalar;
use crate::sparce::SparceLayer;

#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutModel<T> {
    /// `C x R`.
    pub weights: Array2<T>,
    pub bias: Option<Array1<T>>,
}

/// Loss value and gradients of one batch.
#[derive(Debug, Clone)]
pub struct BatchGradients<T> {
    pub loss: T,
    pub weights: Array2<T>,
    pub bias: Option<Array1<T>>,
    /// Present when a SPARCE layer sits in front of the readout.
    pub offsets: Option<Array1<T>>,
}

impl<T: Scalar> ReadoutModel<T> {
    pub fn zeros(classes: usize, rep_dim: usize, bias: bool) -> Self {
        Self {
            weights: Array2::zeros((classes, rep_dim)),
            bias: bias.then(|| Array1::zeros(classes)),
        }
    }

    pub fn new(weights: Array2<T>, bias: Option<Array1<T>>) -> Result<Self> {
        if let Some(b) = &bias {
            check_dim("readout bias", weights.nrows(), b.len())?;
        }
        Ok(Self { weights, bias })
    }

    pub fn classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn rep_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn forward(&self, rep: ArrayView1<'_, T>) -> Result<Array1<T>> {
        check_dim("readout input", self.rep_dim(), rep.len())?;
        let mut logits = self.weights.dot(&rep);
        if let Some(b) = &self.bias {
            logits += b;
        }
        Ok(logits)
    }

    /// Row-wise logits for a `B x R` batch.
    pub fn forward_batch(&self, reps: ArrayView2<'_, T>) -> Result<Array2<T>> {
        check_dim("readout input", self.rep_dim(), reps.ncols())?;
        let mut logits = reps.dot(&self.weights.t());
        if let Some(b) = &self.bias {
            logits += b;
        }
        Ok(logits)
    }

    /// Loss and gradients for raw representations `reps` (before SPARCE).
    pub fn loss_and_gradients(
        &self,
        reps: ArrayView2<'_, T>,
        labels: &[usize],
        loss: LossKind,
        sparce: Option<&SparceLayer<T>>,
    ) -> Result<BatchGradients<T>> {
        check_dim("batch labels", reps.nrows(), labels.len())?;
        let features = match sparce {
            Some(layer) => layer.apply_batch(reps)?,
            None => reps.to_owned(),
        };
        let logits = self.forward_batch(features.view())?;
        let (value, grad_logits) = loss.loss_for_labels(logits.view(), labels)?;
        let weights = grad_logits.t().dot(&features);
        let bias = self.bias.as_ref().map(|_| grad_logits.sum_axis(Axis(0)));
        let offsets = match sparce {
            Some(layer) => {
                let upstream = grad_logits.dot(&self.weights);
                Some(layer.threshold_gradient_batch(reps, upstream.view())?)
            }
            None => None,
        };
        Ok(BatchGradients {
            loss: value,
            weights,
            bias,
            offsets,
        })
    }

    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for v in self.weights.iter().chain(self.bias.iter().flatten()) {
            v.f64().to_bits().hash(&mut h);
        }
        h.finish()
    }
}

/// Index of the largest score; ties go to the lowest index and NaN never wins.
pub fn argmax<T: Scalar>(scores: ArrayView1<'_, T>) -> usize {
    let mut best = 0;
    let mut best_val = T::neg_infinity();
    for (i, &v) in scores.iter().enumerate() {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

/// Indices of the `k` largest scores in descending order (ties by index).
pub fn top_k<T: Scalar>(scores: ArrayView1<'_, T>, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    let key = |i: &usize| {
        let v = scores[*i];
        if v.is_nan() {
            T::neg_infinity()
        } else {
            v
        }
    };
    let cmp = |a: &usize, b: &usize| key(b).partial_cmp(&key(a)).unwrap().then(a.cmp(b));
    let k = k.min(idx.len());
    if k < idx.len() && k > 0 {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.sort_by(cmp);
    idx.truncate(k);
    idx
}

/// Predicted place and the full score vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub index: usize,
    pub scores: Array1<T>,
}

pub fn predict<T: Scalar>(rep: ArrayView1<'_, T>, model: &ReadoutModel<T>, loss: LossKind) -> Result<Prediction<T>> {
    let logits = model.forward(rep)?;
    let scores = loss.probabilities(logits.view());
    Ok(Prediction {
        index: argmax(logits.view()),
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_model_is_uniform() {
        let m = ReadoutModel::<f64>::zeros(4, 3, true);
        let p = predict(array![0.3, -1.0, 2.0].view(), &m, LossKind::SoftmaxCe).unwrap();
        assert!(p.scores.iter().all(|v| (v - 0.25).abs() < 1e-15));
        assert_eq!(p.index, 0);
    }

    #[test]
    fn unit_vector_selects_column() {
        let w = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let m = ReadoutModel::new(w.clone(), None).unwrap();
        let logits = m.forward(array![0.0, 1.0].view()).unwrap();
        assert_eq!(logits, w.column(1).to_owned());
    }

    #[test]
    fn argmax_rules() {
        assert_eq!(argmax(array![0.0, 0.0, 1.0, 0.0].view()), 2);
        assert_eq!(argmax(array![0.5, 0.5, 0.5].view()), 0);
        assert_eq!(argmax(array![f64::NAN, 0.1, 0.2].view()), 2);
        let logits = array![0.1, 2.5, -1.0, 2.4];
        assert_eq!(argmax(logits.view()), argmax(softmax(logits.view()).view()));
    }

    #[test]
    fn top_k_orders_and_breaks_ties() {
        let s = array![0.2, 0.9, 0.2, 0.5, 0.9];
        assert_eq!(top_k(s.view(), 3), vec![1, 4, 3]);
        assert_eq!(top_k(s.view(), 10), vec![1, 4, 3, 0, 2]);
        assert_eq!(top_k(s.view(), 0), Vec::<usize>::new());
    }

    #[test]
    fn forward_dimension_error() {
        let m = ReadoutModel::<f64>::zeros(2, 3, false);
        assert!(m.forward(array![1.0].view()).is_err());
        assert!(ReadoutModel::new(Array2::<f64>::zeros((2, 2)), Some(Array1::zeros(3))).is_err());
    }
}
