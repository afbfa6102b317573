use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, LossKind, Optimizer, OptimizerState, ReadoutModel};
use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;
use crate::sparce::SparceLayer;

fn default_epochs() -> usize {
    60
}

fn default_learning_rate() -> f64 {
    0.01
}

fn default_batch() -> usize {
    10
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    /// Learning rate for the SPARCE offsets; 0 keeps them fixed.
    #[serde(default)]
    pub threshold_learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub optimizer: Optimizer,
    #[serde(default = "default_true")]
    pub bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::SoftmaxCe,
            learning_rate: default_learning_rate(),
            threshold_learning_rate: 0.0,
            batch_size: default_batch(),
            epochs: default_epochs(),
            seed: 0,
            optimizer: Optimizer::Sgd,
            bias: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate", "must be finite and > 0"));
        }
        if !(self.threshold_learning_rate >= 0.0 && self.threshold_learning_rate.is_finite()) {
            return Err(Error::invalid("threshold_learning_rate", "must be finite and >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        Ok(())
    }
}

/// Held-out representations scored after every epoch.
#[derive(Debug, Clone, Copy)]
pub struct ValidationSet<'a, T> {
    pub reps: ArrayView2<'a, T>,
    pub labels: &'a [usize],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Sample-weighted mean of the batch losses seen during the epoch.
    pub loss: f64,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
}

impl EpochStats {
    pub fn csv(trace: &[EpochStats]) -> String {
        let mut out = String::from("epoch,loss,train_accuracy,validation_accuracy\n");
        for e in trace {
            let val = e.validation_accuracy.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", e.epoch, e.loss, e.train_accuracy, val);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: ReadoutModel<T>,
    pub sparce: Option<SparceLayer<T>>,
    pub trace: Vec<EpochStats>,
}

pub(crate) fn label_accuracy<T: Scalar>(logits: ArrayView2<'_, T>, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = logits
        .axis_iter(Axis(0))
        .zip(labels)
        .filter(|(row, &l)| argmax(row.view()) == l)
        .count();
    hits as f64 / labels.len() as f64
}

fn gather<T: Scalar>(reps: ArrayView2<'_, T>, idx: &[usize]) -> Array2<T> {
    reps.select(Axis(0), idx)
}

/// Mini-batch training of the readout and, when a SPARCE layer is given,
/// of its offsets. Representations are fixed; each epoch reshuffles the
/// `(rep, label)` pairs with a generator seeded from `cfg.seed`.
pub fn train<T: Scalar>(
    reps: ArrayView2<'_, T>,
    labels: &[usize],
    mut model: ReadoutModel<T>,
    mut sparce: Option<SparceLayer<T>>,
    cfg: &TrainConfig,
    validation: Option<ValidationSet<'_, T>>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if reps.nrows() == 0 {
        return Err(Error::Empty("training set"));
    }
    check_dim("training labels", reps.nrows(), labels.len())?;
    check_dim("readout input", model.rep_dim(), reps.ncols())?;
    if let Some(layer) = &sparce {
        check_dim("sparce dim", model.rep_dim(), layer.dim())?;
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= model.classes()) {
        return Err(Error::LabelOutOfRange {
            label,
            classes: model.classes(),
        });
    }
    if let Some(v) = &validation {
        check_dim("validation labels", v.reps.nrows(), v.labels.len())?;
        check_dim("validation input", model.rep_dim(), v.reps.ncols())?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..reps.nrows()).collect();
    let mut opt = OptimizerState::<T>::new(cfg.optimizer, 3);
    let learn_offsets = sparce.is_some() && cfg.threshold_learning_rate > 0.0;
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = gather(reps, chunk);
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let grads = model.loss_and_gradients(batch.view(), &batch_labels, cfg.loss, sparce.as_ref())?;
            loss_sum += grads.loss.f64() * chunk.len() as f64;
            opt.update(
                0,
                model.weights.view_mut().into_dyn(),
                grads.weights.view().into_dyn(),
                cfg.learning_rate,
            );
            if let (Some(b), Some(gb)) = (model.bias.as_mut(), grads.bias.as_ref()) {
                opt.update(1, b.view_mut().into_dyn(), gb.view().into_dyn(), cfg.learning_rate);
            }
            if learn_offsets {
                if let (Some(layer), Some(go)) = (sparce.as_mut(), grads.offsets.as_ref()) {
                    opt.update(
                        2,
                        layer.offsets.view_mut().into_dyn(),
                        go.view().into_dyn(),
                        cfg.threshold_learning_rate,
                    );
                }
            }
        }
        let features = match &sparce {
            Some(layer) => layer.apply_batch(reps)?,
            None => reps.to_owned(),
        };
        let train_accuracy = label_accuracy(model.forward_batch(features.view())?.view(), labels);
        let validation_accuracy = match &validation {
            Some(v) => {
                let f = match &sparce {
                    Some(layer) => layer.apply_batch(v.reps)?,
                    None => v.reps.to_owned(),
                };
                Some(label_accuracy(model.forward_batch(f.view())?.view(), v.labels))
            }
            None => None,
        };
        trace.push(EpochStats {
            epoch: epoch + 1,
            loss: loss_sum / reps.nrows() as f64,
            train_accuracy,
            validation_accuracy,
        });
    }
    Ok(TrainOutcome { model, sparce, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_epochs_returns_model_unchanged() {
        let reps = array![[1.0, 0.0], [0.0, 1.0]];
        let model = ReadoutModel::new(array![[0.3, -0.1], [0.2, 0.5]], Some(array![0.1, -0.2])).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let out = train(reps.view(), &[0, 1], model.clone(), None, &cfg, None).unwrap();
        assert_eq!(out.model, model);
        assert!(out.trace.is_empty());
    }

    #[test]
    fn separable_two_class_reaches_full_accuracy() {
        let reps = array![[1.0, 0.2], [-0.8, 0.1]];
        let cfg = TrainConfig {
            learning_rate: 0.1,
            batch_size: 2,
            epochs: 60,
            ..TrainConfig::default()
        };
        let out = train(reps.view(), &[0, 1], ReadoutModel::zeros(2, 2, true), None, &cfg, None).unwrap();
        assert_eq!(out.trace.last().unwrap().train_accuracy, 1.0);
        let losses: Vec<f64> = out.trace.iter().map(|e| e.loss).collect();
        assert!(losses.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn training_errors() {
        let reps = array![[1.0, 0.0]];
        let cfg = TrainConfig::default();
        let m = ReadoutModel::<f64>::zeros(2, 2, true);
        assert!(matches!(
            train(reps.view(), &[2], m.clone(), None, &cfg, None),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
        assert!(train(Array2::<f64>::zeros((0, 2)).view(), &[], m.clone(), None, &cfg, None).is_err());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(train(reps.view(), &[0], m, None, &bad, None).is_err());
    }

    #[test]
    fn seeded_training_is_deterministic() {
        let reps = Array2::from_shape_fn((12, 4), |(i, j)| ((i * 7 + j * 3) % 5) as f64 / 5.0 - 0.4);
        let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let cfg = TrainConfig {
            learning_rate: 0.5,
            batch_size: 5,
            epochs: 7,
            seed: 42,
            threshold_learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let layer = SparceLayer::calibrate(reps.view(), 25.0).unwrap();
        let run = || {
            train(
                reps.view(),
                &labels,
                ReadoutModel::zeros(3, 4, true),
                Some(layer.clone()),
                &cfg,
                None,
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.model, b.model);
        assert_eq!(a.sparce, b.sparce);
        assert_eq!(a.trace, b.trace);
        assert_ne!(a.sparce.unwrap().offsets, layer.offsets);
    }

    #[test]
    fn trace_csv_layout() {
        let trace = [
            EpochStats {
                epoch: 1,
                loss: 0.5,
                train_accuracy: 1.0,
                validation_accuracy: None,
            },
            EpochStats {
                epoch: 2,
                loss: 0.25,
                train_accuracy: 1.0,
                validation_accuracy: Some(0.5),
            },
        ];
        assert_eq!(
            EpochStats::csv(&trace),
            "epoch,loss,train_accuracy,validation_accuracy\n1,0.5,1,\n2,0.25,1,0.5\n"
        );
    }
}
