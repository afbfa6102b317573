//! One-hidden-layer classifier used to compress raw descriptors.
//!
//! A `D0 -> H -> C` network is trained on the reference traversal; its hidden
//! layer is then frozen and used as the input representation of the
//! reservoir. The output head doubles as the feedforward baseline.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::readout::{EpochStats, OptimizerState, ReadoutModel, TrainConfig};
use crate::reservoir::Activation;
use crate::scalar::Scalar;

pub const DEFAULT_HIDDEN_WIDTH: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenLayer<T> {
    /// `H x D0`.
    pub weights: Array2<T>,
    pub bias: Array1<T>,
    pub activation: Activation,
}

fn uniform_fan_in<T: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<T> {
    let bound = 1.0 / (cols as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || T::of(rng.random_range(-bound..bound)))
}

impl<T: Scalar> HiddenLayer<T> {
    /// Random initialization: uniform in `+-1/sqrt(D0)` for weights and bias.
    pub fn init(input_dim: usize, width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = uniform_fan_in(&mut rng, width, input_dim);
        let bound = 1.0 / (input_dim as f64).sqrt();
        let bias = Array1::from_shape_simple_fn(width, || T::of(rng.random_range(-bound..bound)));
        Self {
            weights,
            bias,
            activation: Activation::Tanh,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn width(&self) -> usize {
        self.weights.nrows()
    }

    /// Row-wise `f(W x + b)`.
    pub fn embed(&self, descriptors: ArrayView2<'_, T>) -> Result<Array2<T>> {
        check_dim("hidden layer input", self.input_dim(), descriptors.ncols())?;
        let mut out = descriptors.dot(&self.weights.t());
        out += &self.bias;
        let act = self.activation;
        out.mapv_inplace(|v| act.apply(v));
        Ok(out)
    }

    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for v in self.weights.iter().chain(self.bias.iter()) {
            v.f64().to_bits().hash(&mut h);
        }
        h.finish()
    }
}

#[derive(Debug, Clone)]
pub struct HiddenTraining<T> {
    pub hidden: HiddenLayer<T>,
    /// Output layer of the pre-training network.
    pub head: ReadoutModel<T>,
    pub trace: Vec<EpochStats>,
}

impl<T: Scalar> HiddenTraining<T> {
    /// Logits of the full feedforward classifier.
    pub fn classify(&self, descriptors: ArrayView2<'_, T>) -> Result<Array2<T>> {
        let h = self.hidden.embed(descriptors)?;
        self.head.forward_batch(h.view())
    }
}

/// Trains the `D0 -> width -> classes` network by mini-batch gradient
/// descent on `cfg.loss`. Initialization and shuffling are seeded from
/// `cfg.seed`.
pub fn train_hidden<T: Scalar>(
    descriptors: ArrayView2<'_, T>,
    labels: &[usize],
    classes: usize,
    width: usize,
    cfg: &TrainConfig,
) -> Result<HiddenTraining<T>> {
    cfg.validate()?;
    if descriptors.nrows() == 0 {
        return Err(Error::Empty("training set"));
    }
    if width == 0 {
        return Err(Error::invalid("hidden width", "must be at least 1"));
    }
    check_dim("training labels", descriptors.nrows(), labels.len())?;
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    let d0 = descriptors.ncols();
    let mut hidden = HiddenLayer::init(d0, width, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let head_weights = uniform_fan_in::<T>(&mut rng, classes, width);
    let bound = 1.0 / (width as f64).sqrt();
    let head_bias = cfg
        .bias
        .then(|| Array1::from_shape_simple_fn(classes, || T::of(rng.random_range(-bound..bound))));
    let mut head = ReadoutModel::new(head_weights, head_bias)?;

    let mut order: Vec<usize> = (0..descriptors.nrows()).collect();
    let mut opt = OptimizerState::<T>::new(cfg.optimizer, 4);
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = descriptors.select(Axis(0), chunk);
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let h = hidden.embed(x.view())?;
            let logits = head.forward_batch(h.view())?;
            let (loss, g_logits) = cfg.loss.loss_for_labels(logits.view(), &batch_labels)?;
            loss_sum += loss.f64() * chunk.len() as f64;

            let g_head = g_logits.t().dot(&h);
            let g_head_bias = g_logits.sum_axis(Axis(0));
            let mut g_pre = g_logits.dot(&head.weights);
            Zip::from(&mut g_pre)
                .and(&h)
                .for_each(|g, &hv| *g *= T::one() - hv * hv);
            let g_w = g_pre.t().dot(&x);
            let g_b = g_pre.sum_axis(Axis(0));

            opt.update(
                0,
                head.weights.view_mut().into_dyn(),
                g_head.view().into_dyn(),
                cfg.learning_rate,
            );
            if let Some(b) = head.bias.as_mut() {
                opt.update(
                    1,
                    b.view_mut().into_dyn(),
                    g_head_bias.view().into_dyn(),
                    cfg.learning_rate,
                );
            }
            opt.update(
                2,
                hidden.weights.view_mut().into_dyn(),
                g_w.view().into_dyn(),
                cfg.learning_rate,
            );
            opt.update(
                3,
                hidden.bias.view_mut().into_dyn(),
                g_b.view().into_dyn(),
                cfg.learning_rate,
            );
        }
        let logits = head.forward_batch(hidden.embed(descriptors)?.view())?;
        trace.push(EpochStats {
            epoch: epoch + 1,
            loss: loss_sum / descriptors.nrows() as f64,
            train_accuracy: crate::readout::label_accuracy(logits.view(), labels),
            validation_accuracy: None,
        });
    }
    Ok(HiddenTraining { hidden, head, trace })
}
