use ndarray::{ArrayD, ArrayViewD, ArrayViewMutD, Zip};
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Parameter update rule. Plain gradient descent is the default.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Optimizer {
    #[default]
    Sgd,
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_eps() -> f64 {
    1e-8
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

/// Per-parameter optimizer state, addressed by slot index.
#[derive(Debug)]
pub(crate) struct OptimizerState<T> {
    rule: Optimizer,
    steps: Vec<i32>,
    first: Vec<Option<ArrayD<T>>>,
    second: Vec<Option<ArrayD<T>>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub(crate) fn new(rule: Optimizer, slots: usize) -> Self {
        Self {
            rule,
            steps: vec![0; slots],
            first: vec![None; slots],
            second: vec![None; slots],
        }
    }

    pub(crate) fn update(&mut self, slot: usize, mut param: ArrayViewMutD<'_, T>, grad: ArrayViewD<'_, T>, lr: f64) {
        match self.rule {
            Optimizer::Sgd => {
                let lr = T::of(lr);
                Zip::from(&mut param).and(&grad).for_each(|p, &g| *p -= lr * g);
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                self.steps[slot] += 1;
                let t = self.steps[slot];
                let m = self.first[slot].get_or_insert_with(|| ArrayD::zeros(grad.raw_dim()));
                let v = self.second[slot].get_or_insert_with(|| ArrayD::zeros(grad.raw_dim()));
                let (b1, b2) = (T::of(beta1), T::of(beta2));
                let c1 = T::of(1.0 - beta1.powi(t));
                let c2 = T::of(1.0 - beta2.powi(t));
                let (lr, eps) = (T::of(lr), T::of(eps));
                Zip::from(&mut param).and(&grad).and(m).and(v).for_each(|p, &g, m, v| {
                    *m = b1 * *m + (T::one() - b1) * g;
                    *v = b2 * *v + (T::one() - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
            }
        }
    }
}
