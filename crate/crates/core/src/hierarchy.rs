//! Unidirectionally stacked reservoirs.
//!
//! Layer 1 is driven by the external input through `gamma W_in`. Layer `k > 1`
//! is driven by the previous-step state of layer `k - 1` through
//! `rho^(k,k-1) W^(k,k-1)`, where `W^(k,k-1)` is that layer's dense Gaussian
//! input matrix. All layers update synchronously; the readout representation
//! is the concatenation of every layer's state.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::reservoir::{Reservoir, ReservoirMatrices, ReservoirSpec, ReservoirState, SequenceEncoder};
use crate::scalar::Scalar;

/// Per-layer specs plus inter-layer scales.
///
/// `layers[k].input_dim` must equal `layers[k - 1].size` for `k >= 1`, and
/// `inter_scales[k - 1]` is `rho^(k,k-1)`. The `input_gain` of upper layers
/// is not used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchySpec {
    pub layers: Vec<ReservoirSpec>,
    pub inter_scales: Vec<f64>,
}

impl HierarchySpec {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Empty("hierarchy layers"));
        }
        check_dim("inter-layer scales", self.layers.len() - 1, self.inter_scales.len())?;
        for spec in &self.layers {
            spec.validate()?;
        }
        for k in 1..self.layers.len() {
            check_dim(
                "upper layer input dim",
                self.layers[k - 1].size,
                self.layers[k].input_dim,
            )?;
        }
        if self.inter_scales.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("inter_scales", "must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim
    }

    pub fn total_size(&self) -> usize {
        self.layers.iter().map(|l| l.size).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalReservoir<T> {
    spec: HierarchySpec,
    layers: Vec<Reservoir<T>>,
}

impl<T: Scalar> HierarchicalReservoir<T> {
    pub fn build(spec: HierarchySpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layers
            .iter()
            .cloned()
            .map(Reservoir::build)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { spec, layers })
    }

    pub fn from_layers(spec: HierarchySpec, matrices: Vec<ReservoirMatrices<T>>) -> Result<Self> {
        spec.validate()?;
        check_dim("hierarchy layers", spec.layers.len(), matrices.len())?;
        let layers = spec
            .layers
            .iter()
            .cloned()
            .zip(matrices)
            .map(|(s, m)| Reservoir::from_matrices(s, m))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &HierarchySpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Reservoir<T>] {
        &self.layers
    }

    pub fn zero_states(&self) -> Vec<ReservoirState<T>> {
        self.layers.iter().map(|l| ReservoirState::zeros(l.size())).collect()
    }

    fn drive(&self, k: usize, source: ArrayView1<'_, T>) -> Array1<T> {
        let gain = if k == 0 {
            self.spec.layers[0].input_gain
        } else {
            self.spec.inter_scales[k - 1]
        };
        self.layers[k].matrices().input().dot(&source) * T::of(gain)
    }

    /// Synchronous update of every layer.
    pub fn step(&self, states: &[ReservoirState<T>], input: ArrayView1<'_, T>) -> Result<Vec<ReservoirState<T>>> {
        check_dim("hierarchy states", self.layers.len(), states.len())?;
        for (layer, state) in self.layers.iter().zip(states) {
            check_dim("layer state", layer.size(), state.len())?;
        }
        check_dim("hierarchy input", self.spec.input_dim(), input.len())?;
        let mut out = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let source = if k == 0 { input } else { states[k - 1].view() };
            let drive = self.drive(k, source);
            let mut next = Array1::zeros(layer.size());
            layer.step_with_drive(states[k].view(), drive.view(), &mut next)?;
            out.push(ReservoirState(next));
        }
        Ok(out)
    }

    /// Concatenated layer states.
    pub fn concat(states: &[ReservoirState<T>]) -> Array1<T> {
        let total: usize = states.iter().map(|s| s.len()).sum();
        let mut out = Array1::zeros(total);
        let mut at = 0;
        for s in states {
            out.slice_mut(s![at..at + s.len()]).assign(&s.0);
            at += s.len();
        }
        out
    }

    pub fn run_sequence(&self, initial: &[ReservoirState<T>], inputs: ArrayView2<'_, T>) -> Result<Array2<T>> {
        if inputs.nrows() == 0 {
            return Err(Error::Empty("input sequence"));
        }
        let first_drive = inputs.dot(&self.layers[0].matrices().input().t()) * T::of(self.spec.layers[0].input_gain);
        let mut states = initial.to_vec();
        let mut out = Array2::zeros((inputs.nrows(), self.spec.total_size()));
        for (t, input) in inputs.axis_iter(Axis(0)).enumerate() {
            check_dim("hierarchy input", self.spec.input_dim(), input.len())?;
            let mut next = Vec::with_capacity(states.len());
            for (k, layer) in self.layers.iter().enumerate() {
                let drive = if k == 0 {
                    first_drive.row(t).to_owned()
                } else {
                    self.drive(k, states[k - 1].view())
                };
                let mut x = Array1::zeros(layer.size());
                layer.step_with_drive(states[k].view(), drive.view(), &mut x)?;
                next.push(ReservoirState(x));
            }
            states = next;
            out.row_mut(t).assign(&Self::concat(&states));
        }
        Ok(out)
    }
}

impl<T: Scalar> SequenceEncoder<T> for HierarchicalReservoir<T> {
    fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.spec.total_size()
    }

    fn encode(&self, inputs: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.run_sequence(&self.zero_states(), inputs)
    }

    fn fingerprint(&self) -> u64 {
        self.layers.iter().fold(0xcbf2_9ce4_8422_2325u64, |acc, l| {
            (acc ^ l.matrices().fingerprint()).wrapping_mul(0x0100_0000_01b3)
        })
    }
}
