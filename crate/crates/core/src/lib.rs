//! Echo state networks with sparse thresholded readouts for sequence-based
//! visual place recognition.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the bottom of this file name the common instantiations.

pub mod descriptor;
pub mod error;
pub mod hierarchy;
pub mod metrics;
pub mod readout;
pub mod reservoir;
pub mod scalar;
pub mod snapshot;
pub mod sparce;
pub mod sparse;
pub mod spectral;

pub use descriptor::{Dataset, DatasetManifest, DescriptorSet, HiddenLayer, SynthConfig};
pub use error::{Error, Result};
pub use hierarchy::{HierarchicalReservoir, HierarchySpec};
pub use metrics::{EvalReport, MatchContext, PredictionRecord, Tolerance, ToleranceUnits};
pub use readout::{LossKind, Optimizer, ReadoutModel, TrainConfig};
pub use reservoir::{Activation, Reservoir, ReservoirMatrices, ReservoirSpec, ReservoirState, SequenceEncoder};
pub use scalar::Scalar;
pub use sparce::SparceLayer;
pub use sparse::CsrMatrix;
pub use spectral::{spectral_radius, SpectralEstimate};

pub type Reservoir32 = Reservoir<f32>;
pub type Reservoir64 = Reservoir<f64>;
pub type HierarchicalReservoir32 = HierarchicalReservoir<f32>;
pub type HierarchicalReservoir64 = HierarchicalReservoir<f64>;
pub type ReadoutModel32 = ReadoutModel<f32>;
pub type ReadoutModel64 = ReadoutModel<f64>;
pub type SparceLayer32 = SparceLayer<f32>;
pub type SparceLayer64 = SparceLayer<f64>;
pub type HiddenLayer32 = HiddenLayer<f32>;
pub type HiddenLayer64 = HiddenLayer<f64>;
pub type DescriptorSet32 = DescriptorSet<f32>;
pub type DescriptorSet64 = DescriptorSet<f64>;
pub type Dataset32 = Dataset<f32>;
pub type Dataset64 = Dataset<f64>;
