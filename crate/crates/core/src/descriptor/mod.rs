//! Image descriptor ingestion and the dimensionality-reducing front end.

mod file;
mod hidden;
mod manifest;
mod synth;

pub use file::{read_descriptors, write_descriptors, DESCRIPTOR_MAGIC, DESCRIPTOR_VERSION};
pub use hidden::{train_hidden, HiddenLayer, HiddenTraining, DEFAULT_HIDDEN_WIDTH};
pub use manifest::{Dataset, DatasetManifest, Positions, ToleranceUnits};
pub use synth::{synth_dataset, SynthConfig, SynthDataset};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Rows are frames in acquisition order.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet<T> {
    pub descriptors: Array2<T>,
    pub frame_ids: Vec<usize>,
}

impl<T: Scalar> DescriptorSet<T> {
    pub fn new(descriptors: Array2<T>) -> Result<Self> {
        if descriptors.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("descriptors"));
        }
        let frame_ids = (0..descriptors.nrows()).collect();
        Ok(Self { descriptors, frame_ids })
    }

    pub fn len(&self) -> usize {
        self.descriptors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.descriptors.ncols()
    }
}
