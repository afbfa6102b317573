//! Synthetic traversal pairs with controllable appearance change.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{write_descriptors, Dataset, DatasetManifest, DescriptorSet, ToleranceUnits};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub places: usize,
    /// Per-entry standard deviation of the query noise.
    pub noise: f64,
    /// Correlation between consecutive place prototypes, in `[0, 1)`.
    pub drift: f64,
    pub seed: u64,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Per-entry standard deviation of the prototypes.
    #[serde(default = "default_signal")]
    pub signal: f64,
    /// Global query offset, as a multiple of `noise`.
    #[serde(default = "default_shift")]
    pub condition_shift: f64,
}

fn default_dim() -> usize {
    64
}

fn default_signal() -> f64 {
    0.3
}

fn default_shift() -> f64 {
    0.5
}

impl SynthConfig {
    pub fn new(places: usize, noise: f64, drift: f64, seed: u64) -> Self {
        Self {
            places,
            noise,
            drift,
            seed,
            dim: default_dim(),
            signal: default_signal(),
            condition_shift: default_shift(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.places < 2 {
            return Err(Error::invalid("places", "need at least 2"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::invalid("noise", "must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&self.drift) {
            return Err(Error::invalid("drift", "must lie in [0, 1)"));
        }
        if self.dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        if !(self.signal > 0.0 && self.signal.is_finite()) {
            return Err(Error::invalid("signal", "must be finite and > 0"));
        }
        if !(self.condition_shift >= 0.0 && self.condition_shift.is_finite()) {
            return Err(Error::invalid("condition_shift", "must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset<T> {
    pub manifest: DatasetManifest,
    pub reference: DescriptorSet<T>,
    pub query: DescriptorSet<T>,
}

impl<T: Scalar> SynthDataset<T> {
    pub fn into_dataset(self) -> Result<Dataset<T>> {
        Dataset::new(self.manifest, self.reference, self.query)
    }

    /// Writes `reference.bin`, `query.bin` and `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_descriptors(&dir.join(&self.manifest.reference), &self.reference)?;
        write_descriptors(&dir.join(&self.manifest.query), &self.query)?;
        let path = dir.join("manifest.json");
        self.manifest.save(&path)?;
        Ok(path)
    }
}

/// Prototypes follow a stationary AR(1) walk
/// `p_t = drift p_{t-1} + sqrt(1 - drift^2) xi_t`; the query is the reference
/// plus i.i.d. noise and one offset vector shared by the whole traversal.
pub fn synth_dataset<T: Scalar>(cfg: &SynthConfig) -> Result<SynthDataset<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (c, d) = (cfg.places, cfg.dim);
    let innovation = (1.0 - cfg.drift * cfg.drift).sqrt();
    let mut reference = Array2::<f64>::zeros((c, d));
    let mut prev = Array1::<f64>::zeros(d);
    for t in 0..c {
        for (j, p) in prev.iter_mut().enumerate() {
            let xi = cfg.signal * rng.sample::<f64, _>(StandardNormal);
            *p = if t == 0 { xi } else { cfg.drift * *p + innovation * xi };
            reference[(t, j)] = *p;
        }
    }
    let shift: Vec<f64> = (0..d)
        .map(|_| cfg.condition_shift * cfg.noise * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut query = reference.clone();
    for mut row in query.rows_mut() {
        for (q, s) in row.iter_mut().zip(&shift) {
            *q += s + cfg.noise * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let manifest = DatasetManifest {
        name: format!("synth-c{}-s{}-d{}-seed{}", c, cfg.noise, cfg.drift, cfg.seed),
        reference: PathBuf::from("reference.bin"),
        query: PathBuf::from("query.bin"),
        places: c,
        tolerance: 0.0,
        tolerance_units: ToleranceUnits::Frames,
        positions: None,
        ground_truth: Some((0..c).collect()),
        descriptor_dim: Some(d),
        base_dir: PathBuf::new(),
    };
    Ok(SynthDataset {
        manifest,
        reference: DescriptorSet::new(reference.mapv(T::of))?,
        query: DescriptorSet::new(query.mapv(T::of))?,
    })
}
