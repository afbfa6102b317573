use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_descriptors, DescriptorSet};
use crate::error::{check_dim, Error, Result};
pub use crate::metrics::ToleranceUnits;
use crate::metrics::{MatchContext, Tolerance};
use crate::scalar::Scalar;

/// Per-frame positions used by meters-based matching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Positions {
    pub reference: Vec<Vec<f64>>,
    pub query: Vec<Vec<f64>>,
}

/// Dataset description. Descriptor paths are relative to the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub reference: PathBuf,
    pub query: PathBuf,
    pub places: usize,
    pub tolerance: f64,
    #[serde(default)]
    pub tolerance_units: ToleranceUnits,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Positions>,
    /// Query frame -> reference index. Identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Vec<usize>>,
    /// Expected descriptor dimension, checked against file headers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptor_dim: Option<usize>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(Error::invalid("tolerance", "must be finite and >= 0"));
        }
        if self.places == 0 {
            return Err(Error::invalid("places", "must be at least 1"));
        }
        if let Some(gt) = &self.ground_truth {
            if let Some(&bad) = gt.iter().find(|&&g| g >= self.places) {
                return Err(Error::LabelOutOfRange {
                    label: bad,
                    classes: self.places,
                });
            }
        }
        if self.tolerance_units == ToleranceUnits::Meters {
            let pos = self
                .positions
                .as_ref()
                .ok_or(Error::MissingPositions("reference and query"))?;
            check_dim("reference positions", self.places, pos.reference.len())?;
        }
        Ok(())
    }

    pub fn reference_path(&self) -> PathBuf {
        self.base_dir.join(&self.reference)
    }

    pub fn query_path(&self) -> PathBuf {
        self.base_dir.join(&self.query)
    }

    pub fn tolerance(&self) -> Tolerance {
        Tolerance {
            value: self.tolerance,
            units: self.tolerance_units,
        }
    }
}

/// A manifest with both traversals loaded.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    pub manifest: DatasetManifest,
    pub reference: DescriptorSet<T>,
    pub query: DescriptorSet<T>,
}

impl<T: Scalar> Dataset<T> {
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest = DatasetManifest::load(manifest_path)?;
        let reference = read_descriptors(
            &manifest.reference_path(),
            manifest.descriptor_dim,
            Some(manifest.places),
        )?;
        let query = read_descriptors(&manifest.query_path(), Some(reference.dim()), None)?;
        Self::new(manifest, reference, query)
    }

    pub fn new(manifest: DatasetManifest, reference: DescriptorSet<T>, query: DescriptorSet<T>) -> Result<Self> {
        manifest.validate()?;
        check_dim("reference frames", manifest.places, reference.len())?;
        check_dim("query descriptor dimension", reference.dim(), query.dim())?;
        if query.is_empty() {
            return Err(Error::Empty("query traversal"));
        }
        match &manifest.ground_truth {
            Some(gt) => check_dim("ground truth", query.len(), gt.len())?,
            None => {
                if query.len() > manifest.places {
                    return Err(Error::invalid(
                        "ground_truth",
                        "required when the query is longer than the reference",
                    ));
                }
            }
        }
        if let Some(pos) = &manifest.positions {
            check_dim("reference positions", reference.len(), pos.reference.len())?;
            check_dim("query positions", query.len(), pos.query.len())?;
        }
        Ok(Self {
            manifest,
            reference,
            query,
        })
    }

    pub fn places(&self) -> usize {
        self.manifest.places
    }

    /// Reference frame `t` is place `t`.
    pub fn reference_labels(&self) -> Vec<usize> {
        (0..self.reference.len()).collect()
    }

    pub fn ground_truth(&self) -> Vec<usize> {
        self.manifest
            .ground_truth
            .clone()
            .unwrap_or_else(|| (0..self.query.len()).collect())
    }

    pub fn match_context(&self) -> MatchContext {
        MatchContext::new(
            self.manifest.tolerance(),
            self.manifest.positions.as_ref().map(|p| p.reference.clone()),
        )
    }

    pub fn query_position(&self, frame: usize) -> Option<Vec<f64>> {
        self.manifest.positions.as_ref().map(|p| p.query[frame].clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::write_descriptors;
    use ndarray::Array2;

    fn manifest_json() -> &'static str {
        r#"{
            "name": "toy",
            "reference": "ref.bin",
            "query": "query.bin",
            "places": 3,
            "tolerance": 1,
            "tolerance_units": "frames"
        }"#
    }

    #[test]
    fn loads_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let set = DescriptorSet::new(Array2::from_shape_fn((3, 2), |(i, j)| (i + j) as f64)).unwrap();
        write_descriptors(&dir.path().join("ref.bin"), &set).unwrap();
        write_descriptors(&dir.path().join("query.bin"), &set).unwrap();
        let mpath = dir.path().join("manifest.json");
        fs::write(&mpath, manifest_json()).unwrap();
        let ds = Dataset::<f64>::load(&mpath).unwrap();
        assert_eq!(ds.places(), 3);
        assert_eq!(ds.ground_truth(), vec![0, 1, 2]);
        assert_eq!(ds.manifest.tolerance_units, ToleranceUnits::Frames);
    }

    #[test]
    fn row_count_must_match_places() {
        let dir = tempfile::tempdir().unwrap();
        let set = DescriptorSet::new(Array2::<f64>::zeros((2, 2))).unwrap();
        write_descriptors(&dir.path().join("ref.bin"), &set).unwrap();
        write_descriptors(&dir.path().join("query.bin"), &set).unwrap();
        let mpath = dir.path().join("manifest.json");
        fs::write(&mpath, manifest_json()).unwrap();
        assert!(matches!(
            Dataset::<f64>::load(&mpath),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn meters_requires_positions() {
        let m: DatasetManifest = serde_json::from_str(&manifest_json().replace("\"frames\"", "\"meters\"")).unwrap();
        assert!(matches!(m.validate(), Err(Error::MissingPositions(_))));
        let mut neg: DatasetManifest = serde_json::from_str(manifest_json()).unwrap();
        neg.tolerance = -1.0;
        assert!(neg.validate().is_err());
        let mut gt: DatasetManifest = serde_json::from_str(manifest_json()).unwrap();
        gt.ground_truth = Some(vec![0, 3]);
        assert!(gt.validate().is_err());
    }

    #[test]
    fn field_names_are_stable() {
        let mut m: DatasetManifest = serde_json::from_str(manifest_json()).unwrap();
        m.ground_truth = Some(vec![0, 1, 2]);
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        for key in [
            "name",
            "reference",
            "query",
            "places",
            "tolerance",
            "tolerance_units",
            "ground_truth",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!(v.get("base_dir").is_none());
    }
}
