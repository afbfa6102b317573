//! Experiment configuration files and shipped presets.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use resvpr_core::reservoir::Activation;
use resvpr_core::{HierarchySpec, ReservoirSpec, SynthConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "NV")]
    Nv,
    #[serde(rename = "NV-ESN")]
    NvEsn,
    #[serde(rename = "NV-SPARCE-ESN")]
    NvSparceEsn,
    #[serde(rename = "H-NV-ESN")]
    HNvEsn,
    #[serde(rename = "H-NV-SPARCE-ESN")]
    HNvSparceEsn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Nv,
        ModelKind::NvEsn,
        ModelKind::NvSparceEsn,
        ModelKind::HNvEsn,
        ModelKind::HNvSparceEsn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Nv => "NV",
            ModelKind::NvEsn => "NV-ESN",
            ModelKind::NvSparceEsn => "NV-SPARCE-ESN",
            ModelKind::HNvEsn => "H-NV-ESN",
            ModelKind::HNvSparceEsn => "H-NV-SPARCE-ESN",
        }
    }

    pub fn uses_reservoir(self) -> bool {
        self != ModelKind::Nv
    }

    pub fn is_hierarchical(self) -> bool {
        matches!(self, ModelKind::HNvEsn | ModelKind::HNvSparceEsn)
    }

    pub fn uses_sparce(self) -> bool {
        matches!(self, ModelKind::NvSparceEsn | ModelKind::HNvSparceEsn)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_uppercase().replace('_', "-");
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| HarnessError::Config(format!("unknown model kind `{s}`")))
    }
}

/// Reservoir hyper-parameters without the input dimension, which is set by
/// the hidden layer width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirConfig {
    pub size: usize,
    pub leakage: f64,
    pub input_gain: f64,
    #[serde(default = "default_rho")]
    pub spectral_scale: f64,
    #[serde(default = "default_density")]
    pub density: f64,
    #[serde(default)]
    pub activation: Activation,
}

fn default_rho() -> f64 {
    0.99
}

fn default_density() -> f64 {
    0.1
}

impl ReservoirConfig {
    pub fn spec(&self, input_dim: usize, seed: u64) -> ReservoirSpec {
        ReservoirSpec {
            size: self.size,
            leakage: self.leakage,
            input_gain: self.input_gain,
            spectral_scale: self.spectral_scale,
            density: self.density,
            input_dim,
            activation: self.activation,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyConfig {
    pub layers: Vec<ReservoirConfig>,
    /// Scale of the drive from layer `k-1` into layer `k`.
    pub inter_scales: Vec<f64>,
}

impl HierarchyConfig {
    pub fn spec(&self, input_dim: usize, seeds: impl Fn(usize) -> u64) -> HierarchySpec {
        let mut dim = input_dim;
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(k, l)| {
                let s = l.spec(dim, seeds(k));
                dim = l.size;
                s
            })
            .collect();
        HierarchySpec {
            layers,
            inter_scales: self.inter_scales.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenConfig {
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_width() -> usize {
    resvpr_core::descriptor::DEFAULT_HIDDEN_WIDTH
}

impl Default for HiddenConfig {
    fn default() -> Self {
        Self {
            width: default_width(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

/// Hyper-parameter candidates. Absent lists keep the configured value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leakage: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_gain: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparce_level: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_learning_rate: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral_scale: Option<Vec<f64>>,
    /// Per-layer leakage tuples for hierarchical models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_leakages: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
}

fn default_validation_fraction() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default = "default_starts")]
    pub starts: usize,
    /// Frames streamed after each start. Defaults to `min(100, query length)`.
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default = "default_sweep_n")]
    pub recall_at: Vec<usize>,
}

fn default_starts() -> usize {
    100
}

fn default_sweep_n() -> Vec<usize> {
    vec![1]
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            starts: default_starts(),
            horizon: None,
            recall_at: default_sweep_n(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HoldoutMode {
    #[default]
    Single,
    Pairs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutConfig {
    #[serde(default)]
    pub mode: HoldoutMode,
    /// Fraction of reference places withheld from training.
    pub fraction: f64,
}

impl Default for HoldoutConfig {
    fn default() -> Self {
        Self {
            mode: HoldoutMode::Single,
            fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankConfig {
    /// Binary pair-score table.
    pub scores: PathBuf,
    /// Report whose records are re-ranked.
    pub report: PathBuf,
    #[serde(default = "default_rerank_k")]
    pub k: usize,
}

fn default_rerank_k() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
    pub model: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reservoir: Option<ReservoirConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hierarchy: Option<HierarchyConfig>,
    /// SPARCE percentile level `n` in `[0, 100)`.
    #[serde(default)]
    pub sparce_level: f64,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub hidden: HiddenConfig,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_recall")]
    pub recall_at: Vec<usize>,
    /// Number of ranked places kept per query record.
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    /// Overrides the manifest tolerance value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub exclude_validation_from_test: bool,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holdout: Option<HoldoutConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rerank: Option<RerankConfig>,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_trials() -> usize {
    1
}

fn default_recall() -> Vec<usize> {
    vec![1, 5, 10]
}

fn default_top_k() -> usize {
    100
}

impl ExperimentConfig {
    /// Minimal configuration for `model` on `synth` data.
    pub fn synthetic(model: ModelKind, synth: SynthConfig, reservoir: ReservoirConfig) -> Self {
        Self {
            name: default_name(),
            manifest: None,
            synth: Some(synth),
            model,
            reservoir: Some(reservoir),
            hierarchy: None,
            sparce_level: 0.0,
            train: TrainConfig::default(),
            hidden: HiddenConfig::default(),
            trials: 1,
            recall_at: default_recall(),
            top_k: default_top_k(),
            tolerance: None,
            output_dir: None,
            seed: 0,
            exclude_validation_from_test: false,
            validation_fraction: default_validation_fraction(),
            precision: Precision::F64,
            grid: None,
            sweep: None,
            holdout: None,
            rerank: None,
        }
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_value(value).map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Reads a config file. Relative manifest and rerank paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_value(read_json(path)?)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new("")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(m) = self.manifest.as_mut() {
            fix(m);
        }
        if let Some(r) = self.rerank.as_mut() {
            fix(&mut r.scores);
            fix(&mut r.report);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.trials == 0 {
            return fail("trials must be at least 1");
        }
        match (&self.manifest, &self.synth) {
            (None, None) => return fail("either `manifest` or `synth` is required"),
            (Some(_), Some(_)) => return fail("`manifest` and `synth` are mutually exclusive"),
            _ => {}
        }
        if self.model.is_hierarchical() {
            match &self.hierarchy {
                None => return fail("hierarchical models need a `hierarchy` section"),
                Some(h) if h.layers.is_empty() => return fail("`hierarchy.layers` is empty"),
                Some(h) if h.inter_scales.len() + 1 != h.layers.len() => {
                    return fail("`hierarchy.inter_scales` needs one entry per layer above the first")
                }
                _ => {}
            }
        } else if self.model.uses_reservoir() && self.reservoir.is_none() {
            return fail("reservoir models need a `reservoir` section");
        }
        if !(0.0..100.0).contains(&self.sparce_level) {
            return fail("`sparce_level` must lie in [0, 100)");
        }
        if self.recall_at.contains(&0) {
            return fail("`recall_at` entries must be at least 1");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return fail("`validation_fraction` must lie in (0, 1)");
        }
        if matches!(self.tolerance, Some(t) if !(t >= 0.0)) {
            return fail("`tolerance` must be >= 0");
        }
        if self.hidden.width == 0 {
            return fail("`hidden.width` must be at least 1");
        }
        self.train.validate()?;
        self.hidden.train.validate()?;
        Ok(())
    }

    /// Ranked places kept per record: enough for every requested recall.
    pub fn ranking_depth(&self) -> usize {
        self.recall_at.iter().copied().chain([self.top_k, 1]).max().unwrap_or(1)
    }
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Recursively overlays `top` onto `base`; objects merge, other values replace.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

macro_rules! presets {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../presets/", $name, ".json")))),*]
    };
}

/// Named configurations shipped with the binary.
pub const PRESETS: &[(&str, &str)] = presets![
    "gardens_nv",
    "gardens_nv_esn",
    "gardens_nv_sparce_esn",
    "gardens_nv_esn_2000",
    "gardens_nv_sparce_esn_2000",
    "gardens_h_nv_esn",
    "gardens_h_nv_sparce_esn",
    "sped_nv_esn",
    "sped_nv_sparce_esn",
    "essex_nv_esn",
    "essex_nv_sparce_esn",
    "corridor_nv_esn",
    "corridor_nv_sparce_esn",
    "nordland_subset_nv_esn",
    "nordland_subset_nv_sparce_esn",
    "nordland_nv_esn",
    "nordland_nv_sparce_esn",
    "oxford_nv_esn",
    "oxford_nv_sparce_esn",
];

pub fn preset(name: &str) -> Result<Value> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| HarnessError::UnknownPreset(name.to_string()))?;
    serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("preset {name}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_kind_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
        assert_eq!("nv_sparce_esn".parse::<ModelKind>().unwrap(), ModelKind::NvSparceEsn);
        assert!("LSTM".parse::<ModelKind>().is_err());
    }

    #[test]
    fn merge_overlays_nested_objects() {
        let mut base = serde_json::json!({"a": 1, "b": {"c": 2, "d": 3}});
        merge(&mut base, serde_json::json!({"b": {"d": 4}, "e": 5}));
        assert_eq!(base, serde_json::json!({"a": 1, "b": {"c": 2, "d": 4}, "e": 5}));
    }

    #[test]
    fn validation_rules() {
        let base = ExperimentConfig::synthetic(
            ModelKind::NvEsn,
            SynthConfig::new(10, 0.1, 0.0, 0),
            ReservoirConfig {
                size: 20,
                leakage: 0.5,
                input_gain: 1.0,
                spectral_scale: 0.99,
                density: 0.1,
                activation: Activation::Tanh,
            },
        );
        assert!(base.validate().is_ok());
        let mut c = base.clone();
        c.trials = 0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.reservoir = None;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.model = ModelKind::HNvEsn;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.manifest = Some("m.json".into());
        assert!(c.validate().is_err());
        let mut c = base;
        c.sparce_level = 100.0;
        assert!(c.validate().is_err());
    }
}
