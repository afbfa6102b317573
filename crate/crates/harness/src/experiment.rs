//! Model assembly and the multi-trial experiment loop.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use resvpr_core::descriptor::{synth_dataset, train_hidden, HiddenTraining};
use resvpr_core::readout::{train, EpochStats, ValidationSet};
use resvpr_core::reservoir::SequenceEncoder;
use resvpr_core::snapshot::{save_hidden, save_readout, save_reservoir};
use resvpr_core::{
    Dataset, EvalReport, HierarchicalReservoir, LossKind, MatchContext, PredictionRecord, ReadoutModel, Reservoir,
    Scalar, SparceLayer,
};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ModelKind, Precision};
use crate::error::{HarnessError, Result};

/// Independent seed for a named stream of one trial.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const STREAM_HIDDEN: u64 = 1;
const STREAM_READOUT: u64 = 2;
const STREAM_RESERVOIR: u64 = 16;

pub fn trial_seed(cfg: &ExperimentConfig, trial: usize) -> u64 {
    cfg.seed.wrapping_add(trial as u64)
}

/// Dataset plus the labels and match rule derived from it.
#[derive(Debug, Clone)]
pub struct Prepared<T> {
    pub dataset: Dataset<T>,
    pub labels: Vec<usize>,
    pub truth: Vec<usize>,
    pub ctx: MatchContext,
}

impl<T: Scalar> Prepared<T> {
    pub fn new(dataset: Dataset<T>, tolerance: Option<f64>) -> Self {
        let mut ctx = dataset.match_context();
        if let Some(t) = tolerance {
            ctx.tolerance.value = t;
        }
        Self {
            labels: dataset.reference_labels(),
            truth: dataset.ground_truth(),
            ctx,
            dataset,
        }
    }

    pub fn places(&self) -> usize {
        self.dataset.places()
    }

    pub fn query_len(&self) -> usize {
        self.dataset.query.len()
    }

    /// Length of the leading validation slice: `ceil(fraction * T_query)`.
    pub fn validation_len(&self, fraction: f64) -> usize {
        ((fraction * self.query_len() as f64).ceil() as usize).min(self.query_len())
    }

    pub fn record(&self, frame: usize, scores: ndarray::ArrayView1<'_, f64>, depth: usize) -> Result<PredictionRecord> {
        Ok(PredictionRecord::from_scores(frame, scores, depth, self.truth[frame])?
            .with_position(self.dataset.query_position(frame)))
    }
}

pub fn load_data<T: Scalar>(cfg: &ExperimentConfig) -> Result<Prepared<T>> {
    let dataset = match (&cfg.manifest, &cfg.synth) {
        (Some(path), _) => Dataset::load(path)?,
        (None, Some(s)) => synth_dataset::<T>(s)?.into_dataset()?,
        (None, None) => return Err(HarnessError::Config("no data source".into())),
    };
    Ok(Prepared::new(dataset, cfg.tolerance))
}

/// Trained hidden layer and both traversals pushed through it.
#[derive(Debug, Clone)]
pub struct FrontEnd<T> {
    pub training: HiddenTraining<T>,
    pub reference: Array2<T>,
    pub query: Array2<T>,
}

/// Trains the hidden layer on the given reference rows.
pub fn train_front_end<T: Scalar>(
    data: &Prepared<T>,
    cfg: &ExperimentConfig,
    seed: u64,
    rows: &[usize],
) -> Result<FrontEnd<T>> {
    let descriptors = data.dataset.reference.descriptors.view();
    let mut hcfg = cfg.hidden.train.clone();
    hcfg.seed = derive_seed(seed, STREAM_HIDDEN);
    let (x, labels) = subset(descriptors, &data.labels, rows);
    let training = train_hidden(x.view(), &labels, data.places(), cfg.hidden.width, &hcfg)?;
    let reference = training.hidden.embed(descriptors)?;
    let query = training.hidden.embed(data.dataset.query.descriptors.view())?;
    Ok(FrontEnd {
        training,
        reference,
        query,
    })
}

fn subset<T: Scalar>(x: ArrayView2<'_, T>, labels: &[usize], rows: &[usize]) -> (Array2<T>, Vec<usize>) {
    (x.select(Axis(0), rows), rows.iter().map(|&r| labels[r]).collect())
}

#[derive(Debug, Clone)]
pub enum Encoder<T> {
    Flat(Reservoir<T>),
    Layered(HierarchicalReservoir<T>),
}

impl<T: Scalar> Encoder<T> {
    pub fn build(kind: ModelKind, cfg: &ExperimentConfig, input_dim: usize, seed: u64) -> Result<Self> {
        if kind.is_hierarchical() {
            let h = cfg
                .hierarchy
                .as_ref()
                .ok_or_else(|| HarnessError::Config("missing `hierarchy`".into()))?;
            let spec = h.spec(input_dim, |k| derive_seed(seed, STREAM_RESERVOIR + k as u64));
            Ok(Encoder::Layered(HierarchicalReservoir::build(spec)?))
        } else {
            let r = cfg
                .reservoir
                .as_ref()
                .ok_or_else(|| HarnessError::Config("missing `reservoir`".into()))?;
            let spec = r.spec(input_dim, derive_seed(seed, STREAM_RESERVOIR));
            Ok(Encoder::Flat(Reservoir::build(spec)?))
        }
    }

    pub fn as_encoder(&self) -> &dyn SequenceEncoder<T> {
        match self {
            Encoder::Flat(r) => r,
            Encoder::Layered(h) => h,
        }
    }

    /// Runs `inputs` from the zero state.
    pub fn encode(&self, inputs: ArrayView2<'_, T>) -> Result<Array2<T>> {
        Ok(self.as_encoder().encode(inputs)?)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        match self {
            Encoder::Flat(r) => save_reservoir(&dir.join("reservoir.bin"), r)?,
            Encoder::Layered(h) => {
                for (k, layer) in h.layers().iter().enumerate() {
                    save_reservoir(&dir.join(format!("reservoir_layer{k}.bin")), layer)?;
                }
            }
        }
        Ok(())
    }
}

/// A trained model of any kind, ready to score representations.
#[derive(Debug, Clone)]
pub struct TrainedModel<T> {
    pub kind: ModelKind,
    pub encoder: Option<Encoder<T>>,
    pub readout: ReadoutModel<T>,
    pub sparce: Option<SparceLayer<T>>,
    pub loss: LossKind,
    pub trace: Vec<EpochStats>,
}

impl<T: Scalar> TrainedModel<T> {
    /// Readout input for a traversal that starts from the zero state.
    pub fn representations(&self, embedded: ArrayView2<'_, T>) -> Result<Array2<T>> {
        match &self.encoder {
            Some(enc) => enc.encode(embedded),
            None => Ok(embedded.to_owned()),
        }
    }

    /// Per-row class probabilities in `f64`.
    pub fn scores(&self, reps: ArrayView2<'_, T>) -> Result<Array2<f64>> {
        let features = match &self.sparce {
            Some(layer) => layer.apply_batch(reps)?,
            None => reps.to_owned(),
        };
        let logits = self.readout.forward_batch(features.view())?;
        let mut out = Array2::zeros(logits.dim());
        for (mut dst, row) in out.rows_mut().into_iter().zip(logits.rows()) {
            let p = self.loss.probabilities(row);
            dst.assign(&p.mapv(|v| v.f64()));
        }
        Ok(out)
    }

    pub fn save(&self, dir: &Path, front: &FrontEnd<T>) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        save_hidden(&dir.join("hidden.bin"), &front.training.hidden)?;
        if let Some(enc) = &self.encoder {
            enc.save(dir)?;
        }
        save_readout(&dir.join("readout.bin"), &self.readout, self.sparce.as_ref())?;
        write_text(&dir.join("trace.csv"), &EpochStats::csv(&self.trace))?;
        write_text(&dir.join("hidden_trace.csv"), &EpochStats::csv(&front.training.trace))
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// Trains `kind` on reference rows `rows`. The reservoir always runs over
/// the complete reference traversal; only the readout sees the subset.
pub fn train_model<T: Scalar>(
    kind: ModelKind,
    cfg: &ExperimentConfig,
    data: &Prepared<T>,
    front: &FrontEnd<T>,
    seed: u64,
    rows: &[usize],
) -> Result<TrainedModel<T>> {
    if !kind.uses_reservoir() {
        return Ok(TrainedModel {
            kind,
            encoder: None,
            readout: front.training.head.clone(),
            sparce: None,
            loss: cfg.hidden.train.loss,
            trace: front.training.trace.clone(),
        });
    }
    let encoder = Encoder::build(kind, cfg, front.reference.ncols(), seed)?;
    let states = encoder.encode(front.reference.view())?;
    let (train_states, train_labels) = subset(states.view(), &data.labels, rows);
    let sparce = if kind.uses_sparce() {
        Some(SparceLayer::calibrate(train_states.view(), cfg.sparce_level)?)
    } else {
        None
    };

    let val_len = data.validation_len(cfg.validation_fraction);
    let val_states = encoder.encode(front.query.slice(ndarray::s![..val_len, ..]))?;
    let validation = ValidationSet {
        reps: val_states.view(),
        labels: &data.truth[..val_len],
    };

    let mut tcfg = cfg.train.clone();
    tcfg.seed = derive_seed(seed, STREAM_READOUT);
    let model = ReadoutModel::zeros(data.places(), states.ncols(), tcfg.bias);
    let outcome = train(
        train_states.view(),
        &train_labels,
        model,
        sparce,
        &tcfg,
        Some(validation),
    )?;
    Ok(TrainedModel {
        kind,
        encoder: Some(encoder),
        readout: outcome.model,
        sparce: outcome.sparce,
        loss: tcfg.loss,
        trace: outcome.trace,
    })
}

/// Scores the query frames in `frames` after streaming the whole query.
pub fn evaluate<T: Scalar>(
    model: &TrainedModel<T>,
    cfg: &ExperimentConfig,
    data: &Prepared<T>,
    front: &FrontEnd<T>,
    frames: &[usize],
) -> Result<EvalReport> {
    let reps = model.representations(front.query.view())?;
    let scores = model.scores(reps.view())?;
    let depth = cfg.ranking_depth().min(data.places());
    let records = frames
        .iter()
        .map(|&f| data.record(f, scores.row(f), depth))
        .collect::<Result<Vec<_>>>()?;
    let ns: Vec<usize> = cfg.recall_at.iter().copied().filter(|&n| n <= data.places()).collect();
    Ok(EvalReport::evaluate(records, &ns, &data.ctx)?)
}

/// Query frames scored in the test report.
pub fn test_frames<T: Scalar>(cfg: &ExperimentConfig, data: &Prepared<T>) -> Vec<usize> {
    let skip = if cfg.exclude_validation_from_test {
        data.validation_len(cfg.validation_fraction)
    } else {
        0
    };
    (skip..data.query_len()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub seed: u64,
    pub model: ModelKind,
    pub accuracy: f64,
    pub pr_auc: f64,
    pub recall_at: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub seed: u64,
    pub model: ModelKind,
    pub category: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation; 0 for a single trial.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub model: ModelKind,
    pub trials: usize,
    pub accuracy: MeanStd,
    pub pr_auc: MeanStd,
    pub recall_at: BTreeMap<usize, MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub name: String,
    pub trials: Vec<TrialSummary>,
    pub failures: Vec<TrialFailure>,
    pub aggregates: Vec<Aggregate>,
}

impl ExperimentOutcome {
    pub fn aggregate(&self, model: ModelKind) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.model == model)
    }

    /// Accuracies of `model`, ordered by trial.
    pub fn accuracies(&self, model: ModelKind) -> Vec<f64> {
        self.trials
            .iter()
            .filter(|t| t.model == model)
            .map(|t| t.accuracy)
            .collect()
    }

    pub fn summary_csv(&self) -> String {
        let ns: Vec<usize> = self
            .trials
            .first()
            .map(|t| t.recall_at.keys().copied().collect())
            .unwrap_or_default();
        let mut out = String::from("trial,seed,model,accuracy,pr_auc");
        for n in &ns {
            let _ = write!(out, ",recall@{n}");
        }
        out.push('\n');
        for t in &self.trials {
            let _ = write!(out, "{},{},{},{},{}", t.trial, t.seed, t.model, t.accuracy, t.pr_auc);
            for n in &ns {
                let _ = write!(out, ",{}", t.recall_at.get(n).copied().unwrap_or(f64::NAN));
            }
            out.push('\n');
        }
        for a in &self.aggregates {
            for (label, pick) in [("mean", 0), ("std", 1)] {
                let get = |m: &MeanStd| if pick == 0 { m.mean } else { m.std };
                let _ = write!(out, "{label},,{},{},{}", a.model, get(&a.accuracy), get(&a.pr_auc));
                for n in &ns {
                    let _ = write!(out, ",{}", a.recall_at.get(n).map(get).unwrap_or(f64::NAN));
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        write_text(&dir.join("summary.csv"), &self.summary_csv())?;
        let json = serde_json::to_string_pretty(self).expect("outcome serializes");
        write_text(&dir.join("aggregate.json"), &json)
    }
}

fn aggregate(trials: &[TrialSummary], models: &[ModelKind]) -> Vec<Aggregate> {
    models
        .iter()
        .filter_map(|&m| {
            let rows: Vec<&TrialSummary> = trials.iter().filter(|t| t.model == m).collect();
            if rows.is_empty() {
                return None;
            }
            let pick = |f: &dyn Fn(&TrialSummary) -> f64| MeanStd::of(&rows.iter().map(|t| f(t)).collect::<Vec<_>>());
            let recall_at = rows[0]
                .recall_at
                .keys()
                .map(|&n| (n, pick(&|t| t.recall_at[&n])))
                .collect();
            Some(Aggregate {
                model: m,
                trials: rows.len(),
                accuracy: pick(&|t| t.accuracy),
                pr_auc: pick(&|t| t.pr_auc),
                recall_at,
            })
        })
        .collect()
}

pub fn trial_dir(out: &Path, trial: usize, model: ModelKind) -> PathBuf {
    out.join(format!("trial_{trial:03}")).join(model.name())
}

type TrialResult = (usize, u64, ModelKind, std::result::Result<EvalReport, (String, String)>);

fn failure(e: HarnessError) -> (String, String) {
    (e.category().to_string(), e.to_string())
}

fn run_trial<T: Scalar>(
    cfg: &ExperimentConfig,
    data: &Prepared<T>,
    models: &[ModelKind],
    trial: usize,
) -> Vec<TrialResult> {
    let seed = trial_seed(cfg, trial);
    let all_rows: Vec<usize> = (0..data.places()).collect();
    let frames = test_frames(cfg, data);
    let front = match train_front_end(data, cfg, seed, &all_rows) {
        Ok(f) => f,
        Err(e) => {
            let f = failure(e);
            return models.iter().map(|&m| (trial, seed, m, Err(f.clone()))).collect();
        }
    };
    models
        .iter()
        .map(|&kind| {
            let result = (|| -> Result<EvalReport> {
                let model = train_model(kind, cfg, data, &front, seed, &all_rows)?;
                let report = evaluate(&model, cfg, data, &front, &frames)?;
                if let Some(out) = &cfg.output_dir {
                    let dir = trial_dir(out, trial, kind);
                    model.save(&dir, &front)?;
                    report.write_json(&dir.join("report.json"))?;
                }
                Ok(report)
            })();
            (trial, seed, kind, result.map_err(failure))
        })
        .collect()
}

fn run_models_t<T: Scalar>(cfg: &ExperimentConfig, models: &[ModelKind]) -> Result<ExperimentOutcome> {
    let data = load_data::<T>(cfg)?;
    let results: Vec<Vec<TrialResult>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| run_trial(cfg, &data, models, trial))
        .collect();
    let mut trials = Vec::new();
    let mut failures = Vec::new();
    for (trial, seed, model, r) in results.into_iter().flatten() {
        match r {
            Ok(rep) => trials.push(TrialSummary {
                trial,
                seed,
                model,
                accuracy: rep.accuracy,
                pr_auc: rep.pr_auc,
                recall_at: rep.recall_at,
            }),
            Err((category, message)) => failures.push(TrialFailure {
                trial,
                seed,
                model,
                category,
                message,
            }),
        }
    }
    let outcome = ExperimentOutcome {
        name: cfg.name.clone(),
        aggregates: aggregate(&trials, models),
        trials,
        failures,
    };
    if let Some(out) = &cfg.output_dir {
        outcome.write(out)?;
    }
    if outcome.trials.is_empty() {
        return Err(HarnessError::AllTrialsFailed(cfg.trials * models.len()));
    }
    Ok(outcome)
}

/// Runs several model kinds on shared per-trial hidden layers, so trials
/// are paired across models.
pub fn run_models(cfg: &ExperimentConfig, models: &[ModelKind]) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    for &m in models {
        let mut c = cfg.clone();
        c.model = m;
        c.validate()?;
    }
    match cfg.precision {
        Precision::F64 => run_models_t::<f64>(cfg, models),
        Precision::F32 => run_models_t::<f32>(cfg, models),
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    run_models(cfg, &[cfg.model])
}
