//! Generalization to places withheld from training.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use resvpr_core::{EvalReport, Scalar};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, HoldoutConfig, HoldoutMode, Precision};
use crate::error::{HarnessError, Result};
use crate::experiment::{
    derive_seed, evaluate, load_data, test_frames, train_front_end, train_model, trial_dir, trial_seed, MeanStd,
};

const STREAM_HOLDOUT: u64 = 4;

/// Places to withhold. Pairs mode picks disjoint consecutive pairs.
pub fn choose_holdout(places: usize, mode: HoldoutMode, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(HarnessError::HoldoutTooLarge);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = (fraction * places as f64).round() as usize;
    let held: BTreeSet<usize> = match mode {
        HoldoutMode::Single => {
            let mut idx: Vec<usize> = (0..places).collect();
            idx.shuffle(&mut rng);
            idx.into_iter().take(target).collect()
        }
        HoldoutMode::Pairs => {
            let pairs = target / 2;
            let mut firsts: Vec<usize> = (0..places.saturating_sub(1)).collect();
            firsts.shuffle(&mut rng);
            let mut held = BTreeSet::new();
            let mut taken = 0;
            for t in firsts {
                if taken == pairs {
                    break;
                }
                if !held.contains(&t) && !held.contains(&(t + 1)) {
                    held.insert(t);
                    held.insert(t + 1);
                    taken += 1;
                }
            }
            held
        }
    };
    if held.len() >= places {
        return Err(HarnessError::HoldoutTooLarge);
    }
    Ok(held.into_iter().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutTrial {
    pub trial: usize,
    pub seed: u64,
    pub held: Vec<usize>,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutOutcome {
    pub mode: HoldoutMode,
    pub fraction: f64,
    pub trials: Vec<HoldoutTrial>,
    pub accuracy: MeanStd,
}

fn holdout_t<T: Scalar>(cfg: &ExperimentConfig, h: &HoldoutConfig) -> Result<HoldoutOutcome> {
    let data = load_data::<T>(cfg)?;
    let mut trials = Vec::with_capacity(cfg.trials);
    for trial in 0..cfg.trials {
        let seed = trial_seed(cfg, trial);
        let held = choose_holdout(data.places(), h.mode, h.fraction, derive_seed(seed, STREAM_HOLDOUT))?;
        let held_set: BTreeSet<usize> = held.iter().copied().collect();
        let rows: Vec<usize> = (0..data.places()).filter(|p| !held_set.contains(p)).collect();
        let frames: Vec<usize> = if held.is_empty() {
            test_frames(cfg, &data)
        } else {
            (0..data.query_len())
                .filter(|&f| held_set.contains(&data.truth[f]))
                .collect()
        };
        if frames.is_empty() {
            return Err(resvpr_core::Error::Empty("held-out query frames").into());
        }
        let front = train_front_end(&data, cfg, seed, &rows)?;
        let model = train_model(cfg.model, cfg, &data, &front, seed, &rows)?;
        let report = evaluate(&model, cfg, &data, &front, &frames)?;
        if let Some(out) = &cfg.output_dir {
            let dir = trial_dir(&out.join("holdout"), trial, cfg.model);
            model.save(&dir, &front)?;
            report.write_json(&dir.join("report.json"))?;
        }
        trials.push(HoldoutTrial {
            trial,
            seed,
            held,
            report,
        });
    }
    let accs: Vec<f64> = trials.iter().map(|t| t.report.accuracy).collect();
    Ok(HoldoutOutcome {
        mode: h.mode,
        fraction: h.fraction,
        accuracy: MeanStd::of(&accs),
        trials,
    })
}

pub fn holdout_generalization(cfg: &ExperimentConfig, h: &HoldoutConfig) -> Result<HoldoutOutcome> {
    cfg.validate()?;
    let out = match cfg.precision {
        Precision::F64 => holdout_t::<f64>(cfg, h)?,
        Precision::F32 => holdout_t::<f32>(cfg, h)?,
    };
    if let Some(dir) = &cfg.output_dir {
        write_summary(&out, dir)?;
    }
    Ok(out)
}

fn write_summary(out: &HoldoutOutcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let json = serde_json::to_string_pretty(out).expect("holdout serializes");
    crate::experiment::write_text(&dir.join("holdout.json"), &json)
}
