//! Exhaustive hyper-parameter search scored on a leading validation slice.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use resvpr_core::metrics::accuracy;
use resvpr_core::Scalar;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, GridSpec, Precision};
use crate::error::{HarnessError, Result};
use crate::experiment::{
    evaluate, load_data, test_frames, train_front_end, train_model, trial_seed, write_text, FrontEnd, Prepared,
};

/// Effective hyper-parameters of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub leakage: Vec<f64>,
    pub input_gain: f64,
    pub spectral_scale: f64,
    pub learning_rate: f64,
    pub threshold_learning_rate: f64,
    pub sparce_level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub cell: GridCell,
    pub validation_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub rows: Vec<GridRow>,
    pub best: usize,
    pub best_config: ExperimentConfig,
}

impl GridOutcome {
    pub fn best_row(&self) -> &GridRow {
        &self.rows[self.best]
    }

    pub fn table_csv(&self) -> String {
        let mut out = String::from(
            "leakage,input_gain,spectral_scale,learning_rate,threshold_learning_rate,sparce_level,validation_accuracy,test_accuracy\n",
        );
        for r in &self.rows {
            let c = &r.cell;
            let leak: Vec<String> = c.leakage.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                leak.join("/"),
                c.input_gain,
                c.spectral_scale,
                c.learning_rate,
                c.threshold_learning_rate,
                c.sparce_level,
                r.validation_accuracy,
                r.test_accuracy
            );
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        write_text(&dir.join("grid.csv"), &self.table_csv())?;
        let best = serde_json::to_string_pretty(&self.best_config).expect("config serializes");
        write_text(&dir.join("best_config.json"), &best)
    }
}

fn candidates(list: &Option<Vec<f64>>, current: f64, name: &str) -> Result<Vec<f64>> {
    match list {
        None => Ok(vec![current]),
        Some(v) if v.is_empty() => Err(HarnessError::Config(format!("grid list `{name}` is empty"))),
        Some(v) => Ok(v.clone()),
    }
}

fn current_leakages(cfg: &ExperimentConfig) -> Vec<f64> {
    if cfg.model.is_hierarchical() {
        cfg.hierarchy
            .iter()
            .flat_map(|h| h.layers.iter().map(|l| l.leakage))
            .collect()
    } else {
        cfg.reservoir.iter().map(|r| r.leakage).collect()
    }
}

/// Expands the grid into concrete configurations, in row-major order.
pub fn expand(cfg: &ExperimentConfig, grid: &GridSpec) -> Result<Vec<(GridCell, ExperimentConfig)>> {
    if !(grid.validation_fraction > 0.0 && grid.validation_fraction < 1.0) {
        return Err(HarnessError::Config(
            "grid validation fraction must lie in (0, 1)".into(),
        ));
    }
    let leak_now = current_leakages(cfg);
    let leakages: Vec<Vec<f64>> = if cfg.model.is_hierarchical() {
        match &grid.layer_leakages {
            None => vec![leak_now.clone()],
            Some(v) if v.is_empty() => return Err(HarnessError::Config("grid list `layer_leakages` is empty".into())),
            Some(v) => v.clone(),
        }
    } else {
        let first = leak_now.first().copied().unwrap_or(f64::NAN);
        candidates(&grid.leakage, first, "leakage")?
            .into_iter()
            .map(|a| vec![a])
            .collect()
    };
    let gain_now = if cfg.model.is_hierarchical() {
        cfg.hierarchy
            .as_ref()
            .and_then(|h| h.layers.first())
            .map(|l| l.input_gain)
    } else {
        cfg.reservoir.as_ref().map(|r| r.input_gain)
    }
    .unwrap_or(f64::NAN);
    let rho_now = if cfg.model.is_hierarchical() {
        cfg.hierarchy
            .as_ref()
            .and_then(|h| h.layers.first())
            .map(|l| l.spectral_scale)
    } else {
        cfg.reservoir.as_ref().map(|r| r.spectral_scale)
    }
    .unwrap_or(f64::NAN);
    let lr_now = if cfg.model.uses_reservoir() {
        cfg.train.learning_rate
    } else {
        cfg.hidden.train.learning_rate
    };
    let gains = candidates(&grid.input_gain, gain_now, "input_gain")?;
    let rhos = candidates(&grid.spectral_scale, rho_now, "spectral_scale")?;
    let lrs = candidates(&grid.learning_rate, lr_now, "learning_rate")?;
    let thetas = candidates(
        &grid.threshold_learning_rate,
        cfg.train.threshold_learning_rate,
        "threshold_learning_rate",
    )?;
    let levels = candidates(&grid.sparce_level, cfg.sparce_level, "sparce_level")?;

    let mut out = Vec::new();
    for leak in &leakages {
        for &gain in &gains {
            for &rho in &rhos {
                for &lr in &lrs {
                    for &theta in &thetas {
                        for &level in &levels {
                            let cell = GridCell {
                                leakage: leak.clone(),
                                input_gain: gain,
                                spectral_scale: rho,
                                learning_rate: lr,
                                threshold_learning_rate: theta,
                                sparce_level: level,
                            };
                            let c = apply(cfg, &cell)?;
                            out.push((cell, c));
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn apply(cfg: &ExperimentConfig, cell: &GridCell) -> Result<ExperimentConfig> {
    let mut c = cfg.clone();
    c.grid = None;
    if let Some(r) = c.reservoir.as_mut() {
        if !c.model.is_hierarchical() {
            r.leakage = cell.leakage[0];
            r.input_gain = cell.input_gain;
            r.spectral_scale = cell.spectral_scale;
        }
    }
    if let Some(h) = c.hierarchy.as_mut() {
        if c.model.is_hierarchical() {
            if cell.leakage.len() != h.layers.len() {
                return Err(HarnessError::Config(
                    "layer_leakages entry length differs from layer count".into(),
                ));
            }
            for (l, &a) in h.layers.iter_mut().zip(&cell.leakage) {
                l.leakage = a;
                l.spectral_scale = cell.spectral_scale;
            }
            h.layers[0].input_gain = cell.input_gain;
        }
    }
    if c.model.uses_reservoir() {
        c.train.learning_rate = cell.learning_rate;
    } else {
        c.hidden.train.learning_rate = cell.learning_rate;
    }
    c.train.threshold_learning_rate = cell.threshold_learning_rate;
    c.sparce_level = cell.sparce_level;
    c.validate()?;
    Ok(c)
}

/// Index of the best row: highest validation accuracy, ties to the lower
/// learning rate, then the lower input gain, then grid order.
pub fn select_best(rows: &[GridRow]) -> usize {
    let mut best = 0;
    for (i, r) in rows.iter().enumerate().skip(1) {
        let b = &rows[best];
        let better = r.validation_accuracy > b.validation_accuracy
            || (r.validation_accuracy == b.validation_accuracy
                && (r.cell.learning_rate < b.cell.learning_rate
                    || (r.cell.learning_rate == b.cell.learning_rate && r.cell.input_gain < b.cell.input_gain)));
        if better {
            best = i;
        }
    }
    best
}

fn grid_t<T: Scalar>(cfg: &ExperimentConfig, grid: &GridSpec) -> Result<GridOutcome> {
    let cells = expand(cfg, grid)?;
    let data = load_data::<T>(cfg)?;
    let val_len = data.validation_len(grid.validation_fraction);
    if val_len == 0 {
        return Err(HarnessError::EmptyValidation);
    }
    let val_frames: Vec<usize> = (0..val_len).collect();
    let seed = trial_seed(cfg, 0);
    let rows_all: Vec<usize> = (0..data.places()).collect();
    let shared: Option<FrontEnd<T>> = if cfg.model.uses_reservoir() {
        Some(train_front_end(&data, cfg, seed, &rows_all)?)
    } else {
        None
    };
    let rows = cells
        .into_par_iter()
        .map(|(cell, c)| {
            score_cell(&c, &data, shared.as_ref(), seed, &rows_all, &val_frames).map(|(v, t)| GridRow {
                cell,
                validation_accuracy: v,
                test_accuracy: t,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = select_best(&rows);
    let best_config = apply(cfg, &rows[best].cell)?;
    Ok(GridOutcome {
        rows,
        best,
        best_config,
    })
}

fn score_cell<T: Scalar>(
    c: &ExperimentConfig,
    data: &Prepared<T>,
    shared: Option<&FrontEnd<T>>,
    seed: u64,
    rows: &[usize],
    val_frames: &[usize],
) -> Result<(f64, f64)> {
    let own;
    let front = match shared {
        Some(f) => f,
        None => {
            own = train_front_end(data, c, seed, rows)?;
            &own
        }
    };
    let model = train_model(c.model, c, data, front, seed, rows)?;
    let mut probe = c.clone();
    probe.recall_at = vec![1];
    probe.top_k = 1;
    let val = evaluate(&model, &probe, data, front, val_frames)?;
    let test = evaluate(&model, &probe, data, front, &test_frames(c, data))?;
    let v = accuracy(&val.records, &data.ctx)?;
    Ok((sanitize(v), sanitize(test.accuracy)))
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v
    }
}

pub fn grid_search(cfg: &ExperimentConfig, grid: &GridSpec) -> Result<GridOutcome> {
    cfg.validate()?;
    let out = match cfg.precision {
        Precision::F64 => grid_t::<f64>(cfg, grid)?,
        Precision::F32 => grid_t::<f32>(cfg, grid)?,
    };
    if let Some(dir) = &cfg.output_dir {
        out.write(dir)?;
    }
    Ok(out)
}
