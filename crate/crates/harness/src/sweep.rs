//! Recall as a function of frames processed since a random start.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::s;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use resvpr_core::Scalar;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Precision, SweepConfig};
use crate::error::{HarnessError, Result};
use crate::experiment::{
    derive_seed, load_data, train_front_end, train_model, trial_seed, write_text, FrontEnd, Prepared, TrainedModel,
};

const STREAM_STARTS: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub n: usize,
    /// Mean recall@n at each offset.
    pub mean: Vec<f64>,
    /// Population variance across starts at each offset.
    pub variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub starts: Vec<usize>,
    pub horizon: usize,
    /// Starts contributing to each offset.
    pub count: Vec<usize>,
    pub curves: Vec<SweepCurve>,
    /// `hits[start][offset]` for the first requested `n`.
    pub hits: Vec<Vec<bool>>,
}

impl SweepOutcome {
    pub fn curve(&self, n: usize) -> Option<&SweepCurve> {
        self.curves.iter().find(|c| c.n == n)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("offset,count");
        for c in &self.curves {
            let _ = write!(out, ",recall@{0}_mean,recall@{0}_variance", c.n);
        }
        out.push('\n');
        for o in 0..self.horizon {
            let _ = write!(out, "{o},{}", self.count[o]);
            for c in &self.curves {
                let _ = write!(out, ",{},{}", c.mean[o], c.variance[o]);
            }
            out.push('\n');
        }
        out
    }
}

/// Centered moving average over complete windows.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    if window == 0 || values.len() < window {
        return Vec::new();
    }
    values
        .windows(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect()
}

/// Distinct start frames. When every start fits a full horizon the starts
/// are drawn from `[0, T - horizon]`, otherwise from `[0, T)`.
pub fn choose_starts(frames: usize, count: usize, horizon: usize, seed: u64) -> Result<Vec<usize>> {
    if count > frames {
        return Err(HarnessError::TooManyStarts { starts: count, frames });
    }
    let full = frames + 1 - horizon.min(frames);
    let range = if count <= full { full } else { frames };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = rand::seq::index::sample(&mut rng, range, count).into_vec();
    starts.sort_unstable();
    Ok(starts)
}

/// Streams the query from each start with a fresh zero state.
pub fn sweep_from_starts<T: Scalar>(
    model: &TrainedModel<T>,
    data: &Prepared<T>,
    front: &FrontEnd<T>,
    starts: &[usize],
    horizon: usize,
    ns: &[usize],
) -> Result<SweepOutcome> {
    let frames = data.query_len();
    if horizon == 0 || horizon > frames {
        return Err(HarnessError::Config(format!("sweep horizon must lie in [1, {frames}]")));
    }
    if ns.is_empty() || ns.iter().any(|&n| n == 0 || n > data.places()) {
        return Err(HarnessError::Config(
            "sweep recall list must be nonempty with 1 <= n <= places".into(),
        ));
    }
    if let Some(&bad) = starts.iter().find(|&&s| s >= frames) {
        return Err(HarnessError::Config(format!("start {bad} outside the query")));
    }
    let depth = ns.iter().copied().max().unwrap();
    let mut sums = vec![vec![0.0; horizon]; ns.len()];
    let mut count = vec![0usize; horizon];
    let mut hits_first = Vec::with_capacity(starts.len());
    let mut per_start: Vec<Vec<Vec<bool>>> = Vec::with_capacity(starts.len());
    for &start in starts {
        let end = (start + horizon).min(frames);
        let reps = model.representations(front.query.slice(s![start..end, ..]))?;
        let scores = model.scores(reps.view())?;
        let mut hits = vec![Vec::with_capacity(end - start); ns.len()];
        for o in 0..end - start {
            let rec = data.record(start + o, scores.row(o), depth)?;
            count[o] += 1;
            for (k, &n) in ns.iter().enumerate() {
                let mut hit = false;
                for &p in &rec.ranking[..n] {
                    if data.ctx.is_match(p, &rec)? {
                        hit = true;
                        break;
                    }
                }
                sums[k][o] += hit as u8 as f64;
                hits[k].push(hit);
            }
        }
        hits_first.push(hits[0].clone());
        per_start.push(hits);
    }
    let curves = ns
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let mean: Vec<f64> = (0..horizon)
                .map(|o| {
                    if count[o] == 0 {
                        f64::NAN
                    } else {
                        sums[k][o] / count[o] as f64
                    }
                })
                .collect();
            let mut var = vec![0.0; horizon];
            for hits in &per_start {
                for (o, &h) in hits[k].iter().enumerate() {
                    let d = h as u8 as f64 - mean[o];
                    var[o] += d * d;
                }
            }
            for o in 0..horizon {
                var[o] = if count[o] == 0 {
                    f64::NAN
                } else {
                    var[o] / count[o] as f64
                };
            }
            SweepCurve { n, mean, variance: var }
        })
        .collect();
    Ok(SweepOutcome {
        starts: starts.to_vec(),
        horizon,
        count,
        curves,
        hits: hits_first,
    })
}

fn sweep_t<T: Scalar>(cfg: &ExperimentConfig, sweep: &SweepConfig) -> Result<SweepOutcome> {
    let data = load_data::<T>(cfg)?;
    let frames = data.query_len();
    let horizon = sweep.horizon.unwrap_or(frames.min(100));
    let seed = trial_seed(cfg, 0);
    let starts = choose_starts(frames, sweep.starts, horizon, derive_seed(seed, STREAM_STARTS))?;
    let rows: Vec<usize> = (0..data.places()).collect();
    let front = train_front_end(&data, cfg, seed, &rows)?;
    let model = train_model(cfg.model, cfg, &data, &front, seed, &rows)?;
    sweep_from_starts(&model, &data, &front, &starts, horizon, &sweep.recall_at)
}

pub fn start_point_sweep(cfg: &ExperimentConfig, sweep: &SweepConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    let out = match cfg.precision {
        Precision::F64 => sweep_t::<f64>(cfg, sweep)?,
        Precision::F32 => sweep_t::<f32>(cfg, sweep)?,
    };
    if let Some(dir) = &cfg.output_dir {
        write_outcome(&out, dir)?;
    }
    Ok(out)
}

fn write_outcome(out: &SweepOutcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    write_text(&dir.join("sweep.csv"), &out.csv())?;
    let json = serde_json::to_string_pretty(out).expect("sweep serializes");
    write_text(&dir.join("sweep.json"), &json)
}
