use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use resvpr_core::{DatasetManifest, MatchContext, SynthConfig};
use resvpr_harness::config::{merge, preset, read_json, ExperimentConfig, GridSpec, ModelKind};
use resvpr_harness::error::{HarnessError, Result};
use resvpr_harness::rerank::{rerank_report, PairScores};
use resvpr_harness::{grid_search, holdout_generalization, run_experiment, start_point_sweep};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "resvpr",
    version,
    about = "Reservoir computing experiments for visual place recognition"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate over all trials.
    Run(Common),
    /// Grid search on the leading validation slice of the query.
    Grid(Common),
    /// Recall against frames processed from random start points.
    SweepStart(Common),
    /// Evaluate on places withheld from training.
    Holdout(Common),
    /// Re-rank a stored report with an external pair-score table.
    Rerank(Common),
    /// Write a synthetic dataset (descriptors and manifest).
    Synth(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    #[arg(long, value_name = "N")]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// NV, NV-ESN, NV-SPARCE-ESN, H-NV-ESN or H-NV-SPARCE-ESN.
    #[arg(long, value_name = "KIND")]
    model: Option<String>,
    /// Shipped configuration used as the base of `--config`.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Drop the validation slice from test scoring.
    #[arg(long)]
    exclude_validation_from_test: bool,
}

impl Common {
    fn raw(&self) -> Result<Value> {
        let mut value = json!({});
        if let Some(name) = &self.preset {
            merge(&mut value, preset(name)?);
        }
        if let Some(path) = &self.config {
            let mut file = read_json(path)?;
            resolve_relative(&mut file, path.parent().unwrap_or(Path::new("")));
            merge(&mut value, file);
        }
        Ok(value)
    }

    fn experiment(&self) -> Result<ExperimentConfig> {
        let mut raw = self.raw()?;
        if let Some(model) = &self.model {
            raw["model"] = json!(model.parse::<ModelKind>()?.name());
        }
        let mut cfg = ExperimentConfig::from_value(raw)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(trials) = self.trials {
            cfg.trials = trials;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = Some(out.clone());
        }
        if self.exclude_validation_from_test {
            cfg.exclude_validation_from_test = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Makes relative paths inside a config file relative to that file.
fn resolve_relative(value: &mut Value, base: &Path) {
    let fix = |v: &mut Value| {
        if let Value::String(s) = v {
            let p = Path::new(s.as_str());
            if p.is_relative() {
                *s = base.join(p).to_string_lossy().into_owned();
            }
        }
    };
    if let Some(m) = value.get_mut("manifest") {
        fix(m);
    }
    if let Some(r) = value.get_mut("rerank") {
        for key in ["scores", "report"] {
            if let Some(v) = r.get_mut(key) {
                fix(v);
            }
        }
    }
}

fn to_json<S: serde::Serialize>(v: &S) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn match_context(cfg: &ExperimentConfig) -> Result<MatchContext> {
    let mut ctx = if let Some(path) = &cfg.manifest {
        let m = DatasetManifest::load(path)?;
        MatchContext::new(m.tolerance(), m.positions.map(|p| p.reference))
    } else if let Some(s) = &cfg.synth {
        s.validate()?;
        MatchContext::frames(0.0)
    } else {
        return Err(HarnessError::Config("no data source".into()));
    };
    if let Some(t) = cfg.tolerance {
        ctx.tolerance.value = t;
    }
    Ok(ctx)
}

fn execute(cli: Cli) -> Result<Value> {
    match cli.command {
        Command::Run(c) => {
            let cfg = c.experiment()?;
            let out = run_experiment(&cfg)?;
            Ok(json!({"aggregates": to_json(&out.aggregates), "failures": to_json(&out.failures)}))
        }
        Command::Grid(c) => {
            let cfg = c.experiment()?;
            let grid = cfg.grid.clone().unwrap_or_else(|| GridSpec {
                validation_fraction: cfg.validation_fraction,
                ..GridSpec::default()
            });
            let out = grid_search(&cfg, &grid)?;
            Ok(json!({"cells": out.rows.len(), "best": to_json(out.best_row())}))
        }
        Command::SweepStart(c) => {
            let cfg = c.experiment()?;
            let sweep = cfg.sweep.clone().unwrap_or_default();
            let out = start_point_sweep(&cfg, &sweep)?;
            let curves: Vec<Value> = out
                .curves
                .iter()
                .map(|k| json!({"n": k.n, "first": k.mean.first(), "last": k.mean.last()}))
                .collect();
            Ok(json!({"starts": out.starts.len(), "horizon": out.horizon, "curves": curves}))
        }
        Command::Holdout(c) => {
            let cfg = c.experiment()?;
            let h = cfg.holdout.clone().unwrap_or_default();
            let out = holdout_generalization(&cfg, &h)?;
            Ok(json!({"mode": to_json(&out.mode), "fraction": out.fraction, "accuracy": to_json(&out.accuracy)}))
        }
        Command::Rerank(c) => {
            let cfg = c.experiment()?;
            let r = cfg
                .rerank
                .clone()
                .ok_or_else(|| HarnessError::Config("`rerank` section required".into()))?;
            let report = resvpr_core::EvalReport::read_json(&r.report)?;
            let table = PairScores::read(&r.scores)?;
            let out = rerank_report(&report, r.k, &table, &match_context(&cfg)?)?;
            let dest = match &cfg.output_dir {
                Some(d) => {
                    std::fs::create_dir_all(d).map_err(|e| HarnessError::io(d, e))?;
                    d.join("reranked_report.json")
                }
                None => r.report.with_extension("reranked.json"),
            };
            out.write_json(&dest)?;
            Ok(json!({"accuracy": out.accuracy, "pr_auc": out.pr_auc, "report": dest}))
        }
        Command::Synth(c) => {
            let raw = c.raw()?;
            let mut synth: SynthConfig = match raw.get("synth") {
                Some(v) => serde_json::from_value(v.clone()).map_err(|e| HarnessError::Config(e.to_string()))?,
                None => SynthConfig::new(200, 0.5, 0.3, 0),
            };
            if let Some(seed) = c.seed {
                synth.seed = seed;
            }
            let dir = c
                .out
                .clone()
                .or_else(|| raw.get("output_dir").and_then(Value::as_str).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("synth"));
            let ds = resvpr_core::descriptor::synth_dataset::<f32>(&synth)?;
            let manifest = ds.write(&dir)?;
            Ok(json!({"manifest": manifest, "places": synth.places}))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("serializable"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            let v = json!({"error": {"category": e.category(), "message": e.to_string()}});
            eprintln!("{v}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
