//! Tolerance-aware place recognition metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::readout::top_k;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToleranceUnits {
    #[default]
    Frames,
    Meters,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub value: f64,
    pub units: ToleranceUnits,
}

impl Tolerance {
    pub fn frames(value: f64) -> Self {
        Self {
            value,
            units: ToleranceUnits::Frames,
        }
    }

    pub fn meters(value: f64) -> Self {
        Self {
            value,
            units: ToleranceUnits::Meters,
        }
    }
}

/// Everything needed to decide whether a predicted place is a match.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchContext {
    pub tolerance: Tolerance,
    pub reference_positions: Option<Vec<Vec<f64>>>,
}

impl MatchContext {
    pub fn new(tolerance: Tolerance, reference_positions: Option<Vec<Vec<f64>>>) -> Self {
        Self {
            tolerance,
            reference_positions,
        }
    }

    pub fn frames(tol: f64) -> Self {
        Self::new(Tolerance::frames(tol), None)
    }

    pub fn is_match(&self, predicted: usize, record: &PredictionRecord) -> Result<bool> {
        match self.tolerance.units {
            ToleranceUnits::Frames => is_match_frames(predicted, record.truth, self.tolerance.value),
            ToleranceUnits::Meters => {
                let refs = self
                    .reference_positions
                    .as_ref()
                    .ok_or(Error::MissingPositions("reference"))?;
                let at = refs.get(predicted).ok_or(Error::MissingPositions("reference"))?;
                let truth = record.position.as_ref().ok_or(Error::MissingPositions("query"))?;
                is_match_meters(at, truth, self.tolerance.value)
            }
        }
    }
}

fn check_tolerance(tol: f64) -> Result<()> {
    if tol >= 0.0 && !tol.is_nan() {
        Ok(())
    } else {
        Err(Error::invalid("tolerance", "must be >= 0"))
    }
}

/// Inclusive index tolerance.
pub fn is_match_frames(predicted: usize, truth: usize, tol: f64) -> Result<bool> {
    check_tolerance(tol)?;
    Ok(predicted.abs_diff(truth) as f64 <= tol)
}

/// Inclusive Euclidean tolerance.
pub fn is_match_meters(predicted: &[f64], truth: &[f64], tol: f64) -> Result<bool> {
    check_tolerance(tol)?;
    crate::error::check_dim("position dimension", predicted.len(), truth.len())?;
    let d2: f64 = predicted.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(d2.sqrt() <= tol)
}

/// One query's classifier output, truncated to its top-ranked places.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub query: usize,
    /// Place indices by descending score.
    pub ranking: Vec<usize>,
    /// Scores aligned with `ranking`.
    pub scores: Vec<f64>,
    /// Threshold statistic for the precision-recall sweep.
    pub confidence: f64,
    /// Number of places the classifier scored.
    pub classes: usize,
    pub truth: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Vec<f64>>,
}

impl PredictionRecord {
    /// Keeps the `k` best places; confidence is the top-1 score.
    pub fn from_scores(query: usize, scores: ArrayView1<'_, f64>, k: usize, truth: usize) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Empty("score vector"));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("scores"));
        }
        let ranking = top_k(scores, k.max(1));
        let top: Vec<f64> = ranking.iter().map(|&i| scores[i]).collect();
        Ok(Self {
            query,
            confidence: top[0],
            scores: top,
            ranking,
            classes: scores.len(),
            truth,
            position: None,
        })
    }

    pub fn with_position(mut self, position: Option<Vec<f64>>) -> Self {
        self.position = position;
        self
    }

    pub fn top1(&self) -> usize {
        self.ranking[0]
    }
}

/// Fraction of records whose first `n` places contain a match.
pub fn recall_at_n(records: &[PredictionRecord], n: usize, ctx: &MatchContext) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Empty("prediction records"));
    }
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    let mut hits = 0usize;
    for r in records {
        if n > r.classes || n > r.ranking.len() {
            return Err(Error::RankOutOfRange {
                n,
                available: r.ranking.len(),
                classes: r.classes,
            });
        }
        for &p in &r.ranking[..n] {
            if ctx.is_match(p, r)? {
                hits += 1;
                break;
            }
        }
    }
    Ok(hits as f64 / records.len() as f64)
}

pub fn accuracy(records: &[PredictionRecord], ctx: &MatchContext) -> Result<f64> {
    recall_at_n(records, 1, ctx)
}

/// Area under the precision-recall curve swept over top-1 confidence.
///
/// Queries sharing a confidence enter the accepted set together. Recall is
/// relative to all queries. The curve starts at recall 0 with the precision
/// of the highest threshold, so it is anchored at 1 only when that first
/// group is entirely correct.
pub fn pr_auc(records: &[PredictionRecord], ctx: &MatchContext) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Empty("prediction records"));
    }
    let mut scored = Vec::with_capacity(records.len());
    for r in records {
        scored.push((r.confidence, ctx.is_match(r.top1(), r)?));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let total = records.len() as f64;
    let mut points: Vec<(f64, f64)> = Vec::new();
    let (mut accepted, mut correct) = (0usize, 0usize);
    let mut i = 0;
    while i < scored.len() {
        let level = scored[i].0;
        while i < scored.len() && scored[i].0 == level {
            accepted += 1;
            correct += scored[i].1 as usize;
            i += 1;
        }
        points.push((correct as f64 / total, correct as f64 / accepted as f64));
    }
    let mut prev = (0.0, points[0].1);
    let mut area = 0.0;
    for &(rec, prec) in &points {
        area += (rec - prev.0) * (prec + prev.1) / 2.0;
        prev = (rec, prec);
    }
    Ok(area.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub recall_at: BTreeMap<usize, f64>,
    pub pr_auc: f64,
    pub records: Vec<PredictionRecord>,
}

impl EvalReport {
    pub fn evaluate(records: Vec<PredictionRecord>, recall_ns: &[usize], ctx: &MatchContext) -> Result<Self> {
        let mut recall_at = BTreeMap::new();
        for &n in recall_ns {
            recall_at.insert(n, recall_at_n(&records, n, ctx)?);
        }
        Ok(Self {
            accuracy: accuracy(&records, ctx)?,
            pr_auc: pr_auc(&records, ctx)?,
            recall_at,
            records,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn csv_header(&self) -> String {
        let mut h = String::from("accuracy,pr_auc");
        for n in self.recall_at.keys() {
            let _ = write!(h, ",recall@{n}");
        }
        h
    }

    pub fn csv_row(&self) -> String {
        let mut row = format!("{},{}", self.accuracy, self.pr_auc);
        for v in self.recall_at.values() {
            let _ = write!(row, ",{v}");
        }
        row
    }
}
