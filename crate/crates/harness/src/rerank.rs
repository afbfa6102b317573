//! Re-ranking of classifier candidates with external pairwise scores.
//!
//! Score files are tables of 20-byte little-endian records
//! `(query: u64, candidate: u64, score: f32)` sorted by query, then candidate.

use std::fs;
use std::path::Path;

use resvpr_core::{EvalReport, MatchContext, PredictionRecord};

use crate::error::{HarnessError, Result};

pub const PAIR_RECORD_BYTES: usize = 20;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairScores {
    keys: Vec<(u64, u64)>,
    scores: Vec<f32>,
}

impl PairScores {
    /// Builds a table from unsorted pairs; duplicates are rejected.
    pub fn from_pairs(mut pairs: Vec<(u64, u64, f32)>) -> Result<Self> {
        pairs.sort_by_key(|p| (p.0, p.1));
        if pairs.windows(2).any(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(HarnessError::Config("duplicate pair in score table".into()));
        }
        Ok(Self {
            keys: pairs.iter().map(|p| (p.0, p.1)).collect(),
            scores: pairs.iter().map(|p| p.2).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn get(&self, query: u64, candidate: u64) -> Option<f32> {
        self.keys
            .binary_search(&(query, candidate))
            .ok()
            .map(|i| self.scores[i])
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
        let fail = |reason: &str| {
            HarnessError::Core(resvpr_core::Error::Format {
                kind: "pair score table",
                path: path.to_path_buf(),
                reason: reason.to_string(),
            })
        };
        if bytes.len() % PAIR_RECORD_BYTES != 0 {
            return Err(fail("length is not a multiple of 20 bytes"));
        }
        let mut keys = Vec::with_capacity(bytes.len() / PAIR_RECORD_BYTES);
        let mut scores = Vec::with_capacity(keys.capacity());
        for rec in bytes.chunks_exact(PAIR_RECORD_BYTES) {
            let q = u64::from_le_bytes(rec[0..8].try_into().unwrap());
            let c = u64::from_le_bytes(rec[8..16].try_into().unwrap());
            let s = f32::from_le_bytes(rec[16..20].try_into().unwrap());
            if !s.is_finite() {
                return Err(fail("non-finite score"));
            }
            if let Some(&last) = keys.last() {
                if (q, c) <= last {
                    return Err(fail("records not strictly sorted by (query, candidate)"));
                }
            }
            keys.push((q, c));
            scores.push(s);
        }
        Ok(Self { keys, scores })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.len() * PAIR_RECORD_BYTES);
        for (&(q, c), &s) in self.keys.iter().zip(&self.scores) {
            bytes.extend_from_slice(&q.to_le_bytes());
            bytes.extend_from_slice(&c.to_le_bytes());
            bytes.extend_from_slice(&s.to_le_bytes());
        }
        fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
    }
}

/// Reorders each record's first `k` candidates by descending external score.
/// Ties keep the classifier order; candidates past `k` are untouched. The
/// record confidence becomes the classifier score of the new top candidate.
pub fn rerank_top_k(records: &[PredictionRecord], k: usize, table: &PairScores) -> Result<Vec<PredictionRecord>> {
    records
        .iter()
        .map(|r| {
            let k = k.min(r.ranking.len());
            let mut head: Vec<(usize, f64, f32)> = Vec::with_capacity(k);
            for i in 0..k {
                let cand = r.ranking[i];
                let ext = table
                    .get(r.query as u64, cand as u64)
                    .ok_or(HarnessError::MissingScore {
                        query: r.query as u64,
                        candidate: cand as u64,
                    })?;
                head.push((cand, r.scores[i], ext));
            }
            head.sort_by(|a, b| b.2.total_cmp(&a.2));
            let mut out = r.clone();
            for (i, (cand, score, _)) in head.into_iter().enumerate() {
                out.ranking[i] = cand;
                out.scores[i] = score;
            }
            if let Some(&s) = out.scores.first() {
                out.confidence = s;
            }
            Ok(out)
        })
        .collect()
}

/// Re-ranks a stored report and recomputes its metrics.
pub fn rerank_report(report: &EvalReport, k: usize, table: &PairScores, ctx: &MatchContext) -> Result<EvalReport> {
    let records = rerank_top_k(&report.records, k, table)?;
    let ns: Vec<usize> = report.recall_at.keys().copied().collect();
    Ok(EvalReport::evaluate(records, &ns, ctx)?)
}
