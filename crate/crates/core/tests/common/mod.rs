//! Reference computations shared by the integration suites. Nothing here
//! calls into the library's numerical routines.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resvpr_core::CsrMatrix;

fn matvec(a: &CsrMatrix<f64>, x: &[f64], out: &mut [f64]) {
    for r in 0..a.rows() {
        let mut acc = 0.0;
        for k in a.row_ptr()[r]..a.row_ptr()[r + 1] {
            acc += a.values()[k] * x[a.col_idx()[k]];
        }
        out[r] = acc;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest root modulus of `l^2 - p l - q`.
fn quadratic_modulus(p: f64, q: f64) -> f64 {
    let disc = p * p + 4.0 * q;
    if disc >= 0.0 {
        let s = disc.sqrt();
        ((p + s) / 2.0).abs().max(((p - s) / 2.0).abs())
    } else {
        (-q).sqrt()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PowerEstimate {
    pub radius: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Spectral radius by power iteration on two consecutive iterates. The
/// third iterate is fit as `x2 = p x1 + q x0` by least squares; the roots
/// of `l^2 - p l - q` approximate the dominant eigenvalue or complex pair.
pub fn power_radius(a: &CsrMatrix<f64>, seed: u64, tol: f64, max_iter: usize) -> PowerEstimate {
    let n = a.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let nx = dot(&x, &x).sqrt();
    x.iter_mut().for_each(|v| *v /= nx);
    matvec(a, &x, &mut y);
    let mut history: Vec<f64> = Vec::new();
    let window = 25;
    for it in 0..max_iter {
        matvec(a, &y, &mut z);
        let (xx, xy, yy) = (dot(&x, &x), dot(&x, &y), dot(&y, &y));
        let (zx, zy) = (dot(&z, &x), dot(&z, &y));
        let det = xx * yy - xy * xy;
        let est = if det.abs() <= 1e-300 * xx * yy || det <= 1e-28 * xx * yy {
            // Iterates are parallel: a single real eigenvalue dominates.
            (dot(&z, &y) / yy).abs()
        } else {
            let p = (xx * zy - xy * zx) / det;
            let q = (yy * zx - xy * zy) / det;
            quadratic_modulus(p, q)
        };
        if yy == 0.0 {
            return PowerEstimate {
                radius: 0.0,
                iterations: it,
                converged: true,
            };
        }
        history.push(est);
        if history.len() > window {
            let old = history[history.len() - 1 - window];
            let spread = history[history.len() - window..]
                .iter()
                .fold(0.0f64, |m, v| m.max((v - old).abs()));
            if spread <= tol * est {
                return PowerEstimate {
                    radius: est,
                    iterations: it + 1,
                    converged: true,
                };
            }
        }
        let ny = yy.sqrt();
        for i in 0..n {
            x[i] = y[i] / ny;
            y[i] = z[i] / ny;
        }
    }
    PowerEstimate {
        radius: *history.last().unwrap_or(&f64::NAN),
        iterations: max_iter,
        converged: false,
    }
}

/// Uniformly distributed random unit-ish vector.
pub fn random_vec(n: usize, seed: u64, scale: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect()
}

/// Precision-recall area by brute force: one operating point per distinct
/// confidence value, each recomputed from scratch over all queries.
pub fn brute_pr_auc(confidence: &[f64], correct: &[bool]) -> f64 {
    let mut levels: Vec<f64> = confidence.to_vec();
    levels.sort_by(|a, b| b.partial_cmp(a).unwrap());
    levels.dedup();
    let total = confidence.len() as f64;
    let mut curve = Vec::new();
    for &t in &levels {
        let kept: Vec<bool> = confidence
            .iter()
            .zip(correct)
            .filter(|(c, _)| **c >= t)
            .map(|(_, &k)| k)
            .collect();
        let tp = kept.iter().filter(|&&k| k).count() as f64;
        curve.push((tp / total, tp / kept.len() as f64));
    }
    let mut area = 0.0;
    let (mut r0, mut p0) = (0.0, curve[0].1);
    for (r, p) in curve {
        area += 0.5 * (r - r0) * (p + p0);
        r0 = r;
        p0 = p;
    }
    area
}

/// Fraction of entries with `|x| <= threshold`, counted per column.
pub fn zero_fraction(values: &[Vec<f64>], thresholds: &[f64]) -> f64 {
    let mut zeros = 0usize;
    let mut total = 0usize;
    for row in values {
        for (x, t) in row.iter().zip(thresholds) {
            total += 1;
            if x.abs() <= *t {
                zeros += 1;
            }
        }
    }
    zeros as f64 / total as f64
}
