//! Spectral radius estimation for large sparse non-symmetric matrices.
//!
//! Explicitly restarted Arnoldi: each cycle builds a Krylov basis, takes the
//! Ritz value of largest modulus from the small Hessenberg matrix and
//! restarts from the real span of its Ritz vector. A complex-conjugate pair
//! is kept in a single real restart vector as `Re(v) + Im(v)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;

const KRYLOV_DIMS: [usize; 3] = [40, 80, 160];
const MAX_RESTARTS: usize = 300;
const REL_TOLERANCE: f64 = 1e-11;

/// Result of a spectral radius estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimate {
    pub radius: f64,
    /// Ritz residual `|h_{k+1,k}| |z_k| / |lambda|` of the last cycle.
    pub relative_residual: f64,
    pub converged: bool,
    pub matvecs: usize,
}

/// Returns `true` when the sparsity pattern has no directed cycle, in which
/// case the matrix is nilpotent and its spectral radius is exactly zero.
pub fn pattern_is_acyclic<T: Scalar>(m: &CsrMatrix<T>) -> bool {
    let n = m.rows();
    let mut indegree = vec![0usize; n];
    for (k, &c) in m.col_idx().iter().enumerate() {
        if m.values()[k] != T::zero() {
            indegree[c] += 1;
        }
    }
    let mut stack: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut removed = 0;
    while let Some(r) = stack.pop() {
        removed += 1;
        for k in m.row_ptr()[r]..m.row_ptr()[r + 1] {
            if m.values()[k] == T::zero() {
                continue;
            }
            let c = m.col_idx()[k];
            indegree[c] -= 1;
            if indegree[c] == 0 {
                stack.push(c);
            }
        }
    }
    removed == n
}

/// Spectral radius of a square CSR matrix.
pub fn spectral_radius<T: Scalar>(m: &CsrMatrix<T>, seed: u64) -> SpectralEstimate {
    assert_eq!(m.rows(), m.cols(), "spectral radius needs a square matrix");
    if m.rows() == 0 || pattern_is_acyclic(m) {
        return SpectralEstimate {
            radius: 0.0,
            relative_residual: 0.0,
            converged: true,
            matvecs: 0,
        };
    }
    spectral_radius_of(m.rows(), seed, |x, y| m.apply_f64(x, y))
}

/// Spectral radius of an arbitrary linear operator on `R^n`.
pub fn spectral_radius_of<F>(n: usize, seed: u64, apply: F) -> SpectralEstimate
where
    F: Fn(&[f64], &mut [f64]),
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a4d1_0000_0001);
    let start: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut total = 0;
    let mut last = None;
    for &dim in &KRYLOV_DIMS {
        let est = restarted_arnoldi(&apply, n, dim.min(n), start.clone());
        total += est.matvecs;
        if est.converged {
            return SpectralEstimate { matvecs: total, ..est };
        }
        last = Some(est);
    }
    let est = last.expect("at least one Krylov dimension");
    SpectralEstimate { matvecs: total, ..est }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn restarted_arnoldi<F>(apply: &F, n: usize, dim: usize, mut start: Vec<f64>) -> SpectralEstimate
where
    F: Fn(&[f64], &mut [f64]),
{
    let mut matvecs = 0;
    let mut best = SpectralEstimate {
        radius: 0.0,
        relative_residual: f64::INFINITY,
        converged: false,
        matvecs: 0,
    };
    for _ in 0..MAX_RESTARTS {
        let s = norm(&start);
        if s == 0.0 || !s.is_finite() {
            break;
        }
        let mut basis: Vec<Vec<f64>> = vec![start.iter().map(|x| x / s).collect()];
        let mut h = DMatrix::<f64>::zeros(dim + 1, dim);
        let mut size = dim;
        let mut w = vec![0.0; n];
        for j in 0..dim {
            apply(&basis[j], &mut w);
            matvecs += 1;
            // classical Gram-Schmidt, two passes
            for _ in 0..2 {
                for (i, b) in basis.iter().enumerate() {
                    let d = dot(b, &w);
                    h[(i, j)] += d;
                    for (wv, bv) in w.iter_mut().zip(b) {
                        *wv -= d * bv;
                    }
                }
            }
            let next = norm(&w);
            h[(j + 1, j)] = next;
            let scale = h.column(j).iter().map(|v| v.abs()).fold(0.0, f64::max);
            if next <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
                size = j + 1;
                h[(j + 1, j)] = 0.0;
                break;
            }
            basis.push(w.iter().map(|x| x / next).collect());
        }

        let hm = h.view((0, 0), (size, size)).into_owned();
        let lambda = hm
            .complex_eigenvalues()
            .iter()
            .copied()
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .unwrap_or_default();
        let radius = lambda.norm();
        if radius == 0.0 {
            return SpectralEstimate {
                radius: 0.0,
                relative_residual: 0.0,
                converged: true,
                matvecs,
            };
        }
        let z = ritz_vector(&hm, lambda);
        let residual = h[(size, size - 1)].abs() * z[size - 1].norm() / radius;
        best = SpectralEstimate {
            radius,
            relative_residual: residual,
            converged: residual < REL_TOLERANCE,
            matvecs,
        };
        if best.converged {
            return best;
        }
        let mut next = vec![0.0; n];
        for (zi, b) in z.iter().zip(&basis) {
            let c = zi.re + zi.im;
            for (o, bv) in next.iter_mut().zip(b) {
                *o += c * bv;
            }
        }
        start = next;
    }
    best
}

/// Eigenvector of a small dense matrix for a known eigenvalue, by inverse
/// iteration with a slightly perturbed shift. Normalized to unit 2-norm.
fn ritz_vector(h: &DMatrix<f64>, lambda: Complex64) -> DVector<Complex64> {
    let k = h.nrows();
    let mut shift = lambda * Complex64::new(1.0 + 1e-12, 0.0) + Complex64::new(1e-300, 0.0);
    let mut z = DVector::from_element(k, Complex64::new(1.0 / (k as f64).sqrt(), 0.0));
    for attempt in 0..4 {
        let shifted = DMatrix::from_fn(k, k, |i, j| {
            let v = Complex64::new(h[(i, j)], 0.0);
            if i == j {
                v - shift
            } else {
                v
            }
        });
        let lu = shifted.lu();
        let mut ok = true;
        for _ in 0..3 {
            match lu.solve(&z) {
                Some(s) if s.iter().all(|c| c.re.is_finite() && c.im.is_finite()) => {
                    let nn = s.norm();
                    if nn == 0.0 {
                        ok = false;
                        break;
                    }
                    z = s.unscale(nn);
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return z;
        }
        shift = lambda * Complex64::new(1.0 + 1e-9 * 10f64.powi(attempt), 0.0);
        z = DVector::from_element(k, Complex64::new(1.0 / (k as f64).sqrt(), 0.0));
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn csr(d: Array2<f64>) -> CsrMatrix<f64> {
        CsrMatrix::from_dense(&d)
    }

    #[test]
    fn symmetric_two_by_two() {
        let est = spectral_radius(&csr(array![[0.0, 0.5], [0.5, 0.0]]), 1);
        assert!((est.radius - 0.5).abs() < 1e-14, "{est:?}");
        assert!(est.converged);
    }

    #[test]
    fn rotation_has_complex_pair() {
        // eigenvalues 0.3 +- 0.4i, modulus 0.5
        let est = spectral_radius(&csr(array![[0.3, -0.4, 0.0], [0.4, 0.3, 0.0], [0.0, 0.0, 0.1]]), 3);
        assert!((est.radius - 0.5).abs() < 1e-12, "{est:?}");
    }

    #[test]
    fn nilpotent_pattern_is_zero() {
        let m = csr(array![[0.0, 1.0, 2.0], [0.0, 0.0, 3.0], [0.0, 0.0, 0.0]]);
        assert!(pattern_is_acyclic(&m));
        assert_eq!(spectral_radius(&m, 0).radius, 0.0);
        let cyclic = csr(array![[0.0, 1.0], [1.0, 0.0]]);
        assert!(!pattern_is_acyclic(&cyclic));
    }

    #[test]
    fn diagonal_matrix() {
        let m = csr(Array2::from_diag(&array![0.2, -0.9, 0.5, 0.1]));
        assert!((spectral_radius(&m, 9).radius - 0.9).abs() < 1e-13);
    }
}
