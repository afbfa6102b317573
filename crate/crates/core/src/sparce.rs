//! Sparse thresholding of reservoir states.
//!
//! `x'_i = sign(x_i) relu(|x_i| - theta_i)` with
//! `theta_i = P_i + theta_bar_i`, where `P_i` is a fixed percentile of
//! `|x_i|` over a calibration batch and `theta_bar` is learned.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::error::{check_dim, Error, Result};
use crate::scalar::{signum0, Scalar};

/// Percentile of a sample with linear interpolation between order
/// statistics: position `q (m - 1)` in the sorted sample, `q = level / 100`.
pub fn percentile_linear(values: &mut [f64], level: f64) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(f64::total_cmp);
    let pos = level / 100.0 * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    values[lo] + (values[hi] - values[lo]) * frac
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparceLayer<T> {
    level: f64,
    percentiles: Array1<T>,
    /// Learnable offsets.
    pub offsets: Array1<T>,
}

impl<T: Scalar> SparceLayer<T> {
    /// Calibrates `P` on the rows of `states` (one state per row) at the given
    /// percentile level in [0, 100). Offsets start at zero.
    pub fn calibrate(states: ArrayView2<'_, T>, level: f64) -> Result<Self> {
        if !(0.0..100.0).contains(&level) {
            return Err(Error::invalid("percentile level", format!("{level} not in [0, 100)")));
        }
        if states.nrows() == 0 {
            return Err(Error::Empty("calibration states"));
        }
        let mut column = vec![0.0; states.nrows()];
        let percentiles = states
            .axis_iter(Axis(1))
            .map(|col| {
                for (dst, v) in column.iter_mut().zip(col.iter()) {
                    *dst = v.f64().abs();
                }
                T::of(percentile_linear(&mut column, level))
            })
            .collect::<Array1<T>>();
        let n = percentiles.len();
        Ok(Self {
            level,
            percentiles,
            offsets: Array1::zeros(n),
        })
    }

    pub fn from_parts(level: f64, percentiles: Array1<T>, offsets: Array1<T>) -> Result<Self> {
        check_dim("sparce offsets", percentiles.len(), offsets.len())?;
        if percentiles.iter().any(|p| !(p.f64() >= 0.0)) {
            return Err(Error::invalid("percentiles", "must be >= 0"));
        }
        Ok(Self {
            level,
            percentiles,
            offsets,
        })
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.percentiles.len()
    }

    pub fn percentiles(&self) -> &Array1<T> {
        &self.percentiles
    }

    /// Effective thresholds `P + theta_bar`.
    pub fn thresholds(&self) -> Array1<T> {
        &self.percentiles + &self.offsets
    }

    pub fn apply(&self, x: ArrayView1<'_, T>) -> Result<Array1<T>> {
        check_dim("sparce input", self.dim(), x.len())?;
        let mut out = Array1::zeros(x.len());
        Zip::from(&mut out)
            .and(&x)
            .and(&self.percentiles)
            .and(&self.offsets)
            .for_each(|o, &xi, &p, &off| *o = shrink(xi, p + off));
        Ok(out)
    }

    /// Row-wise [`apply`](Self::apply).
    pub fn apply_batch(&self, xs: ArrayView2<'_, T>) -> Result<Array2<T>> {
        check_dim("sparce input", self.dim(), xs.ncols())?;
        let theta = self.thresholds();
        let mut out = xs.to_owned();
        for mut row in out.axis_iter_mut(Axis(0)) {
            Zip::from(&mut row).and(&theta).for_each(|v, &t| *v = shrink(*v, t));
        }
        Ok(out)
    }

    /// Gradient of a scalar loss w.r.t. the offsets given the upstream
    /// gradient w.r.t. the thresholded output.
    pub fn threshold_gradient(&self, x: ArrayView1<'_, T>, upstream: ArrayView1<'_, T>) -> Result<Array1<T>> {
        check_dim("sparce input", self.dim(), x.len())?;
        check_dim("sparce upstream", self.dim(), upstream.len())?;
        let mut out = Array1::zeros(x.len());
        Zip::from(&mut out)
            .and(&x)
            .and(&upstream)
            .and(&self.percentiles)
            .and(&self.offsets)
            .for_each(|o, &xi, &g, &p, &off| *o = g * shrink_derivative(xi, p + off));
        Ok(out)
    }

    /// Sum over rows of [`threshold_gradient`](Self::threshold_gradient).
    pub fn threshold_gradient_batch(&self, xs: ArrayView2<'_, T>, upstream: ArrayView2<'_, T>) -> Result<Array1<T>> {
        check_dim("sparce input", self.dim(), xs.ncols())?;
        check_dim("sparce upstream rows", xs.nrows(), upstream.nrows())?;
        check_dim("sparce upstream", self.dim(), upstream.ncols())?;
        let theta = self.thresholds();
        let mut grad = Array1::zeros(self.dim());
        for (row, up) in xs.axis_iter(Axis(0)).zip(upstream.axis_iter(Axis(0))) {
            Zip::from(&mut grad)
                .and(&row)
                .and(&up)
                .and(&theta)
                .for_each(|g, &xi, &u, &t| *g += u * shrink_derivative(xi, t));
        }
        Ok(grad)
    }

    /// Fraction of exact zeros in the thresholded batch.
    pub fn zero_fraction(&self, xs: ArrayView2<'_, T>) -> Result<f64> {
        let out = self.apply_batch(xs)?;
        let zeros = out.iter().filter(|v| **v == T::zero()).count();
        Ok(zeros as f64 / out.len().max(1) as f64)
    }
}

#[inline]
fn shrink<T: Scalar>(x: T, theta: T) -> T {
    let mag = x.abs() - theta;
    if mag > T::zero() {
        signum0(x) * mag
    } else {
        T::zero()
    }
}

/// `d shrink / d theta`, zero at the kink and at `x = 0`.
#[inline]
fn shrink_derivative<T: Scalar>(x: T, theta: T) -> T {
    if x.abs() > theta {
        -signum0(x)
    } else {
        T::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn percentile_interpolates() {
        let mut v = vec![0.4, 0.1, 0.3, 0.2];
        assert!((percentile_linear(&mut v, 50.0) - 0.25).abs() < 1e-15);
        assert_eq!(percentile_linear(&mut v, 0.0), 0.1);
        let mut one = vec![0.7];
        assert_eq!(percentile_linear(&mut one, 73.0), 0.7);
    }

    #[test]
    fn calibrate_zeroth_percentile_is_min() {
        let states = array![[0.5, -0.2], [0.0, 0.9], [-0.3, -0.4]];
        let layer = SparceLayer::<f64>::calibrate(states.view(), 0.0).unwrap();
        assert_eq!(layer.percentiles(), &array![0.0, 0.2]);
        assert_eq!(layer.offsets, array![0.0, 0.0]);
    }

    #[test]
    fn calibrate_median_of_magnitudes() {
        let states = array![[0.1], [-0.2], [0.3], [-0.4]];
        let layer = SparceLayer::<f64>::calibrate(states.view(), 50.0).unwrap();
        assert!((layer.percentiles()[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn calibrate_errors() {
        let states = array![[0.1]];
        assert!(SparceLayer::<f64>::calibrate(states.view(), 100.0).is_err());
        assert!(SparceLayer::<f64>::calibrate(states.view(), -1.0).is_err());
        assert!(SparceLayer::<f64>::calibrate(Array2::<f64>::zeros((0, 3)).view(), 10.0).is_err());
    }

    #[test]
    fn apply_direct_evaluation() {
        let layer = SparceLayer::<f64>::from_parts(0.0, array![0.2, 0.2], array![0.0, 0.0]).unwrap();
        let out = layer.apply(array![-0.5, 0.1].view()).unwrap();
        assert!((out[0] + 0.3).abs() < 1e-15);
        assert_eq!(out[1], 0.0);
    }

    #[test]
    fn zero_thresholds_are_identity() {
        let layer = SparceLayer::from_parts(0.0, Array1::zeros(4), Array1::zeros(4)).unwrap();
        let x = array![-0.7, 0.0, 1e-300, 0.25];
        assert_eq!(layer.apply(x.view()).unwrap(), x);
    }

    #[test]
    fn gradient_cases() {
        let layer = SparceLayer::from_parts(0.0, array![0.2, 0.2, 0.2], array![0.0, 0.0, 0.0]).unwrap();
        let g = layer
            .threshold_gradient(array![0.5, -0.5, 0.1].view(), array![1.0, 1.0, 1.0].view())
            .unwrap();
        assert_eq!(g, array![-1.0, 1.0, 0.0]);
        let dead = layer
            .threshold_gradient(array![0.05, -0.1, 0.0].view(), array![3.0, -2.0, 1.0].view())
            .unwrap();
        assert_eq!(dead, array![0.0, 0.0, 0.0]);
        assert!(layer
            .threshold_gradient(array![0.1].view(), array![1.0].view())
            .is_err());
    }

    proptest! {
        #[test]
        fn shrinkage_keeps_sign_and_reduces_magnitude(
            xs in proptest::collection::vec(-1.0f64..1.0, 1..40),
            seed_theta in proptest::collection::vec(0.0f64..0.8, 40),
        ) {
            let n = xs.len();
            let layer = SparceLayer::from_parts(
                0.0,
                Array1::from(seed_theta[..n].to_vec()),
                Array1::zeros(n),
            ).unwrap();
            let x = Array1::from(xs);
            let out = layer.apply(x.view()).unwrap();
            for (o, v) in out.iter().zip(x.iter()) {
                prop_assert!(o.abs() <= v.abs());
                prop_assert!(*o == 0.0 || o.signum() == v.signum());
            }
        }

        #[test]
        fn higher_level_is_never_less_sparse(
            data in proptest::collection::vec(-1.0f64..1.0, 30..120),
            a in 0.0f64..99.0,
            b in 0.0f64..99.0,
        ) {
            let rows = data.len() / 3;
            let states = Array2::from_shape_vec((rows, 3), data[..rows * 3].to_vec()).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let zl = SparceLayer::calibrate(states.view(), lo).unwrap().zero_fraction(states.view()).unwrap();
            let zh = SparceLayer::calibrate(states.view(), hi).unwrap().zero_fraction(states.view()).unwrap();
            prop_assert!(zh >= zl);
        }
    }
}
