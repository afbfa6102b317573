//! Leaky-integrator echo state reservoirs.
//!
//! The state evolves as
//! `x(t+1) = (1 - alpha) x(t) + alpha f(gamma W_in s(t) + rho W x(t))`
//! where `W` is a fixed sparse matrix normalized to unit spectral radius and
//! `W_in` a fixed dense Gaussian matrix.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use ndarray::{linalg::general_mat_vec_mul, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;
use crate::sparse::CsrMatrix;
use crate::spectral::spectral_radius;

/// Number of extra draws attempted when the recurrent matrix is nilpotent.
pub const MAX_RESAMPLES: u32 = 8;

/// Neuron nonlinearity `f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }

    pub(crate) fn code(self) -> u32 {
        match self {
            Activation::Tanh => 0,
            Activation::Identity => 1,
        }
    }

    pub(crate) fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Identity),
            _ => None,
        }
    }
}

fn default_density() -> f64 {
    0.1
}

/// Hyper-parameters of a single reservoir.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirSpec {
    /// Neuron count `N`.
    pub size: usize,
    /// Leak rate `alpha` in (0, 1]. Zero is accepted and freezes the state.
    pub leakage: f64,
    /// Input gain `gamma`.
    pub input_gain: f64,
    /// Effective spectral radius `rho` applied to the normalized `W`.
    pub spectral_scale: f64,
    /// Fraction of nonzero entries in `W`.
    #[serde(default = "default_density")]
    pub density: f64,
    /// Input dimension `D`.
    pub input_dim: usize,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub seed: u64,
}

impl ReservoirSpec {
    pub fn new(size: usize, input_dim: usize) -> Self {
        Self {
            size,
            leakage: 1.0,
            input_gain: 1.0,
            spectral_scale: 0.99,
            density: default_density(),
            input_dim,
            activation: Activation::Tanh,
            seed: 0,
        }
    }

    pub fn with_leakage(mut self, leakage: f64) -> Self {
        self.leakage = leakage;
        self
    }

    pub fn with_input_gain(mut self, gain: f64) -> Self {
        self.input_gain = gain;
        self
    }

    pub fn with_spectral_scale(mut self, rho: f64) -> Self {
        self.spectral_scale = rho;
        self
    }

    pub fn with_density(mut self, density: f64) -> Self {
        self.density = density;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Checks field ranges. The leak rate may be 0 so that a frozen layer can
    /// be expressed; construction-time effective radius must be in (0, 1].
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::invalid("size", "must be at least 1"));
        }
        if self.input_dim == 0 {
            return Err(Error::invalid("input_dim", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.leakage) {
            return Err(Error::invalid("leakage", format!("{} not in [0, 1]", self.leakage)));
        }
        if !(self.spectral_scale >= 0.0 && self.spectral_scale <= 1.0) {
            return Err(Error::invalid(
                "spectral_scale",
                format!("{} not in [0, 1]", self.spectral_scale),
            ));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::invalid("density", format!("{} not in (0, 1]", self.density)));
        }
        if !(self.input_gain.is_finite() && self.input_gain >= 0.0) {
            return Err(Error::invalid(
                "input_gain",
                format!("{} must be finite and >= 0", self.input_gain),
            ));
        }
        Ok(())
    }
}

/// Neuron activations `x(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirState<T>(pub Array1<T>);

impl<T: Scalar> ReservoirState<T> {
    pub fn zeros(n: usize) -> Self {
        Self(Array1::zeros(n))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn view(&self) -> ArrayView1<'_, T> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array1<T> {
        self.0
    }
}

impl<T> From<Array1<T>> for ReservoirState<T> {
    fn from(a: Array1<T>) -> Self {
        Self(a)
    }
}

/// The fixed random matrices of one reservoir.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirMatrices<T> {
    recurrent: CsrMatrix<T>,
    input: Array2<T>,
    raw_radius: f64,
    seed_used: u64,
}

impl<T: Scalar> ReservoirMatrices<T> {
    /// Samples `W` (uniform [-1, 1] at Bernoulli(density) positions, then
    /// scaled to unit spectral radius) and `W_in` (standard normal). A
    /// nilpotent draw is resampled with seed `seed + k` for k = 1..=8.
    pub fn build(spec: &ReservoirSpec) -> Result<Self> {
        spec.validate()?;
        for attempt in 0..=MAX_RESAMPLES {
            let seed = spec.seed.wrapping_add(attempt as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let recurrent = sample_sparse::<T>(&mut rng, spec.size, spec.density);
            let input = sample_gaussian::<T>(&mut rng, spec.size, spec.input_dim);
            match Self::normalized(recurrent, input, seed) {
                Ok(mut m) => {
                    m.seed_used = seed;
                    return Ok(m);
                }
                Err(Error::ZeroSpectralRadius { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(Error::ZeroSpectralRadius {
            attempts: MAX_RESAMPLES + 1,
        })
    }

    /// Rescales a given recurrent matrix to unit spectral radius.
    pub fn normalized(mut recurrent: CsrMatrix<T>, input: Array2<T>, seed: u64) -> Result<Self> {
        check_dim("recurrent columns", recurrent.rows(), recurrent.cols())?;
        check_dim("input matrix rows", recurrent.rows(), input.nrows())?;
        let est = spectral_radius(&recurrent, seed);
        if !(est.radius > 0.0) || !est.radius.is_finite() {
            return Err(Error::ZeroSpectralRadius { attempts: 1 });
        }
        recurrent.scale(T::of(1.0 / est.radius));
        Ok(Self {
            recurrent,
            input,
            raw_radius: est.radius,
            seed_used: seed,
        })
    }

    /// Uses the matrices exactly as given, without normalization.
    pub fn from_parts(recurrent: CsrMatrix<T>, input: Array2<T>) -> Result<Self> {
        check_dim("recurrent columns", recurrent.rows(), recurrent.cols())?;
        check_dim("input matrix rows", recurrent.rows(), input.nrows())?;
        Ok(Self {
            recurrent,
            input,
            raw_radius: f64::NAN,
            seed_used: 0,
        })
    }

    pub(crate) fn with_origin(mut self, raw_radius: f64, seed_used: u64) -> Self {
        self.raw_radius = raw_radius;
        self.seed_used = seed_used;
        self
    }

    pub fn size(&self) -> usize {
        self.recurrent.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.input.ncols()
    }

    pub fn recurrent(&self) -> &CsrMatrix<T> {
        &self.recurrent
    }

    pub fn input(&self) -> &Array2<T> {
        &self.input
    }

    /// Spectral radius of `W` before normalization (NaN for [`from_parts`](Self::from_parts)).
    pub fn raw_radius(&self) -> f64 {
        self.raw_radius
    }

    /// Seed of the draw that was kept.
    pub fn seed_used(&self) -> u64 {
        self.seed_used
    }

    /// Hash over the exact bit patterns of both matrices.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.recurrent.row_ptr().hash(&mut h);
        self.recurrent.col_idx().hash(&mut h);
        for v in self.recurrent.values() {
            v.f64().to_bits().hash(&mut h);
        }
        for v in self.input.iter() {
            v.f64().to_bits().hash(&mut h);
        }
        h.finish()
    }
}

fn sample_sparse<T: Scalar>(rng: &mut ChaCha8Rng, n: usize, density: f64) -> CsrMatrix<T> {
    let mut triplets = Vec::with_capacity(((n * n) as f64 * density * 1.1) as usize + 1);
    for r in 0..n {
        for c in 0..n {
            if rng.random::<f64>() < density {
                triplets.push((r, c, T::of(rng.random_range(-1.0..=1.0))));
            }
        }
    }
    CsrMatrix::from_sorted_triplets(n, n, &triplets)
}

pub(crate) fn sample_gaussian<T: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<T> {
    Array2::from_shape_simple_fn((rows, cols), || T::of(rng.sample::<f64, _>(StandardNormal)))
}

/// A reservoir: hyper-parameters plus their fixed matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Reservoir<T> {
    spec: ReservoirSpec,
    matrices: ReservoirMatrices<T>,
}

impl<T: Scalar> Reservoir<T> {
    pub fn build(spec: ReservoirSpec) -> Result<Self> {
        let matrices = ReservoirMatrices::build(&spec)?;
        Ok(Self { spec, matrices })
    }

    pub fn from_matrices(spec: ReservoirSpec, matrices: ReservoirMatrices<T>) -> Result<Self> {
        check_dim("reservoir size", spec.size, matrices.size())?;
        check_dim("reservoir input dim", spec.input_dim, matrices.input_dim())?;
        Ok(Self { spec, matrices })
    }

    pub fn spec(&self) -> &ReservoirSpec {
        &self.spec
    }

    pub fn matrices(&self) -> &ReservoirMatrices<T> {
        &self.matrices
    }

    pub fn size(&self) -> usize {
        self.spec.size
    }

    /// One update from an already computed input drive `gamma W_in s`.
    pub(crate) fn step_with_drive(
        &self,
        state: ArrayView1<'_, T>,
        drive: ArrayView1<'_, T>,
        out: &mut Array1<T>,
    ) -> Result<()> {
        out.assign(&drive);
        self.matrices
            .recurrent
            .gemv(T::of(self.spec.spectral_scale), state, T::one(), out.view_mut())?;
        let alpha = T::of(self.spec.leakage);
        let keep = T::one() - alpha;
        let act = self.spec.activation;
        ndarray::Zip::from(out).and(&state).for_each(|o, &x| {
            *o = keep * x + alpha * act.apply(*o);
        });
        Ok(())
    }

    /// Single time step. Neither argument is modified.
    pub fn step(&self, state: &ReservoirState<T>, input: ArrayView1<'_, T>) -> Result<ReservoirState<T>> {
        check_dim("reservoir state", self.size(), state.len())?;
        check_dim("reservoir input", self.spec.input_dim, input.len())?;
        let mut drive = Array1::zeros(self.size());
        general_mat_vec_mul(
            T::of(self.spec.input_gain),
            &self.matrices.input,
            &input,
            T::zero(),
            &mut drive,
        );
        let mut out = Array1::zeros(self.size());
        self.step_with_drive(state.view(), drive.view(), &mut out)?;
        Ok(ReservoirState(out))
    }

    /// Runs over the rows of `inputs`; row `t` of the result is the state after
    /// consuming inputs `0..=t`.
    pub fn run_sequence(&self, initial: &ReservoirState<T>, inputs: ArrayView2<'_, T>) -> Result<Array2<T>> {
        check_dim("reservoir state", self.size(), initial.len())?;
        check_dim("reservoir input", self.spec.input_dim, inputs.ncols())?;
        if inputs.nrows() == 0 {
            return Err(Error::Empty("input sequence"));
        }
        let drive = inputs.dot(&self.matrices.input.t()) * T::of(self.spec.input_gain);
        let mut states = Array2::zeros((inputs.nrows(), self.size()));
        let mut current = initial.0.clone();
        let mut next = Array1::zeros(self.size());
        for (t, d) in drive.axis_iter(Axis(0)).enumerate() {
            self.step_with_drive(current.view(), d, &mut next)?;
            states.row_mut(t).assign(&next);
            std::mem::swap(&mut current, &mut next);
        }
        Ok(states)
    }
}

/// Anything that maps an input sequence to a sequence of readout
/// representations, starting from a zero state.
pub trait SequenceEncoder<T: Scalar> {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn encode(&self, inputs: ArrayView2<'_, T>) -> Result<Array2<T>>;
    fn fingerprint(&self) -> u64;
}

impl<T: Scalar> SequenceEncoder<T> for Reservoir<T> {
    fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    fn output_dim(&self) -> usize {
        self.size()
    }

    fn encode(&self, inputs: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.run_sequence(&ReservoirState::zeros(self.size()), inputs)
    }

    fn fingerprint(&self) -> u64 {
        self.matrices.fingerprint()
    }
}
