//! Little-endian binary snapshots of trained components.
//!
//! Every file starts with a 12-byte magic and a `u32` version. Integers are
//! `u64`, reals `f64`, matrices row-major.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::descriptor::HiddenLayer;
use crate::error::{Error, Result};
use crate::readout::ReadoutModel;
use crate::reservoir::{Activation, Reservoir, ReservoirMatrices, ReservoirSpec};
use crate::scalar::Scalar;
use crate::sparce::SparceLayer;
use crate::sparse::CsrMatrix;

pub const SNAPSHOT_VERSION: u32 = 1;
pub const RESERVOIR_MAGIC: &[u8; 12] = b"RESVPR-RSV\0\0";
pub const READOUT_MAGIC: &[u8; 12] = b"RESVPR-OUT\0\0";
pub const HIDDEN_MAGIC: &[u8; 12] = b"RESVPR-HID\0\0";

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn header(magic: &[u8; 12]) -> Self {
        let mut w = Writer(magic.to_vec());
        w.0.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        w
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn reals<T: Scalar>(&mut self, vs: impl IntoIterator<Item = T>) {
        for v in vs {
            self.f64(v.f64());
        }
    }

    fn save(self, path: &Path) -> Result<()> {
        fs::write(path, self.0).map_err(|e| Error::io(path, e))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    kind: &'static str,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn open(bytes: &'a [u8], magic: &[u8; 12], kind: &'static str, path: &'a Path) -> Result<Self> {
        let mut r = Reader {
            bytes,
            pos: 0,
            kind,
            path,
        };
        if r.take(12)? != magic {
            return Err(r.fail("bad magic"));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != SNAPSHOT_VERSION {
            return Err(r.fail(format!("unsupported version {version}")));
        }
        Ok(r)
    }

    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Format {
            kind: self.kind,
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(self.fail("truncated")),
        }
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| self.fail("length overflow"))
    }

    /// Length prefix bounded by the remaining payload.
    fn count(&mut self, elem_bytes: usize) -> Result<usize> {
        let n = self.usize()?;
        self.check_room(n, elem_bytes)?;
        Ok(n)
    }

    fn check_room(&self, n: usize, elem_bytes: usize) -> Result<()> {
        match n.checked_mul(elem_bytes) {
            Some(b) if b <= self.bytes.len() - self.pos => Ok(()),
            _ => Err(self.fail("truncated")),
        }
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn reals<T: Scalar>(&mut self, n: usize) -> Result<Vec<T>> {
        self.check_room(n, 8)?;
        (0..n).map(|_| self.f64().map(T::of)).collect()
    }

    fn usizes(&mut self, n: usize) -> Result<Vec<usize>> {
        self.check_room(n, 8)?;
        (0..n).map(|_| self.usize()).collect()
    }

    fn matrix<T: Scalar>(&mut self, rows: usize, cols: usize) -> Result<Array2<T>> {
        let n = rows.checked_mul(cols).ok_or_else(|| self.fail("length overflow"))?;
        let data = self.reals(n)?;
        Ok(Array2::from_shape_vec((rows, cols), data).expect("shape matches length"))
    }

    fn finish(self) -> Result<()> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(self.fail("trailing bytes"))
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn save_reservoir<T: Scalar>(path: &Path, reservoir: &Reservoir<T>) -> Result<()> {
    let spec = reservoir.spec();
    let m = reservoir.matrices();
    let w = m.recurrent();
    let mut out = Writer::header(RESERVOIR_MAGIC);
    out.u64(spec.size as u64);
    out.u64(spec.input_dim as u64);
    out.f64(spec.density);
    out.u64(spec.seed);
    out.u64(m.seed_used());
    out.f64(spec.leakage);
    out.f64(spec.input_gain);
    out.f64(spec.spectral_scale);
    out.u64(spec.activation.code() as u64);
    out.f64(m.raw_radius());
    out.u64(w.nnz() as u64);
    for &p in w.row_ptr() {
        out.u64(p as u64);
    }
    for &c in w.col_idx() {
        out.u64(c as u64);
    }
    out.reals(w.values().iter().copied());
    out.reals(m.input().iter().copied());
    out.save(path)
}

pub fn load_reservoir<T: Scalar>(path: &Path) -> Result<Reservoir<T>> {
    let bytes = read_file(path)?;
    let mut r = Reader::open(&bytes, RESERVOIR_MAGIC, "reservoir snapshot", path)?;
    let size = r.usize()?;
    let input_dim = r.usize()?;
    let density = r.f64()?;
    let seed = r.u64()?;
    let seed_used = r.u64()?;
    let leakage = r.f64()?;
    let input_gain = r.f64()?;
    let spectral_scale = r.f64()?;
    let code = r.u64()?;
    let activation = u32::try_from(code)
        .ok()
        .and_then(Activation::from_code)
        .ok_or_else(|| r.fail(format!("unknown activation {code}")))?;
    let raw_radius = r.f64()?;
    let nnz = r.count(24)?;
    let row_ptr = r.usizes(size.checked_add(1).ok_or_else(|| r.fail("length overflow"))?)?;
    let col_idx = r.usizes(nnz)?;
    let values = r.reals(nnz)?;
    let input = r.matrix(size, input_dim)?;
    r.finish()?;
    let recurrent = CsrMatrix::from_raw_parts(size, size, row_ptr, col_idx, values)
        .ok_or_else(|| r_fail(path, "reservoir snapshot", "inconsistent sparse structure"))?;
    let spec = ReservoirSpec {
        size,
        leakage,
        input_gain,
        spectral_scale,
        density,
        input_dim,
        activation,
        seed,
    };
    spec.validate()?;
    let matrices = ReservoirMatrices::from_parts(recurrent, input)?.with_origin(raw_radius, seed_used);
    Reservoir::from_matrices(spec, matrices)
}

fn r_fail(path: &Path, kind: &'static str, reason: &str) -> Error {
    Error::Format {
        kind,
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Readout weights, optional bias and optional SPARCE thresholds.
pub fn save_readout<T: Scalar>(path: &Path, model: &ReadoutModel<T>, sparce: Option<&SparceLayer<T>>) -> Result<()> {
    let mut out = Writer::header(READOUT_MAGIC);
    out.u64(model.classes() as u64);
    out.u64(model.rep_dim() as u64);
    out.u64(model.bias.is_some() as u64);
    out.u64(sparce.is_some() as u64);
    out.reals(model.weights.iter().copied());
    if let Some(b) = &model.bias {
        out.reals(b.iter().copied());
    }
    if let Some(s) = sparce {
        out.f64(s.level());
        out.reals(s.percentiles().iter().copied());
        out.reals(s.offsets.iter().copied());
    }
    out.save(path)
}

pub fn load_readout<T: Scalar>(path: &Path) -> Result<(ReadoutModel<T>, Option<SparceLayer<T>>)> {
    let bytes = read_file(path)?;
    let mut r = Reader::open(&bytes, READOUT_MAGIC, "readout snapshot", path)?;
    let classes = r.usize()?;
    let rep_dim = r.usize()?;
    let has_bias = r.u64()?;
    let has_sparce = r.u64()?;
    if has_bias > 1 || has_sparce > 1 {
        return Err(r.fail("bad flag"));
    }
    let weights = r.matrix(classes, rep_dim)?;
    let bias = if has_bias == 1 {
        Some(Array1::from(r.reals(classes)?))
    } else {
        None
    };
    let sparce = if has_sparce == 1 {
        let level = r.f64()?;
        let p = Array1::from(r.reals(rep_dim)?);
        let o = Array1::from(r.reals(rep_dim)?);
        Some(SparceLayer::from_parts(level, p, o)?)
    } else {
        None
    };
    r.finish()?;
    Ok((ReadoutModel::new(weights, bias)?, sparce))
}

pub fn save_hidden<T: Scalar>(path: &Path, layer: &HiddenLayer<T>) -> Result<()> {
    let mut out = Writer::header(HIDDEN_MAGIC);
    out.u64(layer.width() as u64);
    out.u64(layer.input_dim() as u64);
    out.u64(layer.activation.code() as u64);
    out.reals(layer.weights.iter().copied());
    out.reals(layer.bias.iter().copied());
    out.save(path)
}

pub fn load_hidden<T: Scalar>(path: &Path) -> Result<HiddenLayer<T>> {
    let bytes = read_file(path)?;
    let mut r = Reader::open(&bytes, HIDDEN_MAGIC, "hidden layer snapshot", path)?;
    let width = r.usize()?;
    let input_dim = r.usize()?;
    let code = r.u64()?;
    let activation = u32::try_from(code)
        .ok()
        .and_then(Activation::from_code)
        .ok_or_else(|| r.fail(format!("unknown activation {code}")))?;
    let weights = r.matrix(width, input_dim)?;
    let bias = Array1::from(r.reals(width)?);
    r.finish()?;
    Ok(HiddenLayer {
        weights,
        bias,
        activation,
    })
}
