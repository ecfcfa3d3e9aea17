//! Dense tensors, map collections and the numerical semantics of every
//! operator a scoring function can use.
//!
//! All kernels are pure. Each one either returns finite entries or an
//! [`EvalFailure`]; NaN and infinities never leak out.

mod elementwise;
mod linalg;
mod special;
mod stats;

pub use elementwise::{binary, unary, BinaryOp, UnaryOp};
pub use linalg::{dot, inverse, matmul, outer, ridge, trace, transpose};
pub use special::{geometric_median, rbf, rbf_bandwidth, slice};
pub use stats::{statistic, Dim, Stat};

use crate::error::{EvalFailure, EvalResult};

/// Dense row-major array of `f64` with an explicit shape. Rank 0 is a scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that `data` fills `shape` exactly.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> EvalResult<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(EvalFailure::Shape {
                op: "tensor",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> EvalResult<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn eye(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self {
            shape: vec![n, n],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The value of a rank-0 tensor. Only these replicate under broadcasting.
    pub fn rank0(&self) -> Option<f64> {
        self.shape.is_empty().then(|| self.data[0])
    }

    /// The value of a single-entry tensor.
    pub fn as_scalar(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn reshape(self, shape: Vec<usize>) -> EvalResult<Self> {
        Self::new(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub(crate) fn check_finite(self, op: &'static str) -> EvalResult<Self> {
        if self.data.iter().all(|x| x.is_finite()) {
            Ok(self)
        } else {
            Err(EvalFailure::NonFinite { op })
        }
    }
}

/// An ordered collection of equally shaped feature maps, stored contiguously
/// as an `N x D` block where `D` is the entry count of one map.
#[derive(Debug, Clone, PartialEq)]
pub struct MapCollection {
    map_shape: Vec<usize>,
    map_len: usize,
    data: Vec<f64>,
}

impl MapCollection {
    /// Builds a collection from a flat buffer of `data.len() / prod(map_shape)` maps.
    pub fn from_flat(map_shape: Vec<usize>, data: Vec<f64>) -> EvalResult<Self> {
        let map_len: usize = map_shape.iter().product();
        if map_len == 0 || data.len() % map_len != 0 {
            return Err(EvalFailure::Shape {
                op: "maps",
                lhs: map_shape,
                rhs: vec![data.len()],
            });
        }
        Ok(Self {
            map_shape,
            map_len,
            data,
        })
    }

    pub fn from_maps(maps: &[Tensor]) -> EvalResult<Self> {
        let first = maps.first().ok_or(EvalFailure::Operand {
            op: "maps",
            detail: "empty collection",
        })?;
        let shape = first.shape().to_vec();
        let mut data = Vec::with_capacity(first.len() * maps.len());
        for m in maps {
            if m.shape() != shape.as_slice() {
                return Err(EvalFailure::Shape {
                    op: "maps",
                    lhs: shape,
                    rhs: m.shape().to_vec(),
                });
            }
            data.extend_from_slice(m.data());
        }
        Self::from_flat(shape, data)
    }

    pub fn map_shape(&self) -> &[usize] {
        &self.map_shape
    }

    /// Number of entries in one map (`H * W`).
    pub fn map_len(&self) -> usize {
        self.map_len
    }

    /// Number of maps in the collection.
    pub fn count(&self) -> usize {
        self.data.len() / self.map_len
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.map_len..(i + 1) * self.map_len]
    }

    pub fn iter(&self) -> std::slice::Chunks<'_, f64> {
        self.data.chunks(self.map_len)
    }

    /// The maps at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.map_len);
        for &i in indices {
            data.extend_from_slice(self.get(i));
        }
        Self {
            map_shape: self.map_shape.clone(),
            map_len: self.map_len,
            data,
        }
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            map_shape: self.map_shape.clone(),
            map_len: self.map_len,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn with_data(&self, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len() % self.map_len, 0);
        Self {
            map_shape: self.map_shape.clone(),
            map_len: self.map_len,
            data,
        }
    }

    fn check_finite(self, op: &'static str) -> EvalResult<Self> {
        if self.data.iter().all(|x| x.is_finite()) {
            Ok(self)
        } else {
            Err(EvalFailure::NonFinite { op })
        }
    }
}

/// Runtime value flowing through an expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Tensor(Tensor),
    Maps(MapCollection),
}

impl Value {
    pub fn as_tensor(&self, op: &'static str) -> EvalResult<&Tensor> {
        match self {
            Value::Tensor(t) => Ok(t),
            Value::Maps(_) => Err(EvalFailure::Operand {
                op,
                detail: "map collection where a tensor is required",
            }),
        }
    }

    pub fn as_maps(&self, op: &'static str) -> EvalResult<&MapCollection> {
        match self {
            Value::Maps(m) => Ok(m),
            Value::Tensor(_) => Err(EvalFailure::Operand {
                op,
                detail: "tensor where a map collection is required",
            }),
        }
    }

    /// All entries in row-major order (maps concatenated for collections).
    pub fn flat(&self) -> &[f64] {
        match self {
            Value::Tensor(t) => t.data(),
            Value::Maps(m) => m.data(),
        }
    }

    /// Shape for diagnostics; collections report `[N, H, W]`.
    pub fn shape_hint(&self) -> Vec<usize> {
        match self {
            Value::Tensor(t) => t.shape().to_vec(),
            Value::Maps(m) => {
                let mut s = vec![m.count()];
                s.extend_from_slice(m.map_shape());
                s
            }
        }
    }
}

impl From<Tensor> for Value {
    fn from(t: Tensor) -> Self {
        Value::Tensor(t)
    }
}

impl From<MapCollection> for Value {
    fn from(m: MapCollection) -> Self {
        Value::Maps(m)
    }
}

/// Numerical knobs of the repaired operators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    /// Ridge as a multiple of the mean diagonal entry.
    pub ridge_rel: f64,
    /// Ridge used when the mean diagonal is not positive.
    pub ridge_abs: f64,
    pub weiszfeld_tol: f64,
    pub weiszfeld_max_iter: usize,
    pub rbf_bandwidth: Bandwidth,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            ridge_rel: 1e-3,
            ridge_abs: 1e-8,
            weiszfeld_tol: 1e-9,
            weiszfeld_max_iter: 500,
            rbf_bandwidth: Bandwidth::MedianHeuristic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// sigma = median positive pairwise distance / sqrt(2); 1 when all points coincide.
    MedianHeuristic,
    Fixed(f64),
}
