//! Dense row-major tensors, elementwise arithmetic, matrix product, the ridge
//! solver and the deterministic random stream.

mod blob;
mod linalg;
mod rng;

pub use blob::{read_tensor, tensor_from_bytes, tensor_to_bytes, write_tensor};
pub use linalg::{cholesky, cholesky_solve, ridge_solve, ridge_solve_normal};
pub use rng::RngStream;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense n-dimensional array in row-major order.
///
/// Every extent is positive and every stored value is finite; constructors
/// and arithmetic enforce both.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    Scale,
}

/// Right-hand side of an elementwise operation.
#[derive(Debug, Clone, Copy)]
pub enum Operand<'a, T> {
    Tensor(&'a Tensor<T>),
    Scalar(T),
}

impl<'a, T> From<&'a Tensor<T>> for Operand<'a, T> {
    fn from(t: &'a Tensor<T>) -> Self {
        Operand::Tensor(t)
    }
}

pub(crate) fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::Dimension("tensor rank must be at least 1".into()));
    }
    if shape.contains(&0) {
        return Err(Error::Dimension(format!("zero extent in shape {shape:?}")));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| Error::Dimension(format!("shape {shape:?} overflows")))
}

pub(crate) fn ensure_finite<T: Scalar>(data: &[T], what: &str) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n = check_shape(&shape)?;
        if n != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        ensure_finite(&data, "tensor construction")?;
        Ok(Tensor { shape, data })
    }

    /// Construction without the finiteness scan, for values computed from
    /// already validated tensors.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let n = check_shape(shape)?;
        Ok(Tensor::from_parts(shape.to_vec(), vec![T::zero(); n]))
    }

    pub fn full(shape: &[usize], value: T) -> Result<Self> {
        let n = check_shape(shape)?;
        Tensor::new(shape.to_vec(), vec![value; n])
    }

    pub fn vector(data: Vec<T>) -> Result<Self> {
        Tensor::new(vec![data.len()], data)
    }

    /// Rank-2 tensor from nested rows.
    pub fn matrix(rows: &[&[T]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged matrix rows".into()));
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Tensor::new(vec![rows.len(), cols], data)
    }

    pub fn from_f64(shape: Vec<usize>, data: &[f64]) -> Result<Self> {
        Tensor::new(shape, data.iter().map(|&v| T::lit(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64_lossless()).collect()
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != self.len() {
            return Err(Error::Dimension(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Tensor::from_parts(shape.to_vec(), self.data.clone()))
    }

    /// Value at a multi-index.
    pub fn get(&self, index: &[usize]) -> Result<T> {
        if index.len() != self.rank() {
            return Err(Error::Dimension(format!(
                "index of rank {} into tensor of rank {}",
                index.len(),
                self.rank()
            )));
        }
        let mut flat = 0;
        for (&i, &e) in index.iter().zip(&self.shape) {
            if i >= e {
                return Err(Error::Dimension(format!(
                    "index {index:?} out of bounds for {:?}",
                    self.shape
                )));
            }
            flat = flat * e + i;
        }
        Ok(self.data[flat])
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[T] {
        let cols = self.shape[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        let data: Vec<T> = self.data.iter().map(|&v| f(v)).collect();
        ensure_finite(&data, "map")?;
        Ok(Tensor::from_parts(self.shape.clone(), data))
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |a, &b| a + b)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |a, &b| a.max(b.abs()))
    }

    pub fn norm(&self) -> T {
        crate::scalar::dot(&self.data, &self.data).sqrt()
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }

    pub fn elementwise(&self, op: ElementwiseOp, rhs: Operand<'_, T>) -> Result<Self> {
        let data: Vec<T> = match (op, rhs) {
            (ElementwiseOp::Scale, Operand::Tensor(_)) => {
                return Err(Error::Dimension("scale takes a scalar operand".into()))
            }
            (_, Operand::Tensor(b)) => {
                if b.shape != self.shape {
                    return Err(Error::Dimension(format!(
                        "elementwise {op:?} on {:?} and {:?}",
                        self.shape, b.shape
                    )));
                }
                let f = match op {
                    ElementwiseOp::Add => |x: T, y: T| x + y,
                    ElementwiseOp::Sub => |x: T, y: T| x - y,
                    _ => |x: T, y: T| x * y,
                };
                self.data
                    .iter()
                    .zip(&b.data)
                    .map(|(&x, &y)| f(x, y))
                    .collect()
            }
            (_, Operand::Scalar(s)) => {
                let f = match op {
                    ElementwiseOp::Add => |x: T, y: T| x + y,
                    ElementwiseOp::Sub => |x: T, y: T| x - y,
                    _ => |x: T, y: T| x * y,
                };
                self.data.iter().map(|&x| f(x, s)).collect()
            }
        };
        ensure_finite(&data, "elementwise operation")?;
        Ok(Tensor::from_parts(self.shape.clone(), data))
    }

    pub fn add(&self, rhs: &Tensor<T>) -> Result<Self> {
        self.elementwise(ElementwiseOp::Add, Operand::Tensor(rhs))
    }

    pub fn sub(&self, rhs: &Tensor<T>) -> Result<Self> {
        self.elementwise(ElementwiseOp::Sub, Operand::Tensor(rhs))
    }

    pub fn mul(&self, rhs: &Tensor<T>) -> Result<Self> {
        self.elementwise(ElementwiseOp::Mul, Operand::Tensor(rhs))
    }

    pub fn scale(&self, s: T) -> Result<Self> {
        self.elementwise(ElementwiseOp::Scale, Operand::Scalar(s))
    }

    /// Matrix product of two rank-2 tensors, summing sequentially over the
    /// inner index.
    pub fn matmul(&self, rhs: &Tensor<T>) -> Result<Self> {
        if self.rank() != 2 || rhs.rank() != 2 {
            return Err(Error::Dimension("matmul needs rank-2 operands".into()));
        }
        let (n, k) = (self.shape[0], self.shape[1]);
        let (k2, m) = (rhs.shape[0], rhs.shape[1]);
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul inner dimensions {k} and {k2} differ"
            )));
        }
        let mut out = vec![T::zero(); n * m];
        for i in 0..n {
            for j in 0..m {
                let mut acc = T::zero();
                for p in 0..k {
                    acc = acc + self.data[i * k + p] * rhs.data[p * m + j];
                }
                out[i * m + j] = acc;
            }
        }
        ensure_finite(&out, "matmul")?;
        Ok(Tensor::from_parts(vec![n, m], out))
    }

    pub fn transpose(&self) -> Result<Self> {
        if self.rank() != 2 {
            return Err(Error::Dimension("transpose needs a rank-2 tensor".into()));
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = Vec::with_capacity(r * c);
        for j in 0..c {
            for i in 0..r {
                out.push(self.data[i * c + j]);
            }
        }
        Ok(Tensor::from_parts(vec![c, r], out))
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor::from_parts(
            self.shape.clone(),
            self.data
                .iter()
                .map(|v| U::lit(v.to_f64_lossless()))
                .collect(),
        )
    }
}
