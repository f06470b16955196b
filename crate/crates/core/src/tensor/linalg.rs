use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Tensor;

/// Dot product with four interleaved partial sums (fixed order, so still
/// deterministic) to break the add dependency chain.
fn dot_lanes<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in ca.by_ref().zip(cb.by_ref()) {
        for l in 0..4 {
            acc[l] = acc[l] + x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        tail = tail + x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite
/// `n × n` matrix given row-major.
///
/// A pivot below `n · ε · max(diag)` is reported as singular.
pub fn cholesky<T: Scalar>(a: &[T], n: usize) -> Result<Vec<T>> {
    if a.len() != n * n {
        return Err(Error::Dimension(format!(
            "cholesky expects {n}x{n}, got {} values",
            a.len()
        )));
    }
    let max_diag = (0..n).fold(T::zero(), |m, i| m.max(a[i * n + i].abs()));
    let tol = T::lit(n as f64) * T::epsilon() * max_diag;
    let mut l = vec![T::zero(); n * n];
    for j in 0..n {
        let row_j = &l[j * n..j * n + j];
        let d = a[j * n + j] - dot_lanes(row_j, row_j);
        if !(d > tol) {
            return Err(Error::Singular(format!(
                "pivot {j} is {} (tolerance {})",
                d.to_f64_lossless(),
                tol.to_f64_lossless()
            )));
        }
        let djj = d.sqrt();
        l[j * n + j] = djj;
        for i in (j + 1)..n {
            let s = a[i * n + j] - dot_lanes(&l[i * n..i * n + j], &l[j * n..j * n + j]);
            l[i * n + j] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ x = b` by forward and back substitution.
pub fn cholesky_solve<T: Scalar>(l: &[T], n: usize, b: &[T]) -> Vec<T> {
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s = s - l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Ridge solution from precomputed normal equations: solves
/// `(G + λI) v = r` where `G = AᵀA` (k × k, row-major) and `r = Aᵀb`.
pub fn ridge_solve_normal<T: Scalar>(gram: &[T], rhs: &[T], k: usize, lambda: T) -> Result<Vec<T>> {
    if lambda < T::zero() || !lambda.is_finite() {
        return Err(Error::Config(format!(
            "ridge lambda must be finite and nonnegative, got {}",
            lambda.to_f64_lossless()
        )));
    }
    if rhs.len() != k {
        return Err(Error::Dimension(format!(
            "ridge rhs has {} entries, expected {k}",
            rhs.len()
        )));
    }
    let mut a = gram.to_vec();
    for i in 0..k {
        a[i * k + i] = a[i * k + i] + lambda;
    }
    let l = cholesky(&a, k)?;
    let v = cholesky_solve(&l, k, rhs);
    super::ensure_finite(&v, "ridge solve")?;
    Ok(v)
}

/// `argmin_v ‖Av − b‖² + λ‖v‖²` through the normal equations and a Cholesky
/// factorization.
pub fn ridge_solve<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, lambda: T) -> Result<Tensor<T>> {
    if a.rank() != 2 {
        return Err(Error::Dimension(
            "ridge design matrix must be rank 2".into(),
        ));
    }
    let (n, k) = (a.shape()[0], a.shape()[1]);
    if b.len() != n {
        return Err(Error::Dimension(format!(
            "ridge target has {} entries, design has {n} rows",
            b.len()
        )));
    }
    let ad = a.data();
    let mut gram = vec![T::zero(); k * k];
    let mut rhs = vec![T::zero(); k];
    for r in 0..n {
        let row = &ad[r * k..(r + 1) * k];
        let br = b.data()[r];
        for i in 0..k {
            rhs[i] = rhs[i] + row[i] * br;
            for j in 0..=i {
                gram[i * k + j] = gram[i * k + j] + row[i] * row[j];
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            gram[j * k + i] = gram[i * k + j];
        }
    }
    let v = ridge_solve_normal(&gram, &rhs, k, lambda)?;
    Ok(Tensor::from_parts(vec![k], v))
}
