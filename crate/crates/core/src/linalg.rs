//! Small dense helpers on complex matrices that nalgebra does not provide directly.

use nalgebra::linalg::SymmetricEigen;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{CMatrix, Real};

/// Hard cap on the number of qubits of a single-copy dense operator.
pub const MAX_QUBITS: usize = 14;

/// Hilbert-space dimension 2^N, enforcing `1 <= N <= MAX_QUBITS`.
pub fn dim_for(n_qubits: usize) -> Result<usize> {
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        return Err(Error::InvalidDimension(format!(
            "number of qubits must lie in 1..={MAX_QUBITS}, got {n_qubits}"
        )));
    }
    Ok(1usize << n_qubits)
}

/// Recovers N from a matrix side length, if it is a power of two.
pub fn qubits_for_dim(dim: usize) -> Result<usize> {
    if dim < 2 || !dim.is_power_of_two() {
        return Err(Error::InvalidDimension(format!("{dim} is not a power of two >= 2")));
    }
    Ok(dim.trailing_zeros() as usize)
}

/// max |m_ij - conj(m_ji)|
pub fn hermitian_defect<T: Real>(m: &CMatrix<T>) -> T {
    let n = m.nrows();
    let mut worst = T::zero();
    for i in 0..n {
        for j in i..n {
            let d = m[(i, j)] - m[(j, i)].conj();
            let a = d.norm_sqr().sqrt();
            if a > worst {
                worst = a;
            }
        }
    }
    worst
}

pub fn trace<T: Real>(m: &CMatrix<T>) -> Complex<T> {
    let mut s = Complex::new(T::zero(), T::zero());
    for i in 0..m.nrows().min(m.ncols()) {
        s += m[(i, i)];
    }
    s
}

/// tr(AB) without forming the product.
pub fn trace_of_product<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> Complex<T> {
    let n = a.nrows();
    let mut s = Complex::new(T::zero(), T::zero());
    for i in 0..n {
        for j in 0..a.ncols() {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

pub fn frobenius_norm<T: Real>(m: &CMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr()).sqrt()
}

pub fn max_abs<T: Real>(m: &CMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| {
        let a = z.norm_sqr().sqrt();
        if a > acc {
            a
        } else {
            acc
        }
    })
}

/// (M + M†)/2
pub fn hermitize<T: Real>(m: &CMatrix<T>) -> CMatrix<T> {
    let half = T::lit(0.5);
    let adj = m.adjoint();
    (m + adj).map(|z| z * half)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues sorted descending.
/// Eigenvectors are returned as the columns of a unitary matrix.
pub fn eigh<T: Real>(m: &CMatrix<T>) -> (Vec<T>, CMatrix<T>) {
    let eig = SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::<T>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Kronecker product A ⊗ B.
pub fn kron<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    a.kronecker(b)
}

/// U† X U
pub fn to_basis<T: Real>(u: &CMatrix<T>, x: &CMatrix<T>) -> CMatrix<T> {
    u.adjoint() * x * u
}

/// U X U†
pub fn from_basis<T: Real>(u: &CMatrix<T>, x: &CMatrix<T>) -> CMatrix<T> {
    u * x * u.adjoint()
}
