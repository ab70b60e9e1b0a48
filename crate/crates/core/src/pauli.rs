//! Pauli strings and the Pauli-basis decomposition of dense operators.
//!
//! Qubit 0 is the leftmost tensor factor, i.e. the most significant bit of a
//! computational-basis index. A Pauli string on N qubits is indexed in base 4
//! with the same ordering (I=0, X=1, Y=2, Z=3).

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::qubits_for_dim;
use crate::scalar::{c, cr, CMatrix, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn code(self) -> usize {
        match self {
            Pauli::I => 0,
            Pauli::X => 1,
            Pauli::Y => 2,
            Pauli::Z => 3,
        }
    }

    pub fn from_code(code: usize) -> Pauli {
        Pauli::ALL[code & 3]
    }

    pub fn matrix<T: Real>(self) -> CMatrix<T> {
        let (o, l) = (T::zero(), T::one());
        let z = cr(o);
        let entries = match self {
            Pauli::I => [cr(l), z, z, cr(l)],
            Pauli::X => [z, cr(l), cr(l), z],
            Pauli::Y => [z, c(o, -l), c(o, l), z],
            Pauli::Z => [cr(l), z, z, cr(-l)],
        };
        CMatrix::from_row_slice(2, 2, &entries)
    }

    fn flips(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    fn signs(self) -> bool {
        matches!(self, Pauli::Y | Pauli::Z)
    }
}

/// Decodes a base-4 Pauli index into per-qubit labels.
pub fn pauli_labels(index: usize, n_qubits: usize) -> Vec<Pauli> {
    (0..n_qubits)
        .map(|q| Pauli::from_code(index >> (2 * (n_qubits - 1 - q))))
        .collect()
}

pub fn pauli_index(labels: &[Pauli]) -> usize {
    labels.iter().fold(0, |acc, p| acc * 4 + p.code())
}

/// Bit masks (x, z, #Y) of a Pauli string in computational-index bit order.
fn masks(labels: &[Pauli]) -> (usize, usize, usize) {
    let n = labels.len();
    let mut x = 0;
    let mut z = 0;
    let mut ny = 0;
    for (q, p) in labels.iter().enumerate() {
        let bit = 1 << (n - 1 - q);
        if p.flips() {
            x |= bit;
        }
        if p.signs() {
            z |= bit;
        }
        if *p == Pauli::Y {
            ny += 1;
        }
    }
    (x, z, ny)
}

fn i_power<T: Real>(k: usize) -> Complex<T> {
    let (o, l) = (T::zero(), T::one());
    match k % 4 {
        0 => c(l, o),
        1 => c(o, l),
        2 => c(-l, o),
        _ => c(o, -l),
    }
}

/// Dense matrix of a Pauli string.
pub fn pauli_string_matrix<T: Real>(labels: &[Pauli]) -> CMatrix<T> {
    let dim = 1usize << labels.len();
    let (x, z, ny) = masks(labels);
    let phase = i_power::<T>(ny);
    let mut m = CMatrix::<T>::zeros(dim, dim);
    for col in 0..dim {
        let sign = if (col & z).count_ones() % 2 == 1 { -T::one() } else { T::one() };
        m[(col ^ x, col)] = phase * sign;
    }
    m
}

/// Reorders a base-4 array whose digit j is 2r_j + c_j into a row-major
/// 2^N × 2^N matrix with row bits r and column bits c.
fn digits_to_matrix<T: Real>(buf: &[Complex<T>], n_qubits: usize) -> CMatrix<T> {
    let dim = 1usize << n_qubits;
    let mut m = CMatrix::<T>::zeros(dim, dim);
    for (index, &v) in buf.iter().enumerate() {
        let (mut row, mut col) = (0, 0);
        for q in 0..n_qubits {
            let e = (index >> (2 * (n_qubits - 1 - q))) & 3;
            row = (row << 1) | (e >> 1);
            col = (col << 1) | (e & 1);
        }
        m[(row, col)] = v;
    }
    m
}

fn matrix_to_digits<T: Real>(m: &CMatrix<T>, n_qubits: usize) -> Vec<Complex<T>> {
    let size = 1usize << (2 * n_qubits);
    let mut buf = vec![cr(T::zero()); size];
    for (index, slot) in buf.iter_mut().enumerate() {
        let (mut row, mut col) = (0, 0);
        for q in 0..n_qubits {
            let e = (index >> (2 * (n_qubits - 1 - q))) & 3;
            row = (row << 1) | (e >> 1);
            col = (col << 1) | (e & 1);
        }
        *slot = m[(row, col)];
    }
    buf
}

/// Applies a 4×4 map to every base-4 digit in turn.
fn per_digit<T: Real>(buf: &mut [Complex<T>], n_qubits: usize, map: impl Fn([Complex<T>; 4]) -> [Complex<T>; 4]) {
    for q in 0..n_qubits {
        let stride = 1usize << (2 * (n_qubits - 1 - q));
        for block in (0..buf.len()).step_by(4 * stride) {
            for off in block..block + stride {
                let v = [buf[off], buf[off + stride], buf[off + 2 * stride], buf[off + 3 * stride]];
                let w = map(v);
                for (k, x) in w.into_iter().enumerate() {
                    buf[off + k * stride] = x;
                }
            }
        }
    }
}

/// Hermitian Σ_P a_P P from real coefficients (dense, 4^N entries), in O(N·4^N).
pub fn pauli_compose<T: Real>(coeffs: &[T], n_qubits: usize) -> Result<CMatrix<T>> {
    let expected = 1usize << (2 * n_qubits);
    if coeffs.len() != expected {
        return Err(Error::DimensionMismatch { expected, found: coeffs.len() });
    }
    let mut buf: Vec<Complex<T>> = coeffs.iter().map(|&a| cr(a)).collect();
    let i = c(T::zero(), T::one());
    // (I, X, Y, Z) → entries (00, 01, 10, 11) of the 2×2 block.
    per_digit(&mut buf, n_qubits, |[id, x, y, z]| [id + z, x - i * y, x + i * y, id - z]);
    Ok(digits_to_matrix(&buf, n_qubits))
}

/// Coefficients a_P with M = Σ_P a_P P, for every Pauli string P (dense, 4^N entries).
pub fn pauli_decompose<T: Real>(m: &CMatrix<T>) -> Result<Vec<Complex<T>>> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
    }
    let n = qubits_for_dim(m.nrows())?;
    let mut buf = matrix_to_digits(m, n);
    let half = T::lit(0.5);
    let i = c(T::zero(), T::one());
    per_digit(&mut buf, n, |[e00, e01, e10, e11]| {
        [(e00 + e11) * half, (e01 + e10) * half, i * (e01 - e10) * half, (e00 - e11) * half]
    });
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;

    #[test]
    fn string_matrix_matches_kronecker_product() {
        let labels = [Pauli::Y, Pauli::I, Pauli::Z];
        let dense = Pauli::Y
            .matrix::<f64>()
            .kronecker(&Pauli::I.matrix())
            .kronecker(&Pauli::Z.matrix());
        assert!(max_abs(&(pauli_string_matrix::<f64>(&labels) - dense)) < 1e-15);
    }

    #[test]
    fn decomposition_recovers_operator() {
        let m = CMatrix::<f64>::from_fn(4, 4, |i, j| c((i + 2 * j) as f64 * 0.1, i as f64 - j as f64));
        let coeffs = pauli_decompose(&m).unwrap();
        let mut back = CMatrix::<f64>::zeros(4, 4);
        for (idx, a) in coeffs.iter().enumerate() {
            back += pauli_string_matrix::<f64>(&pauli_labels(idx, 2)) * *a;
        }
        assert!(max_abs(&(back - m)) < 1e-13);
    }

    #[test]
    fn index_round_trip() {
        let labels = [Pauli::Z, Pauli::X, Pauli::I, Pauli::Y];
        assert_eq!(pauli_labels(pauli_index(&labels), 4), labels);
    }

    #[test]
    fn compose_inverts_decompose_for_hermitian() {
        let a = CMatrix::<f64>::from_fn(8, 8, |i, j| c((i * j) as f64 * 0.05, i as f64 - 0.3 * j as f64));
        let h = &a + a.adjoint();
        let coeffs: Vec<f64> = pauli_decompose(&h).unwrap().iter().map(|z| z.re).collect();
        assert!(max_abs(&(pauli_compose(&coeffs, 3).unwrap() - h)) < 1e-13);
        assert!(pauli_compose(&coeffs[..10], 3).is_err());
    }
}
