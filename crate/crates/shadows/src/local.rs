//! Tensor-product algebra on per-qubit 2×2 factors.

use kst_core::{pauli_decompose, CMatrix, Observable, Result};
use num_complex::Complex64;

use crate::ensemble::{pauli2, Mat2};

/// Sparse Pauli expansion Σ c_P P of a Hermitian operator.
#[derive(Clone, Debug)]
pub(crate) struct PauliTerms {
    pub terms: Vec<(Vec<u8>, f64)>,
}

impl PauliTerms {
    pub fn from_dense(m: &CMatrix<f64>, n_qubits: usize) -> Result<Self> {
        let coeffs = pauli_decompose(m)?;
        let largest = coeffs.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
        let cutoff = 1e-14 * largest;
        let terms = coeffs
            .iter()
            .enumerate()
            .filter(|(_, z)| z.re.abs() > cutoff)
            .map(|(idx, z)| (codes(idx, n_qubits), z.re))
            .collect();
        Ok(Self { terms })
    }

    pub fn from_observable(h: &Observable<f64>) -> Result<Self> {
        Self::from_dense(h.data(), h.n_qubits())
    }

    /// Σ_P c_P Π_j v_j[P_j]
    pub fn contract(&self, per_qubit: &[[Complex64; 4]]) -> Complex64 {
        self.terms
            .iter()
            .map(|(codes, c)| {
                codes.iter().zip(per_qubit).fold(Complex64::new(*c, 0.0), |acc, (&p, v)| acc * v[p as usize])
            })
            .sum()
    }

    /// Σ_{P,P'} c_P c'_{P'} Π_j t_j[P_j][P'_j]
    pub fn contract_pair(&self, other: &PauliTerms, per_qubit: &[[[Complex64; 4]; 4]]) -> Complex64 {
        let mut total = Complex64::new(0.0, 0.0);
        for (pa, ca) in &self.terms {
            for (pb, cb) in &other.terms {
                let mut prod = Complex64::new(ca * cb, 0.0);
                for (j, t) in per_qubit.iter().enumerate() {
                    prod *= t[pa[j] as usize][pb[j] as usize];
                    if prod == Complex64::new(0.0, 0.0) {
                        break;
                    }
                }
                total += prod;
            }
        }
        total
    }
}

fn codes(index: usize, n: usize) -> Vec<u8> {
    (0..n).map(|q| ((index >> (2 * (n - 1 - q))) & 3) as u8).collect()
}

/// tr(σ_μ a), μ = 0…3
pub(crate) fn trace_table(a: &Mat2) -> [Complex64; 4] {
    std::array::from_fn(|mu| (pauli2(mu) * a).trace())
}

/// tr(σ_μ a σ_ν b)
pub(crate) fn pair_table(a: &Mat2, b: &Mat2) -> [[Complex64; 4]; 4] {
    let left: [Mat2; 4] = std::array::from_fn(|mu| pauli2(mu) * a);
    let right: [Mat2; 4] = std::array::from_fn(|nu| pauli2(nu) * b);
    std::array::from_fn(|mu| std::array::from_fn(|nu| (left[mu] * right[nu]).trace()))
}

/// Largest tensor product [`expand`] accepts.
pub(crate) const EXPAND_MAX_QUBITS: usize = 16;

/// Calls `visit(index, value)` for every nonzero entry of scale·⊗_j comps_j,
/// index in base 4 with qubit 0 most significant.
///
/// Entries of `comps` are per-qubit, per-Pauli values in any small algebra `V`;
/// `mul` multiplies a running product by one per-qubit value and `is_zero`
/// prunes branches.
pub(crate) fn expand_with<V: Copy, F: FnMut(usize, V)>(
    comps: &[[V; 4]],
    scale: V,
    mul: impl Fn(&V, &V) -> V,
    is_zero: impl Fn(&V) -> bool,
    visit: &mut F,
) {
    let n = comps.len();
    assert!(n <= EXPAND_MAX_QUBITS);
    if n == 0 {
        visit(0, scale);
        return;
    }
    let mut nz = [[0usize; 4]; EXPAND_MAX_QUBITS];
    let mut count = [0usize; EXPAND_MAX_QUBITS];
    for (j, comp) in comps.iter().enumerate() {
        for (mu, c) in comp.iter().enumerate() {
            if !is_zero(c) {
                nz[j][count[j]] = mu;
                count[j] += 1;
            }
        }
        if count[j] == 0 {
            return;
        }
    }
    // Odometer over all but the last qubit; prod[j] and idx[j] cover qubits < j.
    let mut digit = [0usize; EXPAND_MAX_QUBITS];
    let mut prod = [scale; EXPAND_MAX_QUBITS + 1];
    let mut idx = [0usize; EXPAND_MAX_QUBITS + 1];
    let last = n - 1;
    let mut from = 0;
    loop {
        for l in from..last {
            let mu = nz[l][digit[l]];
            prod[l + 1] = mul(&prod[l], &comps[l][mu]);
            idx[l + 1] = idx[l] * 4 + mu;
        }
        for &mu in &nz[last][..count[last]] {
            visit(idx[last] * 4 + mu, mul(&prod[last], &comps[last][mu]));
        }
        let mut j = last;
        loop {
            if j == 0 {
                return;
            }
            j -= 1;
            digit[j] += 1;
            if digit[j] < count[j] {
                break;
            }
            digit[j] = 0;
        }
        from = j;
    }
}

/// Real-valued [`expand_with`].
pub(crate) fn expand<F: FnMut(usize, f64)>(comps: &[[f64; 4]], scale: f64, visit: &mut F) {
    if scale != 0.0 {
        expand_with(comps, scale, |a, b| a * b, |c| *c == 0.0, visit);
    }
}
