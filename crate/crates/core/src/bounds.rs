//! Competing polynomial lower bounds on the QFI and the relative-error merit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::trace_of_product;
use crate::qfi::SpectralFrame;
use crate::scalar::{CMatrix, Real};
use crate::states::{DensityMatrix, Observable};

/// Which family a bound belongs to; the order is carried for the hierarchies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family", content = "order")]
pub enum BoundFamily {
    Legendre,
    SubQfi,
    Taylor(usize),
    Krylov(usize),
}

impl BoundFamily {
    pub fn order(&self) -> Option<usize> {
        match *self {
            BoundFamily::Taylor(n) | BoundFamily::Krylov(n) => Some(n),
            _ => None,
        }
    }

    /// Short column label, e.g. `tay2`.
    pub fn label(&self) -> String {
        match *self {
            BoundFamily::Legendre => "leg".into(),
            BoundFamily::SubQfi => "sub".into(),
            BoundFamily::Taylor(n) => format!("tay{n}"),
            BoundFamily::Krylov(n) => format!("kry{n}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundValue<T = f64> {
    pub value: T,
    pub family: BoundFamily,
}

/// N²(1 − 2f)² for f > 1/2, else 0.
pub fn legendre_bound<T: Real>(f_ghz: T, n_qubits: usize) -> Result<BoundValue<T>> {
    if !(f_ghz >= T::zero() && f_ghz <= T::one()) {
        return Err(Error::Domain(format!("fidelity {} outside [0, 1]", f_ghz.as_f64())));
    }
    if n_qubits == 0 {
        return Err(Error::InvalidDimension("N must be positive".into()));
    }
    let half = T::lit(0.5);
    let value = if f_ghz > half {
        let n = T::from_usize_lossy(n_qubits);
        let d = T::one() - T::lit(2.0) * f_ghz;
        n * n * d * d
    } else {
        T::zero()
    };
    Ok(BoundValue { value, family: BoundFamily::Legendre })
}

/// −2 tr([ρ, H]²)
pub fn sub_qfi_bound<T: Real>(rho: &DensityMatrix<T>, h: &Observable<T>) -> Result<BoundValue<T>> {
    if rho.dim() != h.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: h.dim() });
    }
    let r = rho.data();
    let hd = h.data();
    let comm = r * hd - hd * r;
    let value = -T::lit(2.0) * trace_of_product(&comm, &comm).re;
    Ok(BoundValue { value, family: BoundFamily::SubQfi })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaylorRoute {
    /// Reduction to the eigenbasis of ρ.
    Spectral,
    /// Literal evaluation on the two-copy space (N ≤ 6).
    Doubled,
}

/// Largest N for the two-copy Taylor route.
pub const DOUBLED_ROUTE_MAX_QUBITS: usize = 6;

/// Order-n truncation of the geometric series of 1/(p_k + p_l).
pub fn taylor_bound<T: Real>(rho: &DensityMatrix<T>, h: &Observable<T>, n: usize, route: TaylorRoute) -> Result<BoundValue<T>> {
    if rho.dim() != h.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: h.dim() });
    }
    let value = match route {
        TaylorRoute::Spectral => taylor_spectral(rho, h, &[n])?[0],
        TaylorRoute::Doubled => taylor_doubled(rho, h, n)?,
    };
    Ok(BoundValue { value, family: BoundFamily::Taylor(n) })
}

/// Spectral Taylor bounds for several orders sharing one eigen-decomposition.
pub fn taylor_spectral<T: Real>(rho: &DensityMatrix<T>, h: &Observable<T>, orders: &[usize]) -> Result<Vec<T>> {
    let frame = SpectralFrame::new(rho)?;
    let p = frame.eigenvalues();
    let ht = frame.to_eigenbasis(h.data());
    let max_order = orders.iter().copied().max().unwrap_or(0);
    let mut out = vec![T::zero(); orders.len()];
    let four = T::lit(4.0);
    for a in 0..p.len() {
        for b in (a + 1)..p.len() {
            let d = p[a] - p[b];
            let base = four * d * d * ht[(a, b)].norm_sqr();
            if base == T::zero() {
                continue;
            }
            let q = T::one() - p[a] - p[b];
            // partial[m] = Σ_{j≤m} q^j
            let mut partial = T::zero();
            let mut power = T::one();
            let mut sums = Vec::with_capacity(max_order + 1);
            for _ in 0..=max_order {
                partial += power;
                sums.push(partial);
                power *= q;
            }
            for (slot, &n) in out.iter_mut().zip(orders) {
                *slot += base * sums[n];
            }
        }
    }
    Ok(out)
}

/// 2 tr( Σ_{m≤n} (ρ⊗𝟙 − 𝟙⊗ρ)² (𝟙⊗𝟙 − ρ⊗𝟙 − 𝟙⊗ρ)^m S (H⊗H) ) on the two-copy space.
fn taylor_doubled<T: Real>(rho: &DensityMatrix<T>, h: &Observable<T>, n: usize) -> Result<T> {
    if rho.n_qubits() > DOUBLED_ROUTE_MAX_QUBITS {
        return Err(Error::Resource(format!(
            "two-copy Taylor route is limited to N <= {DOUBLED_ROUTE_MAX_QUBITS}"
        )));
    }
    let d = rho.dim();
    let id = CMatrix::<T>::identity(d, d);
    let r1 = rho.data().kronecker(&id);
    let r2 = id.kronecker(rho.data());
    let diff = &r1 - &r2;
    let diff2 = &diff * &diff;
    let e = CMatrix::<T>::identity(d * d, d * d) - &r1 - &r2;
    let hh = h.data().kronecker(h.data());
    // S (H⊗H): row (i,j) of S(H⊗H) is row (j,i) of H⊗H.
    let shh = CMatrix::<T>::from_fn(d * d, d * d, |row, col| {
        let (i, j) = (row / d, row % d);
        hh[(j * d + i, col)]
    });
    let mut total = T::zero();
    let mut term = diff2;
    for m in 0..=n {
        total += trace_of_product(&term, &shh).re;
        if m < n {
            term = &term * &e;
        }
    }
    Ok(T::lit(2.0) * total)
}

/// |B − F_Q| / F_Q
pub fn relative_error<T: Real>(bound: T, f_q: T) -> Result<T> {
    if !(f_q > T::zero()) {
        return Err(Error::Domain(format!("reference QFI {} must be positive", f_q.as_f64())));
    }
    Ok((bound - f_q).abs() / f_q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qfi::{moments_exact, qfi_exact};
    use crate::states::{collective_spin_z, ghz_state, random_density_matrix, DensityMatrix};

    #[test]
    fn legendre_examples() {
        assert_eq!(legendre_bound(1.0, 3).unwrap().value, 9.0);
        assert_eq!(legendre_bound(0.5, 3).unwrap().value, 0.0);
        assert_eq!(legendre_bound(0.75, 4).unwrap().value, 4.0);
        assert!(legendre_bound(1.2, 2).is_err());
    }

    #[test]
    fn relative_error_examples() {
        assert_eq!(relative_error(3.0, 3.0).unwrap(), 0.0);
        assert_eq!(relative_error(0.0, 3.0).unwrap(), 1.0);
        assert_eq!(relative_error(1.5, 3.0).unwrap(), 0.5);
        assert!(relative_error(1.0, 0.0).is_err());
    }

    #[test]
    fn sub_qfi_on_pure_and_mixed() {
        let rho = DensityMatrix::from_pure(&ghz_state::<f64>(3).unwrap());
        let h = collective_spin_z::<f64>(3).unwrap();
        assert!((sub_qfi_bound(&rho, &h).unwrap().value - 9.0).abs() < 1e-12);
        let id = DensityMatrix::<f64>::maximally_mixed(3).unwrap();
        assert_eq!(sub_qfi_bound(&id, &h).unwrap().value, 0.0);
    }

    #[test]
    fn taylor_zero_order_is_twice_t0() {
        let rho = random_density_matrix::<f64>(2, 4, 21).unwrap();
        let h = collective_spin_z::<f64>(2).unwrap();
        let t = moments_exact(&rho, &h, 1).unwrap();
        let b0 = taylor_bound(&rho, &h, 0, TaylorRoute::Spectral).unwrap().value;
        assert!((b0 - 2.0 * t.values[0]).abs() < 1e-12);
    }

    #[test]
    fn taylor_routes_agree() {
        for seed in 0..5 {
            let rho = random_density_matrix::<f64>(2, 4, seed).unwrap();
            let h = collective_spin_z::<f64>(2).unwrap();
            for n in 0..=5 {
                let s = taylor_bound(&rho, &h, n, TaylorRoute::Spectral).unwrap().value;
                let d = taylor_bound(&rho, &h, n, TaylorRoute::Doubled).unwrap().value;
                assert!((s - d).abs() <= 1e-9 * s.abs().max(1e-300), "n={n}: {s} vs {d}");
            }
        }
    }

    #[test]
    fn taylor_pure_state_is_exact() {
        let rho = DensityMatrix::from_pure(&ghz_state::<f64>(2).unwrap());
        let h = collective_spin_z::<f64>(2).unwrap();
        let b0 = taylor_bound(&rho, &h, 0, TaylorRoute::Spectral).unwrap().value;
        assert!((b0 - qfi_exact(&rho, &h).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn doubled_route_cap() {
        let rho = DensityMatrix::<f64>::maximally_mixed(7).unwrap();
        let h = collective_spin_z::<f64>(7).unwrap();
        assert!(matches!(taylor_bound(&rho, &h, 1, TaylorRoute::Doubled), Err(Error::Resource(_))));
    }
}
