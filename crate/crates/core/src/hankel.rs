//! Hankel moment systems A_kl = T_{k+l+1}, b_k = T_k and their solution.
//!
//! The LDLᵀ factorization is generic over [`HankelField`] so the same code runs
//! in working precision and in the extended binary floating point [`Wide`].
//! One factorization of the largest system yields every lower order at once:
//! with y = L⁻¹b, the order-m value bᵀA⁻¹b equals Σ_{k<m} y_k²/D_k.

use std::ops::{Add, Div, Mul, Sub};

use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Arbitrary-precision binary float with round-half-even.
pub type Wide = FBig<HalfEven, 2>;

/// Field operations needed by the factorization.
pub trait HankelField:
    Clone + PartialOrd + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self>
{
    /// Zero carrying the same precision as `self`.
    fn zero_like(&self) -> Self;
    fn to_f64_lossy(&self) -> f64;
}

impl HankelField for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }
    fn to_f64_lossy(&self) -> f64 {
        *self
    }
}

impl HankelField for f32 {
    fn zero_like(&self) -> Self {
        0.0
    }
    fn to_f64_lossy(&self) -> f64 {
        *self as f64
    }
}

impl HankelField for Wide {
    fn zero_like(&self) -> Self {
        Wide::ZERO.with_precision(self.precision()).value()
    }
    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().value()
    }
}

/// Converts a finite double to a [`Wide`] with `bits` of precision (exactly).
pub fn wide(x: f64, bits: usize) -> Wide {
    Wide::try_from(x).expect("finite value").with_precision(bits).value()
}

/// LDLᵀ factorization of a Hankel system together with y = L⁻¹b.
#[derive(Clone, Debug)]
pub struct HankelLdl<F> {
    /// Positive pivots D_0 … D_{m-1} of the factorized leading block.
    pub pivots: Vec<F>,
    /// y = L⁻¹ b restricted to the factorized block.
    pub y: Vec<F>,
    /// Index of the first nonpositive pivot, if the factorization broke down.
    pub breakdown: Option<usize>,
}

impl<F: HankelField> HankelLdl<F> {
    /// Number of successfully factorized orders.
    pub fn order(&self) -> usize {
        self.pivots.len()
    }

    /// Increments y_k²/D_k, each strictly positive unless y_k vanishes.
    pub fn increments(&self) -> Vec<F> {
        self.y
            .iter()
            .zip(&self.pivots)
            .map(|(y, d)| y.clone() * y.clone() / d.clone())
            .collect()
    }

    /// bᵀA⁻¹b for orders 1 … order().
    pub fn bounds(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(self.pivots.len());
        let mut acc: Option<F> = None;
        for inc in self.increments() {
            let next = match acc {
                None => inc,
                Some(a) => a + inc,
            };
            out.push(next.clone());
            acc = Some(next);
        }
        out
    }
}

/// Factorizes the order-`n` Hankel system built from `moments` (needs ≥ 2n values).
///
/// Stops at the first pivot that is not strictly positive and records it.
pub fn hankel_ldl<F: HankelField>(moments: &[F], n: usize) -> Result<HankelLdl<F>> {
    if n == 0 || moments.len() < 2 * n {
        return Err(Error::InsufficientData(format!(
            "order {n} needs {} moments, got {}",
            2 * n,
            moments.len()
        )));
    }
    let zero = moments[0].zero_like();
    let a = |i: usize, j: usize| moments[i + j + 1].clone();
    // l[i][j] for j < i, row-major lower triangle.
    let mut l: Vec<Vec<F>> = Vec::with_capacity(n);
    let mut pivots: Vec<F> = Vec::with_capacity(n);
    let mut y: Vec<F> = Vec::with_capacity(n);
    for i in 0..n {
        let mut row: Vec<F> = Vec::with_capacity(i);
        for j in 0..i {
            let mut s = a(i, j);
            for k in 0..j {
                s = s - row[k].clone() * l[j][k].clone() * pivots[k].clone();
            }
            row.push(s / pivots[j].clone());
        }
        let mut d = a(i, i);
        for k in 0..i {
            d = d - row[k].clone() * row[k].clone() * pivots[k].clone();
        }
        if !(d > zero) {
            return Ok(HankelLdl { pivots, y, breakdown: Some(i) });
        }
        let mut yi = moments[i].clone();
        for k in 0..i {
            yi = yi - row[k].clone() * y[k].clone();
        }
        l.push(row);
        pivots.push(d);
        y.push(yi);
    }
    Ok(HankelLdl { pivots, y, breakdown: None })
}

/// Working-precision Hankel system with spectral diagnostics.
#[derive(Clone, Debug)]
pub struct HankelSystem<T: Real> {
    pub a: DMatrix<T>,
    pub b: DVector<T>,
    /// λ_max/λ_min of A (infinite when A is not positive definite).
    pub condition_number: f64,
    pub min_eigenvalue: T,
    pub clipped: bool,
}

impl<T: Real> HankelSystem<T> {
    pub fn from_moments(moments: &[T], n: usize) -> Result<Self> {
        if n == 0 || moments.len() < 2 * n {
            return Err(Error::InsufficientData(format!(
                "order {n} needs {} moments, got {}",
                2 * n,
                moments.len()
            )));
        }
        let a = DMatrix::from_fn(n, n, |i, j| moments[i + j + 1]);
        let b = DVector::from_fn(n, |i, _| moments[i]);
        let eig = SymmetricEigen::new(a.clone());
        let (lo, hi) = extremes(eig.eigenvalues.as_slice());
        let condition_number = if lo > T::zero() { (hi / lo).as_f64() } else { f64::INFINITY };
        Ok(Self { a, b, condition_number, min_eigenvalue: lo, clipped: false })
    }

    pub fn order(&self) -> usize {
        self.b.len()
    }

    /// Condition number after symmetric diagonal (Jacobi) scaling, which
    /// governs the accuracy of a Cholesky solve.
    pub fn scaled_condition_number(&self) -> f64 {
        let n = self.order();
        if (0..n).any(|i| self.a[(i, i)] <= T::zero()) {
            return f64::INFINITY;
        }
        let s: Vec<T> = (0..n).map(|i| T::one() / self.a[(i, i)].sqrt()).collect();
        let scaled = DMatrix::from_fn(n, n, |i, j| self.a[(i, j)] * s[i] * s[j]);
        let eig = SymmetricEigen::new(scaled);
        let (lo, hi) = extremes(eig.eigenvalues.as_slice());
        if lo > T::zero() {
            (hi / lo).as_f64()
        } else {
            f64::INFINITY
        }
    }

    /// bᵀA⁻¹b by Cholesky, `None` when A is not numerically positive definite.
    pub fn solve_spd(&self) -> Option<T> {
        let chol = self.a.clone().cholesky()?;
        let x = chol.solve(&self.b);
        Some(self.b.dot(&x))
    }
}

fn extremes<T: Real>(vals: &[T]) -> (T, T) {
    let mut lo = vals[0];
    let mut hi = vals[0];
    for &v in vals {
        if v < lo {
            lo = v;
        }
        if v > hi {
            hi = v;
        }
    }
    (lo, hi)
}
