//! Real scalar abstraction.
//!
//! Everything that touches dense complex matrices is generic over [`Real`],
//! implemented for `f64` and `f32`. Tolerances that depend on the working
//! precision live on the trait so that validation thresholds scale with it.

use nalgebra::{DMatrix, DVector, RealField};
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};

pub type CMatrix<T> = DMatrix<Complex<T>>;
pub type CVector<T> = DVector<Complex<T>>;

pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Hermiticity / trace / normalization tolerance for validated types.
    const VALIDATION_TOL: f64;
    /// Eigenvalues below this are treated as exactly zero.
    const ZERO_TOL: f64;
    /// Accepted relative accuracy of a working-precision Hankel solve before
    /// the exact path escalates to extended precision.
    const SOLVE_ACCURACY: f64;
    /// Smallest PSD violation tolerated in a density matrix.
    const PSD_TOL: f64;

    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::lit(n as f64)
    }
}

impl Real for f64 {
    const VALIDATION_TOL: f64 = 1e-12;
    const ZERO_TOL: f64 = 1e-10;
    const SOLVE_ACCURACY: f64 = 1e-10;
    const PSD_TOL: f64 = 1e-10;
}

impl Real for f32 {
    const VALIDATION_TOL: f64 = 1e-5;
    const ZERO_TOL: f64 = 1e-5;
    const SOLVE_ACCURACY: f64 = 1e-4;
    const PSD_TOL: f64 = 1e-5;
}

#[inline]
pub(crate) fn c<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

#[inline]
pub(crate) fn cr<T: Real>(re: T) -> Complex<T> {
    Complex::new(re, T::zero())
}
