//! Quantum Fisher information of a state under a unitary phase generator, and
//! the Krylov, Taylor, sub-QFI and fidelity-based lower bounds on it.
//!
//! Everything is generic over the real scalar (`f32` or `f64`); the aliases at
//! the crate root fix it to one of them.

#![forbid(unsafe_code)]

pub mod bounds;
pub mod error;
pub mod hankel;
pub mod linalg;
pub mod multicopy;
pub mod pauli;
pub mod qfi;
pub mod scalar;
pub mod states;

pub use bounds::{
    legendre_bound, relative_error, sub_qfi_bound, taylor_bound, taylor_spectral, BoundFamily, BoundValue,
    TaylorRoute,
};
pub use error::{Error, Result};
pub use hankel::{hankel_ldl, HankelLdl, HankelSystem, Wide};
pub use multicopy::{
    build_o, moments_polynomial, mu_coefficients, plan_repetitions, plan_subsample_size, reduced_o_l,
    symmetrize_o, t_k_polynomial, variance_bound, MultiCopyOperator,
};
pub use pauli::{pauli_compose, pauli_decompose, Pauli};
pub use qfi::{
    apply_r, apply_r_inverse, commutator_c, krylov_bound_exact, krylov_bound_exact_with, krylov_hierarchy_exact,
    krylov_projection, moments_exact, moments_superoperator, n_star, proportionality_check, qfi_exact, sld_l,
    weighted_inner, Basis, HermitianOperator, KrylovBound, KrylovData, KrylovHierarchy, KrylovMeasure,
    KrylovOptions, MomentSequence, PrecisionPolicy, Provenance, SolvePrecision,
};
pub use scalar::{CMatrix, CVector, Real};
pub use states::{
    bound_entangled, collective_spin_z, fidelity, ghz_state, haar_pure_state, pseudo_pure, random_density_matrix,
    random_observable,
    spectrum, DensityMatrix, Observable, PureState, Spectrum, StateDescription,
};

pub type DensityMatrix64 = DensityMatrix<f64>;
pub type DensityMatrix32 = DensityMatrix<f32>;
pub type PureState64 = PureState<f64>;
pub type PureState32 = PureState<f32>;
pub type Observable64 = Observable<f64>;
pub type Observable32 = Observable<f32>;
pub type HermitianOperator64 = HermitianOperator<f64>;
pub type HermitianOperator32 = HermitianOperator<f32>;
pub type MomentSequence64 = MomentSequence<f64>;
