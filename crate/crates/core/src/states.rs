//! Validated states and observables, plus the factories used by the experiments.
//!
//! All types are dense and generic over the working precision. Qubit 0 is the
//! leftmost tensor factor (most significant bit of a basis index).

use nalgebra::DVector;
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, dim_for, eigh, hermitian_defect, qubits_for_dim, trace};
use crate::pauli::{pauli_string_matrix, Pauli};
use crate::scalar::{cr, CMatrix, CVector, Real};

/// Normalized state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState<T = f64> {
    n_qubits: usize,
    amplitudes: CVector<T>,
}

impl<T: Real> PureState<T> {
    pub fn new(amplitudes: CVector<T>) -> Result<Self> {
        let n_qubits = qubits_for_dim(amplitudes.len())?;
        dim_for(n_qubits)?;
        let norm = amplitudes.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr());
        if (norm - T::one()).abs() > T::lit(T::VALIDATION_TOL) {
            return Err(Error::Validation(format!(
                "squared norm {} differs from 1",
                norm.as_f64()
            )));
        }
        Ok(Self { n_qubits, amplitudes })
    }

    /// Rescales an arbitrary nonzero vector to unit norm.
    pub fn normalized(amplitudes: CVector<T>) -> Result<Self> {
        let norm = amplitudes.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr()).sqrt();
        if norm <= T::zero() {
            return Err(Error::Validation("zero vector cannot be normalized".into()));
        }
        Self::new(amplitudes.map(|z| z / norm))
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector<T> {
        &self.amplitudes
    }

    pub fn projector(&self) -> CMatrix<T> {
        &self.amplitudes * self.amplitudes.adjoint()
    }
}

/// Density operator: Hermitian, unit trace, positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix<T = f64> {
    n_qubits: usize,
    data: CMatrix<T>,
}

impl<T: Real> DensityMatrix<T> {
    /// Validates Hermiticity, trace and positivity.
    pub fn new(data: CMatrix<T>) -> Result<Self> {
        let rho = Self::new_unchecked_psd(data)?;
        let (vals, _) = eigh(&rho.data);
        let min = vals.last().copied().unwrap_or_else(T::zero);
        if min < -T::lit(T::PSD_TOL) {
            return Err(Error::Validation(format!(
                "minimum eigenvalue {:e} is negative",
                min.as_f64()
            )));
        }
        Ok(rho)
    }

    /// Validates Hermiticity and trace only; used where positivity holds by construction.
    fn new_unchecked_psd(data: CMatrix<T>) -> Result<Self> {
        if data.nrows() != data.ncols() {
            return Err(Error::DimensionMismatch { expected: data.nrows(), found: data.ncols() });
        }
        let n_qubits = qubits_for_dim(data.nrows())?;
        dim_for(n_qubits)?;
        let tol = T::lit(T::VALIDATION_TOL);
        let defect = hermitian_defect(&data);
        if defect > tol {
            return Err(Error::Validation(format!(
                "Hermiticity defect {:e} exceeds tolerance",
                defect.as_f64()
            )));
        }
        let tr = trace(&data);
        if (tr.re - T::one()).abs() > tol || tr.im.abs() > tol {
            return Err(Error::Validation(format!("trace {} differs from 1", tr.re.as_f64())));
        }
        Ok(Self { n_qubits, data })
    }

    pub fn from_pure(psi: &PureState<T>) -> Self {
        Self { n_qubits: psi.n_qubits, data: psi.projector() }
    }

    pub fn maximally_mixed(n_qubits: usize) -> Result<Self> {
        let dim = dim_for(n_qubits)?;
        let w = T::one() / T::from_usize_lossy(dim);
        Ok(Self { n_qubits, data: CMatrix::from_diagonal_element(dim, dim, cr(w)) })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &CMatrix<T> {
        &self.data
    }

    pub fn into_data(self) -> CMatrix<T> {
        self.data
    }

    /// tr(ρ²)
    pub fn purity(&self) -> T {
        linalg::trace_of_product(&self.data, &self.data).re
    }
}

/// Hermitian generator H.
#[derive(Clone, Debug, PartialEq)]
pub struct Observable<T = f64> {
    n_qubits: usize,
    data: CMatrix<T>,
}

impl<T: Real> Observable<T> {
    pub fn new(data: CMatrix<T>) -> Result<Self> {
        if data.nrows() != data.ncols() {
            return Err(Error::DimensionMismatch { expected: data.nrows(), found: data.ncols() });
        }
        let n_qubits = qubits_for_dim(data.nrows())?;
        dim_for(n_qubits)?;
        let scale = linalg::max_abs(&data).max(T::one());
        let defect = hermitian_defect(&data);
        if defect > T::lit(T::VALIDATION_TOL) * scale {
            return Err(Error::Validation(format!(
                "observable is not Hermitian (defect {:e})",
                defect.as_f64()
            )));
        }
        Ok(Self { n_qubits, data })
    }

    pub fn zero(n_qubits: usize) -> Result<Self> {
        let dim = dim_for(n_qubits)?;
        Ok(Self { n_qubits, data: CMatrix::zeros(dim, dim) })
    }

    /// A single Pauli string with a real prefactor.
    pub fn pauli_string(labels: &[Pauli], coefficient: T) -> Result<Self> {
        dim_for(labels.len())?;
        Ok(Self {
            n_qubits: labels.len(),
            data: pauli_string_matrix::<T>(labels).map(|z| z * coefficient),
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &CMatrix<T> {
        &self.data
    }

    /// Whether the operator is diagonal in the computational basis.
    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| i == j || self.data[(i, j)].norm_sqr() == T::zero()))
    }
}

/// Eigen-decomposition of a density matrix with near-zero eigenvalues snapped to 0.
#[derive(Clone, Debug)]
pub struct Spectrum<T = f64> {
    /// Descending.
    pub eigenvalues: Vec<T>,
    /// Columns are the eigenvectors |k⟩.
    pub eigenvectors: CMatrix<T>,
    pub zero_tol: T,
}

impl<T: Real> Spectrum<T> {
    pub fn reconstruct(&self) -> CMatrix<T> {
        let d = CMatrix::from_diagonal(&DVector::from_iterator(
            self.eigenvalues.len(),
            self.eigenvalues.iter().map(|&p| cr(p)),
        ));
        linalg::from_basis(&self.eigenvectors, &d)
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.iter().filter(|&&p| p > T::zero()).count()
    }
}

pub fn ghz_state<T: Real>(n_qubits: usize) -> Result<PureState<T>> {
    let dim = dim_for(n_qubits)?;
    let a = cr(T::lit(std::f64::consts::FRAC_1_SQRT_2));
    let mut v = CVector::<T>::zeros(dim);
    v[0] = a;
    v[dim - 1] = a;
    PureState::new(v)
}

/// Haar-random pure state (normalized complex Gaussian vector).
pub fn haar_pure_state<T: Real, R: Rng + ?Sized>(n_qubits: usize, rng: &mut R) -> Result<PureState<T>> {
    let dim = dim_for(n_qubits)?;
    let v = CVector::<T>::from_fn(dim, |_, _| complex_normal(rng));
    PureState::normalized(v)
}

/// (1−p)|ψ⟩⟨ψ| + p·𝟙/2^N
pub fn pseudo_pure<T: Real>(psi: &PureState<T>, p: T) -> Result<DensityMatrix<T>> {
    if !(p >= T::zero() && p <= T::one()) {
        return Err(Error::Domain(format!("mixing weight p = {} outside [0, 1]", p.as_f64())));
    }
    let dim = psi.dim();
    let mut data = psi.projector().map(|z| z * (T::one() - p));
    let w = p / T::from_usize_lossy(dim);
    for i in 0..dim {
        data[(i, i)] += cr(w);
    }
    DensityMatrix::new_unchecked_psd(data)
}

/// The Hamming-weight graded bound entangled family built from (|i⟩ ± |ī⟩)/√2.
pub fn bound_entangled<T: Real>(n_qubits: usize, k: usize) -> Result<DensityMatrix<T>> {
    if n_qubits < 2 {
        return Err(Error::Domain(format!("need N >= 2, got {n_qubits}")));
    }
    if k < 1 || k > n_qubits / 2 {
        return Err(Error::Domain(format!("k = {k} outside 1..={}", n_qubits / 2)));
    }
    let dim = dim_for(n_qubits)?;
    let norm: u64 = (0..=k).map(|i| binomial(n_qubits, i)).sum();
    let lambda = T::one() / T::lit(norm as f64);
    let half = T::lit(0.5);
    let mask = dim - 1;
    let mut data = CMatrix::<T>::zeros(dim, dim);
    // |φ±⟩⟨φ±| for φ± = (|i⟩ ± |ī⟩)/√2 has entries 1/2 on (i,i), (ī,ī) and ±1/2 on (i,ī), (ī,i).
    let mut add_pair = |i: usize, sign: T, weight: T| {
        let j = i ^ mask;
        let w = weight * half;
        data[(i, i)] += cr(w);
        data[(j, j)] += cr(w);
        data[(i, j)] += cr(sign * w);
        data[(j, i)] += cr(sign * w);
    };
    for i in 0..dim {
        let weight = i.count_ones() as usize;
        if weight < k {
            add_pair(i, T::one(), lambda);
        } else if weight == k {
            add_pair(i, T::one(), lambda * half);
            add_pair(i, -T::one(), lambda * half);
        }
    }
    DensityMatrix::new_unchecked_psd(data)
}

/// ½ Σ_i σ_z^(i): diagonal with (#0(s) − #1(s))/2.
pub fn collective_spin_z<T: Real>(n_qubits: usize) -> Result<Observable<T>> {
    let dim = dim_for(n_qubits)?;
    let diag = DVector::from_fn(dim, |s, _| {
        let ones = s.count_ones() as f64;
        cr(T::lit((n_qubits as f64 - 2.0 * ones) / 2.0))
    });
    Ok(Observable { n_qubits, data: CMatrix::from_diagonal(&diag) })
}

/// ρ = GG†/tr(GG†) with G a 2^N × rank standard complex Gaussian matrix.
pub fn random_density_matrix<T: Real>(n_qubits: usize, rank: usize, seed: u64) -> Result<DensityMatrix<T>> {
    let dim = dim_for(n_qubits)?;
    if rank == 0 || rank > dim {
        return Err(Error::Domain(format!("rank {rank} outside 1..={dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = CMatrix::<T>::from_fn(dim, rank, |_, _| complex_normal(&mut rng));
    let gg = &g * g.adjoint();
    let tr = trace(&gg).re;
    let data = linalg::hermitize(&gg.map(|z| z / tr));
    DensityMatrix::new_unchecked_psd(data)
}

/// H = (A + A†)/2 with A standard complex Gaussian (GUE up to scale).
pub fn random_observable<T: Real>(n_qubits: usize, seed: u64) -> Result<Observable<T>> {
    let dim = dim_for(n_qubits)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = CMatrix::<T>::from_fn(dim, dim, |_, _| complex_normal(&mut rng));
    Ok(Observable { n_qubits, data: linalg::hermitize(&a) })
}

/// ⟨ψ|ρ|ψ⟩
pub fn fidelity<T: Real>(rho: &DensityMatrix<T>, psi: &PureState<T>) -> Result<T> {
    if rho.dim() != psi.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: psi.dim() });
    }
    let v = psi.amplitudes();
    let rv = rho.data() * v;
    Ok(v.dotc(&rv).re)
}

/// Eigen-decomposition with eigenvalues below `zero_tol` set to exactly 0 and
/// the remainder renormalized to unit sum.
pub fn spectrum<T: Real>(rho: &DensityMatrix<T>, zero_tol: T) -> Result<Spectrum<T>> {
    if zero_tol < T::zero() {
        return Err(Error::Domain("zero_tol must be nonnegative".into()));
    }
    let (mut vals, vecs) = eigh(rho.data());
    for p in vals.iter_mut() {
        if *p < zero_tol {
            *p = T::zero();
        }
    }
    let total = vals.iter().fold(T::zero(), |a, &b| a + b);
    if total <= T::zero() {
        return Err(Error::Validation("density matrix has no positive eigenvalue".into()));
    }
    for p in vals.iter_mut() {
        *p /= total;
    }
    Ok(Spectrum { eigenvalues: vals, eigenvectors: vecs, zero_tol })
}

pub(crate) fn complex_normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Complex<T> {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(T::lit(re), T::lit(im))
}

pub(crate) fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

/// Serializable description of a state, as used in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateDescription {
    Ghz {
        n_qubits: usize,
    },
    /// Mixture of the GHZ state with white noise.
    PseudoPure {
        n_qubits: usize,
        p: f64,
    },
    BoundEntangled {
        n_qubits: usize,
        k: usize,
    },
    Random {
        n_qubits: usize,
        #[serde(default)]
        rank: Option<usize>,
        seed: u64,
    },
}

impl StateDescription {
    pub fn n_qubits(&self) -> usize {
        match *self {
            StateDescription::Ghz { n_qubits }
            | StateDescription::PseudoPure { n_qubits, .. }
            | StateDescription::BoundEntangled { n_qubits, .. }
            | StateDescription::Random { n_qubits, .. } => n_qubits,
        }
    }

    pub fn build<T: Real>(&self) -> Result<DensityMatrix<T>> {
        match *self {
            StateDescription::Ghz { n_qubits } => Ok(DensityMatrix::from_pure(&ghz_state(n_qubits)?)),
            StateDescription::PseudoPure { n_qubits, p } => pseudo_pure(&ghz_state(n_qubits)?, T::lit(p)),
            StateDescription::BoundEntangled { n_qubits, k } => bound_entangled(n_qubits, k),
            StateDescription::Random { n_qubits, rank, seed } => {
                random_density_matrix(n_qubits, rank.unwrap_or(1 << n_qubits), seed)
            }
        }
    }
}
