//! Exact quantum Fisher information and the Krylov hierarchy of lower bounds.
//!
//! In the eigenbasis {|k⟩, p_k} of ρ the superoperator R_ρ(X) = (ρX + Xρ)/2 is
//! diagonal with entries (p_k + p_l)/2. The Krylov generators R_ρ^j(C),
//! C = i[ρ, H], therefore only see the discrete measure with atoms
//! x_ab = (p_a + p_b)/2 and weights w_ab = (p_a − p_b)²|H_ab|², so that
//!
//! * T_j = Σ w x^j are the moments,
//! * F_Q = Σ w / x,
//! * n* is the number of distinct atoms carrying weight,
//! * B_n = bᵀA⁻¹b is the n-point Gauss-type approximation of Σ w / x.
//!
//! Late Hankel pivots of a generic state are many orders of magnitude below the
//! leading ones, so the exact hierarchy is solved in extended precision when the
//! working-precision system is too ill-conditioned to resolve it.

use dashu_float::ops::EstimatedLog2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hankel::{hankel_ldl, wide, HankelField, HankelLdl, HankelSystem, Wide};
use crate::linalg::{self, frobenius_norm, from_basis, hermitian_defect, to_basis, trace_of_product};
use crate::scalar::{cr, CMatrix, Real};
use crate::states::{spectrum, DensityMatrix, Observable, Spectrum};

/// Frobenius norm under which i[ρ, H] counts as zero.
pub const COMMUTATOR_TOL: f64 = 1e-12;
/// Default relative tolerance separating distinct Krylov atoms.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;
const MAX_EXTENDED_BITS: usize = 1 << 15;

/// Basis in which a [`HermitianOperator`] is stored.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    Computational,
    /// Eigenbasis of ρ; the doubly-null block is then exactly zero.
    RhoEigenbasis,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator<T = f64> {
    data: CMatrix<T>,
    basis: Basis,
}

impl<T: Real> HermitianOperator<T> {
    pub fn new(data: CMatrix<T>) -> Result<Self> {
        if data.nrows() != data.ncols() {
            return Err(Error::DimensionMismatch { expected: data.nrows(), found: data.ncols() });
        }
        let scale = linalg::max_abs(&data).max(T::one());
        if hermitian_defect(&data) > T::lit(T::VALIDATION_TOL) * scale {
            return Err(Error::Validation("operator is not Hermitian".into()));
        }
        Ok(Self { data, basis: Basis::Computational })
    }

    pub(crate) fn from_parts(data: CMatrix<T>, basis: Basis) -> Self {
        Self { data, basis }
    }

    pub fn identity(dim: usize) -> Self {
        Self { data: CMatrix::identity(dim, dim), basis: Basis::Computational }
    }

    pub fn data(&self) -> &CMatrix<T> {
        &self.data
    }

    pub fn into_data(self) -> CMatrix<T> {
        self.data
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn frobenius_norm(&self) -> T {
        frobenius_norm(&self.data)
    }
}

impl<T: Real> From<Observable<T>> for HermitianOperator<T> {
    fn from(h: Observable<T>) -> Self {
        Self { data: h.data().clone(), basis: Basis::Computational }
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { expected: a, found: b });
    }
    Ok(())
}

/// i(ρH − Hρ), rejecting the commuting case.
pub fn commutator_c<T: Real>(rho: &DensityMatrix<T>, h: &Observable<T>) -> Result<HermitianOperator<T>> {
    check_dims(rho.dim(), h.dim())?;
    let r = rho.data();
    let hd = h.data();
    let comm = r * hd - hd * r;
    let data = comm.map(|z| num_complex::Complex::new(-z.im, z.re));
    let norm = frobenius_norm(&data);
    if norm <= T::lit(COMMUTATOR_TOL) {
        return Err(Error::DegenerateCommutator { norm: norm.as_f64() });
    }
    Ok(HermitianOperator::from_parts(data, Basis::Computational))
}

/// (ρX + Xρ)/2
pub fn apply_r<T: Real>(rho: &DensityMatrix<T>, x: &HermitianOperator<T>) -> Result<HermitianOperator<T>> {
    check_dims(rho.dim(), x.dim())?;
    Ok(HermitianOperator::from_parts(apply_r_dense(rho.data(), x.data()), x.basis))
}

fn apply_r_dense<T: Real>(rho: &CMatrix<T>, x: &CMatrix<T>) -> CMatrix<T> {
    let half = T::lit(0.5);
    (rho * x + x * rho).map(|z| z * half)
}

/// Pseudoinverse of R_ρ on the subspace 𝒳, after projecting the input onto 𝒳.
pub fn apply_r_inverse<T: Real>(rho: &DensityMatrix<T>, x: &HermitianOperator<T>) -> Result<HermitianOperator<T>> {
    check_dims(rho.dim(), x.dim())?;
    let frame = SpectralFrame::new(rho)?;
    Ok(frame.apply_r_inverse(x.data()))
}

/// L = R_ρ⁻¹(i[ρ, H])
pub fn sld_l<T: Real>(rho: &DensityMatrix<T>, h: &Observable<T>) -> Result<HermitianOperator<T>> {
    let c = commutator_c(rho, h)?;
    apply_r_inverse(rho, &c)
}

/// ⟨X, Y⟩_ρ = tr[ρ(XY + YX)/2]
pub fn weighted_inner<T: Real>(
    rho: &DensityMatrix<T>,
    x: &HermitianOperator<T>,
    y: &HermitianOperator<T>,
) -> Result<T> {
    check_dims(rho.dim(), x.dim())?;
    check_dims(rho.dim(), y.dim())?;
    Ok(weighted_inner_dense(rho.data(), x.data(), y.data()))
}

fn weighted_inner_dense<T: Real>(rho: &CMatrix<T>, x: &CMatrix<T>, y: &CMatrix<T>) -> T {
    // For Hermitian X, Y: tr(ρYX) = conj tr(ρXY), so the symmetrized trace is Re tr(ρXY).
    let rx = rho * x;
    trace_of_product(&rx, y).re
}

/// The eigenbasis of ρ with snapped eigenvalues, reused across superoperator calls.
#[derive(Clone, Debug)]
pub struct SpectralFrame<T = f64> {
    pub spectrum: Spectrum<T>,
}

impl<T: Real> SpectralFrame<T> {
    pub fn new(rho: &DensityMatrix<T>) -> Result<Self> {
        Ok(Self { spectrum: spectrum(rho, T::lit(T::ZERO_TOL))? })
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.spectrum.eigenvalues
    }

    pub fn to_eigenbasis(&self, x: &CMatrix<T>) -> CMatrix<T> {
        to_basis(&self.spectrum.eigenvectors, x)
    }

    /// Projects onto 𝒳 and applies 2/(p_k + p_l) entrywise in the eigenbasis.
    pub fn apply_r_inverse(&self, x: &CMatrix<T>) -> HermitianOperator<T> {
        let p = &self.spectrum.eigenvalues;
        let two = T::lit(2.0);
        let mut xt = self.to_eigenbasis(x);
        for k in 0..p.len() {
            for l in 0..p.len() {
                let s = p[k] + p[l];
                xt[(k, l)] = if s > T::zero() { xt[(k, l)] * (two / s) } else { cr(T::zero()) };
            }
        }
        HermitianOperator::from_parts(from_basis(&self.spectrum.eigenvectors, &xt), Basis::Computational)
    }
}

/// F_Q = 2 Σ_{p_k+p_l>0} (p_k − p_l)²/(p_k + p_l) |⟨k|H|l⟩|²
pub fn qfi_exact<T: Real>(rho: &DensityMatrix<T>, h: &Observable<T>) -> Result<T> {
    check_dims(rho.dim(), h.dim())?;
    let frame = SpectralFrame::new(rho)?;
    let p = frame.eigenvalues();
    let ht = frame.to_eigenbasis(h.data());
    let four = T::lit(4.0);
    let mut f = T::zero();
    for a in 0..p.len() {
        for b in (a + 1)..p.len() {
            let s = p[a] + p[b];
            if s > T::zero() {
                let d = p[a] - p[b];
                f += four * d * d / s * ht[(a, b)].norm_sqr();
            }
        }
    }
    Ok(f)
}

/// Origin of a moment sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    Estimated,
}

/// T_0 … T_{m−1}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSequence<T = f64> {
    pub values: Vec<T>,
    pub provenance: Provenance,
}

impl<T: Real> MomentSequence<T> {
    pub fn exact(values: Vec<T>) -> Self {
        Self { values, provenance: Provenance::Exact }
    }

    pub fn estimated(values: Vec<T>) -> Self {
        Self { values, provenance: Provenance::Estimated }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn hankel(&self, n: usize) -> Result<HankelSystem<T>> {
        HankelSystem::from_moments(&self.values, n)
    }
}

/// Spectral moments T_k = Σ_{p_a+p_b>0} ((p_a+p_b)/2)^k (p_a−p_b)² |H_ab|², k < m.
pub fn moments_exact<T: Real>(rho: &DensityMatrix<T>, h: &Observable<T>, m: usize) -> Result<MomentSequence<T>> {
    if m == 0 {
        return Err(Error::Domain("need at least one moment".into()));
    }
    commutator_c(rho, h)?;
    let frame = SpectralFrame::new(rho)?;
    let p = frame.eigenvalues();
    let ht = frame.to_eigenbasis(h.data());
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let mut values = vec![T::zero(); m];
    for a in 0..p.len() {
        for b in (a + 1)..p.len() {
            let x = (p[a] + p[b]) * half;
            if x <= T::zero() {
                continue;
            }
            let d = p[a] - p[b];
            let mut term = two * d * d * ht[(a, b)].norm_sqr();
            for v in values.iter_mut() {
                *v += term;
                term *= x;
            }
        }
    }
    Ok(MomentSequence::exact(values))
}

/// T_k = tr(C R_ρ^k(C)) by repeated dense application of R_ρ.
pub fn moments_superoperator<T: Real>(
    rho: &DensityMatrix<T>,
    h: &Observable<T>,
    m: usize,
) -> Result<MomentSequence<T>> {
    let c = commutator_c(rho, h)?;
    let mut g = c.data().clone();
    let mut values = Vec::with_capacity(m);
    for _ in 0..m {
        values.push(trace_of_product(c.data(), &g).re);
        g = apply_r_dense(rho.data(), &g);
    }
    Ok(MomentSequence::exact(values))
}

/// The discrete measure behind the Krylov hierarchy: merged atoms (x, w),
/// sorted by x.
#[derive(Clone, Debug)]
pub struct KrylovMeasure<T = f64> {
    pub atoms: Vec<(T, T)>,
    pub rank_tol: T,
}

impl<T: Real> KrylovMeasure<T> {
    /// Eigenvalues closer than the zero threshold are treated as one degenerate
    /// level; atoms whose weight is below rank_tol² of the total are dropped and
    /// atoms closer than rank_tol·max(x) are merged.
    pub fn new(rho: &DensityMatrix<T>, h: &Observable<T>, rank_tol: T) -> Result<Self> {
        check_dims(rho.dim(), h.dim())?;
        if !(rank_tol > T::zero()) {
            return Err(Error::Domain("rank_tol must be positive".into()));
        }
        let frame = SpectralFrame::new(rho)?;
        let p = cluster_levels(frame.eigenvalues(), T::lit(T::ZERO_TOL));
        let ht = frame.to_eigenbasis(h.data());
        let half = T::lit(0.5);
        let two = T::lit(2.0);
        let mut raw = Vec::new();
        let mut total = T::zero();
        for a in 0..p.len() {
            for b in (a + 1)..p.len() {
                let d = p[a] - p[b];
                let x = (p[a] + p[b]) * half;
                if d == T::zero() || x <= T::zero() {
                    continue;
                }
                let w = two * d * d * ht[(a, b)].norm_sqr();
                total += w;
                raw.push((x, w));
            }
        }
        if total.sqrt() <= T::lit(COMMUTATOR_TOL) {
            return Err(Error::DegenerateCommutator { norm: total.sqrt().as_f64() });
        }
        let cutoff = rank_tol * rank_tol * total;
        raw.retain(|&(_, w)| w > cutoff);
        raw.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let x_max = raw.last().map(|a| a.0).unwrap_or_else(T::one);
        let gap = rank_tol * x_max;
        let mut atoms: Vec<(T, T)> = Vec::new();
        // Each cluster keeps the weight-averaged position; consecutive gaps decide membership.
        let mut last_x = None;
        for (x, w) in raw {
            match (atoms.last_mut(), last_x) {
                (Some((cx, cw)), Some(prev)) if x - prev <= gap => {
                    let nw = *cw + w;
                    *cx = (*cx * *cw + x * w) / nw;
                    *cw = nw;
                }
                _ => atoms.push((x, w)),
            }
            last_x = Some(x);
        }
        Ok(Self { atoms, rank_tol })
    }

    /// n*: the number of distinct atoms.
    pub fn n_star(&self) -> usize {
        self.atoms.len()
    }

    pub fn moments(&self, m: usize) -> Vec<T> {
        let mut out = vec![T::zero(); m];
        for &(x, w) in &self.atoms {
            let mut term = w;
            for v in out.iter_mut() {
                *v += term;
                term *= x;
            }
        }
        out
    }

    /// Σ w / x, which equals F_Q up to the dropped weights.
    pub fn inverse_moment(&self) -> T {
        self.atoms.iter().fold(T::zero(), |acc, &(x, w)| acc + w / x)
    }

    fn atoms_f64(&self) -> Vec<(f64, f64)> {
        self.atoms.iter().map(|&(x, w)| (x.as_f64(), w.as_f64())).collect()
    }
}

/// Replaces runs of eigenvalues (descending) separated by at most `tol` by their mean.
fn cluster_levels<T: Real>(p: &[T], tol: T) -> Vec<T> {
    let mut out = p.to_vec();
    let mut start = 0;
    while start < p.len() {
        let mut end = start + 1;
        while end < p.len() && p[end - 1] - p[end] <= tol {
            end += 1;
        }
        if end - start > 1 {
            let mean = p[start..end].iter().fold(T::zero(), |a, &b| a + b) / T::from_usize_lossy(end - start);
            for v in &mut out[start..end] {
                *v = mean;
            }
        }
        start = end;
    }
    out
}

/// Dimension of the terminal Krylov subspace.
pub fn n_star<T: Real>(rho: &DensityMatrix<T>, h: &Observable<T>, rank_tol: T) -> Result<usize> {
    Ok(KrylovMeasure::new(rho, h, rank_tol)?.n_star())
}

/// Outcome of [`proportionality_check`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Proportionality<T = f64> {
    pub parallel: bool,
    /// Least-squares c in [ρ², H] ≈ c[ρ, H].
    pub coefficient: T,
    /// ‖[ρ², H] − c[ρ, H]‖_F / ‖[ρ², H]‖_F
    pub residual: T,
}

/// Whether [ρ², H] is parallel to [ρ, H], the condition for n* = 1.
pub fn proportionality_check<T: Real>(rho: &DensityMatrix<T>, h: &Observable<T>, tol: T) -> Result<Proportionality<T>> {
    commutator_c(rho, h)?;
    let r = rho.data();
    let hd = h.data();
    let a = r * hd - hd * r;
    let r2 = r * r;
    let b = &r2 * hd - hd * &r2;
    let aa = a.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr());
    let ab = a.iter().zip(b.iter()).fold(T::zero(), |acc, (x, y)| acc + (x.conj() * y).re);
    let coefficient = ab / aa;
    let diff = &b - a.map(|z| z * coefficient);
    let nb = frobenius_norm(&b);
    let residual = if nb > T::zero() { frobenius_norm(&diff) / nb } else { T::zero() };
    Ok(Proportionality { parallel: residual <= tol, coefficient, residual })
}

/// How the exact Hankel system was solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SolvePrecision {
    /// Cholesky in the working precision.
    Working,
    /// LDLᵀ in binary floating point with the given mantissa length.
    Extended { bits: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrecisionPolicy {
    /// Working precision when the scaled condition number allows, else extended.
    Auto,
    Working,
    Extended,
}

#[derive(Clone, Copy, Debug)]
pub struct KrylovOptions {
    pub rank_tol: f64,
    pub precision: PrecisionPolicy,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self { rank_tol: DEFAULT_RANK_TOL, precision: PrecisionPolicy::Auto }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KrylovBound<T = f64> {
    pub order: usize,
    pub value: T,
    pub n_star: usize,
    pub precision: SolvePrecision,
    /// Condition number of the working-precision Hankel matrix.
    pub condition_number: f64,
}

/// B_n = bᵀA⁻¹b with exact moments.
pub fn krylov_bound_exact<T: Real>(rho: &DensityMatrix<T>, h: &Observable<T>, n: usize) -> Result<KrylovBound<T>> {
    krylov_bound_exact_with(rho, h, n, &KrylovOptions::default())
}

pub fn krylov_bound_exact_with<T: Real>(
    rho: &DensityMatrix<T>,
    h: &Observable<T>,
    n: usize,
    options: &KrylovOptions,
) -> Result<KrylovBound<T>> {
    if n == 0 {
        return Err(Error::Domain("Krylov order must be at least 1".into()));
    }
    let measure = KrylovMeasure::new(rho, h, T::lit(options.rank_tol))?;
    let n_star = measure.n_star();
    if n > n_star {
        return Err(Error::SubspaceTerminated { requested: n, n_star });
    }
    let system = HankelSystem::from_moments(&measure.moments(2 * n), n)?;
    let condition_number = system.condition_number;
    let working_ok = system.scaled_condition_number() * T::default_epsilon().as_f64() <= T::SOLVE_ACCURACY;
    let try_working = match options.precision {
        PrecisionPolicy::Working => true,
        PrecisionPolicy::Auto => working_ok,
        PrecisionPolicy::Extended => false,
    };
    if try_working {
        match system.solve_spd() {
            Some(value) => {
                return Ok(KrylovBound { order: n, value, n_star, precision: SolvePrecision::Working, condition_number })
            }
            None if options.precision == PrecisionPolicy::Working => {
                return Err(Error::IllConditioned { order: n, condition: condition_number })
            }
            None => {}
        }
    }
    let (ldl, bits) = extended_ldl(&measure.atoms_f64(), n)?;
    let value = ldl.bounds()[n - 1].to_f64_lossy();
    Ok(KrylovBound {
        order: n,
        value: T::lit(value),
        n_star,
        precision: SolvePrecision::Extended { bits },
        condition_number,
    })
}

/// Moments Σ w x^k, k < 2n, and the order-n LDLᵀ in extended precision.
///
/// The mantissa grows until it exceeds the bits lost to the pivot range by a
/// safety margin.
fn extended_ldl(atoms: &[(f64, f64)], n: usize) -> Result<(HankelLdl<Wide>, usize)> {
    let mut bits = 128 + 24 * n;
    loop {
        let t = wide_moments(atoms, 2 * n, bits);
        let ldl = hankel_ldl(&t, n)?;
        let escalate = match ldl.breakdown {
            Some(_) => Some(bits * 2),
            None => {
                let lost = lost_bits(&ldl.pivots);
                if (bits as f64) < lost + 96.0 {
                    Some((lost as usize + 160).max(bits * 2))
                } else {
                    None
                }
            }
        };
        match escalate {
            None => return Ok((ldl, bits)),
            Some(next) if next <= MAX_EXTENDED_BITS => bits = next,
            Some(_) => {
                return Err(Error::IllConditioned { order: n, condition: pivot_ratio(&ldl.pivots) });
            }
        }
    }
}

fn wide_moments(atoms: &[(f64, f64)], m: usize, bits: usize) -> Vec<Wide> {
    let zero = wide(0.0, bits);
    let mut out = vec![zero; m];
    for &(x, w) in atoms {
        let xw = wide(x, bits);
        let mut term = wide(w, bits);
        for v in out.iter_mut() {
            *v = v.clone() + term.clone();
            term = term * xw.clone();
        }
    }
    out
}

fn log2_wide(x: &Wide) -> f64 {
    let (lo, _) = x.log2_bounds();
    lo as f64
}

fn lost_bits(pivots: &[Wide]) -> f64 {
    if pivots.is_empty() {
        return 0.0;
    }
    let logs: Vec<f64> = pivots.iter().map(log2_wide).collect();
    let hi = logs.iter().cloned().fold(f64::MIN, f64::max);
    let lo = logs.iter().cloned().fold(f64::MAX, f64::min);
    hi - lo
}

fn pivot_ratio(pivots: &[Wide]) -> f64 {
    2f64.powf(lost_bits(pivots))
}

/// The full exact hierarchy B_1 < … < B_{n*}.
#[derive(Clone, Debug)]
pub struct KrylovHierarchy {
    pub n_star: usize,
    /// B_1 … B_{n*}.
    pub bounds: Vec<f64>,
    /// B_{n+1} − B_n evaluated without cancellation (B_1 first).
    pub increments: Vec<f64>,
    /// LDLᵀ pivots of A_{n*}; all positive iff every leading block is positive definite.
    pub pivots: Vec<f64>,
    pub precision_bits: usize,
    /// Σ w / x of the measure, i.e. F_Q.
    pub terminal_reference: f64,
}

/// Every exact Krylov bound from a single extended-precision factorization.
pub fn krylov_hierarchy_exact<T: Real>(rho: &DensityMatrix<T>, h: &Observable<T>, rank_tol: T) -> Result<KrylovHierarchy> {
    let measure = KrylovMeasure::new(rho, h, rank_tol)?;
    let n_star = measure.n_star();
    let atoms = measure.atoms_f64();
    let (ldl, bits) = extended_ldl(&atoms, n_star)?;
    Ok(KrylovHierarchy {
        n_star,
        bounds: ldl.bounds().iter().map(|v| v.to_f64_lossy()).collect(),
        increments: ldl.increments().iter().map(|v| v.to_f64_lossy()).collect(),
        pivots: ldl.pivots.iter().map(|v| v.to_f64_lossy()).collect(),
        precision_bits: bits,
        terminal_reference: atoms.iter().map(|(x, w)| w / x).sum(),
    })
}

/// Result of the Gram–Schmidt construction of L_n.
#[derive(Clone, Debug)]
pub struct KrylovProjection<T = f64> {
    pub order: usize,
    /// ‖L_n‖²_ρ
    pub value: T,
    /// ⟨·,·⟩_ρ-orthonormal basis P_0 … P_{n−1} of 𝒦_n.
    pub basis: Vec<CMatrix<T>>,
    /// Best approximation of L in 𝒦_n.
    pub l_n: CMatrix<T>,
}

/// B_n as ‖L_n‖²_ρ with L_n the ⟨·,·⟩_ρ-orthogonal projection of L onto 𝒦_n.
///
/// Uses ⟨P, L⟩_ρ = tr(P C), so L itself is never needed. Each new direction is
/// R_ρ applied to the previous basis vector, orthogonalized twice.
pub fn krylov_projection<T: Real>(rho: &DensityMatrix<T>, h: &Observable<T>, n: usize) -> Result<KrylovProjection<T>> {
    if n == 0 {
        return Err(Error::Domain("Krylov order must be at least 1".into()));
    }
    let c = commutator_c(rho, h)?;
    let r = rho.data();
    let inner = |x: &CMatrix<T>, y: &CMatrix<T>| weighted_inner_dense(r, x, y);
    let scale = inner(c.data(), c.data()).sqrt();
    let mut basis: Vec<CMatrix<T>> = Vec::with_capacity(n);
    let mut value = T::zero();
    let mut l_n = CMatrix::<T>::zeros(rho.dim(), rho.dim());
    for k in 0..n {
        let mut v = if k == 0 { c.data().clone() } else { apply_r_dense(r, &basis[k - 1]) };
        for _ in 0..2 {
            for p in &basis {
                let proj = inner(p, &v);
                v -= p.map(|z| z * proj);
            }
        }
        let norm = inner(&v, &v).max(T::zero()).sqrt();
        if !(norm > T::lit(1e-14) * scale) {
            return Err(Error::SubspaceTerminated { requested: n, n_star: k });
        }
        v = v.map(|z| z / norm);
        let coeff = trace_of_product(&v, c.data()).re;
        value += coeff * coeff;
        l_n += v.map(|z| z * coeff);
        basis.push(v);
    }
    Ok(KrylovProjection { order: n, value, basis, l_n })
}

/// Generators R_ρ^k(C), k < count, with the detected n*.
#[derive(Clone, Debug)]
pub struct KrylovData<T = f64> {
    pub generators: Vec<HermitianOperator<T>>,
    pub n_star: usize,
    pub rank_tol: T,
}

impl<T: Real> KrylovData<T> {
    /// Builds the first `count` generators (defaults to n*).
    pub fn build(rho: &DensityMatrix<T>, h: &Observable<T>, rank_tol: T, count: Option<usize>) -> Result<Self> {
        let n_star = n_star(rho, h, rank_tol)?;
        let c = commutator_c(rho, h)?;
        let count = count.unwrap_or(n_star);
        let mut generators = Vec::with_capacity(count);
        let mut g = c.into_data();
        for _ in 0..count {
            let next = apply_r_dense(rho.data(), &g);
            generators.push(HermitianOperator::from_parts(g, Basis::Computational));
            g = next;
        }
        Ok(Self { generators, n_star, rank_tol })
    }

    /// ⟨G_k, G_l⟩_ρ, which equals the Hankel matrix T_{k+l+1}.
    pub fn gram_matrix(&self, rho: &DensityMatrix<T>) -> nalgebra::DMatrix<T> {
        let m = self.generators.len();
        nalgebra::DMatrix::from_fn(m, m, |i, j| {
            weighted_inner_dense(rho.data(), self.generators[i].data(), self.generators[j].data())
        })
    }
}
