//! Moments as multi-copy expectation values.
//!
//! T_k = 2^{−k} Σ_l μ_l^(k) tr(Hρ^l Hρ^{k+2−l}) is a degree-(k+2) polynomial in ρ
//! and therefore a linear functional tr(O ρ^{⊗(k+2)}) on k+2 copies. This module
//! builds O densely, symmetrizes it over copy permutations, reduces it by
//! partial traces, and turns the reductions into the variance bound and the
//! subsample-size planner of the shadow estimator.
//!
//! Multi-copy indices put copy 1 in the most significant position.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_defect, hermitize, trace_of_product};
use crate::qfi::MomentSequence;
use crate::scalar::{cr, CMatrix, Real};
use crate::states::{DensityMatrix, Observable};

/// Cap on N·(k+2) for dense multi-copy operators.
pub const MULTICOPY_MAX_QUBITS: usize = 12;
/// Cap on k+2 for permutation symmetrization.
pub const SYMMETRIZE_MAX_COPIES: usize = 6;

/// μ_l^(k) = C(k,l) − 2C(k,l−1) + C(k,l−2), l = 0 … k+2.
#[derive(Clone, Debug, PartialEq)]
pub struct MuTable {
    pub k: usize,
    pub integers: Vec<i128>,
    pub coefficients: Vec<f64>,
}

pub fn mu_coefficients(k: usize) -> MuTable {
    let mut row = vec![0i128; k + 1];
    row[0] = 1;
    for i in 1..=k {
        for j in (1..=i).rev() {
            row[j] += row[j - 1];
        }
    }
    let binom = |l: i64| -> i128 {
        if l < 0 || l as usize > k {
            0
        } else {
            row[l as usize]
        }
    };
    let integers: Vec<i128> = (0..(k as i64 + 3))
        .map(|l| binom(l) - 2 * binom(l - 1) + binom(l - 2))
        .collect();
    let coefficients = integers.iter().map(|&v| v as f64).collect();
    MuTable { k, integers, coefficients }
}

/// Products H ρ^l, l = 0 … max_power, shared by every T_k with k + 2 ≤ max_power.
pub struct PowerLadder<T: Real> {
    h_rho: Vec<CMatrix<T>>,
}

impl<T: Real> PowerLadder<T> {
    pub fn new(rho: &DensityMatrix<T>, h: &Observable<T>, max_power: usize) -> Result<Self> {
        if rho.dim() != h.dim() {
            return Err(Error::DimensionMismatch { expected: rho.dim(), found: h.dim() });
        }
        let mut h_rho = Vec::with_capacity(max_power + 1);
        let mut cur = h.data().clone();
        for _ in 0..=max_power {
            let next = &cur * rho.data();
            h_rho.push(cur);
            cur = next;
        }
        Ok(Self { h_rho })
    }

    pub fn max_power(&self) -> usize {
        self.h_rho.len() - 1
    }

    /// tr(H ρ^a H ρ^b)
    pub fn trace(&self, a: usize, b: usize) -> T {
        trace_of_product(&self.h_rho[a], &self.h_rho[b]).re
    }

    pub fn t_k(&self, k: usize) -> T {
        assert!(k + 2 <= self.max_power(), "power ladder too short for T_{k}");
        let mu = mu_coefficients(k);
        let t = k + 2;
        let mut acc = T::zero();
        for (l, &m) in mu.coefficients.iter().enumerate() {
            if m != 0.0 {
                acc += T::lit(m) * self.trace(l, t - l);
            }
        }
        acc * T::lit(0.5f64.powi(k as i32))
    }
}

/// T_k from the trace polynomial.
pub fn t_k_polynomial<T: Real>(rho: &DensityMatrix<T>, h: &Observable<T>, k: usize) -> Result<T> {
    Ok(PowerLadder::new(rho, h, k + 2)?.t_k(k))
}

/// T_0 … T_{m−1} from one ladder.
pub fn moments_polynomial<T: Real>(rho: &DensityMatrix<T>, h: &Observable<T>, m: usize) -> Result<MomentSequence<T>> {
    let ladder = PowerLadder::new(rho, h, m + 1)?;
    Ok(MomentSequence::exact((0..m).map(|k| ladder.t_k(k)).collect()))
}

/// Dense operator on `copies` copies of an N-qubit system.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiCopyOperator<T = f64> {
    copies: usize,
    n_qubits: usize,
    data: CMatrix<T>,
}

impl<T: Real> MultiCopyOperator<T> {
    pub fn copies(&self) -> usize {
        self.copies
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn data(&self) -> &CMatrix<T> {
        &self.data
    }

    pub fn hermitian_defect(&self) -> T {
        hermitian_defect(&self.data)
    }

    fn copy_dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// tr(O ρ^{⊗t})
    pub fn expectation(&self, rho: &DensityMatrix<T>) -> Result<Complex<T>> {
        let factors = vec![rho.data(); self.copies];
        self.expectation_product(&factors)
    }

    /// tr(O (X_1 ⊗ … ⊗ X_t)) for arbitrary single-copy matrices.
    pub fn expectation_product(&self, factors: &[&CMatrix<T>]) -> Result<Complex<T>> {
        if factors.len() != self.copies {
            return Err(Error::DimensionMismatch { expected: self.copies, found: factors.len() });
        }
        let mut cur = self.data.clone();
        for x in factors.iter().rev() {
            cur = contract_last(&cur, x, self.copy_dim())?;
        }
        Ok(cur[(0, 0)])
    }
}

/// tr over the last copy of O (𝟙 ⊗ X).
fn contract_last<T: Real>(o: &CMatrix<T>, x: &CMatrix<T>, d: usize) -> Result<CMatrix<T>> {
    if x.nrows() != d || x.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, found: x.nrows() });
    }
    let outer = o.nrows() / d;
    let mut out = CMatrix::<T>::zeros(outer, outer);
    for rp in 0..outer {
        for cp in 0..outer {
            let mut acc = cr(T::zero());
            for a in 0..d {
                for b in 0..d {
                    acc += o[(rp * d + a, cp * d + b)] * x[(b, a)];
                }
            }
            out[(rp, cp)] = acc;
        }
    }
    Ok(out)
}

fn check_multicopy_cap(n_qubits: usize, copies: usize) -> Result<()> {
    if n_qubits * copies > MULTICOPY_MAX_QUBITS {
        return Err(Error::Resource(format!(
            "{copies} copies of {n_qubits} qubits exceed the {MULTICOPY_MAX_QUBITS}-qubit dense cap"
        )));
    }
    Ok(())
}

/// O^(k+2) with tr(O ρ^{⊗(k+2)}) = T_k.
///
/// Term l of the trace polynomial is the cyclic shift Π applied to H on copy 1
/// and H on copy l+1; the two end terms l ∈ {0, k+2} carry H² on copy 1.
/// That sum is not Hermitian for k ≥ 1 (or N ≥ 2), so its Hermitian part is
/// returned; the expectation on any ρ^{⊗t} is real, hence unchanged.
pub fn build_o<T: Real>(h: &Observable<T>, k: usize) -> Result<MultiCopyOperator<T>> {
    let n = h.n_qubits();
    let t = k + 2;
    check_multicopy_cap(n, t)?;
    let d = h.dim();
    let dim = d.pow(t as u32);
    let hd = h.data();
    let h2 = hd * hd;
    let mu = mu_coefficients(k);
    let scale = 0.5f64.powi(k as i32);
    let mut data = CMatrix::<T>::zeros(dim, dim);
    let mut digits = vec![0usize; t];
    let mut row_digits = vec![0usize; t];
    let encode = |ds: &[usize]| ds.iter().fold(0usize, |acc, &x| acc * d + x);

    for col in 0..dim {
        decode(col, d, &mut digits);
        // Rows reached by Π from col: r_i = c_{i+1} for i < t, with free slots.
        for i in 0..t - 1 {
            row_digits[i] = digits[i + 1];
        }
        // End terms: H² on copy 1, r_t free.
        let end_coef = T::lit((mu.coefficients[0] + mu.coefficients[t]) * scale);
        for b in 0..d {
            row_digits[t - 1] = b;
            let v = h2[(b, digits[0])];
            if v.norm_sqr() > T::zero() {
                data[(encode(&row_digits), col)] += v * end_coef;
            }
        }
        // Interior terms: H on copy 1 and copy q = l + 1; r_{q−1} and r_t free.
        for l in 1..t {
            let coef = mu.coefficients[l] * scale;
            if coef == 0.0 {
                continue;
            }
            let coef = T::lit(coef);
            let q = l; // zero-based index of copy l + 1
            for b in 0..d {
                let hb = hd[(b, digits[0])];
                if hb.norm_sqr() == T::zero() {
                    continue;
                }
                for a in 0..d {
                    let ha = hd[(a, digits[q])];
                    if ha.norm_sqr() == T::zero() {
                        continue;
                    }
                    for i in 0..t - 1 {
                        row_digits[i] = digits[i + 1];
                    }
                    row_digits[q - 1] = a;
                    row_digits[t - 1] = b;
                    data[(encode(&row_digits), col)] += hb * ha * coef;
                }
            }
        }
    }
    Ok(MultiCopyOperator { copies: t, n_qubits: n, data: hermitize(&data) })
}

fn decode(mut idx: usize, d: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = idx % d;
        idx /= d;
    }
}

fn permutations(t: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(t), &mut vec![false; t], &mut out);
    out
}

/// Ō = (1/t!) Σ_π π† O π over all copy permutations.
pub fn symmetrize_o<T: Real>(o: &MultiCopyOperator<T>) -> Result<MultiCopyOperator<T>> {
    let t = o.copies;
    if t > SYMMETRIZE_MAX_COPIES {
        return Err(Error::Resource(format!(
            "symmetrization over {t}! permutations exceeds the {SYMMETRIZE_MAX_COPIES}-copy cap"
        )));
    }
    let d = o.copy_dim();
    let dim = o.data.nrows();
    let perms = permutations(t);
    let weight = T::one() / T::lit(perms.len() as f64);
    let mut out = CMatrix::<T>::zeros(dim, dim);
    let mut digits = vec![0usize; t];
    let mut map = vec![0usize; dim];
    for perm in &perms {
        for (idx, slot) in map.iter_mut().enumerate() {
            decode(idx, d, &mut digits);
            *slot = perm.iter().fold(0usize, |acc, &p| acc * d + digits[p]);
        }
        for c in 0..dim {
            let mc = map[c];
            for r in 0..dim {
                out[(r, c)] += o.data[(map[r], mc)];
            }
        }
    }
    out.iter_mut().for_each(|z| *z *= weight);
    Ok(MultiCopyOperator { copies: t, n_qubits: o.n_qubits, data: out })
}

/// O_l = tr_{l+1…t}[Ō (𝟙^{⊗l} ⊗ ρ^{⊗(t−l)})], an operator on l copies.
pub fn reduced_o_l<T: Real>(o_sym: &MultiCopyOperator<T>, rho: &DensityMatrix<T>, l: usize) -> Result<MultiCopyOperator<T>> {
    if l < 1 || l > o_sym.copies {
        return Err(Error::Domain(format!("l = {l} outside 1..={}", o_sym.copies)));
    }
    if rho.n_qubits() != o_sym.n_qubits {
        return Err(Error::DimensionMismatch { expected: o_sym.n_qubits, found: rho.n_qubits() });
    }
    let mut cur = o_sym.data.clone();
    for _ in l..o_sym.copies {
        cur = contract_last(&cur, rho.data(), o_sym.copy_dim())?;
    }
    Ok(MultiCopyOperator { copies: l, n_qubits: o_sym.n_qubits, data: cur })
}

/// tr([O_l]²) for l = 1 … k+2 (index l − 1).
pub fn reduced_trace_squares<T: Real>(rho: &DensityMatrix<T>, h: &Observable<T>, k: usize) -> Result<Vec<T>> {
    let o = symmetrize_o(&build_o(h, k)?)?;
    let t = o.copies;
    let d = o.copy_dim();
    let mut out = vec![T::zero(); t];
    let mut cur = o.data;
    for l in (1..=t).rev() {
        out[l - 1] = trace_of_product(&cur, &cur).re;
        if l > 1 {
            cur = contract_last(&cur, rho.data(), d)?;
        }
    }
    Ok(out)
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// Upper bound on the variance of the order-k U-statistic over L snapshots.
pub fn variance_bound<T: Real>(rho: &DensityMatrix<T>, h: &Observable<T>, k: usize, l_size: usize) -> Result<T> {
    let t = k + 2;
    if l_size < t {
        return Err(Error::Domain(format!("subsample size {l_size} below k + 2 = {t}")));
    }
    let tr_sq = reduced_trace_squares(rho, h, k)?;
    Ok(T::lit(variance_bound_from(&tr_sq, rho.n_qubits(), k, l_size)))
}

fn variance_bound_from<T: Real>(tr_sq: &[T], n_qubits: usize, k: usize, l_size: usize) -> f64 {
    let t = k + 2;
    let tf = factorial(t);
    (1..=t)
        .map(|l| {
            let num = tf * tf * 2f64.powi((l * n_qubits) as i32) * tr_sq[l - 1].as_f64().max(0.0);
            let den = factorial(l) * factorial(t - l).powi(2) * ((l_size - l + 1) as f64).powi(l as i32);
            num / den
        })
        .sum()
}

/// Subsample size L guaranteeing Var[T̂_k] ≤ ε²/4 for every k < 2n.
pub fn plan_subsample_size<T: Real>(rho: &DensityMatrix<T>, h: &Observable<T>, n: usize, epsilon: T) -> Result<usize> {
    if n == 0 {
        return Err(Error::Domain("Krylov order must be at least 1".into()));
    }
    if !(epsilon > T::zero()) {
        return Err(Error::Domain("epsilon must be positive".into()));
    }
    check_multicopy_cap(rho.n_qubits(), 2 * n + 1)?;
    let eps = epsilon.as_f64();
    let dim = 2f64.powi(rho.n_qubits() as i32);
    let mut best = (2 * n + 1) as f64;
    for k in 0..2 * n {
        let t = k + 2;
        let tr_sq = reduced_trace_squares(rho, h, k)?;
        let tf = factorial(t);
        for l in 1..=t {
            let inner = 4.0 * t as f64 * tf * tf * tr_sq[l - 1].as_f64().max(0.0)
                / (factorial(l) * factorial(t - l).powi(2) * eps * eps);
            let candidate = inner.powf(1.0 / l as f64) * dim + l as f64 - 1.0;
            if candidate > best {
                best = candidate;
            }
        }
    }
    Ok(best.ceil() as usize)
}

/// I = ⌈8 ln(2n/δ)⌉, clamped to at least 1.
pub fn plan_repetitions(n: usize, delta: f64) -> Result<usize> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta = {delta} outside (0, 1)")));
    }
    if n == 0 {
        return Err(Error::Domain("Krylov order must be at least 1".into()));
    }
    let raw = (8.0 * (2.0 * n as f64 / delta).ln()).ceil();
    if raw < 1.0 {
        log::warn!("repetition count {raw} clamped to 1");
        return Ok(1);
    }
    Ok(raw as usize)
}
