//! U-statistic moment estimates, median-of-means and the estimated Hankel solve.

use std::sync::OnceLock;
use std::time::Instant;

use itertools::Itertools;
use kst_core::linalg::trace_of_product;
use kst_core::multicopy::mu_coefficients;
use kst_core::{
    pauli_compose, plan_repetitions, plan_subsample_size, CMatrix, DensityMatrix, Error, MomentSequence, Observable,
    Result,
};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::batch::ShadowBatch;
use crate::ensemble::{pauli2, pauli_components, Ensemble, Mat2, CLIFFORD_SIZE};
use crate::local::{expand, expand_with, pair_table, trace_table, PauliTerms};
use crate::snapshot::{bloch, factor_from_bloch, outcome_bit, snapshot_factors, Snapshot};

pub const DEFAULT_TUPLE_BUDGET: u64 = 2_000_000;
pub const DEFAULT_CLIP_TOL: f64 = 1e-12;
/// Largest N for the Pauli-space accumulators of the k ≤ 1 path.
pub const FAST_PATH_MAX_QUBITS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Krylov order n.
    pub n: usize,
    /// Number of subsamples I.
    pub repetitions: usize,
    /// Subsample size L.
    pub subsample_size: usize,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    pub tuple_budget: u64,
    pub seed: u64,
    pub clip_tol: f64,
}

impl EstimatorConfig {
    pub fn new(n: usize, repetitions: usize, subsample_size: usize) -> Self {
        Self {
            n,
            repetitions,
            subsample_size,
            epsilon: None,
            delta: None,
            tuple_budget: DEFAULT_TUPLE_BUDGET,
            seed: 0,
            clip_tol: DEFAULT_CLIP_TOL,
        }
    }

    /// I and L from the concentration planner for accuracy ε with confidence 1 − δ.
    pub fn planned(rho: &DensityMatrix<f64>, h: &Observable<f64>, n: usize, epsilon: f64, delta: f64) -> Result<Self> {
        let repetitions = plan_repetitions(n, delta)?;
        let subsample_size = plan_subsample_size(rho, h, n, epsilon)?;
        Ok(Self { epsilon: Some(epsilon), delta: Some(delta), ..Self::new(n, repetitions, subsample_size) })
    }

    /// Splits a fixed budget M into `repetitions` subsamples of size ⌊M/I⌋.
    pub fn for_budget(n: usize, repetitions: usize, m: usize) -> Self {
        Self::new(n, repetitions, m / repetitions.max(1))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn required_snapshots(&self) -> usize {
        self.repetitions * self.subsample_size
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Domain("Krylov order must be at least 1".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Domain("need at least one subsample".into()));
        }
        if self.subsample_size < 2 * self.n + 1 {
            return Err(Error::InsufficientData(format!(
                "subsample size {} below 2n + 1 = {}",
                self.subsample_size,
                2 * self.n + 1
            )));
        }
        if self.tuple_budget == 0 {
            return Err(Error::Domain("tuple budget must be positive".into()));
        }
        if !(self.clip_tol >= 0.0) {
            return Err(Error::Domain("clip_tol must be nonnegative".into()));
        }
        Ok(())
    }
}

/// One U-statistic value with its cost.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UStatistic {
    pub value: f64,
    /// Ordered tuples represented (exact) or evaluated (sampled).
    pub tuples: u64,
    pub subsampled: bool,
}

/// H-dependent data shared by all moment estimates.
pub struct MomentKernel {
    n_qubits: usize,
    h_dense: CMatrix<f64>,
    /// Diagonal of H when H is diagonal and real.
    h_diag: Option<Vec<f64>>,
    h: PauliTerms,
    h2: PauliTerms,
    one_local: Option<OneLocal>,
    clifford_table: OnceLock<Vec<Vec<LocalData>>>,
}

/// H = c0·𝟙 + Σ_k h_k with h_k acting on qubit k alone.
struct OneLocal {
    c0: f64,
    terms: Vec<Mat2>,
}

impl OneLocal {
    fn detect(h: &PauliTerms, n: usize) -> Option<Self> {
        let mut c0 = 0.0;
        let mut terms = vec![Mat2::zeros(); n];
        for (codes, c) in &h.terms {
            let mut support = codes.iter().enumerate().filter(|(_, &p)| p != 0);
            match (support.next(), support.next()) {
                (None, _) => c0 += c,
                (Some((k, &p)), None) => terms[k] += pauli2(p as usize) * Complex64::new(*c, 0.0),
                _ => return None,
            }
        }
        Some(Self { c0, terms })
    }
}

/// Per-qubit factors of one snapshot.
pub type Factors = Vec<Mat2>;

impl MomentKernel {
    pub fn new(h: &Observable<f64>) -> Result<Self> {
        let n = h.n_qubits();
        let h_dense = h.data().clone();
        let h_diag = h.is_diagonal().then(|| h_dense.diagonal().iter().map(|z| z.re).collect());
        let terms = PauliTerms::from_observable(h)?;
        Ok(Self {
            n_qubits: n,
            h_diag,
            one_local: OneLocal::detect(&terms, n),
            h: terms,
            h2: PauliTerms::from_dense(&(&h_dense * &h_dense), n)?,
            h_dense,
            clifford_table: OnceLock::new(),
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    fn h_times(&self, m: &CMatrix<f64>) -> CMatrix<f64> {
        match &self.h_diag {
            Some(d) => CMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)] * d[r]),
            None => &self.h_dense * m,
        }
    }

    fn times_h(&self, m: &CMatrix<f64>) -> CMatrix<f64> {
        match &self.h_diag {
            Some(d) => CMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)] * d[c]),
            None => m * &self.h_dense,
        }
    }

    /// Kernel of the order-k U-statistic on one ordered tuple:
    /// 2^{−k} Σ_l μ_l Re tr(H X_1⋯X_l H X_{l+1}⋯X_{k+2}), with the l ∈ {0, k+2}
    /// terms written as tr(H² X_1⋯X_{k+2}).
    pub fn tuple_value(&self, tuple: &[&[Mat2]], k: usize) -> f64 {
        let t = k + 2;
        assert_eq!(tuple.len(), t);
        let n = self.n_qubits;
        let mu = mu_coefficients(k);
        // prefix[l][j] = X_1⋯X_l on qubit j, suffix[l][j] = X_{l+1}⋯X_t.
        let mut prefix = vec![vec![Mat2::identity(); n]; t + 1];
        for l in 1..=t {
            for j in 0..n {
                prefix[l][j] = prefix[l - 1][j] * tuple[l - 1][j];
            }
        }
        let mut suffix = vec![vec![Mat2::identity(); n]; t + 1];
        for l in (0..t).rev() {
            for j in 0..n {
                suffix[l][j] = tuple[l][j] * suffix[l + 1][j];
            }
        }
        let full: Vec<[Complex64; 4]> = prefix[t].iter().map(trace_table).collect();
        let mut acc = (mu.coefficients[0] + mu.coefficients[t]) * self.h2.contract(&full).re;
        for l in 1..t {
            if mu.coefficients[l] == 0.0 {
                continue;
            }
            let tables: Vec<_> = (0..n).map(|j| pair_table(&prefix[l][j], &suffix[l][j])).collect();
            acc += mu.coefficients[l] * self.h.contract_pair(&self.h, &tables).re;
        }
        acc * 0.5f64.powi(k as i32)
    }

    /// Order-k U-statistic over all ordered tuples of distinct shadows, or over
    /// `tuple_budget` uniformly drawn ones when there are more.
    pub fn u_statistic_enumerated<R: Rng + ?Sized>(
        &self,
        shadows: &[Factors],
        k: usize,
        tuple_budget: u64,
        rng: &mut R,
    ) -> Result<UStatistic> {
        let t = k + 2;
        let l = shadows.len();
        if l < t {
            return Err(Error::InsufficientData(format!("order {k} needs {t} shadows, got {l}")));
        }
        let total = ordered_tuples(l, t);
        if total <= tuple_budget {
            let mut sum = 0.0;
            for perm in (0..l).permutations(t) {
                let tuple: Vec<&[Mat2]> = perm.iter().map(|&i| shadows[i].as_slice()).collect();
                sum += self.tuple_value(&tuple, k);
            }
            return Ok(UStatistic { value: sum / total as f64, tuples: total, subsampled: false });
        }
        let mut sum = 0.0;
        for _ in 0..tuple_budget {
            let mut idx = sample(rng, l, t).into_vec();
            idx.shuffle(rng);
            let tuple: Vec<&[Mat2]> = idx.iter().map(|&i| shadows[i].as_slice()).collect();
            sum += self.tuple_value(&tuple, k);
        }
        Ok(UStatistic { value: sum / tuple_budget as f64, tuples: tuple_budget, subsampled: true })
    }

    /// Exact T̂_0 and T̂_1 in time linear in the subsample size.
    ///
    /// Sums over distinct indices follow from unrestricted sums by
    /// inclusion–exclusion, which needs S = ΣX_a, Q = ΣX_a², W1 = ΣX_aHX_a,
    /// W2 = ΣX_aH²X_a and four diagonal scalars. The accumulators live in the
    /// Pauli basis, where a tensor-product snapshot touches few coefficients.
    pub fn low_order(&self, shadows: &[Factors]) -> Result<(UStatistic, UStatistic)> {
        let mut acc = LowOrderAccumulator::new(self)?;
        let mut locals = Vec::with_capacity(self.n_qubits);
        for x in shadows {
            locals.clear();
            locals.extend(x.iter().enumerate().map(|(k, f)| self.local_data(k, f)));
            acc.add(self, locals.iter());
        }
        acc.finish(self)
    }

    fn local_data(&self, qubit: usize, f: &Mat2) -> LocalData {
        LocalData::new(f, self.one_local.as_ref().map(|o| &o.terms[qubit]))
    }

    /// Local data of the 48 Clifford factors on each qubit, indexed by 2·id + outcome.
    fn clifford_locals(&self) -> &[Vec<LocalData>] {
        self.clifford_table.get_or_init(|| {
            (0..self.n_qubits)
                .map(|k| {
                    (0..CLIFFORD_SIZE)
                        .flat_map(|id| (0..2u8).map(move |b| (id, b)))
                        .map(|(id, b)| self.local_data(k, &factor_from_bloch(bloch(Ensemble::Clifford, id, b))))
                        .collect()
                })
                .collect()
        })
    }

    /// Whether counting Clifford snapshots over the 6^N local-state patterns
    /// beats accumulating each one over the 4^N Pauli strings.
    fn prefers_histogram(&self, l: usize) -> bool {
        let n = self.n_qubits as u32;
        self.one_local.is_some()
            && n <= HISTOGRAM_MAX_QUBITS
            && 6f64.powi(n as i32) * (4 * n) as f64 <= l as f64 * 4f64.powi(n as i32)
    }

    /// [`Self::low_order`] on a contiguous range of a batch.
    fn low_order_batch(&self, batch: &ShadowBatch, range: std::ops::Range<usize>) -> Result<(UStatistic, UStatistic)> {
        if batch.ensemble() == Ensemble::Clifford && self.prefers_histogram(range.len()) {
            return self.low_order_histogram(batch, range);
        }
        self.low_order_direct(batch, range)
    }

    /// Clifford factors take one of six values per qubit (the eigenstates of
    /// ±X, ±Y, ±Z). The accumulators are multilinear in the factors, so a
    /// histogram over the 6^N patterns followed by a 6 → 4 map on each qubit
    /// axis gives the same sums.
    fn low_order_histogram(&self, batch: &ShadowBatch, range: std::ops::Range<usize>) -> Result<(UStatistic, UStatistic)> {
        let n = self.n_qubits;
        let (state_of, representative) = clifford_local_states();
        let table = self.clifford_locals();
        let cells = 6usize.pow(n as u32);
        let mut counts = vec![0u32; cells];
        for i in range.clone() {
            let ids = batch.unitary_ids(i);
            let bits = batch.outcome_bits(i);
            let cell = (0..n).fold(0usize, |acc, j| {
                acc * 6 + state_of[2 * ids[j] as usize + outcome_bit(bits, n, j) as usize] as usize
            });
            counts[cell] += 1;
        }
        let mut acc = LowOrderAccumulator::new(self)?;
        acc.count = range.len();
        let mut digits = vec![0usize; n];
        for (cell, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let mut rest = cell;
            for d in digits.iter_mut().rev() {
                *d = rest % 6;
                rest /= 6;
            }
            acc.add_scalars(self, digits.iter().enumerate().map(|(j, &d)| &table[j][representative[d]]), c as f64);
        }
        let mut buf: Vec<[f64; 4]> = counts.iter().map(|&c| [c as f64, c as f64, 0.0, 0.0]).collect();
        for j in 0..n {
            let maps: [[[f64; 4]; 4]; 6] = std::array::from_fn(|d| table[j][representative[d]].poly);
            buf = map_axis(&buf, 4usize.pow(j as u32), 6usize.pow((n - 1 - j) as u32), &maps);
        }
        acc.sums = Accumulators::Packed(buf);
        acc.finish(self)
    }

    fn low_order_direct(&self, batch: &ShadowBatch, range: std::ops::Range<usize>) -> Result<(UStatistic, UStatistic)> {
        let mut acc = LowOrderAccumulator::new(self)?;
        let n = batch.n_qubits();
        match batch.ensemble() {
            Ensemble::Clifford => {
                let table = self.clifford_locals();
                for i in range {
                    let ids = batch.unitary_ids(i);
                    let bits = batch.outcome_bits(i);
                    acc.add(
                        self,
                        (0..n).map(|j| &table[j][2 * ids[j] as usize + outcome_bit(bits, n, j) as usize]),
                    );
                }
            }
            Ensemble::Haar => {
                let mut locals = Vec::with_capacity(n);
                for i in range {
                    locals.clear();
                    let factors = snapshot_factors(batch.unitary_ids(i), batch.outcome_bits(i), Ensemble::Haar);
                    locals.extend(factors.iter().enumerate().map(|(k, f)| self.local_data(k, f)));
                    acc.add(self, locals.iter());
                }
            }
        }
        acc.finish(self)
    }

    /// T̂_k from the cheapest exact route, falling back to enumeration or sampling.
    pub fn u_statistic<R: Rng + ?Sized>(
        &self,
        shadows: &[Factors],
        k: usize,
        tuple_budget: u64,
        rng: &mut R,
    ) -> Result<UStatistic> {
        if k <= 1 && shadows.len() >= 3 && self.n_qubits <= FAST_PATH_MAX_QUBITS {
            let (t0, t1) = self.low_order(shadows)?;
            return Ok(if k == 0 { t0 } else { t1 });
        }
        self.u_statistic_enumerated(shadows, k, tuple_budget, rng)
    }
}

/// Everything the low-order accumulators need from one 2×2 factor f.
struct LocalData {
    comps: [f64; 4],
    comps2: [f64; 4],
    /// sandwich[μ] = components of f σ_μ f
    sandwich: [[f64; 4]; 4],
    /// For one-local H, per Pauli μ: (f, f², f h f, ½ f h² f) components.
    poly: [[f64; 4]; 4],
    x2t: [Complex64; 4],
    x3t: [Complex64; 4],
    pair_xx: [[Complex64; 4]; 4],
    pair_xx2: [[Complex64; 4]; 4],
}

impl LocalData {
    fn new(f: &Mat2, h_local: Option<&Mat2>) -> Self {
        let f2 = f * f;
        let comps = pauli_components(f);
        let comps2 = pauli_components(&f2);
        let poly = match h_local {
            Some(h) => {
                let b = pauli_components(&(f * h * f));
                let c = pauli_components(&(f * h * h * f));
                std::array::from_fn(|mu| [comps[mu], comps2[mu], b[mu], 0.5 * c[mu]])
            }
            None => [[0.0; 4]; 4],
        };
        Self {
            comps,
            comps2,
            sandwich: std::array::from_fn(|mu| pauli_components(&(f * pauli2(mu) * f))),
            poly,
            x2t: trace_table(&f2),
            x3t: trace_table(&(f2 * f)),
            pair_xx: pair_table(f, f),
            pair_xx2: pair_table(f, &f2),
        }
    }
}

/// Largest N for the Clifford histogram (6^N cells).
const HISTOGRAM_MAX_QUBITS: u32 = 8;

/// For each (Clifford id, outcome) slot 2·id + bit, which of the six local
/// states it prepares (2·axis + [negative]), and one slot per state.
fn clifford_local_states() -> &'static ([u8; 2 * CLIFFORD_SIZE as usize], [usize; 6]) {
    static STATES: OnceLock<([u8; 2 * CLIFFORD_SIZE as usize], [usize; 6])> = OnceLock::new();
    STATES.get_or_init(|| {
        let mut state_of = [0u8; 2 * CLIFFORD_SIZE as usize];
        let mut representative = [usize::MAX; 6];
        for (slot, s) in state_of.iter_mut().enumerate() {
            let r = bloch(Ensemble::Clifford, (slot / 2) as u32, (slot % 2) as u8);
            let axis = (0..3).max_by(|&a, &b| r[a].abs().total_cmp(&r[b].abs())).expect("three axes");
            let state = 2 * axis + usize::from(r[axis] < 0.0);
            *s = state as u8;
            if representative[state] == usize::MAX {
                representative[state] = slot;
            }
        }
        assert!(representative.iter().all(|&r| r != usize::MAX), "Clifford table misses a local state");
        (state_of, representative)
    })
}

/// Replaces the middle axis (length 6) of an outer × 6 × inner array with a
/// length-4 Pauli axis: out[o, μ, i] = Σ_s in[o, s, i] ⊙ maps[s][μ].
fn map_axis(input: &[[f64; 4]], outer: usize, inner: usize, maps: &[[[f64; 4]; 4]; 6]) -> Vec<[f64; 4]> {
    let mut out = vec![[0.0; 4]; outer * 4 * inner];
    for o in 0..outer {
        for (s, map) in maps.iter().enumerate() {
            let src = &input[(o * 6 + s) * inner..(o * 6 + s + 1) * inner];
            for (mu, m) in map.iter().enumerate() {
                let dst = &mut out[(o * 4 + mu) * inner..(o * 4 + mu + 1) * inner];
                for (d, x) in dst.iter_mut().zip(src) {
                    let v = poly_mul(x, m);
                    for (a, b) in d.iter_mut().zip(v) {
                        *a += b;
                    }
                }
            }
        }
    }
    out
}

/// Running product of (f, t-polynomial truncated at t²) over qubits.
fn poly_mul(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [a[0] * b[0], a[1] * b[1], a[1] * b[2] + a[2] * b[1], a[1] * b[3] + a[2] * b[2] + a[3] * b[1]]
}

enum Accumulators {
    /// Separate S, Q, W1, W2 Pauli vectors for arbitrary H.
    General { s: Vec<f64>, q: Vec<f64>, w1: Vec<f64>, w2: Vec<f64> },
    /// Interleaved (S, Q, [t¹], [t²]) of Π_k(f² + t f h_k f + ½t² f h_k² f), one-local H.
    Packed(Vec<[f64; 4]>),
}

struct LowOrderAccumulator {
    count: usize,
    sums: Accumulators,
    h2x2: f64,
    hxhx: f64,
    h2x3: f64,
    hxhx2: f64,
    scratch: Vec<[f64; 4]>,
    poly: Vec<[[f64; 4]; 4]>,
    tables: Vec<[Complex64; 4]>,
    pairs: Vec<[[Complex64; 4]; 4]>,
}

impl LowOrderAccumulator {
    fn new(kernel: &MomentKernel) -> Result<Self> {
        let n = kernel.n_qubits;
        if n > FAST_PATH_MAX_QUBITS {
            return Err(Error::Resource(format!("Pauli accumulators are limited to N <= {FAST_PATH_MAX_QUBITS}")));
        }
        let size = 1usize << (2 * n);
        let sums = if kernel.one_local.is_some() {
            Accumulators::Packed(vec![[0.0; 4]; size])
        } else {
            Accumulators::General { s: vec![0.0; size], q: vec![0.0; size], w1: vec![0.0; size], w2: vec![0.0; size] }
        };
        Ok(Self {
            count: 0,
            sums,
            h2x2: 0.0,
            hxhx: 0.0,
            h2x3: 0.0,
            hxhx2: 0.0,
            scratch: vec![[0.0; 4]; n],
            poly: vec![[[0.0; 4]; 4]; n],
            tables: vec![[Complex64::default(); 4]; n],
            pairs: vec![[[Complex64::default(); 4]; 4]; n],
        })
    }

    fn add<'a>(&mut self, kernel: &MomentKernel, locals: impl Iterator<Item = &'a LocalData> + Clone) {
        self.count += 1;
        match &mut self.sums {
            Accumulators::Packed(packed) => {
                for (slot, d) in self.poly.iter_mut().zip(locals.clone()) {
                    *slot = d.poly;
                }
                let zero = |v: &[f64; 4]| v.iter().all(|&x| x == 0.0);
                expand_with(&self.poly, [1.0, 1.0, 0.0, 0.0], poly_mul, zero, &mut |i, v| {
                    let cell = &mut packed[i];
                    for (a, b) in cell.iter_mut().zip(v) {
                        *a += b;
                    }
                });
            }
            Accumulators::General { s, q, w1, w2 } => {
                for (slot, d) in self.scratch.iter_mut().zip(locals.clone()) {
                    *slot = d.comps;
                }
                expand(&self.scratch, 1.0, &mut |i, c| s[i] += c);
                for (slot, d) in self.scratch.iter_mut().zip(locals.clone()) {
                    *slot = d.comps2;
                }
                expand(&self.scratch, 1.0, &mut |i, c| q[i] += c);
                for (terms, target) in [(&kernel.h, w1), (&kernel.h2, w2)] {
                    for (codes, c) in &terms.terms {
                        for ((slot, d), &p) in self.scratch.iter_mut().zip(locals.clone()).zip(codes) {
                            *slot = d.sandwich[p as usize];
                        }
                        expand(&self.scratch, *c, &mut |i, v| target[i] += v);
                    }
                }
            }
        }
        self.add_scalars(kernel, locals, 1.0);
    }

    /// The four single-shadow trace terms, weighted.
    fn add_scalars<'a>(&mut self, kernel: &MomentKernel, locals: impl Iterator<Item = &'a LocalData> + Clone, weight: f64) {
        for (slot, d) in self.tables.iter_mut().zip(locals.clone()) {
            *slot = d.x2t;
        }
        self.h2x2 += weight * kernel.h2.contract(&self.tables).re;
        for (slot, d) in self.tables.iter_mut().zip(locals.clone()) {
            *slot = d.x3t;
        }
        self.h2x3 += weight * kernel.h2.contract(&self.tables).re;
        for (slot, d) in self.pairs.iter_mut().zip(locals.clone()) {
            *slot = d.pair_xx;
        }
        self.hxhx += weight * kernel.h.contract_pair(&kernel.h, &self.pairs).re;
        for (slot, d) in self.pairs.iter_mut().zip(locals) {
            *slot = d.pair_xx2;
        }
        self.hxhx2 += weight * kernel.h.contract_pair(&kernel.h, &self.pairs).re;
    }

    fn finish(self, kernel: &MomentKernel) -> Result<(UStatistic, UStatistic)> {
        let l = self.count;
        if l < 3 {
            return Err(Error::InsufficientData(format!("T_1 needs 3 shadows, got {l}")));
        }
        let n = kernel.n_qubits;
        let (s, q, w1, w2) = match self.sums {
            Accumulators::General { s, q, w1, w2 } => (s, q, w1, w2),
            Accumulators::Packed(packed) => {
                let c0 = kernel.one_local.as_ref().map_or(0.0, |o| o.c0);
                let s = packed.iter().map(|v| v[0]).collect();
                let q = packed.iter().map(|v| v[1]).collect();
                let w1 = packed.iter().map(|v| c0 * v[1] + v[2]).collect();
                let w2 = packed.iter().map(|v| c0 * c0 * v[1] + 2.0 * c0 * v[2] + 2.0 * v[3]).collect();
                (s, q, w1, w2)
            }
        };
        let dim = (1usize << n) as f64;
        // tr(W2 S) straight from Pauli coefficients.
        let w2s = dim * w2.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>();
        let s = pauli_compose(&s, n)?;
        let q = pauli_compose(&q, n)?;
        let w1 = pauli_compose(&w1, n)?;
        let tr = |a: &CMatrix<f64>, b: &CMatrix<f64>| trace_of_product(a, b).re;
        let hs = kernel.h_times(&s);
        let h2s = kernel.h_times(&hs);
        let hsh = kernel.times_h(&hs);
        let s2 = &s * &s;
        let lf = l as f64;

        let pairs = tr(&h2s, &s) - self.h2x2;
        let cross = tr(&hs, &hs) - self.hxhx;
        let t0 = (2.0 * pairs - 2.0 * cross) / (lf * (lf - 1.0));

        // Hermiticity pairs tr(H²QS) with tr(H²SQ) and tr(HW1S) with tr(W1HS).
        let a3 = tr(&h2s, &s2) - 2.0 * tr(&h2s, &q) - w2s + 2.0 * self.h2x3;
        let b3 = tr(&hsh, &s2) - 2.0 * tr(&w1, &hs) - tr(&hsh, &q) + 2.0 * self.hxhx2;
        let t1 = (a3 - b3) / (lf * (lf - 1.0) * (lf - 2.0));
        Ok((
            UStatistic { value: t0, tuples: ordered_tuples(l, 2), subsampled: false },
            UStatistic { value: t1, tuples: ordered_tuples(l, 3), subsampled: false },
        ))
    }
}

/// L!/(L−t)!, saturating.
pub fn ordered_tuples(l: usize, t: usize) -> u64 {
    if t > l {
        return 0;
    }
    let mut acc: u128 = 1;
    for i in 0..t {
        acc = acc.saturating_mul((l - i) as u128);
    }
    acc.min(u64::MAX as u128) as u64
}

pub fn shadow_factors(snapshots: &[Snapshot], ensemble: Ensemble) -> Vec<Factors> {
    snapshots.iter().map(|s| snapshot_factors(&s.unitary_ids, s.outcomes, ensemble)).collect()
}

fn batch_factors(batch: &ShadowBatch, range: std::ops::Range<usize>) -> Vec<Factors> {
    range.map(|i| snapshot_factors(batch.unitary_ids(i), batch.outcome_bits(i), batch.ensemble())).collect()
}

/// Order-k U-statistic of a subsample.
pub fn u_statistic_tk<R: Rng + ?Sized>(
    subsample: &[Snapshot],
    ensemble: Ensemble,
    h: &Observable<f64>,
    k: usize,
    tuple_budget: u64,
    rng: &mut R,
) -> Result<UStatistic> {
    if subsample.len() < k + 2 {
        return Err(Error::InsufficientData(format!("order {k} needs {} shadows, got {}", k + 2, subsample.len())));
    }
    if let Some(s) = subsample.iter().find(|s| s.n_qubits() != h.n_qubits()) {
        return Err(Error::DimensionMismatch { expected: h.n_qubits(), found: s.n_qubits() });
    }
    MomentKernel::new(h)?.u_statistic(&shadow_factors(subsample, ensemble), k, tuple_budget, rng)
}

/// Reference U-statistic on arbitrary dense single-copy operators, by full
/// enumeration of ordered tuples and dense products.
pub fn u_statistic_dense(mats: &[CMatrix<f64>], h: &Observable<f64>, k: usize) -> Result<f64> {
    let t = k + 2;
    if mats.len() < t {
        return Err(Error::InsufficientData(format!("order {k} needs {t} operators, got {}", mats.len())));
    }
    let mu = mu_coefficients(k);
    let hd = h.data();
    let h2 = hd * hd;
    let dim = hd.nrows();
    let mut sum = 0.0;
    let mut count = 0u64;
    for perm in (0..mats.len()).permutations(t) {
        let mut prefix = vec![CMatrix::<f64>::identity(dim, dim)];
        for &i in &perm {
            let next = prefix.last().expect("nonempty") * &mats[i];
            prefix.push(next);
        }
        let mut suffix = vec![CMatrix::<f64>::identity(dim, dim); t + 1];
        for l in (0..t).rev() {
            suffix[l] = &mats[perm[l]] * &suffix[l + 1];
        }
        let mut acc = (mu.coefficients[0] + mu.coefficients[t]) * trace_of_product(&h2, &prefix[t]).re;
        for l in 1..t {
            acc += mu.coefficients[l] * trace_of_product(&(hd * &prefix[l]), &(hd * &suffix[l])).re;
        }
        sum += acc * 0.5f64.powi(k as i32);
        count += 1;
    }
    Ok(sum / count as f64)
}

/// Lower median of the entries.
pub fn median_of_means(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientData("median of an empty set".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Ok(sorted[(sorted.len() - 1) / 2])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HankelDiagnostics {
    /// λ_max/λ_min of Â before clipping (infinite when not positive definite).
    pub condition_number: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub clipped: bool,
    /// Eigenvalue floor clip_tol·max(|T̂_1|, |tr Â|/n).
    pub clip_floor: f64,
}

/// b̂ᵀÂ⁻¹b̂ with eigenvalues of Â at or below the floor raised to it.
pub fn hankel_solve_estimated(t_hat: &MomentSequence<f64>, n: usize, clip_tol: f64) -> Result<(f64, HankelDiagnostics)> {
    let t = &t_hat.values;
    if n == 0 || t.len() < 2 * n {
        return Err(Error::InsufficientData(format!("order {n} needs {} moments, got {}", 2 * n, t.len())));
    }
    if t[..2 * n].iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateInput("all moment estimates vanish".into()));
    }
    let a = DMatrix::from_fn(n, n, |i, j| t[i + j + 1]);
    let b = DVector::from_fn(n, |i, _| t[i]);
    let scale = t[1].abs().max(a.trace().abs() / n as f64);
    if scale == 0.0 {
        return Err(Error::DegenerateInput("Hankel matrix vanishes".into()));
    }
    let floor = clip_tol * scale;
    let eig = SymmetricEigen::new(a.clone());
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    let condition_number = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let clipped = lo <= floor;
    let spectral = |floor: f64| {
        let vtb = eig.eigenvectors.transpose() * &b;
        vtb.iter().zip(eig.eigenvalues.iter()).map(|(c, &l)| c * c / l.max(floor)).sum::<f64>()
    };
    let value = if clipped {
        spectral(floor)
    } else {
        match a.cholesky() {
            Some(ch) => b.dot(&ch.solve(&b)),
            None => spectral(floor),
        }
    };
    let diag = HankelDiagnostics { condition_number, min_eigenvalue: lo, max_eigenvalue: hi, clipped, clip_floor: floor };
    Ok((value, diag))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub elapsed_ms: f64,
    /// Total tuples per moment order, summed over subsamples.
    pub tuples: Vec<u64>,
    /// Whether any subsample fell back to tuple sampling, per moment order.
    pub subsampled: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub config: EstimatorConfig,
    pub t_hat: MomentSequence<f64>,
    /// per_subsample[i][k] = T̂_k^(i)
    pub per_subsample: Vec<Vec<f64>>,
    pub b_hat: f64,
    pub hankel: HankelDiagnostics,
    pub telemetry: Telemetry,
}

impl EstimateReport {
    /// Equality ignoring wall-clock telemetry.
    pub fn same_estimate(&self, other: &Self) -> bool {
        self.config == other.config
            && self.t_hat == other.t_hat
            && self.per_subsample == other.per_subsample
            && self.b_hat.to_bits() == other.b_hat.to_bits()
            && self.hankel == other.hankel
            && self.telemetry.tuples == other.telemetry.tuples
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn tuple_rng(seed: u64, subsample: usize, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((subsample as u64) << 16) | k as u64);
    rng
}

/// The full pipeline: I contiguous subsamples of size L, all 2n moments from
/// the same subsamples, median-of-means, then the clipped Hankel solve.
pub fn estimate_kry_bound(batch: &ShadowBatch, h: &Observable<f64>, config: &EstimatorConfig) -> Result<EstimateReport> {
    config.validate()?;
    if h.n_qubits() != batch.n_qubits() {
        return Err(Error::DimensionMismatch { expected: batch.n_qubits(), found: h.n_qubits() });
    }
    let needed = config.required_snapshots();
    if batch.len() < needed {
        return Err(Error::InsufficientData(format!("batch has {} snapshots, configuration needs {needed}", batch.len())));
    }
    let start = Instant::now();
    let kernel = MomentKernel::new(h)?;
    let m = 2 * config.n;
    let l = config.subsample_size;
    let rows: Vec<Vec<UStatistic>> = (0..config.repetitions)
        .into_par_iter()
        .map(|i| -> Result<Vec<UStatistic>> {
            let range = i * l..(i + 1) * l;
            let mut row = Vec::with_capacity(m);
            if kernel.n_qubits() <= FAST_PATH_MAX_QUBITS {
                let (t0, t1) = kernel.low_order_batch(batch, range.clone())?;
                row.push(t0);
                row.push(t1);
            }
            let shadows = if row.len() < m { batch_factors(batch, range) } else { Vec::new() };
            for k in row.len()..m {
                let mut rng = tuple_rng(config.seed, i, k);
                row.push(kernel.u_statistic_enumerated(&shadows, k, config.tuple_budget, &mut rng)?);
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let per_subsample: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|u| u.value).collect()).collect();
    let values = (0..m)
        .map(|k| median_of_means(&per_subsample.iter().map(|r| r[k]).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    let t_hat = MomentSequence::estimated(values);
    let (b_hat, hankel) = hankel_solve_estimated(&t_hat, config.n, config.clip_tol)?;
    if hankel.clipped {
        log::warn!("estimated Hankel matrix was not positive definite; eigenvalues clipped at {:e}", hankel.clip_floor);
    }
    let telemetry = Telemetry {
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        tuples: (0..m).map(|k| rows.iter().map(|r| r[k].tuples).fold(0u64, u64::saturating_add)).collect(),
        subsampled: (0..m).map(|k| rows.iter().any(|r| r[k].subsampled)).collect(),
    };
    Ok(EstimateReport { config: config.clone(), t_hat, per_subsample, b_hat, hankel, telemetry })
}

/// Sample mean of the snapshot matrices with its Frobenius standard error.
#[derive(Clone, Debug)]
pub struct ShadowMean {
    pub mean: CMatrix<f64>,
    pub standard_error: f64,
}

pub fn shadow_mean(batch: &ShadowBatch) -> Result<ShadowMean> {
    let n = batch.n_qubits();
    let m = batch.len();
    if m < 2 {
        return Err(Error::InsufficientData("need at least two snapshots".into()));
    }
    if n > FAST_PATH_MAX_QUBITS {
        return Err(Error::Resource(format!("Pauli accumulators are limited to N <= {FAST_PATH_MAX_QUBITS}")));
    }
    let size = 1usize << (2 * n);
    let mut sum = vec![0.0; size];
    let mut sq = vec![0.0; size];
    for i in 0..m {
        let comps: Vec<[f64; 4]> = snapshot_factors(batch.unitary_ids(i), batch.outcome_bits(i), batch.ensemble())
            .iter()
            .map(pauli_components)
            .collect();
        expand(&comps, 1.0, &mut |idx, c| {
            sum[idx] += c;
            sq[idx] += c * c;
        });
    }
    let mf = m as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / mf).collect();
    // ‖X‖_F² = 2^N Σ_P c_P², so the Frobenius variance is 2^N Σ_P Var(c_P).
    let var: f64 = sq.iter().zip(&mean).map(|(q, mu)| (q / mf - mu * mu) * mf / (mf - 1.0)).sum();
    let dim = (1usize << n) as f64;
    Ok(ShadowMean { mean: pauli_compose(&mean, n)?, standard_error: (dim * var / mf).sqrt() })
}
