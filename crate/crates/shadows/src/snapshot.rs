//! Snapshots and Born-rule sampling.

use std::borrow::Cow;
use std::sync::OnceLock;

use kst_core::linalg::kron;
use kst_core::{pauli_decompose, CMatrix, DensityMatrix, Error, HermitianOperator, Result};
use num_complex::Complex64;
use rand::Rng;

use crate::ensemble::{clifford_axis, pauli2, Ensemble, Mat2};

/// Largest N for which Clifford outcome distributions are cached per axis tuple.
const CACHE_MAX_QUBITS: usize = 8;
/// Largest N supported by the Pauli-expectation sampler.
pub const SAMPLER_MAX_QUBITS: usize = 10;

/// One randomized measurement: a unitary id and an outcome bit per qubit.
///
/// Outcome bit of qubit j sits at position N−1−j, so `outcomes` is the index
/// of the observed computational basis state.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Snapshot {
    pub unitary_ids: Vec<u32>,
    pub outcomes: u16,
}

impl Snapshot {
    pub fn new(unitary_ids: Vec<u32>, outcomes: u16, ensemble: Ensemble) -> Result<Self> {
        let n = unitary_ids.len();
        if n == 0 || n > 16 {
            return Err(Error::InvalidDimension(format!("{n} qubits in a snapshot")));
        }
        if (outcomes as u32) >> n != 0 {
            return Err(Error::Validation("outcome bits beyond the qubit count".into()));
        }
        if let Some(bad) = unitary_ids.iter().find(|&&id| !ensemble.contains(id)) {
            return Err(Error::Validation(format!("unitary id {bad} outside the ensemble")));
        }
        Ok(Self { unitary_ids, outcomes })
    }

    pub fn n_qubits(&self) -> usize {
        self.unitary_ids.len()
    }

    pub fn outcome(&self, qubit: usize) -> u8 {
        outcome_bit(self.outcomes, self.n_qubits(), qubit)
    }
}

pub(crate) fn outcome_bit(bits: u16, n: usize, qubit: usize) -> u8 {
    ((bits >> (n - 1 - qubit)) & 1) as u8
}

/// Signed Bloch vector r with 3u†|s⟩⟨s|u − 𝟙 = (𝟙 + 3r·σ)/2.
pub fn bloch(ensemble: Ensemble, id: u32, bit: u8) -> [f64; 3] {
    let n = ensemble.axis(id);
    if bit == 1 {
        n.map(|v| -v)
    } else {
        n
    }
}

/// (𝟙 + 3r·σ)/2
pub fn factor_from_bloch(r: [f64; 3]) -> Mat2 {
    let half = Complex64::new(0.5, 0.0);
    let mut m = pauli2(0) * half;
    for (a, &v) in r.iter().enumerate() {
        m += pauli2(a + 1) * Complex64::new(1.5 * v, 0.0);
    }
    m
}

/// Per-qubit 2×2 factors 3u_j†|s_j⟩⟨s_j|u_j − 𝟙.
pub fn snapshot_factors(ids: &[u32], bits: u16, ensemble: Ensemble) -> Vec<Mat2> {
    let n = ids.len();
    ids.iter()
        .enumerate()
        .map(|(q, &id)| factor_from_bloch(bloch(ensemble, id, outcome_bit(bits, n, q))))
        .collect()
}

/// Dense Kronecker product of 2×2 factors, qubit 0 leftmost.
pub fn kron_factors(factors: &[Mat2]) -> CMatrix<f64> {
    let mut out = CMatrix::<f64>::from_element(1, 1, Complex64::new(1.0, 0.0));
    for f in factors {
        let m = CMatrix::<f64>::from_fn(2, 2, |r, c| f[(r, c)]);
        out = kron(&out, &m);
    }
    out
}

/// Dense snapshot matrix ⊗_j (3u_j†|s_j⟩⟨s_j|u_j − 𝟙): unit trace, Hermitian, not positive.
pub fn snapshot_to_matrix(snap: &Snapshot, ensemble: Ensemble) -> HermitianOperator<f64> {
    let m = kron_factors(&snapshot_factors(&snap.unitary_ids, snap.outcomes, ensemble));
    HermitianOperator::new(m).expect("tensor product of Hermitian factors")
}

/// Samples measurement outcomes of ρ for any unitary assignment.
///
/// Probabilities come from the Pauli expectations e_P = tr(ρP):
/// p(s) = 2^{−N} Σ_P e_P Π_j h_j(P_j, s_j) with h(𝟙, s) = 1 and
/// h(σ_a, s) = (−1)^s n_{j,a}. Clifford axes make this a Walsh–Hadamard
/// transform of 2^N gathered expectations, cached per axis tuple.
pub struct BornSampler {
    n_qubits: usize,
    ensemble: Ensemble,
    expectations: Vec<f64>,
    cache: Vec<OnceLock<Vec<f64>>>,
}

impl BornSampler {
    pub fn new(rho: &DensityMatrix<f64>, ensemble: Ensemble) -> Result<Self> {
        let n = rho.n_qubits();
        if n > SAMPLER_MAX_QUBITS {
            return Err(Error::Resource(format!("outcome sampling is limited to N <= {SAMPLER_MAX_QUBITS}")));
        }
        let dim = rho.dim() as f64;
        let expectations = pauli_decompose(rho.data())?.iter().map(|z| z.re * dim).collect();
        let slots = if ensemble == Ensemble::Clifford && n <= CACHE_MAX_QUBITS { 3usize.pow(n as u32) } else { 0 };
        Ok(Self { n_qubits: n, ensemble, expectations, cache: (0..slots).map(|_| OnceLock::new()).collect() })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn ensemble(&self) -> Ensemble {
        self.ensemble
    }

    /// Full outcome distribution for the given unitary ids.
    pub fn distribution(&self, ids: &[u32]) -> Vec<f64> {
        assert_eq!(ids.len(), self.n_qubits);
        match self.ensemble {
            Ensemble::Clifford => {
                let (axes, flip) = self.clifford_key(ids);
                let base = self.clifford_cdf(&axes);
                let mut pmf = vec![0.0; base.len()];
                let mut prev = 0.0;
                for (s, &c) in base.iter().enumerate() {
                    pmf[s ^ flip] = c - prev;
                    prev = c;
                }
                pmf
            }
            Ensemble::Haar => self.contract(ids),
        }
    }

    /// Draws unitary ids and an outcome.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Snapshot {
        let ids: Vec<u32> = (0..self.n_qubits).map(|_| self.ensemble.draw(rng)).collect();
        let u: f64 = rng.random();
        let outcomes = match self.ensemble {
            Ensemble::Clifford => {
                let (axes, flip) = self.clifford_key(&ids);
                let cdf = self.clifford_cdf(&axes);
                pick(&cdf, u) ^ flip
            }
            Ensemble::Haar => pick(&cumulative(&self.contract(&ids)), u),
        };
        Snapshot { unitary_ids: ids, outcomes: outcomes as u16 }
    }

    fn clifford_key(&self, ids: &[u32]) -> (Vec<usize>, usize) {
        let n = self.n_qubits;
        let mut axes = Vec::with_capacity(n);
        let mut flip = 0usize;
        for (q, &id) in ids.iter().enumerate() {
            let (a, neg) = clifford_axis(id);
            axes.push(a);
            if neg {
                flip |= 1 << (n - 1 - q);
            }
        }
        (axes, flip)
    }

    fn clifford_cdf(&self, axes: &[usize]) -> Cow<'_, [f64]> {
        let slot = axes.iter().fold(0usize, |acc, &a| acc * 3 + a);
        match self.cache.get(slot) {
            Some(cell) => Cow::Borrowed(cell.get_or_init(|| cumulative(&self.walsh_hadamard(axes)))),
            None => Cow::Owned(cumulative(&self.walsh_hadamard(axes))),
        }
    }

    fn walsh_hadamard(&self, axes: &[usize]) -> Vec<f64> {
        let n = self.n_qubits;
        let dim = 1usize << n;
        let mut v = vec![0.0; dim];
        for (mask, slot) in v.iter_mut().enumerate() {
            let mut index = 0usize;
            for (q, &a) in axes.iter().enumerate() {
                let on = (mask >> (n - 1 - q)) & 1 == 1;
                index = index * 4 + if on { a + 1 } else { 0 };
            }
            *slot = self.expectations[index];
        }
        let mut h = 1;
        while h < dim {
            for start in (0..dim).step_by(2 * h) {
                for i in start..start + h {
                    let (x, y) = (v[i], v[i + h]);
                    v[i] = x + y;
                    v[i + h] = x - y;
                }
            }
            h *= 2;
        }
        let scale = 1.0 / dim as f64;
        v.iter_mut().for_each(|p| *p *= scale);
        v
    }

    fn contract(&self, ids: &[u32]) -> Vec<f64> {
        let n = self.n_qubits;
        let mut cur = self.expectations.clone();
        for (q, &id) in ids.iter().enumerate() {
            let axis = self.ensemble.axis(id);
            let h = |mu: usize, s: usize| -> f64 {
                let sign = if s == 1 { -1.0 } else { 1.0 };
                if mu == 0 {
                    1.0
                } else {
                    sign * axis[mu - 1]
                }
            };
            let block = 1usize << (2 * (n - 1 - q));
            let prefixes = 1usize << q;
            let mut next = vec![0.0; prefixes * 2 * block];
            for p in 0..prefixes {
                for s in 0..2 {
                    let dst = (p * 2 + s) * block;
                    for mu in 0..4 {
                        let w = h(mu, s);
                        if w == 0.0 {
                            continue;
                        }
                        let src = (p * 4 + mu) * block;
                        for r in 0..block {
                            next[dst + r] += w * cur[src + r];
                        }
                    }
                }
            }
            cur = next;
        }
        let scale = 1.0 / (1usize << n) as f64;
        cur.iter_mut().for_each(|p| *p *= scale);
        cur
    }
}

fn cumulative(pmf: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    pmf.iter()
        .map(|&p| {
            acc += p.max(0.0);
            acc
        })
        .collect()
}

fn pick(cdf: &[f64], u: f64) -> usize {
    let target = u * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= target).min(cdf.len() - 1)
}

/// Outcome distribution ⟨s|UρU†|s⟩ for a fixed unitary assignment.
pub fn outcome_distribution(rho: &DensityMatrix<f64>, ids: &[u32], ensemble: Ensemble) -> Result<Vec<f64>> {
    if ids.len() != rho.n_qubits() {
        return Err(Error::DimensionMismatch { expected: rho.n_qubits(), found: ids.len() });
    }
    if let Some(bad) = ids.iter().find(|&&id| !ensemble.contains(id)) {
        return Err(Error::Validation(format!("unitary id {bad} outside the ensemble")));
    }
    Ok(BornSampler::new(rho, ensemble)?.distribution(ids))
}

/// One snapshot of ρ. Batches should share a [`BornSampler`] instead.
pub fn sample_snapshot<R: Rng + ?Sized>(rho: &DensityMatrix<f64>, ensemble: Ensemble, rng: &mut R) -> Result<Snapshot> {
    Ok(BornSampler::new(rho, ensemble)?.sample(rng))
}
