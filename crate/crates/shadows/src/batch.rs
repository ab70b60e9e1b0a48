//! Seeded, parallel batch generation.
//!
//! Snapshot `i` draws from the ChaCha8 stream `i` of the generator seeded with
//! the master seed, so a batch depends only on (ρ, M, ensemble, seed) and not
//! on how the indices are split across threads.

use kst_core::{DensityMatrix, Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::ensemble::Ensemble;
use crate::snapshot::{BornSampler, Snapshot};

/// Snapshots stored flat: N ids per snapshot plus one outcome word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShadowBatch {
    n_qubits: usize,
    ensemble: Ensemble,
    master_seed: u64,
    ids: Vec<u32>,
    outcomes: Vec<u16>,
}

impl ShadowBatch {
    pub fn from_snapshots(n_qubits: usize, ensemble: Ensemble, master_seed: u64, snapshots: &[Snapshot]) -> Result<Self> {
        let mut ids = Vec::with_capacity(snapshots.len() * n_qubits);
        let mut outcomes = Vec::with_capacity(snapshots.len());
        for s in snapshots {
            if s.n_qubits() != n_qubits {
                return Err(Error::DimensionMismatch { expected: n_qubits, found: s.n_qubits() });
            }
            let checked = Snapshot::new(s.unitary_ids.clone(), s.outcomes, ensemble)?;
            ids.extend_from_slice(&checked.unitary_ids);
            outcomes.push(checked.outcomes);
        }
        Ok(Self { n_qubits, ensemble, master_seed, ids, outcomes })
    }

    pub(crate) fn from_raw(n_qubits: usize, ensemble: Ensemble, master_seed: u64, ids: Vec<u32>, outcomes: Vec<u16>) -> Self {
        debug_assert_eq!(ids.len(), outcomes.len() * n_qubits);
        Self { n_qubits, ensemble, master_seed, ids, outcomes }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn ensemble(&self) -> Ensemble {
        self.ensemble
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn unitary_ids(&self, i: usize) -> &[u32] {
        &self.ids[i * self.n_qubits..(i + 1) * self.n_qubits]
    }

    pub fn outcome_bits(&self, i: usize) -> u16 {
        self.outcomes[i]
    }

    pub fn snapshot(&self, i: usize) -> Snapshot {
        Snapshot { unitary_ids: self.unitary_ids(i).to_vec(), outcomes: self.outcomes[i] }
    }

    pub fn iter(&self) -> impl Iterator<Item = Snapshot> + '_ {
        (0..self.len()).map(|i| self.snapshot(i))
    }
}

fn sample_range(sampler: &BornSampler, master_seed: u64, m: usize) -> Vec<Snapshot> {
    (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
            rng.set_stream(i as u64);
            sampler.sample(&mut rng)
        })
        .collect()
}

fn assemble(sampler: &BornSampler, master_seed: u64, snaps: Vec<Snapshot>) -> ShadowBatch {
    let n = sampler.n_qubits();
    let mut ids = Vec::with_capacity(snaps.len() * n);
    let mut outcomes = Vec::with_capacity(snaps.len());
    for s in snaps {
        ids.extend_from_slice(&s.unitary_ids);
        outcomes.push(s.outcomes);
    }
    ShadowBatch::from_raw(n, sampler.ensemble(), master_seed, ids, outcomes)
}

/// M snapshots of ρ on the global rayon pool.
pub fn generate_batch(rho: &DensityMatrix<f64>, m: usize, ensemble: Ensemble, master_seed: u64) -> Result<ShadowBatch> {
    if m == 0 {
        return Err(Error::Domain("batch size must be positive".into()));
    }
    let sampler = BornSampler::new(rho, ensemble)?;
    let snaps = sample_range(&sampler, master_seed, m);
    Ok(assemble(&sampler, master_seed, snaps))
}

/// Same as [`generate_batch`] on a dedicated pool of `workers` threads.
pub fn generate_batch_with_workers(
    rho: &DensityMatrix<f64>,
    m: usize,
    ensemble: Ensemble,
    master_seed: u64,
    workers: usize,
) -> Result<ShadowBatch> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Resource(e.to_string()))?;
    pool.install(|| generate_batch(rho, m, ensemble, master_seed))
}
