//! Detection ratios over random states: how often each bound exceeds N,
//! relative to how often F_Q does.

use kst_core::{ghz_state, random_density_matrix, BoundFamily, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::exact::exact_bounds;
use crate::record::{Cell, RunRecord};
use crate::shadow::derive_seed;

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionCounts {
    pub samples: usize,
    pub f_q: usize,
    /// One count per configured bound family.
    pub bounds: Vec<usize>,
}

impl DetectionCounts {
    fn zero(families: usize) -> Self {
        Self { samples: 0, f_q: 0, bounds: vec![0; families] }
    }

    fn merge(mut self, other: Self) -> Self {
        self.samples += other.samples;
        self.f_q += other.f_q;
        for (a, b) in self.bounds.iter_mut().zip(other.bounds) {
            *a += b;
        }
        self
    }

    /// num(B)/num(F_Q); undefined when F_Q never detects.
    pub fn ratios(&self) -> Vec<Option<f64>> {
        self.bounds
            .iter()
            .map(|&c| (self.f_q > 0).then(|| c as f64 / self.f_q as f64))
            .collect()
    }
}

/// Sample i: rank drawn from its own stream, then a Ginibre state of that rank.
fn sample_state(config: &ExperimentConfig, i: usize) -> Result<kst_core::DensityMatrix<f64>> {
    let seed = derive_seed(config.seed, i as u64);
    let dim = 1usize << config.n_qubits;
    let rank = match config.random_rank {
        Some(r) => r,
        None => ChaCha8Rng::seed_from_u64(seed ^ 0x5241_4e4b).random_range(1..=dim),
    };
    random_density_matrix(config.n_qubits, rank, seed)
}

/// Counts detections (value > N, strictly) over `config.samples` random states.
pub fn detection_counts(config: &ExperimentConfig) -> Result<DetectionCounts> {
    config.validate()?;
    let n = config.n_qubits;
    let h = config.observable.build(n)?;
    let ghz = ghz_state::<f64>(n)?;
    let threshold = n as f64;
    let families = config.bounds.len();
    (0..config.samples)
        .into_par_iter()
        .map(|i| {
            let rho = sample_state(config, i)?;
            let row = exact_bounds(&rho, &h, Some(&ghz), &config.bounds)?;
            let mut c = DetectionCounts::zero(families);
            c.samples = 1;
            c.f_q = usize::from(row.f_q > threshold);
            for (slot, b) in c.bounds.iter_mut().zip(&row.bounds) {
                *slot = usize::from(b.is_some_and(|v| v > threshold));
            }
            Ok(c)
        })
        .try_reduce(|| DetectionCounts::zero(families), |a, b| Ok(a.merge(b)))
}

#[allow(non_snake_case)]
pub fn run_figS3(config: &ExperimentConfig) -> Result<RunRecord> {
    let counts = detection_counts(config)?;
    let mut record = RunRecord::new(config.clone(), vec!["bound".into(), "detections".into(), "ratio".into()]);
    record.push(vec![
        Cell::Text("f_q".into()),
        Cell::from(counts.f_q),
        Cell::from((counts.f_q > 0).then_some(1.0)),
    ]);
    for ((family, &c), ratio) in config.bounds.iter().zip(&counts.bounds).zip(counts.ratios()) {
        record.push(vec![Cell::Text(family.label()), Cell::from(c), Cell::from(ratio)]);
    }
    record.extra.insert("samples".into(), json!(counts.samples));
    record.extra.insert("threshold".into(), json!(config.n_qubits));
    record.extra.insert(
        "state_ensemble".into(),
        json!(match config.random_rank {
            Some(r) => format!("ginibre rank {r}"),
            None => "ginibre, rank uniform on 1..=2^N".to_string(),
        }),
    );
    Ok(record)
}

/// Row index of `family` in a figS3 record (row 0 is F_Q itself).
pub fn ratio_of(record: &RunRecord, family: BoundFamily) -> Option<f64> {
    let label = family.label();
    let col = record.column("bound")?;
    let row = record.rows.iter().position(|r| r[col] == Cell::Text(label.clone()))?;
    record.value(row, "ratio")
}
