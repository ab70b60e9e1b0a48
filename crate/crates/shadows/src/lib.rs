//! Randomized single-qubit measurements of a state, their classical-shadow
//! snapshots, and the median-of-means estimator of the Krylov QFI bound built
//! from them.

#![forbid(unsafe_code)]

pub mod batch;
pub mod ensemble;
pub mod estimator;
pub mod io;
mod local;
pub mod snapshot;

pub use batch::{generate_batch, generate_batch_with_workers, ShadowBatch};
pub use ensemble::Ensemble;
pub use estimator::{
    estimate_kry_bound, hankel_solve_estimated, median_of_means, shadow_mean, u_statistic_dense, u_statistic_tk,
    EstimateReport, EstimatorConfig, HankelDiagnostics, MomentKernel, ShadowMean, Telemetry, UStatistic,
};
pub use io::{load_batch, read_batch, save_batch, write_batch, BatchMeta};
pub use snapshot::{outcome_distribution, sample_snapshot, snapshot_to_matrix, BornSampler, Snapshot};
