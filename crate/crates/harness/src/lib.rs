//! Experiment runners for the QFI bound figures: exact sweeps, shadow-based
//! estimates, resource-scaling fits and random-state detection ratios.
//!
//! Each run turns an [`ExperimentConfig`] into a [`RunRecord`] (CSV rows plus
//! JSON metadata). Grid points are independent rayon jobs collected in grid
//! order, so output does not depend on the worker count.

#![forbid(unsafe_code)]

pub mod config;
pub mod exact;
pub mod figs3;
pub mod record;
pub mod scaling;
pub mod shadow;

use kst_core::{Result, StateDescription};
use serde_json::json;

pub use config::{Experiment, ExperimentConfig, ObservableSpec, ScalingConfig, ShadowBudget};
pub use exact::{exact_bounds, run_fig2_exact, run_fig3_exact, ExactRow};
pub use figs3::{detection_counts, run_figS3, DetectionCounts};
pub use record::{Cell, RunRecord, SCHEMA_VERSION};
pub use scaling::{ols_fit, scaling_study, Family, LinearFit, ScalingOutcome};
pub use shadow::{derive_seed, run_fig2_shadow, run_fig3_shadow, shadow_point, ShadowPoint, ShadowTarget};

/// Runs whichever experiment `config` names.
pub fn run(config: &ExperimentConfig) -> Result<RunRecord> {
    config.validate()?;
    match config.experiment {
        Experiment::Fig2a | Experiment::Fig3a => exact::dispatch(config),
        Experiment::Fig2b | Experiment::Fig3b => shadow::dispatch(config),
        Experiment::Fig2c | Experiment::Fig3c => scaling::run_scaling(config),
        Experiment::FigS3 => run_figS3(config),
        Experiment::Custom => run_custom(config),
    }
}

/// Exact bounds for an arbitrary state, plus a shadow estimate when enabled.
fn run_custom(config: &ExperimentConfig) -> Result<RunRecord> {
    let state: &StateDescription = config.state.as_ref().expect("validated");
    let n = config.n_qubits;
    let rho = state.build::<f64>()?;
    let h = config.observable.build(n)?;
    let ghz = kst_core::ghz_state::<f64>(n)?;
    let exact = exact_bounds(&rho, &h, Some(&ghz), &config.bounds)?;
    let mut columns = vec!["f_q".to_string(), "n_star".into()];
    columns.extend(config.bounds.iter().map(|f| f.label()));
    let mut row = vec![Cell::Float(exact.f_q), exact.n_star.map_or(Cell::Empty, Cell::from)];
    row.extend(exact.bounds.iter().map(|&b| Cell::from(b)));
    let mut extra = None;
    if config.estimate {
        columns.extend(["b_hat", "e_hat", "m"].iter().map(|s| s.to_string()));
        let target = ShadowTarget::new(rho, state.clone(), &h)?;
        if target.t0 > 0.0 {
            let est = shadow::estimator_config(config, &target, &h, target.t0, derive_seed(config.seed, 0))?;
            let replay = config.replay_dir.as_ref().map(|d| d.join(format!("{}.0.kstb", config.output_name())));
            let pt = shadow_point(&target, &h, &est, config.ensemble, replay.as_deref())?;
            row.extend([Cell::Float(pt.report.b_hat), Cell::Float(pt.e_hat), Cell::from(pt.snapshots)]);
            extra = Some(serde_json::to_value(&pt.report).map_err(|e| kst_core::Error::Format(e.to_string()))?);
        } else {
            row.extend([Cell::Empty, Cell::Empty, Cell::Empty]);
        }
    }
    let mut record = RunRecord::new(config.clone(), columns);
    record.push(row);
    if let Some(report) = extra {
        record.extra.insert("estimate".into(), report);
    }
    record.extra.insert("state".into(), json!(state));
    Ok(record)
}
