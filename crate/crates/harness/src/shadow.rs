//! Shadow-based sweeps: estimate B_n per grid point and compare with F_Q.

use std::path::Path;
use std::time::Instant;

use kst_core::{
    bound_entangled, ghz_state, moments_exact, pseudo_pure, qfi_exact, DensityMatrix, Error, Observable, Result,
    StateDescription,
};
use kst_shadows::io::save_batch;
use kst_shadows::{estimate_kry_bound, generate_batch, EstimateReport, EstimatorConfig};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{Experiment, ExperimentConfig, ShadowBudget};
use crate::exact::krylov_or_terminal;
use crate::record::{Cell, RunRecord};

/// Independent seed for work unit `stream` of a run.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.next_u64()
}

/// One state of a shadow sweep.
pub struct ShadowTarget {
    pub rho: DensityMatrix<f64>,
    pub description: StateDescription,
    pub t0: f64,
}

impl ShadowTarget {
    pub fn new(rho: DensityMatrix<f64>, description: StateDescription, h: &Observable<f64>) -> Result<Self> {
        let t0 = match moments_exact(&rho, h, 1) {
            Ok(m) => m.values[0],
            Err(Error::DegenerateCommutator { .. }) => 0.0,
            Err(e) => return Err(e),
        };
        Ok(Self { rho, description, t0 })
    }
}

#[derive(Clone, Debug)]
pub struct ShadowPoint {
    pub f_q: f64,
    /// Exact B_n at the estimated order.
    pub b_exact: f64,
    pub report: EstimateReport,
    pub snapshots: usize,
    /// |B̂_n − F_Q| / F_Q
    pub e_hat: f64,
    pub elapsed_ms: f64,
}

/// Estimator settings for one point under the configured budget rule.
pub fn estimator_config(
    config: &ExperimentConfig,
    target: &ShadowTarget,
    h: &Observable<f64>,
    t0_max: f64,
    seed: u64,
) -> Result<EstimatorConfig> {
    let n = config.krylov_order;
    let mut est = match config.budget {
        ShadowBudget::Fixed { m } => EstimatorConfig::for_budget(n, config.repetitions, m),
        ShadowBudget::InverseT0 { floor, scale } => {
            let m = (scale as f64 * t0_max / target.t0).ceil() as usize;
            EstimatorConfig::for_budget(n, config.repetitions, m.max(floor))
        }
        ShadowBudget::Planner { epsilon, delta } => {
            EstimatorConfig::planned(&target.rho, h, n, epsilon * target.t0, delta)?
        }
    };
    est.tuple_budget = config.tuple_budget;
    est.seed = seed;
    let m = est.required_snapshots();
    if m > config.max_snapshots {
        return Err(Error::Resource(format!(
            "{m} snapshots requested, above max_snapshots = {}",
            config.max_snapshots
        )));
    }
    Ok(est)
}

/// Generates a batch for `target`, estimates B_n and scores it against F_Q.
pub fn shadow_point(
    target: &ShadowTarget,
    h: &Observable<f64>,
    est: &EstimatorConfig,
    ensemble: kst_shadows::Ensemble,
    replay: Option<&Path>,
) -> Result<ShadowPoint> {
    if !(target.t0 > 0.0) {
        return Err(Error::DegenerateCommutator { norm: 0.0 });
    }
    let start = Instant::now();
    let f_q = qfi_exact(&target.rho, h)?;
    let (b_exact, _) = krylov_or_terminal(&target.rho, h, est.n)?;
    let m = est.required_snapshots();
    let batch = generate_batch(&target.rho, m, ensemble, est.seed)?;
    if let Some(path) = replay {
        save_batch(path, &batch, Some(target.description.clone()))?;
    }
    let report = estimate_kry_bound(&batch, h, est)?;
    let e_hat = (report.b_hat - f_q).abs() / f_q;
    Ok(ShadowPoint { f_q, b_exact, report, snapshots: m, e_hat, elapsed_ms: start.elapsed().as_secs_f64() * 1e3 })
}

fn columns(sweep: &str, n: usize) -> Vec<String> {
    let mut cols: Vec<String> = [sweep, "f_q", "b_exact", "b_hat", "e_hat", "m", "repetitions", "subsample_size"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend((0..2 * n).map(|k| format!("t{k}_hat")));
    cols.extend(["clipped", "min_eigenvalue", "condition_number", "tuples_sampled"].iter().map(|s| s.to_string()));
    cols
}

fn row(sweep: Cell, point: Option<&ShadowPoint>, n: usize, f_q: f64) -> Vec<Cell> {
    let width = 8 + 2 * n + 4;
    let Some(pt) = point else {
        let mut cells = vec![Cell::Empty; width];
        cells[0] = sweep;
        cells[1] = Cell::Float(f_q);
        return cells;
    };
    let r = &pt.report;
    let mut cells = vec![
        sweep,
        Cell::Float(pt.f_q),
        Cell::Float(pt.b_exact),
        Cell::Float(r.b_hat),
        Cell::Float(pt.e_hat),
        Cell::from(pt.snapshots),
        Cell::from(r.config.repetitions),
        Cell::from(r.config.subsample_size),
    ];
    cells.extend(r.t_hat.values.iter().map(|&v| Cell::Float(v)));
    cells.push(Cell::Bool(r.hankel.clipped));
    cells.push(Cell::Float(r.hankel.min_eigenvalue));
    cells.push(Cell::Float(r.hankel.condition_number));
    cells.push(Cell::Bool(r.telemetry.subsampled.iter().any(|&s| s)));
    cells
}

fn run_sweep(config: &ExperimentConfig, sweep: &str, points: Vec<(Cell, ShadowTarget)>) -> Result<RunRecord> {
    config.validate()?;
    let n = config.krylov_order;
    let h = config.observable.build(config.n_qubits)?;
    let t0_max = points.iter().map(|(_, t)| t.t0).fold(0.0, f64::max);
    let name = config.output_name();
    let results = points
        .par_iter()
        .enumerate()
        .map(|(i, (_, target))| {
            if !(target.t0 > 0.0) {
                return Ok(None);
            }
            let est = estimator_config(config, target, &h, t0_max, derive_seed(config.seed, i as u64))?;
            let replay = config.replay_dir.as_ref().map(|d| d.join(format!("{name}.{i}.kstb")));
            shadow_point(target, &h, &est, config.ensemble, replay.as_deref()).map(Some)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut record = RunRecord::new(config.clone(), columns(sweep, n));
    let mut telemetry = Vec::new();
    for ((cell, target), point) in points.into_iter().zip(&results) {
        let f_q = qfi_exact(&target.rho, &h)?;
        record.push(row(cell, point.as_ref(), n, f_q));
        telemetry.push(point.as_ref().map(|p| json!({ "elapsed_ms": p.elapsed_ms, "tuples": p.report.telemetry.tuples })));
    }
    record.extra.insert("telemetry".into(), json!(telemetry));
    record.extra.insert("ensemble".into(), json!(config.ensemble));
    Ok(record)
}

/// Pseudo-pure GHZ states over the p grid.
pub fn run_fig2_shadow(config: &ExperimentConfig) -> Result<RunRecord> {
    let n = config.n_qubits;
    let h = config.observable.build(n)?;
    let ghz = ghz_state::<f64>(n)?;
    let points = config
        .p_grid
        .iter()
        .map(|&p| {
            let target = ShadowTarget::new(pseudo_pure(&ghz, p)?, StateDescription::PseudoPure { n_qubits: n, p }, &h)?;
            Ok((Cell::Float(p), target))
        })
        .collect::<Result<Vec<_>>>()?;
    run_sweep(config, "p", points)
}

/// Bound-entangled states over the k grid.
pub fn run_fig3_shadow(config: &ExperimentConfig) -> Result<RunRecord> {
    let n = config.n_qubits;
    let h = config.observable.build(n)?;
    let points = config
        .k_values()
        .into_iter()
        .map(|k| {
            let target =
                ShadowTarget::new(bound_entangled(n, k)?, StateDescription::BoundEntangled { n_qubits: n, k }, &h)?;
            Ok((Cell::from(k), target))
        })
        .collect::<Result<Vec<_>>>()?;
    run_sweep(config, "k", points)
}

pub(crate) fn dispatch(config: &ExperimentConfig) -> Result<RunRecord> {
    match config.experiment {
        Experiment::Fig3b => run_fig3_shadow(config),
        _ => run_fig2_shadow(config),
    }
}
