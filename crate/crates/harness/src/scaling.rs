//! Resource scaling: the smallest M on a geometric grid reaching Ê ≤ threshold,
//! and the least-squares slope of log₂M* against N.

use kst_core::{bound_entangled, ghz_state, pseudo_pure, Error, Observable, Result, StateDescription};
use kst_shadows::EstimatorConfig;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{Experiment, ExperimentConfig, ScalingConfig};
use crate::record::{Cell, RunRecord};
use crate::shadow::{derive_seed, shadow_point, ShadowTarget};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    PseudoPure,
    BoundEntangled,
}

/// Median Ê over the repetitions at one (N, M).
#[derive(Clone, Debug, Serialize)]
pub struct Probe {
    pub n_qubits: usize,
    pub m: usize,
    pub e_hats: Vec<f64>,
    pub median: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingPoint {
    pub n_qubits: usize,
    pub f_q: f64,
    /// None when no grid M up to m_max met the threshold.
    pub m_star: Option<usize>,
    pub median_at_m_star: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Ordinary least squares y ≈ slope·x + intercept.
pub fn ols_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), found: ys.len() });
    }
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return Err(Error::InsufficientData("a line needs two points".into()));
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateInput("all x values coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok(LinearFit { slope, intercept: my - slope * mx, points: xs.len() })
}

/// m_min·2^(j/steps) rounded, deduplicated, up to m_max.
pub fn m_grid(s: &ScalingConfig) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for j in 0.. {
        let m = (s.m_min as f64 * 2f64.powf(j as f64 / s.steps_per_octave as f64)).round() as usize;
        if m > s.m_max {
            break;
        }
        if out.last() != Some(&m) {
            out.push(m);
        }
    }
    out
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

fn target(family: Family, n: usize, s: &ScalingConfig, h: &Observable<f64>) -> Result<ShadowTarget> {
    match family {
        Family::PseudoPure => {
            let rho = pseudo_pure(&ghz_state(n)?, s.p)?;
            ShadowTarget::new(rho, StateDescription::PseudoPure { n_qubits: n, p: s.p }, h)
        }
        Family::BoundEntangled => {
            ShadowTarget::new(bound_entangled(n, s.k)?, StateDescription::BoundEntangled { n_qubits: n, k: s.k }, h)
        }
    }
}

/// Walks the M grid upwards and returns the first M whose median Ê over `reps`
/// independent batches is at most the threshold, provided the next `confirm`
/// grid points also meet it. Repetition r uses the same seed at every M, so
/// its batches are prefixes of one another.
pub fn find_m_star(
    config: &ExperimentConfig,
    family: Family,
    n: usize,
    trace: &mut Vec<Probe>,
) -> Result<ScalingPoint> {
    let s = &config.scaling;
    let h = config.observable.build(n)?;
    let target = target(family, n, s, &h)?;
    let f_q = kst_core::qfi_exact(&target.rho, &h)?;
    let min_m = config.repetitions * (2 * config.krylov_order + 1);
    let mut candidate: Option<(usize, f64)> = None;
    let mut streak = 0;
    for m in m_grid(s).into_iter().filter(|&m| m >= min_m) {
        let e_hats = (0..s.reps)
            .into_par_iter()
            .map(|r| {
                let seed = derive_seed(config.seed, ((n as u64) << 32) | r as u64);
                let mut est = EstimatorConfig::for_budget(config.krylov_order, config.repetitions, m).with_seed(seed);
                est.tuple_budget = config.tuple_budget;
                shadow_point(&target, &h, &est, config.ensemble, None).map(|p| p.e_hat)
            })
            .collect::<Result<Vec<_>>>()?;
        let med = median(&e_hats);
        log::debug!("N = {n}, M = {m}: median E = {med:.4}");
        trace.push(Probe { n_qubits: n, m, e_hats, median: med });
        if med > s.threshold {
            candidate = None;
            continue;
        }
        match candidate {
            None => {
                candidate = Some((m, med));
                streak = 0;
            }
            Some(_) => streak += 1,
        }
        if let Some((m_star, med_star)) = candidate.filter(|_| streak >= s.confirm) {
            return Ok(ScalingPoint { n_qubits: n, f_q, m_star: Some(m_star), median_at_m_star: Some(med_star) });
        }
    }
    log::warn!("N = {n}: no M up to {} reached the threshold", s.m_max);
    Ok(ScalingPoint { n_qubits: n, f_q, m_star: None, median_at_m_star: None })
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingOutcome {
    pub family: Family,
    pub points: Vec<ScalingPoint>,
    pub fit: Option<LinearFit>,
    pub trace: Vec<Probe>,
}

pub fn scaling_study(config: &ExperimentConfig, family: Family) -> Result<ScalingOutcome> {
    config.validate()?;
    let mut trace = Vec::new();
    let mut points = Vec::new();
    for &n in &config.scaling.n_grid {
        points.push(find_m_star(config, family, n, &mut trace)?);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter_map(|p| p.m_star.map(|m| (p.n_qubits as f64, (m as f64).log2())))
        .unzip();
    let fit = ols_fit(&xs, &ys).ok();
    Ok(ScalingOutcome { family, points, fit, trace })
}

pub fn run_scaling(config: &ExperimentConfig) -> Result<RunRecord> {
    let family = match config.experiment {
        Experiment::Fig3c => Family::BoundEntangled,
        _ => Family::PseudoPure,
    };
    let outcome = scaling_study(config, family)?;
    let columns = ["n_qubits", "f_q", "m_star", "log2_m_star", "median_e_hat"];
    let mut record = RunRecord::new(config.clone(), columns.iter().map(|s| s.to_string()).collect());
    for p in &outcome.points {
        record.push(vec![
            Cell::from(p.n_qubits),
            Cell::Float(p.f_q),
            p.m_star.map_or(Cell::Empty, Cell::from),
            Cell::from(p.m_star.map(|m| (m as f64).log2())),
            Cell::from(p.median_at_m_star),
        ]);
    }
    record.extra.insert("family".into(), json!(outcome.family));
    record.extra.insert("fit".into(), json!({ "method": "ols_log2_m_vs_n", "result": outcome.fit }));
    record.extra.insert("m_grid".into(), json!(m_grid(&config.scaling)));
    record.extra.insert("trace".into(), json!(outcome.trace));
    Ok(record)
}
