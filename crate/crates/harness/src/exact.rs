//! Exact-path sweeps: F_Q and every requested bound per grid point.

use kst_core::{
    bound_entangled, commutator_c, fidelity, ghz_state, krylov_bound_exact, legendre_bound, pseudo_pure, qfi_exact,
    relative_error, sub_qfi_bound, taylor_spectral, BoundFamily, DensityMatrix, Error, Observable, PureState, Result,
};
use rayon::prelude::*;

use crate::config::{Experiment, ExperimentConfig};
use crate::record::{Cell, RunRecord};

/// F_Q and the requested bounds of one state. Bounds are `None` when the
/// commutator vanishes (F_Q = 0) or when a Legendre bound has no reference.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactRow {
    pub f_q: f64,
    pub n_star: Option<usize>,
    pub bounds: Vec<Option<f64>>,
}

impl ExactRow {
    pub fn relative_errors(&self) -> Vec<Option<f64>> {
        self.bounds
            .iter()
            .map(|b| b.and_then(|b| relative_error(b, self.f_q).ok()))
            .collect()
    }
}

/// B_n for any n ≥ 1; past the terminal order the hierarchy is constant at F_Q.
pub fn krylov_or_terminal(rho: &DensityMatrix<f64>, h: &Observable<f64>, n: usize) -> Result<(f64, usize)> {
    match krylov_bound_exact(rho, h, n) {
        Ok(b) => Ok((b.value, b.n_star)),
        Err(Error::SubspaceTerminated { n_star, .. }) => {
            let b = krylov_bound_exact(rho, h, n_star)?;
            Ok((b.value, n_star))
        }
        Err(e) => Err(e),
    }
}

pub fn exact_bounds(
    rho: &DensityMatrix<f64>,
    h: &Observable<f64>,
    reference: Option<&PureState<f64>>,
    families: &[BoundFamily],
) -> Result<ExactRow> {
    let f_q = qfi_exact(rho, h)?;
    match commutator_c(rho, h) {
        Err(Error::DegenerateCommutator { .. }) => {
            return Ok(ExactRow { f_q, n_star: None, bounds: vec![None; families.len()] })
        }
        Err(e) => return Err(e),
        Ok(_) => {}
    }
    let orders: Vec<usize> = families
        .iter()
        .filter_map(|f| match f {
            BoundFamily::Taylor(n) => Some(*n),
            _ => None,
        })
        .collect();
    let taylor = if orders.is_empty() { Vec::new() } else { taylor_spectral(rho, h, &orders)? };
    let mut taylor = taylor.into_iter();
    let mut n_star = None;
    let mut bounds = Vec::with_capacity(families.len());
    for family in families {
        let value = match *family {
            BoundFamily::Legendre => match reference {
                Some(psi) => {
                    let f = fidelity(rho, psi)?.clamp(0.0, 1.0);
                    Some(legendre_bound(f, rho.n_qubits())?.value)
                }
                None => None,
            },
            BoundFamily::SubQfi => Some(sub_qfi_bound(rho, h)?.value),
            BoundFamily::Taylor(_) => taylor.next(),
            BoundFamily::Krylov(n) => {
                let (value, terminal) = krylov_or_terminal(rho, h, n)?;
                n_star = Some(terminal);
                Some(value)
            }
        };
        bounds.push(value);
    }
    if n_star.is_none() {
        n_star = Some(krylov_or_terminal(rho, h, 1)?.1);
    }
    Ok(ExactRow { f_q, n_star, bounds })
}

fn columns(sweep: &str, families: &[BoundFamily]) -> Vec<String> {
    let mut cols = vec![sweep.to_string(), "f_q".into(), "n_star".into()];
    cols.extend(families.iter().map(BoundFamily::label));
    cols.extend(families.iter().map(|f| format!("e_{}", f.label())));
    cols
}

fn row(sweep: Cell, exact: &ExactRow) -> Vec<Cell> {
    let mut cells = vec![sweep, Cell::Float(exact.f_q), exact.n_star.map_or(Cell::Empty, Cell::from)];
    cells.extend(exact.bounds.iter().map(|&b| Cell::from(b)));
    cells.extend(exact.relative_errors().into_iter().map(Cell::from));
    cells
}

/// Pseudo-pure GHZ states over the p grid.
pub fn run_fig2_exact(config: &ExperimentConfig) -> Result<RunRecord> {
    config.validate()?;
    let n = config.n_qubits;
    let h = config.observable.build(n)?;
    let ghz = ghz_state::<f64>(n)?;
    let rows = config
        .p_grid
        .par_iter()
        .map(|&p| {
            let rho = pseudo_pure(&ghz, p)?;
            exact_bounds(&rho, &h, Some(&ghz), &config.bounds)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut record = RunRecord::new(config.clone(), columns("p", &config.bounds));
    for (&p, r) in config.p_grid.iter().zip(&rows) {
        record.push(row(Cell::Float(p), r));
    }
    Ok(record)
}

/// Bound-entangled states over the k grid.
pub fn run_fig3_exact(config: &ExperimentConfig) -> Result<RunRecord> {
    config.validate()?;
    let n = config.n_qubits;
    let h = config.observable.build(n)?;
    let ghz = ghz_state::<f64>(n)?;
    let ks = config.k_values();
    let rows = ks
        .par_iter()
        .map(|&k| exact_bounds(&bound_entangled(n, k)?, &h, Some(&ghz), &config.bounds))
        .collect::<Result<Vec<_>>>()?;
    let mut record = RunRecord::new(config.clone(), columns("k", &config.bounds));
    for (&k, r) in ks.iter().zip(&rows) {
        record.push(row(Cell::from(k), r));
    }
    Ok(record)
}

pub(crate) fn dispatch(config: &ExperimentConfig) -> Result<RunRecord> {
    match config.experiment {
        Experiment::Fig3a => run_fig3_exact(config),
        _ => run_fig2_exact(config),
    }
}
