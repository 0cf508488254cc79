//! Steady-state solution of the master equation and the derived observables.
//!
//! The kernel of the Liouvillian is found by replacing one row with the
//! vectorized trace constraint and solving the resulting nonsingular system.
//! Because every operator in the model is excitation-weight definite, the
//! symmetrized sparsity pattern of L splits into disconnected coherence
//! sectors; the steady state lives in the sector containing the diagonal
//! (trace-carrying) entries, so the dense solve runs on that sector only
//! (274 of 3136 superoperator entries at the default truncation). Finding
//! diagonal entries in more than one sector means physically decoupled
//! subspaces, i.e. a degenerate kernel.

use ndarray::Array2;
use ndarray_linalg::Solve;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::hilbert::DensityOperator;
use crate::model::{
    build_collapse_ops, build_h_two_level, build_liouvillian, Frame, Liouvillian, TwoLevelParams,
};
use crate::{Error, Result, SpaceSpec};

/// Residual bound enforced on every steady solve.
pub const STEADY_RESIDUAL_TOL: f64 = 1e-9;

/// `<b^dag b>` below this reports photon statistics as absent.
const EMPTY_MODE_TOL: f64 = 1e-12;

/// Steady-state observables.
#[derive(Clone, Debug, Serialize)]
pub struct SteadyReport {
    /// Two-photon efficiency in percent, `100 (kappa2 <b'b>/2) / (P <g><g|>)`.
    pub eta: f64,
    /// TPE rate `kappa2 <b'b> / 2` (units of g1).
    pub tpe_rate: f64,
    /// OPE rate `kappa1 <a'a>`.
    pub ope_rate: f64,
    /// Free-space loss rate `gamma <e><e|>`.
    pub loss_rate: f64,
    pub n_a: f64,
    pub n_b: f64,
    pub pop_g: f64,
    pub pop_e: f64,
    /// `<b'^2 b^2> / <b'b>^2`; absent when the b mode is empty.
    pub g2zero: Option<f64>,
    /// `(<b'^2 b^2> - <b'b>^2) / <b'b>`; absent when the b mode is empty.
    pub mandel_q: Option<f64>,
    /// Relative mismatch of `P<g|g> = O + T + L`.
    pub balance_residual: f64,
    pub truncation: SpaceSpec,
}

/// Solve `L rho = 0` with unit trace.
pub fn solve_steady_state(liou: &Liouvillian) -> Result<DensityOperator> {
    let d = liou.dim();
    let n = liou.superop_dim();
    let diag: Vec<usize> = (0..d).map(|i| liou.vec_index(i, i)).collect();

    let comp = liou.matrix().reachable_from(&diag[..1]);
    let mut in_comp = vec![false; n];
    for &i in &comp {
        in_comp[i] = true;
    }
    if diag.iter().any(|&i| !in_comp[i]) {
        return Err(Error::NonUniqueSteadyState(
            "trace support splits across disconnected Liouvillian sectors".into(),
        ));
    }

    let mut m = liou.matrix().gather_dense(&comp);
    let mut rhs = ndarray::Array1::zeros(comp.len());
    // trace constraint replaces the first row
    let mut pos = vec![usize::MAX; n];
    for (k, &i) in comp.iter().enumerate() {
        pos[i] = k;
    }
    for v in m.row_mut(0) {
        *v = C64::new(0.0, 0.0);
    }
    for &i in &diag {
        m[(0, pos[i])] = C64::new(1.0, 0.0);
    }
    rhs[0] = C64::new(1.0, 0.0);

    let sol = m
        .solve_into(rhs)
        .map_err(|e| Error::NumericalFailure(format!("trace-replaced LU solve failed: {e}")))?;

    let mut full = Array2::zeros((d, d));
    for (k, &i) in comp.iter().enumerate() {
        let (r, c) = (i % d, i / d);
        full[(r, c)] = sol[k];
    }
    // hermitize and renormalize away rounding
    let mut rho_m = (&full + &full.t().mapv(|z: C64| z.conj())).mapv(|z| 0.5 * z);
    let tr: C64 = (0..d).map(|i| rho_m[(i, i)]).sum();
    if tr.norm() < 1e-12 {
        return Err(Error::NumericalFailure("steady solve returned zero trace".into()));
    }
    rho_m.mapv_inplace(|z| z / tr);
    let rho = DensityOperator::from_matrix(rho_m)?;

    let resid = liou.residual(&rho);
    if resid > STEADY_RESIDUAL_TOL {
        return Err(Error::NumericalFailure(format!(
            "steady-state residual {resid:.3e} exceeds {STEADY_RESIDUAL_TOL:.0e}"
        )));
    }
    rho.validate()?;
    Ok(rho)
}

/// Diagonal observable accumulators over the product basis.
struct DiagonalMoments {
    n_a: f64,
    n_b: f64,
    b2b2: f64,
    pop: [f64; 3],
}

fn diagonal_moments(rho: &DensityOperator, spec: &SpaceSpec) -> DiagonalMoments {
    let mut out = DiagonalMoments {
        n_a: 0.0,
        n_b: 0.0,
        b2b2: 0.0,
        pop: [0.0; 3],
    };
    for (idx, p) in rho.diagonal().iter().enumerate() {
        let (i, j, k) = spec.labels(idx);
        out.n_a += p * j as f64;
        out.n_b += p * k as f64;
        out.b2b2 += p * (k * k.saturating_sub(1)) as f64;
        out.pop[i] += p;
    }
    // populations are reported raw; rounding-scale negatives are clipped from
    // the derived rates
    out.n_a = out.n_a.max(0.0);
    out.n_b = out.n_b.max(0.0);
    out.b2b2 = out.b2b2.max(0.0);
    out
}

/// Steady-state observables of the two-level model.
pub fn observables(
    rho: &DensityOperator,
    params: &TwoLevelParams,
    spec: &SpaceSpec,
) -> Result<SteadyReport> {
    if spec.atom_levels() != 2 {
        return Err(Error::Unsupported(
            "two-level observables on a non-two-level space".into(),
        ));
    }
    if rho.dim() != spec.dim() {
        return Err(Error::DimensionMismatch(format!(
            "density operator dim {} vs space dim {}",
            rho.dim(),
            spec.dim()
        )));
    }
    let m = diagonal_moments(rho, spec);
    let tpe = params.kappa2 * m.n_b / 2.0;
    let ope = params.kappa1 * m.n_a;
    let loss = params.gamma * m.pop[1];
    let pumped = params.pump * m.pop[0];
    let eta = if pumped > 0.0 { 100.0 * tpe / pumped } else { 0.0 };
    let balance_residual = if pumped > 0.0 {
        (pumped - (ope + tpe + loss)).abs() / pumped
    } else {
        0.0
    };
    let (g2zero, mandel_q) = if m.n_b > EMPTY_MODE_TOL {
        (
            Some(m.b2b2 / (m.n_b * m.n_b)),
            Some((m.b2b2 - m.n_b * m.n_b) / m.n_b),
        )
    } else {
        (None, None)
    };
    Ok(SteadyReport {
        eta,
        tpe_rate: tpe,
        ope_rate: ope,
        loss_rate: loss,
        n_a: m.n_a,
        n_b: m.n_b,
        pop_g: m.pop[0],
        pop_e: m.pop[1],
        g2zero,
        mandel_q,
        balance_residual,
        truncation: *spec,
    })
}

/// Build, solve and reduce in one call.
pub fn steady_report(params: &TwoLevelParams, spec: &SpaceSpec) -> Result<SteadyReport> {
    let h = build_h_two_level(params, spec, Frame::Rotating)?;
    let cs = build_collapse_ops(params, spec)?;
    let liou = build_liouvillian(&h, &cs)?;
    let rho = solve_steady_state(&liou)?;
    observables(&rho, params, spec)
}

fn rates_changed_within(a: &SteadyReport, b: &SteadyReport, tol: f64) -> (bool, f64) {
    let mut worst = 0.0f64;
    for (x, y) in [
        (a.eta, b.eta),
        (a.tpe_rate, b.tpe_rate),
        (a.ope_rate, b.ope_rate),
        (a.loss_rate, b.loss_rate),
    ] {
        let scale = x.abs().max(y.abs()).max(1e-30);
        worst = worst.max((x - y).abs() / scale);
    }
    (worst < tol, worst)
}

pub const DEFAULT_CONVERGENCE_TOL: f64 = 1e-3;
pub const DEFAULT_LADDER_CEILING_DIM: usize = 700;

/// One rung of the truncation ladder: the observables at `spec` and their
/// worst relative drift toward the next rung (infinite on the last).
#[derive(Clone, Debug, Serialize)]
pub struct LadderRung {
    pub spec: SpaceSpec,
    pub report: SteadyReport,
    pub drift: f64,
}

/// Smallest spec on the ladder `(na, nb) -> (na+1, nb+2)` whose observables
/// change by less than `tol` (relative) on the next rung.
pub fn truncation_convergence(
    params: &TwoLevelParams,
    start: SpaceSpec,
    tol: f64,
) -> Result<SpaceSpec> {
    truncation_convergence_with(params, start, tol, DEFAULT_LADDER_CEILING_DIM)
}

pub fn truncation_convergence_with(
    params: &TwoLevelParams,
    start: SpaceSpec,
    tol: f64,
    max_dim: usize,
) -> Result<SpaceSpec> {
    convergence_ladder(params, start, tol, max_dim).map(|(spec, _)| spec)
}

/// Run the ladder and keep every rung for reporting.
pub fn convergence_ladder(
    params: &TwoLevelParams,
    start: SpaceSpec,
    tol: f64,
    max_dim: usize,
) -> Result<(SpaceSpec, Vec<LadderRung>)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParams(format!(
            "convergence tolerance must be > 0, got {tol}"
        )));
    }
    let mut spec = start;
    let mut report = steady_report(params, &spec)?;
    let mut rungs: Vec<LadderRung> = Vec::new();
    let mut drift = f64::INFINITY;
    loop {
        let next = spec.grow();
        if next.dim() > max_dim {
            return Err(Error::ConvergenceFailure {
                drift,
                message: format!(
                    "no convergence below dimension {max_dim}; last rung ({}, {})",
                    spec.na_max(),
                    spec.nb_max()
                ),
            });
        }
        let next_report = steady_report(params, &next)?;
        let (ok, worst) = rates_changed_within(&report, &next_report, tol);
        drift = worst;
        rungs.push(LadderRung {
            spec,
            report: report.clone(),
            drift,
        });
        if ok {
            return Ok((spec, rungs));
        }
        spec = next;
        report = next_report;
    }
}

/// Parameter axis for steady-state sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Kappa1,
    Kappa2,
    Pump,
    Gamma,
    G2,
}

impl SweepAxis {
    pub fn apply(&self, base: &TwoLevelParams, value: f64) -> TwoLevelParams {
        let mut p = *base;
        match self {
            SweepAxis::Kappa1 => p.kappa1 = value,
            SweepAxis::Kappa2 => p.kappa2 = value,
            SweepAxis::Pump => p.pump = value,
            SweepAxis::Gamma => p.gamma = value,
            SweepAxis::G2 => p.g2 = value,
        }
        p
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Kappa1 => "kappa1",
            SweepAxis::Kappa2 => "kappa2",
            SweepAxis::Pump => "pump",
            SweepAxis::Gamma => "gamma",
            SweepAxis::G2 => "g2",
        }
    }

    pub fn parse(name: &str) -> Option<SweepAxis> {
        match name {
            "kappa1" => Some(SweepAxis::Kappa1),
            "kappa2" => Some(SweepAxis::Kappa2),
            "pump" => Some(SweepAxis::Pump),
            "gamma" => Some(SweepAxis::Gamma),
            "g2" => Some(SweepAxis::G2),
            _ => None,
        }
    }
}

/// Truncation policy for sweep points.
#[derive(Clone, Copy, Debug)]
pub enum SpecStrategy {
    Fixed(SpaceSpec),
    Converge {
        start: SpaceSpec,
        tol: f64,
        max_dim: usize,
    },
}

/// Solve the steady state at every grid point; points are independent and
/// dispatched to the worker pool, results ordered by the grid.
pub fn sweep(
    base: &TwoLevelParams,
    axis: SweepAxis,
    grid: &[f64],
    strategy: &SpecStrategy,
) -> Result<Vec<SteadyReport>> {
    grid.par_iter()
        .map(|&value| {
            let p = axis.apply(base, value);
            let spec = match *strategy {
                SpecStrategy::Fixed(s) => s,
                SpecStrategy::Converge { start, tol, max_dim } => {
                    truncation_convergence_with(&p, start, tol, max_dim)?
                }
            };
            steady_report(&p, &spec)
        })
        .collect()
}
