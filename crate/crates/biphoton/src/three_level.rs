//! Validation of the effective two-level model against the underlying
//! three-level system.
//!
//! Closed evolution: `|psi_3(t)>` under the full three-level Hamiltonian is
//! compared with `|psi_m(t)>` under the eliminated model (the two-level
//! Hamiltonian with `g2 = (g3^2 + g4^2 - 4 g3 g4)/(2 delta)`, embedded in the
//! three-level space with zero amplitude on the intermediate sectors) through
//! the fidelity `F(t) = |<psi_3|psi_m>|^2`. Both propagators come from exact
//! eigendecompositions of the time-independent Hamiltonians.
//!
//! Open system: steady states of the three-level master equation (atomic
//! channels between `|g>` and `|e>` only) are reduced to the efficiency and
//! emission rates and compared with the two-level model point by point as
//! percentage deviations `D_X = 100 (X_3 - X_2) / X_2`.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::hilbert::{AtomLevel, DensityOperator, Operator, SpaceSpec, StateVector};
use crate::model::{
    build_collapse_ops_three_level, build_h_three_level, build_liouvillian, effective_g2, Frame,
    ThreeLevelParams, TwoLevelParams,
};
use crate::steady::{
    solve_steady_state, truncation_convergence_with, SteadyReport, DEFAULT_CONVERGENCE_TOL,
    DEFAULT_LADDER_CEILING_DIM,
};
use crate::{Error, Result};

/// Closed-evolution fidelity series `F(t) = |<psi_3(t)|psi_m(t)>|^2`.
#[derive(Clone, Debug, Serialize)]
pub struct FidelitySeries {
    /// Times in units of 1/g'.
    pub times: Vec<f64>,
    pub fidelities: Vec<f64>,
}

impl FidelitySeries {
    pub fn min_fidelity(&self) -> f64 {
        self.fidelities.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Embedded two-level comparator Hamiltonian on the three-level space:
/// `delta |i><i| + g1 (a^dag |g><e| + h.c.) + g2 (b^dag^2 |g><e| + h.c.)`
/// (the detuning term never acts on intermediate-free states).
fn build_h_comparator(params: &ThreeLevelParams, spec: &SpaceSpec) -> Result<Operator> {
    let g2 = effective_g2(params.g3, params.g4, params.delta)?;
    let a = spec.annihilator_a();
    let b = spec.annihilator_b();
    let t_ge = spec.atom_transfer(AtomLevel::Ground, AtomLevel::Excited)?;
    let pi = spec.atom_projector(AtomLevel::Intermediate)?;
    let one = a.dag().matmul(&t_ge).scale_re(params.g1);
    let two = b.dag().matmul(&b.dag()).matmul(&t_ge).scale_re(g2);
    pi.scale_re(params.delta)
        .add(&one.add(&one.dag()))
        .add(&two.add(&two.dag()))
        .into_hermitian()
}

struct Propagator {
    eigvals: Array1<f64>,
    eigvecs: Array2<C64>,
}

impl Propagator {
    fn new(h: &Operator) -> Result<Propagator> {
        let (eigvals, eigvecs) = h
            .matrix()
            .eigh(UPLO::Lower)
            .map_err(|e| Error::NumericalFailure(format!("eigendecomposition failed: {e}")))?;
        // the backend returns vectors satisfying M = conj(V) D V^T; store the
        // actual eigenbasis U with M = U D U^dag
        Ok(Propagator {
            eigvals,
            eigvecs: eigvecs.mapv(|z| z.conj()),
        })
    }

    fn evolve(&self, psi0: &Array1<C64>, t: f64) -> Array1<C64> {
        let coeff = self.eigvecs.t().mapv(|z| z.conj()).dot(psi0);
        let phased: Array1<C64> = coeff
            .iter()
            .zip(self.eigvals.iter())
            .map(|(c, &e)| c * C64::new(0.0, -e * t).exp())
            .collect();
        self.eigvecs.dot(&phased)
    }
}

/// Fidelity of the closed (all rates ignored) evolutions from `|e,0,0>`.
pub fn fidelity_series(
    params: &ThreeLevelParams,
    spec: &SpaceSpec,
    t_max: f64,
    dt: f64,
) -> Result<FidelitySeries> {
    if spec.atom_levels() != 3 {
        return Err(Error::Unsupported(
            "fidelity comparison runs on a three-level space".into(),
        ));
    }
    if !(t_max > 0.0 && dt > 0.0 && dt <= t_max) {
        return Err(Error::InvalidParams(format!(
            "need 0 < dt <= t_max, got dt={dt}, t_max={t_max}"
        )));
    }
    let h3 = build_h_three_level(params, spec, Frame::Rotating)?;
    let hm = build_h_comparator(params, spec)?;
    let p3 = Propagator::new(&h3)?;
    let pm = Propagator::new(&hm)?;
    let psi0 = StateVector::basis_state(spec, AtomLevel::Excited.index(), 0, 0)
        .amplitudes()
        .clone();
    let steps = (t_max / dt).round() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut fidelities = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = k as f64 * dt;
        let a = p3.evolve(&psi0, t);
        let b = pm.evolve(&psi0, t);
        // unitarity guard on both propagators
        let na: f64 = a.iter().map(|z| z.norm_sqr()).sum();
        let nb: f64 = b.iter().map(|z| z.norm_sqr()).sum();
        if (na - 1.0).abs() > 1e-10 || (nb - 1.0).abs() > 1e-10 {
            return Err(Error::NumericalFailure(format!(
                "closed evolution lost unit norm at t = {t}"
            )));
        }
        let overlap: C64 = a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum();
        times.push(t);
        fidelities.push(overlap.norm_sqr());
    }
    Ok(FidelitySeries { times, fidelities })
}

/// Steady-state percentage deviations over a kappa2 grid.
#[derive(Clone, Debug, Serialize)]
pub struct MapdReport {
    /// Grid in units of g1.
    pub kappa2_over_g1: Vec<f64>,
    pub d_eta: Vec<Option<f64>>,
    pub d_tpe: Vec<Option<f64>>,
    pub d_ope: Vec<Option<f64>>,
    pub d_loss: Vec<Option<f64>>,
}

impl MapdReport {
    /// Largest |D_X| over all observables and grid points.
    pub fn max_abs_deviation(&self) -> f64 {
        [&self.d_eta, &self.d_tpe, &self.d_ope, &self.d_loss]
            .iter()
            .flat_map(|v| v.iter())
            .filter_map(|d| d.map(f64::abs))
            .fold(0.0, f64::max)
    }
}

/// Efficiency and emission rates of a three-level steady state.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ThreeLevelObservables {
    pub eta: f64,
    pub tpe_rate: f64,
    pub ope_rate: f64,
    pub loss_rate: f64,
    pub pop_g: f64,
    pub pop_e: f64,
    pub pop_i: f64,
    pub balance_residual: f64,
}

pub fn observables_three_level(
    rho: &DensityOperator,
    params: &ThreeLevelParams,
    spec: &SpaceSpec,
) -> Result<ThreeLevelObservables> {
    if spec.atom_levels() != 3 || rho.dim() != spec.dim() {
        return Err(Error::DimensionMismatch(
            "three-level observables need a matching three-level space".into(),
        ));
    }
    let mut n_a = 0.0;
    let mut n_b = 0.0;
    let mut pop = [0.0f64; 3];
    for (idx, p) in rho.diagonal().iter().enumerate() {
        let (i, j, k) = spec.labels(idx);
        n_a += p * j as f64;
        n_b += p * k as f64;
        pop[i] += p;
    }
    let tpe = params.kappa2 * n_b / 2.0;
    let ope = params.kappa1 * n_a;
    let loss = params.gamma * pop[1];
    let pumped = params.pump * pop[0];
    Ok(ThreeLevelObservables {
        eta: if pumped > 0.0 { 100.0 * tpe / pumped } else { 0.0 },
        tpe_rate: tpe,
        ope_rate: ope,
        loss_rate: loss,
        pop_g: pop[0],
        pop_e: pop[1],
        pop_i: pop[2],
        balance_residual: if pumped > 0.0 {
            (pumped - (ope + tpe + loss)).abs() / pumped
        } else {
            0.0
        },
    })
}

/// Solve the three-level master equation at a given truncation.
pub fn steady_report_three_level(
    params: &ThreeLevelParams,
    spec: &SpaceSpec,
) -> Result<ThreeLevelObservables> {
    let h = build_h_three_level(params, spec, Frame::Rotating)?;
    let cs = build_collapse_ops_three_level(params, spec)?;
    let liou = build_liouvillian(&h, &cs)?;
    let rho = solve_steady_state(&liou)?;
    observables_three_level(&rho, params, spec)
}

fn percentage_deviation(x3: f64, x2: f64) -> Option<f64> {
    if x2 == 0.0 {
        None
    } else {
        Some(100.0 * (x3 - x2) / x2)
    }
}

/// Two-level reference parameters of a three-level point: same rates, with
/// `g2 = |effective_g2|` (the sign is a gauge).
pub fn two_level_reference(params: &ThreeLevelParams, kappa2: f64) -> Result<TwoLevelParams> {
    let g2 = effective_g2(params.g3, params.g4, params.delta)?.abs();
    TwoLevelParams::new(
        params.g1,
        g2,
        params.kappa1,
        kappa2,
        params.pump,
        params.gamma,
    )
}

/// Per-point comparison of the three-level steady state against the
/// two-level reference. The two-level truncation converges on the usual
/// ladder; the three-level run reuses it with one extra b quantum (the
/// intermediate sector borrows a photon).
pub fn mapd_sweep(base: &ThreeLevelParams, kappa2_over_g1: &[f64]) -> Result<MapdReport> {
    base.validate()?;
    if kappa2_over_g1.is_empty() {
        return Err(Error::InvalidParams("empty kappa2 grid".into()));
    }
    let rows: Result<Vec<(SteadyReport, ThreeLevelObservables)>> = kappa2_over_g1
        .par_iter()
        .map(|&ratio| {
            let kappa2 = ratio * base.g1;
            let p2 = two_level_reference(base, kappa2)?;
            let start = SpaceSpec::two_level(1, 2)?;
            let spec2 = truncation_convergence_with(
                &p2,
                start,
                DEFAULT_CONVERGENCE_TOL,
                DEFAULT_LADDER_CEILING_DIM,
            )?;
            let r2 = crate::steady::steady_report(&p2, &spec2)?;
            let mut p3 = *base;
            p3.kappa2 = kappa2;
            let spec3 = SpaceSpec::three_level(spec2.na_max(), spec2.nb_max() + 1)?;
            let r3 = steady_report_three_level(&p3, &spec3)?;
            Ok((r2, r3))
        })
        .collect();
    let rows = rows?;
    let mut report = MapdReport {
        kappa2_over_g1: kappa2_over_g1.to_vec(),
        d_eta: Vec::with_capacity(rows.len()),
        d_tpe: Vec::with_capacity(rows.len()),
        d_ope: Vec::with_capacity(rows.len()),
        d_loss: Vec::with_capacity(rows.len()),
    };
    for (r2, r3) in rows {
        report.d_eta.push(percentage_deviation(r3.eta, r2.eta));
        report.d_tpe.push(percentage_deviation(r3.tpe_rate, r2.tpe_rate));
        report.d_ope.push(percentage_deviation(r3.ope_rate, r2.ope_rate));
        report.d_loss.push(percentage_deviation(r3.loss_rate, r2.loss_rate));
    }
    Ok(report)
}
