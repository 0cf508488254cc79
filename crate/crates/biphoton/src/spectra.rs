//! Emission spectra of the two cavity modes via the quantum regression
//! theorem.
//!
//! The two-time correlation `C(tau) = Tr[x^dag e^{L tau}(x rho_ss)]`
//! (`x = a` or `b`) is computed by stepping the master equation on the
//! operator `x rho_ss`; the spectrum is the one-sided transform
//! `S(omega) = 2 Re Int_0^inf C(tau) e^{-i omega tau} dtau`, identical to the
//! two-sided integral for stationary correlations. Spectra are reported on a
//! symmetric detuning grid (relative to omega_0 for mode a, omega_0/2 for
//! mode b, in units of g1) with bin width `2 pi / tau_max`, max-normalized.
//!
//! Peak positions follow the dressed levels of the single-excitation
//! manifold: splitting `sqrt(g1^2 + 2 g2^2)`, three peaks for mode b, two
//! for mode a with the central one suppressed by the tiny `|g,1,0>` weight
//! (`sqrt(2) g2 / g1`) of the middle eigenstate.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::hilbert::DensityOperator;
use crate::model::{vectorize, Liouvillian, TwoLevelParams};
use crate::sparse::CsrMatrix;
use crate::{Error, Result, SpaceSpec};

/// Steady-state residual accepted by the correlation stepper.
pub const RHO_RESIDUAL_TOL: f64 = 1e-8;
/// The correlation should decay below this fraction of C(0) by tau_max.
pub const DECAY_WARN_FRACTION: f64 = 1e-4;
/// Largest negative spectral value tolerated (relative to the maximum).
pub const NEGATIVITY_TOL: f64 = 1e-6;

/// Cavity mode selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    A,
    B,
}

impl Mode {
    pub fn label(&self) -> &'static str {
        match self {
            Mode::A => "a",
            Mode::B => "b",
        }
    }
}

/// Uniform correlation time grid: `n` samples spaced by `dtau`
/// (tau_max = (n-1) dtau).
#[derive(Clone, Copy, Debug)]
pub struct TauGrid {
    pub n: usize,
    pub dtau: f64,
}

impl TauGrid {
    pub fn t_max(&self) -> f64 {
        (self.n - 1) as f64 * self.dtau
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|k| k as f64 * self.dtau)
    }

    fn validate(&self) -> Result<()> {
        if self.n < 8 || !(self.dtau > 0.0) {
            return Err(Error::InvalidParams(format!(
                "tau grid needs n >= 8 and dtau > 0, got n={}, dtau={}",
                self.n, self.dtau
            )));
        }
        Ok(())
    }
}

/// Internal integration step ceiling for the correlation evolution.
const MAX_INTERNAL_DT: f64 = 0.02;

/// `C(tau_k) = Tr[x^dag e^{L tau_k}(x rho_ss)]` on the uniform grid.
///
/// The evolution is restricted to the coherence sector reachable from the
/// support of `vec(x rho_ss)` in the Liouvillian's sparsity pattern (an
/// exact restriction: the pattern is block diagonal over sectors).
pub fn two_time_correlation(
    liou: &Liouvillian,
    spec: &SpaceSpec,
    rho_ss: &DensityOperator,
    mode: Mode,
    tau: &TauGrid,
) -> Result<Vec<C64>> {
    tau.validate()?;
    if rho_ss.dim() != liou.dim() || spec.dim() != liou.dim() {
        return Err(Error::DimensionMismatch(
            "Liouvillian, space and density operator disagree".into(),
        ));
    }
    let resid = liou.residual(rho_ss);
    if resid > RHO_RESIDUAL_TOL {
        return Err(Error::NumericalFailure(format!(
            "steady state residual {resid:.3e} above {RHO_RESIDUAL_TOL:.0e}; solve before correlating"
        )));
    }
    let x = match mode {
        Mode::A => spec.annihilator_a(),
        Mode::B => spec.annihilator_b(),
    };
    let d = liou.dim();
    let sigma0 = x.matrix().dot(rho_ss.matrix());
    let v0 = vectorize(&sigma0);
    let support: Vec<usize> = (0..v0.len()).filter(|&i| v0[i].norm() > 0.0).collect();
    if support.is_empty() {
        // x rho_ss = 0 (empty mode): the correlation vanishes identically
        return Ok(vec![C64::new(0.0, 0.0); tau.n]);
    }
    let sector = liou.matrix().reachable_from(&support);
    let sub: CsrMatrix = liou.matrix().gather_csr(&sector);

    // weights for Tr[x^dag sigma] = sum_{j,i} conj(x[j,i]) sigma[j,i]
    let xd = x.matrix();
    let mut weights = vec![C64::new(0.0, 0.0); sector.len()];
    let mut state = vec![C64::new(0.0, 0.0); sector.len()];
    for (k, &g) in sector.iter().enumerate() {
        let (r, c) = (g % d, g / d);
        weights[k] = xd[(r, c)].conj();
        state[k] = v0[g];
    }

    let substeps = (tau.dtau / MAX_INTERNAL_DT).ceil().max(1.0) as usize;
    let dt = tau.dtau / substeps as f64;
    let m = sector.len();
    let mut k1 = vec![C64::new(0.0, 0.0); m];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut tmp = k1.clone();
    let dot = |w: &[C64], s: &[C64]| -> C64 { w.iter().zip(s).map(|(a, b)| a * b).sum() };

    let mut out = Vec::with_capacity(tau.n);
    out.push(dot(&weights, &state));
    for _ in 1..tau.n {
        for _ in 0..substeps {
            sub.matvec_into(&state, &mut k1);
            for i in 0..m {
                tmp[i] = state[i] + 0.5 * dt * k1[i];
            }
            sub.matvec_into(&tmp, &mut k2);
            for i in 0..m {
                tmp[i] = state[i] + 0.5 * dt * k2[i];
            }
            sub.matvec_into(&tmp, &mut k3);
            for i in 0..m {
                tmp[i] = state[i] + dt * k3[i];
            }
            sub.matvec_into(&tmp, &mut k4);
            for i in 0..m {
                state[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        out.push(dot(&weights, &state));
    }
    Ok(out)
}

/// Max-normalized emission spectrum on a symmetric detuning grid.
#[derive(Clone, Debug, Serialize)]
pub struct SpectrumResult {
    pub mode: Mode,
    /// Detunings in units of g1 (relative to omega_0 for mode a, omega_0/2
    /// for mode b).
    pub detunings: Vec<f64>,
    /// Non-negative, max-normalized values.
    pub values: Vec<f64>,
    /// Frequency bin width `2 pi / tau_max`.
    pub resolution: f64,
    pub warnings: Vec<String>,
}

/// One-sided transform with trapezoid weights,
/// `S(omega) = 2 Re sum_k w_k C(tau_k) e^{-i omega tau_k}`,
/// evaluated on the symmetric grid `omega = -n..n * (2 pi / tau_max)` capped
/// at `omega_max`. `linewidth_hint`, when given, triggers the unresolved-peak
/// warning if the bin width exceeds half of it.
pub fn emission_spectrum(
    mode: Mode,
    correlation: &[C64],
    tau: &TauGrid,
    omega_max: f64,
    linewidth_hint: Option<f64>,
) -> Result<SpectrumResult> {
    tau.validate()?;
    if correlation.len() != tau.n {
        return Err(Error::DimensionMismatch(format!(
            "correlation length {} vs tau grid {}",
            correlation.len(),
            tau.n
        )));
    }
    if !(omega_max > 0.0) {
        return Err(Error::InvalidParams("omega_max must be > 0".into()));
    }
    let mut warnings = Vec::new();
    let c0 = correlation[0].norm();
    let tail = correlation[tau.n - 1].norm();
    if c0 > 0.0 && tail > DECAY_WARN_FRACTION * c0 {
        warnings.push(format!(
            "correlation decayed only to {:.2e} of C(0) by tau_max; increase tau_max",
            tail / c0
        ));
    }
    let t_max = tau.t_max();
    let bin = 2.0 * std::f64::consts::PI / t_max;
    if let Some(lw) = linewidth_hint {
        if bin > lw / 2.0 {
            warnings.push(format!(
                "bin width {bin:.3e} exceeds half the expected linewidth {lw:.3e}; peaks may be unresolved"
            ));
        }
    }
    let n_bins = (omega_max / bin).floor() as i64;
    if n_bins < 1 {
        return Err(Error::InvalidParams(format!(
            "omega_max {omega_max} below one bin width {bin:.3e}"
        )));
    }
    let mut detunings = Vec::with_capacity((2 * n_bins + 1) as usize);
    let mut values = Vec::with_capacity(detunings.capacity());
    for k in -n_bins..=n_bins {
        let w = k as f64 * bin;
        let mut acc = C64::new(0.0, 0.0);
        for (idx, (c, t)) in correlation.iter().zip(tau.times()).enumerate() {
            let weight = if idx == 0 || idx == tau.n - 1 { 0.5 } else { 1.0 };
            acc += weight * c * C64::new(0.0, -w * t).exp();
        }
        detunings.push(w);
        values.push(2.0 * (acc * tau.dtau).re);
    }
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(Error::NumericalFailure(
            "spectrum has no positive weight".into(),
        ));
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -NEGATIVITY_TOL * max {
        // truncation ringing is expected (and clipped) when the correlation
        // window was flagged too short; otherwise it is a failure
        if warnings.is_empty() {
            return Err(Error::NumericalFailure(format!(
                "spectral negativity {:.3e} of the maximum exceeds {NEGATIVITY_TOL:.0e}",
                min / max
            )));
        }
        warnings.push(format!(
            "truncation ringing clipped (min {:.3e} of max)",
            min / max
        ));
    }
    for v in &mut values {
        *v = (*v / max).max(0.0);
    }
    Ok(SpectrumResult {
        mode,
        detunings,
        values,
        resolution: bin,
        warnings,
    })
}

/// Dressed-level peak predictions.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DressedPeaks {
    /// `sqrt(g1^2 + 2 g2^2)`.
    pub splitting: f64,
    /// Mode-b peak detunings `{-s, 0, +s}`.
    pub b_peaks: [f64; 3],
    /// Mode-a peak detunings `{-s, +s}`.
    pub a_peaks: [f64; 2],
    /// `sqrt(2) g2 / g1`, the `|g,1,0>` amplitude of the middle eigenstate
    /// that suppresses the mode-a central peak.
    pub suppression_ratio: f64,
}

pub fn dressed_peaks(params: &TwoLevelParams) -> DressedPeaks {
    let s = (params.g1 * params.g1 + 2.0 * params.g2 * params.g2).sqrt();
    DressedPeaks {
        splitting: s,
        b_peaks: [-s, 0.0, s],
        a_peaks: [-s, s],
        suppression_ratio: 2f64.sqrt() * params.g2 / params.g1,
    }
}

/// Interior local maxima with height at least `min_height` (relative to the
/// global maximum of `values`). Returns `(detuning, value)` pairs in grid
/// order.
pub fn find_peaks(detunings: &[f64], values: &[f64], min_height: f64) -> Vec<(f64, f64)> {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = Vec::new();
    for i in 1..values.len().saturating_sub(1) {
        if values[i] > values[i - 1] && values[i] > values[i + 1] && values[i] >= min_height * max {
            out.push((detunings[i], values[i]));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_collapse_ops, build_h_two_level, build_liouvillian, Frame};
    use crate::steady::{observables, solve_steady_state};
    use approx::assert_abs_diff_eq;

    fn fig10_params() -> TwoLevelParams {
        TwoLevelParams {
            kappa2: 0.2,
            ..TwoLevelParams::baseline()
        }
    }

    fn setup(p: &TwoLevelParams, spec: &SpaceSpec) -> (Liouvillian, DensityOperator) {
        let h = build_h_two_level(p, spec, Frame::Rotating).unwrap();
        let cs = build_collapse_ops(p, spec).unwrap();
        let liou = build_liouvillian(&h, &cs).unwrap();
        let rho = solve_steady_state(&liou).unwrap();
        (liou, rho)
    }

    #[test]
    fn correlation_at_zero_delay_is_mode_occupation() {
        let p = fig10_params();
        let spec = SpaceSpec::two_level(2, 4).unwrap();
        let (liou, rho) = setup(&p, &spec);
        let tau = TauGrid { n: 16, dtau: 0.1 };
        for (mode, expected) in [
            (Mode::B, observables(&rho, &p, &spec).unwrap().n_b),
            (Mode::A, observables(&rho, &p, &spec).unwrap().n_a),
        ] {
            let c = two_time_correlation(&liou, &spec, &rho, mode, &tau).unwrap();
            assert_abs_diff_eq!(c[0].re, expected, epsilon = 1e-12);
            assert_abs_diff_eq!(c[0].im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn correlation_decays_and_oscillates_at_dressed_splitting() {
        let p = fig10_params();
        let spec = SpaceSpec::two_level(2, 4).unwrap();
        let (liou, rho) = setup(&p, &spec);
        let tau = TauGrid { n: 2401, dtau: 0.16 };
        let c = two_time_correlation(&liou, &spec, &rho, Mode::B, &tau).unwrap();
        let decay = c.last().unwrap().norm() / c[0].norm();
        assert!(decay < 1e-6, "C_b should be fully decayed, got {decay:.2e}");

        // the transform's side peak sits within a bin of the dressed splitting
        let s = emission_spectrum(Mode::B, &c, &tau, 3.0, Some(p.kappa2)).unwrap();
        let peaks = find_peaks(&s.detunings, &s.values, 0.1);
        assert_eq!(peaks.len(), 3);
        let split = dressed_peaks(&p).splitting;
        assert!((peaks[2].0 - split).abs() <= s.resolution);
    }

    #[test]
    fn b_spectrum_three_peaks_central_dominant() {
        let p = fig10_params();
        let spec = SpaceSpec::two_level(2, 4).unwrap();
        let (liou, rho) = setup(&p, &spec);
        let tau = TauGrid { n: 2401, dtau: 0.16 };
        let c = two_time_correlation(&liou, &spec, &rho, Mode::B, &tau).unwrap();
        let s = emission_spectrum(Mode::B, &c, &tau, 3.0, None).unwrap();
        assert!(s.warnings.is_empty());
        let peaks = find_peaks(&s.detunings, &s.values, 0.1);
        assert_eq!(peaks.len(), 3, "peaks: {peaks:?}");
        // symmetric side peaks around the dominant center
        assert_abs_diff_eq!(peaks[1].0, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(peaks[1].1, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(peaks[0].0, -peaks[2].0, epsilon = 1e-9);
        assert!(peaks[0].1 < 0.5 && peaks[2].1 < 0.5);
        // frozen side-peak position (dissipatively shifted below the bare
        // splitting 1.00995)
        assert_abs_diff_eq!(peaks[2].0.abs(), 0.9981, epsilon = 2.0 * s.resolution);
    }

    #[test]
    fn a_spectrum_two_dominant_peaks_center_suppressed() {
        let p = fig10_params();
        let spec = SpaceSpec::two_level(2, 4).unwrap();
        let (liou, rho) = setup(&p, &spec);
        let tau = TauGrid { n: 2401, dtau: 0.16 };
        let c = two_time_correlation(&liou, &spec, &rho, Mode::A, &tau).unwrap();
        let s = emission_spectrum(Mode::A, &c, &tau, 3.0, None).unwrap();
        let peaks = find_peaks(&s.detunings, &s.values, 0.25);
        assert_eq!(peaks.len(), 2, "peaks: {peaks:?}");
        let split = dressed_peaks(&p).splitting;
        assert!((peaks[0].0 + split).abs() <= s.resolution);
        assert!((peaks[1].0 - split).abs() <= s.resolution);
        let center = s.detunings.len() / 2;
        assert!(s.values[center] < 0.1);
    }

    #[test]
    fn doubling_tau_max_refines_bins_keeps_peaks() {
        let p = fig10_params();
        let spec = SpaceSpec::two_level(1, 3).unwrap();
        let (liou, rho) = setup(&p, &spec);
        let coarse = TauGrid { n: 1201, dtau: 0.16 };
        let fine = TauGrid { n: 2401, dtau: 0.16 };
        let cc = two_time_correlation(&liou, &spec, &rho, Mode::B, &coarse).unwrap();
        let cf = two_time_correlation(&liou, &spec, &rho, Mode::B, &fine).unwrap();
        let sc = emission_spectrum(Mode::B, &cc, &coarse, 2.0, None).unwrap();
        let sf = emission_spectrum(Mode::B, &cf, &fine, 2.0, None).unwrap();
        assert_abs_diff_eq!(sf.resolution, sc.resolution / 2.0, epsilon = 1e-12);
        let pc = find_peaks(&sc.detunings, &sc.values, 0.1);
        let pf = find_peaks(&sf.detunings, &sf.values, 0.1);
        assert_eq!(pc.len(), pf.len());
        // a refined peak stays within the coarser bin of its coarse position
        for (a, b) in pc.iter().zip(&pf) {
            assert!((a.0 - b.0).abs() <= sc.resolution);
        }
    }

    #[test]
    fn dressed_peak_predictions() {
        let p = TwoLevelParams::baseline();
        let d = dressed_peaks(&p);
        assert_abs_diff_eq!(d.splitting, 1.00995049, epsilon = 1e-8);
        assert_abs_diff_eq!(d.suppression_ratio, 0.1414, epsilon = 1e-4);
        let mut bare = p;
        bare.g2 = 0.0;
        assert_abs_diff_eq!(dressed_peaks(&bare).splitting, p.g1, epsilon = 1e-15);
    }

    #[test]
    fn stale_density_operator_rejected() {
        let p = fig10_params();
        let spec = SpaceSpec::two_level(1, 2).unwrap();
        let (liou, _) = setup(&p, &spec);
        // vacuum is not the steady state at P > 0
        let vac = DensityOperator::pure(&crate::hilbert::StateVector::basis_state(
            &spec, 0, 0, 0,
        ));
        let tau = TauGrid { n: 32, dtau: 0.1 };
        assert!(matches!(
            two_time_correlation(&liou, &spec, &vac, Mode::B, &tau),
            Err(Error::NumericalFailure(_))
        ));
    }

    #[test]
    fn decay_warning_emitted_for_short_windows() {
        let p = fig10_params();
        let spec = SpaceSpec::two_level(1, 3).unwrap();
        let (liou, rho) = setup(&p, &spec);
        let tau = TauGrid { n: 101, dtau: 0.16 }; // tau_max = 16, far too short
        let c = two_time_correlation(&liou, &spec, &rho, Mode::A, &tau).unwrap();
        let s = emission_spectrum(Mode::A, &c, &tau, 2.0, Some(0.02)).unwrap();
        assert!(!s.warnings.is_empty());
        // ringing is clipped, never exported negative
        assert!(s.values.iter().all(|&v| v >= 0.0));
    }
}
