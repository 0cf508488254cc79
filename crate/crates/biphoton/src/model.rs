//! Hamiltonians, collapse channels and the vectorized Liouvillian.
//!
//! Two-level model (couplings in units of g1):
//!
//! ```text
//! H = H0 + g1 (a^dag sigma_- + a sigma_+) + g2 (b^dag^2 sigma_- + b^2 sigma_+)
//! H0 = omega0 (sigma_z / 2 + a^dag a + b^dag b / 2)
//! ```
//!
//! All steady-state, trajectory and spectral computations run in the rotating
//! frame generated by H0 (dropping the `omega0` diagonal terms), which
//! commutes with the interaction and with every channel number operator, so
//! steady-state observables are frame independent; spectra are reported as
//! detunings. The three-level frame assigns zero phase to the intermediate
//! level, so its `delta |i><i|` detuning term survives.
//!
//! Master equation convention: channel `c` at rate `r` enters the dissipator
//! as `r (c rho c^dag - {c^dag c, rho} / 2)`, matching the rate/2 prefactor
//! in front of the `2 c rho c^dag - c^dag c rho - rho c^dag c` form. Collapse
//! operators returned by the builders are pre-scaled by `sqrt(rate)`.
//!
//! Vectorization is column-stacking: `vec(rho)[i + D*j] = rho[(i, j)]`, so
//! `vec(A rho B) = (B^T ⊗ A) vec(rho)`.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::hilbert::{AtomLevel, DensityOperator, Operator, SpaceSpec};
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

/// Whether the `omega0` diagonal terms are included.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Frame {
    #[default]
    Rotating,
    Lab,
}

/// Rates and couplings of the effective two-level model, in units of g1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoLevelParams {
    pub g1: f64,
    pub g2: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub pump: f64,
    pub gamma: f64,
    #[serde(default)]
    pub omega0: Option<f64>,
}

impl TwoLevelParams {
    pub fn new(g1: f64, g2: f64, kappa1: f64, kappa2: f64, pump: f64, gamma: f64) -> Result<Self> {
        let p = TwoLevelParams {
            g1,
            g2,
            kappa1,
            kappa2,
            pump,
            gamma,
            omega0: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g1 > 0.0) {
            return Err(Error::InvalidParams(format!("g1 must be > 0, got {}", self.g1)));
        }
        for (name, v) in [
            ("g2", self.g2),
            ("kappa1", self.kappa1),
            ("kappa2", self.kappa2),
            ("pump", self.pump),
            ("gamma", self.gamma),
        ] {
            if !(v >= 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be >= 0, got {v}")));
            }
        }
        if let Some(w) = self.omega0 {
            if !(w >= 0.0) {
                return Err(Error::InvalidParams(format!("omega0 must be >= 0, got {w}")));
            }
        }
        Ok(())
    }

    /// Reference operating point: g2 = 0.1 g1, kappa1 = 0.02 g1, kappa2 = g1,
    /// gamma = 0.016 g1, P = 0.005 g1.
    pub fn baseline() -> Self {
        TwoLevelParams {
            g1: 1.0,
            g2: 0.1,
            kappa1: 0.02,
            kappa2: 1.0,
            pump: 0.005,
            gamma: 0.016,
            omega0: None,
        }
    }
}

/// Rates and couplings of the three-level system, in units of g'
/// (the b-mode coupling scale; conventionally g3 = g4 = g').
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreeLevelParams {
    pub g1: f64,
    pub g3: f64,
    pub g4: f64,
    pub delta: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub pump: f64,
    pub gamma: f64,
    #[serde(default)]
    pub omega0: Option<f64>,
}

impl ThreeLevelParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        g1: f64,
        g3: f64,
        g4: f64,
        delta: f64,
        kappa1: f64,
        kappa2: f64,
        pump: f64,
        gamma: f64,
    ) -> Result<Self> {
        let p = ThreeLevelParams {
            g1,
            g3,
            g4,
            delta,
            kappa1,
            kappa2,
            pump,
            gamma,
            omega0: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("g1", self.g1),
            ("g3", self.g3),
            ("g4", self.g4),
            ("kappa1", self.kappa1),
            ("kappa2", self.kappa2),
            ("pump", self.pump),
            ("gamma", self.gamma),
        ] {
            if !(v >= 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// The dispersive elimination needs `|delta|` well above every coupling;
    /// flags parameter sets with `|delta| < 10 * max(g1, g3, g4)`.
    pub fn detuning_warning(&self) -> bool {
        self.delta.abs() < 10.0 * self.g1.max(self.g3).max(self.g4)
    }

    /// Reference operating point in units of g': g1 = 0.1, g3 = g4 = 1,
    /// delta = 100, with the kappa/P/gamma baseline expressed through g1.
    pub fn baseline() -> Self {
        let g1 = 0.1;
        ThreeLevelParams {
            g1,
            g3: 1.0,
            g4: 1.0,
            delta: 100.0,
            kappa1: 0.02 * g1,
            kappa2: 1.0 * g1,
            pump: 0.005 * g1,
            gamma: 0.016 * g1,
            omega0: None,
        }
    }
}

/// Jump channel labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CollapseChannel {
    APhoton,
    BPhoton,
    Decay,
    Pump,
}

impl CollapseChannel {
    pub const ALL: [CollapseChannel; 4] = [
        CollapseChannel::APhoton,
        CollapseChannel::BPhoton,
        CollapseChannel::Decay,
        CollapseChannel::Pump,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            CollapseChannel::APhoton => "A_PHOTON",
            CollapseChannel::BPhoton => "B_PHOTON",
            CollapseChannel::Decay => "DECAY",
            CollapseChannel::Pump => "PUMP",
        }
    }
}

impl fmt::Display for CollapseChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One collapse channel; `op` is already scaled by `sqrt(rate)`.
#[derive(Clone, Debug)]
pub struct CollapseOp {
    pub channel: CollapseChannel,
    pub rate: f64,
    pub op: Operator,
}

fn h0_two_level(omega0: f64, spec: &SpaceSpec) -> Operator {
    let d = spec.dim();
    let mut m = Array2::zeros((d, d));
    for idx in 0..d {
        let (i, j, k) = spec.labels(idx);
        let sz_half = if i == 1 { 0.5 } else { -0.5 };
        m[(idx, idx)] = C64::new(omega0 * (sz_half + j as f64 + 0.5 * k as f64), 0.0);
    }
    Operator::hermitian_from_matrix(m).unwrap()
}

/// Two-level Hamiltonian
/// `H = [H0] + g1 (a^dag sigma_- + a sigma_+) + g2 (b^dag^2 sigma_- + b^2 sigma_+)`.
pub fn build_h_two_level(
    params: &TwoLevelParams,
    spec: &SpaceSpec,
    frame: Frame,
) -> Result<Operator> {
    if spec.atom_levels() != 2 {
        return Err(Error::Unsupported(
            "two-level Hamiltonian on a non-two-level space".into(),
        ));
    }
    params.validate()?;
    let a = spec.annihilator_a();
    let b = spec.annihilator_b();
    let sm = spec.sigma_minus();
    let one = a.dag().matmul(&sm).scale_re(params.g1);
    let b2 = b.matmul(&b);
    let two = b2.dag().matmul(&sm).scale_re(params.g2);
    let mut h = one.add(&one.dag()).add(&two.add(&two.dag()));
    if frame == Frame::Lab {
        let w0 = params.omega0.ok_or_else(|| {
            Error::InvalidParams("lab-frame Hamiltonian requires omega0".into())
        })?;
        h = h.add(&h0_two_level(w0, spec));
    }
    h.into_hermitian()
}

fn h0_three_level(omega0: f64, spec: &SpaceSpec) -> Operator {
    let d = spec.dim();
    let mut m = Array2::zeros((d, d));
    for idx in 0..d {
        let (i, j, k) = spec.labels(idx);
        // |i> carries zero frame phase
        let atom = match i {
            0 => -0.5,
            1 => 0.5,
            _ => 0.0,
        };
        m[(idx, idx)] = C64::new(omega0 * (atom + j as f64 + 0.5 * k as f64), 0.0);
    }
    Operator::hermitian_from_matrix(m).unwrap()
}

/// Three-level Hamiltonian: in the rotating frame
/// `H3 = delta |i><i| + g1 (a^dag |g><e| + h.c.) + g3 (b^dag |g><i| + h.c.)
///  + g4 (b^dag |i><e| + h.c.)`.
pub fn build_h_three_level(
    params: &ThreeLevelParams,
    spec: &SpaceSpec,
    frame: Frame,
) -> Result<Operator> {
    if spec.atom_levels() != 3 {
        return Err(Error::Unsupported(
            "three-level Hamiltonian on a non-three-level space".into(),
        ));
    }
    params.validate()?;
    let a = spec.annihilator_a();
    let b = spec.annihilator_b();
    let t_ge = spec.atom_transfer(AtomLevel::Ground, AtomLevel::Excited)?;
    let t_gi = spec.atom_transfer(AtomLevel::Ground, AtomLevel::Intermediate)?;
    let t_ie = spec.atom_transfer(AtomLevel::Intermediate, AtomLevel::Excited)?;
    let pi = spec.atom_projector(AtomLevel::Intermediate)?;

    let c1 = a.dag().matmul(&t_ge).scale_re(params.g1);
    let c3 = b.dag().matmul(&t_gi).scale_re(params.g3);
    let c4 = b.dag().matmul(&t_ie).scale_re(params.g4);
    let mut h = pi.scale_re(params.delta);
    for c in [c1, c3, c4] {
        h = h.add(&c.add(&c.dag()));
    }
    if frame == Frame::Lab {
        let w0 = params.omega0.ok_or_else(|| {
            Error::InvalidParams("lab-frame Hamiltonian requires omega0".into())
        })?;
        h = h.add(&h0_three_level(w0, spec));
    }
    h.into_hermitian()
}

/// Two-level jump operators `{sqrt(kappa1) a, sqrt(kappa2) b, sqrt(gamma)
/// sigma_-, sqrt(P) sigma_+}`; zero-rate channels are omitted.
pub fn build_collapse_ops(params: &TwoLevelParams, spec: &SpaceSpec) -> Result<Vec<CollapseOp>> {
    if spec.atom_levels() != 2 {
        return Err(Error::Unsupported(
            "two-level collapse operators on a non-two-level space".into(),
        ));
    }
    params.validate()?;
    let mut out = Vec::new();
    let mut push = |channel, rate: f64, op: Operator| {
        if rate > 0.0 {
            out.push(CollapseOp {
                channel,
                rate,
                op: op.scale_re(rate.sqrt()),
            });
        }
    };
    push(CollapseChannel::APhoton, params.kappa1, spec.annihilator_a());
    push(CollapseChannel::BPhoton, params.kappa2, spec.annihilator_b());
    push(CollapseChannel::Decay, params.gamma, spec.sigma_minus());
    push(CollapseChannel::Pump, params.pump, spec.sigma_plus());
    Ok(out)
}

/// Three-level jump operators; the atomic channels act between `|g>` and
/// `|e>` only (the intermediate-level decays are negligible at large
/// detuning and carry no channel here).
pub fn build_collapse_ops_three_level(
    params: &ThreeLevelParams,
    spec: &SpaceSpec,
) -> Result<Vec<CollapseOp>> {
    if spec.atom_levels() != 3 {
        return Err(Error::Unsupported(
            "three-level collapse operators on a non-three-level space".into(),
        ));
    }
    params.validate()?;
    let t_ge = spec.atom_transfer(AtomLevel::Ground, AtomLevel::Excited)?;
    let t_eg = spec.atom_transfer(AtomLevel::Excited, AtomLevel::Ground)?;
    let mut out = Vec::new();
    let mut push = |channel, rate: f64, op: Operator| {
        if rate > 0.0 {
            out.push(CollapseOp {
                channel,
                rate,
                op: op.scale_re(rate.sqrt()),
            });
        }
    };
    push(CollapseChannel::APhoton, params.kappa1, spec.annihilator_a());
    push(CollapseChannel::BPhoton, params.kappa2, spec.annihilator_b());
    push(CollapseChannel::Decay, params.gamma, t_ge);
    push(CollapseChannel::Pump, params.pump, t_eg);
    Ok(out)
}

/// Non-Hermitian effective Hamiltonian for the no-jump evolution,
/// `H_e = H - (i/2)(kappa1 a^dag a + kappa2 b^dag b + P |g><g| + gamma |e><e|)`.
pub fn build_h_effective(params: &TwoLevelParams, spec: &SpaceSpec) -> Result<Operator> {
    let h = build_h_two_level(params, spec, Frame::Rotating)?;
    let d = spec.dim();
    let mut m = h.into_matrix();
    for idx in 0..d {
        let (i, j, k) = spec.labels(idx);
        let atom_rate = if i == 0 { params.pump } else { params.gamma };
        let total = params.kappa1 * j as f64 + params.kappa2 * k as f64 + atom_rate;
        m[(idx, idx)] -= C64::new(0.0, 0.5 * total);
    }
    Operator::from_matrix(m)
}

/// Vectorized Lindblad generator, `d vec(rho)/dt = L vec(rho)`, stored
/// sparse. Column-stacking convention.
#[derive(Clone, Debug)]
pub struct Liouvillian {
    dim: usize,
    mat: CsrMatrix,
}

impl Liouvillian {
    /// Hilbert-space dimension D.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Superoperator dimension D^2.
    pub fn superop_dim(&self) -> usize {
        self.dim * self.dim
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.mat
    }

    /// vec index of `rho[(r, c)]`.
    pub fn vec_index(&self, r: usize, c: usize) -> usize {
        r + self.dim * c
    }

    /// `L vec(rho)` for a density-matrix-shaped argument.
    pub fn apply_to_matrix(&self, rho: &Array2<C64>) -> Vec<C64> {
        let v = vectorize(rho);
        self.mat.matvec(&v)
    }

    /// Max-abs of `vec(I)^T L`, the trace-preservation residual.
    pub fn trace_preservation_residual(&self) -> f64 {
        let n = self.superop_dim();
        let mut acc = vec![C64::new(0.0, 0.0); n];
        for i in 0..self.dim {
            let r = self.vec_index(i, i);
            let (cols, vals) = self.mat.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                acc[c] += v;
            }
        }
        acc.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Max-abs residual `||L vec(rho)||_inf`.
    pub fn residual(&self, rho: &DensityOperator) -> f64 {
        self.apply_to_matrix(rho.matrix())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// Column-stack a matrix.
pub fn vectorize(m: &Array2<C64>) -> Vec<C64> {
    let d = m.nrows();
    let mut v = vec![C64::new(0.0, 0.0); d * d];
    for j in 0..d {
        for i in 0..d {
            v[i + d * j] = m[(i, j)];
        }
    }
    v
}

/// Undo [`vectorize`].
pub fn unvectorize(v: &[C64], d: usize) -> Array2<C64> {
    let mut m = Array2::zeros((d, d));
    for j in 0..d {
        for i in 0..d {
            m[(i, j)] = v[i + d * j];
        }
    }
    m
}

// vec(A rho): L[(i + D j), (k + D j)] += A[i, k]
fn add_left_mult(trip: &mut Vec<(usize, usize, C64)>, a: &Array2<C64>, scale: C64) {
    let d = a.nrows();
    for i in 0..d {
        for k in 0..d {
            let v = a[(i, k)] * scale;
            if v != C64::new(0.0, 0.0) {
                for j in 0..d {
                    trip.push((i + d * j, k + d * j, v));
                }
            }
        }
    }
}

// vec(rho B): L[(i + D j), (i + D k)] += B[k, j]
fn add_right_mult(trip: &mut Vec<(usize, usize, C64)>, b: &Array2<C64>, scale: C64) {
    let d = b.nrows();
    for k in 0..d {
        for j in 0..d {
            let v = b[(k, j)] * scale;
            if v != C64::new(0.0, 0.0) {
                for i in 0..d {
                    trip.push((i + d * j, i + d * k, v));
                }
            }
        }
    }
}

// vec(c rho c^dag): L[(i + D j), (k + D l)] += c[i, k] conj(c[j, l])
fn add_sandwich(trip: &mut Vec<(usize, usize, C64)>, c: &Array2<C64>) {
    let d = c.nrows();
    let mut nz: Vec<(usize, usize, C64)> = Vec::new();
    for i in 0..d {
        for k in 0..d {
            let v = c[(i, k)];
            if v != C64::new(0.0, 0.0) {
                nz.push((i, k, v));
            }
        }
    }
    for &(i, k, vik) in &nz {
        for &(j, l, vjl) in &nz {
            trip.push((i + d * j, k + d * l, vik * vjl.conj()));
        }
    }
}

/// Build the Lindblad generator from a Hamiltonian and pre-scaled collapse
/// operators: `L = -i(I⊗H - H^T⊗I) + Σ_c [conj(c)⊗c - (I⊗c^dag c + (c^dag c)^T⊗I)/2]`.
pub fn build_liouvillian(h: &Operator, collapse: &[CollapseOp]) -> Result<Liouvillian> {
    let d = h.dim();
    for c in collapse {
        if c.op.dim() != d {
            return Err(Error::DimensionMismatch(format!(
                "collapse operator dim {} vs Hamiltonian dim {}",
                c.op.dim(),
                d
            )));
        }
    }
    let mut trip: Vec<(usize, usize, C64)> = Vec::new();
    let minus_i = C64::new(0.0, -1.0);
    let plus_i = C64::new(0.0, 1.0);
    add_left_mult(&mut trip, h.matrix(), minus_i);
    add_right_mult(&mut trip, h.matrix(), plus_i);
    let half = C64::new(-0.5, 0.0);
    for c in collapse {
        add_sandwich(&mut trip, c.op.matrix());
        let cdc = c.op.dag().matmul(&c.op);
        add_left_mult(&mut trip, cdc.matrix(), half);
        add_right_mult(&mut trip, cdc.matrix(), half);
    }
    Ok(Liouvillian {
        dim: d,
        mat: CsrMatrix::from_triplets(d * d, d * d, trip),
    })
}

/// Dispersive-elimination generator
/// `S = (g4/delta) b^dag |i><e| - (g3/delta) b^dag |g><i| - h.c.`;
/// anti-Hermitian by construction.
pub fn transform_generator(params: &ThreeLevelParams, spec: &SpaceSpec) -> Result<Operator> {
    if spec.atom_levels() != 3 {
        return Err(Error::Unsupported(
            "transform generator on a non-three-level space".into(),
        ));
    }
    if params.delta == 0.0 {
        return Err(Error::DegenerateParameters(
            "transform generator undefined at delta = 0".into(),
        ));
    }
    let b = spec.annihilator_b();
    let t_ie = spec.atom_transfer(AtomLevel::Intermediate, AtomLevel::Excited)?;
    let t_gi = spec.atom_transfer(AtomLevel::Ground, AtomLevel::Intermediate)?;
    let fwd = b
        .dag()
        .matmul(&t_ie)
        .scale_re(params.g4 / params.delta)
        .sub(&b.dag().matmul(&t_gi).scale_re(params.g3 / params.delta));
    Ok(fwd.sub(&fwd.dag()))
}

/// Effective two-photon coupling of the eliminated three-level system,
/// `g2 = (g3^2 + g4^2 - 4 g3 g4) / (2 delta)`.
pub fn effective_g2(g3: f64, g4: f64, delta: f64) -> Result<f64> {
    if delta == 0.0 {
        return Err(Error::DegenerateParameters(
            "effective g2 undefined at delta = 0".into(),
        ));
    }
    Ok((g3 * g3 + g4 * g4 - 4.0 * g3 * g4) / (2.0 * delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{excitation_number, StateVector};
    use approx::assert_abs_diff_eq;
    use ndarray_linalg::{Eigh, UPLO};

    fn baseline_spec() -> SpaceSpec {
        SpaceSpec::two_level(1, 2).unwrap()
    }

    #[test]
    fn two_level_matrix_elements() {
        let spec = baseline_spec();
        let p = TwoLevelParams::baseline();
        let h = build_h_two_level(&p, &spec, Frame::Rotating).unwrap();
        // <g,1,0| H |e,0,0> = g1
        let r = spec.index(0, 1, 0);
        let c = spec.index(1, 0, 0);
        assert_abs_diff_eq!(h.matrix()[(r, c)].re, p.g1, epsilon = 1e-15);
        // <g,0,2| H |e,0,0> = sqrt(2) g2
        let r = spec.index(0, 0, 2);
        assert_abs_diff_eq!(h.matrix()[(r, c)].re, 2f64.sqrt() * p.g2, epsilon = 1e-15);
        assert!(h.is_hermitian());
    }

    #[test]
    fn single_excitation_block_eigenvalues() {
        // restricted to {|e,0,0>, |g,1,0>, |g,0,2>} the rotating-frame H has
        // eigenvalues {0, +-sqrt(g1^2 + 2 g2^2)}
        let spec = baseline_spec();
        let p = TwoLevelParams::baseline();
        let h = build_h_two_level(&p, &spec, Frame::Rotating).unwrap();
        let idx = [spec.index(1, 0, 0), spec.index(0, 1, 0), spec.index(0, 0, 2)];
        let mut block = Array2::zeros((3, 3));
        for (r, &ir) in idx.iter().enumerate() {
            for (c, &ic) in idx.iter().enumerate() {
                block[(r, c)] = h.matrix()[(ir, ic)];
            }
        }
        let (eigs, _) = block.eigh(UPLO::Lower).unwrap();
        let s = (p.g1 * p.g1 + 2.0 * p.g2 * p.g2).sqrt();
        assert_abs_diff_eq!(eigs[0], -s, epsilon = 1e-12);
        assert_abs_diff_eq!(eigs[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eigs[2], s, epsilon = 1e-12);
        assert_abs_diff_eq!(s, 1.00995049, epsilon = 1e-7);
    }

    #[test]
    fn hamiltonian_commutes_with_excitation_number() {
        let spec = SpaceSpec::two_level(2, 4).unwrap();
        let p = TwoLevelParams::baseline();
        let n = excitation_number(&spec).unwrap();
        let h = build_h_two_level(&p, &spec, Frame::Rotating).unwrap();
        assert!(h.commutator(&n).max_abs() < 1e-12);
        let he = build_h_effective(&p, &spec).unwrap();
        assert!(he.commutator(&n).max_abs() < 1e-12);
    }

    #[test]
    fn effective_hamiltonian_diagonal_damping() {
        let spec = baseline_spec();
        let p = TwoLevelParams::baseline();
        let he = build_h_effective(&p, &spec).unwrap();
        let h = build_h_two_level(&p, &spec, Frame::Rotating).unwrap();
        let anti = he.sub(&h);
        for idx in 0..spec.dim() {
            let (i, j, k) = spec.labels(idx);
            let rate = p.kappa1 * j as f64
                + p.kappa2 * k as f64
                + if i == 0 { p.pump } else { p.gamma };
            assert_abs_diff_eq!(anti.matrix()[(idx, idx)].im, -0.5 * rate, epsilon = 1e-15);
            assert_abs_diff_eq!(anti.matrix()[(idx, idx)].re, 0.0, epsilon = 1e-15);
        }
        // all rates zero => H_e = H
        let free = TwoLevelParams::new(1.0, 0.1, 0.0, 0.0, 0.0, 0.0).unwrap();
        let he = build_h_effective(&free, &spec).unwrap();
        let h = build_h_two_level(&free, &spec, Frame::Rotating).unwrap();
        assert!(he.sub(&h).max_abs() < 1e-15);
    }

    #[test]
    fn collapse_channels_respect_rates() {
        let spec = baseline_spec();
        let mut p = TwoLevelParams::baseline();
        p.pump = 0.0;
        let ops = build_collapse_ops(&p, &spec).unwrap();
        assert_eq!(ops.len(), 3);
        assert!(ops.iter().all(|c| c.channel != CollapseChannel::Pump));

        // channel-a operator's largest singular value is sqrt(kappa1 * na_max)
        let p = TwoLevelParams::baseline();
        let ops = build_collapse_ops(&p, &spec).unwrap();
        let a = ops
            .iter()
            .find(|c| c.channel == CollapseChannel::APhoton)
            .unwrap();
        let ata = a.op.dag().matmul(&a.op);
        let max_sv = ata.max_abs().sqrt();
        assert_abs_diff_eq!(
            max_sv,
            (p.kappa1 * spec.na_max() as f64).sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn liouvillian_preserves_trace() {
        let spec = baseline_spec();
        let p = TwoLevelParams::baseline();
        let h = build_h_two_level(&p, &spec, Frame::Rotating).unwrap();
        let cs = build_collapse_ops(&p, &spec).unwrap();
        let liou = build_liouvillian(&h, &cs).unwrap();
        assert!(liou.trace_preservation_residual() < 1e-10);
    }

    #[test]
    fn liouvillian_matches_direct_master_equation_rhs() {
        // L vec(rho) must equal vec(-i[H,rho] + sum_c c rho c^dag - {c^dag c, rho}/2)
        // on a random Hermitian rho
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let spec = baseline_spec();
        let d = spec.dim();
        let p = TwoLevelParams::baseline();
        let h = build_h_two_level(&p, &spec, Frame::Rotating).unwrap();
        let cs = build_collapse_ops(&p, &spec).unwrap();
        let liou = build_liouvillian(&h, &cs).unwrap();

        let mut m = Array2::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] = C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            }
        }
        let rho = &m + &m.t().mapv(|z: C64| z.conj());

        let mut rhs = h.matrix().dot(&rho) - rho.dot(h.matrix());
        rhs.mapv_inplace(|z| z * C64::new(0.0, -1.0));
        for c in &cs {
            let cm = c.op.matrix();
            let cd = c.op.dag();
            let cdc = cd.matmul(&c.op);
            let anti = (cdc.matrix().dot(&rho) + rho.dot(cdc.matrix())).mapv(|z| 0.5 * z);
            rhs = rhs + cm.dot(&rho).dot(cd.matrix()) - anti;
        }
        let got = liou.apply_to_matrix(&rho);
        let want = vectorize(&rhs);
        let dev = got
            .iter()
            .zip(&want)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(dev < 1e-12, "vectorization mismatch {dev:.3e}");
    }

    #[test]
    fn pure_atomic_decay_is_exponential() {
        // H = 0, single channel sqrt(gamma) sigma_-: excited population decays
        // as e^{-gamma t}; evolved with RK4 on the vectorized generator
        let spec = baseline_spec();
        let gamma: f64 = 0.3;
        let sm = spec.sigma_minus().scale_re(gamma.sqrt());
        let cs = vec![CollapseOp {
            channel: CollapseChannel::Decay,
            rate: gamma,
            op: sm,
        }];
        let h = Operator::zeros(spec.dim());
        let liou = build_liouvillian(&h, &cs).unwrap();
        let psi = StateVector::basis_state(&spec, 1, 0, 0);
        let rho = DensityOperator::pure(&psi);
        let mut v = vectorize(rho.matrix());
        let dt = 0.01;
        let steps = 200;
        let n = v.len();
        let mut k1 = vec![C64::new(0.0, 0.0); n];
        let mut k2 = k1.clone();
        let mut k3 = k1.clone();
        let mut k4 = k1.clone();
        let mut tmp = k1.clone();
        for _ in 0..steps {
            liou.matrix().matvec_into(&v, &mut k1);
            for i in 0..n {
                tmp[i] = v[i] + 0.5 * dt * k1[i];
            }
            liou.matrix().matvec_into(&tmp, &mut k2);
            for i in 0..n {
                tmp[i] = v[i] + 0.5 * dt * k2[i];
            }
            liou.matrix().matvec_into(&tmp, &mut k3);
            for i in 0..n {
                tmp[i] = v[i] + dt * k3[i];
            }
            liou.matrix().matvec_into(&tmp, &mut k4);
            for i in 0..n {
                v[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        let t = dt * steps as f64;
        let idx = spec.index(1, 0, 0);
        let pop = v[idx + spec.dim() * idx].re;
        assert_abs_diff_eq!(pop, (-gamma * t).exp(), epsilon = 1e-9);
    }

    #[test]
    fn three_level_matrix_elements() {
        let spec = SpaceSpec::three_level(1, 2).unwrap();
        let p = ThreeLevelParams::baseline();
        let h = build_h_three_level(&p, &spec, Frame::Rotating).unwrap();
        // <i,0,0| H3 |i,0,0> = delta
        let ii = spec.index(2, 0, 0);
        assert_abs_diff_eq!(h.matrix()[(ii, ii)].re, p.delta, epsilon = 1e-12);
        // <g,0,1| H3 |i,0,0> = g3
        let r = spec.index(0, 0, 1);
        assert_abs_diff_eq!(h.matrix()[(r, ii)].re, p.g3, epsilon = 1e-12);
        assert!(h.is_hermitian());
    }

    #[test]
    fn transform_generator_elements() {
        let spec = SpaceSpec::three_level(1, 2).unwrap();
        let p = ThreeLevelParams::baseline();
        let s = transform_generator(&p, &spec).unwrap();
        // anti-Hermitian: S + S^dag = 0
        assert!(s.add(&s.dag()).max_abs() < 1e-15);
        // <i,0,1| S |e,0,0> = g4/delta
        let r = spec.index(2, 0, 1);
        let c = spec.index(1, 0, 0);
        assert_abs_diff_eq!(s.matrix()[(r, c)].re, p.g4 / p.delta, epsilon = 1e-15);
        // g3 = g4 = 0 => S = 0
        let mut p0 = p;
        p0.g3 = 0.0;
        p0.g4 = 0.0;
        assert!(transform_generator(&p0, &spec).unwrap().max_abs() == 0.0);
        // delta = 0 rejected
        let mut pz = p;
        pz.delta = 0.0;
        assert!(transform_generator(&pz, &spec).is_err());
    }

    #[test]
    fn effective_g2_values() {
        // g3 = g4 = g', delta = 100 g' -> -g'^2/delta
        assert_abs_diff_eq!(effective_g2(1.0, 1.0, 100.0).unwrap(), -0.01, epsilon = 1e-15);
        assert_eq!(effective_g2(0.0, 0.0, 10.0).unwrap(), 0.0);
        assert_abs_diff_eq!(effective_g2(1.0, 2.0, 10.0).unwrap(), -0.15, epsilon = 1e-15);
        assert!(effective_g2(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(TwoLevelParams::new(0.0, 0.1, 0.02, 1.0, 0.005, 0.016).is_err());
        assert!(TwoLevelParams::new(1.0, -0.1, 0.02, 1.0, 0.005, 0.016).is_err());
        let p = ThreeLevelParams::baseline();
        assert!(!p.detuning_warning());
        let mut close = p;
        close.delta = 5.0;
        assert!(close.detuning_warning());
    }
}
