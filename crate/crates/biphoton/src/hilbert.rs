//! Truncated composite Hilbert space `atom ⊗ mode_a ⊗ mode_b` and elementary
//! operators on it.
//!
//! Basis ordering is fixed: product states `|i, j, k>` (atom level `i`,
//! mode-a Fock state `j`, mode-b Fock state `k`) are enumerated atom-major
//! with the mode-b index fastest,
//!
//! ```text
//! index(i, j, k) = (i * (na_max + 1) + j) * (nb_max + 1) + k
//! ```
//!
//! so golden files and matrix elements are reproducible. Truncating the Fock
//! ladders deforms the canonical commutator: `[a, a^dag] = I` everywhere
//! except the last diagonal entry, which carries `-na_max` instead of `1`.
//! That defect is accepted here; convergence is controlled at the observable
//! level by growing the cutoffs (see `steady::truncation_convergence`).

use ndarray::{linalg::kron, Array1, Array2};
use ndarray_linalg::{Eigh, Norm, UPLO};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Hermiticity is asserted at this tolerance when an operator is flagged.
pub const HERMITICITY_TOL: f64 = 1e-12;

/// Atom level labels. `Ground` and `Excited` exist in every space;
/// `Intermediate` only when `atom_levels == 3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AtomLevel {
    Ground,
    Excited,
    Intermediate,
}

impl AtomLevel {
    pub fn index(self) -> usize {
        match self {
            AtomLevel::Ground => 0,
            AtomLevel::Excited => 1,
            AtomLevel::Intermediate => 2,
        }
    }
}

/// Tensor factor selector for [`embed`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Atom,
    ModeA,
    ModeB,
}

/// Truncated composite space: `atom_levels` in {2, 3}, mode a kept up to Fock
/// state `na_max >= 1`, mode b up to `nb_max >= 2` (the two-photon coupling
/// needs at least `|2>` in mode b).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSpaceSpec", into = "RawSpaceSpec")]
pub struct SpaceSpec {
    atom_levels: usize,
    na_max: usize,
    nb_max: usize,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
struct RawSpaceSpec {
    atom_levels: usize,
    na_max: usize,
    nb_max: usize,
}

impl TryFrom<RawSpaceSpec> for SpaceSpec {
    type Error = Error;
    fn try_from(raw: RawSpaceSpec) -> Result<Self> {
        SpaceSpec::new(raw.atom_levels, raw.na_max, raw.nb_max)
    }
}

impl From<SpaceSpec> for RawSpaceSpec {
    fn from(s: SpaceSpec) -> Self {
        RawSpaceSpec {
            atom_levels: s.atom_levels,
            na_max: s.na_max,
            nb_max: s.nb_max,
        }
    }
}

impl SpaceSpec {
    pub fn new(atom_levels: usize, na_max: usize, nb_max: usize) -> Result<Self> {
        if atom_levels != 2 && atom_levels != 3 {
            return Err(Error::InvalidSpace(format!(
                "atom_levels must be 2 or 3, got {atom_levels}"
            )));
        }
        if na_max < 1 {
            return Err(Error::InvalidSpace(format!(
                "na_max must be >= 1, got {na_max}"
            )));
        }
        if nb_max < 2 {
            return Err(Error::InvalidSpace(format!(
                "nb_max must be >= 2, got {nb_max}"
            )));
        }
        Ok(SpaceSpec {
            atom_levels,
            na_max,
            nb_max,
        })
    }

    pub fn two_level(na_max: usize, nb_max: usize) -> Result<Self> {
        SpaceSpec::new(2, na_max, nb_max)
    }

    pub fn three_level(na_max: usize, nb_max: usize) -> Result<Self> {
        SpaceSpec::new(3, na_max, nb_max)
    }

    pub fn atom_levels(&self) -> usize {
        self.atom_levels
    }

    pub fn na_max(&self) -> usize {
        self.na_max
    }

    pub fn nb_max(&self) -> usize {
        self.nb_max
    }

    /// Total dimension `atom_levels * (na_max + 1) * (nb_max + 1)`.
    pub fn dim(&self) -> usize {
        self.atom_levels * (self.na_max + 1) * (self.nb_max + 1)
    }

    /// Flat index of `|i, j, k>` in the documented ordering.
    pub fn index(&self, atom: usize, na: usize, nb: usize) -> usize {
        debug_assert!(atom < self.atom_levels && na <= self.na_max && nb <= self.nb_max);
        (atom * (self.na_max + 1) + na) * (self.nb_max + 1) + nb
    }

    /// Inverse of [`SpaceSpec::index`].
    pub fn labels(&self, idx: usize) -> (usize, usize, usize) {
        let nb = idx % (self.nb_max + 1);
        let rest = idx / (self.nb_max + 1);
        let na = rest % (self.na_max + 1);
        let atom = rest / (self.na_max + 1);
        (atom, na, nb)
    }

    /// One rung up the truncation ladder: `(na_max + 1, nb_max + 2)`.
    pub fn grow(&self) -> SpaceSpec {
        SpaceSpec {
            atom_levels: self.atom_levels,
            na_max: self.na_max + 1,
            nb_max: self.nb_max + 2,
        }
    }

    /// Mode-a annihilator embedded in the full space.
    pub fn annihilator_a(&self) -> Operator {
        embed(&mode_annihilator(self.na_max + 1).unwrap(), Slot::ModeA, self).unwrap()
    }

    /// Mode-b annihilator embedded in the full space.
    pub fn annihilator_b(&self) -> Operator {
        embed(&mode_annihilator(self.nb_max + 1).unwrap(), Slot::ModeB, self).unwrap()
    }

    /// Embedded `|to><from|` on the atom factor.
    pub fn atom_transfer(&self, to: AtomLevel, from: AtomLevel) -> Result<Operator> {
        let local = level_transfer(self.atom_levels, to, from)?;
        embed(&local, Slot::Atom, self)
    }

    /// Embedded `|level><level|` on the atom factor.
    pub fn atom_projector(&self, level: AtomLevel) -> Result<Operator> {
        let local = level_projector(self.atom_levels, level)?;
        embed(&local, Slot::Atom, self)
    }

    /// `sigma_- = |g><e|` embedded.
    pub fn sigma_minus(&self) -> Operator {
        self.atom_transfer(AtomLevel::Ground, AtomLevel::Excited)
            .unwrap()
    }

    /// `sigma_+ = |e><g|` embedded.
    pub fn sigma_plus(&self) -> Operator {
        self.atom_transfer(AtomLevel::Excited, AtomLevel::Ground)
            .unwrap()
    }
}

/// Complex matrix acting on a truncated space. The `hermitian` flag is only
/// set through [`Operator::hermitian_from_matrix`] or [`Operator::into_hermitian`],
/// both of which verify `||M - M^dag||_max <= 1e-12`.
#[derive(Clone, Debug)]
pub struct Operator {
    mat: Array2<C64>,
    hermitian: bool,
}

impl Operator {
    pub fn from_matrix(mat: Array2<C64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "operator must be square, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        Ok(Operator {
            mat,
            hermitian: false,
        })
    }

    pub fn hermitian_from_matrix(mat: Array2<C64>) -> Result<Self> {
        Operator::from_matrix(mat)?.into_hermitian()
    }

    /// Validate Hermiticity and set the flag.
    pub fn into_hermitian(self) -> Result<Self> {
        let dev = self.hermiticity_deviation();
        if dev > HERMITICITY_TOL {
            return Err(Error::NumericalFailure(format!(
                "hermiticity deviation {dev:.3e} exceeds {HERMITICITY_TOL:.0e}"
            )));
        }
        Ok(Operator {
            mat: self.mat,
            hermitian: true,
        })
    }

    pub fn zeros(dim: usize) -> Self {
        Operator {
            mat: Array2::zeros((dim, dim)),
            hermitian: true,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Operator {
            mat: Array2::eye(dim),
            hermitian: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.mat
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Max-abs of `M - M^dag`.
    pub fn hermiticity_deviation(&self) -> f64 {
        let n = self.dim();
        let mut dev: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                dev = dev.max((self.mat[(i, j)] - self.mat[(j, i)].conj()).norm());
            }
        }
        dev
    }

    /// Conjugate transpose.
    pub fn dag(&self) -> Operator {
        Operator {
            mat: self.mat.t().mapv(|z| z.conj()),
            hermitian: self.hermitian,
        }
    }

    /// Matrix product `self * rhs`.
    pub fn matmul(&self, rhs: &Operator) -> Operator {
        Operator {
            mat: self.mat.dot(&rhs.mat),
            hermitian: false,
        }
    }

    pub fn scale(&self, factor: C64) -> Operator {
        Operator {
            mat: self.mat.mapv(|z| z * factor),
            hermitian: false,
        }
    }

    pub fn scale_re(&self, factor: f64) -> Operator {
        Operator {
            mat: self.mat.mapv(|z| z * factor),
            hermitian: self.hermitian,
        }
    }

    pub fn add(&self, rhs: &Operator) -> Operator {
        Operator {
            mat: &self.mat + &rhs.mat,
            hermitian: self.hermitian && rhs.hermitian,
        }
    }

    pub fn sub(&self, rhs: &Operator) -> Operator {
        Operator {
            mat: &self.mat - &rhs.mat,
            hermitian: self.hermitian && rhs.hermitian,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.mat.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `[self, rhs]` as a plain matrix.
    pub fn commutator(&self, rhs: &Operator) -> Operator {
        self.matmul(rhs).sub(&rhs.matmul(self))
    }
}

/// Annihilation operator on a single truncated mode: `<n-1| a |n> = sqrt(n)`.
pub fn mode_annihilator(dim: usize) -> Result<Operator> {
    if dim < 2 {
        return Err(Error::InvalidSpace(format!(
            "mode dimension must be >= 2, got {dim}"
        )));
    }
    let mut m = Array2::zeros((dim, dim));
    for n in 1..dim {
        m[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    Operator::from_matrix(m)
}

/// `|level><level|` on a bare `levels`-dimensional atom.
pub fn level_projector(levels: usize, level: AtomLevel) -> Result<Operator> {
    let k = level.index();
    if k >= levels {
        return Err(Error::InvalidEmbedding(format!(
            "level {k} outside a {levels}-level atom"
        )));
    }
    let mut m = Array2::zeros((levels, levels));
    m[(k, k)] = C64::new(1.0, 0.0);
    Ok(Operator {
        mat: m,
        hermitian: true,
    })
}

/// `|to><from|` on a bare `levels`-dimensional atom.
pub fn level_transfer(levels: usize, to: AtomLevel, from: AtomLevel) -> Result<Operator> {
    let (t, f) = (to.index(), from.index());
    if t >= levels || f >= levels {
        return Err(Error::InvalidEmbedding(format!(
            "transfer |{t}><{f}| outside a {levels}-level atom"
        )));
    }
    let mut m = Array2::zeros((levels, levels));
    m[(t, f)] = C64::new(1.0, 0.0);
    Operator::from_matrix(m)
}

/// Lift a single-factor operator to the full product space,
/// `op ⊗ I ⊗ I` / `I ⊗ op ⊗ I` / `I ⊗ I ⊗ op` for the atom, mode-a and
/// mode-b slots in the documented ordering.
pub fn embed(op: &Operator, slot: Slot, spec: &SpaceSpec) -> Result<Operator> {
    let (da, dna, dnb) = (
        spec.atom_levels,
        spec.na_max + 1,
        spec.nb_max + 1,
    );
    let expected = match slot {
        Slot::Atom => da,
        Slot::ModeA => dna,
        Slot::ModeB => dnb,
    };
    if op.dim() != expected {
        return Err(Error::InvalidEmbedding(format!(
            "operator dimension {} does not match slot dimension {}",
            op.dim(),
            expected
        )));
    }
    let eye = |d: usize| Array2::<C64>::eye(d);
    let full = match slot {
        Slot::Atom => kron(&kron(op.matrix(), &eye(dna)), &eye(dnb)),
        Slot::ModeA => kron(&kron(&eye(da), op.matrix()), &eye(dnb)),
        Slot::ModeB => kron(&kron(&eye(da), &eye(dna)), op.matrix()),
    };
    Ok(Operator {
        mat: full,
        hermitian: op.hermitian,
    })
}

/// Excitation number operator `N = |e><e| + a^dag a + b^dag b / 2`, diagonal
/// in the product basis. Defined for the two-level model only.
pub fn excitation_number(spec: &SpaceSpec) -> Result<Operator> {
    if spec.atom_levels != 2 {
        return Err(Error::Unsupported(
            "excitation number operator is defined for the two-level model".into(),
        ));
    }
    let d = spec.dim();
    let mut m = Array2::zeros((d, d));
    for idx in 0..d {
        let (i, j, k) = spec.labels(idx);
        m[(idx, idx)] = C64::new(i as f64 + j as f64 + 0.5 * k as f64, 0.0);
    }
    Ok(Operator {
        mat: m,
        hermitian: true,
    })
}

/// Excitation weight `2N` of basis state `idx` as an integer
/// (`2N = 2i + 2j + k` for two levels, `2N = 2[i=e] + [i=i'] + 2j + k` for
/// three; conserved by both Hamiltonians).
pub fn excitation_key(spec: &SpaceSpec, idx: usize) -> i64 {
    let (i, j, k) = spec.labels(idx);
    let atom = match (spec.atom_levels, i) {
        (_, 0) => 0,
        (_, 1) => 2,
        (3, 2) => 1,
        _ => unreachable!(),
    };
    atom + 2 * j as i64 + k as i64
}

/// `Tr[op * rho]`.
pub fn expectation(op: &Operator, rho: &DensityOperator) -> Result<C64> {
    if op.dim() != rho.dim() {
        return Err(Error::DimensionMismatch(format!(
            "operator dim {} vs density operator dim {}",
            op.dim(),
            rho.dim()
        )));
    }
    let n = op.dim();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += op.mat[(i, k)] * rho.mat[(k, i)];
        }
    }
    Ok(acc)
}

/// Pure state on the truncated space. Norm stays in (0, 1] during
/// norm-decaying trajectory propagation and is exactly 1 after
/// renormalization.
#[derive(Clone, Debug)]
pub struct StateVector {
    amps: Array1<C64>,
}

impl StateVector {
    pub fn from_amplitudes(amps: Array1<C64>) -> Self {
        StateVector { amps }
    }

    /// Basis state `|i, j, k>`.
    pub fn basis_state(spec: &SpaceSpec, atom: usize, na: usize, nb: usize) -> Self {
        let mut amps = Array1::zeros(spec.dim());
        amps[spec.index(atom, na, nb)] = C64::new(1.0, 0.0);
        StateVector { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm_l2()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.amps.mapv_inplace(|z| z / n);
        }
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps
            .iter()
            .zip(other.amps.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

/// Density operator with the standard validity checks.
#[derive(Clone, Debug)]
pub struct DensityOperator {
    mat: Array2<C64>,
}

impl DensityOperator {
    pub const HERMITICITY_TOL: f64 = 1e-10;
    pub const TRACE_TOL: f64 = 1e-10;
    pub const MIN_EIGENVALUE: f64 = -1e-8;

    pub fn from_matrix(mat: Array2<C64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch(
                "density operator must be square".into(),
            ));
        }
        Ok(DensityOperator { mat })
    }

    /// `|psi><psi|` of a normalized state.
    pub fn pure(state: &StateVector) -> Self {
        let n = state.dim();
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = state.amps[i] * state.amps[j].conj();
            }
        }
        DensityOperator { mat: m }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.mat
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.mat[(i, i)]).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.mat[(i, i)].re).collect()
    }

    /// Hermiticity within 1e-10, unit trace within 1e-10, minimum eigenvalue
    /// above -1e-8.
    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        let mut herm_dev: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                herm_dev = herm_dev.max((self.mat[(i, j)] - self.mat[(j, i)].conj()).norm());
            }
        }
        if herm_dev > Self::HERMITICITY_TOL {
            return Err(Error::NumericalFailure(format!(
                "density operator hermiticity deviation {herm_dev:.3e}"
            )));
        }
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > Self::TRACE_TOL {
            return Err(Error::NumericalFailure(format!(
                "density operator trace {tr} is not 1"
            )));
        }
        let (eigs, _) = self
            .mat
            .eigh(UPLO::Lower)
            .map_err(|e| Error::NumericalFailure(format!("eigendecomposition failed: {e}")))?;
        let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < Self::MIN_EIGENVALUE {
            return Err(Error::NumericalFailure(format!(
                "density operator minimum eigenvalue {min:.3e}"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn annihilator_matrix_elements() {
        let a = mode_annihilator(3).unwrap();
        // a|2> = sqrt(2)|1>
        assert_abs_diff_eq!(a.matrix()[(1, 2)].re, 2f64.sqrt(), epsilon = 1e-12);
        // a|0> = 0
        for r in 0..3 {
            assert_eq!(a.matrix()[(r, 0)], C64::new(0.0, 0.0));
        }
        assert!(mode_annihilator(1).is_err());
    }

    #[test]
    fn truncation_defect_only_in_last_entry() {
        let a = mode_annihilator(4).unwrap();
        let comm = a.commutator(&a.dag());
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j {
                    if i == 3 {
                        -3.0
                    } else {
                        1.0
                    }
                } else {
                    0.0
                };
                assert_abs_diff_eq!(comm.matrix()[(i, j)].re, expect, epsilon = 1e-12);
                assert_abs_diff_eq!(comm.matrix()[(i, j)].im, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn number_operator_diagonal() {
        // sqrt(n) * sqrt(n) rounds within one ulp of n
        for dim in [2usize, 5, 9] {
            let a = mode_annihilator(dim).unwrap();
            let n = a.dag().matmul(&a);
            for i in 0..dim {
                for j in 0..dim {
                    let expect = if i == j { i as f64 } else { 0.0 };
                    assert_abs_diff_eq!(n.matrix()[(i, j)].re, expect, epsilon = 4e-15);
                    assert_eq!(n.matrix()[(i, j)].im, 0.0);
                }
            }
        }
    }

    #[test]
    fn basis_index_roundtrip_bijective() {
        let spec = SpaceSpec::three_level(2, 4).unwrap();
        let mut seen = vec![false; spec.dim()];
        for i in 0..3 {
            for j in 0..=2 {
                for k in 0..=4 {
                    let idx = spec.index(i, j, k);
                    assert!(!seen[idx]);
                    seen[idx] = true;
                    assert_eq!(spec.labels(idx), (i, j, k));
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn embed_identity_gives_identity() {
        let spec = SpaceSpec::two_level(1, 2).unwrap();
        for slot in [Slot::Atom, Slot::ModeA, Slot::ModeB] {
            let d = match slot {
                Slot::Atom => 2,
                Slot::ModeA => 2,
                Slot::ModeB => 3,
            };
            let e = embed(&Operator::identity(d), slot, &spec).unwrap();
            assert_abs_diff_eq!(
                e.sub(&Operator::identity(spec.dim())).max_abs(),
                0.0,
                epsilon = 0.0
            );
        }
    }

    #[test]
    fn embed_rejects_wrong_dimension() {
        let spec = SpaceSpec::two_level(1, 2).unwrap();
        let op = Operator::identity(4);
        assert!(matches!(
            embed(&op, Slot::Atom, &spec),
            Err(Error::InvalidEmbedding(_))
        ));
    }

    #[test]
    fn sigma_product_is_ground_projector() {
        let spec = SpaceSpec::two_level(1, 2).unwrap();
        let prod = spec.sigma_minus().matmul(&spec.sigma_plus());
        let pg = spec.atom_projector(AtomLevel::Ground).unwrap();
        assert_abs_diff_eq!(prod.sub(&pg).max_abs(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn embedded_cross_matrix_element() {
        // <g,1,0| a^dag sigma_- |e,0,0> = 1 in the documented ordering
        let spec = SpaceSpec::two_level(1, 2).unwrap();
        let op = spec.annihilator_a().dag().matmul(&spec.sigma_minus());
        let row = spec.index(0, 1, 0);
        let col = spec.index(1, 0, 0);
        assert_eq!(op.matrix()[(row, col)], C64::new(1.0, 0.0));
    }

    #[test]
    fn embed_preserves_spectrum_with_multiplicity() {
        // sigma_z has eigenvalues {-1, +1}; embedded into D = 2*2*3 = 12 each
        // appears with multiplicity 6
        let spec = SpaceSpec::two_level(1, 2).unwrap();
        let mut sz = Array2::zeros((2, 2));
        sz[(0, 0)] = C64::new(-1.0, 0.0);
        sz[(1, 1)] = C64::new(1.0, 0.0);
        let op = embed(
            &Operator::hermitian_from_matrix(sz).unwrap(),
            Slot::Atom,
            &spec,
        )
        .unwrap();
        let (eigs, _) = op.matrix().eigh(UPLO::Lower).unwrap();
        let minus = eigs.iter().filter(|&&e| (e + 1.0).abs() < 1e-10).count();
        let plus = eigs.iter().filter(|&&e| (e - 1.0).abs() < 1e-10).count();
        assert_eq!((minus, plus), (6, 6));
    }

    #[test]
    fn excitation_number_eigenvalues() {
        let spec = SpaceSpec::two_level(1, 2).unwrap();
        let n = excitation_number(&spec).unwrap();
        // N|e,0,0> = 1
        let idx = spec.index(1, 0, 0);
        assert_eq!(n.matrix()[(idx, idx)], C64::new(1.0, 0.0));
        // N|g,0,1> = 0.5
        let idx = spec.index(0, 0, 1);
        assert_eq!(n.matrix()[(idx, idx)], C64::new(0.5, 0.0));
        // N|g,1,2> = 2
        let idx = spec.index(0, 1, 2);
        assert_eq!(n.matrix()[(idx, idx)], C64::new(2.0, 0.0));

        let spec3 = SpaceSpec::three_level(1, 2).unwrap();
        assert!(matches!(
            excitation_number(&spec3),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn expectation_against_known_states() {
        let spec = SpaceSpec::two_level(1, 2).unwrap();
        let d = spec.dim();
        // identity on any state
        let ground = StateVector::basis_state(&spec, 0, 0, 0);
        let rho = DensityOperator::pure(&ground);
        let one = expectation(&Operator::identity(d), &rho).unwrap();
        assert_abs_diff_eq!(one.re, 1.0, epsilon = 1e-14);
        let pg = spec.atom_projector(AtomLevel::Ground).unwrap();
        assert_abs_diff_eq!(expectation(&pg, &rho).unwrap().re, 1.0, epsilon = 1e-14);

        // maximally mixed on D = 12 with na_max = 1: <a^dag a> = 0.5
        let mixed =
            DensityOperator::from_matrix(Array2::eye(d).mapv(|z: C64| z / d as f64)).unwrap();
        let num = spec.annihilator_a().dag().matmul(&spec.annihilator_a());
        assert_abs_diff_eq!(expectation(&num, &mixed).unwrap().re, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn density_validation_catches_bad_trace() {
        let spec = SpaceSpec::two_level(1, 2).unwrap();
        let ground = StateVector::basis_state(&spec, 0, 0, 0);
        let rho = DensityOperator::pure(&ground);
        rho.validate().unwrap();
        let bad = DensityOperator::from_matrix(rho.matrix() * C64::new(2.0, 0.0)).unwrap();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn hermitian_flag_requires_hermiticity() {
        let mut m = Array2::zeros((2, 2));
        m[(0, 1)] = C64::new(1.0, 0.0);
        assert!(Operator::hermitian_from_matrix(m).is_err());
    }
}
