//! Truncated Hilbert space of a two-level atom coupled to two bosonic modes.
//!
//! Basis kets are written `|level, n_a, n_b⟩`. The ordering is fixed with the
//! atom slowest and `n_b` fastest:
//!
//! ```text
//! index = (level * (n_max_a + 1) + n_a) * (n_max_b + 1) + n_b
//! ```
//!
//! with `g = 0` and `e = 1`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Largest population a truncated field state may lose before construction
/// is refused.
pub const TRUNCATION_DEFICIT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AtomLevel {
    Ground = 0,
    Excited = 1,
}

impl AtomLevel {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn other(self) -> AtomLevel {
        match self {
            AtomLevel::Ground => AtomLevel::Excited,
            AtomLevel::Excited => AtomLevel::Ground,
        }
    }
}

impl fmt::Display for AtomLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AtomLevel::Ground => "g",
            AtomLevel::Excited => "e",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    A,
    B,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::A => "a",
            Mode::B => "b",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeOp {
    Annihilate,
    Create,
    Number,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomOp {
    /// `|g⟩⟨e|`
    Lower,
    /// `|e⟩⟨g|`
    Raise,
    ProjectExcited,
    ProjectGround,
}

/// A basis ket `|level, n_a, n_b⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisLabel {
    pub level: AtomLevel,
    pub n_a: usize,
    pub n_b: usize,
}

impl BasisLabel {
    pub fn new(level: AtomLevel, n_a: usize, n_b: usize) -> Self {
        BasisLabel { level, n_a, n_b }
    }

    /// Total excitation number `N = [level = e] + n_a + n_b`.
    pub fn excitation(&self) -> usize {
        self.level.index() + self.n_a + self.n_b
    }

    pub fn photons(&self, mode: Mode) -> usize {
        match mode {
            Mode::A => self.n_a,
            Mode::B => self.n_b,
        }
    }
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{},{},{}⟩", self.level, self.n_a, self.n_b)
    }
}

/// Truncation of the atom ⊗ mode-a ⊗ mode-b space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FockSpace {
    n_max_a: usize,
    n_max_b: usize,
}

impl FockSpace {
    pub fn new(n_max_a: usize, n_max_b: usize) -> Self {
        FockSpace { n_max_a, n_max_b }
    }

    pub fn n_max_a(&self) -> usize {
        self.n_max_a
    }

    pub fn n_max_b(&self) -> usize {
        self.n_max_b
    }

    pub fn n_max(&self, mode: Mode) -> usize {
        match mode {
            Mode::A => self.n_max_a,
            Mode::B => self.n_max_b,
        }
    }

    pub fn atom_dim(&self) -> usize {
        2
    }

    /// Dimension of the two-mode field factor.
    pub fn field_dim(&self) -> usize {
        (self.n_max_a + 1) * (self.n_max_b + 1)
    }

    pub fn dim(&self) -> usize {
        2 * self.field_dim()
    }

    pub fn max_excitation(&self) -> usize {
        1 + self.n_max_a + self.n_max_b
    }

    pub fn index(&self, level: AtomLevel, n_a: usize, n_b: usize) -> Result<usize> {
        if n_a > self.n_max_a {
            return Err(Error::range("n_a", n_a, format!("0..={}", self.n_max_a)));
        }
        if n_b > self.n_max_b {
            return Err(Error::range("n_b", n_b, format!("0..={}", self.n_max_b)));
        }
        Ok(self.index_unchecked(level, n_a, n_b))
    }

    pub fn index_of(&self, label: BasisLabel) -> Result<usize> {
        self.index(label.level, label.n_a, label.n_b)
    }

    #[inline]
    pub(crate) fn index_unchecked(&self, level: AtomLevel, n_a: usize, n_b: usize) -> usize {
        (level.index() * (self.n_max_a + 1) + n_a) * (self.n_max_b + 1) + n_b
    }

    pub fn label(&self, index: usize) -> Result<BasisLabel> {
        if index >= self.dim() {
            return Err(Error::range("index", index, format!("0..{}", self.dim())));
        }
        Ok(self.label_unchecked(index))
    }

    #[inline]
    pub(crate) fn label_unchecked(&self, index: usize) -> BasisLabel {
        let nb1 = self.n_max_b + 1;
        let na1 = self.n_max_a + 1;
        let n_b = index % nb1;
        let rest = index / nb1;
        let n_a = rest % na1;
        let level = if rest / na1 == 0 {
            AtomLevel::Ground
        } else {
            AtomLevel::Excited
        };
        BasisLabel { level, n_a, n_b }
    }

    pub fn labels(&self) -> impl Iterator<Item = BasisLabel> + '_ {
        (0..self.dim()).map(move |i| self.label_unchecked(i))
    }

    /// Basis indices grouped by total excitation number.
    pub fn excitation_sectors(&self) -> Vec<Vec<usize>> {
        let mut sectors = vec![Vec::new(); self.max_excitation() + 1];
        for (i, label) in self.labels().enumerate() {
            sectors[label.excitation()].push(i);
        }
        sectors
    }

    fn check_same(&self, other: &FockSpace) -> Result<()> {
        if self != other {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for FockSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "2x{}x{}", self.n_max_a + 1, self.n_max_b + 1)
    }
}

/// A pure state on a [`FockSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    space: FockSpace,
    amps: DVector<C64>,
}

impl StateVector {
    pub fn basis(space: FockSpace, label: BasisLabel) -> Result<Self> {
        let idx = space.index_of(label)?;
        let mut amps = DVector::zeros(space.dim());
        amps[idx] = C64::new(1.0, 0.0);
        Ok(StateVector { space, amps })
    }

    pub fn from_amplitudes(space: FockSpace, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                got: amps.len(),
            });
        }
        Ok(StateVector {
            space,
            amps: DVector::from_vec(amps),
        })
    }

    /// Normalized superposition `Σ c_k |label_k⟩`.
    pub fn superposition(space: FockSpace, terms: &[(C64, BasisLabel)]) -> Result<Self> {
        let mut amps = DVector::zeros(space.dim());
        for &(c, label) in terms {
            amps[space.index_of(label)?] += c;
        }
        let norm = amps.norm();
        if norm == 0.0 {
            return Err(Error::Precondition("superposition has zero norm".into()));
        }
        amps /= C64::new(norm, 0.0);
        Ok(StateVector { space, amps })
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut DVector<C64> {
        &mut self.amps
    }

    pub fn amplitude(&self, label: BasisLabel) -> Result<C64> {
        Ok(self.amps[self.space.index_of(label)?])
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    pub fn probability(&self, label: BasisLabel) -> Result<f64> {
        Ok(self.amplitude(label)?.norm_sqr())
    }

    pub fn level_probability(&self, level: AtomLevel) -> f64 {
        self.space
            .labels()
            .zip(self.amps.iter())
            .filter(|(l, _)| l.level == level)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        self.space.check_same(&other.space)?;
        Ok(self.amps.dotc(&other.amps))
    }

    pub fn to_density(&self) -> DensityOperator {
        DensityOperator {
            space: self.space,
            mat: &self.amps * self.amps.adjoint(),
        }
    }
}

/// Density operator on the joint atom-field space.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    space: FockSpace,
    mat: DMatrix<C64>,
}

impl DensityOperator {
    pub fn from_matrix(space: FockSpace, mat: DMatrix<C64>) -> Result<Self> {
        if mat.nrows() != space.dim() || mat.ncols() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                got: mat.nrows(),
            });
        }
        Ok(DensityOperator { space, mat })
    }

    pub fn pure(state: &StateVector) -> Self {
        state.to_density()
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn population(&self, label: BasisLabel) -> Result<f64> {
        let i = self.space.index_of(label)?;
        Ok(self.mat[(i, i)].re)
    }

    pub fn level_probability(&self, level: AtomLevel) -> f64 {
        self.space
            .labels()
            .enumerate()
            .filter(|(_, l)| l.level == level)
            .map(|(i, _)| self.mat[(i, i)].re)
            .sum()
    }

    /// Largest element-wise deviation `|ρ_ij − conj(ρ_ji)|`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.mat.nrows();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.mat[(i, j)] - self.mat[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// True when all coherences between different excitation sectors vanish.
    pub fn is_excitation_diagonal(&self) -> bool {
        let labels: Vec<usize> = self.space.labels().map(|l| l.excitation()).collect();
        let n = self.mat.nrows();
        (0..n).all(|i| (0..n).all(|j| labels[i] == labels[j] || self.mat[(i, j)] == C64::new(0.0, 0.0)))
    }

    /// Drops every coherence between different excitation sectors.
    ///
    /// The cavity Hamiltonian conserves the excitation number and the
    /// damping channels shift it by one on both sides of ρ, so the blocks with
    /// a fixed excitation difference evolve independently. Observables that
    /// are diagonal in the excitation number (populations, photon
    /// distributions, `P_g`) only ever see the diagonal band, which this keeps
    /// exactly.
    pub fn excitation_diagonal(&self) -> DensityOperator {
        let labels: Vec<usize> = self.space.labels().map(|l| l.excitation()).collect();
        let mut mat = self.mat.clone();
        let n = mat.nrows();
        for i in 0..n {
            for j in 0..n {
                if labels[i] != labels[j] {
                    mat[(i, j)] = C64::new(0.0, 0.0);
                }
            }
        }
        DensityOperator {
            space: self.space,
            mat,
        }
    }

    /// Smallest eigenvalue. Works block by block when the state has no
    /// coherences between excitation sectors.
    pub fn min_eigenvalue(&self) -> f64 {
        if self.is_excitation_diagonal() {
            self.space
                .excitation_sectors()
                .iter()
                .filter(|s| !s.is_empty())
                .map(|sector| {
                    let block = DMatrix::from_fn(sector.len(), sector.len(), |r, c| {
                        self.mat[(sector[r], sector[c])]
                    });
                    hermitian_min_eigenvalue(&block)
                })
                .fold(f64::INFINITY, f64::min)
        } else {
            hermitian_min_eigenvalue(&self.mat)
        }
    }

    /// Checks the trace, Hermiticity and positivity invariants.
    pub fn validate(&self, trace_tol: f64, herm_tol: f64, eig_tol: f64) -> Result<()> {
        let tr = self.trace();
        if (tr.re - 1.0).abs() > trace_tol || tr.im.abs() > trace_tol {
            return Err(Error::Accuracy(format!("trace = {tr}")));
        }
        let h = self.hermiticity_error();
        if h > herm_tol {
            return Err(Error::Accuracy(format!("hermiticity error {h:.3e}")));
        }
        let m = self.min_eigenvalue();
        if m < -eig_tol {
            return Err(Error::Accuracy(format!("min eigenvalue {m:.3e}")));
        }
        Ok(())
    }

    /// Uhlmann fidelity `(tr √(√ρ σ √ρ))²`.
    pub fn fidelity(&self, other: &DensityOperator) -> Result<f64> {
        self.space.check_same(&other.space)?;
        let sqrt_rho = hermitian_sqrt(&self.mat);
        let m = &sqrt_rho * &other.mat * &sqrt_rho;
        let m = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        let s: f64 = m
            .symmetric_eigenvalues()
            .iter()
            .map(|&x| x.max(0.0).sqrt())
            .sum();
        Ok(s * s)
    }
}

pub(crate) fn hermitian_min_eigenvalue(m: &DMatrix<C64>) -> f64 {
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn hermitian_sqrt(m: &DMatrix<C64>) -> DMatrix<C64> {
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = sym.symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|x| C64::new(x.max(0.0).sqrt(), 0.0)));
    &eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

/// A general (not necessarily Hermitian) operator on a [`FockSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOperator {
    space: FockSpace,
    mat: DMatrix<C64>,
}

impl LinearOperator {
    pub fn from_matrix(space: FockSpace, mat: DMatrix<C64>) -> Result<Self> {
        if mat.nrows() != space.dim() || mat.ncols() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                got: mat.nrows(),
            });
        }
        Ok(LinearOperator { space, mat })
    }

    pub fn identity(space: FockSpace) -> Self {
        LinearOperator {
            space,
            mat: DMatrix::identity(space.dim(), space.dim()),
        }
    }

    pub fn zero(space: FockSpace) -> Self {
        LinearOperator {
            space,
            mat: DMatrix::zeros(space.dim(), space.dim()),
        }
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn element(&self, row: BasisLabel, col: BasisLabel) -> Result<C64> {
        Ok(self.mat[(self.space.index_of(row)?, self.space.index_of(col)?)])
    }

    pub fn adjoint(&self) -> LinearOperator {
        LinearOperator {
            space: self.space,
            mat: self.mat.adjoint(),
        }
    }

    pub fn scaled(&self, c: C64) -> LinearOperator {
        LinearOperator {
            space: self.space,
            mat: &self.mat * c,
        }
    }

    pub fn add(&self, other: &LinearOperator) -> Result<LinearOperator> {
        self.space.check_same(&other.space)?;
        Ok(LinearOperator {
            space: self.space,
            mat: &self.mat + &other.mat,
        })
    }

    pub fn compose(&self, other: &LinearOperator) -> Result<LinearOperator> {
        self.space.check_same(&other.space)?;
        Ok(LinearOperator {
            space: self.space,
            mat: &self.mat * &other.mat,
        })
    }

    pub fn commutator(&self, other: &LinearOperator) -> Result<LinearOperator> {
        self.space.check_same(&other.space)?;
        Ok(LinearOperator {
            space: self.space,
            mat: &self.mat * &other.mat - &other.mat * &self.mat,
        })
    }

    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        self.space.check_same(&state.space)?;
        Ok(StateVector {
            space: self.space,
            amps: &self.mat * &state.amps,
        })
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.mat.norm()
    }

    pub fn is_hermitian(&self) -> bool {
        self.mat == self.mat.adjoint()
    }
}

pub fn mode_operator(mode: Mode, kind: ModeOp, space: FockSpace) -> LinearOperator {
    let mut mat = DMatrix::zeros(space.dim(), space.dim());
    for (j, label) in space.labels().enumerate() {
        let n = label.photons(mode);
        match kind {
            ModeOp::Annihilate if n > 0 => {
                let to = shifted(label, mode, -1);
                mat[(space.index_of(to).unwrap(), j)] = C64::new((n as f64).sqrt(), 0.0);
            }
            ModeOp::Create if n < space.n_max(mode) => {
                let to = shifted(label, mode, 1);
                mat[(space.index_of(to).unwrap(), j)] = C64::new(((n + 1) as f64).sqrt(), 0.0);
            }
            ModeOp::Number => mat[(j, j)] = C64::new(n as f64, 0.0),
            _ => {}
        }
    }
    LinearOperator { space, mat }
}

fn shifted(label: BasisLabel, mode: Mode, by: isize) -> BasisLabel {
    let mut out = label;
    match mode {
        Mode::A => out.n_a = (out.n_a as isize + by) as usize,
        Mode::B => out.n_b = (out.n_b as isize + by) as usize,
    }
    out
}

pub fn atomic_operator(kind: AtomOp, space: FockSpace) -> LinearOperator {
    let mut mat = DMatrix::zeros(space.dim(), space.dim());
    let one = C64::new(1.0, 0.0);
    for (j, label) in space.labels().enumerate() {
        match (kind, label.level) {
            (AtomOp::Lower, AtomLevel::Excited) => {
                mat[(space.index_unchecked(AtomLevel::Ground, label.n_a, label.n_b), j)] = one
            }
            (AtomOp::Raise, AtomLevel::Ground) => {
                mat[(space.index_unchecked(AtomLevel::Excited, label.n_a, label.n_b), j)] = one
            }
            (AtomOp::ProjectExcited, AtomLevel::Excited) | (AtomOp::ProjectGround, AtomLevel::Ground) => {
                mat[(j, j)] = one
            }
            _ => {}
        }
    }
    LinearOperator { space, mat }
}

/// Total excitation number `N = P_e + n_a + n_b`.
pub fn excitation_operator(space: FockSpace) -> LinearOperator {
    let diag = DVector::from_iterator(
        space.dim(),
        space.labels().map(|l| C64::new(l.excitation() as f64, 0.0)),
    );
    LinearOperator {
        space,
        mat: DMatrix::from_diagonal(&diag),
    }
}

pub fn expectation(op: &LinearOperator, rho: &DensityOperator) -> Result<C64> {
    op.space.check_same(&rho.space)?;
    // tr(Aρ) = Σ_ij A_ij ρ_ji
    let n = op.mat.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let a = op.mat[(i, j)];
            if a != C64::new(0.0, 0.0) {
                acc += a * rho.mat[(j, i)];
            }
        }
    }
    Ok(acc)
}

/// Kind of single-mode field to construct.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldKind {
    Fock(usize),
    Coherent(C64),
    Thermal(f64),
}

impl FieldKind {
    pub fn vacuum() -> Self {
        FieldKind::Fock(0)
    }

    /// Coherent state with real amplitude `√mean`.
    pub fn coherent_mean(mean: f64) -> Self {
        FieldKind::Coherent(C64::new(mean.max(0.0).sqrt(), 0.0))
    }

    pub fn mean_photons(&self) -> f64 {
        match *self {
            FieldKind::Fock(n) => n as f64,
            FieldKind::Coherent(alpha) => alpha.norm_sqr(),
            FieldKind::Thermal(nbar) => nbar,
        }
    }

    /// Smallest `n_max` that keeps the truncation deficit within
    /// [`TRUNCATION_DEFICIT`]; coherent fields also respect the
    /// `mean + 4√mean` rule.
    pub fn required_n_max(&self) -> usize {
        match *self {
            FieldKind::Fock(n) => n,
            FieldKind::Coherent(alpha) => {
                let mean = alpha.norm_sqr();
                if mean == 0.0 {
                    return 0;
                }
                let rule = (mean + 4.0 * mean.sqrt()).ceil() as usize;
                let mut n = 0;
                while poisson_deficit(mean, n) > TRUNCATION_DEFICIT {
                    n += 1;
                }
                rule.max(n)
            }
            FieldKind::Thermal(nbar) => {
                if nbar <= 0.0 {
                    return 0;
                }
                let q = nbar / (1.0 + nbar);
                // deficit = q^(n_max + 1)
                let n = (TRUNCATION_DEFICIT.ln() / q.ln()).ceil() as usize;
                n.saturating_sub(1)
            }
        }
    }
}

/// Poisson weights `e^{−λ} λ^n / n!` for `n = 0..=n_max`.
pub fn poisson_weights(mean: f64, n_max: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(n_max + 1);
    let mut cur = (-mean).exp();
    p.push(cur);
    for n in 1..=n_max {
        cur *= mean / n as f64;
        p.push(cur);
    }
    p
}

fn poisson_deficit(mean: f64, n_max: usize) -> f64 {
    (1.0 - poisson_weights(mean, n_max).iter().sum::<f64>()).max(0.0)
}

/// Geometric photon-number law `n̄ⁿ / (1 + n̄)ⁿ⁺¹`.
pub fn thermal_weights(nbar: f64, n_max: usize) -> Vec<f64> {
    let q = nbar / (1.0 + nbar);
    let mut cur = 1.0 / (1.0 + nbar);
    let mut p = Vec::with_capacity(n_max + 1);
    for _ in 0..=n_max {
        p.push(cur);
        cur *= q;
    }
    p
}

/// Density operator of a single cavity mode truncated at `n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeState {
    mat: DMatrix<C64>,
}

impl ModeState {
    pub fn from_matrix(mat: DMatrix<C64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() || mat.nrows() == 0 {
            return Err(Error::DimensionMismatch {
                expected: mat.nrows(),
                got: mat.ncols(),
            });
        }
        Ok(ModeState { mat })
    }

    pub fn from_distribution(p: &[f64]) -> Result<Self> {
        let d: Vec<C64> = p.iter().map(|&x| C64::new(x, 0.0)).collect();
        ModeState::from_matrix(DMatrix::from_diagonal(&DVector::from_vec(d)))
    }

    pub fn n_max(&self) -> usize {
        self.mat.nrows() - 1
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn distribution(&self) -> Vec<f64> {
        self.mat.diagonal().iter().map(|z| z.re).collect()
    }

    pub fn mean(&self) -> f64 {
        self.distribution()
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    /// Re-embeds the state in a larger truncation.
    pub fn padded(&self, n_max: usize) -> Result<ModeState> {
        if n_max < self.n_max() {
            return Err(Error::range("n_max", n_max, format!(">= {}", self.n_max())));
        }
        let mut mat = DMatrix::zeros(n_max + 1, n_max + 1);
        mat.view_mut((0, 0), (self.n_max() + 1, self.n_max() + 1))
            .copy_from(&self.mat);
        Ok(ModeState { mat })
    }
}

pub fn make_field_state(kind: FieldKind, n_max: usize) -> Result<ModeState> {
    let dim = n_max + 1;
    match kind {
        FieldKind::Fock(n) => {
            if n > n_max {
                return Err(Error::range("fock n", n, format!("0..={n_max}")));
            }
            let mut mat = DMatrix::zeros(dim, dim);
            mat[(n, n)] = C64::new(1.0, 0.0);
            Ok(ModeState { mat })
        }
        FieldKind::Coherent(alpha) => {
            let mut amps = Vec::with_capacity(dim);
            let mut cur = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
            amps.push(cur);
            for n in 1..dim {
                cur = cur * alpha / (n as f64).sqrt();
                amps.push(cur);
            }
            let kept: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
            let deficit = (1.0 - kept).max(0.0);
            if deficit > TRUNCATION_DEFICIT {
                return Err(Error::Truncation { n_max, deficit });
            }
            let v = DVector::from_vec(amps) / C64::new(kept.sqrt(), 0.0);
            Ok(ModeState {
                mat: &v * v.adjoint(),
            })
        }
        FieldKind::Thermal(nbar) => {
            if !(nbar >= 0.0) || !nbar.is_finite() {
                return Err(Error::invalid("thermal mean", format!("{nbar} must be >= 0")));
            }
            let p = thermal_weights(nbar, n_max);
            let kept: f64 = p.iter().sum();
            let deficit = (1.0 - kept).max(0.0);
            if deficit > TRUNCATION_DEFICIT {
                return Err(Error::Truncation { n_max, deficit });
            }
            let p: Vec<f64> = p.iter().map(|x| x / kept).collect();
            ModeState::from_distribution(&p)
        }
    }
}

/// `|level⟩⟨level| ⊗ field_a ⊗ field_b` in the basis ordering of `space`.
pub fn compose_initial_state(
    level: AtomLevel,
    field_a: &ModeState,
    field_b: &ModeState,
    space: FockSpace,
) -> Result<DensityOperator> {
    if field_a.n_max() != space.n_max_a() {
        return Err(Error::DimensionMismatch {
            expected: space.n_max_a() + 1,
            got: field_a.n_max() + 1,
        });
    }
    if field_b.n_max() != space.n_max_b() {
        return Err(Error::DimensionMismatch {
            expected: space.n_max_b() + 1,
            got: field_b.n_max() + 1,
        });
    }
    let dim = space.dim();
    let mut mat = DMatrix::zeros(dim, dim);
    let (da, db) = (space.n_max_a() + 1, space.n_max_b() + 1);
    for a1 in 0..da {
        for a2 in 0..da {
            let fa = field_a.mat[(a1, a2)];
            if fa == C64::new(0.0, 0.0) {
                continue;
            }
            for b1 in 0..db {
                for b2 in 0..db {
                    let fb = field_b.mat[(b1, b2)];
                    if fb == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let i = space.index_unchecked(level, a1, b1);
                    let j = space.index_unchecked(level, a2, b2);
                    mat[(i, j)] = fa * fb;
                }
            }
        }
    }
    Ok(DensityOperator { space, mat })
}

/// Photon-number distribution of one mode.
pub fn photon_distribution(rho: &DensityOperator, mode: Mode) -> Vec<f64> {
    let mut p = vec![0.0; rho.space.n_max(mode) + 1];
    for (i, label) in rho.space.labels().enumerate() {
        p[label.photons(mode)] += rho.mat[(i, i)].re;
    }
    p
}

/// Two-mode field density operator (atom traced out), indexed
/// `n_a * (n_max_b + 1) + n_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDensity {
    n_max_a: usize,
    n_max_b: usize,
    mat: DMatrix<C64>,
}

impl FieldDensity {
    pub fn n_max_a(&self) -> usize {
        self.n_max_a
    }

    pub fn n_max_b(&self) -> usize {
        self.n_max_b
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn index(&self, n_a: usize, n_b: usize) -> usize {
        n_a * (self.n_max_b + 1) + n_b
    }

    /// Joint photon-number distribution `p(n_a, n_b)`.
    pub fn joint_distribution(&self) -> JointDistribution {
        JointDistribution {
            n_max_a: self.n_max_a,
            n_max_b: self.n_max_b,
            p: self.mat.diagonal().iter().map(|z| z.re).collect(),
        }
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    /// Is the field in a pure state `|n_a, n_b⟩` (up to `tol`)?
    pub fn is_fock(&self, n_a: usize, n_b: usize, tol: f64) -> bool {
        let k = self.index(n_a, n_b);
        self.mat
            .iter()
            .enumerate()
            .all(|(idx, z)| {
                let (r, c) = (idx % self.mat.nrows(), idx / self.mat.nrows());
                let target = if r == k && c == k { 1.0 } else { 0.0 };
                (z - C64::new(target, 0.0)).norm() <= tol
            })
    }
}

/// Joint photon-number distribution `p(n_a, n_b)`, row-major in `n_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    pub n_max_a: usize,
    pub n_max_b: usize,
    pub p: Vec<f64>,
}

impl JointDistribution {
    /// Product of two independent single-mode laws.
    pub fn product(pa: &[f64], pb: &[f64]) -> Self {
        let p = pa
            .iter()
            .flat_map(|&x| pb.iter().map(move |&y| x * y))
            .collect();
        JointDistribution {
            n_max_a: pa.len() - 1,
            n_max_b: pb.len() - 1,
            p,
        }
    }

    pub fn get(&self, n_a: usize, n_b: usize) -> f64 {
        if n_a > self.n_max_a || n_b > self.n_max_b {
            return 0.0;
        }
        self.p[n_a * (self.n_max_b + 1) + n_b]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let nb1 = self.n_max_b + 1;
        self.p
            .iter()
            .enumerate()
            .map(move |(k, &p)| (k / nb1, k % nb1, p))
    }

    pub fn marginal(&self, mode: Mode) -> Vec<f64> {
        let mut out = vec![
            0.0;
            match mode {
                Mode::A => self.n_max_a + 1,
                Mode::B => self.n_max_b + 1,
            }
        ];
        for (a, b, p) in self.iter() {
            out[match mode {
                Mode::A => a,
                Mode::B => b,
            }] += p;
        }
        out
    }

    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }

    pub fn mean(&self, mode: Mode) -> f64 {
        let tot = self.total();
        self.marginal(mode)
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum::<f64>()
            / tot
    }

    pub fn normalized(&self) -> Self {
        let tot = self.total();
        JointDistribution {
            n_max_a: self.n_max_a,
            n_max_b: self.n_max_b,
            p: self.p.iter().map(|x| x / tot).collect(),
        }
    }
}

/// Projects ρ on an atomic level, traces the atom out and renormalizes.
///
/// Returns the projection probability together with the conditional field.
pub fn conditional_field_state(
    rho: &DensityOperator,
    level: AtomLevel,
) -> Result<(f64, FieldDensity)> {
    let space = rho.space;
    let fd = space.field_dim();
    let offset = level.index() * fd;
    let block = rho.mat.view((offset, offset), (fd, fd)).into_owned();
    let prob = block.trace().re;
    if prob < 1e-12 {
        return Err(Error::DegenerateCondition { probability: prob });
    }
    Ok((
        prob,
        FieldDensity {
            n_max_a: space.n_max_a(),
            n_max_b: space.n_max_b(),
            mat: block / C64::new(prob, 0.0),
        },
    ))
}

/// Partial trace over the atom without conditioning.
pub fn reduced_field_state(rho: &DensityOperator) -> FieldDensity {
    let space = rho.space;
    let fd = space.field_dim();
    let g = rho.mat.view((0, 0), (fd, fd));
    let e = rho.mat.view((fd, fd), (fd, fd));
    FieldDensity {
        n_max_a: space.n_max_a(),
        n_max_b: space.n_max_b(),
        mat: g + e,
    }
}

/// Embeds `|level⟩⟨level| ⊗ field` as a joint density operator.
pub fn compose_with_field(level: AtomLevel, field: &FieldDensity) -> DensityOperator {
    let space = FockSpace::new(field.n_max_a, field.n_max_b);
    let fd = space.field_dim();
    let mut mat = DMatrix::zeros(space.dim(), space.dim());
    let offset = level.index() * fd;
    mat.view_mut((offset, offset), (fd, fd)).copy_from(&field.mat);
    DensityOperator { space, mat }
}
