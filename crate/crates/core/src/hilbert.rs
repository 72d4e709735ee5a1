//! Truncated state spaces for two cavity modes coupled to N three-level atoms,
//! and the sparse mode/atom operators every Hamiltonian is assembled from.
//!
//! Basis ordering is lexicographic on `(n_a, n_b, atomic)`:
//!
//! * collective atomic states are ordered by `(n₂, n₃)` (with `n₁ = N − n₂ − n₃`),
//! * tensor-product atomic states are ordered by the per-atom level list, level
//!   `One < Two < Three`, atom 0 most significant.
//!
//! In both representations index 0 is the cavity vacuum with every atom in `|1⟩`.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex64;

/// Largest atom number the tensor-product representation is built for.
pub const MAX_TENSOR_ATOMS: usize = 3;

/// Tolerance used to set [`SparseOperator::is_hermitian`].
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HilbertError {
    #[error("tensor-product basis supports at most {MAX_TENSOR_ATOMS} atoms, got {0}")]
    TensorProductTooLarge(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("operation requires a {expected:?} basis")]
    RepresentationMismatch { expected: AtomRepresentation },
    #[error("atom index {atom} out of range for {n_atoms} atoms")]
    AtomOutOfRange { atom: usize, n_atoms: usize },
}

/// Atomic levels: `One` and `Three` are the degenerate ground states, `Two` the excited state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    One,
    Two,
    Three,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::One, Level::Two, Level::Three];

    fn from_digit(d: usize) -> Level {
        Level::ALL[d]
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = match self {
            Level::One => 1,
            Level::Two => 2,
            Level::Three => 3,
        };
        write!(f, "{n}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FockSpec {
    pub max_photons_a: usize,
    pub max_photons_b: usize,
}

impl FockSpec {
    /// Default truncation for weak drive.
    pub const WEAK_DRIVE: FockSpec = FockSpec { max_photons_a: 2, max_photons_b: 2 };

    pub fn new(max_photons_a: usize, max_photons_b: usize) -> Self {
        Self { max_photons_a, max_photons_b }
    }

    pub fn uniform(max_photons: usize) -> Self {
        Self::new(max_photons, max_photons)
    }

    pub fn dimension(&self) -> usize {
        (self.max_photons_a + 1) * (self.max_photons_b + 1)
    }
}

impl Default for FockSpec {
    fn default() -> Self {
        Self::WEAK_DRIVE
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AtomRepresentation {
    /// Exchange-symmetric states labelled by level occupations `(n₁, n₂, n₃)`.
    Collective,
    /// Full `3^N` product space; oracle use only.
    TensorProduct,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AtomBasisSpec {
    pub n_atoms: usize,
    pub representation: AtomRepresentation,
}

impl AtomBasisSpec {
    pub fn collective(n_atoms: usize) -> Self {
        Self { n_atoms, representation: AtomRepresentation::Collective }
    }

    pub fn tensor_product(n_atoms: usize) -> Self {
        Self { n_atoms, representation: AtomRepresentation::TensorProduct }
    }

    pub fn dimension(&self) -> usize {
        let n = self.n_atoms;
        match self.representation {
            AtomRepresentation::Collective => (n + 1) * (n + 2) / 2,
            AtomRepresentation::TensorProduct => 3usize.pow(n as u32),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum AtomicState {
    Collective { n1: usize, n2: usize, n3: usize },
    Levels(Vec<Level>),
}

impl AtomicState {
    /// Number of atoms in `level`.
    pub fn count(&self, level: Level) -> usize {
        match self {
            AtomicState::Collective { n1, n2, n3 } => match level {
                Level::One => *n1,
                Level::Two => *n2,
                Level::Three => *n3,
            },
            AtomicState::Levels(levels) => levels.iter().filter(|&&l| l == level).count(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BasisState {
    pub n_a: usize,
    pub n_b: usize,
    pub atomic: AtomicState,
}

impl BasisState {
    /// Drive quanta carried by the state: photons plus excited atoms.
    ///
    /// Every term of the effective Hamiltonian except the drive conserves it.
    pub fn excitation_number(&self) -> usize {
        self.n_a + self.n_b + self.atomic.count(Level::Two)
    }
}

impl fmt::Display for BasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.atomic {
            AtomicState::Collective { n2, n3, .. } => {
                write!(f, "|{}{}{}{}>", self.n_a, self.n_b, n2, n3)
            }
            AtomicState::Levels(levels) => {
                write!(f, "|{},{};", self.n_a, self.n_b)?;
                for l in levels {
                    write!(f, "{l}")?;
                }
                write!(f, ">")
            }
        }
    }
}

/// The specs a basis (and every vector or operator over it) was generated from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BasisId {
    pub fock: FockSpec,
    pub atoms: AtomBasisSpec,
}

#[derive(Clone, Debug)]
pub struct Basis {
    id: BasisId,
    states: Vec<BasisState>,
    index: HashMap<BasisState, usize>,
}

impl Basis {
    pub fn id(&self) -> BasisId {
        self.id
    }

    pub fn fock(&self) -> FockSpec {
        self.id.fock
    }

    pub fn atoms(&self) -> AtomBasisSpec {
        self.id.atoms
    }

    pub fn n_atoms(&self) -> usize {
        self.id.atoms.n_atoms
    }

    pub fn representation(&self) -> AtomRepresentation {
        self.id.atoms.representation
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[BasisState] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &BasisState {
        &self.states[i]
    }

    pub fn index_of(&self, state: &BasisState) -> Option<usize> {
        self.index.get(state).copied()
    }

    /// Collective-basis lookup by the `|n_a n_b n₂ n₃⟩` label.
    pub fn position(&self, n_a: usize, n_b: usize, n2: usize, n3: usize) -> Option<usize> {
        if self.representation() != AtomRepresentation::Collective {
            return None;
        }
        let n1 = self.n_atoms().checked_sub(n2 + n3)?;
        self.index_of(&BasisState { n_a, n_b, atomic: AtomicState::Collective { n1, n2, n3 } })
    }

    fn check_vector(&self, len: usize) -> Result<(), HilbertError> {
        if len == self.dim() {
            Ok(())
        } else {
            Err(HilbertError::DimensionMismatch { expected: self.dim(), found: len })
        }
    }
}

/// Enumerates the truncated basis in the documented lexicographic order.
pub fn build_basis(fock: FockSpec, atoms: AtomBasisSpec) -> Result<Basis, HilbertError> {
    let n = atoms.n_atoms;
    let atomic_states: Vec<AtomicState> = match atoms.representation {
        AtomRepresentation::Collective => {
            let mut v = Vec::with_capacity(atoms.dimension());
            for n2 in 0..=n {
                for n3 in 0..=(n - n2) {
                    v.push(AtomicState::Collective { n1: n - n2 - n3, n2, n3 });
                }
            }
            v
        }
        AtomRepresentation::TensorProduct => {
            if n > MAX_TENSOR_ATOMS {
                return Err(HilbertError::TensorProductTooLarge(n));
            }
            (0..atoms.dimension())
                .map(|mut code| {
                    let mut levels = vec![Level::One; n];
                    for slot in levels.iter_mut().rev() {
                        *slot = Level::from_digit(code % 3);
                        code /= 3;
                    }
                    AtomicState::Levels(levels)
                })
                .collect()
        }
    };

    let mut states = Vec::with_capacity(fock.dimension() * atomic_states.len());
    for n_a in 0..=fock.max_photons_a {
        for n_b in 0..=fock.max_photons_b {
            for atomic in &atomic_states {
                states.push(BasisState { n_a, n_b, atomic: atomic.clone() });
            }
        }
    }
    let index = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    Ok(Basis { id: BasisId { fock, atoms }, states, index })
}

/// Complex amplitudes over a basis identified by its generating specs.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    pub basis: BasisId,
    pub amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn zeros(basis: &Basis) -> Self {
        Self { basis: basis.id(), amplitudes: vec![C64::new(0.0, 0.0); basis.dim()] }
    }

    pub fn basis_state(basis: &Basis, index: usize) -> Self {
        let mut v = Self::zeros(basis);
        v.amplitudes[index] = C64::new(1.0, 0.0);
        v
    }

    pub fn from_amplitudes(basis: &Basis, amplitudes: Vec<C64>) -> Result<Self, HilbertError> {
        basis.check_vector(amplitudes.len())?;
        Ok(Self { basis: basis.id(), amplitudes })
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.amplitudes.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `⟨ψ|op|ψ⟩` without normalisation.
    pub fn expectation(&self, op: &SparseOperator) -> C64 {
        let applied = op.apply(&self.amplitudes);
        self.amplitudes.iter().zip(&applied).map(|(x, y)| x.conj() * y).sum()
    }
}

/// Square complex sparse matrix in compressed-row form.
///
/// Construction is deterministic: equal inputs yield bit-identical operators.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<C64>,
    hermitian: bool,
}

impl SparseOperator {
    /// Duplicate entries are summed; entries that sum to exactly zero are dropped.
    pub fn from_triplets<I>(dim: usize, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, C64)>,
    {
        let mut t: Vec<(usize, usize, C64)> = triplets.into_iter().collect();
        t.sort_by_key(|x| (x.0, x.1));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(t.len());
        let mut values: Vec<C64> = Vec::with_capacity(t.len());
        let mut rows = Vec::with_capacity(t.len());
        for (r, c, v) in t {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) outside dimension {dim}");
            if rows.last() == Some(&r) && cols.last() == Some(&c) {
                *values.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                cols.push(c);
                values.push(v);
            }
        }
        let mut kept_cols = Vec::with_capacity(cols.len());
        let mut kept_vals = Vec::with_capacity(values.len());
        for ((r, c), v) in rows.into_iter().zip(cols).zip(values) {
            if v != C64::new(0.0, 0.0) {
                row_ptr[r + 1] += 1;
                kept_cols.push(c);
                kept_vals.push(v);
            }
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut op = Self { dim, row_ptr, cols: kept_cols, values: kept_vals, hermitian: false };
        op.hermitian = op.hermiticity_error() <= HERMITIAN_TOL;
        op
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_triplets(dim, std::iter::empty())
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_triplets(dim, (0..dim).map(|i| (i, i, C64::new(1.0, 0.0))))
    }

    pub fn diagonal<I: IntoIterator<Item = C64>>(diag: I) -> Self {
        let d: Vec<C64> = diag.into_iter().collect();
        let n = d.len();
        Self::from_triplets(n, d.into_iter().enumerate().map(|(i, v)| (i, i, v)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// True when the operator equals its adjoint within [`HERMITIAN_TOL`].
    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.dim, self.triplets().map(|(r, c, v)| (c, r, v.conj())))
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::from_triplets(self.dim, self.triplets().map(|(r, c, v)| (r, c, v * s)))
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    /// Matrix product `self · rhs`.
    pub fn matmul(&self, rhs: &SparseOperator) -> Self {
        assert_eq!(self.dim, rhs.dim, "operator dimension mismatch");
        let mut t = Vec::new();
        for r in 0..self.dim {
            for (k, v) in self.row(r) {
                for (c, w) in rhs.row(k) {
                    t.push((r, c, v * w));
                }
            }
        }
        Self::from_triplets(self.dim, t)
    }

    pub fn commutator(&self, rhs: &SparseOperator) -> Self {
        &self.matmul(rhs) - &rhs.matmul(self)
    }

    /// `y = self · x`.
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.dim];
        self.apply_into(x, &mut y);
        y
    }

    pub fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.cols[k]];
            }
            *out = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    /// Largest element-wise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &SparseOperator) -> f64 {
        (self - other).values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest element-wise modulus of `self − self†`.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for (r, c, v) in self.triplets() {
            worst = worst.max((v - self.get(c, r).conj()).norm());
        }
        worst
    }
}

impl Add for &SparseOperator {
    type Output = SparseOperator;
    fn add(self, rhs: &SparseOperator) -> SparseOperator {
        assert_eq!(self.dim, rhs.dim, "operator dimension mismatch");
        SparseOperator::from_triplets(self.dim, self.triplets().chain(rhs.triplets()))
    }
}

impl Sub for &SparseOperator {
    type Output = SparseOperator;
    fn sub(self, rhs: &SparseOperator) -> SparseOperator {
        assert_eq!(self.dim, rhs.dim, "operator dimension mismatch");
        SparseOperator::from_triplets(
            self.dim,
            self.triplets().chain(rhs.triplets().map(|(r, c, v)| (r, c, -v))),
        )
    }
}

impl Neg for &SparseOperator {
    type Output = SparseOperator;
    fn neg(self) -> SparseOperator {
        self.scale_real(-1.0)
    }
}

impl Mul for &SparseOperator {
    type Output = SparseOperator;
    fn mul(self, rhs: &SparseOperator) -> SparseOperator {
        self.matmul(rhs)
    }
}

impl Mul<&SparseOperator> for C64 {
    type Output = SparseOperator;
    fn mul(self, rhs: &SparseOperator) -> SparseOperator {
        rhs.scale(self)
    }
}

fn mode_lowering(basis: &Basis, photons: impl Fn(&BasisState) -> usize, lower: impl Fn(&BasisState) -> BasisState) -> SparseOperator {
    let t = basis.states().iter().enumerate().filter_map(|(j, s)| {
        let n = photons(s);
        if n == 0 {
            return None;
        }
        let i = basis.index_of(&lower(s)).expect("lowered state inside truncation");
        Some((i, j, C64::new((n as f64).sqrt(), 0.0)))
    });
    SparseOperator::from_triplets(basis.dim(), t)
}

/// Lowering operator of the driven mode `a`.
pub fn annihilation_a(basis: &Basis) -> SparseOperator {
    mode_lowering(basis, |s| s.n_a, |s| BasisState { n_a: s.n_a - 1, ..s.clone() })
}

/// Lowering operator of the undriven (orthogonal polarisation) mode `b`.
pub fn annihilation_b(basis: &Basis) -> SparseOperator {
    mode_lowering(basis, |s| s.n_b, |s| BasisState { n_b: s.n_b - 1, ..s.clone() })
}

/// `c = (a + i b)/√2`, the mode the `|2⟩ ↔ |3⟩` transition couples to.
pub fn mode_c(basis: &Basis) -> SparseOperator {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    &annihilation_a(basis).scale_real(s) + &annihilation_b(basis).scale(C64::new(0.0, s))
}

/// `Σᵢ |to⟩ᵢ⟨from|`. With `from == to` this is the population of that level.
///
/// On the collective basis the matrix elements are those between normalised
/// exchange-symmetric states, e.g. `Σ|2⟩⟨1|` maps `(n₁, n₂, n₃)` to
/// `(n₁−1, n₂+1, n₃)` with amplitude `√(n₁(n₂+1))`.
pub fn collective_transition(basis: &Basis, from: Level, to: Level) -> SparseOperator {
    let mut t = Vec::new();
    for (j, s) in basis.states().iter().enumerate() {
        match &s.atomic {
            AtomicState::Collective { .. } => {
                let n_from = s.atomic.count(from);
                if n_from == 0 {
                    continue;
                }
                if from == to {
                    t.push((j, j, C64::new(n_from as f64, 0.0)));
                    continue;
                }
                let n_to = s.atomic.count(to);
                let mut occ = [s.atomic.count(Level::One), s.atomic.count(Level::Two), s.atomic.count(Level::Three)];
                occ[from as usize] -= 1;
                occ[to as usize] += 1;
                let target = BasisState {
                    atomic: AtomicState::Collective { n1: occ[0], n2: occ[1], n3: occ[2] },
                    ..s.clone()
                };
                let i = basis.index_of(&target).expect("collective target in basis");
                t.push((i, j, C64::new(((n_from * (n_to + 1)) as f64).sqrt(), 0.0)));
            }
            AtomicState::Levels(levels) => {
                for atom in 0..levels.len() {
                    if let Some(i) = single_atom_target(basis, s, atom, from, to) {
                        t.push((i, j, C64::new(1.0, 0.0)));
                    }
                }
            }
        }
    }
    SparseOperator::from_triplets(basis.dim(), t)
}

fn single_atom_target(basis: &Basis, s: &BasisState, atom: usize, from: Level, to: Level) -> Option<usize> {
    let AtomicState::Levels(levels) = &s.atomic else {
        return None;
    };
    if levels[atom] != from {
        return None;
    }
    let mut next = levels.clone();
    next[atom] = to;
    basis.index_of(&BasisState { atomic: AtomicState::Levels(next), ..s.clone() })
}

/// `|to⟩⟨from|` acting on a single atom of a tensor-product basis.
pub fn atom_transition(basis: &Basis, atom: usize, from: Level, to: Level) -> Result<SparseOperator, HilbertError> {
    if basis.representation() != AtomRepresentation::TensorProduct {
        return Err(HilbertError::RepresentationMismatch { expected: AtomRepresentation::TensorProduct });
    }
    if atom >= basis.n_atoms() {
        return Err(HilbertError::AtomOutOfRange { atom, n_atoms: basis.n_atoms() });
    }
    let t = basis.states().iter().enumerate().filter_map(|(j, s)| {
        single_atom_target(basis, s, atom, from, to).map(|i| (i, j, C64::new(1.0, 0.0)))
    });
    Ok(SparseOperator::from_triplets(basis.dim(), t))
}

/// Diagonal projector onto basis states satisfying `pred`.
pub fn projector(basis: &Basis, pred: impl Fn(&BasisState) -> bool) -> SparseOperator {
    SparseOperator::diagonal(
        basis.states().iter().map(|s| C64::new(if pred(s) { 1.0 } else { 0.0 }, 0.0)),
    )
}

/// Isometry between the collective basis and the exchange-symmetric subspace of
/// the tensor-product basis built from the same specs.
#[derive(Clone, Debug)]
pub struct SymmetricEmbedding {
    pub collective: Basis,
    pub tensor: Basis,
    /// `(collective index, tensor index, weight)`; weights are `1/√multiplicity`.
    entries: Vec<(usize, usize, f64)>,
}

impl SymmetricEmbedding {
    pub fn new(fock: FockSpec, n_atoms: usize) -> Result<Self, HilbertError> {
        let tensor = build_basis(fock, AtomBasisSpec::tensor_product(n_atoms))?;
        let collective = build_basis(fock, AtomBasisSpec::collective(n_atoms))?;
        let key = |s: &BasisState| {
            let a = &s.atomic;
            BasisState {
                n_a: s.n_a,
                n_b: s.n_b,
                atomic: AtomicState::Collective {
                    n1: a.count(Level::One),
                    n2: a.count(Level::Two),
                    n3: a.count(Level::Three),
                },
            }
        };
        let mut multiplicity = vec![0usize; collective.dim()];
        let mut owner = Vec::with_capacity(tensor.dim());
        for s in tensor.states() {
            let i = collective.index_of(&key(s)).expect("every tensor state has a collective label");
            multiplicity[i] += 1;
            owner.push(i);
        }
        let entries = owner
            .into_iter()
            .enumerate()
            .map(|(t, i)| (i, t, 1.0 / (multiplicity[i] as f64).sqrt()))
            .collect();
        Ok(Self { collective, tensor, entries })
    }

    /// Overlaps of a tensor-product state with every normalised symmetric state.
    pub fn project(&self, state: &StateVector) -> Result<StateVector, HilbertError> {
        if state.basis != self.tensor.id() {
            return Err(HilbertError::DimensionMismatch {
                expected: self.tensor.dim(),
                found: state.amplitudes.len(),
            });
        }
        let mut out = StateVector::zeros(&self.collective);
        for &(i, t, w) in &self.entries {
            out.amplitudes[i] += state.amplitudes[t] * w;
        }
        Ok(out)
    }

    /// Maps a collective state to its tensor-product representation.
    pub fn embed(&self, state: &StateVector) -> Result<StateVector, HilbertError> {
        if state.basis != self.collective.id() {
            return Err(HilbertError::DimensionMismatch {
                expected: self.collective.dim(),
                found: state.amplitudes.len(),
            });
        }
        let mut out = StateVector::zeros(&self.tensor);
        for &(i, t, w) in &self.entries {
            out.amplitudes[t] += state.amplitudes[i] * w;
        }
        Ok(out)
    }

    /// `P† · op · P` for a tensor-product operator `op`.
    pub fn restrict(&self, op: &SparseOperator) -> Result<SparseOperator, HilbertError> {
        if op.dim() != self.tensor.dim() {
            return Err(HilbertError::DimensionMismatch { expected: self.tensor.dim(), found: op.dim() });
        }
        let mut by_tensor = vec![(0usize, 0.0f64); self.tensor.dim()];
        for &(i, t, w) in &self.entries {
            by_tensor[t] = (i, w);
        }
        let t = op.triplets().map(|(r, c, v)| {
            let (i, wi) = by_tensor[r];
            let (j, wj) = by_tensor[c];
            (i, j, v * wi * wj)
        });
        Ok(SparseOperator::from_triplets(self.collective.dim(), t))
    }
}

/// Convenience wrapper: projection onto the symmetric subspace for a state on a
/// tensor-product basis (N ≤ 3).
pub fn project_symmetric(state: &StateVector) -> Result<StateVector, HilbertError> {
    if state.basis.atoms.representation != AtomRepresentation::TensorProduct {
        return Err(HilbertError::RepresentationMismatch { expected: AtomRepresentation::TensorProduct });
    }
    let expected = state.basis.fock.dimension() * state.basis.atoms.dimension();
    if state.amplitudes.len() != expected {
        return Err(HilbertError::DimensionMismatch { expected, found: state.amplitudes.len() });
    }
    SymmetricEmbedding::new(state.basis.fock, state.basis.atoms.n_atoms)?.project(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn basis_sizes() {
        let b = build_basis(FockSpec::new(1, 1), AtomBasisSpec::collective(1)).unwrap();
        assert_eq!(b.dim(), 12);
        let b = build_basis(FockSpec::new(0, 0), AtomBasisSpec::collective(2)).unwrap();
        assert_eq!(b.dim(), 6);
        let b = build_basis(FockSpec::new(1, 1), AtomBasisSpec::tensor_product(2)).unwrap();
        assert_eq!(b.dim(), 36);
    }

    #[test]
    fn tensor_product_capped() {
        let err = build_basis(FockSpec::new(1, 1), AtomBasisSpec::tensor_product(4)).unwrap_err();
        assert_eq!(err, HilbertError::TensorProductTooLarge(4));
    }

    #[test]
    fn ordering_is_lexicographic() {
        let b = build_basis(FockSpec::new(1, 1), AtomBasisSpec::collective(2)).unwrap();
        assert_eq!(b.position(0, 0, 0, 0), Some(0));
        assert_eq!(b.position(0, 0, 0, 1), Some(1));
        assert_eq!(b.position(0, 0, 1, 0), Some(3));
        assert_eq!(b.position(0, 1, 0, 0), Some(6));
        assert_eq!(b.position(1, 0, 0, 0), Some(12));
        let t = build_basis(FockSpec::new(0, 0), AtomBasisSpec::tensor_product(2)).unwrap();
        assert_eq!(t.state(0).atomic, AtomicState::Levels(vec![Level::One, Level::One]));
        assert_eq!(t.state(1).atomic, AtomicState::Levels(vec![Level::One, Level::Two]));
        assert_eq!(t.state(3).atomic, AtomicState::Levels(vec![Level::Two, Level::One]));
    }

    #[test]
    fn lowering_matrix_elements() {
        let b = build_basis(FockSpec::new(2, 1), AtomBasisSpec::collective(1)).unwrap();
        let a = annihilation_a(&b);
        let p = |na| b.position(na, 0, 0, 0).unwrap();
        assert_eq!(a.get(p(0), p(1)), c(1.0));
        assert_eq!(a.get(p(1), p(2)), c(2f64.sqrt()));
        let out = a.apply(&StateVector::basis_state(&b, p(0)).amplitudes);
        assert!(out.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn mode_c_components() {
        let b = build_basis(FockSpec::new(1, 1), AtomBasisSpec::collective(1)).unwrap();
        let cm = mode_c(&b);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let vac = b.position(0, 0, 0, 0).unwrap();
        let out = cm.apply(&StateVector::basis_state(&b, b.position(1, 0, 0, 0).unwrap()).amplitudes);
        assert!((out[vac] - c(s)).norm() < 1e-15);
        let out = cm.apply(&StateVector::basis_state(&b, b.position(0, 1, 0, 0).unwrap()).amplitudes);
        assert!((out[vac] - C64::new(0.0, s)).norm() < 1e-15);
    }

    #[test]
    fn c_commutator_is_identity_away_from_truncation() {
        let b = build_basis(FockSpec::new(3, 3), AtomBasisSpec::collective(1)).unwrap();
        let cm = mode_c(&b);
        let comm = cm.commutator(&cm.adjoint());
        for (i, s) in b.states().iter().enumerate() {
            if s.n_a >= 3 || s.n_b >= 3 {
                continue;
            }
            for j in 0..b.dim() {
                let bs = b.state(j);
                if bs.n_a >= 3 || bs.n_b >= 3 {
                    continue;
                }
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((comm.get(i, j) - c(expected)).norm() < 1e-12, "{s} {bs}");
            }
        }
    }

    #[test]
    fn modes_commute() {
        let b = build_basis(FockSpec::new(2, 2), AtomBasisSpec::collective(2)).unwrap();
        let comm = annihilation_a(&b).commutator(&annihilation_b(&b));
        assert_eq!(comm.nnz(), 0);
        let comm = annihilation_a(&b).commutator(&annihilation_b(&b).adjoint());
        assert_eq!(comm.nnz(), 0);
    }

    #[test]
    fn number_operator_spectrum() {
        let b = build_basis(FockSpec::new(3, 2), AtomBasisSpec::collective(1)).unwrap();
        let a = annihilation_a(&b);
        let n = a.adjoint().matmul(&a);
        for (r, col, v) in n.triplets() {
            assert_eq!(r, col);
            assert!((v - c(b.state(r).n_a as f64)).norm() < 1e-12);
        }
    }

    #[test]
    fn collective_raising_amplitudes() {
        let b = build_basis(FockSpec::new(0, 0), AtomBasisSpec::collective(1)).unwrap();
        let j21 = collective_transition(&b, Level::One, Level::Two);
        assert_eq!(j21.get(b.position(0, 0, 1, 0).unwrap(), 0), c(1.0));

        let b = build_basis(FockSpec::new(0, 0), AtomBasisSpec::collective(4)).unwrap();
        let j21 = collective_transition(&b, Level::One, Level::Two);
        assert_eq!(j21.get(b.position(0, 0, 1, 0).unwrap(), 0), c(2.0));
        for (k, s) in b.states().iter().enumerate() {
            if s.atomic.count(Level::One) == 0 {
                let out = j21.apply(&StateVector::basis_state(&b, k).amplitudes);
                assert!(out.iter().all(|z| z.norm() == 0.0));
            }
        }
    }

    #[test]
    fn collective_matches_tensor_product_at_three_atoms() {
        // √(3·1) from the tensor-product side
        let emb = SymmetricEmbedding::new(FockSpec::new(0, 0), 3).unwrap();
        let op = emb.restrict(&collective_transition(&emb.tensor, Level::One, Level::Two)).unwrap();
        let i = emb.collective.position(0, 0, 1, 0).unwrap();
        assert!((op.get(i, 0) - c(3f64.sqrt())).norm() < 1e-12);
    }

    #[test]
    fn symmetric_projection_examples() {
        let fock = FockSpec::new(0, 0);
        let t = build_basis(fock, AtomBasisSpec::tensor_product(2)).unwrap();
        let idx = |l0, l1| t.index_of(&BasisState { n_a: 0, n_b: 0, atomic: AtomicState::Levels(vec![l0, l1]) }).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut sym = StateVector::zeros(&t);
        sym.amplitudes[idx(Level::One, Level::Two)] = c(s);
        sym.amplitudes[idx(Level::Two, Level::One)] = c(s);
        let p = project_symmetric(&sym).unwrap();
        let coll = build_basis(fock, AtomBasisSpec::collective(2)).unwrap();
        let k = coll.position(0, 0, 1, 0).unwrap();
        assert!((p.amplitudes[k] - c(1.0)).norm() < 1e-15);
        assert!((p.norm_sqr() - 1.0).abs() < 1e-15);

        let mut anti = sym.clone();
        anti.amplitudes[idx(Level::Two, Level::One)] = c(-s);
        let p = project_symmetric(&anti).unwrap();
        assert!(p.norm_sqr() < 1e-30);
    }

    #[test]
    fn single_atom_projection_is_identity() {
        let fock = FockSpec::new(1, 1);
        let t = build_basis(fock, AtomBasisSpec::tensor_product(1)).unwrap();
        let coll = build_basis(fock, AtomBasisSpec::collective(1)).unwrap();
        for (k, s) in t.states().iter().enumerate() {
            let p = project_symmetric(&StateVector::basis_state(&t, k)).unwrap();
            let target = coll
                .position(s.n_a, s.n_b, s.atomic.count(Level::Two), s.atomic.count(Level::Three))
                .unwrap();
            for (i, z) in p.amplitudes.iter().enumerate() {
                assert_eq!(*z, c(if i == target { 1.0 } else { 0.0 }));
            }
        }
    }

    #[test]
    fn projection_rejects_collective_input() {
        let b = build_basis(FockSpec::new(0, 0), AtomBasisSpec::collective(2)).unwrap();
        assert!(project_symmetric(&StateVector::zeros(&b)).is_err());
    }

    #[test]
    fn construction_is_deterministic() {
        let b = build_basis(FockSpec::new(2, 2), AtomBasisSpec::collective(3)).unwrap();
        let x = &mode_c(&b).matmul(&collective_transition(&b, Level::Three, Level::Two));
        let y = &mode_c(&b).matmul(&collective_transition(&b, Level::Three, Level::Two));
        assert_eq!(x, y);
    }

    #[test]
    fn hermitian_flag() {
        let b = build_basis(FockSpec::new(2, 2), AtomBasisSpec::collective(1)).unwrap();
        let a = annihilation_a(&b);
        assert!(!a.is_hermitian());
        assert!((&a + &a.adjoint()).is_hermitian());
        assert!(a.adjoint().matmul(&a).is_hermitian());
    }
}
