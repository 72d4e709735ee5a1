use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::OracleError;
use crate::analytic::{cooperativities, Method, SystemParams, TransmissionRecord};
use crate::hilbert::{
    annihilation_a, annihilation_b, atom_transition, build_basis, collective_transition, mode_c, projector,
    AtomBasisSpec, AtomRepresentation, Basis, FockSpec, Level, SparseOperator, C64,
};

/// Largest Hilbert dimension for which the dense Liouvillian is factorised.
pub const MAX_DENSE_DIM: usize = 30;

/// Relative LU pivot below which the null space is treated as degenerate.
const DEGENERATE_PIVOT_RATIO: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Channel {
    CavityA,
    CavityB,
    /// `|2⟩ → |1⟩` spontaneous emission of one atom, rate γ.
    DecayToOne { atom: usize },
    /// `|2⟩ → |3⟩` free-space emission of one atom, rate Γ.
    DecayToThree { atom: usize },
}

#[derive(Clone, Debug)]
pub struct JumpOperator {
    /// Includes the `√rate` prefactor.
    pub operator: SparseOperator,
    pub channel: Channel,
    /// Rate in rad/µs.
    pub rate: f64,
}

#[derive(Clone, Debug)]
pub struct LindbladModel {
    pub hamiltonian: SparseOperator,
    pub jumps: Vec<JumpOperator>,
    pub params: SystemParams,
    basis: Basis,
    effective: SparseOperator,
}

/// Builds the Hermitian Hamiltonian and jump set on a tensor-product basis.
///
/// Channels with zero rate are omitted, so `κ = γ_tot = 0` gives a closed system.
pub fn build_lindblad(params: &SystemParams, basis: &Basis) -> Result<LindbladModel, OracleError> {
    params.check_non_negative()?;
    if basis.representation() != AtomRepresentation::TensorProduct {
        return Err(OracleError::NeedsTensorProduct);
    }
    let n = params.atom_count()?;
    if n != basis.n_atoms() {
        return Err(OracleError::AtomMismatch { params: n, basis: basis.n_atoms() });
    }
    let fock = basis.fock();
    if fock.max_photons_a < 2 || fock.max_photons_b < 2 {
        return Err(OracleError::TruncationTooSmall(fock));
    }
    let r = params.angular();
    let a = annihilation_a(basis);
    let b = annihilation_b(basis);
    let c = mode_c(basis);
    let i = |op: &SparseOperator, s: f64| op.scale(C64::new(0.0, s));

    let drive = i(&(&a.adjoint() - &a), r.epsilon);
    let absorb_a = a.matmul(&collective_transition(basis, Level::One, Level::Two));
    let absorb_c = c.matmul(&collective_transition(basis, Level::Three, Level::Two));
    let hamiltonian = &(&drive + &i(&(&absorb_a - &absorb_a.adjoint()), r.g))
        + &i(&(&absorb_c - &absorb_c.adjoint()), r.big_g);

    let mut jumps = Vec::new();
    let mut push = |op: SparseOperator, channel, rate: f64| {
        if rate > 0.0 {
            jumps.push(JumpOperator { operator: op.scale_real(rate.sqrt()), channel, rate });
        }
    };
    push(a, Channel::CavityA, 2.0 * r.kappa);
    push(b, Channel::CavityB, 2.0 * r.kappa);
    for atom in 0..n {
        push(atom_transition(basis, atom, Level::Two, Level::One)?, Channel::DecayToOne { atom }, r.gamma);
        push(atom_transition(basis, atom, Level::Two, Level::Three)?, Channel::DecayToThree { atom }, r.big_gamma);
    }

    let decay = jumps
        .iter()
        .fold(SparseOperator::zeros(basis.dim()), |acc, j| &acc + &j.operator.adjoint().matmul(&j.operator));
    let effective = &hamiltonian - &decay.scale(C64::new(0.0, 0.5));
    Ok(LindbladModel { hamiltonian, jumps, params: *params, basis: basis.clone(), effective })
}

impl LindbladModel {
    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// `H − (i/2) Σ L†L`.
    pub fn effective_hamiltonian(&self) -> &SparseOperator {
        &self.effective
    }

    /// Total rate out of `|2⟩` for one atom, summed over its spontaneous channels.
    pub fn excited_decay_rate(&self, atom: usize) -> f64 {
        self.jumps
            .iter()
            .filter(|j| matches!(j.channel, Channel::DecayToOne { atom: k } | Channel::DecayToThree { atom: k } if k == atom))
            .map(|j| j.rate)
            .sum()
    }

    /// `L[ρ]` for Hermitian `ρ`.
    pub fn liouvillian(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let d = self.dim();
        let h_rho = sparse_times_dense(&self.effective, rho);
        let mut out = DMatrix::<C64>::zeros(d, d);
        let minus_i = C64::new(0.0, -1.0);
        for j in 0..d {
            for i in 0..d {
                // −i(H ρ − ρ H†) with ρ H† = (H ρ)†
                out[(i, j)] = minus_i * (h_rho[(i, j)] - h_rho[(j, i)].conj());
            }
        }
        for jump in &self.jumps {
            let l_rho = sparse_times_dense(&jump.operator, rho);
            let sandwich = sparse_times_dense(&jump.operator, &l_rho.adjoint());
            out += sandwich;
        }
        out
    }

    /// Fourth-order Runge–Kutta integration of the master equation.
    pub fn evolve(&self, rho: &DMatrix<C64>, duration: f64, dt: f64) -> DMatrix<C64> {
        let steps = (duration / dt).round() as usize;
        let mut rho = rho.clone();
        for _ in 0..steps {
            rho = self.rk4_step(&rho, dt);
        }
        rho
    }

    fn rk4_step(&self, rho: &DMatrix<C64>, dt: f64) -> DMatrix<C64> {
        let k1 = self.liouvillian(rho);
        let k2 = self.liouvillian(&(rho + &k1 * C64::new(0.5 * dt, 0.0)));
        let k3 = self.liouvillian(&(rho + &k2 * C64::new(0.5 * dt, 0.0)));
        let k4 = self.liouvillian(&(rho + &k3 * C64::new(dt, 0.0)));
        rho + (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0)
    }

    /// Time averages of `observables` over `[t_start, t_end]`, starting from the
    /// prepared state at `t = 0`. Samples are taken at the end of every step.
    pub fn time_averaged(
        &self,
        t_start: f64,
        t_end: f64,
        dt: f64,
        observables: &[&SparseOperator],
    ) -> Result<Vec<f64>, OracleError> {
        if !(t_start >= 0.0 && t_end > t_start) {
            return Err(OracleError::InvalidWindow(format!("[{t_start}, {t_end}]")));
        }
        let first = (t_start / dt).round() as usize;
        let last = (t_end / dt).round() as usize;
        let mut rho = prepared_state(self.dim());
        let mut sums = vec![0.0; observables.len()];
        for step in 0..last {
            rho = self.rk4_step(&rho, dt);
            if step >= first {
                for (s, op) in sums.iter_mut().zip(observables) {
                    *s += expectation(op, &rho);
                }
            }
        }
        let count = (last - first) as f64;
        Ok(sums.into_iter().map(|s| s / count).collect())
    }
}

fn prepared_state(d: usize) -> DMatrix<C64> {
    let mut rho = DMatrix::zeros(d, d);
    rho[(0, 0)] = C64::new(1.0, 0.0);
    rho
}

fn sparse_times_dense(op: &SparseOperator, m: &DMatrix<C64>) -> DMatrix<C64> {
    let d = op.dim();
    let mut out = DMatrix::<C64>::zeros(d, m.ncols());
    let src = m.as_slice();
    let dst = out.as_mut_slice();
    for j in 0..m.ncols() {
        op.apply_into(&src[j * d..(j + 1) * d], &mut dst[j * d..(j + 1) * d]);
    }
    out
}

/// `Re tr(op ρ)`.
fn expectation(op: &SparseOperator, rho: &DMatrix<C64>) -> f64 {
    op.triplets().map(|(r, c, v)| v * rho[(c, r)]).sum::<C64>().re
}

#[derive(Clone, Debug)]
pub struct DensityMatrix {
    pub rho: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn trace(&self) -> C64 {
        self.rho.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.rho.nrows();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                worst = worst.max((self.rho[(i, j)] - self.rho[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.rho + self.rho.adjoint()) * C64::new(0.5, 0.0);
        herm.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn expectation(&self, op: &SparseOperator) -> f64 {
        expectation(op, &self.rho)
    }
}

/// Null vector of the Liouvillian normalised to unit trace.
///
/// Dense LU with full pivoting on the `D² × D²` superoperator, so only small
/// spaces are accepted. A rank-deficient system (e.g. no drive, where every
/// ground-state mixture is stationary) is reported, not resolved.
pub fn steady_state_density(model: &LindbladModel) -> Result<DensityMatrix, OracleError> {
    let d = model.dim();
    if d > MAX_DENSE_DIM {
        return Err(OracleError::DimensionTooLarge { dim: d, max: MAX_DENSE_DIM });
    }
    let n = d * d;
    // column-major vec: ρ_ij ↦ i + j·d
    let idx = |i: usize, j: usize| i + j * d;
    let mut s = DMatrix::<C64>::zeros(n, n);
    let minus_i = C64::new(0.0, -1.0);
    let heff = model.effective_hamiltonian();
    for (i, k, h) in heff.triplets() {
        for j in 0..d {
            s[(idx(i, j), idx(k, j))] += minus_i * h;
            // ρ H†: (i', j=i) row gets conj(H_{i k}) on ρ_{i' k}
            s[(idx(j, i), idx(j, k))] -= minus_i * h.conj();
        }
    }
    for jump in &model.jumps {
        let l: Vec<(usize, usize, C64)> = jump.operator.triplets().collect();
        for &(i, k, x) in &l {
            for &(j, m, y) in &l {
                s[(idx(i, j), idx(k, m))] += x * y.conj();
            }
        }
    }
    let trace_row = idx(0, 0);
    for c in 0..n {
        s[(trace_row, c)] = C64::new(0.0, 0.0);
    }
    for k in 0..d {
        s[(trace_row, idx(k, k))] = C64::new(1.0, 0.0);
    }
    let mut rhs = DVector::<C64>::zeros(n);
    rhs[trace_row] = C64::new(1.0, 0.0);

    let lu = s.full_piv_lu();
    let u = lu.u();
    let pivots: Vec<f64> = (0..n).map(|k| u[(k, k)].norm()).collect();
    let largest = pivots.iter().copied().fold(0.0, f64::max);
    let smallest = pivots.iter().copied().fold(f64::INFINITY, f64::min);
    let pivot_ratio = smallest / largest;
    if !(pivot_ratio > DEGENERATE_PIVOT_RATIO) {
        return Err(OracleError::DegenerateNullSpace { pivot_ratio });
    }
    let x = lu.solve(&rhs).ok_or(OracleError::DegenerateNullSpace { pivot_ratio })?;
    let rho = DMatrix::from_column_slice(d, d, x.as_slice());
    Ok(DensityMatrix { rho })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OracleSettings {
    pub fock: FockSpec,
    /// Integration time from the prepared state (µs).
    pub settle_time: f64,
    /// RK4 step (µs).
    pub step: f64,
}

impl OracleSettings {
    /// Settles for `20/κ` with a step of `0.05` over the fastest rate.
    pub fn for_params(params: &SystemParams) -> Self {
        let r = params.angular();
        Self { fock: FockSpec::WEAK_DRIVE, settle_time: 20.0 / r.kappa, step: 0.05 / r.fastest() }
    }

    pub fn with_fock(mut self, fock: FockSpec) -> Self {
        self.fock = fock;
        self
    }
}

/// State reached from the prepared state after `settings.settle_time`.
pub fn quasi_steady_density(model: &LindbladModel, settings: &OracleSettings) -> DensityMatrix {
    DensityMatrix { rho: model.evolve(&prepared_state(model.dim()), settings.settle_time, settings.step) }
}

/// Master-equation transmissions and diagnostics for one atom number.
#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub n_atoms: usize,
    pub epsilon_over_kappa: f64,
    /// `⟨a†a⟩` restricted to no atom in `|3⟩`, conditioned on that event and
    /// normalised to the empty cavity.
    pub t_driven: f64,
    /// Unrestricted `⟨a†a⟩` over the empty cavity.
    pub t_driven_total: f64,
    /// `⟨b†b⟩` over the empty cavity.
    pub t_undriven: f64,
    /// Share of `⟨b†b⟩` carried by states with every atom in `|1⟩`.
    pub bare_undriven_fraction: f64,
    /// Probability that some atom has been pumped into `|3⟩`.
    pub shelved_population: f64,
    pub trace_error: f64,
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
}

impl OracleReport {
    pub fn record(&self, params: &SystemParams) -> TransmissionRecord {
        TransmissionRecord {
            n_atoms: self.n_atoms as f64,
            cooperativity: cooperativities(&params.with_atoms(self.n_atoms as f64)).c,
            t_driven: self.t_driven,
            t_undriven: self.t_undriven,
            method: Method::MasterEq,
            epsilon_over_kappa: self.epsilon_over_kappa,
            uncertainty: None,
            seed: None,
        }
    }
}

/// `(a†a, b†b)` on `basis`.
pub fn photon_number_ops(basis: &Basis) -> (SparseOperator, SparseOperator) {
    let a = annihilation_a(basis);
    let b = annihilation_b(basis);
    (a.adjoint().matmul(&a), b.adjoint().matmul(&b))
}

/// Driven-mode photon number of the empty cavity after settling.
pub fn empty_cavity_photons(params: &SystemParams, settings: &OracleSettings) -> Result<f64, OracleError> {
    let basis = build_basis(settings.fock, AtomBasisSpec::tensor_product(0))?;
    let model = build_lindblad(&params.with_atoms(0.0), &basis)?;
    let rho = quasi_steady_density(&model, settings);
    let a = annihilation_a(&basis);
    let n = rho.expectation(&a.adjoint().matmul(&a));
    if n > 0.0 {
        Ok(n)
    } else {
        Err(OracleError::ZeroReference)
    }
}

pub fn master_equation_transmissions(params: &SystemParams, settings: &OracleSettings) -> Result<OracleReport, OracleError> {
    let n_atoms = params.atom_count()?;
    let basis = build_basis(settings.fock, AtomBasisSpec::tensor_product(n_atoms))?;
    let model = build_lindblad(params, &basis)?;
    let rho = quasi_steady_density(&model, settings);
    let reference = empty_cavity_photons(params, settings)?;

    let a = annihilation_a(&basis);
    let b = annihilation_b(&basis);
    let na = a.adjoint().matmul(&a);
    let nb = b.adjoint().matmul(&b);
    let unshelved = projector(&basis, |s| s.atomic.count(Level::Three) == 0);
    let all_in_one = projector(&basis, |s| s.atomic.count(Level::One) == n_atoms);

    let p_unshelved = rho.expectation(&unshelved);
    let driven_unshelved = rho.expectation(&na.matmul(&unshelved));
    let undriven = rho.expectation(&nb);
    let bare = rho.expectation(&nb.matmul(&all_in_one));

    Ok(OracleReport {
        n_atoms,
        epsilon_over_kappa: params.epsilon_over_kappa(),
        t_driven: driven_unshelved / p_unshelved / reference,
        t_driven_total: rho.expectation(&na) / reference,
        t_undriven: undriven / reference,
        bare_undriven_fraction: if undriven > 0.0 { bare / undriven } else { 0.0 },
        shelved_population: 1.0 - p_unshelved,
        trace_error: (rho.trace() - C64::new(1.0, 0.0)).norm(),
        hermiticity_error: rho.hermiticity_error(),
        min_eigenvalue: rho.min_eigenvalue(),
    })
}
