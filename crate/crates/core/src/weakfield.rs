//! Non-Hermitian between-jump Hamiltonian and its first-order steady state
//! under weak drive.
//!
//! With `ħ = 1` and rates in rad/µs the effective Hamiltonian is
//!
//! ```text
//! H = iε(a† − a) + ig(a J₂₁ − a† J₁₂) + iG(c J₂₃ − c† J₃₂)
//!     − iκ(a†a + b†b) − i(γ_tot/2) N₂
//! ```
//!
//! where `Jₖₗ = Σᵢ |k⟩ᵢ⟨l|`, `N₂ = Σᵢ |2⟩ᵢ⟨2|` and `c = (a + ib)/√2`.
//!
//! The drive is the only term that changes the excitation number
//! `n_a + n_b + n₂`, so to first order in `ε/κ` the steady state is the vacuum
//! (amplitude fixed at 1) plus a linear response confined to the one-excitation
//! block. Two solves are offered: the six-amplitude ansatz spanned by
//! `|0000⟩, |0010⟩, |1000⟩, |0100⟩, |1001⟩, |0101⟩`, and the complete
//! one-excitation block, which additionally lets a driven-mode photon emitted
//! by one atom be re-absorbed by another (`|1001⟩ → |0011⟩ → …`). They
//! coincide for `N ≤ 1`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{cooperativities, Method, ParamError, SystemParams, TransmissionRecord};
use crate::hilbert::{
    annihilation_a, annihilation_b, build_basis, collective_transition, mode_c, AtomBasisSpec,
    AtomRepresentation, Basis, FockSpec, HilbertError, Level, SparseOperator, StateVector,
    SymmetricEmbedding, C64,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeakFieldError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error("parameters describe {params} atoms but the basis holds {basis}")]
    AtomMismatch { params: usize, basis: usize },
    #[error("basis must hold at least one photon per mode, got {0:?}")]
    TruncationTooSmall(FockSpec),
    #[error("six-state ansatz needs a collective basis")]
    AnsatzNeedsCollective,
    #[error("steady-state system is singular")]
    SingularSystem,
    #[error("empty-cavity reference has zero driven amplitude")]
    ZeroEmptyAmplitude,
    #[error("reference amplitudes were computed at a different drive or truncation")]
    ReferenceMismatch,
    #[error("ill-conditioned drive extrapolation: {0}")]
    IllConditionedFit(String),
}

/// Detunings (`/2π` MHz) of the cavity modes and the atomic transition from the
/// drive. Zero in every result this crate reports.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Detuning {
    pub cavity: f64,
    pub atom: f64,
}

#[derive(Clone, Debug)]
pub struct EffectiveHamiltonian {
    pub operator: SparseOperator,
    pub params: SystemParams,
    basis: Basis,
}

impl EffectiveHamiltonian {
    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    /// `(H − H†)/2i`; negative semidefinite when every rate is non-negative.
    pub fn anti_hermitian_part(&self) -> SparseOperator {
        (&self.operator - &self.operator.adjoint()).scale(C64::new(0.0, -0.5))
    }

    pub fn hermitian_part(&self) -> SparseOperator {
        (&self.operator + &self.operator.adjoint()).scale_real(0.5)
    }
}

fn i_times(op: &SparseOperator, s: f64) -> SparseOperator {
    op.scale(C64::new(0.0, s))
}

/// Builds the resonant effective Hamiltonian on `basis`.
pub fn build_effective_hamiltonian(params: &SystemParams, basis: &Basis) -> Result<EffectiveHamiltonian, WeakFieldError> {
    build_effective_hamiltonian_detuned(params, basis, Detuning::default())
}

pub fn build_effective_hamiltonian_detuned(
    params: &SystemParams,
    basis: &Basis,
    detuning: Detuning,
) -> Result<EffectiveHamiltonian, WeakFieldError> {
    params.check_non_negative()?;
    let n = params.atom_count()?;
    if n != basis.n_atoms() {
        return Err(WeakFieldError::AtomMismatch { params: n, basis: basis.n_atoms() });
    }
    let fock = basis.fock();
    if fock.max_photons_a < 1 || fock.max_photons_b < 1 {
        return Err(WeakFieldError::TruncationTooSmall(fock));
    }
    let rates = params.angular();
    let a = annihilation_a(basis);
    let b = annihilation_b(basis);
    let c = mode_c(basis);
    let j21 = collective_transition(basis, Level::One, Level::Two);
    let j23 = collective_transition(basis, Level::Three, Level::Two);
    let n2 = collective_transition(basis, Level::Two, Level::Two);
    let photons = &a.adjoint().matmul(&a) + &b.adjoint().matmul(&b);

    let drive = i_times(&(&a.adjoint() - &a), rates.epsilon);
    let driven_coupling = {
        let absorb = a.matmul(&j21);
        i_times(&(&absorb - &absorb.adjoint()), rates.g)
    };
    let undriven_coupling = {
        let absorb = c.matmul(&j23);
        i_times(&(&absorb - &absorb.adjoint()), rates.big_g)
    };
    let decay = &i_times(&photons, -rates.kappa) + &i_times(&n2, -0.5 * rates.gamma_tot);
    let shifts = &photons.scale_real(std::f64::consts::TAU * detuning.cavity)
        + &n2.scale_real(std::f64::consts::TAU * detuning.atom);

    let operator = [drive, driven_coupling, undriven_coupling, decay, shifts]
        .iter()
        .fold(SparseOperator::zeros(basis.dim()), |acc, term| &acc + term);
    Ok(EffectiveHamiltonian { operator, params: *params, basis: basis.clone() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ansatz {
    /// The six-amplitude state `|0000⟩ … |0101⟩`. Collective basis only.
    SixState,
    /// Every basis state with exactly one excitation.
    FirstOrder,
}

/// Steady-state first-order amplitudes, labelled `c_{n_a n_b n₂ n₃}` on the
/// collective basis.
#[derive(Clone, Debug)]
pub struct AmplitudeSet {
    pub c_0000: C64,
    pub c_0010: C64,
    pub c_1000: C64,
    pub c_0100: C64,
    pub c_1001: C64,
    pub c_0101: C64,
    /// Full amplitude vector on the basis the Hamiltonian was built on.
    pub full: StateVector,
    /// Mean undriven-mode photon number `⟨b†b⟩` of the full vector.
    pub undriven_population: f64,
    pub ansatz: Ansatz,
    pub params: SystemParams,
}

const SIX_STATE_LABELS: [(usize, usize, usize, usize); 5] =
    [(1, 0, 0, 0), (0, 1, 0, 0), (0, 0, 1, 0), (1, 0, 0, 1), (0, 1, 0, 1)];

/// Solves `H ψ = 0` on the chosen block with the vacuum amplitude fixed at 1.
pub fn solve_steady_amplitudes(h: &EffectiveHamiltonian, ansatz: Ansatz) -> Result<AmplitudeSet, WeakFieldError> {
    let basis = h.basis();
    let vacuum = 0usize;
    debug_assert_eq!(basis.state(vacuum).excitation_number(), 0);

    let unknowns: Vec<usize> = match ansatz {
        Ansatz::SixState => {
            if basis.representation() != AtomRepresentation::Collective {
                return Err(WeakFieldError::AnsatzNeedsCollective);
            }
            SIX_STATE_LABELS
                .iter()
                .filter_map(|&(na, nb, n2, n3)| basis.position(na, nb, n2, n3))
                .collect()
        }
        Ansatz::FirstOrder => (0..basis.dim()).filter(|&k| basis.state(k).excitation_number() == 1).collect(),
    };

    let k = unknowns.len();
    let mut m = DMatrix::<C64>::zeros(k, k);
    let mut rhs = DVector::<C64>::zeros(k);
    let slot: std::collections::HashMap<usize, usize> = unknowns.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    for (i, &s) in unknowns.iter().enumerate() {
        for (col, v) in h.operator.row(s) {
            if col == vacuum {
                rhs[i] -= v;
            } else if let Some(&j) = slot.get(&col) {
                m[(i, j)] += v;
            }
        }
    }
    let x = m.lu().solve(&rhs).ok_or(WeakFieldError::SingularSystem)?;
    if x.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(WeakFieldError::SingularSystem);
    }

    let mut full = StateVector::zeros(basis);
    full.amplitudes[vacuum] = C64::new(1.0, 0.0);
    for (i, &s) in unknowns.iter().enumerate() {
        full.amplitudes[s] = x[i];
    }
    let undriven_population = basis
        .states()
        .iter()
        .zip(&full.amplitudes)
        .map(|(s, z)| s.n_b as f64 * z.norm_sqr())
        .sum();

    let labelled = match basis.representation() {
        AtomRepresentation::Collective => full.clone(),
        AtomRepresentation::TensorProduct => SymmetricEmbedding::new(basis.fock(), basis.n_atoms())?.project(&full)?,
    };
    let collective = match basis.representation() {
        AtomRepresentation::Collective => basis.clone(),
        AtomRepresentation::TensorProduct => build_basis(basis.fock(), AtomBasisSpec::collective(basis.n_atoms()))?,
    };
    let get = |na, nb, n2, n3| {
        collective
            .position(na, nb, n2, n3)
            .map(|p| labelled.amplitudes[p])
            .unwrap_or(C64::new(0.0, 0.0))
    };
    Ok(AmplitudeSet {
        c_0000: get(0, 0, 0, 0),
        c_0010: get(0, 0, 1, 0),
        c_1000: get(1, 0, 0, 0),
        c_0100: get(0, 1, 0, 0),
        c_1001: get(1, 0, 0, 1),
        c_0101: get(0, 1, 0, 1),
        full,
        undriven_population,
        ansatz,
        params: h.params,
    })
}

/// Normalises `amps` by the empty-cavity driven amplitude computed at the same drive.
pub fn transmissions_from_amplitudes(amps: &AmplitudeSet, empty: &AmplitudeSet) -> Result<TransmissionRecord, WeakFieldError> {
    if empty.params.epsilon != amps.params.epsilon || empty.full.basis.fock != amps.full.basis.fock {
        return Err(WeakFieldError::ReferenceMismatch);
    }
    let reference = empty.c_1000.norm_sqr();
    if reference == 0.0 {
        return Err(WeakFieldError::ZeroEmptyAmplitude);
    }
    Ok(TransmissionRecord {
        n_atoms: amps.params.n_atoms,
        cooperativity: cooperativities(&amps.params).c,
        t_driven: amps.c_1000.norm_sqr() / reference,
        t_undriven: amps.undriven_population / reference,
        method: Method::WeakField,
        epsilon_over_kappa: amps.params.epsilon_over_kappa(),
        uncertainty: None,
        seed: None,
    })
}

/// Solves for `params.n_atoms` atoms and for the empty cavity on the collective
/// basis with truncation `fock`, and returns the normalised transmissions.
pub fn weak_field_record(params: &SystemParams, fock: FockSpec, ansatz: Ansatz) -> Result<TransmissionRecord, WeakFieldError> {
    let n = params.atom_count()?;
    let basis = build_basis(fock, AtomBasisSpec::collective(n))?;
    weak_field_record_on(params, &basis, ansatz)
}

pub fn weak_field_record_on(params: &SystemParams, basis: &Basis, ansatz: Ansatz) -> Result<TransmissionRecord, WeakFieldError> {
    let amps = solve_steady_amplitudes(&build_effective_hamiltonian(params, basis)?, ansatz)?;
    let empty = empty_cavity_amplitudes(params, basis.fock())?;
    transmissions_from_amplitudes(&amps, &empty)
}

pub fn empty_cavity_amplitudes(params: &SystemParams, fock: FockSpec) -> Result<AmplitudeSet, WeakFieldError> {
    let empty_basis = build_basis(fock, AtomBasisSpec::collective(0))?;
    let p0 = params.with_atoms(0.0);
    solve_steady_amplitudes(&build_effective_hamiltonian(&p0, &empty_basis)?, Ansatz::SixState)
}

/// Least-squares line `t = intercept + slope·(ε/κ)²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsSquaredFit {
    pub intercept: f64,
    pub slope: f64,
    pub max_residual: f64,
}

/// Fits transmissions sampled at several `ε/κ` against `(ε/κ)²`.
pub fn fit_eps_squared(points: &[(f64, f64)]) -> Result<EpsSquaredFit, WeakFieldError> {
    let mut xs: Vec<f64> = points.iter().map(|&(e, _)| e * e).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 3 {
        return Err(WeakFieldError::IllConditionedFit(format!("{} distinct drive values, need 3", xs.len())));
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|&(e, _)| e * e).sum::<f64>() / n;
    let mean_y = points.iter().map(|&(_, t)| t).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|&(e, _)| (e * e - mean_x).powi(2)).sum();
    if !(sxx > 1e-14 * mean_x * mean_x) {
        return Err(WeakFieldError::IllConditionedFit("drive values too close together".into()));
    }
    let sxy: f64 = points.iter().map(|&(e, t)| (e * e - mean_x) * (t - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let max_residual = points
        .iter()
        .map(|&(e, t)| (t - intercept - slope * e * e).abs())
        .fold(0.0, f64::max);
    Ok(EpsSquaredFit { intercept, slope, max_residual })
}

#[derive(Clone, Debug)]
pub struct DriveExtrapolation {
    /// Transmissions extrapolated to `ε → 0`.
    pub record: TransmissionRecord,
    pub driven: EpsSquaredFit,
    pub undriven: EpsSquaredFit,
    pub samples: Vec<TransmissionRecord>,
}

/// Repeats the weak-field solve at each `ε/κ` in `eps_over_kappa` and
/// extrapolates both transmissions linearly in `(ε/κ)²` to zero drive.
pub fn drive_extrapolation(
    params: &SystemParams,
    basis: &Basis,
    eps_over_kappa: &[f64],
    ansatz: Ansatz,
) -> Result<DriveExtrapolation, WeakFieldError> {
    let samples = eps_over_kappa
        .iter()
        .map(|&e| weak_field_record_on(&params.with_drive_ratio(e), basis, ansatz))
        .collect::<Result<Vec<_>, _>>()?;
    extrapolate_records(samples)
}

/// Shared by every method that produces drive-dependent records.
pub fn extrapolate_records(samples: Vec<TransmissionRecord>) -> Result<DriveExtrapolation, WeakFieldError> {
    let pts = |f: fn(&TransmissionRecord) -> f64| -> Vec<(f64, f64)> {
        samples.iter().map(|r| (r.epsilon_over_kappa, f(r))).collect()
    };
    let driven = fit_eps_squared(&pts(|r| r.t_driven))?;
    let undriven = fit_eps_squared(&pts(|r| r.t_undriven))?;
    let first = samples.first().expect("fit succeeded on non-empty samples");
    let record = TransmissionRecord {
        t_driven: driven.intercept,
        t_undriven: undriven.intercept,
        epsilon_over_kappa: 0.0,
        ..first.clone()
    };
    Ok(DriveExtrapolation { record, driven, undriven, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{t_driven, t_undriven};

    fn c64(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn collective(n: usize, fock: FockSpec) -> Basis {
        build_basis(fock, AtomBasisSpec::collective(n)).unwrap()
    }

    #[test]
    fn decay_only_hamiltonian_is_anti_hermitian() {
        let mut p = SystemParams::reference().with_atoms(1.0);
        p.g = 0.0;
        p.epsilon = 0.0;
        let b = collective(1, FockSpec::WEAK_DRIVE);
        let h = build_effective_hamiltonian(&p, &b).unwrap();
        assert_eq!(h.hermitian_part().max_abs(), 0.0);
        let r = p.angular();
        for (i, s) in b.states().iter().enumerate() {
            let expected = -r.kappa * (s.n_a + s.n_b) as f64 - 0.5 * r.gamma_tot * s.atomic.count(Level::Two) as f64;
            assert!((h.operator.get(i, i) - c64(0.0, expected)).norm() < 1e-12);
        }
        assert_eq!(h.operator.nnz(), b.states().iter().filter(|s| s.excitation_number() > 0).count());
    }

    #[test]
    fn single_atom_coupling_elements() {
        let p = SystemParams::reference().with_atoms(1.0);
        let b = collective(1, FockSpec::WEAK_DRIVE);
        let h = build_effective_hamiltonian(&p, &b).unwrap();
        let r = p.angular();
        let e = b.position(0, 0, 1, 0).unwrap();
        let a1 = b.position(1, 0, 0, 0).unwrap();
        assert!((h.operator.get(e, a1).norm() - r.g).abs() < 1e-12);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let x = h.operator.get(b.position(1, 0, 0, 1).unwrap(), e);
        let y = h.operator.get(b.position(0, 1, 0, 1).unwrap(), e);
        // overlap with (|1001⟩ − i|0101⟩)/√2
        let overlap = (x + c64(0.0, 1.0) * y) * s;
        assert!((overlap.norm() - r.big_g).abs() < 1e-12);
        assert!(((x.norm_sqr() + y.norm_sqr()).sqrt() - r.big_g).abs() < 1e-12);
    }

    #[test]
    fn decay_part_is_negative_semidefinite() {
        for n in 0..=3 {
            let p = SystemParams::reference().with_atoms(n as f64);
            let b = collective(n, FockSpec::WEAK_DRIVE);
            let h = build_effective_hamiltonian(&p, &b).unwrap();
            let anti = h.anti_hermitian_part().to_dense();
            let eig = anti.symmetric_eigenvalues();
            assert!(eig.iter().all(|&v| v <= 1e-10), "N={n}");
        }
    }

    #[test]
    fn atom_number_must_match_basis() {
        let p = SystemParams::reference().with_atoms(2.0);
        let b = collective(1, FockSpec::WEAK_DRIVE);
        assert_eq!(
            build_effective_hamiltonian(&p, &b).unwrap_err(),
            WeakFieldError::AtomMismatch { params: 2, basis: 1 }
        );
        let b0 = collective(2, FockSpec::new(0, 1));
        assert!(matches!(build_effective_hamiltonian(&p, &b0), Err(WeakFieldError::TruncationTooSmall(_))));
    }

    #[test]
    fn empty_cavity_amplitude_is_drive_over_kappa() {
        let p = SystemParams::reference().with_drive_ratio(0.01);
        let amps = empty_cavity_amplitudes(&p, FockSpec::WEAK_DRIVE).unwrap();
        assert!((amps.c_1000 - c64(0.01, 0.0)).norm() < 1e-15);
        assert_eq!(amps.c_0010, c64(0.0, 0.0));
        assert_eq!(amps.c_0101, c64(0.0, 0.0));
    }

    #[test]
    fn decoupled_atoms_stay_dark() {
        let mut p = SystemParams::reference().with_atoms(2.0);
        p.g = 0.0;
        let b = collective(2, FockSpec::WEAK_DRIVE);
        let amps = solve_steady_amplitudes(&build_effective_hamiltonian(&p, &b).unwrap(), Ansatz::FirstOrder).unwrap();
        assert_eq!(amps.c_0010.norm(), 0.0);
        assert_eq!(amps.c_1001.norm(), 0.0);
        assert_eq!(amps.c_0101.norm(), 0.0);
    }

    #[test]
    fn single_atom_matches_closed_form() {
        let p = SystemParams::reference().with_atoms(1.0);
        let rec = weak_field_record(&p, FockSpec::WEAK_DRIVE, Ansatz::SixState).unwrap();
        // 1/(1 + 2·C₁/(1+2C̃₁))² with C₁ = 0.1171875, C̃₁ = C₁/2.1²
        assert!((rec.t_driven - 0.669_065_384_590_927_5).abs() < 1e-4 * 0.669);
        assert!((rec.t_driven / t_driven(&p) - 1.0).abs() < 1e-12);
        assert!((rec.t_undriven / t_undriven(&p) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_amplitudes_give_unit_transmission() {
        let p = SystemParams::reference();
        let e = empty_cavity_amplitudes(&p, FockSpec::WEAK_DRIVE).unwrap();
        let rec = transmissions_from_amplitudes(&e, &e).unwrap();
        assert_eq!(rec.t_driven, 1.0);
        assert_eq!(rec.t_undriven, 0.0);
    }

    #[test]
    fn zero_reference_rejected() {
        let p = SystemParams::reference().with_drive_ratio(0.0);
        let e = empty_cavity_amplitudes(&p, FockSpec::WEAK_DRIVE).unwrap();
        assert_eq!(transmissions_from_amplitudes(&e, &e).unwrap_err(), WeakFieldError::ZeroEmptyAmplitude);
        let other = empty_cavity_amplitudes(&p.with_drive_ratio(0.02), FockSpec::WEAK_DRIVE).unwrap();
        assert_eq!(transmissions_from_amplitudes(&e, &other).unwrap_err(), WeakFieldError::ReferenceMismatch);
    }

    #[test]
    fn peak_ratio_at_half_cooperativity() {
        // N that puts C closest to 1/2 at the reference parameters
        let p = SystemParams::reference();
        let co = cooperativities(&p.with_atoms(1.0));
        let n_star = 0.5 / co.c;
        let n = n_star.round();
        let rec = weak_field_record(&p.with_atoms(n), FockSpec::WEAK_DRIVE, Ansatz::SixState).unwrap();
        let beta = crate::analytic::beta_factor(&p);
        assert!((rec.ratio() / (beta * rec.cooperativity) - 1.0).abs() < 1e-10);
        let at_half = beta / 2.0;
        assert!((rec.ratio() - at_half).abs() / at_half < 0.15);
    }

    #[test]
    fn undriven_peak_brackets_analytic_peak() {
        let p = SystemParams::reference();
        let tu: Vec<f64> = (1..=36)
            .map(|n| weak_field_record(&p.with_atoms(n as f64), FockSpec::WEAK_DRIVE, Ansatz::SixState).unwrap().t_undriven)
            .collect();
        let argmax = tu.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0 + 1;
        let co = cooperativities(&p.with_atoms(1.0));
        let n_star = 0.5 / co.c;
        assert!(n_star > 4.0 && n_star < 5.0);
        assert!(argmax == 4 || argmax == 5);
        assert!((argmax as f64 - n_star).abs() < 1.0);
    }

    #[test]
    fn no_first_order_source_for_bare_undriven_photon() {
        for n in 1..=5 {
            let p = SystemParams::reference().with_atoms(n as f64);
            for ansatz in [Ansatz::SixState, Ansatz::FirstOrder] {
                let amps = solve_steady_amplitudes(&build_effective_hamiltonian(&p, &collective(n, FockSpec::WEAK_DRIVE)).unwrap(), ansatz).unwrap();
                assert!(amps.c_0100.norm() <= 1e-12 * amps.c_0101.norm());
            }
        }
    }

    #[test]
    fn amplitudes_linear_in_drive() {
        let p = SystemParams::reference().with_atoms(3.0);
        let b = collective(3, FockSpec::WEAK_DRIVE);
        let x = solve_steady_amplitudes(&build_effective_hamiltonian(&p.with_drive_ratio(0.01), &b).unwrap(), Ansatz::FirstOrder).unwrap();
        let y = solve_steady_amplitudes(&build_effective_hamiltonian(&p.with_drive_ratio(0.03), &b).unwrap(), Ansatz::FirstOrder).unwrap();
        for (u, v) in x.full.amplitudes.iter().zip(&y.full.amplitudes).skip(1) {
            assert!((u * 3.0 - v).norm() <= 1e-12 * v.norm().max(1e-300));
        }
    }

    #[test]
    fn six_state_and_full_block_agree_up_to_one_atom() {
        for n in 0..=1 {
            let p = SystemParams::reference().with_atoms(n as f64);
            let six = weak_field_record(&p, FockSpec::WEAK_DRIVE, Ansatz::SixState).unwrap();
            let full = weak_field_record(&p, FockSpec::WEAK_DRIVE, Ansatz::FirstOrder).unwrap();
            assert!((six.t_driven / full.t_driven - 1.0).abs() < 1e-10);
            if n > 0 {
                assert!((six.t_undriven / full.t_undriven - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn full_block_includes_reabsorption_for_two_atoms() {
        let p = SystemParams::reference().with_atoms(2.0);
        let b = collective(2, FockSpec::WEAK_DRIVE);
        let amps = solve_steady_amplitudes(&build_effective_hamiltonian(&p, &b).unwrap(), Ansatz::FirstOrder).unwrap();
        let k = b.position(0, 0, 1, 1).unwrap();
        assert!(amps.full.amplitudes[k].norm() > 0.0);
        let six = weak_field_record(&p, FockSpec::WEAK_DRIVE, Ansatz::SixState).unwrap();
        let full = weak_field_record(&p, FockSpec::WEAK_DRIVE, Ansatz::FirstOrder).unwrap();
        let rel = (six.t_driven - full.t_driven).abs() / full.t_driven;
        assert!(rel > 1e-3 && rel < 1e-2, "{rel}");
    }

    #[test]
    fn tensor_and_collective_first_order_agree() {
        for n in 1..=3 {
            let p = SystemParams::reference().with_atoms(n as f64);
            let coll = weak_field_record(&p, FockSpec::WEAK_DRIVE, Ansatz::FirstOrder).unwrap();
            let tb = build_basis(FockSpec::WEAK_DRIVE, AtomBasisSpec::tensor_product(n)).unwrap();
            let tens = weak_field_record_on(&p, &tb, Ansatz::FirstOrder).unwrap();
            assert!((coll.t_driven / tens.t_driven - 1.0).abs() < 1e-12);
            assert!((coll.t_undriven / tens.t_undriven - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn six_state_requires_collective() {
        let p = SystemParams::reference().with_atoms(1.0);
        let tb = build_basis(FockSpec::WEAK_DRIVE, AtomBasisSpec::tensor_product(1)).unwrap();
        let h = build_effective_hamiltonian(&p, &tb).unwrap();
        assert_eq!(solve_steady_amplitudes(&h, Ansatz::SixState).unwrap_err(), WeakFieldError::AnsatzNeedsCollective);
    }

    #[test]
    fn extrapolation_of_linear_solve() {
        let p = SystemParams::reference().with_atoms(2.0);
        let b = collective(2, FockSpec::WEAK_DRIVE);
        let ex = drive_extrapolation(&p, &b, &[0.01, 0.02, 0.04], Ansatz::SixState).unwrap();
        assert!((ex.record.t_driven - ex.samples[0].t_driven).abs() < 1e-6);
        assert!((ex.record.t_undriven - ex.samples[0].t_undriven).abs() < 1e-6);
        assert!(ex.driven.slope.abs() < 1e-8);

        let b0 = collective(0, FockSpec::WEAK_DRIVE);
        let ex0 = drive_extrapolation(&p.with_atoms(0.0), &b0, &[0.01, 0.02, 0.04], Ansatz::SixState).unwrap();
        assert!((ex0.record.t_driven - 1.0).abs() < 1e-12);
    }

    #[test]
    fn extrapolation_needs_three_drives() {
        let p = SystemParams::reference().with_atoms(1.0);
        let b = collective(1, FockSpec::WEAK_DRIVE);
        let err = drive_extrapolation(&p, &b, &[0.01, 0.02, 0.02], Ansatz::SixState).unwrap_err();
        assert!(matches!(err, WeakFieldError::IllConditionedFit(_)));
    }

    #[test]
    fn fit_recovers_line() {
        let pts: Vec<(f64, f64)> = [0.1, 0.2, 0.3, 0.5].iter().map(|&e| (e, 2.0 - 3.0 * e * e)).collect();
        let f = fit_eps_squared(&pts).unwrap();
        assert!((f.intercept - 2.0).abs() < 1e-12);
        assert!((f.slope + 3.0).abs() < 1e-12);
    }
}
