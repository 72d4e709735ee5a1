use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{Channel, LindbladModel, OracleError};
use crate::hilbert::{annihilation_a, annihilation_b, SparseOperator, C64};

/// Largest tolerated no-jump probability loss in a single step.
const MAX_STEP_JUMP_PROBABILITY: f64 = 0.1;
const MAX_NORM_GROWTH: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum ChannelKind {
    CavityA,
    CavityB,
    DecayToOne,
    DecayToThree,
}

impl ChannelKind {
    pub const ALL: [ChannelKind; 4] =
        [ChannelKind::CavityA, ChannelKind::CavityB, ChannelKind::DecayToOne, ChannelKind::DecayToThree];

    fn of(channel: Channel) -> Self {
        match channel {
            Channel::CavityA => ChannelKind::CavityA,
            Channel::CavityB => ChannelKind::CavityB,
            Channel::DecayToOne { .. } => ChannelKind::DecayToOne,
            Channel::DecayToThree { .. } => ChannelKind::DecayToThree,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrajectoryConfig {
    pub n_trajectories: usize,
    pub seed: u64,
    /// Discarded lead-in (µs).
    pub t_equilibrate: f64,
    /// End of the sampling window (µs).
    pub t_final: f64,
    /// RK4 step (µs).
    pub dt: f64,
}

impl TrajectoryConfig {
    /// Equilibrates for `20/κ` and samples for `200/κ` with a step of `0.01`
    /// over the fastest rate. Spontaneous emission and shelving are rare at
    /// weak drive; the long window lets each ensemble see them often enough
    /// for the between-trajectory standard error to be trustworthy.
    pub fn new(model: &LindbladModel, n_trajectories: usize, seed: u64) -> Self {
        let r = model.params.angular();
        Self {
            n_trajectories,
            seed,
            t_equilibrate: 20.0 / r.kappa,
            t_final: 220.0 / r.kappa,
            dt: 0.01 / r.fastest(),
        }
    }

    fn steps(&self) -> (usize, usize) {
        ((self.t_equilibrate / self.dt).round() as usize, (self.t_final / self.dt).round() as usize)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryStats {
    pub n_trajectories: usize,
    pub seed: u64,
    /// Ensemble mean of the window-averaged `⟨a†a⟩`.
    pub mean_photons_a: f64,
    pub mean_photons_b: f64,
    pub stderr_photons_a: f64,
    pub stderr_photons_b: f64,
    /// Jumps recorded inside the sampling window, indexed like [`ChannelKind::ALL`].
    pub jump_counts: [u64; 4],
    /// Mean expected number of jumps per trajectory inside the window.
    pub expected_jumps: [f64; 4],
    /// Ratio of undriven to driven leakage intensity and its delta-method error.
    pub leakage_ratio: f64,
    pub leakage_ratio_stderr: f64,
    /// Largest relative growth of `‖ψ‖²` over one step; positive values flag
    /// integration error.
    pub max_norm_growth: f64,
}

impl TrajectoryStats {
    pub fn jumps(&self, kind: ChannelKind) -> u64 {
        self.jump_counts[kind.index()]
    }

    pub fn expected(&self, kind: ChannelKind) -> f64 {
        self.expected_jumps[kind.index()]
    }
}

struct Outcome {
    photons_a: f64,
    photons_b: f64,
    jumps: [u64; 4],
    intensity: [f64; 4],
    max_growth: f64,
}

struct Workspace<'a> {
    heff: &'a SparseOperator,
    k: [Vec<C64>; 4],
    tmp: Vec<C64>,
}

impl<'a> Workspace<'a> {
    fn new(heff: &'a SparseOperator) -> Self {
        let d = heff.dim();
        let z = || vec![C64::new(0.0, 0.0); d];
        Self { heff, k: [z(), z(), z(), z()], tmp: z() }
    }

    /// One RK4 step of `dψ/dt = −i H_eff ψ`.
    fn step(&mut self, psi: &mut [C64], dt: f64) {
        let minus_i = C64::new(0.0, -1.0);
        let frac = [0.0, 0.5, 0.5, 1.0];
        for s in 0..4 {
            if s == 0 {
                self.tmp.copy_from_slice(psi);
            } else {
                let (prev, h) = (&self.k[s - 1], frac[s] * dt);
                for ((t, p), k) in self.tmp.iter_mut().zip(psi.iter()).zip(prev) {
                    *t = p + k * h;
                }
            }
            self.heff.apply_into(&self.tmp, &mut self.k[s]);
            self.k[s].iter_mut().for_each(|x| *x *= minus_i);
        }
        let [k1, k2, k3, k4] = &self.k;
        for (i, p) in psi.iter_mut().enumerate() {
            *p += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (dt / 6.0);
        }
    }
}

fn norm_sqr(psi: &[C64]) -> f64 {
    psi.iter().map(|z| z.norm_sqr()).sum()
}

/// `⟨ψ|M|ψ⟩` for a Hermitian `M`, stored as its diagonal when it has no
/// off-diagonal entries.
enum Observable {
    Diagonal(Vec<f64>),
    General(SparseOperator),
}

impl Observable {
    fn new(m: SparseOperator) -> Self {
        if m.triplets().all(|(r, c, _)| r == c) {
            let mut d = vec![0.0; m.dim()];
            for (r, _, v) in m.triplets() {
                d[r] = v.re;
            }
            Observable::Diagonal(d)
        } else {
            Observable::General(m)
        }
    }

    fn expect(&self, psi: &[C64], scratch: &mut [C64]) -> f64 {
        match self {
            Observable::Diagonal(d) => d.iter().zip(psi).map(|(w, z)| w * z.norm_sqr()).sum(),
            Observable::General(m) => {
                m.apply_into(psi, scratch);
                psi.iter().zip(scratch.iter()).map(|(p, q)| (p.conj() * q).re).sum()
            }
        }
    }
}

struct Observables {
    photons_a: Observable,
    photons_b: Observable,
    /// `L†L` per jump operator with its channel kind.
    intensity: Vec<(usize, Observable)>,
}

impl Observables {
    fn new(model: &LindbladModel) -> Self {
        let number = |l: SparseOperator| Observable::new(l.adjoint().matmul(&l));
        Self {
            photons_a: number(annihilation_a(model.basis())),
            photons_b: number(annihilation_b(model.basis())),
            intensity: model
                .jumps
                .iter()
                .map(|j| (ChannelKind::of(j.channel).index(), number(j.operator.clone())))
                .collect(),
        }
    }
}

fn run_one(model: &LindbladModel, config: &TrajectoryConfig, index: usize, obs: &Observables) -> Result<Outcome, OracleError> {
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let d = model.dim();
    let mut ws = Workspace::new(model.effective_hamiltonian());
    let mut psi = vec![C64::new(0.0, 0.0); d];
    psi[0] = C64::new(1.0, 0.0);
    let mut jumped = vec![C64::new(0.0, 0.0); d];
    let mut weights = vec![0.0; model.jumps.len()];
    let mut threshold: f64 = rng.gen();
    let (first, last) = config.steps();
    let mut out = Outcome { photons_a: 0.0, photons_b: 0.0, jumps: [0; 4], intensity: [0.0; 4], max_growth: 0.0 };
    let mut scratch = vec![C64::new(0.0, 0.0); d];

    for step in 0..last {
        let before = norm_sqr(&psi);
        ws.step(&mut psi, config.dt);
        let after = norm_sqr(&psi);
        out.max_growth = out.max_growth.max(after / before - 1.0);
        let loss = 1.0 - after / before;
        // unstable RK4 shows up as norm growth rather than loss
        if !(loss <= MAX_STEP_JUMP_PROBABILITY && loss > -MAX_NORM_GROWTH) {
            return Err(OracleError::StepTooCoarse {
                dt: config.dt,
                probability: loss,
                time: (step + 1) as f64 * config.dt,
            });
        }
        let sampling = step >= first;
        let mut norm = after;
        if after < threshold {
            for (w, jump) in weights.iter_mut().zip(&model.jumps) {
                jump.operator.apply_into(&psi, &mut scratch);
                *w = norm_sqr(&scratch);
            }
            let total: f64 = weights.iter().sum();
            let mut pick = rng.gen::<f64>() * total;
            let mut chosen = weights.len() - 1;
            for (k, w) in weights.iter().enumerate() {
                if pick < *w {
                    chosen = k;
                    break;
                }
                pick -= w;
            }
            let jump = &model.jumps[chosen];
            jump.operator.apply_into(&psi, &mut jumped);
            let scale = 1.0 / weights[chosen].sqrt();
            for (p, j) in psi.iter_mut().zip(&jumped) {
                *p = j * scale;
            }
            norm = 1.0;
            threshold = rng.gen();
            if sampling {
                out.jumps[ChannelKind::of(jump.channel).index()] += 1;
            }
        }
        if sampling {
            out.photons_a += obs.photons_a.expect(&psi, &mut scratch) / norm;
            out.photons_b += obs.photons_b.expect(&psi, &mut scratch) / norm;
            for (kind, op) in &obs.intensity {
                out.intensity[*kind] += op.expect(&psi, &mut scratch) / norm * config.dt;
            }
        }
    }
    let samples = (last - first) as f64;
    out.photons_a /= samples;
    out.photons_b /= samples;
    Ok(out)
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo wavefunction ensemble from the prepared state.
///
/// Trajectory `k` draws from ChaCha20 seeded with `config.seed` on stream `k`,
/// and results are reduced in trajectory order, so the output does not depend
/// on the number of worker threads.
pub fn run_trajectories(model: &LindbladModel, config: &TrajectoryConfig) -> Result<TrajectoryStats, OracleError> {
    if config.n_trajectories < 2 {
        return Err(OracleError::TooFewTrajectories(config.n_trajectories));
    }
    let (first, last) = config.steps();
    if !(config.dt > 0.0) || last <= first {
        return Err(OracleError::InvalidWindow(format!(
            "equilibrate {} to {} with step {}",
            config.t_equilibrate, config.t_final, config.dt
        )));
    }
    let obs = Observables::new(model);
    let outcomes = (0..config.n_trajectories)
        .into_par_iter()
        .map(|k| run_one(model, config, k, &obs))
        .collect::<Result<Vec<_>, _>>()?;

    let xa: Vec<f64> = outcomes.iter().map(|o| o.photons_a).collect();
    let xb: Vec<f64> = outcomes.iter().map(|o| o.photons_b).collect();
    let (mean_a, se_a) = mean_and_stderr(&xa);
    let (mean_b, se_b) = mean_and_stderr(&xb);

    let n = outcomes.len() as f64;
    let ratio = mean_b / mean_a;
    let cov = xa.iter().zip(&xb).map(|(a, b)| (a - mean_a) * (b - mean_b)).sum::<f64>() / (n - 1.0);
    let var_a = se_a * se_a * n;
    let var_b = se_b * se_b * n;
    let ratio_var = (var_b - 2.0 * ratio * cov + ratio * ratio * var_a) / (mean_a * mean_a * n);

    let mut jump_counts = [0u64; 4];
    let mut expected_jumps = [0.0; 4];
    for o in &outcomes {
        for k in 0..4 {
            jump_counts[k] += o.jumps[k];
            expected_jumps[k] += o.intensity[k] / n;
        }
    }
    Ok(TrajectoryStats {
        n_trajectories: config.n_trajectories,
        seed: config.seed,
        mean_photons_a: mean_a,
        mean_photons_b: mean_b,
        stderr_photons_a: se_a,
        stderr_photons_b: se_b,
        jump_counts,
        expected_jumps,
        leakage_ratio: ratio,
        leakage_ratio_stderr: ratio_var.max(0.0).sqrt(),
        max_norm_growth: outcomes.iter().map(|o| o.max_growth).fold(f64::NEG_INFINITY, f64::max),
    })
}
