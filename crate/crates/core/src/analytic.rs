//! Closed-form weak-drive model: cooperativities, the driven and undriven
//! transmissions, the beta factor and the quantities derived from them.
//!
//! Rates are stored as `frequency / 2π` in MHz. Every closed-form result is a
//! ratio of rates, so the convention cancels; the dynamical modules convert to
//! angular units through [`SystemParams::angular`].

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fraction of an isotropic emitter's light subtended by the cavity mode.
pub const SOLID_ANGLE_FRACTION: f64 = 1.3e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("{name} must be positive, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("{name} must be non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("{name} is not finite")]
    NotFinite { name: &'static str },
    #[error("solvers need an integer atom number, got {0}")]
    NonIntegerAtoms(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Driven-mode coupling `g/2π` (MHz).
    pub g: f64,
    /// Cavity field decay `κ/2π` (MHz).
    pub kappa: f64,
    /// Total excited-state decay `(γ+Γ)/2π` (MHz).
    pub gamma_tot: f64,
    /// Coupling ratio: `G = g/η`, `Γ = γ/η`.
    pub eta: f64,
    /// Atom number. Fractional values are only meaningful for the closed forms.
    pub n_atoms: f64,
    /// Drive amplitude `ε/2π` in the same units as the rates.
    pub epsilon: f64,
}

/// Rates in angular units (rad/µs) as used by the dynamical solvers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngularRates {
    pub g: f64,
    pub big_g: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub big_gamma: f64,
    pub gamma_tot: f64,
    pub epsilon: f64,
}

impl AngularRates {
    /// Fastest coherent or dissipative rate, used to size integrator steps.
    pub fn fastest(&self) -> f64 {
        [self.g, self.big_g, self.kappa, self.gamma_tot, self.epsilon]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

impl SystemParams {
    /// `(g, κ, γ_tot/2)/2π = (1.5, 3.2, 3.0)` MHz with the fitted `η = 2.1`,
    /// no atoms and `ε/κ = 0.01`.
    pub fn reference() -> Self {
        Self { g: 1.5, kappa: 3.2, gamma_tot: 6.0, eta: 2.1, n_atoms: 0.0, epsilon: 0.032 }
    }

    pub fn with_atoms(mut self, n_atoms: f64) -> Self {
        self.n_atoms = n_atoms;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_drive_ratio(mut self, epsilon_over_kappa: f64) -> Self {
        self.epsilon = epsilon_over_kappa * self.kappa;
        self
    }

    pub fn epsilon_over_kappa(&self) -> f64 {
        self.epsilon / self.kappa
    }

    /// `G = g/η`.
    pub fn big_g(&self) -> f64 {
        self.g / self.eta
    }

    /// `γ`, the decay back to `|1⟩`: `γ = γ_tot·η/(1+η)`.
    pub fn gamma(&self) -> f64 {
        self.gamma_tot * self.eta / (1.0 + self.eta)
    }

    /// `Γ = γ/η`, the free-space decay into `|3⟩`.
    pub fn big_gamma(&self) -> f64 {
        self.gamma() / self.eta
    }

    pub fn angular(&self) -> AngularRates {
        AngularRates {
            g: TAU * self.g,
            big_g: TAU * self.big_g(),
            kappa: TAU * self.kappa,
            gamma: TAU * self.gamma(),
            big_gamma: TAU * self.big_gamma(),
            gamma_tot: TAU * self.gamma_tot,
            epsilon: TAU * self.epsilon,
        }
    }

    /// Rescales every rate (and the drive) by `lambda`.
    pub fn rescaled(&self, lambda: f64) -> Self {
        Self {
            g: self.g * lambda,
            kappa: self.kappa * lambda,
            gamma_tot: self.gamma_tot * lambda,
            epsilon: self.epsilon * lambda,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        for (name, value) in [("g", self.g), ("kappa", self.kappa), ("gamma_tot", self.gamma_tot), ("eta", self.eta)] {
            if !value.is_finite() {
                return Err(ParamError::NotFinite { name });
            }
            if value <= 0.0 {
                return Err(ParamError::NotPositive { name, value });
            }
        }
        self.check_non_negative()
    }

    /// Weaker check used by the operator builders, which also accept the
    /// decoupled and closed-system limits (`g = 0`, `κ = 0`, `γ_tot = 0`).
    pub fn check_non_negative(&self) -> Result<(), ParamError> {
        for (name, value) in [
            ("g", self.g),
            ("kappa", self.kappa),
            ("gamma_tot", self.gamma_tot),
            ("n_atoms", self.n_atoms),
            ("epsilon", self.epsilon),
        ] {
            if !value.is_finite() {
                return Err(ParamError::NotFinite { name });
            }
            if value < 0.0 {
                return Err(ParamError::Negative { name, value });
            }
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(ParamError::NotPositive { name: "eta", value: self.eta });
        }
        Ok(())
    }

    pub fn atom_count(&self) -> Result<usize, ParamError> {
        if self.n_atoms.fract() != 0.0 || self.n_atoms < 0.0 || !self.n_atoms.is_finite() {
            return Err(ParamError::NonIntegerAtoms(self.n_atoms));
        }
        Ok(self.n_atoms as usize)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Cooperativities {
    /// `C₁ = g²/κγ_tot`.
    pub c1: f64,
    /// `C̃₁ = G²/κγ_tot = C₁/η²`.
    pub c1_tilde: f64,
    /// Collective driven-mode cooperativity `C = C₁N/(1+2C̃₁)`.
    pub c: f64,
}

pub fn cooperativities(params: &SystemParams) -> Cooperativities {
    let c1 = params.g * params.g / (params.kappa * params.gamma_tot);
    let big_g = params.big_g();
    let c1_tilde = big_g * big_g / (params.kappa * params.gamma_tot);
    let c = c1 * params.n_atoms / (1.0 + 2.0 * c1_tilde);
    Cooperativities { c1, c1_tilde, c }
}

/// Share of the excited-state decay that goes into the undriven mode:
/// `β = 2C̃₁/(1+2C̃₁)`.
pub fn beta_from_c1_tilde(c1_tilde: f64) -> f64 {
    2.0 * c1_tilde / (1.0 + 2.0 * c1_tilde)
}

pub fn beta_factor(params: &SystemParams) -> f64 {
    beta_from_c1_tilde(cooperativities(params).c1_tilde)
}

/// `T_d = 1/(1+2C)²`.
pub fn driven_at(c: f64) -> f64 {
    1.0 / ((1.0 + 2.0 * c) * (1.0 + 2.0 * c))
}

/// `T_u = β·C/(1+2C)²`.
pub fn undriven_at(c: f64, beta: f64) -> f64 {
    beta * c / ((1.0 + 2.0 * c) * (1.0 + 2.0 * c))
}

/// `dT_u/dC = β(1−2C)/(1+2C)³`.
pub fn undriven_slope(c: f64, beta: f64) -> f64 {
    beta * (1.0 - 2.0 * c) / (1.0 + 2.0 * c).powi(3)
}

pub fn t_driven(params: &SystemParams) -> f64 {
    driven_at(cooperativities(params).c)
}

pub fn t_undriven(params: &SystemParams) -> f64 {
    let co = cooperativities(params);
    undriven_at(co.c, beta_from_c1_tilde(co.c1_tilde))
}

/// Cooperativity at which the undriven transmission peaks.
pub fn peak_cooperativity() -> f64 {
    0.5
}

/// Argmax of `T_u` over the grid `0, step, 2·step, …, c_max`.
pub fn grid_peak_cooperativity(beta: f64, c_max: f64, step: f64) -> f64 {
    let n = (c_max / step).round() as usize;
    let mut best = (0.0, f64::NEG_INFINITY);
    for k in 0..=n {
        let c = k as f64 * step;
        let t = undriven_at(c, beta);
        if t > best.1 {
            best = (c, t);
        }
    }
    best.0
}

/// `T_u/T_d` at the peak cooperativity.
pub fn peak_ratio(params: &SystemParams) -> f64 {
    let c = peak_cooperativity();
    undriven_at(c, beta_factor(params)) / driven_at(c)
}

/// Enhancement of emission into the undriven mode over the bare solid-angle
/// fraction. `solid_angle_fraction` must be positive.
pub fn enhancement_factor(params: &SystemParams, solid_angle_fraction: f64) -> f64 {
    enhancement_from_ratio(peak_ratio(params), solid_angle_fraction)
}

pub fn enhancement_from_ratio(ratio: f64, solid_angle_fraction: f64) -> f64 {
    assert!(solid_angle_fraction > 0.0, "solid-angle fraction must be positive");
    ratio / solid_angle_fraction
}

/// `η = √(8/3)`, the Clebsch–Gordan optimum for maximally coupled atoms.
pub fn eta_optimal() -> f64 {
    (8.0f64 / 3.0).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Analytic,
    #[serde(rename = "weakfield")]
    WeakField,
    MasterEq,
    Trajectory,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Analytic, Method::WeakField, Method::MasterEq, Method::Trajectory];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Analytic => "analytic",
            Method::WeakField => "weakfield",
            Method::MasterEq => "master_eq",
            Method::Trajectory => "trajectory",
        }
    }

    /// Whether the method needs the tensor-product oracle (N ≤ 3).
    pub fn is_oracle(&self) -> bool {
        matches!(self, Method::MasterEq | Method::Trajectory)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method '{s}'"))
    }
}

/// One transmission result, normalised to the empty driven cavity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransmissionRecord {
    pub n_atoms: f64,
    pub cooperativity: f64,
    pub t_driven: f64,
    pub t_undriven: f64,
    pub method: Method,
    pub epsilon_over_kappa: f64,
    /// Standard error of `t_undriven` (trajectory runs only).
    pub uncertainty: Option<f64>,
    pub seed: Option<u64>,
}

impl TransmissionRecord {
    pub fn ratio(&self) -> f64 {
        self.t_undriven / self.t_driven
    }
}

pub fn analytic_record(params: &SystemParams) -> TransmissionRecord {
    TransmissionRecord {
        n_atoms: params.n_atoms,
        cooperativity: cooperativities(params).c,
        t_driven: t_driven(params),
        t_undriven: t_undriven(params),
        method: Method::Analytic,
        epsilon_over_kappa: params.epsilon_over_kappa(),
        uncertainty: None,
        seed: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_atom_cooperativities() {
        let co = cooperativities(&SystemParams::reference());
        assert!((co.c1 - 0.1172).abs() < 1e-4);
        assert!((co.c1_tilde - 0.0266).abs() < 1e-4);
        assert_eq!(co.c, 0.0);
        assert!((co.c1_tilde - co.c1 / (2.1 * 2.1)).abs() < 1e-15);
    }

    #[test]
    fn empty_cavity() {
        let p = SystemParams::reference();
        assert_eq!(t_driven(&p), 1.0);
        assert_eq!(t_undriven(&p), 0.0);
    }

    #[test]
    fn driven_at_half_cooperativity() {
        assert!((driven_at(0.5) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn undriven_with_rounded_c1_tilde() {
        let beta = beta_from_c1_tilde(0.026);
        assert!((beta - 0.04943).abs() < 1e-5);
        assert!((undriven_at(0.5, beta) - 0.00618).abs() < 1e-5);
        let ratio = undriven_at(0.5, beta) / driven_at(0.5);
        assert!((ratio - 0.0247).abs() < 1e-4);
        assert!((enhancement_from_ratio(ratio, SOLID_ANGLE_FRACTION) - 19.0).abs() < 0.05);
    }

    #[test]
    fn beta_limits() {
        assert_eq!(beta_from_c1_tilde(0.0), 0.0);
        assert!((beta_from_c1_tilde(1e12) - 1.0).abs() < 1e-11);
    }

    #[test]
    fn peak_location() {
        assert_eq!(peak_cooperativity(), 0.5);
        assert_eq!(undriven_slope(0.5, 0.3), 0.0);
        let beta = beta_factor(&SystemParams::reference());
        let c = grid_peak_cooperativity(beta, 3.0, 1e-4);
        assert!((c - 0.5).abs() <= 1e-4);
        assert!(undriven_at(0.4, beta) < undriven_at(0.5, beta));
        assert!(undriven_at(0.6, beta) < undriven_at(0.5, beta));
    }

    #[test]
    fn enhancement_examples() {
        assert!((enhancement_from_ratio(0.024, 1.3e-3) - 18.46).abs() < 0.01);
        assert!((enhancement_from_ratio(0.02, 0.02) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eta_optimum() {
        assert!((eta_optimal() - 1.6330).abs() < 1e-4);
        assert!(SystemParams::reference().eta >= eta_optimal());
        let c1 = cooperativities(&SystemParams::reference()).c1;
        let p = SystemParams::reference().with_eta(eta_optimal());
        assert!((cooperativities(&p).c1_tilde - 0.0439).abs() < 1e-4);
        assert!((cooperativities(&p).c1_tilde - c1 / eta_optimal().powi(2)).abs() < 1e-15);
    }

    #[test]
    fn derived_rates() {
        let p = SystemParams::reference();
        assert!((p.gamma() + p.big_gamma() - p.gamma_tot).abs() < 1e-14);
        assert!((p.big_gamma() * p.eta - p.gamma()).abs() < 1e-14);
        assert!((p.big_g() * p.eta - p.g).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        assert!(SystemParams::reference().validate().is_ok());
        assert!(matches!(
            SystemParams::reference().with_eta(0.0).validate(),
            Err(ParamError::NotPositive { name: "eta", .. })
        ));
        let mut p = SystemParams::reference();
        p.kappa = -1.0;
        assert!(p.validate().is_err());
        assert!(SystemParams::reference().with_atoms(2.5).atom_count().is_err());
        assert_eq!(SystemParams::reference().with_atoms(7.0).atom_count(), Ok(7));
    }

    #[test]
    fn monotone_driven() {
        let p = SystemParams::reference();
        let mut last = 2.0;
        for n in 0..=36 {
            let t = t_driven(&p.with_atoms(n as f64));
            assert!(t < last);
            last = t;
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>(), Ok(m));
        }
        assert!("weak".parse::<Method>().is_err());
    }

    fn params_strategy() -> impl Strategy<Value = SystemParams> {
        (0.01f64..20.0, 0.01f64..20.0, 0.01f64..20.0, 0.1f64..10.0, 0.0f64..100.0).prop_map(
            |(g, kappa, gamma_tot, eta, n)| SystemParams { g, kappa, gamma_tot, eta, n_atoms: n, epsilon: 0.01 * kappa },
        )
    }

    proptest! {
        #[test]
        fn ratio_is_beta_times_c(p in params_strategy()) {
            prop_assume!(p.n_atoms > 0.0);
            let co = cooperativities(&p);
            let lhs = t_undriven(&p) / t_driven(&p);
            let rhs = beta_factor(&p) * co.c;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs());
        }

        #[test]
        fn invariant_under_rate_rescaling(p in params_strategy(), lambda in 0.01f64..100.0) {
            let q = p.rescaled(lambda);
            let (a, b) = (cooperativities(&p), cooperativities(&q));
            prop_assert!((a.c - b.c).abs() <= 1e-12 * a.c.max(1e-300));
            prop_assert!((t_driven(&p) - t_driven(&q)).abs() <= 1e-12);
            prop_assert!((t_undriven(&p) - t_undriven(&q)).abs() <= 1e-12 * t_undriven(&p).max(1e-300));
        }

        #[test]
        fn single_interior_maximum(c1_tilde in 1e-4f64..10.0) {
            let beta = beta_from_c1_tilde(c1_tilde);
            let h = 1e-3;
            let mut sign_changes = Vec::new();
            let mut prev = undriven_at(h, beta) - undriven_at(0.0, beta);
            for k in 1..3000 {
                let c = k as f64 * h;
                let d = undriven_at(c + h, beta) - undriven_at(c, beta);
                if prev > 0.0 && d <= 0.0 {
                    sign_changes.push(c);
                }
                prop_assert!(!(prev <= 0.0 && d > 0.0));
                prev = d;
            }
            prop_assert_eq!(sign_changes.len(), 1);
            prop_assert!((sign_changes[0] - 0.5).abs() <= h);
        }
    }
}
