//! TOML sweep configuration.
//!
//! ```toml
//! [params]
//! g = 1.5                    # MHz/2π
//! kappa = 3.2
//! gamma_tot = 6.0
//! eta = 2.1
//! epsilon_over_kappa = 0.01  # default
//! n_atoms = 1                # used when the sweep variable is not n_atoms
//!
//! [sweep]
//! n_atoms_list = [0, 1, 2]   # shorthand for variable = "n_atoms", values = [...]
//! methods = ["analytic", "weakfield"]
//! ansatz = "six_state"       # or "first_order"
//! seed = 0
//! output = "out/sweep.csv"
//!
//! [oracle]
//! fock = [2, 2]
//! n_trajectories = 2000
//! ```
//!
//! Unknown keys and duplicate keys are rejected by the parser.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{Method, SystemParams};
use crate::hilbert::FockSpec;
use crate::weakfield::Ansatz;

/// Largest atom number a sweep may request.
pub const MAX_SWEEP_ATOMS: usize = 10_000;
/// Largest atom number the tensor-product oracle accepts.
pub const MAX_ORACLE_ATOMS: usize = 3;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("missing required key {0}")]
    Missing(&'static str),
    #[error("{key} = {value}: {reason}")]
    Range { key: String, value: String, reason: &'static str },
    #[error("{0}")]
    Invalid(String),
}

fn range(key: &str, value: impl ToString, reason: &'static str) -> ConfigError {
    ConfigError::Range { key: key.to_string(), value: value.to_string(), reason }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    NAtoms,
    /// Drive strength as `ε/κ`.
    Epsilon,
    Eta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub params: ParamsSection,
    pub sweep: SweepSection,
    #[serde(default)]
    pub oracle: OracleSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub g: f64,
    pub kappa: f64,
    pub gamma_tot: f64,
    pub eta: f64,
    #[serde(default = "default_drive")]
    pub epsilon_over_kappa: f64,
    #[serde(default = "default_atoms")]
    pub n_atoms: u64,
}

fn default_drive() -> f64 {
    0.01
}

fn default_atoms() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variable: Option<SweepVariable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_atoms_list: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_ansatz")]
    pub ansatz: Ansatz,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Analytic, Method::WeakField]
}

fn default_ansatz() -> Ansatz {
    Ansatz::SixState
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default = "default_fock")]
    pub fock: [usize; 2],
    #[serde(default = "default_trajectories")]
    pub n_trajectories: usize,
}

fn default_fock() -> [usize; 2] {
    [2, 2]
}

fn default_trajectories() -> usize {
    2000
}

impl Default for OracleSection {
    fn default() -> Self {
        Self { fock: default_fock(), n_trajectories: default_trajectories() }
    }
}

/// A validated sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    /// Base parameters; the swept field is overwritten per point.
    pub params: SystemParams,
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    /// Sorted, without duplicates.
    pub methods: Vec<Method>,
    pub ansatz: Ansatz,
    pub fock: FockSpec,
    pub n_trajectories: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl SweepSpec {
    /// `N = 0..=36` at the reference parameters with the analytic and weak-field methods.
    pub fn reference_default() -> Self {
        let spec = Self {
            params: SystemParams::reference().with_drive_ratio(default_drive()),
            variable: SweepVariable::NAtoms,
            values: (0..=36).map(f64::from).collect(),
            methods: default_methods(),
            ansatz: default_ansatz(),
            fock: FockSpec::WEAK_DRIVE,
            n_trajectories: default_trajectories(),
            seed: 0,
            output: None,
        };
        spec.validate().expect("default sweep is valid");
        spec
    }

    pub fn from_config(cfg: &ConfigFile) -> Result<Self, ConfigError> {
        let p = &cfg.params;
        for (key, v) in [("params.g", p.g), ("params.kappa", p.kappa), ("params.gamma_tot", p.gamma_tot), ("params.eta", p.eta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(range(key, v, "must be positive and finite"));
            }
        }
        if !(p.epsilon_over_kappa.is_finite() && p.epsilon_over_kappa > 0.0) {
            return Err(range("params.epsilon_over_kappa", p.epsilon_over_kappa, "must be positive and finite"));
        }
        let s = &cfg.sweep;
        let (variable, values) = match (s.variable, &s.n_atoms_list, &s.values) {
            (_, Some(_), Some(_)) => {
                return Err(ConfigError::Invalid("give either sweep.n_atoms_list or sweep.values, not both".into()))
            }
            (None | Some(SweepVariable::NAtoms), Some(list), None) => {
                (SweepVariable::NAtoms, list.iter().map(|&n| n as f64).collect())
            }
            (Some(_), Some(_), None) => {
                return Err(ConfigError::Invalid("sweep.n_atoms_list needs variable = \"n_atoms\"".into()))
            }
            (v, None, Some(values)) => (v.unwrap_or(SweepVariable::NAtoms), values.clone()),
            (_, None, None) => return Err(ConfigError::Missing("sweep.n_atoms_list or sweep.values")),
        };
        let mut methods = s.methods.clone();
        methods.sort();
        methods.dedup();
        let spec = Self {
            params: SystemParams {
                g: p.g,
                kappa: p.kappa,
                gamma_tot: p.gamma_tot,
                eta: p.eta,
                n_atoms: p.n_atoms as f64,
                epsilon: p.epsilon_over_kappa * p.kappa,
            },
            variable,
            values,
            methods,
            ansatz: s.ansatz,
            fock: FockSpec::new(cfg.oracle.fock[0], cfg.oracle.fock[1]),
            n_trajectories: cfg.oracle.n_trajectories,
            seed: s.seed,
            output: s.output.clone(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.values.is_empty() {
            return Err(ConfigError::Invalid("sweep value list is empty".into()));
        }
        if self.methods.is_empty() {
            return Err(ConfigError::Invalid("sweep.methods is empty".into()));
        }
        if let Some(w) = self.values.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(ConfigError::Invalid(format!("sweep values must be strictly increasing ({} then {})", w[0], w[1])));
        }
        for &v in &self.values {
            match self.variable {
                SweepVariable::NAtoms => {
                    if !(v >= 0.0 && v.fract() == 0.0 && v <= MAX_SWEEP_ATOMS as f64) {
                        return Err(range("sweep.values", v, "atom numbers must be integers in 0..=10000"));
                    }
                }
                SweepVariable::Epsilon | SweepVariable::Eta => {
                    if !(v.is_finite() && v > 0.0) {
                        return Err(range("sweep.values", v, "must be positive and finite"));
                    }
                }
            }
        }
        if self.params.n_atoms > MAX_SWEEP_ATOMS as f64 {
            return Err(range("params.n_atoms", self.params.n_atoms, "at most 10000"));
        }
        if self.fock.max_photons_a < 1 || self.fock.max_photons_b < 1 {
            return Err(range("oracle.fock", format!("{:?}", self.fock), "need at least one photon per mode"));
        }
        if self.methods.iter().any(Method::is_oracle) {
            let largest = match self.variable {
                SweepVariable::NAtoms => *self.values.last().expect("non-empty"),
                _ => self.params.n_atoms,
            };
            if largest > MAX_ORACLE_ATOMS as f64 {
                return Err(ConfigError::Invalid(format!(
                    "master_eq and trajectory methods need N <= {MAX_ORACLE_ATOMS}, sweep reaches N = {largest}"
                )));
            }
            if self.fock.max_photons_a < 2 || self.fock.max_photons_b < 2 {
                return Err(range("oracle.fock", format!("{:?}", self.fock), "oracle methods need at least two photons per mode"));
            }
        }
        if self.methods.contains(&Method::Trajectory) && self.n_trajectories < 2 {
            return Err(range("oracle.n_trajectories", self.n_trajectories, "need at least 2"));
        }
        Ok(())
    }

    /// Parameters at one sweep value.
    pub fn point_params(&self, value: f64) -> SystemParams {
        match self.variable {
            SweepVariable::NAtoms => self.params.with_atoms(value),
            SweepVariable::Epsilon => self.params.with_drive_ratio(value),
            SweepVariable::Eta => self.params.with_eta(value),
        }
    }

    /// Fully resolved configuration; parsing it back yields the same spec.
    pub fn to_config(&self) -> ConfigFile {
        ConfigFile {
            params: ParamsSection {
                g: self.params.g,
                kappa: self.params.kappa,
                gamma_tot: self.params.gamma_tot,
                eta: self.params.eta,
                epsilon_over_kappa: self.params.epsilon_over_kappa(),
                n_atoms: self.params.n_atoms as u64,
            },
            sweep: SweepSection {
                variable: Some(self.variable),
                n_atoms_list: None,
                values: Some(self.values.clone()),
                methods: self.methods.clone(),
                ansatz: self.ansatz,
                seed: self.seed,
                output: self.output.clone(),
            },
            oracle: OracleSection {
                fock: [self.fock.max_photons_a, self.fock.max_photons_b],
                n_trajectories: self.n_trajectories,
            },
        }
    }
}

pub fn parse_config(text: &str) -> Result<SweepSpec, ConfigError> {
    let cfg: ConfigFile = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    SweepSpec::from_config(&cfg)
}

pub fn load_config(path: &Path) -> Result<SweepSpec, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config(&text)
}
