use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ConfigError, ConfigFile, SweepSpec};
use crate::analytic::{analytic_record, Method, SystemParams, TransmissionRecord};
use crate::hilbert::{build_basis, AtomBasisSpec};
use crate::oracle::{
    build_lindblad, empty_cavity_photons, master_equation_transmissions, run_trajectories, OracleSettings,
    TrajectoryConfig,
};
use crate::weakfield::weak_field_record;

pub const CSV_HEADER: &str =
    "method,n_atoms,cooperativity,epsilon_over_kappa,t_driven,t_undriven,t_ratio,uncertainty_u,seed";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{method} failed at sweep value {value}: {message}")]
    Numerical { method: Method, value: f64, message: String },
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl HarnessError {
    /// Process exit code: 2 for configuration and output problems, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Io { .. } => 2,
            HarnessError::Numerical { .. } => 3,
        }
    }
}

/// How one record was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: Method,
    pub sweep_value: f64,
    pub n_atoms: f64,
    pub epsilon_over_kappa: f64,
    pub eta: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// Fully resolved configuration; rerunning it reproduces the CSV.
    pub config: ConfigFile,
    pub seed: u64,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub records: Vec<Provenance>,
}

impl RunManifest {
    pub fn spec(&self) -> Result<SweepSpec, ConfigError> {
        SweepSpec::from_config(&self.config)
    }
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    /// Ordered by method, then sweep value.
    pub records: Vec<TransmissionRecord>,
    pub manifest: RunManifest,
}

fn unix_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

fn evaluate(spec: &SweepSpec, method: Method, value: f64) -> Result<(TransmissionRecord, Provenance), HarnessError> {
    let p = spec.point_params(value);
    let fail = |message: String| HarnessError::Numerical { method, value, message };
    let settings = OracleSettings::for_params(&p).with_fock(spec.fock);
    let fock = [spec.fock.max_photons_a, spec.fock.max_photons_b];
    let (record, detail) = match method {
        Method::Analytic => (analytic_record(&p), "closed form".to_string()),
        Method::WeakField => {
            let r = weak_field_record(&p, spec.fock, spec.ansatz).map_err(|e| fail(e.to_string()))?;
            (r, format!("{:?} ansatz, collective basis, fock {fock:?}", spec.ansatz))
        }
        Method::MasterEq => {
            let rep = master_equation_transmissions(&p, &settings).map_err(|e| fail(e.to_string()))?;
            let detail = format!(
                "tensor basis, fock {fock:?}, rk4 from prepared state for {:.6e} us with step {:.6e} us, shelved {:.3e}, undriven share with atoms in ground level {:.3e}",
                settings.settle_time, settings.step, rep.shelved_population, rep.bare_undriven_fraction
            );
            (rep.record(&p), detail)
        }
        Method::Trajectory => trajectory_record(spec, &p, &settings).map_err(|e| fail(e.to_string()))?,
    };
    let provenance = Provenance {
        method,
        sweep_value: value,
        n_atoms: p.n_atoms,
        epsilon_over_kappa: p.epsilon_over_kappa(),
        eta: p.eta,
        detail,
    };
    Ok((record, provenance))
}

fn trajectory_record(
    spec: &SweepSpec,
    p: &SystemParams,
    settings: &OracleSettings,
) -> Result<(TransmissionRecord, String), crate::oracle::OracleError> {
    let basis = build_basis(spec.fock, AtomBasisSpec::tensor_product(p.atom_count()?))?;
    let model = build_lindblad(p, &basis)?;
    let config = TrajectoryConfig::new(&model, spec.n_trajectories, spec.seed);
    let stats = run_trajectories(&model, &config)?;
    let reference = empty_cavity_photons(p, settings)?;
    let mut record = analytic_record(p);
    record.method = Method::Trajectory;
    record.t_driven = stats.mean_photons_a / reference;
    record.t_undriven = stats.mean_photons_b / reference;
    record.uncertainty = Some(stats.stderr_photons_b / reference);
    record.seed = Some(spec.seed);
    let detail = format!(
        "{} trajectories, window [{:.6e}, {:.6e}] us, step {:.6e} us, jumps {:?}",
        stats.n_trajectories, config.t_equilibrate, config.t_final, config.dt, stats.jump_counts
    );
    Ok((record, detail))
}

/// Evaluates every (method, value) pair. Points run in parallel; output order
/// is fixed by the spec.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult, HarnessError> {
    spec.validate()?;
    let started = unix_ms();
    let points: Vec<(Method, f64)> =
        spec.methods.iter().flat_map(|&m| spec.values.iter().map(move |&v| (m, v))).collect();
    let evaluated = points
        .par_iter()
        .map(|&(m, v)| evaluate(spec, m, v))
        .collect::<Result<Vec<_>, _>>()?;
    let (records, provenance): (Vec<_>, Vec<_>) = evaluated.into_iter().unzip();
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: spec.to_config(),
        seed: spec.seed,
        started_unix_ms: started,
        finished_unix_ms: unix_ms(),
        records: provenance,
    };
    Ok(SweepResult { records, manifest })
}

pub fn format_csv(records: &[TransmissionRecord]) -> String {
    let mut out = String::with_capacity(128 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let uncertainty = r.uncertainty.map(|u| format!("{u:.16e}")).unwrap_or_default();
        let seed = r.seed.map(|s| s.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
            r.method,
            r.n_atoms,
            r.cooperativity,
            r.epsilon_over_kappa,
            r.t_driven,
            r.t_undriven,
            r.ratio(),
            uncertainty,
            seed
        )
        .expect("writing to a String");
    }
    out
}

/// gnuplot script drawing `t_undriven` against cooperativity, one curve per method.
pub fn gnuplot_script(csv_name: &str, methods: &[Method]) -> String {
    let names: Vec<&str> = methods.iter().map(Method::as_str).collect();
    format!(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set xlabel 'cooperativity C'\n\
         set ylabel 'undriven transmission (empty driven cavity = 1)'\n\
         methods = \"{}\"\n\
         plot for [m in methods] '{}' using (strcol(1) eq m ? $3 : 1/0):6 with linespoints title m\n",
        names.join(" "),
        csv_name
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputPaths {
    pub csv: PathBuf,
    pub manifest: PathBuf,
    pub plot: PathBuf,
}

pub fn output_paths(csv: &Path) -> OutputPaths {
    OutputPaths { csv: csv.to_path_buf(), manifest: csv.with_extension("manifest.json"), plot: csv.with_extension("gp") }
}

/// Writes the CSV, its manifest and a plot script next to each other.
pub fn write_outputs(result: &SweepResult, csv: &Path) -> Result<OutputPaths, HarnessError> {
    let paths = output_paths(csv);
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| HarnessError::Io { path, source }
    };
    if let Some(dir) = csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io(dir))?;
    }
    std::fs::write(&paths.csv, format_csv(&result.records)).map_err(io(&paths.csv))?;
    let manifest = serde_json::to_string_pretty(&result.manifest).expect("manifest serializes");
    std::fs::write(&paths.manifest, manifest + "\n").map_err(io(&paths.manifest))?;
    let name = csv.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let methods: Vec<Method> = result.manifest.config.sweep.methods.clone();
    std::fs::write(&paths.plot, gnuplot_script(&name, &methods)).map_err(io(&paths.plot))?;
    Ok(paths)
}
