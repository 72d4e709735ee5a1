//! Sweeps, headline numbers and file output for the command-line tool.

mod config;
mod headline;
mod sweep;

pub use config::{
    load_config, parse_config, ConfigError, ConfigFile, OracleSection, ParamsSection, SweepSection, SweepSpec,
    SweepVariable, MAX_ORACLE_ATOMS, MAX_SWEEP_ATOMS,
};
pub use headline::{report_headline_numbers, BandCheck, HeadlineReport};
pub use sweep::{
    format_csv, gnuplot_script, output_paths, run_sweep, write_outputs, HarnessError, OutputPaths, Provenance,
    RunManifest, SweepResult, CSV_HEADER,
};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "CAVITY_QED_WORKERS";

/// Reads the worker count from [`WORKERS_ENV`]; unset means rayon's default.
pub fn workers_from_env() -> Result<Option<usize>, ConfigError> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(ConfigError::Range { key: WORKERS_ENV.into(), value: v, reason: "must be a positive integer" }),
        },
    }
}
