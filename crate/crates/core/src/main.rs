use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cavity_qed::analytic::{Method, SystemParams, SOLID_ANGLE_FRACTION};
use cavity_qed::harness::{
    format_csv, load_config, report_headline_numbers, run_sweep, workers_from_env, write_outputs, ConfigError,
    HarnessError, SweepSpec, SweepVariable,
};
use cavity_qed::hilbert::{build_basis, AtomBasisSpec, FockSpec};
use cavity_qed::oracle::{
    photon_number_ops, build_lindblad, master_equation_transmissions, run_trajectories, OracleSettings,
    TrajectoryConfig,
};
use cavity_qed::weakfield::{weak_field_record, Ansatz};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_OUT_OF_BAND: u8 = 4;

#[derive(Parser)]
#[command(name = "cavity-qed", version, about = "Weak-drive transmissions of a two-mode cavity with three-level atoms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cooperativities, peak ratio and enhancement factor against the measured values.
    Headline {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = SOLID_ANGLE_FRACTION)]
        solid_angle_fraction: f64,
        /// Exit with status 4 if any value is outside its band.
        #[arg(long)]
        check: bool,
        #[arg(long)]
        json: bool,
    },
    /// Run a sweep and write CSV, manifest and gnuplot script.
    Sweep(SweepArgs),
    /// Compare the master equation against the weak-field solves for small N.
    OracleCheck {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = 2)]
        max_atoms: usize,
        #[arg(long, default_value_t = 2)]
        photons: usize,
        /// Relative tolerance against the first-order block solve.
        #[arg(long, default_value_t = 2e-3)]
        tolerance: f64,
        #[arg(long)]
        json: bool,
    },
    /// Monte Carlo wavefunction ensemble compared with the master equation.
    Trajectories {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        n_atoms: usize,
        #[arg(long, default_value_t = 2000)]
        n_traj: usize,
        #[arg(long)]
        json: bool,
    },
}

/// Rates in MHz/2π. Unset values take the reference setup.
#[derive(Args, Clone, Default)]
struct ParamArgs {
    #[arg(long)]
    g: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    gamma_tot: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    epsilon_over_kappa: Option<f64>,
}

impl ParamArgs {
    fn resolve(&self, default_drive: f64) -> Result<SystemParams, ConfigError> {
        let base = SystemParams::reference();
        let mut p = SystemParams {
            g: self.g.unwrap_or(base.g),
            kappa: self.kappa.unwrap_or(base.kappa),
            gamma_tot: self.gamma_tot.unwrap_or(base.gamma_tot),
            eta: self.eta.unwrap_or(base.eta),
            ..base
        };
        p = p.with_drive_ratio(self.epsilon_over_kappa.unwrap_or(default_drive));
        p.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(p)
    }
}

#[derive(Args)]
struct SweepArgs {
    /// TOML configuration; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV path; the manifest and plot script are written next to it. Without
    /// it the CSV goes to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long, value_parser = parse_variable)]
    variable: Option<SweepVariable>,
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    #[arg(long)]
    n_atoms: Option<u64>,
    #[arg(long, value_parser = parse_ansatz)]
    ansatz: Option<Ansatz>,
    #[arg(long)]
    n_trajectories: Option<usize>,
    #[arg(long)]
    g: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    gamma_tot: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    epsilon_over_kappa: Option<f64>,
}

fn parse_variable(s: &str) -> Result<SweepVariable, String> {
    match s {
        "n_atoms" => Ok(SweepVariable::NAtoms),
        "epsilon" => Ok(SweepVariable::Epsilon),
        "eta" => Ok(SweepVariable::Eta),
        _ => Err(format!("unknown sweep variable '{s}' (n_atoms, epsilon, eta)")),
    }
}

fn parse_ansatz(s: &str) -> Result<Ansatz, String> {
    match s {
        "six_state" => Ok(Ansatz::SixState),
        "first_order" => Ok(Ansatz::FirstOrder),
        _ => Err(format!("unknown ansatz '{s}' (six_state, first_order)")),
    }
}

impl SweepArgs {
    fn spec(&self) -> Result<SweepSpec, ConfigError> {
        let base = match &self.config {
            Some(path) => load_config(path)?,
            None => SweepSpec::reference_default(),
        };
        let mut cfg = base.to_config();
        let p = &mut cfg.params;
        macro_rules! set {
            ($($flag:ident => $slot:expr),* $(,)?) => {$(if let Some(v) = self.$flag.clone() { $slot = v; })*};
        }
        set!(g => p.g, kappa => p.kappa, gamma_tot => p.gamma_tot, eta => p.eta,
             epsilon_over_kappa => p.epsilon_over_kappa, n_atoms => p.n_atoms);
        let s = &mut cfg.sweep;
        set!(seed => s.seed, methods => s.methods, ansatz => s.ansatz);
        if let Some(v) = self.variable {
            s.variable = Some(v);
        }
        if let Some(v) = &self.values {
            s.values = Some(v.clone());
        }
        if let Some(o) = &self.output {
            s.output = Some(o.clone());
        }
        if let Some(n) = self.n_trajectories {
            cfg.oracle.n_trajectories = n;
        }
        SweepSpec::from_config(&cfg)
    }
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match workers_from_env() {
        Ok(Some(n)) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                return fail(EXIT_CONFIG, e);
            }
        }
        Ok(None) => {}
        Err(e) => return fail(EXIT_CONFIG, e),
    }
    match cli.command {
        Command::Headline { params, solid_angle_fraction, check, json } => {
            headline(&params, solid_angle_fraction, check, json)
        }
        Command::Sweep(args) => sweep(&args),
        Command::OracleCheck { params, max_atoms, photons, tolerance, json } => {
            oracle_check(&params, max_atoms, photons, tolerance, json)
        }
        Command::Trajectories { params, seed, n_atoms, n_traj, json } => {
            trajectories(&params, seed, n_atoms, n_traj, json)
        }
    }
}

fn headline(params: &ParamArgs, fraction: f64, check: bool, json: bool) -> ExitCode {
    let p = match params.resolve(0.01) {
        Ok(p) => p,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    if !(fraction > 0.0 && fraction.is_finite()) {
        return fail(EXIT_CONFIG, format!("solid angle fraction {fraction} must be positive"));
    }
    let report = report_headline_numbers(&p, fraction);
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        println!("C1                 {:.6}", report.c1);
        println!("C1_tilde           {:.6}", report.c1_tilde);
        println!("beta               {:.6}", report.beta);
        println!("peak C             {:.6}  (N = {:.3})", report.peak_cooperativity, report.peak_atoms);
        println!("T_u/T_d at peak    {:.6}", report.peak_ratio);
        println!("enhancement        {:.3}  (fraction {:e})", report.enhancement, report.solid_angle_fraction);
        println!();
        for c in &report.checks {
            let flag = if c.in_band { "IN BAND" } else { "OUT OF BAND" };
            println!("{:<18} {:>10.5} vs {} ± {}  {flag}", c.name, c.value, c.reference, c.tolerance);
        }
    }
    if check && !report.all_in_band() {
        return ExitCode::from(EXIT_OUT_OF_BAND);
    }
    ExitCode::SUCCESS
}

fn sweep(args: &SweepArgs) -> ExitCode {
    let spec = match args.spec() {
        Ok(s) => s,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let result = match run_sweep(&spec) {
        Ok(r) => r,
        Err(e) => return fail(e.exit_code() as u8, e),
    };
    match &spec.output {
        Some(path) => match write_outputs(&result, path) {
            Ok(paths) => {
                eprintln!(
                    "wrote {} rows to {} ({}, {})",
                    result.records.len(),
                    paths.csv.display(),
                    paths.manifest.display(),
                    paths.plot.display()
                );
                ExitCode::SUCCESS
            }
            Err(e @ HarnessError::Io { .. }) => fail(EXIT_CONFIG, e),
            Err(e) => fail(e.exit_code() as u8, e),
        },
        None => {
            print!("{}", format_csv(&result.records));
            ExitCode::SUCCESS
        }
    }
}

fn oracle_check(params: &ParamArgs, max_atoms: usize, photons: usize, tolerance: f64, json: bool) -> ExitCode {
    let p = match params.resolve(0.01) {
        Ok(p) => p,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    if max_atoms > cavity_qed::harness::MAX_ORACLE_ATOMS || photons < 2 {
        return fail(EXIT_CONFIG, "oracle-check needs --max-atoms <= 3 and --photons >= 2");
    }
    let fock = FockSpec::uniform(photons);
    let mut rows = Vec::new();
    let mut ok = true;
    if !json {
        println!("N  T_d(me)      T_d(block)   T_d(six)     T_u(me)      T_u(block)   T_u(six)     bare_share  shelved");
    }
    for n in 0..=max_atoms {
        let pn = p.with_atoms(n as f64);
        let me = match master_equation_transmissions(&pn, &OracleSettings::for_params(&pn).with_fock(fock)) {
            Ok(r) => r,
            Err(e) => return fail(EXIT_NUMERICAL, e),
        };
        let (block, six) = match (
            weak_field_record(&pn, fock, Ansatz::FirstOrder),
            weak_field_record(&pn, fock, Ansatz::SixState),
        ) {
            (Ok(b), Ok(s)) => (b, s),
            (Err(e), _) | (_, Err(e)) => return fail(EXIT_NUMERICAL, e),
        };
        let rel = |x: f64, y: f64| if y == 0.0 { x.abs() } else { (x / y - 1.0).abs() };
        let agree = rel(me.t_driven, block.t_driven) <= tolerance && rel(me.t_undriven, block.t_undriven) <= tolerance;
        let physical = me.trace_error <= 1e-10 && me.hermiticity_error <= 1e-10 && me.min_eigenvalue >= -1e-10;
        ok &= agree && physical;
        if json {
            rows.push(serde_json::json!({
                "n_atoms": n,
                "master_eq": me,
                "first_order_block": { "t_driven": block.t_driven, "t_undriven": block.t_undriven },
                "six_state": { "t_driven": six.t_driven, "t_undriven": six.t_undriven },
                "agrees": agree,
                "physical": physical,
            }));
        } else {
            println!(
                "{n}  {:.6e} {:.6e} {:.6e} {:.6e} {:.6e} {:.6e} {:.3e}   {:.3e}  {}",
                me.t_driven,
                block.t_driven,
                six.t_driven,
                me.t_undriven,
                block.t_undriven,
                six.t_undriven,
                me.bare_undriven_fraction,
                me.shelved_population,
                if agree && physical { "ok" } else { "MISMATCH" }
            );
        }
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&rows).expect("rows serialize"));
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_NUMERICAL)
    }
}

fn trajectories(params: &ParamArgs, seed: u64, n_atoms: usize, n_traj: usize, json: bool) -> ExitCode {
    let p = match params.resolve(0.02) {
        Ok(p) => p.with_atoms(n_atoms as f64),
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    if n_atoms > cavity_qed::harness::MAX_ORACLE_ATOMS {
        return fail(EXIT_CONFIG, "trajectories need --n-atoms <= 3");
    }
    let run = || -> Result<_, cavity_qed::oracle::OracleError> {
        let basis = build_basis(FockSpec::WEAK_DRIVE, AtomBasisSpec::tensor_product(n_atoms))?;
        let model = build_lindblad(&p, &basis)?;
        let config = TrajectoryConfig::new(&model, n_traj, seed);
        let stats = run_trajectories(&model, &config)?;
        let (na, nb) = photon_number_ops(&basis);
        let me = model.time_averaged(config.t_equilibrate, config.t_final, config.dt, &[&na, &nb])?;
        Ok((config, stats, me))
    };
    let (config, stats, me) = match run() {
        Ok(x) => x,
        Err(e) => return fail(EXIT_NUMERICAL, e),
    };
    if json {
        let out = serde_json::json!({
            "config": config,
            "stats": stats,
            "master_eq": { "mean_photons_a": me[0], "mean_photons_b": me[1] },
        });
        println!("{}", serde_json::to_string_pretty(&out).expect("stats serialize"));
    } else {
        println!("trajectories {}  seed {}  window [{:.4}, {:.4}] us  dt {:.3e} us", stats.n_trajectories, seed, config.t_equilibrate, config.t_final, config.dt);
        println!("<a+a>  {:.6e} ± {:.1e}   master equation {:.6e}", stats.mean_photons_a, stats.stderr_photons_a, me[0]);
        println!("<b+b>  {:.6e} ± {:.1e}   master equation {:.6e}", stats.mean_photons_b, stats.stderr_photons_b, me[1]);
        println!("jumps  a {}  b {}  2->1 {}  2->3 {}", stats.jump_counts[0], stats.jump_counts[1], stats.jump_counts[2], stats.jump_counts[3]);
        println!("b/a leakage {:.6e} ± {:.1e}   master equation {:.6e}", stats.leakage_ratio, stats.leakage_ratio_stderr, me[1] / me[0]);
    }
    ExitCode::SUCCESS
}
