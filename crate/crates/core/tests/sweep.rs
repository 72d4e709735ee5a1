use cavity_qed::analytic::Method;
use cavity_qed::harness::{
    format_csv, output_paths, parse_config, run_sweep, write_outputs, HarnessError, RunManifest, SweepSpec, CSV_HEADER,
};
use cavity_qed::weakfield::Ansatz;

fn two_method_spec() -> SweepSpec {
    SweepSpec { methods: vec![Method::Analytic, Method::WeakField], ..SweepSpec::reference_default() }
}

#[test]
fn analytic_curve_peaks_near_half() {
    let res = run_sweep(&SweepSpec { methods: vec![Method::Analytic], ..SweepSpec::reference_default() }).unwrap();
    assert_eq!(res.records.len(), 37);
    let best = res.records.iter().max_by(|a, b| a.t_undriven.total_cmp(&b.t_undriven)).unwrap();
    // neighbouring integer N straddle C = 0.5
    assert!((best.cooperativity - 0.5).abs() < 0.06, "{}", best.cooperativity);
    let c1 = 1.5f64 * 1.5 / (3.2 * 6.0);
    let c1t = c1 / (2.1 * 2.1);
    let beta = 2.0 * c1t / (1.0 + 2.0 * c1t);
    // T_u(C) is flat at the top: the best grid point sits just below β/8
    assert!(best.t_undriven <= beta / 8.0 && best.t_undriven > 0.995 * beta / 8.0);
}

#[test]
fn argmax_agrees_between_methods() {
    let res = run_sweep(&two_method_spec()).unwrap();
    let argmax = |m: Method| {
        res.records
            .iter()
            .filter(|r| r.method == m)
            .max_by(|a, b| a.t_undriven.total_cmp(&b.t_undriven))
            .unwrap()
            .n_atoms
    };
    assert_eq!(argmax(Method::Analytic), argmax(Method::WeakField));
}

#[test]
fn cooperativity_column_recomputes_from_manifest() {
    let res = run_sweep(&two_method_spec()).unwrap();
    let p = &res.manifest.config.params;
    let c1 = p.g * p.g / (p.kappa * p.gamma_tot);
    let big_g = p.g / p.eta;
    let c1t = big_g * big_g / (p.kappa * p.gamma_tot);
    let csv = format_csv(&res.records);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let n: f64 = f[1].parse().unwrap();
        let c: f64 = f[2].parse().unwrap();
        assert!((c - c1 * n / (1.0 + 2.0 * c1t)).abs() <= 1e-12, "{line}");
    }
}

#[test]
fn weak_field_and_master_equation_agree() {
    let spec = SweepSpec {
        values: vec![0.0, 1.0, 2.0],
        methods: vec![Method::WeakField, Method::MasterEq],
        ansatz: Ansatz::FirstOrder,
        ..SweepSpec::reference_default()
    };
    let res = run_sweep(&spec).unwrap();
    let (wf, me) = res.records.split_at(3);
    for (a, b) in wf.iter().zip(me) {
        assert_eq!(a.n_atoms, b.n_atoms);
        assert!((a.t_driven / b.t_driven - 1.0).abs() < 1e-3);
        if a.t_undriven > 0.0 {
            assert!((a.t_undriven / b.t_undriven - 1.0).abs() < 1e-3);
        }
    }
}

#[test]
fn manifest_alone_reproduces_csv() {
    let text = "[params]\ng = 1.5\nkappa = 3.2\ngamma_tot = 6.0\neta = 2.1\nepsilon_over_kappa = 0.02\n\n[sweep]\nn_atoms_list = [0, 1]\nmethods = [\"trajectory\", \"analytic\"]\nseed = 11\n\n[oracle]\nn_trajectories = 4\n";
    let spec = parse_config(text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("out/run.csv");
    let paths = write_outputs(&run_sweep(&spec).unwrap(), &csv).unwrap();
    assert_eq!(paths, output_paths(&csv));
    assert!(std::fs::read_to_string(&paths.plot).unwrap().contains("run.csv"));

    let manifest: RunManifest = serde_json::from_str(&std::fs::read_to_string(&paths.manifest).unwrap()).unwrap();
    assert_eq!(manifest.seed, 11);
    assert_eq!(manifest.records.len(), 4);
    let again = run_sweep(&manifest.spec().unwrap()).unwrap();
    assert_eq!(format_csv(&again.records), std::fs::read_to_string(&csv).unwrap());
    let rows: Vec<&str> = manifest.records.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(rows, ["analytic", "analytic", "trajectory", "trajectory"]);
}

#[test]
fn unwritable_output_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let res = run_sweep(&SweepSpec { values: vec![1.0], ..two_method_spec() }).unwrap();
    let err = write_outputs(&res, &blocker.join("x.csv")).unwrap_err();
    assert!(matches!(err, HarnessError::Io { .. }));
    assert_eq!(err.exit_code(), 2);
}
