use isqp::problems::manifest_entries;
use isqp_bench::manifest::{load_manifest, parse_manifest, render_manifest};
use isqp_bench::{
    emit_reports, jobs, morales, read_csv, run_matrix, write_csv, BenchConfig, BenchError, NoiseLabel, RunRecord,
    CSV_HEADER,
};

fn cfg(text: &str) -> BenchConfig {
    BenchConfig::from_toml(text).unwrap()
}

fn record(problem: &str, f: f64, t: f64, status: &str) -> RunRecord {
    RunRecord {
        problem: problem.into(),
        start: "std".into(),
        solver: "x".into(),
        noise: NoiseLabel::none(),
        status: status.into(),
        f_star: f,
        acc_inf: 0.0,
        n_f: 1,
        n_grad: 1,
        iters: 1,
        wall_s: t,
        n_sub0: 1,
        n_sub1: 0,
        n_sub2: 0,
        n_reset: 0,
        n_fallback: 0,
    }
}

#[test]
fn one_problem_two_solvers_gives_two_records() {
    let c = cfg("[problems]\nids = [\"hs071\"]\n[solvers]\nnames = [\"isqp\", \"islsqp\"]\n");
    let res = run_matrix(&c, 1).unwrap();
    assert_eq!(res.len(), 2);
    assert_eq!(res[0].record.solver, "isqp");
    assert_eq!(res[1].record.solver, "islsqp");
    assert!(res.iter().all(|r| r.record.converged()));
}

#[test]
fn noise_free_runs_are_not_repeated_per_seed() {
    let c = cfg(concat!(
        "[problems]\nids = [\"hs001\", \"hs006\"]\n[solvers]\nnames = [\"isqp\"]\n",
        "[noise]\nmagnitudes = [0.0, 1e-6]\nseeds = [0, 1, 2]\n[starts]\nids = [\"std\", \"r1\"]\n"
    ));
    assert_eq!(jobs(&c).len(), 2 * 2 * (1 + 3));
}

#[test]
fn reruns_match_except_wall_time() {
    let c = cfg(concat!(
        "[problems]\nids = [\"hs071\", \"incons-pair\", \"tiny-residual(1e7)\"]\n",
        "[solvers]\nnames = [\"isqp\", \"islsqp\"]\n[noise]\nmagnitudes = [1e-6]\nseeds = [3]\n"
    ));
    let strip = |mut v: Vec<isqp_bench::RunResult>| {
        for r in &mut v {
            r.record.wall_s = 0.0;
        }
        v
    };
    let a = strip(run_matrix(&c, 1).unwrap());
    let b = strip(run_matrix(&c, 1).unwrap());
    assert_eq!(a, b);
    let p = strip(run_matrix(&c, 3).unwrap());
    assert_eq!(a, p);
}

#[test]
fn infeasible_entry_is_recorded_and_harness_continues() {
    let c = cfg("[problems]\nids = [\"infeasible-pair\", \"hs071\"]\n[solvers]\nnames = [\"islsqp\"]\n");
    let res = run_matrix(&c, 1).unwrap();
    assert_eq!(res.len(), 2);
    assert_eq!(res[0].record.status, "infeasible-subproblem");
    assert!(res[1].record.converged());
}

#[test]
fn unknown_ids_are_config_errors() {
    for text in [
        "[problems]\nids = [\"hs999\"]\n[solvers]\nnames = [\"isqp\"]\n",
        "[problems]\nids = [\"hs071\"]\n[solvers]\nnames = [\"snopt\"]\n",
        "[problems]\nids = [\"hs071\"]\n[solvers]\nnames = [\"isqp\"]\n[starts]\nids = [\"r9\"]\n",
        "[problems]\nids = [\"hs071\"]\n[solvers]\nnames = [\"isqp\"]\n[noise]\nmagnitudes = [-1.0]\n",
        "[problems]\nids = [\"hs071\"]\n",
        "[problem]\nids = [\"hs071\"]\n[solvers]\nnames = [\"isqp\"]\n",
    ] {
        let err = BenchConfig::from_toml(text).unwrap_err();
        assert!(matches!(err, BenchError::Config(_)), "{text}: {err}");
        assert_eq!(err.exit_code(), 1);
    }
}

#[test]
fn csv_has_exact_columns_and_round_trips() {
    let mut a = record("hs071", 17.014, 0.25, "converged-group1");
    a.noise = NoiseLabel { magnitude: 1e-6, seed: 4 };
    let mut b = record("hs013", 1.0, 1.5, "iteration-limit");
    b.n_sub0 = 114;
    b.n_sub1 = 7;
    let mut buf = Vec::new();
    write_csv(&[a.clone(), b.clone()], &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], CSV_HEADER);
    let row: Vec<&str> = lines[2].split(',').collect();
    assert_eq!(&row[11..14], &["114", "7", "0"]);
    assert!(lines[1].contains(",1e-6@4,"));
    assert_eq!(read_csv(buf.as_slice()).unwrap(), vec![a, b]);
}

#[test]
fn subproblem_counts_map_to_columns() {
    let c = cfg("[problems]\nids = [\"incons-pair\"]\n[solvers]\nnames = [\"isqp\"]\n");
    let res = run_matrix(&c, 1).unwrap();
    let r = &res[0].record;
    assert!(r.n_sub0 >= r.iters && r.n_sub1 >= 1 && r.n_sub2 >= 1);
    assert_eq!(r.n_reset, res[0].event_log.iter().filter(|e| matches!(e, isqp::driver::SolverEvent::Reset { .. })).count());
}

#[test]
fn emitted_files_are_readable() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg("[problems]\nids = [\"hs071\", \"eqline\"]\n[solvers]\nnames = [\"islsqp\"]\n");
    let res = run_matrix(&c, 1).unwrap();
    emit_reports(&res, dir.path()).unwrap();
    let back = read_csv(std::fs::File::open(dir.path().join("records.csv")).unwrap()).unwrap();
    assert_eq!(back.len(), 2);
    assert_eq!(back[0], res[0].record);
    let json: serde_json::Value = serde_json::from_reader(std::fs::File::open(dir.path().join("records.json")).unwrap()).unwrap();
    let runs = json["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    for key in CSV_HEADER.split(',').chain(["event_log", "fallback_iterations", "x_star"]) {
        assert!(runs[0].get(key).is_some(), "missing {key}");
    }
    assert!(matches!(emit_reports(&[], dir.path()), Err(BenchError::Config(_))));
}

#[test]
fn reports_serialize_with_status_strings() {
    let c = cfg("[problems]\nids = [\"hs071\"]\n[solvers]\nnames = [\"isqp\"]\n");
    let res = run_matrix(&c, 1).unwrap();
    assert!(isqp::driver::SolveStatus::parse(&res[0].record.status).is_some());
}

#[test]
fn morales_is_antisymmetric_and_zero_on_ties() {
    let a = vec![
        record("p1", 2.0, 1.0, "converged-group1"),
        record("p2", 3.0, 8.0, "converged-group2"),
        record("p3", 1.0, 1.0, "iteration-limit"),
        record("p4", -1.0, 1.0, "converged-group1"),
        record("p5", 5.0, 5.0, "converged-group1"),
    ];
    let b = vec![
        record("p1", 2.0, 4.0, "converged-group1"),
        record("p2", 1.5, 2.0, "converged-group1"),
        record("p3", 1.0, 1.0, "converged-group1"),
        record("p4", 2.0, 1.0, "converged-group1"),
        record("p6", 1.0, 1.0, "converged-group1"),
    ];
    let ab = morales(&a, &b);
    let ba = morales(&b, &a);
    assert_eq!(ab.excluded_nonconverged, 1);
    assert_eq!(ab.undefined.len(), 1);
    assert_eq!(ab.unmatched, 2);
    assert_eq!(ab.by_objective.len(), 2);
    let p1 = ab.by_objective.iter().find(|e| e.instance.starts_with("p1/")).unwrap();
    assert_eq!(p1.gamma_f, 0.0);
    assert_eq!(p1.gamma_t, -2.0);
    for (x, y) in ab.by_objective.iter().zip(ba.by_objective.iter().rev()) {
        assert_eq!(x.instance, y.instance);
        assert_eq!(x.gamma_f, -y.gamma_f);
    }
    for (x, y) in ab.by_time.iter().zip(ba.by_time.iter().rev()) {
        assert_eq!(x.gamma_t, -y.gamma_t);
    }
    assert!(ab.by_objective.windows(2).all(|w| w[0].gamma_f <= w[1].gamma_f));
    assert!(ab.by_time.windows(2).all(|w| w[0].gamma_t <= w[1].gamma_t));
}

#[test]
fn manifest_file_matches_corpus() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus/manifest.toml");
    let on_disk = load_manifest(&path).unwrap();
    assert_eq!(on_disk.problem, manifest_entries());
    let text = render_manifest(&manifest_entries()).unwrap();
    assert_eq!(parse_manifest(&text).unwrap().problem, manifest_entries());
}

#[test]
fn shipped_config_is_valid() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/noise.toml");
    let c = BenchConfig::load(&path).unwrap();
    assert_eq!(jobs(&c).len(), 6 * 3 * (1 + 5) * 2);
}
