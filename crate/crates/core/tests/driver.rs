use chns_core::driver::{
    advance, bubble_profile, init_two_step, run, run_study, study_runs, LinearSolver, RunConfig, StudyKind,
};
use chns_core::iohub::{load_system, STATS_HEADER};
use chns_core::model::{DirectNewtonSolver, History, NewtonConfig, PhysParams};
use chns_core::{FeSpace, VelocityBc};

fn small(steps: usize) -> RunConfig {
    RunConfig {
        nx: 4,
        ny: 8,
        steps,
        ..RunConfig::benchmark1()
    }
}

#[test]
fn equilibrium_start_stays_put() {
    let sp = FeSpace::rectangle(1.0, 2.0, 4, 8, &VelocityBc::rising_bubble()).unwrap();
    let params = PhysParams {
        g: [0.0, 0.0],
        ..PhysParams::benchmark1()
    };
    let one = vec![1.0; sp.n1()];
    let (hist, _) = init_two_step(&sp, &one, &params, &NewtonConfig::default()).unwrap();
    let (st, rep, ledger) = advance(&sp, &hist, &params, &mut DirectNewtonSolver, &NewtonConfig::default()).unwrap();
    assert!(rep.iterations <= 1);
    assert!(st.phi.iter().all(|p| (p - 1.0).abs() < 1e-10));
    assert!(st.v.iter().all(|v| v.abs() < 1e-10));
    assert!((ledger.energy_new() - ledger.energy_old()).abs() < 1e-10);
}

#[test]
fn bubble_profile_shape() {
    let sp = FeSpace::rectangle(1.0, 2.0, 8, 16, &VelocityBc::rising_bubble()).unwrap();
    let eps = 0.02;
    let phi = bubble_profile(&sp, eps);
    for (x, p) in sp.mesh.vertices.iter().zip(&phi) {
        let d = 0.25 - ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)).sqrt();
        if d > 2.0 * eps {
            assert_eq!(*p, 1.0);
        } else if d < -2.0 * eps {
            assert_eq!(*p, -1.0);
        }
        assert!(p.abs() <= 1.0);
    }
}

#[test]
fn run_writes_outputs_and_keeps_history() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        output_dir: Some(dir.path().to_path_buf()),
        vtk_every: 2,
        capture_steps: vec![1],
        ..small(2)
    };
    let st = run(&cfg).unwrap();
    assert!(st.aborted.is_none());
    assert_eq!(st.records.len(), 2);
    assert_eq!(st.systems.len(), 1);
    let csv = std::fs::read_to_string(dir.path().join("stats.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], STATS_HEADER);
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,"));
    assert!(dir.path().join("state_0002.vtk").exists());
    assert!(!dir.path().join("state_0001.vtk").exists());
    let sys = load_system(&dir.path().join("system_step0001")).unwrap();
    assert_eq!(sys.rhs, st.systems[0].1.rhs);
    for r in &st.records {
        assert!(r.newton_iters >= 1 && r.mean_fgmres > 0.0);
        assert!(r.cfl_max <= 1.0);
        assert!((r.time - r.step as f64 * cfg.params.tau).abs() < 1e-15);
    }
}

#[test]
fn direct_and_krylov_runs_agree() {
    let a = run(&RunConfig {
        solver: LinearSolver::Direct,
        ..small(2)
    })
    .unwrap();
    let b = run(&small(2)).unwrap();
    for (x, y) in a.records.iter().zip(&b.records) {
        assert!((x.energy() - y.energy()).abs() <= 1e-6 * x.energy());
        assert!((x.rise - y.rise).abs() < 1e-6);
    }
    assert!(a.records.iter().all(|r| r.mean_fgmres == 1.0));
}

#[test]
fn failures_keep_partial_statistics() {
    let mut cfg = small(3);
    cfg.newton.maxit = 1;
    cfg.newton.tol_abs = 1e-30;
    cfg.newton.tol_rel = 1e-30;
    // the initialization needs more than one Newton step
    assert!(run(&cfg).is_err());
    let mut cfg = small(3);
    cfg.solver = LinearSolver::Direct;
    cfg.steps = 2;
    let ok = run(&cfg).unwrap();
    assert_eq!(ok.records.len(), 2);
    // Newton starved of linear accuracy aborts the loop but returns what it had
    let mut cfg = small(3);
    cfg.newton.maxit = 6;
    if let LinearSolver::Krylov(p) = &mut cfg.solver {
        p.outer.maxit = 1;
        p.outer.restart = 1;
    }
    let st = run(&cfg).unwrap();
    assert!(st.aborted.is_some(), "{:?}", st.records.iter().map(|r| r.newton_iters).collect::<Vec<_>>());
    assert!(st.records.len() < 3);
}

#[test]
fn study_presets_follow_the_sweeps() {
    let base = RunConfig::benchmark1();
    let va = study_runs(StudyKind::VaryAll, &base);
    assert_eq!(va.len(), 3);
    for (_, c) in &va {
        let eps = 1.28 / c.nx as f64;
        assert_eq!(c.ny, 2 * c.nx);
        assert_eq!(c.params.eps, eps);
        assert!((c.params.tau - 2e-3 * (eps / 0.04).powi(2)).abs() < 1e-18);
        assert_eq!(c.params.b, 1e-3 * eps);
        assert_eq!(c.params.s, 1e4);
    }
    let sig: Vec<f64> = study_runs(StudyKind::VarySigma, &base).iter().map(|(_, c)| c.params.sigma).collect();
    assert_eq!(sig, vec![0.02, 0.1, 1.0, 10.0, 90.0]);
    let pen: Vec<f64> = study_runs(StudyKind::VaryPenalty, &base).iter().map(|(_, c)| c.params.s).collect();
    assert_eq!(pen, vec![1e4, 1e6, 1e8, 1e9]);
    for (_, c) in study_runs(StudyKind::VaryRe, &base) {
        assert_eq!(c.params.s, 1e6);
    }
    let b2 = study_runs(StudyKind::Benchmark2Topology, &base);
    assert_eq!(b2[0].1.params.rho1, PhysParams::benchmark2().rho1);
    for k in StudyKind::ALL {
        assert_eq!(StudyKind::parse(k.name()).unwrap(), k);
    }
    assert!(StudyKind::parse("nope").is_err());
}

#[test]
fn study_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let base = RunConfig {
        output_dir: Some(dir.path().to_path_buf()),
        ..small(1)
    };
    let rows = run_study(StudyKind::VaryMobility, &base).unwrap();
    assert_eq!(rows.len(), 4);
    let summary = std::fs::read_to_string(dir.path().join("vary-mobility").join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
    assert!(dir.path().join("vary-mobility").join(&rows[0].0.label).join("stats.csv").exists());
}

#[test]
fn history_shift_order() {
    let sp = FeSpace::rectangle(1.0, 2.0, 2, 4, &VelocityBc::rising_bubble()).unwrap();
    let params = PhysParams::benchmark1();
    let phi = bubble_profile(&sp, params.eps);
    let (h, _) = init_two_step(&sp, &phi, &params, &NewtonConfig::default()).unwrap();
    let (st, _, _) = advance(&sp, &h, &params, &mut DirectNewtonSolver, &NewtonConfig::default()).unwrap();
    let h2: History = h.shifted(&st);
    assert_eq!(h2.phi_km2, h.phi_km1);
    assert_eq!(h2.phi_km1, st.phi);
    assert_eq!(h2.v_km1, st.v);
}
