//! Time stepping, initialization, presets and parameter studies.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::assembly::{FeSpace, MassKind};
use crate::error::{Error, Result};
use crate::iohub;
use crate::mesh::VelocityBc;
use crate::model::{
    check_cfl, energy_budget, interp_density, semismooth_newton, solve_ch_only, BlockSystem, DirectNewtonSolver,
    EnergyLedger, History, LinearSolveStats, NewtonConfig, NewtonLinearSolver, NewtonReport, PhysParams, State,
    StepOperators,
};
use crate::precond::{KrylovNewtonSolver, PrecondConfig, PrecondMode};

/// Which linear solver Newton's method uses.
#[derive(Clone, Copy, Debug)]
pub enum LinearSolver {
    Direct,
    Krylov(PrecondConfig),
}

impl LinearSolver {
    pub fn block_triangular() -> Self {
        LinearSolver::Krylov(PrecondConfig::default())
    }

    pub fn baseline() -> Self {
        LinearSolver::Krylov(PrecondConfig::baseline())
    }

    fn build(&self) -> Box<dyn NewtonLinearSolver> {
        match self {
            LinearSolver::Direct => Box::new(DirectNewtonSolver),
            LinearSolver::Krylov(cfg) => Box::new(KrylovNewtonSolver::new(*cfg)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StudyKind {
    VaryAll,
    VarySigma,
    VaryRe,
    VaryMobility,
    VaryPenalty,
    Benchmark2Topology,
}

impl StudyKind {
    pub const ALL: [StudyKind; 6] = [
        StudyKind::VaryAll,
        StudyKind::VarySigma,
        StudyKind::VaryRe,
        StudyKind::VaryMobility,
        StudyKind::VaryPenalty,
        StudyKind::Benchmark2Topology,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StudyKind::VaryAll => "vary-all",
            StudyKind::VarySigma => "vary-sigma",
            StudyKind::VaryRe => "vary-Re",
            StudyKind::VaryMobility => "vary-mobility",
            StudyKind::VaryPenalty => "vary-penalty",
            StudyKind::Benchmark2Topology => "benchmark-2-topology",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown study `{s}`")))
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub nx: usize,
    pub ny: usize,
    pub width: f64,
    pub height: f64,
    pub params: PhysParams,
    pub steps: usize,
    pub newton: NewtonConfig,
    pub solver: LinearSolver,
    /// Directory for CSV, VTK and Matrix Market output.
    pub output_dir: Option<PathBuf>,
    /// Write a VTK snapshot every this many steps (0: never).
    pub vtk_every: usize,
    /// Steps whose first Newton system is kept in [`RunStats::systems`]
    /// (and written as Matrix Market bundles when an output directory is set).
    pub capture_steps: Vec<usize>,
    pub study: Option<StudyKind>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            nx: 16,
            ny: 32,
            width: 1.0,
            height: 2.0,
            params: PhysParams::benchmark1(),
            steps: 20,
            newton: NewtonConfig::default(),
            solver: LinearSolver::block_triangular(),
            output_dir: None,
            vtk_every: 0,
            capture_steps: Vec::new(),
            study: None,
        }
    }
}

impl RunConfig {
    pub fn benchmark1() -> Self {
        Self::default()
    }

    /// Light bubble; tighter `S1`, `S2` tolerances and inner tolerance `1e-2`.
    pub fn benchmark2() -> Self {
        let mut cfg = Self {
            params: PhysParams::benchmark2(),
            ..Self::default()
        };
        if let LinearSolver::Krylov(p) = &mut cfg.solver {
            p.subs = p.subs.with_s_tol(1e-6);
            p.inner.tol_rel = 1e-2;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::invalid("mesh resolution must be positive"));
        }
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(Error::invalid("domain size must be positive"));
        }
        Ok(())
    }

    pub fn space(&self) -> Result<FeSpace> {
        FeSpace::rectangle(self.width, self.height, self.nx, self.ny, &VelocityBc::rising_bubble())
    }
}

/// Initial phase field: a disc of radius 0.25 centred at (0.5, 0.5) with a
/// `sin` profile of width `pi eps` across the interface.
pub fn bubble_profile(space: &FeSpace, eps: f64) -> Vec<f64> {
    use std::f64::consts::FRAC_PI_2;
    space.interpolate_p1(|x| {
        let d = 0.25 - ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)).sqrt();
        (d / eps).clamp(-FRAC_PI_2, FRAC_PI_2).sin()
    })
}

/// Builds `(phi^{-1}, phi^0, mu^0, v^0)` from `phi^{-1}` and `v^0 = 0` by a
/// Cahn-Hilliard-only solve. Returns the history and the Newton count.
pub fn init_two_step(space: &FeSpace, phi_init: &[f64], params: &PhysParams, cfg: &NewtonConfig) -> Result<(History, usize)> {
    let v0 = vec![0.0; space.n2()];
    let (phi0, mu0, it) = solve_ch_only(space, phi_init, &v0, params, cfg)?;
    Ok((
        History {
            phi_km2: phi_init.to_vec(),
            phi_km1: phi0,
            mu_km1: mu0,
            v_km1: v0,
        },
        it,
    ))
}

#[derive(Clone, Debug)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub newton_iters: usize,
    /// Mean outer Krylov iterations per Newton step.
    pub mean_fgmres: f64,
    /// Mean inner iterations per Newton step.
    pub mean_inner: f64,
    pub ledger: EnergyLedger,
    pub cfl_max: f64,
    pub mass: f64,
    /// Vertical centre of mass of the `phi > 0` phase.
    pub rise: f64,
    pub newton_residuals: Vec<f64>,
    pub linear: Vec<LinearSolveStats>,
    pub wall_time: f64,
}

impl StepRecord {
    pub fn energy(&self) -> f64 {
        self.ledger.energy_new()
    }
    pub fn dissipation(&self) -> f64 {
        self.ledger.dissipation()
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunStats {
    pub records: Vec<StepRecord>,
    pub init_newton: usize,
    pub initial_energy: f64,
    pub initial_mass: f64,
    /// Captured first Newton systems `(step, system)`.
    pub systems: Vec<(usize, BlockSystem)>,
    /// Reason the run stopped early, if it did.
    pub aborted: Option<String>,
}

impl RunStats {
    pub fn max_newton(&self) -> usize {
        self.records.iter().map(|r| r.newton_iters).max().unwrap_or(0)
    }

    pub fn avg_newton(&self) -> f64 {
        mean(self.records.iter().map(|r| r.newton_iters as f64))
    }

    /// Mean of the per-step `mean_fgmres` over steps `first..=last` (1-based).
    pub fn mean_fgmres(&self, first: usize, last: usize) -> f64 {
        mean(self.records.iter().filter(|r| r.step >= first && r.step <= last).map(|r| r.mean_fgmres))
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn weighted_mass(space: &FeSpace, phi: &[f64]) -> f64 {
    space.p1_integral_weights().iter().zip(phi).map(|(w, p)| w * p).sum()
}

fn rise(space: &FeSpace, phi: &[f64]) -> f64 {
    let w = space.p1_integral_weights();
    let (mut num, mut den) = (0.0, 0.0);
    for (i, (&wi, &p)) in w.iter().zip(phi).enumerate() {
        let c = wi * (p.clamp(-1.0, 1.0) + 1.0) / 2.0;
        num += c * space.mesh.vertices[i][1];
        den += c;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Keeps the first Newton system of a step.
struct Capturing<'a> {
    inner: &'a mut dyn NewtonLinearSolver,
    keep: Option<BlockSystem>,
    active: bool,
}

impl NewtonLinearSolver for Capturing<'_> {
    fn solve(&mut self, space: &FeSpace, sys: &BlockSystem) -> Result<(Vec<f64>, LinearSolveStats)> {
        if self.active && self.keep.is_none() {
            self.keep = Some(sys.clone());
        }
        self.inner.solve(space, sys)
    }
}

/// Solves one time step and shifts the history.
pub fn advance(
    space: &FeSpace,
    history: &History,
    params: &PhysParams,
    solver: &mut dyn NewtonLinearSolver,
    newton: &NewtonConfig,
) -> Result<(State, NewtonReport, EnergyLedger)> {
    let ops = StepOperators::assemble(space, history, params)?;
    let (state, report) = semismooth_newton(space, &ops, solver, newton)?;
    let ledger = energy_budget(space, &ops, &state);
    Ok((state, report, ledger))
}

/// Runs the time loop. Failures stop the loop and are recorded in
/// [`RunStats::aborted`]; everything computed so far is kept (and written
/// to the output directory, if any).
pub fn run(cfg: &RunConfig) -> Result<RunStats> {
    cfg.validate()?;
    let space = cfg.space()?;
    let params = cfg.params;
    let phi_init = bubble_profile(&space, params.eps);
    let (mut hist, init_newton) = init_two_step(&space, &phi_init, &params, &cfg.newton)?;
    let mut stats = RunStats {
        init_newton,
        initial_energy: crate::model::discrete_energy(
            &space,
            &hist.v_km1,
            &hist.phi_km1,
            &interp_density(&hist.phi_km2, params.rho1, params.rho2),
            &params,
        ),
        initial_mass: weighted_mass(&space, &hist.phi_km1),
        ..Default::default()
    };
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut solver = cfg.solver.build();
    for step in 1..=cfg.steps {
        let start = Instant::now();
        let mut cap = Capturing {
            inner: solver.as_mut(),
            keep: None,
            active: cfg.capture_steps.contains(&step),
        };
        let outcome = advance(&space, &hist, &params, &mut cap, &cfg.newton);
        if let Some(sys) = cap.keep.take() {
            if let Some(dir) = &cfg.output_dir {
                iohub::save_system(&sys, &dir.join(format!("system_step{step:04}")))?;
            }
            stats.systems.push((step, sys));
        }
        let (state, report, ledger) = match outcome {
            Ok(v) => v,
            Err(e) => {
                log::error!("step {step} failed: {e}");
                stats.aborted = Some(format!("step {step}: {e}"));
                break;
            }
        };
        let cfl = check_cfl(&space, &state.v, params.tau);
        if cfl > 1.0 {
            log::warn!("step {step}: CFL number {cfl:.3} exceeds 1");
        }
        let n = report.linear.len().max(1) as f64;
        let rec = StepRecord {
            step,
            time: step as f64 * params.tau,
            newton_iters: report.iterations,
            mean_fgmres: report.mean_krylov(),
            mean_inner: report.linear.iter().map(|l| l.inner_iterations as f64).sum::<f64>() / n,
            ledger,
            cfl_max: cfl,
            mass: weighted_mass(&space, &state.phi),
            rise: rise(&space, &state.phi),
            newton_residuals: report.residual_norms.clone(),
            linear: report.linear.clone(),
            wall_time: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "step {step}: newton {} fgmres {:.1} E {:.6e} cfl {:.3}",
            rec.newton_iters,
            rec.mean_fgmres,
            rec.energy(),
            rec.cfl_max
        );
        stats.records.push(rec);
        if let Some(dir) = &cfg.output_dir {
            if cfg.vtk_every > 0 && step % cfg.vtk_every == 0 {
                iohub::write_vtk(&space, &state, step as f64 * params.tau, &dir.join(format!("state_{step:04}.vtk")))?;
            }
        }
        hist = hist.shifted(&state);
    }
    if let Some(dir) = &cfg.output_dir {
        iohub::write_stats_csv(&stats, &dir.join("stats.csv"))?;
    }
    Ok(stats)
}

/// The runs of a study, labelled by the swept value.
pub fn study_runs(kind: StudyKind, base: &RunConfig) -> Vec<(String, RunConfig)> {
    let with = |f: &dyn Fn(&mut RunConfig)| {
        let mut c = base.clone();
        f(&mut c);
        c
    };
    // the sigma, Re and mobility sweeps use s = 1e6
    let base6 = |c: &mut RunConfig| c.params.s = 1e6;
    match kind {
        StudyKind::VaryAll => [16usize, 24, 32]
            .into_iter()
            .map(|nx| {
                let eps = 1.28 / nx as f64;
                let c = with(&|c: &mut RunConfig| {
                    c.nx = nx;
                    c.ny = 2 * nx;
                    c.params.eps = eps;
                    c.params.tau = 2e-3 * (eps / 0.04).powi(2);
                    c.params.b = 1e-3 * eps;
                    c.params.s = 1e4;
                });
                (format!("nx{nx}"), c)
            })
            .collect(),
        StudyKind::VarySigma => [0.02, 0.1, 1.0, 10.0, 90.0]
            .into_iter()
            .map(|s| {
                (
                    format!("sigma{s}"),
                    with(&|c: &mut RunConfig| {
                        base6(c);
                        c.params.sigma = s;
                    }),
                )
            })
            .collect(),
        StudyKind::VaryRe => [1000.0, 2000.0, 4000.0, 8000.0, 16000.0]
            .into_iter()
            .map(|r| {
                (
                    format!("rho1_{r}"),
                    with(&|c: &mut RunConfig| {
                        base6(c);
                        c.params.rho1 = r;
                    }),
                )
            })
            .collect(),
        StudyKind::VaryMobility => [7e-5, 4e-5, 1e-4, 3e-4]
            .into_iter()
            .map(|b| {
                (
                    format!("b{b:e}"),
                    with(&|c: &mut RunConfig| {
                        base6(c);
                        c.params.b = b;
                    }),
                )
            })
            .collect(),
        StudyKind::VaryPenalty => [1e4, 1e6, 1e8, 1e9]
            .into_iter()
            .map(|s| (format!("s{s:e}"), with(&|c: &mut RunConfig| c.params.s = s)))
            .collect(),
        StudyKind::Benchmark2Topology => {
            let mut c = RunConfig::benchmark2();
            c.nx = base.nx;
            c.ny = base.ny;
            c.steps = base.steps;
            c.newton = base.newton;
            c.output_dir = base.output_dir.clone();
            c.vtk_every = base.vtk_every;
            if let (LinearSolver::Krylov(b), LinearSolver::Krylov(p)) = (&base.solver, &mut c.solver) {
                p.mode = b.mode;
                p.ns_sign = b.ns_sign;
                p.subs = b.subs.with_s_tol(1e-6);
            }
            vec![("benchmark2".to_string(), c)]
        }
    }
}

/// One line of a study summary.
#[derive(Clone, Debug)]
pub struct StudyRow {
    pub label: String,
    pub max_newton: usize,
    pub avg_newton: f64,
    pub mean_fgmres: f64,
    pub aborted: Option<String>,
}

/// Runs every member of a study; each writes its CSV into its own
/// subdirectory when `base.output_dir` is set, plus a `summary.csv`.
pub fn run_study(kind: StudyKind, base: &RunConfig) -> Result<Vec<(StudyRow, RunStats)>> {
    let mut out = Vec::new();
    for (label, mut cfg) in study_runs(kind, base) {
        cfg.output_dir = base.output_dir.as_ref().map(|d| d.join(kind.name()).join(&label));
        log::info!("study {}: {label}", kind.name());
        let stats = run(&cfg)?;
        let row = StudyRow {
            label,
            max_newton: stats.max_newton(),
            avg_newton: stats.avg_newton(),
            mean_fgmres: stats.mean_fgmres(1, usize::MAX),
            aborted: stats.aborted.clone(),
        };
        out.push((row, stats));
    }
    if let Some(dir) = &base.output_dir {
        let rows: Vec<StudyRow> = out.iter().map(|(r, _)| r.clone()).collect();
        iohub::write_study_summary(&rows, &dir.join(kind.name()).join("summary.csv"))?;
    }
    Ok(out)
}

/// Mode label used in outputs.
pub fn solver_label(s: &LinearSolver) -> &'static str {
    match s {
        LinearSolver::Direct => "direct",
        LinearSolver::Krylov(c) => match c.mode {
            PrecondMode::BlockTriangular => "block-triangular",
            PrecondMode::BaselineDiagonal => "baseline",
        },
    }
}

pub fn default_lambda_kind() -> MassKind {
    NewtonConfig::default().lambda
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}
