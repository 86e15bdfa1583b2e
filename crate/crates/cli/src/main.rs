use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::{rngs::StdRng, Rng, SeedableRng};

use chns_core::driver::{run, run_study, solver_label, StudyKind};
use chns_core::iohub::{load_system, read_config, set_config_key, write_spectra_csv};
use chns_core::precond::{solve_preconditioned, OuterPrecond, PrecondConfig};
use chns_core::spectra::{analyze, random_active_phi, SpectraRow};
use chns_core::{MassKind, RunConfig};

#[derive(Parser)]
#[command(name = "chns", version, about = "Cahn-Hilliard Navier-Stokes two-phase flow solver")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one simulation.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run a preset parameter sweep.
    Study {
        /// vary-all, vary-sigma, vary-Re, vary-mobility, vary-penalty or
        /// benchmark-2-topology. Defaults to the config's `study` key.
        kind: Option<String>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Sample the spectral bound of the Cahn-Hilliard block on random active sets.
    Spectrum {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Number of random active sets.
        #[arg(long, default_value_t = 10)]
        samples: usize,
        /// Expected fraction of active nodes per sample.
        #[arg(long, default_value_t = 0.3)]
        fraction: f64,
        #[arg(long, value_enum, default_value_t = Mass::Lumped)]
        mass: Mass,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV output (stdout if omitted).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Compare the block-triangular and baseline preconditioners on saved systems.
    PrecondCompare {
        /// Directories written by `run` with `capture_steps`.
        #[arg(required = true)]
        systems: Vec<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// key = value configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set nx=32`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (overrides `output_dir`).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mass {
    Lumped,
    Consistent,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => read_config(p).with_context(|| format!("reading {}", p.display()))?,
            None => RunConfig::default(),
        };
        for o in &self.overrides {
            let (k, v) = o.split_once('=').with_context(|| format!("override `{o}` is not KEY=VALUE"))?;
            set_config_key(&mut cfg, k.trim(), v)?;
        }
        if let Some(o) = &self.output {
            cfg.output_dir = Some(o.clone());
        }
        Ok(cfg)
    }
}

fn cmd_run(cfg: RunConfig) -> Result<()> {
    let st = run(&cfg)?;
    println!(
        "{} steps ({}), Newton max {} avg {:.2}, mean FGMRES {:.1}",
        st.records.len(),
        solver_label(&cfg.solver),
        st.max_newton(),
        st.avg_newton(),
        st.mean_fgmres(1, usize::MAX)
    );
    if let Some(r) = st.records.last() {
        println!("final energy {:.6e}, max CFL {:.3e}", r.energy(), st.records.iter().map(|r| r.cfl_max).fold(0.0, f64::max));
    }
    if let Some(dir) = &cfg.output_dir {
        println!("statistics written to {}", dir.join("stats.csv").display());
    }
    if let Some(why) = st.aborted {
        bail!("run stopped early: {why}");
    }
    Ok(())
}

fn cmd_study(kind: Option<String>, cfg: RunConfig) -> Result<()> {
    let kind = match (kind, cfg.study) {
        (Some(k), _) => StudyKind::parse(&k)?,
        (None, Some(k)) => k,
        (None, None) => bail!("no study given on the command line or in the config"),
    };
    println!("run,max_newton,avg_newton,mean_fgmres,aborted");
    for (row, _) in run_study(kind, &cfg)? {
        println!(
            "{},{},{:.2},{:.2},{}",
            row.label,
            row.max_newton,
            row.avg_newton,
            row.mean_fgmres,
            row.aborted.unwrap_or_default()
        );
    }
    Ok(())
}

fn cmd_spectrum(cfg: RunConfig, samples: usize, fraction: f64, mass: Mass, seed: u64, csv: Option<&Path>) -> Result<()> {
    let space = cfg.space()?;
    let kind = match mass {
        Mass::Lumped => MassKind::Lumped,
        Mass::Consistent => MassKind::Consistent,
    };
    let mut rng = StdRng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(samples);
    let mut violations = 0;
    for _ in 0..samples {
        let f = (fraction * rng.random_range(0.5..1.5)).clamp(0.0, 1.0);
        let phi = random_active_phi(space.n1(), f, &mut rng);
        let rep = analyze(&space, &phi, &cfg.params, kind)?;
        if !rep.holds(1e-10) {
            violations += 1;
        }
        rows.push(SpectraRow::from(&rep));
    }
    match csv {
        Some(p) => write_spectra_csv(&rows, p)?,
        None => print!("{}", chns_core::iohub::spectra_csv_string(&rows)),
    }
    if violations > 0 {
        bail!("{violations} of {samples} samples exceed the bound");
    }
    Ok(())
}

fn cmd_compare(systems: &[PathBuf], cfg: &RunConfig) -> Result<()> {
    let triangular = match cfg.solver {
        chns_core::LinearSolver::Krylov(p) => p,
        chns_core::LinearSolver::Direct => PrecondConfig::default(),
    };
    let baseline = PrecondConfig {
        subs: triangular.subs,
        ..PrecondConfig::baseline()
    };
    println!("system,dim,block_triangular_outer,block_triangular_inner,baseline_outer");
    let mut wins = 0;
    for dir in systems {
        let sys = load_system(dir).with_context(|| format!("loading {}", dir.display()))?;
        let pt = OuterPrecond::new(&sys, &triangular)?;
        let (_, rt) = solve_preconditioned(&sys, &pt, &triangular.outer)?;
        let pb = OuterPrecond::new(&sys, &baseline)?;
        let (_, rb) = solve_preconditioned(&sys, &pb, &baseline.outer)?;
        if rt.iterations <= rb.iterations {
            wins += 1;
        }
        println!(
            "{},{},{}{},{},{}{}",
            dir.display(),
            sys.dim(),
            rt.iterations,
            if rt.converged { "" } else { "*" },
            pt.inner_iterations(),
            rb.iterations,
            if rb.converged { "" } else { "*" }
        );
    }
    eprintln!("block-triangular needed no more outer iterations on {wins} of {} systems", systems.len());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match cli.cmd {
        Cmd::Run { cfg } => cmd_run(cfg.load()?),
        Cmd::Study { kind, cfg } => cmd_study(kind, cfg.load()?),
        Cmd::Spectrum {
            cfg,
            samples,
            fraction,
            mass,
            seed,
            csv,
        } => cmd_spectrum(cfg.load()?, samples, fraction, mass, seed, csv.as_deref()),
        Cmd::PrecondCompare { systems, cfg } => cmd_compare(&systems, &cfg.load()?),
    }
}
