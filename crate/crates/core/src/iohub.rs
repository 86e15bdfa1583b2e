//! File formats: Matrix Market, statistics CSV, legacy VTK, run configs and
//! saved Newton systems.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::assembly::{FeSpace, MassKind, PressureOps};
use crate::driver::{LinearSolver, RunConfig, RunStats, StudyKind, StudyRow};
use crate::error::{Error, Result};
use crate::model::{BlockSystem, PhysParams, State};
use crate::multilevel::ApproxSpec;
use crate::precond::{NsSchurSign, PrecondConfig, SubSolvers};
use crate::sparse::SparseMat;
use crate::spectra::SpectraRow;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, s: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

// ---------------------------------------------------------------- Matrix Market

pub fn matrix_market_string(m: &SparseMat) -> String {
    let mut s = String::with_capacity(40 * m.nnz() + 64);
    s.push_str("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(s, "{} {} {}", m.nrows(), m.ncols(), m.nnz());
    for (i, j, v) in m.iter() {
        let _ = writeln!(s, "{} {} {:.16e}", i + 1, j + 1, v);
    }
    s
}

pub fn write_matrix_market(m: &SparseMat, path: &Path) -> Result<()> {
    write(path, &matrix_market_string(m))
}

/// Content lines of a Matrix Market file as `(line number, text)`, after the
/// banner and comments.
fn mm_lines<'a>(path: &Path, text: &'a str, kind: &str) -> Result<(bool, Vec<(usize, &'a str)>)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, banner) = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let words: Vec<String> = banner.split_whitespace().map(|w| w.to_ascii_lowercase()).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(parse_err(path, 1, "missing %%MatrixMarket matrix banner"));
    }
    if words[2] != kind {
        return Err(parse_err(path, 1, format!("expected {kind} format, found {}", words[2])));
    }
    if words[3] != "real" && words[3] != "integer" {
        return Err(parse_err(path, 1, format!("unsupported field `{}`", words[3])));
    }
    let symmetric = match words[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_err(path, 1, format!("unsupported symmetry `{other}`"))),
    };
    let rest = lines
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('%')
        })
        .collect();
    Ok((symmetric, rest))
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, tok: Option<&str>, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| parse_err(path, line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| parse_err(path, line, format!("invalid {what} `{tok}`")))
}

pub fn parse_matrix_market(text: &str, path: &Path) -> Result<SparseMat> {
    let (symmetric, lines) = mm_lines(path, text, "coordinate")?;
    let mut it = lines.into_iter();
    let (hl, header) = it.next().ok_or_else(|| parse_err(path, 2, "missing size line"))?;
    let mut h = header.split_whitespace();
    let nrows: usize = field(path, hl, h.next(), "row count")?;
    let ncols: usize = field(path, hl, h.next(), "column count")?;
    let nnz: usize = field(path, hl, h.next(), "entry count")?;
    if h.next().is_some() {
        return Err(parse_err(path, hl, "trailing data on size line"));
    }
    let mut entries = Vec::with_capacity(if symmetric { 2 * nnz } else { nnz });
    let mut seen = 0;
    for (ln, l) in it {
        seen += 1;
        if seen > nnz {
            return Err(parse_err(path, ln, format!("more than {nnz} entries")));
        }
        let mut t = l.split_whitespace();
        let i: usize = field(path, ln, t.next(), "row index")?;
        let j: usize = field(path, ln, t.next(), "column index")?;
        let v: f64 = field(path, ln, t.next(), "value")?;
        if t.next().is_some() {
            return Err(parse_err(path, ln, "trailing data"));
        }
        if i == 0 || j == 0 || i > nrows || j > ncols {
            return Err(parse_err(path, ln, format!("index ({i}, {j}) out of range for {nrows}x{ncols}")));
        }
        entries.push((i - 1, j - 1, v));
        if symmetric && i != j {
            entries.push((j - 1, i - 1, v));
        }
    }
    if seen != nnz {
        return Err(parse_err(path, text.lines().count(), format!("expected {nnz} entries, found {seen}")));
    }
    Ok(SparseMat::from_triplets(nrows, ncols, entries))
}

pub fn read_matrix_market(path: &Path) -> Result<SparseMat> {
    parse_matrix_market(&read(path)?, path)
}

pub fn vector_market_string(v: &[f64]) -> String {
    let mut s = String::with_capacity(25 * v.len() + 64);
    s.push_str("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(s, "{} 1", v.len());
    for x in v {
        let _ = writeln!(s, "{x:.16e}");
    }
    s
}

pub fn write_vector_market(v: &[f64], path: &Path) -> Result<()> {
    write(path, &vector_market_string(v))
}

pub fn parse_vector_market(text: &str, path: &Path) -> Result<Vec<f64>> {
    let (_, lines) = mm_lines(path, text, "array")?;
    let mut it = lines.into_iter();
    let (hl, header) = it.next().ok_or_else(|| parse_err(path, 2, "missing size line"))?;
    let mut h = header.split_whitespace();
    let n: usize = field(path, hl, h.next(), "row count")?;
    let c: usize = field(path, hl, h.next(), "column count")?;
    if c != 1 {
        return Err(parse_err(path, hl, format!("expected one column, found {c}")));
    }
    let mut v = Vec::with_capacity(n);
    for (ln, l) in it {
        if v.len() == n {
            return Err(parse_err(path, ln, format!("more than {n} values")));
        }
        let mut t = l.split_whitespace();
        v.push(field(path, ln, t.next(), "value")?);
        if t.next().is_some() {
            return Err(parse_err(path, ln, "trailing data"));
        }
    }
    if v.len() != n {
        return Err(parse_err(path, text.lines().count(), format!("expected {n} values, found {}", v.len())));
    }
    Ok(v)
}

pub fn read_vector_market(path: &Path) -> Result<Vec<f64>> {
    parse_vector_market(&read(path)?, path)
}

// ---------------------------------------------------------------- saved systems

const SYSTEM_BLOCKS: [&str; 10] = ["A", "B", "U", "CT", "M1", "K1", "Lambda", "Mp", "Kp", "Ap"];

/// Writes the blocks of a Newton system as Matrix Market files in `dir`,
/// with the right-hand side in `rhs.mtx` and the scalars in `system.txt`.
pub fn save_system(sys: &BlockSystem, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mats = [
        &sys.a,
        &sys.b,
        &sys.u,
        &sys.ct,
        &sys.m1,
        &sys.k1,
        &sys.lambda,
        &sys.pressure.mp,
        &sys.pressure.kp,
        &sys.pressure.ap,
    ];
    for (name, m) in SYSTEM_BLOCKS.iter().zip(mats) {
        write_matrix_market(m, &dir.join(format!("{name}.mtx")))?;
    }
    write_vector_market(&sys.rhs, &dir.join("rhs.mtx"))?;
    let meta = format!(
        "sigma = {:.16e}\neps = {:.16e}\ntau = {:.16e}\nb = {:.16e}\n",
        sys.sigma, sys.eps, sys.tau, sys.mobility
    );
    write(&dir.join("system.txt"), &meta)
}

pub fn load_system(dir: &Path) -> Result<BlockSystem> {
    let mut mats = Vec::with_capacity(SYSTEM_BLOCKS.len());
    for name in SYSTEM_BLOCKS {
        mats.push(read_matrix_market(&dir.join(format!("{name}.mtx")))?);
    }
    let rhs = read_vector_market(&dir.join("rhs.mtx"))?;
    let meta_path = dir.join("system.txt");
    let kv = parse_key_values(&read(&meta_path)?, &meta_path)?;
    let mut params = PhysParams::benchmark1();
    let (mut sigma, mut eps, mut tau, mut b) = (None, None, None, None);
    for (line, k, v) in kv {
        let x: f64 = v.parse().map_err(|_| parse_err(&meta_path, line, format!("invalid number `{v}`")))?;
        match k.as_str() {
            "sigma" => sigma = Some(x),
            "eps" => eps = Some(x),
            "tau" => tau = Some(x),
            "b" => b = Some(x),
            _ => return Err(Error::UnknownConfigKey(k)),
        }
    }
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| parse_err(&meta_path, 0, format!("missing `{name}`")));
    params.sigma = need(sigma, "sigma")?;
    params.eps = need(eps, "eps")?;
    params.tau = need(tau, "tau")?;
    params.b = need(b, "b")?;
    let mut it = mats.into_iter();
    let mut next = || it.next().expect("block count");
    let (a, bm, u, ct, m1, k1, lambda) = (next(), next(), next(), next(), next(), next(), next());
    let pressure = PressureOps {
        mp: next(),
        kp: next(),
        ap: next(),
    };
    BlockSystem::from_parts(a, bm, u, ct, m1, k1, lambda, pressure, rhs, &params)
}

// ---------------------------------------------------------------- CSV output

pub const STATS_HEADER: &str = "step,time,newton_iters,mean_fgmres,energy,dissipation,cfl_max";

pub fn stats_csv_string(stats: &RunStats) -> String {
    let mut s = String::from(STATS_HEADER);
    s.push('\n');
    for r in &stats.records {
        let _ = writeln!(
            s,
            "{},{:.10e},{},{:.4},{:.16e},{:.16e},{:.6e}",
            r.step,
            r.time,
            r.newton_iters,
            r.mean_fgmres,
            r.energy(),
            r.dissipation(),
            r.cfl_max
        );
    }
    s
}

pub fn write_stats_csv(stats: &RunStats, path: &Path) -> Result<()> {
    write(path, &stats_csv_string(stats))
}

pub fn write_study_summary(rows: &[StudyRow], path: &Path) -> Result<()> {
    let mut s = String::from("run,max_newton,avg_newton,mean_fgmres,aborted\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:.3},{:.3},{}",
            r.label,
            r.max_newton,
            r.avg_newton,
            r.mean_fgmres,
            r.aborted.as_deref().unwrap_or("").replace(',', ";")
        );
    }
    write(path, &s)
}

pub const SPECTRA_HEADER: &str = "alpha,beta,rho_lambda_tilde,measured_radius,bound,margin";

pub fn spectra_csv_string(rows: &[SpectraRow]) -> String {
    let mut s = String::from(SPECTRA_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.alpha, r.beta, r.rho_lambda_tilde, r.measured_radius, r.bound, r.margin
        );
    }
    s
}

pub fn write_spectra_csv(rows: &[SpectraRow], path: &Path) -> Result<()> {
    write(path, &spectra_csv_string(rows))
}

// ---------------------------------------------------------------- VTK

/// Legacy ASCII VTK on the vertex mesh: velocity sampled at the vertices,
/// pressure, phase field and chemical potential.
pub fn vtk_string(space: &FeSpace, state: &State, time: f64) -> String {
    let mesh = &space.mesh;
    let nv = mesh.vertices.len();
    let nt = mesh.triangles.len();
    let mut s = String::with_capacity(100 * nv);
    s.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(s, "chns state t={time:.10e}");
    s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {nv} double");
    for x in &mesh.vertices {
        let _ = writeln!(s, "{:.16e} {:.16e} 0", x[0], x[1]);
    }
    let _ = writeln!(s, "CELLS {nt} {}", 4 * nt);
    for t in &mesh.triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        s.push_str("5\n");
    }
    let _ = writeln!(s, "POINT_DATA {nv}");
    s.push_str("VECTORS velocity double\n");
    for u in space.velocity_at_vertices(&state.v) {
        let _ = writeln!(s, "{:.16e} {:.16e} 0", u[0], u[1]);
    }
    for (name, f) in [("pressure", &state.p), ("phi", &state.phi), ("mu", &state.mu)] {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for x in f.iter() {
            let _ = writeln!(s, "{x:.16e}");
        }
    }
    s
}

pub fn write_vtk(space: &FeSpace, state: &State, time: f64, path: &Path) -> Result<()> {
    write(path, &vtk_string(space, state, time))
}

// ---------------------------------------------------------------- config

/// Splits `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str, path: &Path) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| parse_err(path, i + 1, format!("expected `key = value`, got `{line}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(parse_err(path, i + 1, "empty key"));
        }
        out.push((i + 1, k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Every key accepted by [`parse_config`].
pub const CONFIG_KEYS: &[&str] = &[
    "preset",
    "nx",
    "ny",
    "width",
    "height",
    "rho1",
    "rho2",
    "eta1",
    "eta2",
    "sigma",
    "eps",
    "tau",
    "b",
    "s",
    "gx",
    "gy",
    "steps",
    "newton_tol_abs",
    "newton_tol_rel",
    "newton_maxit",
    "lambda",
    "solver",
    "ns_sign",
    "subsolvers",
    "inner_tol",
    "outer_tol",
    "outer_maxit",
    "output_dir",
    "vtk_every",
    "capture_steps",
    "study",
];

/// Parses a run configuration. A `preset` line is applied first wherever it
/// appears; every other key overrides it. Unknown keys are rejected.
pub fn parse_config(text: &str, path: &Path) -> Result<RunConfig> {
    let kv = parse_key_values(text, path)?;
    let mut cfg = RunConfig::default();
    let mut seen = std::collections::HashSet::new();
    for (line, k, v) in &kv {
        if !CONFIG_KEYS.contains(&k.as_str()) {
            return Err(Error::UnknownConfigKey(k.clone()));
        }
        if !seen.insert(k.clone()) {
            return Err(parse_err(path, *line, format!("duplicate key `{k}`")));
        }
        if k == "preset" {
            cfg = match v.as_str() {
                "benchmark1" => RunConfig::benchmark1(),
                "benchmark2" => RunConfig::benchmark2(),
                _ => return Err(parse_err(path, *line, format!("unknown preset `{v}`"))),
            };
        }
    }
    // solver first so that later tolerance keys apply to it
    let order = |k: &str| match k {
        "preset" => 0,
        "solver" => 1,
        "subsolvers" => 2,
        _ => 3,
    };
    let mut kv = kv;
    kv.sort_by_key(|(l, k, _)| (order(k), *l));
    for (line, k, v) in kv {
        apply_key(&mut cfg, &k, &v).map_err(|msg| parse_err(path, line, msg))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Applies one `key=value` override on top of an existing configuration.
pub fn set_config_key(cfg: &mut RunConfig, key: &str, value: &str) -> Result<()> {
    if !CONFIG_KEYS.contains(&key) {
        return Err(Error::UnknownConfigKey(key.to_string()));
    }
    if key == "preset" {
        return Err(Error::invalid("`preset` can only be set in a config file"));
    }
    apply_key(cfg, key, value.trim()).map_err(Error::InvalidArgument)?;
    cfg.validate()
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    parse_config(&read(path)?, path)
}

fn num<T: std::str::FromStr>(k: &str, v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("invalid value `{v}` for `{k}`"))
}

fn krylov_mut<'a>(cfg: &'a mut RunConfig, k: &str) -> std::result::Result<&'a mut PrecondConfig, String> {
    match &mut cfg.solver {
        LinearSolver::Krylov(p) => Ok(p),
        LinearSolver::Direct => Err(format!("`{k}` needs a Krylov solver")),
    }
}

fn apply_key(cfg: &mut RunConfig, k: &str, v: &str) -> std::result::Result<(), String> {
    let p = &mut cfg.params;
    match k {
        "preset" => {}
        "nx" => cfg.nx = num(k, v)?,
        "ny" => cfg.ny = num(k, v)?,
        "width" => cfg.width = num(k, v)?,
        "height" => cfg.height = num(k, v)?,
        "rho1" => p.rho1 = num(k, v)?,
        "rho2" => p.rho2 = num(k, v)?,
        "eta1" => p.eta1 = num(k, v)?,
        "eta2" => p.eta2 = num(k, v)?,
        "sigma" => p.sigma = num(k, v)?,
        "eps" => p.eps = num(k, v)?,
        "tau" => p.tau = num(k, v)?,
        "b" => p.b = num(k, v)?,
        "s" => p.s = num(k, v)?,
        "gx" => p.g[0] = num(k, v)?,
        "gy" => p.g[1] = num(k, v)?,
        "steps" => cfg.steps = num(k, v)?,
        "newton_tol_abs" => cfg.newton.tol_abs = num(k, v)?,
        "newton_tol_rel" => cfg.newton.tol_rel = num(k, v)?,
        "newton_maxit" => cfg.newton.maxit = num(k, v)?,
        "lambda" => {
            cfg.newton.lambda = match v {
                "lumped" => MassKind::Lumped,
                "consistent" => MassKind::Consistent,
                _ => return Err(format!("`lambda` must be lumped or consistent, got `{v}`")),
            }
        }
        "solver" => {
            let keep_subs = match &cfg.solver {
                LinearSolver::Krylov(p) => Some(p.subs),
                LinearSolver::Direct => None,
            };
            cfg.solver = match v {
                "direct" => LinearSolver::Direct,
                "block-triangular" => LinearSolver::block_triangular(),
                "baseline" => LinearSolver::baseline(),
                _ => return Err(format!("`solver` must be direct, block-triangular or baseline, got `{v}`")),
            };
            if let (LinearSolver::Krylov(p), Some(s)) = (&mut cfg.solver, keep_subs) {
                p.subs = s;
            }
        }
        "ns_sign" => {
            krylov_mut(cfg, k)?.ns_sign = match v {
                "consistent" => NsSchurSign::Consistent,
                "flipped" => NsSchurSign::Flipped,
                _ => return Err(format!("`ns_sign` must be consistent or flipped, got `{v}`")),
            }
        }
        "subsolvers" => {
            krylov_mut(cfg, k)?.subs = match v {
                "direct" => SubSolvers::direct(),
                "multilevel" => SubSolvers::multilevel(),
                _ => return Err(format!("`subsolvers` must be direct or multilevel, got `{v}`")),
            }
        }
        "inner_tol" => krylov_mut(cfg, k)?.inner.tol_rel = num(k, v)?,
        "outer_tol" => {
            let t: f64 = num(k, v)?;
            let pc = krylov_mut(cfg, k)?;
            pc.outer.tol_rel = t;
            pc.outer.tol_abs = t;
        }
        "outer_maxit" => krylov_mut(cfg, k)?.outer.maxit = num(k, v)?,
        "output_dir" => cfg.output_dir = Some(v.into()),
        "vtk_every" => cfg.vtk_every = num(k, v)?,
        "capture_steps" => {
            cfg.capture_steps = v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| num(k, s))
                .collect::<std::result::Result<_, _>>()?
        }
        "study" => cfg.study = Some(StudyKind::parse(v).map_err(|e| e.to_string())?),
        _ => return Err(format!("unknown key `{k}`")),
    }
    Ok(())
}

/// Tolerance of the `S1`, `S2` sub-solves, if they are iterative.
pub fn s_tolerance(cfg: &RunConfig) -> Option<f64> {
    match &cfg.solver {
        LinearSolver::Krylov(p) => approx_tol(&p.subs.s1),
        LinearSolver::Direct => None,
    }
}

fn approx_tol(a: &ApproxSpec) -> Option<f64> {
    (a.method != crate::multilevel::Method::Direct).then_some(a.tol)
}
