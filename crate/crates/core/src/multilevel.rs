//! Approximate inverses for the elliptic sub-blocks.
//!
//! [`ApproxInverse`] wraps one of three methods behind a common contract:
//! `apply(b)` returns `y` with `||b - A y|| <= tol ||b||` or records a failure.
//! The multilevel method is smoothed aggregation with damped-Jacobi smoothing.

use std::cell::Cell;

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::MatMut;
use rand::{rngs::StdRng, Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::krylov::{pcg_jacobi, DirectSolver, KrylovConfig, LinOp};
use crate::sparse::{norm2, SparseMat, TripletBuilder};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// V-cycles as a stationary iteration. With `cycles = Some(k)` exactly `k`
    /// cycles are applied (a fixed linear operator); with `None` cycles repeat
    /// until the tolerance is met.
    Multilevel { cycles: Option<usize> },
    CgJacobi,
    Direct,
}

#[derive(Clone, Copy, Debug)]
pub struct ApproxSpec {
    pub method: Method,
    pub tol: f64,
    pub maxit: usize,
}

impl ApproxSpec {
    pub fn direct() -> Self {
        Self {
            method: Method::Direct,
            tol: 0.0,
            maxit: 1,
        }
    }

    pub fn cg_jacobi(tol: f64, maxit: usize) -> Self {
        Self {
            method: Method::CgJacobi,
            tol,
            maxit,
        }
    }

    pub fn multilevel(tol: f64, maxit: usize) -> Self {
        Self {
            method: Method::Multilevel { cycles: None },
            tol,
            maxit,
        }
    }

    pub fn cycles(k: usize) -> Self {
        Self {
            method: Method::Multilevel { cycles: Some(k) },
            tol: 0.0,
            maxit: k,
        }
    }
}

/// Outcome of one application.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ApplyInfo {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

enum Backend {
    Direct(DirectSolver),
    Cg(SparseMat),
    Amg(SparseMat, Hierarchy, Option<usize>),
}

pub struct ApproxInverse {
    n: usize,
    backend: Backend,
    tol: f64,
    maxit: usize,
    method: Method,
    downgraded: bool,
    applications: Cell<usize>,
    total_iterations: Cell<usize>,
    failures: Cell<usize>,
}

impl std::fmt::Debug for ApproxInverse {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ApproxInverse")
            .field("n", &self.n)
            .field("method", &self.method)
            .field("tol", &self.tol)
            .field("downgraded", &self.downgraded)
            .finish()
    }
}

/// Builds the approximate inverse and runs a self-check solve of
/// `A y = A x_random`. A multilevel setup that fails the check (or fails to
/// build) is replaced by a direct solve and a warning is logged.
pub fn make_approx_inverse(a: &SparseMat, spec: &ApproxSpec) -> Result<ApproxInverse> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "approximate inverse (square)",
            expected: n,
            got: a.ncols(),
        });
    }
    if spec.maxit == 0 {
        return Err(Error::invalid("approximate inverse needs maxit >= 1"));
    }
    let direct = |downgraded| -> Result<ApproxInverse> {
        Ok(ApproxInverse::with_backend(
            n,
            Backend::Direct(DirectSolver::new(a)?),
            ApproxSpec::direct(),
            downgraded,
        ))
    };
    match spec.method {
        Method::Direct => direct(false),
        Method::CgJacobi => {
            let inv = ApproxInverse::with_backend(n, Backend::Cg(a.clone()), *spec, false);
            inv.self_check(a)?;
            Ok(inv)
        }
        Method::Multilevel { cycles } => {
            let built = Hierarchy::build(a, &AmgOptions::default())
                .map(|h| ApproxInverse::with_backend(n, Backend::Amg(a.clone(), h, cycles), *spec, false));
            match built {
                Ok(inv) => match inv.self_check(a) {
                    Ok(()) => Ok(inv),
                    Err(e) => {
                        log::warn!("multilevel self-check failed ({e}); falling back to direct solve");
                        direct(true)
                    }
                },
                Err(e) => {
                    log::warn!("multilevel setup failed ({e}); falling back to direct solve");
                    direct(true)
                }
            }
        }
    }
}

impl ApproxInverse {
    fn with_backend(n: usize, backend: Backend, spec: ApproxSpec, downgraded: bool) -> Self {
        Self {
            n,
            backend,
            tol: spec.tol,
            maxit: spec.maxit,
            method: spec.method,
            downgraded,
            applications: Cell::new(0),
            total_iterations: Cell::new(0),
            failures: Cell::new(0),
        }
    }

    fn self_check(&self, a: &SparseMat) -> Result<()> {
        let mut rng = StdRng::seed_from_u64(0x5eed);
        let x: Vec<f64> = (0..self.n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = a.mul(&x);
        let (_, info) = self.apply_checked(&b)?;
        let ok = match self.method {
            Method::Multilevel { cycles: Some(_) } => info.relative_residual < 1.0,
            _ => info.converged,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::NonConvergence {
                what: "approximate inverse self-check",
                iterations: info.iterations,
                last: info.relative_residual,
                residuals: vec![info.relative_residual],
            })
        }
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// True if a multilevel request was replaced by a direct solve.
    pub fn downgraded(&self) -> bool {
        self.downgraded
    }

    pub fn failures(&self) -> usize {
        self.failures.get()
    }

    pub fn mean_iterations(&self) -> f64 {
        let a = self.applications.get();
        if a == 0 {
            0.0
        } else {
            self.total_iterations.get() as f64 / a as f64
        }
    }

    /// Applies the approximate inverse and reports how well the contract was met.
    pub fn apply_checked(&self, b: &[f64]) -> Result<(Vec<f64>, ApplyInfo)> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch {
                context: "approximate inverse rhs",
                expected: self.n,
                got: b.len(),
            });
        }
        let bnorm = norm2(b);
        let (y, info) = if bnorm == 0.0 {
            (
                vec![0.0; self.n],
                ApplyInfo {
                    iterations: 0,
                    relative_residual: 0.0,
                    converged: true,
                },
            )
        } else {
            match &self.backend {
                Backend::Direct(s) => (
                    s.solve(b),
                    ApplyInfo {
                        iterations: 1,
                        relative_residual: 0.0,
                        converged: true,
                    },
                ),
                Backend::Cg(a) => {
                    let (y, rep) = pcg_jacobi(a, b, &KrylovConfig::relative(self.tol, 1, self.maxit))?;
                    let rel = rep.final_residual() / bnorm;
                    (
                        y,
                        ApplyInfo {
                            iterations: rep.iterations,
                            relative_residual: rel,
                            converged: rep.converged,
                        },
                    )
                }
                Backend::Amg(a, h, cycles) => {
                    let limit = cycles.unwrap_or(self.maxit);
                    let target = if cycles.is_some() { 0.0 } else { self.tol };
                    let mut y = vec![0.0; self.n];
                    let mut r = b.to_vec();
                    let mut rel = 1.0;
                    let mut it = 0;
                    while it < limit && (cycles.is_some() || rel > target) {
                        let e = h.vcycle(0, &r);
                        y.iter_mut().zip(&e).for_each(|(yi, ei)| *yi += ei);
                        let ay = a.mul(&y);
                        r.iter_mut().zip(b.iter().zip(&ay)).for_each(|(ri, (bi, ai))| *ri = bi - ai);
                        rel = norm2(&r) / bnorm;
                        it += 1;
                    }
                    let converged = cycles.is_some() || rel <= target;
                    (
                        y,
                        ApplyInfo {
                            iterations: it,
                            relative_residual: rel,
                            converged,
                        },
                    )
                }
            }
        };
        self.applications.set(self.applications.get() + 1);
        self.total_iterations.set(self.total_iterations.get() + info.iterations);
        if !info.converged {
            self.failures.set(self.failures.get() + 1);
        }
        Ok((y, info))
    }
}

impl LinOp for ApproxInverse {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (v, _) = self.apply_checked(x).expect("approximate inverse dimension checked by caller");
        y.copy_from_slice(&v);
    }

    fn is_constant(&self) -> bool {
        matches!(self.method, Method::Direct | Method::Multilevel { cycles: Some(_) })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AmgOptions {
    pub strength: f64,
    pub max_levels: usize,
    pub coarse_size: usize,
    pub pre_sweeps: usize,
    pub post_sweeps: usize,
}

impl Default for AmgOptions {
    fn default() -> Self {
        Self {
            strength: 0.08,
            max_levels: 10,
            coarse_size: 60,
            pre_sweeps: 2,
            post_sweeps: 2,
        }
    }
}

struct Level {
    a: SparseMat,
    dinv: Vec<f64>,
    omega: f64,
    p: SparseMat,
    r: SparseMat,
}

/// Smoothed-aggregation hierarchy.
pub struct Hierarchy {
    levels: Vec<Level>,
    coarse: PartialPivLu<f64>,
    coarse_n: usize,
    opts: AmgOptions,
}

/// Upper bound for the spectral radius of `D^-1 A` (row-sum norm).
fn jacobi_radius_bound(a: &SparseMat, dinv: &[f64]) -> f64 {
    (0..a.nrows())
        .map(|i| a.row(i).1.iter().map(|v| v.abs()).sum::<f64>() * dinv[i].abs())
        .fold(0.0, f64::max)
}

/// Greedy three-pass aggregation on the strength graph.
pub fn aggregate(a: &SparseMat, theta: f64) -> Vec<usize> {
    let n = a.nrows();
    let d = a.diagonal();
    let strong: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let (cols, vals) = a.row(i);
            cols.iter()
                .zip(vals)
                .filter(|&(&j, &v)| j != i && v.abs() >= theta * (d[i] * d[j]).abs().sqrt())
                .map(|(&j, _)| j)
                .collect()
        })
        .collect();
    const NONE: usize = usize::MAX;
    let mut agg = vec![NONE; n];
    let mut count = 0;
    for i in 0..n {
        if agg[i] == NONE && strong[i].iter().all(|&j| agg[j] == NONE) {
            agg[i] = count;
            for &j in &strong[i] {
                agg[j] = count;
            }
            count += 1;
        }
    }
    let pass1 = agg.clone();
    for i in 0..n {
        if agg[i] == NONE {
            if let Some(&j) = strong[i].iter().find(|&&j| pass1[j] != NONE) {
                agg[i] = pass1[j];
            }
        }
    }
    for i in 0..n {
        if agg[i] == NONE {
            agg[i] = count;
            for &j in &strong[i] {
                if agg[j] == NONE {
                    agg[j] = count;
                }
            }
            count += 1;
        }
    }
    agg
}

impl Hierarchy {
    pub fn build(a: &SparseMat, opts: &AmgOptions) -> Result<Self> {
        let mut levels = Vec::new();
        let mut cur = a.clone();
        while cur.nrows() > opts.coarse_size && levels.len() + 1 < opts.max_levels {
            let n = cur.nrows();
            let d = cur.diagonal();
            if d.contains(&0.0) {
                return Err(Error::Singular("zero diagonal entry in multilevel setup".into()));
            }
            let dinv: Vec<f64> = d.iter().map(|v| 1.0 / v).collect();
            let omega = 4.0 / (3.0 * jacobi_radius_bound(&cur, &dinv));
            let agg = aggregate(&cur, opts.strength);
            let nc = agg.iter().max().map_or(0, |m| m + 1);
            if nc == 0 || nc as f64 > 0.9 * n as f64 {
                break;
            }
            let mut tb = TripletBuilder::with_capacity(n, nc, n);
            for (i, &g) in agg.iter().enumerate() {
                tb.push(i, g, 1.0);
            }
            let pt = tb.build();
            // P = (I - omega D^-1 A) P_t
            let jac = SparseMat::from_diagonal(&dinv.iter().map(|v| omega * v).collect::<Vec<_>>()).matmul(&cur);
            let p = pt.lin_comb(1.0, &jac.matmul(&pt), -1.0);
            let r = p.transpose();
            let coarse = r.matmul(&cur).matmul(&p);
            levels.push(Level {
                a: cur,
                dinv,
                omega,
                p,
                r,
            });
            cur = coarse;
        }
        let coarse_n = cur.nrows();
        let dense = cur.to_dense();
        let lu = dense.partial_piv_lu();
        let mut probe = vec![1.0; coarse_n];
        lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut probe, coarse_n, 1));
        if probe.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("coarse-level matrix is singular".into()));
        }
        Ok(Self {
            levels,
            coarse: lu,
            coarse_n,
            opts: *opts,
        })
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len() + 1
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.levels.iter().map(|l| l.a.nrows()).collect();
        s.push(self.coarse_n);
        s
    }

    fn smooth(l: &Level, b: &[f64], x: &mut [f64], sweeps: usize) {
        let mut ax = vec![0.0; x.len()];
        for _ in 0..sweeps {
            l.a.mul_vec(x, &mut ax);
            for i in 0..x.len() {
                x[i] += l.omega * l.dinv[i] * (b[i] - ax[i]);
            }
        }
    }

    /// One V-cycle for `A e = r` from a zero initial guess.
    pub fn vcycle(&self, lvl: usize, r: &[f64]) -> Vec<f64> {
        if lvl == self.levels.len() {
            let mut x = r.to_vec();
            self.coarse
                .solve_in_place(MatMut::from_column_major_slice_mut(&mut x, self.coarse_n, 1));
            return x;
        }
        let l = &self.levels[lvl];
        let mut x = vec![0.0; r.len()];
        Self::smooth(l, r, &mut x, self.opts.pre_sweeps);
        let ax = l.a.mul(&x);
        let res: Vec<f64> = r.iter().zip(&ax).map(|(a, b)| a - b).collect();
        let ec = self.vcycle(lvl + 1, &l.r.mul(&res));
        l.p.mul_vec_add(1.0, &ec, &mut x);
        Self::smooth(l, r, &mut x, self.opts.post_sweeps);
        x
    }
}
