//! Preconditioners for the linearized block system.
//!
//! The unknowns are ordered `[v, p, mu, phi]`. The Navier-Stokes part is
//! handled by a block upper-triangular approximation with a
//! pressure-convection-diffusion (PCD) Schur complement. The Cahn-Hilliard
//! part is handled either by an inner GMRES on the approximate Schur system
//! `S_hat` (block-triangular mode) or by a direct solve of `A_CH` (the
//! block-diagonal baseline).

use std::cell::Cell;
use std::rc::Rc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::krylov::{fgmres, gmres, DirectSolver, KrylovConfig, LinOp, SolveReport};
use crate::model::{deflate_pressure, BlockSystem, LinearSolveStats, NewtonLinearSolver};
use crate::multilevel::{make_approx_inverse, ApproxInverse, ApproxSpec};
use crate::assembly::FeSpace;
use crate::sparse::{norm2, SparseMat};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrecondMode {
    /// Upper block-triangular: inner Schur solve for `(mu, phi)`, then NS.
    BlockTriangular,
    /// Block-diagonal baseline with a direct `A_CH` solve.
    BaselineDiagonal,
}

/// Sign of the PCD block in the NS approximation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NsSchurSign {
    /// `[A_hat B^T; 0 S_ns]` with `S_ns = -Kp Ap^-1 Mp`, which has the sign of
    /// the true Schur complement `-B A^-1 B^T`.
    Consistent,
    /// `[A_hat B^T; 0 -S_ns]`.
    Flipped,
}

/// Approximate-inverse settings for every elliptic sub-block.
#[derive(Clone, Copy, Debug)]
pub struct SubSolvers {
    pub a_hat: ApproxSpec,
    pub mp: ApproxSpec,
    pub kp: ApproxSpec,
    pub m1: ApproxSpec,
    pub s1: ApproxSpec,
    pub s2: ApproxSpec,
}

impl SubSolvers {
    pub fn direct() -> Self {
        let d = ApproxSpec::direct();
        Self {
            a_hat: d,
            mp: d,
            kp: d,
            m1: d,
            s1: d,
            s2: d,
        }
    }

    /// Iterative sub-solves with the per-block tolerances `1e-3` (Mp),
    /// `1e-2` (M1), `1e-5` (S1, S2) and two cycles for `A_hat`.
    pub fn multilevel() -> Self {
        Self {
            a_hat: ApproxSpec::cycles(2),
            mp: ApproxSpec::cg_jacobi(1e-3, 100),
            kp: ApproxSpec::multilevel(1e-5, 100),
            m1: ApproxSpec::cg_jacobi(1e-2, 100),
            s1: ApproxSpec::multilevel(1e-5, 100),
            s2: ApproxSpec::multilevel(1e-5, 100),
        }
    }

    pub fn with_s_tol(mut self, tol: f64) -> Self {
        self.s1.tol = tol;
        self.s2.tol = tol;
        self
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PrecondConfig {
    pub mode: PrecondMode,
    pub ns_sign: NsSchurSign,
    pub subs: SubSolvers,
    pub inner: KrylovConfig,
    pub outer: KrylovConfig,
}

impl Default for PrecondConfig {
    fn default() -> Self {
        Self {
            mode: PrecondMode::BlockTriangular,
            ns_sign: NsSchurSign::Consistent,
            subs: SubSolvers::direct(),
            inner: KrylovConfig::inner(),
            outer: KrylovConfig::outer(),
        }
    }
}

impl PrecondConfig {
    pub fn baseline() -> Self {
        Self {
            mode: PrecondMode::BaselineDiagonal,
            outer: KrylovConfig::baseline(),
            ..Self::default()
        }
    }
}

fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { context, expected, got })
    }
}

/// Applies `Kp^-1` on the mean-free subspace: the rhs is projected onto the
/// range of `Kp`, node 0 is pinned and the result is deflated.
struct PinnedLaplace {
    inv: ApproxInverse,
    weights: Vec<f64>,
}

impl PinnedLaplace {
    fn new(kp: &SparseMat, weights: &[f64], spec: &ApproxSpec) -> Result<Self> {
        let n = kp.nrows();
        if n == 0 {
            return Err(Error::invalid("empty pressure space"));
        }
        let mut mask = vec![false; n];
        mask[0] = true;
        let pinned = kp.constrain_symmetric(&mask, 1.0);
        let inv = make_approx_inverse(&pinned, spec)?;
        Ok(Self {
            inv,
            weights: weights.to_vec(),
        })
    }

    fn solve(&self, r: &[f64]) -> Result<Vec<f64>> {
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        let mut rc: Vec<f64> = r.iter().map(|ri| ri - mean).collect();
        rc[0] = 0.0;
        let (mut x, _) = self.inv.apply_checked(&rc)?;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Singular("pinned pressure Laplacian".into()));
        }
        deflate_pressure(&mut x, &self.weights);
        Ok(x)
    }
}

/// Block upper-triangular NS approximation `[A_hat B^T; 0 S_ns]` with
/// `S_ns^-1 = -Mp^-1 Ap Kp^-1`.
pub struct NsPrecond {
    n2: usize,
    n1: usize,
    a_hat: Rc<ApproxInverse>,
    bt: SparseMat,
    mp: ApproxInverse,
    kp: PinnedLaplace,
    ap: SparseMat,
    sign: NsSchurSign,
}

impl NsPrecond {
    pub fn new(sys: &BlockSystem, a_hat: Rc<ApproxInverse>, subs: &SubSolvers, sign: NsSchurSign) -> Result<Self> {
        Ok(Self {
            n2: sys.n2,
            n1: sys.n1,
            a_hat,
            bt: sys.bt.clone(),
            mp: make_approx_inverse(&sys.pressure.mp, &subs.mp)?,
            kp: PinnedLaplace::new(&sys.pressure.kp, &sys.weights, &subs.kp)?,
            ap: sys.pressure.ap.clone(),
            sign,
        })
    }

    /// `S_ns^-1 rp` (or its negative for [`NsSchurSign::Flipped`]).
    pub fn apply_schur(&self, rp: &[f64]) -> Result<Vec<f64>> {
        check_len("PCD rhs", self.n1, rp.len())?;
        let k = self.kp.solve(rp)?;
        let a = self.ap.mul(&k);
        let (mut p, _) = self.mp.apply_checked(&a)?;
        if self.sign == NsSchurSign::Consistent {
            p.iter_mut().for_each(|x| *x = -*x);
        }
        Ok(p)
    }

    /// Back substitution: `p` from the Schur block, then `A_hat v = rv - B^T p`.
    pub fn apply(&self, rv: &[f64], rp: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len("NS precond v rhs", self.n2, rv.len())?;
        let p = self.apply_schur(rp)?;
        let mut r = rv.to_vec();
        self.bt.mul_vec_add(-1.0, &p, &mut r);
        let (v, _) = self.a_hat.apply_checked(&r)?;
        Ok((v, p))
    }
}

/// `S_hat = A_CH - [0 0; CT A_hat^-1 U 0]` as a matrix-free operator on `(mu, phi)`.
pub struct ShatOp {
    n1: usize,
    a_ch: SparseMat,
    ct: SparseMat,
    u: SparseMat,
    a_hat: Rc<ApproxInverse>,
}

impl ShatOp {
    pub fn new(sys: &BlockSystem, a_hat: Rc<ApproxInverse>) -> Self {
        Self {
            n1: sys.n1,
            a_ch: sys.a_ch(),
            ct: sys.ct.clone(),
            u: sys.u.clone(),
            a_hat,
        }
    }
}

impl LinOp for ShatOp {
    fn dim(&self) -> usize {
        2 * self.n1
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.a_ch.mul_vec(x, y);
        let ux = self.u.mul(&x[..self.n1]);
        let w = self.a_hat.apply_vec(&ux);
        self.ct.mul_vec_add(-1.0, &w, &mut y[self.n1..]);
    }

    fn is_constant(&self) -> bool {
        self.a_hat.is_constant()
    }
}

/// Inner preconditioner `[M1 -N; 0 S_ch]` with `S_ch = S1 M1^-1 S2`, where
/// `N = sigma eps K1 + sigma/eps Lambda`.
pub struct InnerPrecond {
    n1: usize,
    m1: SparseMat,
    nmat: SparseMat,
    m1_inv: ApproxInverse,
    s1_inv: ApproxInverse,
    s2_inv: ApproxInverse,
}

/// `S1 = M1 + sqrt(tau sigma b) K1`.
pub fn s1_matrix(sys: &BlockSystem) -> SparseMat {
    sys.m1.lin_comb(1.0, &sys.k1, (sys.tau * sys.sigma * sys.mobility).sqrt())
}

/// `S2 = M1 + sqrt(tau b / sigma) N`.
pub fn s2_matrix(sys: &BlockSystem) -> SparseMat {
    sys.m1.lin_comb(1.0, &sys.nmat, (sys.tau * sys.mobility / sys.sigma).sqrt())
}

impl InnerPrecond {
    pub fn new(sys: &BlockSystem, subs: &SubSolvers) -> Result<Self> {
        Ok(Self {
            n1: sys.n1,
            m1: sys.m1.clone(),
            nmat: sys.nmat.clone(),
            m1_inv: make_approx_inverse(&sys.m1, &subs.m1)?,
            s1_inv: make_approx_inverse(&s1_matrix(sys), &subs.s1)?,
            s2_inv: make_approx_inverse(&s2_matrix(sys), &subs.s2)?,
        })
    }

    /// `S_ch^-1 r = S2^-1 M1 S1^-1 r`.
    pub fn apply_sch(&self, r: &[f64]) -> Vec<f64> {
        let a = self.s1_inv.apply_vec(r);
        let b = self.m1.mul(&a);
        self.s2_inv.apply_vec(&b)
    }
}

impl LinOp for InnerPrecond {
    fn dim(&self) -> usize {
        2 * self.n1
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n1;
        let zphi = self.apply_sch(&x[n..]);
        let mut rmu = x[..n].to_vec();
        self.nmat.mul_vec_add(1.0, &zphi, &mut rmu);
        let zmu = self.m1_inv.apply_vec(&rmu);
        y[..n].copy_from_slice(&zmu);
        y[n..].copy_from_slice(&zphi);
    }

    fn is_constant(&self) -> bool {
        self.m1_inv.is_constant() && self.s1_inv.is_constant() && self.s2_inv.is_constant()
    }
}

/// Inner Krylov solve of `S_hat y = f` from a zero initial guess. GMRES is
/// used when the inner preconditioner is a fixed operator, FGMRES otherwise.
/// Hitting `maxit` is not an error: the best iterate is returned and the
/// report is flagged unconverged.
pub fn solve_inner_shat(op: &ShatOp, rhs: &[f64], pre: &InnerPrecond, cfg: &KrylovConfig) -> Result<(Vec<f64>, SolveReport)> {
    if pre.is_constant() {
        gmres(op, rhs, pre, cfg)
    } else {
        fgmres(op, rhs, pre, cfg)
    }
}

/// Approximate inverse of the Cahn-Hilliard block used by the outer preconditioner.
enum ChSolve {
    Inner {
        op: ShatOp,
        pre: InnerPrecond,
        cfg: KrylovConfig,
    },
    Direct(DirectSolver),
}

/// Approximate inverse of `A_NS`.
enum NsSolve {
    Pcd(NsPrecond),
    /// Bordered LU of `A_NS` (pressure mean constraint).
    Exact(DirectSolver),
}

/// Outer preconditioner on the full `[v, p, mu, phi]` vector.
pub struct OuterPrecond {
    mode: PrecondMode,
    n2: usize,
    n1: usize,
    u: SparseMat,
    ns: NsSolve,
    ch: ChSolve,
    applications: Cell<usize>,
    inner_iterations: Cell<usize>,
    inner_failures: Cell<usize>,
}

impl OuterPrecond {
    pub fn new(sys: &BlockSystem, cfg: &PrecondConfig) -> Result<Self> {
        let a_hat = Rc::new(make_approx_inverse(&sys.a_hat(), &cfg.subs.a_hat)?);
        let ns = NsSolve::Pcd(NsPrecond::new(sys, a_hat.clone(), &cfg.subs, cfg.ns_sign)?);
        let ch = match cfg.mode {
            PrecondMode::BlockTriangular => ChSolve::Inner {
                op: ShatOp::new(sys, a_hat),
                pre: InnerPrecond::new(sys, &cfg.subs)?,
                cfg: cfg.inner,
            },
            PrecondMode::BaselineDiagonal => ChSolve::Direct(DirectSolver::new(&sys.a_ch())?),
        };
        Ok(Self::assemble(sys, cfg.mode, ns, ch))
    }

    /// Block-triangular preconditioner with every sub-solve exact: bordered LU
    /// of `A_NS` and a direct solve of the true Schur complement
    /// `S = A_CH - C_T A_NS^-1 C_I`, formed densely. Tiny systems only.
    pub fn exact(sys: &BlockSystem) -> Result<Self> {
        let ns_lu = exact_ns_solver(sys)?;
        let s = true_schur(sys, &ns_lu);
        let ch = ChSolve::Direct(DirectSolver::new(&SparseMat::from_dense(&s, 0.0))?);
        Ok(Self::assemble(sys, PrecondMode::BlockTriangular, NsSolve::Exact(ns_lu), ch))
    }

    fn assemble(sys: &BlockSystem, mode: PrecondMode, ns: NsSolve, ch: ChSolve) -> Self {
        Self {
            mode,
            n2: sys.n2,
            n1: sys.n1,
            u: sys.u.clone(),
            ns,
            ch,
            applications: Cell::new(0),
            inner_iterations: Cell::new(0),
            inner_failures: Cell::new(0),
        }
    }

    pub fn mode(&self) -> PrecondMode {
        self.mode
    }

    pub fn applications(&self) -> usize {
        self.applications.get()
    }

    /// Total inner GMRES iterations over all applications.
    pub fn inner_iterations(&self) -> usize {
        self.inner_iterations.get()
    }

    /// Applications whose inner solve stopped at `maxit`.
    pub fn inner_failures(&self) -> usize {
        self.inner_failures.get()
    }

    fn solve_ns(&self, rv: &[f64], rp: &[f64]) -> Result<Vec<f64>> {
        match &self.ns {
            NsSolve::Pcd(p) => {
                let (mut v, p) = p.apply(rv, rp)?;
                v.extend(p);
                Ok(v)
            }
            NsSolve::Exact(lu) => {
                let mut r = rv.to_vec();
                r.extend_from_slice(rp);
                Ok(lu.solve(&r))
            }
        }
    }

    fn solve_ch(&self, r: &[f64]) -> Result<Vec<f64>> {
        match &self.ch {
            ChSolve::Inner { op, pre, cfg } => {
                let (y, rep) = solve_inner_shat(op, r, pre, cfg)?;
                self.inner_iterations.set(self.inner_iterations.get() + rep.iterations);
                if !rep.converged {
                    self.inner_failures.set(self.inner_failures.get() + 1);
                }
                Ok(y)
            }
            ChSolve::Direct(lu) => Ok(lu.solve(r)),
        }
    }

    /// One application `z = P^-1 r`.
    pub fn apply_checked(&self, r: &[f64]) -> Result<Vec<f64>> {
        let (n2, n1) = (self.n2, self.n1);
        check_len("outer preconditioner rhs", n2 + 3 * n1, r.len())?;
        self.applications.set(self.applications.get() + 1);
        let (r_ns, r_ch) = r.split_at(n2 + n1);
        let y_ch = self.solve_ch(r_ch)?;
        let mut rv = r_ns[..n2].to_vec();
        if self.mode == PrecondMode::BlockTriangular {
            self.u.mul_vec_add(-1.0, &y_ch[..n1], &mut rv);
        }
        let mut z = self.solve_ns(&rv, &r_ns[n2..])?;
        z.extend(y_ch);
        Ok(z)
    }
}

impl LinOp for OuterPrecond {
    fn dim(&self) -> usize {
        self.n2 + 3 * self.n1
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let z = self.apply_checked(x).expect("outer preconditioner sub-solve failed");
        y.copy_from_slice(&z);
    }

    fn is_constant(&self) -> bool {
        match &self.ch {
            ChSolve::Inner { .. } => false,
            ChSolve::Direct(_) => match &self.ns {
                NsSolve::Pcd(p) => p.a_hat.is_constant() && p.mp.is_constant() && p.kp.inv.is_constant(),
                NsSolve::Exact(_) => true,
            },
        }
    }
}

fn exact_ns_solver(sys: &BlockSystem) -> Result<DirectSolver> {
    let mut c = vec![0.0; sys.n_ns()];
    c[sys.n2..].copy_from_slice(&sys.weights);
    DirectSolver::bordered(&sys.a_ns(), &[c])
}

/// Dense `S = A_CH - C_T A_NS^-1 C_I`.
fn true_schur(sys: &BlockSystem, ns_lu: &DirectSolver) -> faer::Mat<f64> {
    let n1 = sys.n1;
    let mut s = sys.a_ch().to_dense();
    let mut rhs = vec![0.0; sys.n_ns()];
    for j in 0..n1 {
        let mut e = vec![0.0; n1];
        e[j] = 1.0;
        rhs[..sys.n2].copy_from_slice(&sys.u.mul(&e));
        let w = ns_lu.solve(&rhs);
        let col = sys.ct.mul(&w[..sys.n2]);
        for (i, c) in col.iter().enumerate() {
            s[(n1 + i, j)] -= c;
        }
    }
    s
}

/// Dense true Schur complement of the full system (tiny scale).
pub fn dense_true_schur(sys: &BlockSystem) -> Result<faer::Mat<f64>> {
    Ok(true_schur(sys, &exact_ns_solver(sys)?))
}

/// Newton linear solver: FGMRES with [`OuterPrecond`] (GMRES when the
/// preconditioner is a fixed operator, as for the direct baseline).
pub struct KrylovNewtonSolver {
    pub cfg: PrecondConfig,
    /// Last outer report, kept for diagnostics.
    pub last_report: Option<SolveReport>,
}

impl KrylovNewtonSolver {
    pub fn new(cfg: PrecondConfig) -> Self {
        Self { cfg, last_report: None }
    }
}

/// Solves `sys x = rhs` with the configured preconditioner and returns the
/// (pressure-deflated) solution and solver statistics.
pub fn solve_preconditioned(sys: &BlockSystem, pre: &OuterPrecond, outer: &KrylovConfig) -> Result<(Vec<f64>, SolveReport)> {
    let (mut x, rep) = if pre.is_constant() {
        gmres(sys, &sys.rhs, pre, outer)?
    } else {
        fgmres(sys, &sys.rhs, pre, outer)?
    };
    sys.deflate(&mut x);
    Ok((x, rep))
}

impl NewtonLinearSolver for KrylovNewtonSolver {
    fn solve(&mut self, _space: &FeSpace, sys: &BlockSystem) -> Result<(Vec<f64>, LinearSolveStats)> {
        let start = Instant::now();
        let pre = OuterPrecond::new(sys, &self.cfg)?;
        let (x, rep) = solve_preconditioned(sys, &pre, &self.cfg.outer)?;
        let ax = sys.apply_vec(&x);
        let res = norm2(&ax.iter().zip(&sys.rhs).map(|(a, b)| a - b).collect::<Vec<_>>());
        if !rep.converged {
            log::warn!("outer Krylov stopped after {} iterations at residual {res:.3e}", rep.iterations);
        }
        let stats = LinearSolveStats {
            iterations: rep.iterations,
            inner_iterations: pre.inner_iterations(),
            converged: rep.converged,
            residual: res,
            wall_time: start.elapsed(),
        };
        self.last_report = Some(rep);
        Ok((x, stats))
    }
}
