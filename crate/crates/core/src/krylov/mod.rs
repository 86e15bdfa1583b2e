//! Linear operators and Krylov solvers.

mod cg;
mod direct;
mod gmres;

use std::time::Duration;

use crate::sparse::SparseMat;

pub use cg::pcg_jacobi;
pub use direct::{dense_solve, DirectSolver};
pub use gmres::{fgmres, gmres};

/// Square linear operator `x -> y`.
pub trait LinOp {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);

    /// `false` for operators that contain an inner iteration (and therefore
    /// change between applications); those must only be used with [`fgmres`].
    fn is_constant(&self) -> bool {
        true
    }

    fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply(x, &mut y);
        y
    }
}

impl LinOp for SparseMat {
    fn dim(&self) -> usize {
        debug_assert_eq!(self.nrows(), self.ncols());
        self.nrows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.mul_vec(x, y);
    }
}

impl<T: LinOp + ?Sized> LinOp for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
    fn is_constant(&self) -> bool {
        (**self).is_constant()
    }
}

impl<T: LinOp + ?Sized> LinOp for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
    fn is_constant(&self) -> bool {
        (**self).is_constant()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Identity(pub usize);

impl LinOp for Identity {
    fn dim(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

/// Operator defined by a closure.
pub struct FnOp<F> {
    n: usize,
    f: F,
    constant: bool,
}

impl<F: Fn(&[f64], &mut [f64])> FnOp<F> {
    pub fn new(n: usize, f: F) -> Self {
        Self { n, f, constant: true }
    }

    pub fn nonconstant(n: usize, f: F) -> Self {
        Self { n, f, constant: false }
    }
}

impl<F: Fn(&[f64], &mut [f64])> LinOp for FnOp<F> {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
    fn is_constant(&self) -> bool {
        self.constant
    }
}

/// How the absolute and relative tolerances combine.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ToleranceMode {
    /// Stop when `||r|| <= max(tol_abs, tol_rel ||b||)`.
    Max,
    /// Stop when `||r|| <= min(tol_abs, tol_rel ||b||)`.
    Min,
}

#[derive(Clone, Copy, Debug)]
pub struct KrylovConfig {
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub mode: ToleranceMode,
    /// Restart length; `usize::MAX` for no restart.
    pub restart: usize,
    pub maxit: usize,
}

impl KrylovConfig {
    pub fn relative(tol_rel: f64, restart: usize, maxit: usize) -> Self {
        Self {
            tol_abs: 0.0,
            tol_rel,
            mode: ToleranceMode::Max,
            restart,
            maxit,
        }
    }

    /// Outer FGMRES for the block-triangular preconditioner.
    pub fn outer() -> Self {
        Self {
            tol_abs: 1e-6,
            tol_rel: 1e-6,
            mode: ToleranceMode::Min,
            restart: 30,
            maxit: 1000,
        }
    }

    /// Outer GMRES for the block-diagonal baseline.
    pub fn baseline() -> Self {
        Self {
            restart: 10,
            ..Self::outer()
        }
    }

    /// Inner GMRES on the Schur system.
    pub fn inner() -> Self {
        Self::relative(1e-1, usize::MAX, 50)
    }

    pub fn target(&self, bnorm: f64) -> f64 {
        match self.mode {
            ToleranceMode::Max => self.tol_abs.max(self.tol_rel * bnorm),
            ToleranceMode::Min => self.tol_abs.min(self.tol_rel * bnorm),
        }
    }

    fn validate(&self) -> crate::Result<()> {
        if self.restart == 0 || self.maxit == 0 {
            return Err(crate::Error::invalid("restart and maxit must be at least 1"));
        }
        if !(self.tol_abs >= 0.0 && self.tol_rel >= 0.0) {
            return Err(crate::Error::invalid("tolerances must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct SolveReport {
    pub iterations: usize,
    /// Residual 2-norms; entry 0 is the initial residual. Within a cycle these
    /// are the Arnoldi estimates, the last entry of each cycle is the true residual.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub wall_time: Duration,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(0.0)
    }
}

pub(crate) fn check_dims(context: &'static str, expected: usize, got: usize) -> crate::Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(crate::Error::DimensionMismatch { context, expected, got })
    }
}
