//! Dense spectral checks for the Cahn-Hilliard block.
//!
//! With `M = M1`, `K = tau b K1`, `alpha = sigma eps / (tau b)` and
//! `beta = sigma / eps`, the matrices
//!
//! ```text
//! X = [M  -alpha K]        Y = [M  -alpha K - beta Lambda]
//!     [K   M      ]            [K   M                    ]
//! ```
//! satisfy `sp(X^-1 Y) in B(1, beta / (2 sqrt(alpha)) rho(M^-1/2 Lambda M^-1/2))`.
//! Everything here is dense and meant for meshes with `2 N1 <= 2000`.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{c64, Mat, Side};
use rand::Rng;

use crate::assembly::{assemble_lambda, assemble_mass_p1, assemble_stiff_p1, lump, Coef, FeSpace, MassKind};
use crate::error::{Error, Result};
use crate::model::PhysParams;

/// `(alpha, beta) = (sigma eps / (tau b), sigma / eps)`.
pub fn alpha_beta(sigma: f64, eps: f64, tau: f64, b: f64) -> (f64, f64) {
    (sigma * eps / (tau * b), sigma / eps)
}

/// `r(x) = x / (1 + alpha x^2)`.
pub fn rational(x: f64, alpha: f64) -> f64 {
    x / (1.0 + alpha * x * x)
}

/// `max_x r(x) = r(1/sqrt(alpha)) = 1 / (2 sqrt(alpha))`.
pub fn rational_max(alpha: f64) -> f64 {
    0.5 / alpha.sqrt()
}

/// Largest step size with guaranteed radius `<= 1/2`:
/// `eps^3 / (s^2 sigma b rho0^2)`.
pub fn tau_threshold(params: &PhysParams, rho_lambda0: f64) -> f64 {
    params.eps.powi(3) / (params.s * params.s * params.sigma * params.b * rho_lambda0 * rho_lambda0)
}

/// Radius bound `beta / (2 sqrt(alpha)) rho(Lambda~)`.
pub fn bound_radius(alpha: f64, beta: f64, rho_lambda_tilde: f64) -> f64 {
    beta * rational_max(alpha) * rho_lambda_tilde
}

pub fn build_xy(m: &Mat<f64>, k: &Mat<f64>, lambda: &Mat<f64>, alpha: f64, beta: f64) -> Result<(Mat<f64>, Mat<f64>)> {
    let n = m.nrows();
    for (name, a) in [("M", m), ("K", k), ("Lambda", lambda)] {
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: match name {
                    "M" => "spectral M",
                    "K" => "spectral K",
                    _ => "spectral Lambda",
                },
                expected: n,
                got: a.nrows().max(a.ncols()),
            });
        }
    }
    let x = Mat::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
        (true, true) => m[(i, j)],
        (true, false) => -alpha * k[(i, j - n)],
        (false, true) => k[(i - n, j)],
        (false, false) => m[(i - n, j - n)],
    });
    let mut y = x.clone();
    for i in 0..n {
        for j in 0..n {
            y[(i, n + j)] -= beta * lambda[(i, j)];
        }
    }
    Ok((x, y))
}

fn sym_eigen(a: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let e = a.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = e.S().column_vector();
    let vals = (0..a.nrows()).map(|i| s[i]).collect();
    Ok((vals, e.U().to_owned()))
}

/// `Q f(D) Q^T` for symmetric `a = Q D Q^T`.
fn sym_function(a: &Mat<f64>, f: impl Fn(f64) -> f64) -> Result<Mat<f64>> {
    let (d, q) = sym_eigen(a)?;
    let n = a.nrows();
    let fq = Mat::from_fn(n, n, |i, j| q[(i, j)] * f(d[j]));
    Ok(fq * q.transpose())
}

fn symmetrize(a: &Mat<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

/// `M^-1/2 A M^-1/2` for SPD `M` and symmetric `A`.
pub fn congruence(m: &Mat<f64>, a: &Mat<f64>) -> Result<Mat<f64>> {
    let mh = sym_function(m, |x| 1.0 / x.sqrt())?;
    Ok(symmetrize(&(&mh * a * &mh)))
}

/// Spectral radius of a symmetric matrix.
pub fn sym_radius(a: &Mat<f64>) -> Result<f64> {
    Ok(sym_eigen(&symmetrize(a))?.0.iter().fold(0.0, |r, v| r.max(v.abs())))
}

pub fn eigenvalues(a: &Mat<f64>) -> Result<Vec<c64>> {
    a.eigenvalues().map_err(|e| Error::Eigen(format!("{e:?}")))
}

pub fn radius(ev: &[c64]) -> f64 {
    ev.iter().fold(0.0, |r, z| r.max(z.norm()))
}

#[derive(Clone, Debug)]
pub struct SpectralReport {
    pub alpha: f64,
    pub beta: f64,
    /// Eigenvalues of `X^-1 (X - Y)`, i.e. `1 - sp(X^-1 Y)`.
    pub eigenvalues: Vec<c64>,
    /// `max |lambda - 1|` over `sp(X^-1 Y)`.
    pub measured_radius: f64,
    pub bound_radius: f64,
    /// `rho(M^-1/2 Lambda M^-1/2)`.
    pub rho_lambda_tilde: f64,
    /// `rho(Lambda~) / s`.
    pub rho_lambda0: f64,
    pub lumped: bool,
    /// `beta rho((W M)^-1 C Lambda)` evaluated through the factorization,
    /// filled in by [`SpectralReport::with_proof_radius`].
    pub proof_radius: Option<f64>,
}

impl SpectralReport {
    /// `bound - measured`.
    pub fn margin(&self) -> f64 {
        self.bound_radius - self.measured_radius
    }

    pub fn holds(&self, slack: f64) -> bool {
        self.measured_radius <= self.bound_radius + slack
    }

    /// Adds the radius computed along the proof's factorization.
    pub fn with_proof_radius(mut self, m: &Mat<f64>, k: &Mat<f64>, lambda: &Mat<f64>) -> Result<Self> {
        self.proof_radius = Some(self.beta * radius(&eigenvalues(&proof_operator(m, k, lambda, self.alpha))?));
        Ok(self)
    }
}

/// Eigenvalues of a `2n x 2n` matrix whose first `n` columns vanish below
/// the diagonal block, i.e. `[E11 E12; 0 E22]`: `sp(E11) u sp(E22)`.
/// `X - Y` has a zero first block column, so `X^-1 (X - Y)` has this form
/// with `E11 = 0`. Falls back to the full eigensolve otherwise.
pub fn block_triangular_eigenvalues(e: &Mat<f64>, n: usize) -> Result<Vec<c64>> {
    let lower_zero = (0..n).all(|j| (n..2 * n).all(|i| e[(i, j)] == 0.0));
    if !lower_zero {
        return eigenvalues(e);
    }
    let mut ev = eigenvalues(&e.submatrix(0, 0, n, n).to_owned())?;
    ev.extend(eigenvalues(&e.submatrix(n, n, n, n).to_owned())?);
    Ok(ev)
}

fn is_diagonal(a: &Mat<f64>) -> bool {
    (0..a.nrows()).all(|i| (0..a.ncols()).all(|j| i == j || a[(i, j)] == 0.0))
}

/// `(W M)^-1 C Lambda = M^-1 W^-1 K M^-1 Lambda` with `C = K M^-1`, `W = I + alpha C^2`.
pub fn proof_operator(m: &Mat<f64>, k: &Mat<f64>, lambda: &Mat<f64>, alpha: f64) -> Mat<f64> {
    let n = m.nrows();
    let mlu = m.partial_piv_lu();
    let minv = mlu.inverse();
    let c = k * &minv;
    let w = Mat::<f64>::identity(n, n) + (&c * &c) * alpha;
    let wm = &w * m;
    wm.partial_piv_lu().solve(&(&c * lambda))
}

/// `r(C~) Lambda~` with `C~ = M^-1/2 K M^-1/2`.
pub fn similar_operator(m: &Mat<f64>, k: &Mat<f64>, lambda: &Mat<f64>, alpha: f64) -> Result<Mat<f64>> {
    let ct = congruence(m, k)?;
    let rc = sym_function(&ct, |x| rational(x, alpha))?;
    Ok(rc * congruence(m, lambda)?)
}

/// Computes `sp(X^-1 Y)` densely together with the bound.
pub fn verify_inclusion(
    x: &Mat<f64>,
    y: &Mat<f64>,
    m: &Mat<f64>,
    lambda: &Mat<f64>,
    alpha: f64,
    beta: f64,
    s: f64,
) -> Result<SpectralReport> {
    let n = m.nrows();
    if x.nrows() != 2 * n || y.nrows() != 2 * n {
        return Err(Error::DimensionMismatch {
            context: "spectral X/Y",
            expected: 2 * n,
            got: x.nrows(),
        });
    }
    let xlu = x.partial_piv_lu();
    let diff = x - y;
    let left_zero = (0..n).all(|j| (0..2 * n).all(|i| diff[(i, j)] == 0.0));
    let ev = if left_zero {
        // X^-1 (X - Y) = [0 E12; 0 E22]: only the right block column is needed
        let e2 = xlu.solve(&diff.submatrix(0, n, 2 * n, n).to_owned());
        let mut ev = vec![c64::new(0.0, 0.0); n];
        ev.extend(eigenvalues(&e2.submatrix(n, 0, n, n).to_owned())?);
        ev
    } else {
        block_triangular_eigenvalues(&xlu.solve(&diff), n)?
    };
    let measured = radius(&ev);
    let rho_lt = sym_radius(&congruence(m, lambda)?)?;
    Ok(SpectralReport {
        alpha,
        beta,
        eigenvalues: ev,
        measured_radius: measured,
        bound_radius: bound_radius(alpha, beta, rho_lt),
        rho_lambda_tilde: rho_lt,
        rho_lambda0: if s > 0.0 { rho_lt / s } else { 0.0 },
        lumped: is_diagonal(m),
        proof_radius: None,
    })
}

/// `max_{lambda in sp(K~)} r(lambda)` for symmetric PSD `K~`.
#[derive(Clone, Copy, Debug)]
pub struct RationalCheck {
    pub max_r: f64,
    pub bound: f64,
    /// `min |lambda - 1/sqrt(alpha)|` over the spectrum.
    pub distance_to_peak: f64,
}

pub fn rational_bound_check(k_tilde: &Mat<f64>, alpha: f64) -> Result<RationalCheck> {
    let (d, _) = sym_eigen(&symmetrize(k_tilde))?;
    let peak = 1.0 / alpha.sqrt();
    Ok(RationalCheck {
        max_r: d.iter().map(|&l| rational(l, alpha)).fold(f64::NEG_INFINITY, f64::max),
        bound: rational_max(alpha),
        distance_to_peak: d.iter().map(|l| (l - peak).abs()).fold(f64::INFINITY, f64::min),
    })
}

/// Dense `(M, K, Lambda)` for one phase field: `M = M1` (lumped or
/// consistent), `K = tau b K1`, `Lambda` with the same mass treatment.
pub fn ch_matrices(space: &FeSpace, phi: &[f64], params: &PhysParams, kind: MassKind) -> (Mat<f64>, Mat<f64>, Mat<f64>) {
    let m1 = assemble_mass_p1(space, Coef::Const(1.0));
    let m = match kind {
        MassKind::Consistent => m1,
        MassKind::Lumped => lump(&m1),
    };
    let k = assemble_stiff_p1(space, Coef::Const(1.0)).scaled(params.tau * params.b);
    let lam = assemble_lambda(space, phi, params.s, kind);
    (m.to_dense(), k.to_dense(), lam.to_dense())
}

/// Builds `X`, `Y` for one phase field and runs [`verify_inclusion`].
pub fn analyze(space: &FeSpace, phi: &[f64], params: &PhysParams, kind: MassKind) -> Result<SpectralReport> {
    let (m, k, lam) = ch_matrices(space, phi, params, kind);
    let (alpha, beta) = alpha_beta(params.sigma, params.eps, params.tau, params.b);
    let (x, y) = build_xy(&m, &k, &lam, alpha, beta)?;
    verify_inclusion(&x, &y, &m, &lam, alpha, beta, params.s)
}

/// Synthetic phase field with roughly `fraction` of the nodes outside `[-1, 1]`.
pub fn random_active_phi<R: Rng>(n: usize, fraction: f64, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            if rng.random_bool(fraction.clamp(0.0, 1.0)) {
                sign * rng.random_range(1.0001..1.2)
            } else {
                sign * rng.random_range(0.0..0.999)
            }
        })
        .collect()
}

/// One output row per sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectraRow {
    pub alpha: f64,
    pub beta: f64,
    pub rho_lambda_tilde: f64,
    pub measured_radius: f64,
    pub bound: f64,
    pub margin: f64,
}

impl From<&SpectralReport> for SpectraRow {
    fn from(r: &SpectralReport) -> Self {
        Self {
            alpha: r.alpha,
            beta: r.beta,
            rho_lambda_tilde: r.rho_lambda_tilde,
            measured_radius: r.measured_radius,
            bound: r.bound_radius,
            margin: r.margin(),
        }
    }
}
