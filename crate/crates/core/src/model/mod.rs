//! Physical parameters, the relaxed double-obstacle potential, the
//! time-discrete residual and its Newton linearization, and energy bookkeeping.

mod energy;
mod newton;
mod system;

use crate::assembly::{Advector, FeSpace};
use crate::error::{Error, Result};

pub use energy::{check_cfl, discrete_energy, energy_budget, EnergyLedger};
pub use newton::{
    semismooth_newton, solve_ch_only, DirectNewtonSolver, LinearSolveStats, NewtonConfig, NewtonLinearSolver,
    NewtonReport,
};
pub use system::{BlockSystem, Residual, StepOperators};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysParams {
    pub rho1: f64,
    pub rho2: f64,
    pub eta1: f64,
    pub eta2: f64,
    /// Scaled surface tension.
    pub sigma: f64,
    /// Interface thickness.
    pub eps: f64,
    pub tau: f64,
    /// Mobility.
    pub b: f64,
    /// Moreau-Yosida penalty.
    pub s: f64,
    pub g: [f64; 2],
}

impl PhysParams {
    /// Rising-bubble benchmark 1 (penalty `s = 1e4`).
    pub fn benchmark1() -> Self {
        Self {
            rho1: 1000.0,
            rho2: 100.0,
            eta1: 10.0,
            eta2: 1.0,
            sigma: 15.6,
            eps: 0.04,
            tau: 2e-3,
            b: 4e-5,
            s: 1e4,
            g: [0.0, -0.98],
        }
    }

    /// Rising-bubble benchmark 2 (very light, less viscous bubble).
    pub fn benchmark2() -> Self {
        Self {
            rho2: 1.0,
            eta2: 0.1,
            sigma: 1.24777,
            s: 1e6,
            ..Self::benchmark1()
        }
    }

    pub fn reynolds(&self) -> f64 {
        0.35 * self.rho1 / self.eta1
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("rho1", self.rho1),
            ("rho2", self.rho2),
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("sigma", self.sigma),
            ("eps", self.eps),
            ("tau", self.tau),
            ("b", self.b),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.s >= 0.0 && self.s.is_finite()) {
            return Err(Error::invalid(format!("s must be nonnegative, got {}", self.s)));
        }
        if !self.g.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("gravity must be finite"));
        }
        Ok(())
    }
}

/// Relaxed double-obstacle potential `W = W_+ + W_-`.
pub mod potential {
    /// `W_+(phi) = s/2 (max(0, phi-1)^2 + min(0, phi+1)^2)`
    pub fn w_plus(phi: f64, s: f64) -> f64 {
        let a = (phi - 1.0).max(0.0);
        let b = (phi + 1.0).min(0.0);
        0.5 * s * (a * a + b * b)
    }

    /// `W_-(phi) = (1 - phi^2) / 2`
    pub fn w_minus(phi: f64) -> f64 {
        0.5 * (1.0 - phi * phi)
    }

    pub fn w(phi: f64, s: f64) -> f64 {
        w_plus(phi, s) + w_minus(phi)
    }

    pub fn wprime_plus(phi: f64, s: f64) -> f64 {
        s * ((phi - 1.0).max(0.0) + (phi + 1.0).min(0.0))
    }

    pub fn wprime_minus(phi: f64) -> f64 {
        -phi
    }

    pub fn wsecond_plus(phi: f64, s: f64) -> f64 {
        if phi.abs() > 1.0 {
            s
        } else {
            0.0
        }
    }
}

/// `rho(phi) = (rho2 - rho1)/2 phi + (rho2 + rho1)/2`, no clipping.
pub fn interp_density(phi: &[f64], rho1: f64, rho2: f64) -> Vec<f64> {
    phi.iter().map(|p| 0.5 * (rho2 - rho1) * p + 0.5 * (rho2 + rho1)).collect()
}

/// `eta(phi) = (eta2 - eta1)/2 phi + (eta2 + eta1)/2`, no clipping.
pub fn interp_viscosity(phi: &[f64], eta1: f64, eta2: f64) -> Vec<f64> {
    interp_density(phi, eta1, eta2)
}

/// Relative mass flux `J = -(rho2 - rho1)/2 b grad mu`, constant per triangle.
pub fn flux_j(space: &FeSpace, mu: &[f64], params: &PhysParams) -> Vec<[f64; 2]> {
    let c = -0.5 * (params.rho2 - params.rho1) * params.b;
    (0..space.mesh.n_triangles())
        .map(|t| {
            let g = space.p1_grad(t, mu);
            [c * g[0], c * g[1]]
        })
        .collect()
}

/// Unknowns at one time level.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub v: Vec<f64>,
    pub p: Vec<f64>,
    pub phi: Vec<f64>,
    pub mu: Vec<f64>,
}

impl State {
    pub fn zeros(space: &FeSpace) -> Self {
        Self {
            v: vec![0.0; space.n2()],
            p: vec![0.0; space.n1()],
            phi: vec![0.0; space.n1()],
            mu: vec![0.0; space.n1()],
        }
    }

    /// Packs into the system ordering `[v, p, mu, phi]`.
    pub fn pack(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.v.len() + 3 * self.p.len());
        x.extend_from_slice(&self.v);
        x.extend_from_slice(&self.p);
        x.extend_from_slice(&self.mu);
        x.extend_from_slice(&self.phi);
        x
    }

    pub fn unpack(x: &[f64], n2: usize, n1: usize) -> Self {
        assert_eq!(x.len(), n2 + 3 * n1, "state vector length");
        Self {
            v: x[..n2].to_vec(),
            p: x[n2..n2 + n1].to_vec(),
            mu: x[n2 + n1..n2 + 2 * n1].to_vec(),
            phi: x[n2 + 2 * n1..].to_vec(),
        }
    }
}

/// Lagged data of the two-step scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct History {
    pub phi_km2: Vec<f64>,
    pub phi_km1: Vec<f64>,
    pub mu_km1: Vec<f64>,
    pub v_km1: Vec<f64>,
}

impl History {
    /// History for the next step once `state` has been accepted at the current level.
    pub fn shifted(&self, state: &State) -> Self {
        Self {
            phi_km2: self.phi_km1.clone(),
            phi_km1: state.phi.clone(),
            mu_km1: state.mu.clone(),
            v_km1: state.v.clone(),
        }
    }

    pub fn check(&self, space: &FeSpace) -> Result<()> {
        let n1 = space.n1();
        for (ctx, len) in [
            ("history phi^{k-2}", self.phi_km2.len()),
            ("history phi^{k-1}", self.phi_km1.len()),
            ("history mu^{k-1}", self.mu_km1.len()),
        ] {
            if len != n1 {
                return Err(Error::DimensionMismatch {
                    context: ctx,
                    expected: n1,
                    got: len,
                });
            }
        }
        if self.v_km1.len() != space.n2() {
            return Err(Error::DimensionMismatch {
                context: "history v^{k-1}",
                expected: space.n2(),
                got: self.v_km1.len(),
            });
        }
        Ok(())
    }
}

/// Transport field `rho^{k-1} v^{k-1} + J^{k-1}` of the convection form.
pub fn advector(space: &FeSpace, history: &History, params: &PhysParams) -> Advector {
    Advector {
        rho: interp_density(&history.phi_km1, params.rho1, params.rho2),
        v: history.v_km1.clone(),
        flux: flux_j(space, &history.mu_km1, params),
    }
}

/// Removes the constant mode from a pressure vector: `w . p = 0` afterwards.
pub fn deflate_pressure(p: &mut [f64], weights: &[f64]) {
    let total: f64 = weights.iter().sum();
    let mean = crate::sparse::dot(p, weights) / total;
    p.iter_mut().for_each(|v| *v -= mean);
}
