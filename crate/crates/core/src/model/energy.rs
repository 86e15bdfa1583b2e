use super::system::StepOperators;
use super::{potential, PhysParams, State};
use crate::assembly::FeSpace;
use crate::sparse::dot;

fn kinetic(space: &FeSpace, rho: &[f64], v: &[f64]) -> f64 {
    space.integrate(|t, q| {
        let u = space.vel_at(t, q, v);
        0.5 * space.p1_at(t, q, rho) * (u[0] * u[0] + u[1] * u[1])
    })
}

/// `sigma int (eps/2 |grad phi|^2 + W(phi)/eps)`, with `W` integrated by the
/// same quadrature the residual uses for `W'_+`.
fn free_energy(space: &FeSpace, phi: &[f64], params: &PhysParams) -> f64 {
    let grad: f64 = (0..space.mesh.n_triangles())
        .map(|t| {
            let g = space.p1_grad(t, phi);
            space.elems[t].area * (g[0] * g[0] + g[1] * g[1])
        })
        .sum();
    let w = space.integrate(|t, q| potential::w(space.p1_at(t, q, phi), params.s));
    params.sigma * (0.5 * params.eps * grad + w / params.eps)
}

/// `E = int rho/2 |v|^2 + sigma int (eps/2 |grad phi|^2 + W(phi)/eps)`.
pub fn discrete_energy(space: &FeSpace, v: &[f64], phi: &[f64], rho: &[f64], params: &PhysParams) -> f64 {
    kinetic(space, rho, v) + free_energy(space, phi, params)
}

/// Terms of the discrete energy inequality for one accepted step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyLedger {
    /// `int rho^{k-1}/2 |v^k|^2`
    pub kinetic_new: f64,
    pub free_new: f64,
    /// `1/2 int rho^{k-2} |v^k - v^{k-1}|^2`
    pub kinetic_jump: f64,
    /// `sigma eps/2 int |grad phi^k - grad phi^{k-1}|^2`
    pub gradient_jump: f64,
    /// `tau int 2 eta^{k-1} |D v^k|^2`
    pub viscous: f64,
    /// `tau int b |grad mu^k|^2`
    pub diffusive: f64,
    /// `int rho^{k-2}/2 |v^{k-1}|^2`
    pub kinetic_old: f64,
    pub free_old: f64,
    /// `tau int rho^{k-1} g . v^k`
    pub gravity_work: f64,
    /// `tau int v^k . grad(mu^k phi^{k-1})`: what the two phase-field
    /// coupling terms leave behind when the equations are tested with
    /// `v^k` and `mu^k`. Zero for a pointwise divergence-free velocity, but
    /// Taylor-Hood velocities are only discretely divergence-free against P1
    /// while `mu phi` is quadratic.
    pub transport_residue: f64,
}

impl EnergyLedger {
    pub fn energy_new(&self) -> f64 {
        self.kinetic_new + self.free_new
    }
    pub fn energy_old(&self) -> f64 {
        self.kinetic_old + self.free_old
    }
    pub fn dissipation(&self) -> f64 {
        self.kinetic_jump + self.gradient_jump + self.viscous + self.diffusive
    }
    pub fn lhs(&self) -> f64 {
        self.energy_new() + self.dissipation()
    }
    pub fn rhs(&self) -> f64 {
        self.energy_old() + self.gravity_work
    }
    /// `lhs - rhs`; nonpositive when the inequality holds.
    pub fn violation(&self) -> f64 {
        self.lhs() - self.rhs()
    }
    /// `lhs - rhs - transport_residue`; the tested equations bound this by
    /// the (nonpositive) convex-splitting slack.
    pub fn violation_net_of_transport(&self) -> f64 {
        self.violation() - self.transport_residue
    }
}

pub fn energy_budget(space: &FeSpace, ops: &StepOperators, state: &State) -> EnergyLedger {
    let p = &ops.params;
    let h = &ops.history;
    let dv: Vec<f64> = state.v.iter().zip(&h.v_km1).map(|(a, b)| a - b).collect();
    let dphi: Vec<f64> = state.phi.iter().zip(&h.phi_km1).map(|(a, b)| a - b).collect();
    EnergyLedger {
        kinetic_new: kinetic(space, &ops.rho_km1, &state.v),
        free_new: free_energy(space, &state.phi, p),
        kinetic_jump: kinetic(space, &ops.rho_km2, &dv),
        gradient_jump: 0.5 * p.sigma * p.eps * dot(&dphi, &ops.k1.mul(&dphi)),
        viscous: p.tau * dot(&state.v, &ops.vel.k2.mul(&state.v)),
        diffusive: p.tau * p.b * dot(&state.mu, &ops.k1.mul(&state.mu)),
        kinetic_old: kinetic(space, &ops.rho_km2, &h.v_km1),
        free_old: free_energy(space, &h.phi_km1, p),
        gravity_work: p.tau * dot(&ops.f_grav, &state.v),
        transport_residue: p.tau
            * space.integrate(|t, q| {
                let v = space.vel_at(t, q, &state.v);
                let (gm, gp) = (space.p1_grad(t, &state.mu), space.p1_grad(t, &h.phi_km1));
                let (m, f) = (space.p1_at(t, q, &state.mu), space.p1_at(t, q, &h.phi_km1));
                v[0] * (m * gp[0] + f * gm[0]) + v[1] * (m * gp[1] + f * gm[1])
            }),
    }
}

/// `max_T tau |v|_T / diam(T)` with `|v|_T` the largest nodal speed on `T`.
pub fn check_cfl(space: &FeSpace, v: &[f64], tau: f64) -> f64 {
    let n = space.n_p2();
    (0..space.mesh.n_triangles())
        .map(|t| {
            let vmax = space
                .mesh
                .p2_nodes(t)
                .iter()
                .map(|&a| v[a].hypot(v[n + a]))
                .fold(0.0, f64::max);
            tau * vmax / space.mesh.diam[t]
        })
        .fold(0.0, f64::max)
}
