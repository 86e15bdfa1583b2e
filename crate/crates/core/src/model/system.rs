use std::ops::Range;

use super::{advector, interp_density, interp_viscosity, potential, History, PhysParams, State};
use crate::assembly::{
    assemble_coupling, assemble_lambda, assemble_mass_p1, assemble_pressure_ops, assemble_stiff_p1,
    assemble_velocity_blocks, load_p1_nonlinear, load_velocity, Coef, CouplingBlocks, FeSpace, MassKind,
    MomentumCoefficients, PressureOps, VelocityBlocks,
};
use crate::error::{Error, Result};
use crate::krylov::LinOp;
use crate::sparse::SparseMat;

/// Operators that stay fixed during one time step (everything except the
/// penalty matrix depends only on the history).
#[derive(Clone, Debug)]
pub struct StepOperators {
    pub params: PhysParams,
    pub vel: VelocityBlocks,
    pub a: SparseMat,
    pub coupling: CouplingBlocks,
    pub m1: SparseMat,
    pub k1: SparseMat,
    pub pressure: PressureOps,
    /// `(1/tau)(rho^{k-2} v^{k-1}, w)`
    pub f_old: Vec<f64>,
    /// `(rho^{k-1} g, w)`
    pub f_grav: Vec<f64>,
    pub rho_km1: Vec<f64>,
    pub rho_km2: Vec<f64>,
    pub history: History,
    /// P1 integral weights (row sums of `M1`), used for pressure deflation.
    pub weights: Vec<f64>,
}

/// Residual blocks of the four scheme equations, in basis-coefficient form.
#[derive(Clone, Debug, PartialEq)]
pub struct Residual {
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
    pub r3: Vec<f64>,
    pub r4: Vec<f64>,
}

impl StepOperators {
    pub fn assemble(space: &FeSpace, history: &History, params: &PhysParams) -> Result<Self> {
        params.validate()?;
        history.check(space)?;
        let rho_km1 = interp_density(&history.phi_km1, params.rho1, params.rho2);
        let rho_km2 = interp_density(&history.phi_km2, params.rho1, params.rho2);
        let eta_km1 = interp_viscosity(&history.phi_km1, params.eta1, params.eta2);
        let adv = advector(space, history, params);
        let coef = MomentumCoefficients {
            rho_km1: &rho_km1,
            rho_km2: &rho_km2,
            eta_km1: &eta_km1,
            advector: &adv,
            tau: params.tau,
        };
        let vel = assemble_velocity_blocks(space, &coef)?;
        let a = vel.a();
        let pressure = assemble_pressure_ops(space, &coef)?;
        let coupling = assemble_coupling(space, &history.phi_km1);
        let m1 = assemble_mass_p1(space, Coef::Const(1.0));
        let k1 = assemble_stiff_p1(space, Coef::Const(1.0));
        let f_old = load_velocity(space, |t, q| {
            let r = space.p1_at(t, q, &rho_km2) / params.tau;
            let v = space.vel_at(t, q, &history.v_km1);
            [r * v[0], r * v[1]]
        });
        let f_grav = load_velocity(space, |t, q| {
            let r = space.p1_at(t, q, &rho_km1);
            [r * params.g[0], r * params.g[1]]
        });
        let weights = m1.row_sums();
        Ok(Self {
            params: *params,
            vel,
            a,
            coupling,
            m1,
            k1,
            pressure,
            f_old,
            f_grav,
            rho_km1,
            rho_km2,
            history: history.clone(),
            weights,
        })
    }

    pub fn residual(&self, space: &FeSpace, x: &State) -> Residual {
        self.residual_with(space, x, MassKind::Consistent)
    }

    /// Residual whose penalty load `W'_+` is integrated consistently or with
    /// nodal quadrature, matching the `Lambda` of [`Self::newton_system`].
    pub fn residual_with(&self, space: &FeSpace, x: &State, kind: MassKind) -> Residual {
        let p = &self.params;
        let c = &self.coupling;
        let mut r1 = self.a.mul(&x.v);
        c.b.transpose().mul_vec_add(1.0, &x.p, &mut r1);
        c.u.mul_vec_add(1.0, &x.mu, &mut r1);
        for i in 0..r1.len() {
            r1[i] -= self.f_old[i] + self.f_grav[i];
        }
        for (r, &m) in r1.iter_mut().zip(&space.dofs.dirichlet) {
            if m {
                *r = 0.0;
            }
        }
        let r2 = c.b.mul(&x.v);
        let dphi: Vec<f64> = x.phi.iter().zip(&self.history.phi_km1).map(|(a, b)| a - b).collect();
        let mut r3: Vec<f64> = self.m1.mul(&dphi).iter().map(|v| v / p.tau).collect();
        self.k1.mul_vec_add(p.b, &x.mu, &mut r3);
        c.t.mul_vec_add(-1.0, &x.v, &mut r3);
        let s = p.s;
        let wp = match kind {
            MassKind::Consistent => load_p1_nonlinear(space, &x.phi, |f| potential::wprime_plus(f, s)),
            MassKind::Lumped => (self.weights.iter().zip(&x.phi))
                .map(|(&w, &f)| w * potential::wprime_plus(f, s))
                .collect(),
        };
        let mut r4 = self.k1.mul(&x.phi);
        r4.iter_mut().for_each(|v| *v *= p.sigma * p.eps);
        let m_old = self.m1.mul(&self.history.phi_km1);
        let m_mu = self.m1.mul(&x.mu);
        for i in 0..r4.len() {
            r4[i] += p.sigma / p.eps * (wp[i] - m_old[i]) - m_mu[i];
        }
        Residual { r1, r2, r3, r4 }
    }

    /// `G = (R1, R2, -R4, tau R3)` in system ordering; the Newton right-hand side is `-G`.
    pub fn system_residual(&self, space: &FeSpace, x: &State) -> Vec<f64> {
        self.system_residual_with(space, x, MassKind::Consistent)
    }

    pub fn system_residual_with(&self, space: &FeSpace, x: &State, kind: MassKind) -> Vec<f64> {
        let r = self.residual_with(space, x, kind);
        let mut g = r.r1;
        g.extend_from_slice(&r.r2);
        g.extend(r.r4.iter().map(|v| -v));
        g.extend(r.r3.iter().map(|v| self.params.tau * v));
        g
    }

    /// Newton system at iterate `x` (the penalty matrix follows `x.phi`).
    pub fn newton_system(&self, space: &FeSpace, x: &State, kind: MassKind) -> BlockSystem {
        let lambda = assemble_lambda(space, &x.phi, self.params.s, kind);
        let rhs: Vec<f64> = self.system_residual_with(space, x, kind).iter().map(|v| -v).collect();
        BlockSystem::from_parts(
            self.a.clone(),
            self.coupling.b.clone(),
            self.coupling.u.clone(),
            self.coupling.t.scaled(-self.params.tau),
            self.m1.clone(),
            self.k1.clone(),
            lambda,
            self.pressure.clone(),
            rhs,
            &self.params,
        )
        .expect("blocks assembled on one space have consistent shapes")
    }
}

/// The linearized 4x4 block system in unknown order `[v, p, mu, phi]`:
///
/// ```text
/// [ A   B^T  U      0  ]
/// [ B   0    0      0  ]
/// [ 0   0    M1    -N  ]     N  = sigma eps K1 + sigma/eps Lambda
/// [ CT  0    tbK1   M1 ]     CT = -tau T,  tbK1 = tau b K1
/// ```
#[derive(Clone, Debug)]
pub struct BlockSystem {
    pub n1: usize,
    pub n2: usize,
    pub a: SparseMat,
    pub b: SparseMat,
    pub bt: SparseMat,
    pub u: SparseMat,
    pub ct: SparseMat,
    pub m1: SparseMat,
    pub k1: SparseMat,
    pub lambda: SparseMat,
    pub nmat: SparseMat,
    pub tbk1: SparseMat,
    pub pressure: PressureOps,
    pub rhs: Vec<f64>,
    pub weights: Vec<f64>,
    pub sigma: f64,
    pub eps: f64,
    pub tau: f64,
    pub mobility: f64,
}

fn expect_shape(ctx: &'static str, m: &SparseMat, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows {
        return Err(Error::DimensionMismatch {
            context: ctx,
            expected: rows,
            got: m.nrows(),
        });
    }
    if m.ncols() != cols {
        return Err(Error::DimensionMismatch {
            context: ctx,
            expected: cols,
            got: m.ncols(),
        });
    }
    Ok(())
}

impl BlockSystem {
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        a: SparseMat,
        b: SparseMat,
        u: SparseMat,
        ct: SparseMat,
        m1: SparseMat,
        k1: SparseMat,
        lambda: SparseMat,
        pressure: PressureOps,
        rhs: Vec<f64>,
        params: &PhysParams,
    ) -> Result<Self> {
        let n2 = a.nrows();
        let n1 = m1.nrows();
        expect_shape("block A", &a, n2, n2)?;
        expect_shape("block B", &b, n1, n2)?;
        expect_shape("block U", &u, n2, n1)?;
        expect_shape("block CT", &ct, n1, n2)?;
        expect_shape("block M1", &m1, n1, n1)?;
        expect_shape("block K1", &k1, n1, n1)?;
        expect_shape("block Lambda", &lambda, n1, n1)?;
        expect_shape("block Mp", &pressure.mp, n1, n1)?;
        expect_shape("block Kp", &pressure.kp, n1, n1)?;
        expect_shape("block Ap", &pressure.ap, n1, n1)?;
        if rhs.len() != n2 + 3 * n1 {
            return Err(Error::DimensionMismatch {
                context: "block system rhs",
                expected: n2 + 3 * n1,
                got: rhs.len(),
            });
        }
        let nmat = k1.lin_comb(params.sigma * params.eps, &lambda, params.sigma / params.eps);
        let tbk1 = k1.scaled(params.tau * params.b);
        let weights = m1.row_sums();
        Ok(Self {
            n1,
            n2,
            bt: b.transpose(),
            a,
            b,
            u,
            ct,
            m1,
            k1,
            lambda,
            nmat,
            tbk1,
            pressure,
            rhs,
            weights,
            sigma: params.sigma,
            eps: params.eps,
            tau: params.tau,
            mobility: params.b,
        })
    }

    pub fn dim(&self) -> usize {
        self.n2 + 3 * self.n1
    }
    pub fn n_ns(&self) -> usize {
        self.n2 + self.n1
    }
    pub fn v_range(&self) -> Range<usize> {
        0..self.n2
    }
    pub fn p_range(&self) -> Range<usize> {
        self.n2..self.n2 + self.n1
    }
    pub fn mu_range(&self) -> Range<usize> {
        self.n2 + self.n1..self.n2 + 2 * self.n1
    }
    pub fn phi_range(&self) -> Range<usize> {
        self.n2 + 2 * self.n1..self.dim()
    }

    /// Paper-sign transport matrix `T` recovered from `CT = -tau T`.
    pub fn t(&self) -> SparseMat {
        self.ct.scaled(-1.0 / self.tau)
    }

    /// Velocity-component diagonal blocks of `A` (zero x-y coupling).
    pub fn a_hat(&self) -> SparseMat {
        let h = self.n2 / 2;
        let xx = self.a.block(0..h, 0..h);
        let yy = self.a.block(h..self.n2, h..self.n2);
        SparseMat::from_blocks(&[h, h], &[h, h], &[vec![Some(&xx), None], vec![None, Some(&yy)]])
    }

    pub fn a_ns(&self) -> SparseMat {
        SparseMat::from_blocks(
            &[self.n2, self.n1],
            &[self.n2, self.n1],
            &[vec![Some(&self.a), Some(&self.bt)], vec![Some(&self.b), None]],
        )
    }

    pub fn neg_n(&self) -> SparseMat {
        self.nmat.scaled(-1.0)
    }

    pub fn a_ch(&self) -> SparseMat {
        let neg_n = self.neg_n();
        SparseMat::from_blocks(
            &[self.n1, self.n1],
            &[self.n1, self.n1],
            &[vec![Some(&self.m1), Some(&neg_n)], vec![Some(&self.tbk1), Some(&self.m1)]],
        )
    }

    /// `C_I = [U 0; 0 0]`, `(n2 + n1) x 2 n1`.
    pub fn c_i(&self) -> SparseMat {
        SparseMat::from_blocks(&[self.n2, self.n1], &[self.n1, self.n1], &[vec![Some(&self.u), None], vec![None, None]])
    }

    /// `C_T = [0 0; CT 0]`, `2 n1 x (n2 + n1)`.
    pub fn c_t(&self) -> SparseMat {
        SparseMat::from_blocks(&[self.n1, self.n1], &[self.n2, self.n1], &[vec![None, None], vec![Some(&self.ct), None]])
    }

    pub fn to_sparse(&self) -> SparseMat {
        let neg_n = self.neg_n();
        SparseMat::from_blocks(
            &[self.n2, self.n1, self.n1, self.n1],
            &[self.n2, self.n1, self.n1, self.n1],
            &[
                vec![Some(&self.a), Some(&self.bt), Some(&self.u), None],
                vec![Some(&self.b), None, None, None],
                vec![None, None, Some(&self.m1), Some(&neg_n)],
                vec![Some(&self.ct), None, Some(&self.tbk1), Some(&self.m1)],
            ],
        )
    }

    /// Pressure-block constraint vector for bordered direct solves of the full system.
    pub fn pressure_constraint(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim()];
        c[self.p_range()].copy_from_slice(&self.weights);
        c
    }

    /// Makes the pressure block of a full solution vector mean-free.
    pub fn deflate(&self, x: &mut [f64]) {
        let r = self.p_range();
        super::deflate_pressure(&mut x[r], &self.weights);
    }
}

impl LinOp for BlockSystem {
    fn dim(&self) -> usize {
        BlockSystem::dim(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (v, p, mu, phi) = (
            &x[self.v_range()],
            &x[self.p_range()],
            &x[self.mu_range()],
            &x[self.phi_range()],
        );
        let (yv, rest) = y.split_at_mut(self.n2);
        let (yp, rest) = rest.split_at_mut(self.n1);
        let (ymu, yphi) = rest.split_at_mut(self.n1);
        self.a.mul_vec(v, yv);
        self.bt.mul_vec_add(1.0, p, yv);
        self.u.mul_vec_add(1.0, mu, yv);
        self.b.mul_vec(v, yp);
        self.m1.mul_vec(mu, ymu);
        self.nmat.mul_vec_add(-1.0, phi, ymu);
        self.m1.mul_vec(phi, yphi);
        self.ct.mul_vec_add(1.0, v, yphi);
        self.tbk1.mul_vec_add(1.0, mu, yphi);
    }
}
