//! Finite-element assembly for Taylor-Hood (P2 velocity, P1 pressure) and the
//! P1 phase-field / chemical-potential spaces.
//!
//! All integrals use one symmetric 7-point triangle rule that is exact for
//! polynomials of degree 5. Element loops run in triangle order so assembled
//! matrices are reproducible bit for bit.

use crate::error::{Error, Result};
use crate::mesh::{build_dofmap, build_rect_mesh, DofMap, Mesh2D, VelocityBc};
use crate::sparse::{SparseMat, TripletBuilder};

pub const NQ: usize = 7;

/// Triangle quadrature in barycentric coordinates; weights sum to one.
#[derive(Clone, Debug)]
pub struct Quadrature {
    pub bary: [[f64; 3]; NQ],
    pub weights: [f64; NQ],
}

impl Quadrature {
    /// Degree-5 rule (Radon / Strang-Fix).
    pub fn degree5() -> Self {
        let a1 = 0.059_715_871_789_769_820_459_117_580_973;
        let b1 = 0.470_142_064_105_115_089_770_441_209_513;
        let w1 = 0.132_394_152_788_506_180_786_093_020_562;
        let a2 = 0.797_426_985_353_087_322_398_025_276_169;
        let b2 = 0.101_286_507_323_456_338_800_987_361_915;
        let w2 = 0.125_939_180_544_827_152_595_683_945_500;
        let c = 1.0 / 3.0;
        Self {
            bary: [
                [c, c, c],
                [a1, b1, b1],
                [b1, a1, b1],
                [b1, b1, a1],
                [a2, b2, b2],
                [b2, a2, b2],
                [b2, b2, a2],
            ],
            weights: [0.225, w1, w1, w1, w2, w2, w2],
        }
    }
}

/// Values of the six P2 shape functions at barycentric point `l`.
fn p2_values(l: &[f64; 3]) -> [f64; 6] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ]
}

fn p2_gradients(l: &[f64; 3], g: &[[f64; 2]; 3]) -> [[f64; 2]; 6] {
    let mut out = [[0.0; 2]; 6];
    for i in 0..3 {
        let s = 4.0 * l[i] - 1.0;
        out[i] = [s * g[i][0], s * g[i][1]];
    }
    for (k, (i, j)) in [(0usize, 1usize), (1, 2), (2, 0)].into_iter().enumerate() {
        for d in 0..2 {
            out[3 + k][d] = 4.0 * (l[j] * g[i][d] + l[i] * g[j][d]);
        }
    }
    out
}

/// Per-triangle geometry and shape-function gradients at quadrature points.
#[derive(Clone, Debug)]
pub struct ElemGeo {
    pub area: f64,
    /// Gradients of the barycentric coordinates (= P1 shape gradients).
    pub grad_l: [[f64; 2]; 3],
    pub p2_grad: [[[f64; 2]; 6]; NQ],
}

/// Mesh, degree-of-freedom map and cached element data.
#[derive(Clone, Debug)]
pub struct FeSpace {
    pub mesh: Mesh2D,
    pub dofs: DofMap,
    pub quad: Quadrature,
    pub p2_val: [[f64; 6]; NQ],
    pub elems: Vec<ElemGeo>,
}

impl FeSpace {
    pub fn new(mesh: Mesh2D, bc: &VelocityBc) -> Self {
        let dofs = build_dofmap(&mesh, bc);
        let quad = Quadrature::degree5();
        let mut p2_val = [[0.0; 6]; NQ];
        for q in 0..NQ {
            p2_val[q] = p2_values(&quad.bary[q]);
        }
        let elems = (0..mesh.n_triangles())
            .map(|t| {
                let [a, b, c] = mesh.triangles[t];
                let (p0, p1, p2) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
                let area = mesh.area[t];
                let s = 1.0 / (2.0 * area);
                let grad_l = [
                    [(p1[1] - p2[1]) * s, (p2[0] - p1[0]) * s],
                    [(p2[1] - p0[1]) * s, (p0[0] - p2[0]) * s],
                    [(p0[1] - p1[1]) * s, (p1[0] - p0[0]) * s],
                ];
                let mut p2_grad = [[[0.0; 2]; 6]; NQ];
                for q in 0..NQ {
                    p2_grad[q] = p2_gradients(&quad.bary[q], &grad_l);
                }
                ElemGeo { area, grad_l, p2_grad }
            })
            .collect();
        Self {
            mesh,
            dofs,
            quad,
            p2_val,
            elems,
        }
    }

    /// Rectangle `(0, width) x (0, height)` with the given walls.
    pub fn rectangle(width: f64, height: f64, nx: usize, ny: usize, bc: &VelocityBc) -> Result<Self> {
        Ok(Self::new(build_rect_mesh(width, height, nx, ny)?, bc))
    }

    pub fn n1(&self) -> usize {
        self.dofs.n1
    }
    pub fn n2(&self) -> usize {
        self.dofs.n2
    }
    pub fn n_p2(&self) -> usize {
        self.dofs.n_p2
    }

    #[inline]
    pub fn weight(&self, t: usize, q: usize) -> f64 {
        self.quad.weights[q] * self.elems[t].area
    }

    /// P1 field value at quadrature point `q` of triangle `t`.
    #[inline]
    pub fn p1_at(&self, t: usize, q: usize, f: &[f64]) -> f64 {
        let tri = &self.mesh.triangles[t];
        let l = &self.quad.bary[q];
        l[0] * f[tri[0]] + l[1] * f[tri[1]] + l[2] * f[tri[2]]
    }

    /// Constant gradient of a P1 field on triangle `t`.
    #[inline]
    pub fn p1_grad(&self, t: usize, f: &[f64]) -> [f64; 2] {
        let tri = &self.mesh.triangles[t];
        let g = &self.elems[t].grad_l;
        let mut out = [0.0; 2];
        for i in 0..3 {
            out[0] += f[tri[i]] * g[i][0];
            out[1] += f[tri[i]] * g[i][1];
        }
        out
    }

    /// Velocity (component-blocked P2 vector) at quadrature point `q` of triangle `t`.
    #[inline]
    pub fn vel_at(&self, t: usize, q: usize, v: &[f64]) -> [f64; 2] {
        let nodes = self.mesh.p2_nodes(t);
        let n = self.dofs.n_p2;
        let val = &self.p2_val[q];
        let mut out = [0.0; 2];
        for a in 0..6 {
            out[0] += val[a] * v[nodes[a]];
            out[1] += val[a] * v[n + nodes[a]];
        }
        out
    }

    /// Velocity gradient `G[c][k] = d v_c / d x_k` at quadrature point `q`.
    pub fn vel_grad_at(&self, t: usize, q: usize, v: &[f64]) -> [[f64; 2]; 2] {
        let nodes = self.mesh.p2_nodes(t);
        let n = self.dofs.n_p2;
        let g = &self.elems[t].p2_grad[q];
        let mut out = [[0.0; 2]; 2];
        for a in 0..6 {
            for k in 0..2 {
                out[0][k] += v[nodes[a]] * g[a][k];
                out[1][k] += v[n + nodes[a]] * g[a][k];
            }
        }
        out
    }

    /// Total integral of `f(x)` evaluated at all quadrature points.
    pub fn integrate(&self, mut f: impl FnMut(usize, usize) -> f64) -> f64 {
        let mut s = 0.0;
        for t in 0..self.mesh.n_triangles() {
            for q in 0..NQ {
                s += self.weight(t, q) * f(t, q);
            }
        }
        s
    }

    /// Lagrange interpolant of `f` on the P1 nodes.
    pub fn interpolate_p1(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        self.mesh.vertices.iter().map(|&x| f(x)).collect()
    }

    /// Lagrange interpolant of a vector field on the P2 nodes, component-blocked.
    pub fn interpolate_p2(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
        let n = self.dofs.n_p2;
        let mut v = vec![0.0; 2 * n];
        for a in 0..n {
            let val = f(self.mesh.p2_coord(a));
            v[a] = val[0];
            v[n + a] = val[1];
        }
        v
    }

    /// Vertex values of a P2 velocity field (for output).
    pub fn velocity_at_vertices(&self, v: &[f64]) -> Vec<[f64; 2]> {
        let n = self.dofs.n_p2;
        (0..self.mesh.n_vertices()).map(|a| [v[a], v[n + a]]).collect()
    }

    /// Weights `w` with `w . p = int p` for P1 fields (row sums of the mass matrix).
    pub fn p1_integral_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n1()];
        for (t, tri) in self.mesh.triangles.iter().enumerate() {
            for &v in tri {
                w[v] += self.elems[t].area / 3.0;
            }
        }
        w
    }
}

/// Coefficient for P1 operators: a constant or a nodal P1 field.
#[derive(Clone, Copy, Debug)]
pub enum Coef<'a> {
    Const(f64),
    P1(&'a [f64]),
}

impl Coef<'_> {
    #[inline]
    fn at(&self, space: &FeSpace, t: usize, q: usize) -> f64 {
        match self {
            Coef::Const(c) => *c,
            Coef::P1(f) => space.p1_at(t, q, f),
        }
    }
}

/// `(w psi_j, psi_i)` on P1.
pub fn assemble_mass_p1(space: &FeSpace, weight: Coef) -> SparseMat {
    let n = space.n1();
    let mut b = TripletBuilder::with_capacity(n, n, 9 * space.mesh.n_triangles());
    for (t, tri) in space.mesh.triangles.iter().enumerate() {
        let mut loc = [[0.0; 3]; 3];
        for q in 0..NQ {
            let w = space.weight(t, q) * weight.at(space, t, q);
            let l = &space.quad.bary[q];
            for i in 0..3 {
                for j in 0..3 {
                    loc[i][j] += w * l[i] * l[j];
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                b.push(tri[i], tri[j], loc[i][j]);
            }
        }
    }
    b.build()
}

/// Row-sum lumping.
pub fn lump(m: &SparseMat) -> SparseMat {
    SparseMat::from_diagonal(&m.row_sums())
}

/// `(w grad psi_j, grad psi_i)` on P1.
pub fn assemble_stiff_p1(space: &FeSpace, weight: Coef) -> SparseMat {
    let n = space.n1();
    let mut b = TripletBuilder::with_capacity(n, n, 9 * space.mesh.n_triangles());
    for (t, tri) in space.mesh.triangles.iter().enumerate() {
        let wsum: f64 = (0..NQ).map(|q| space.weight(t, q) * weight.at(space, t, q)).sum();
        let g = &space.elems[t].grad_l;
        for i in 0..3 {
            for j in 0..3 {
                b.push(tri[i], tri[j], wsum * (g[i][0] * g[j][0] + g[i][1] * g[j][1]));
            }
        }
    }
    b.build()
}

/// Transporting field `rho v + J` of the trilinear convection form, evaluated
/// exactly at quadrature points: `rho` is nodal P1, `v` nodal P2 and `J` is
/// piecewise constant.
#[derive(Clone, Debug)]
pub struct Advector {
    pub rho: Vec<f64>,
    pub v: Vec<f64>,
    pub flux: Vec<[f64; 2]>,
}

impl Advector {
    pub fn zero(space: &FeSpace) -> Self {
        Self {
            rho: vec![0.0; space.n1()],
            v: vec![0.0; space.n2()],
            flux: vec![[0.0; 2]; space.mesh.n_triangles()],
        }
    }

    #[inline]
    pub fn at(&self, space: &FeSpace, t: usize, q: usize) -> [f64; 2] {
        let r = space.p1_at(t, q, &self.rho);
        let v = space.vel_at(t, q, &self.v);
        [r * v[0] + self.flux[t][0], r * v[1] + self.flux[t][1]]
    }
}

/// Nodal coefficient fields shared by the velocity and pressure-space operators.
#[derive(Clone, Copy, Debug)]
pub struct MomentumCoefficients<'a> {
    pub rho_km1: &'a [f64],
    pub rho_km2: &'a [f64],
    pub eta_km1: &'a [f64],
    pub advector: &'a Advector,
    pub tau: f64,
}

#[derive(Clone, Debug)]
pub struct VelocityBlocks {
    pub m2: SparseMat,
    pub ta: SparseMat,
    pub k2: SparseMat,
}

impl VelocityBlocks {
    /// `A = M2 + Ta + K2`
    pub fn a(&self) -> SparseMat {
        self.m2.add(&self.ta).add(&self.k2)
    }

    /// Row/column elimination of Dirichlet unknowns: unit diagonal in `M2`,
    /// constrained rows and columns of `Ta` and `K2` removed.
    pub fn constrained(&self, dofs: &DofMap) -> VelocityBlocks {
        let mask = &dofs.dirichlet;
        VelocityBlocks {
            m2: self.m2.constrain_symmetric(mask, 1.0),
            ta: self.ta.constrain_symmetric(mask, 0.0),
            k2: self.k2.constrain_symmetric(mask, 0.0),
        }
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("time step must be positive, got {tau}")))
    }
}

/// Velocity blocks without boundary conditions applied.
pub fn assemble_velocity_blocks_unconstrained(space: &FeSpace, c: &MomentumCoefficients) -> Result<VelocityBlocks> {
    check_tau(c.tau)?;
    let n2 = space.n2();
    let np2 = space.n_p2();
    let nt = space.mesh.n_triangles();
    let mut bm = TripletBuilder::with_capacity(n2, n2, 72 * nt);
    let mut bt = TripletBuilder::with_capacity(n2, n2, 72 * nt);
    let mut bk = TripletBuilder::with_capacity(n2, n2, 144 * nt);
    for t in 0..nt {
        let nodes = space.mesh.p2_nodes(t);
        let mut m = [[0.0; 6]; 6];
        let mut ta = [[0.0; 6]; 6];
        // k[d][c][a][b]: row (d, a), column (c, b)
        let mut k = [[[[0.0; 6]; 6]; 2]; 2];
        for q in 0..NQ {
            let w = space.weight(t, q);
            let rho_avg = 0.5 * (space.p1_at(t, q, c.rho_km1) + space.p1_at(t, q, c.rho_km2)) / c.tau;
            let eta = space.p1_at(t, q, c.eta_km1);
            let u = c.advector.at(space, t, q);
            let val = &space.p2_val[q];
            let g = &space.elems[t].p2_grad[q];
            let ugrad: [f64; 6] = std::array::from_fn(|a| u[0] * g[a][0] + u[1] * g[a][1]);
            for a in 0..6 {
                for b in 0..6 {
                    m[a][b] += w * rho_avg * val[a] * val[b];
                    ta[a][b] += 0.5 * w * (ugrad[b] * val[a] - ugrad[a] * val[b]);
                    let gg = g[a][0] * g[b][0] + g[a][1] * g[b][1];
                    for d in 0..2 {
                        for cc in 0..2 {
                            let diag = if d == cc { gg } else { 0.0 };
                            k[d][cc][a][b] += w * eta * (diag + g[b][d] * g[a][cc]);
                        }
                    }
                }
            }
        }
        for comp in 0..2 {
            for a in 0..6 {
                let i = comp * np2 + nodes[a];
                for b in 0..6 {
                    let j = comp * np2 + nodes[b];
                    bm.push(i, j, m[a][b]);
                    bt.push(i, j, ta[a][b]);
                }
            }
        }
        for d in 0..2 {
            for cc in 0..2 {
                for a in 0..6 {
                    for b in 0..6 {
                        bk.push(d * np2 + nodes[a], cc * np2 + nodes[b], k[d][cc][a][b]);
                    }
                }
            }
        }
    }
    Ok(VelocityBlocks {
        m2: bm.build(),
        ta: bt.build(),
        k2: bk.build(),
    })
}

/// `M2`, `Ta`, `K2` with Dirichlet constraints eliminated.
pub fn assemble_velocity_blocks(space: &FeSpace, c: &MomentumCoefficients) -> Result<VelocityBlocks> {
    Ok(assemble_velocity_blocks_unconstrained(space, c)?.constrained(&space.dofs))
}

/// Divergence and phase-field coupling blocks.
#[derive(Clone, Debug)]
pub struct CouplingBlocks {
    /// `b_ij = -(div b2_j, b1_i)`, `N1 x N2`.
    pub b: SparseMat,
    /// `xi_ij = -(b1_j grad phi, b2_i)`, `N2 x N1`.
    pub u: SparseMat,
    /// `t_ij = (b2_j phi, grad b1_i)`, `N1 x N2`.
    pub t: SparseMat,
}

pub fn assemble_coupling(space: &FeSpace, phi_km1: &[f64]) -> CouplingBlocks {
    let (n1, n2, np2) = (space.n1(), space.n2(), space.n_p2());
    let nt = space.mesh.n_triangles();
    let mut bb = TripletBuilder::with_capacity(n1, n2, 36 * nt);
    let mut bu = TripletBuilder::with_capacity(n2, n1, 36 * nt);
    let mut btt = TripletBuilder::with_capacity(n1, n2, 36 * nt);
    for t in 0..nt {
        let tri = space.mesh.triangles[t];
        let nodes = space.mesh.p2_nodes(t);
        let gl = &space.elems[t].grad_l;
        let gphi = space.p1_grad(t, phi_km1);
        // loc_b[i][c][b], loc_u[d][a][j], loc_t[i][c][b]
        let mut lb = [[[0.0; 6]; 2]; 3];
        let mut lu = [[[0.0; 3]; 6]; 2];
        let mut lt = [[[0.0; 6]; 2]; 3];
        for q in 0..NQ {
            let w = space.weight(t, q);
            let l = &space.quad.bary[q];
            let val = &space.p2_val[q];
            let g = &space.elems[t].p2_grad[q];
            let phi = space.p1_at(t, q, phi_km1);
            for i in 0..3 {
                for c in 0..2 {
                    for b in 0..6 {
                        lb[i][c][b] -= w * g[b][c] * l[i];
                        lt[i][c][b] += w * phi * val[b] * gl[i][c];
                    }
                }
            }
            for d in 0..2 {
                for a in 0..6 {
                    for j in 0..3 {
                        lu[d][a][j] -= w * l[j] * gphi[d] * val[a];
                    }
                }
            }
        }
        for i in 0..3 {
            for c in 0..2 {
                for b in 0..6 {
                    let col = c * np2 + nodes[b];
                    bb.push(tri[i], col, lb[i][c][b]);
                    btt.push(tri[i], col, lt[i][c][b]);
                }
            }
        }
        for d in 0..2 {
            for a in 0..6 {
                for j in 0..3 {
                    bu.push(d * np2 + nodes[a], tri[j], lu[d][a][j]);
                }
            }
        }
    }
    let mask = &space.dofs.dirichlet;
    CouplingBlocks {
        b: bb.build().zero_rows_cols(None, Some(mask)),
        u: bu.build().zero_rows_cols(Some(mask), None),
        t: btt.build().zero_rows_cols(None, Some(mask)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MassKind {
    Consistent,
    Lumped,
}

/// Penalty-curvature matrix `(W''_+(phi) psi_j, psi_i)` with `W''_+ = s` where `|phi| > 1`.
///
/// The consistent variant evaluates the indicator at quadrature points (the same
/// points where the residual evaluates `W'_+`); the lumped variant uses nodal
/// values against the lumped mass.
pub fn assemble_lambda(space: &FeSpace, phi: &[f64], s: f64, kind: MassKind) -> SparseMat {
    match kind {
        MassKind::Consistent => {
            let n = space.n1();
            let mut b = TripletBuilder::new(n, n);
            for (t, tri) in space.mesh.triangles.iter().enumerate() {
                let mut loc = [[0.0; 3]; 3];
                let mut any = false;
                for q in 0..NQ {
                    if space.p1_at(t, q, phi).abs() > 1.0 {
                        any = true;
                        let w = space.weight(t, q) * s;
                        let l = &space.quad.bary[q];
                        for i in 0..3 {
                            for j in 0..3 {
                                loc[i][j] += w * l[i] * l[j];
                            }
                        }
                    }
                }
                if any {
                    for i in 0..3 {
                        for j in 0..3 {
                            b.push(tri[i], tri[j], loc[i][j]);
                        }
                    }
                }
            }
            b.build()
        }
        MassKind::Lumped => {
            let w = space.p1_integral_weights();
            let d: Vec<f64> = w
                .iter()
                .zip(phi)
                .map(|(&wi, &p)| if p.abs() > 1.0 { s * wi } else { 0.0 })
                .collect();
            SparseMat::from_diagonal(&d)
        }
    }
}

/// Nodal active-set indicator (`|phi_i| > 1`) used by the lumped penalty matrix.
pub fn active_set(phi: &[f64]) -> Vec<bool> {
    phi.iter().map(|p| p.abs() > 1.0).collect()
}

/// Pressure-space operators for the convection-diffusion Schur approximation.
#[derive(Clone, Debug)]
pub struct PressureOps {
    /// Pressure mass matrix (= `M1`).
    pub mp: SparseMat,
    /// Pressure Laplacian (= `K1`), pure Neumann.
    pub kp: SparseMat,
    /// `M2,p + Ta,p + K2,p`: the momentum operator on P1.
    pub ap: SparseMat,
}

/// Builds `Mp`, `Kp` and `Ap`. The viscous part of `Ap` is the scalar analogue
/// `(eta grad psi_j, grad psi_i)` of the velocity operator.
pub fn assemble_pressure_ops(space: &FeSpace, c: &MomentumCoefficients) -> Result<PressureOps> {
    check_tau(c.tau)?;
    let n = space.n1();
    let mut b = TripletBuilder::with_capacity(n, n, 9 * space.mesh.n_triangles());
    for (t, tri) in space.mesh.triangles.iter().enumerate() {
        let gl = &space.elems[t].grad_l;
        let mut loc = [[0.0; 3]; 3];
        for q in 0..NQ {
            let w = space.weight(t, q);
            let l = &space.quad.bary[q];
            let rho_avg = 0.5 * (space.p1_at(t, q, c.rho_km1) + space.p1_at(t, q, c.rho_km2)) / c.tau;
            let eta = space.p1_at(t, q, c.eta_km1);
            let u = c.advector.at(space, t, q);
            let ug: [f64; 3] = std::array::from_fn(|i| u[0] * gl[i][0] + u[1] * gl[i][1]);
            for i in 0..3 {
                for j in 0..3 {
                    let mass = rho_avg * l[i] * l[j];
                    let conv = 0.5 * (ug[j] * l[i] - ug[i] * l[j]);
                    let diff = eta * (gl[i][0] * gl[j][0] + gl[i][1] * gl[j][1]);
                    loc[i][j] += w * (mass + conv + diff);
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                b.push(tri[i], tri[j], loc[i][j]);
            }
        }
    }
    Ok(PressureOps {
        mp: assemble_mass_p1(space, Coef::Const(1.0)),
        kp: assemble_stiff_p1(space, Coef::Const(1.0)),
        ap: b.build(),
    })
}

/// `(f(phi_h), psi_i)` for a pointwise nonlinearity `f`, evaluated at quadrature points.
pub fn load_p1_nonlinear(space: &FeSpace, phi: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; space.n1()];
    for (t, tri) in space.mesh.triangles.iter().enumerate() {
        for q in 0..NQ {
            let w = space.weight(t, q) * f(space.p1_at(t, q, phi));
            if w != 0.0 {
                let l = &space.quad.bary[q];
                for i in 0..3 {
                    out[tri[i]] += w * l[i];
                }
            }
        }
    }
    out
}

/// `(c(x) * f(x), b2_i)` for a P1 scalar coefficient and a vector field given
/// per quadrature point.
pub fn load_velocity(space: &FeSpace, mut f: impl FnMut(usize, usize) -> [f64; 2]) -> Vec<f64> {
    let np2 = space.n_p2();
    let mut out = vec![0.0; space.n2()];
    for t in 0..space.mesh.n_triangles() {
        let nodes = space.mesh.p2_nodes(t);
        for q in 0..NQ {
            let w = space.weight(t, q);
            let val = f(t, q);
            let sh = &space.p2_val[q];
            for a in 0..6 {
                out[nodes[a]] += w * val[0] * sh[a];
                out[np2 + nodes[a]] += w * val[1] * sh[a];
            }
        }
    }
    space.dofs.dirichlet.iter().zip(out.iter_mut()).for_each(|(&m, o)| {
        if m {
            *o = 0.0
        }
    });
    out
}
