//! Structured triangulations of a rectangle and the P1 / P2 degree-of-freedom maps.
//!
//! Vertices are numbered row-major from the bottom-left corner. Each cell
//! `[x_i, x_{i+1}] x [y_j, y_{j+1}]` is cut along its bottom-left to top-right
//! diagonal. Scalar P2 nodes are the vertices followed by the edge midpoints.
//! Velocity unknowns are stored component-blocked: all x components, then all
//! y components.

use std::collections::HashMap;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Wall {
    Bottom,
    Right,
    Top,
    Left,
}

impl Wall {
    pub const ALL: [Wall; 4] = [Wall::Bottom, Wall::Right, Wall::Top, Wall::Left];

    fn bit(self) -> u8 {
        match self {
            Wall::Bottom => 1,
            Wall::Right => 2,
            Wall::Top => 4,
            Wall::Left => 8,
        }
    }

    /// Velocity component normal to the wall.
    pub fn normal_component(self) -> usize {
        match self {
            Wall::Left | Wall::Right => 0,
            Wall::Bottom | Wall::Top => 1,
        }
    }
}

/// Set of walls a boundary node lies on (corners lie on two).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WallSet(u8);

impl WallSet {
    pub fn contains(self, w: Wall) -> bool {
        self.0 & w.bit() != 0
    }
    pub fn insert(&mut self, w: Wall) {
        self.0 |= w.bit();
    }
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
    pub fn iter(self) -> impl Iterator<Item = Wall> {
        Wall::ALL.into_iter().filter(move |w| self.contains(*w))
    }
    fn intersection(self, other: WallSet) -> WallSet {
        WallSet(self.0 & other.0)
    }
}

#[derive(Clone, Debug)]
pub struct Mesh2D {
    pub width: f64,
    pub height: f64,
    pub nx: usize,
    pub ny: usize,
    pub vertices: Vec<[f64; 2]>,
    /// Positively oriented vertex triples.
    pub triangles: Vec<[usize; 3]>,
    /// Unique edges as `(lo, hi)` vertex pairs.
    pub edges: Vec<[usize; 2]>,
    /// Local edge `k` of triangle `t` joins local vertices `k` and `(k+1) % 3`.
    pub tri_edges: Vec<[usize; 3]>,
    pub vertex_walls: Vec<WallSet>,
    /// Wall of each boundary edge; empty for interior edges.
    pub edge_walls: Vec<WallSet>,
    pub diam: Vec<f64>,
    pub area: Vec<f64>,
}

impl Mesh2D {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }
    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Number of scalar P2 nodes (vertices plus edge midpoints).
    pub fn n_p2(&self) -> usize {
        self.n_vertices() + self.n_edges()
    }

    pub fn domain_area(&self) -> f64 {
        self.width * self.height
    }

    pub fn edge_midpoint(&self, e: usize) -> [f64; 2] {
        let [a, b] = self.edges[e];
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]
    }

    /// Coordinates of scalar P2 node `a`.
    pub fn p2_coord(&self, a: usize) -> [f64; 2] {
        let nv = self.n_vertices();
        if a < nv {
            self.vertices[a]
        } else {
            self.edge_midpoint(a - nv)
        }
    }

    /// Walls a scalar P2 node lies on.
    pub fn p2_walls(&self, a: usize) -> WallSet {
        let nv = self.n_vertices();
        if a < nv {
            self.vertex_walls[a]
        } else {
            self.edge_walls[a - nv]
        }
    }

    /// The six scalar P2 nodes of a triangle: vertices, then edges (01, 12, 20).
    pub fn p2_nodes(&self, t: usize) -> [usize; 6] {
        let [a, b, c] = self.triangles[t];
        let nv = self.n_vertices();
        let e = self.tri_edges[t];
        [a, b, c, nv + e[0], nv + e[1], nv + e[2]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (p, q, r) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
    }

    pub fn max_diam(&self) -> f64 {
        self.diam.iter().cloned().fold(0.0, f64::max)
    }
}

/// Builds the structured mesh of `(0, width) x (0, height)` with `2 nx ny` triangles.
pub fn build_rect_mesh(width: f64, height: f64, nx: usize, ny: usize) -> Result<Mesh2D> {
    if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
        return Err(Error::invalid(format!("rectangle must have positive size, got {width} x {height}")));
    }
    if nx == 0 || ny == 0 {
        return Err(Error::invalid(format!("need nx, ny >= 1, got {nx} x {ny}")));
    }
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    let mut vertex_walls = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            // exact endpoints: avoid i*h drifting from `width`
            let x = if i == nx { width } else { width * i as f64 / nx as f64 };
            let y = if j == ny { height } else { height * j as f64 / ny as f64 };
            vertices.push([x, y]);
            let mut w = WallSet::default();
            if j == 0 {
                w.insert(Wall::Bottom);
            }
            if j == ny {
                w.insert(Wall::Top);
            }
            if i == 0 {
                w.insert(Wall::Left);
            }
            if i == nx {
                w.insert(Wall::Right);
            }
            vertex_walls.push(w);
        }
    }

    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let v00 = vid(i, j);
            let v10 = vid(i + 1, j);
            let v01 = vid(i, j + 1);
            let v11 = vid(i + 1, j + 1);
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }

    let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut edges = Vec::new();
    let mut tri_edges = Vec::with_capacity(triangles.len());
    for tri in &triangles {
        let mut te = [0usize; 3];
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            let id = *edge_index.entry(key).or_insert_with(|| {
                edges.push([key.0, key.1]);
                edges.len() - 1
            });
            te[k] = id;
        }
        tri_edges.push(te);
    }

    let edge_walls = edges
        .iter()
        .map(|&[a, b]| vertex_walls[a].intersection(vertex_walls[b]))
        .collect();

    let mut diam = Vec::with_capacity(triangles.len());
    let mut area = Vec::with_capacity(triangles.len());
    for tri in &triangles {
        let p: Vec<[f64; 2]> = tri.iter().map(|&v| vertices[v]).collect();
        let d = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        diam.push(d(p[0], p[1]).max(d(p[1], p[2])).max(d(p[2], p[0])));
        area.push(0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1])));
    }

    Ok(Mesh2D {
        width,
        height,
        nx,
        ny,
        vertices,
        triangles,
        edges,
        tri_edges,
        vertex_walls,
        edge_walls,
        diam,
        area,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WallBc {
    NoSlip,
    FreeSlip,
}

/// Velocity boundary condition per wall.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VelocityBc {
    pub bottom: WallBc,
    pub right: WallBc,
    pub top: WallBc,
    pub left: WallBc,
}

impl VelocityBc {
    pub fn all_noslip() -> Self {
        Self {
            bottom: WallBc::NoSlip,
            right: WallBc::NoSlip,
            top: WallBc::NoSlip,
            left: WallBc::NoSlip,
        }
    }

    /// Rising-bubble setting: no-slip top and bottom, free-slip on the sides.
    pub fn rising_bubble() -> Self {
        Self {
            bottom: WallBc::NoSlip,
            right: WallBc::FreeSlip,
            top: WallBc::NoSlip,
            left: WallBc::FreeSlip,
        }
    }

    pub fn on(&self, w: Wall) -> WallBc {
        match w {
            Wall::Bottom => self.bottom,
            Wall::Right => self.right,
            Wall::Top => self.top,
            Wall::Left => self.left,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DofMap {
    /// Scalar P1 unknowns (pressure, phase field, chemical potential).
    pub n1: usize,
    /// Scalar P2 nodes.
    pub n_p2: usize,
    /// Velocity unknowns, `2 * n_p2`.
    pub n2: usize,
    /// Constrained velocity unknowns.
    pub dirichlet: Vec<bool>,
    /// Pressure is determined up to constants and handled by deflation.
    pub pressure_mean_constraint: bool,
}

impl DofMap {
    #[inline]
    pub fn vel(&self, comp: usize, node: usize) -> usize {
        comp * self.n_p2 + node
    }

    pub fn n_constrained(&self) -> usize {
        self.dirichlet.iter().filter(|&&m| m).count()
    }

    /// Sets constrained entries of a velocity vector to zero.
    pub fn project(&self, v: &mut [f64]) {
        for (x, &m) in v.iter_mut().zip(&self.dirichlet) {
            if m {
                *x = 0.0;
            }
        }
    }
}

pub fn build_dofmap(mesh: &Mesh2D, bc: &VelocityBc) -> DofMap {
    let n_p2 = mesh.n_p2();
    let mut dirichlet = vec![false; 2 * n_p2];
    for a in 0..n_p2 {
        for w in mesh.p2_walls(a).iter() {
            match bc.on(w) {
                WallBc::NoSlip => {
                    dirichlet[a] = true;
                    dirichlet[n_p2 + a] = true;
                }
                WallBc::FreeSlip => dirichlet[w.normal_component() * n_p2 + a] = true,
            }
        }
    }
    DofMap {
        n1: mesh.n_vertices(),
        n_p2,
        n2: 2 * n_p2,
        dirichlet,
        pressure_mean_constraint: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_mesh_counts() {
        let m = build_rect_mesh(1.0, 2.0, 1, 2).unwrap();
        assert_eq!(m.n_triangles(), 4);
        assert_eq!(m.n_vertices(), 6);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(build_rect_mesh(0.0, 1.0, 2, 2).is_err());
        assert!(build_rect_mesh(1.0, -1.0, 2, 2).is_err());
        assert!(build_rect_mesh(1.0, 1.0, 0, 2).is_err());
    }

    #[test]
    fn areas_tile_and_orientation_positive() {
        let m = build_rect_mesh(1.0, 2.0, 16, 32).unwrap();
        let total: f64 = (0..m.n_triangles()).map(|t| m.signed_area(t)).sum();
        assert!((total - 2.0).abs() <= 1e-12 * 2.0);
        assert!((0..m.n_triangles()).all(|t| m.signed_area(t) > 0.0));
    }

    #[test]
    fn p2_count_matches_euler_formula() {
        let m = build_rect_mesh(1.0, 2.0, 16, 32).unwrap();
        // enumerate edges independently from the triangle list
        let mut set = std::collections::BTreeSet::new();
        for t in &m.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                set.insert((a.min(b), a.max(b)));
            }
        }
        let (v, e, f) = (m.n_vertices() as i64, set.len() as i64, m.n_triangles() as i64);
        assert_eq!(v - e + f, 1);
        assert_eq!(m.n_p2(), (v + e) as usize);
        assert_eq!(m.n_p2(), 2145);
    }

    #[test]
    fn interior_edges_shared_by_two_triangles() {
        let m = build_rect_mesh(1.0, 2.0, 4, 8).unwrap();
        let mut count = vec![0; m.n_edges()];
        for te in &m.tri_edges {
            for &e in te {
                count[e] += 1;
            }
        }
        for (e, &c) in count.iter().enumerate() {
            let expect = if m.edge_walls[e].is_empty() { 2 } else { 1 };
            assert_eq!(c, expect, "edge {e}");
        }
    }

    #[test]
    fn midpoints_are_exact_means() {
        let m = build_rect_mesh(1.0, 2.0, 3, 5).unwrap();
        for e in 0..m.n_edges() {
            let [a, b] = m.edges[e];
            let mid = m.edge_midpoint(e);
            for c in 0..2 {
                assert_eq!(mid[c], (m.vertices[a][c] + m.vertices[b][c]) / 2.0);
            }
        }
    }

    #[test]
    fn doubling_resolution_halves_diameter() {
        let a = build_rect_mesh(1.0, 2.0, 4, 8).unwrap();
        let b = build_rect_mesh(1.0, 2.0, 8, 16).unwrap();
        assert!((b.max_diam() - 0.5 * a.max_diam()).abs() < 1e-15);
        assert!((b.area[0] - 0.25 * a.area[0]).abs() < 1e-15);
    }

    #[test]
    fn all_noslip_masks_every_boundary_node() {
        let m = build_rect_mesh(1.0, 1.0, 2, 2).unwrap();
        let d = build_dofmap(&m, &VelocityBc::all_noslip());
        for a in 0..m.n_p2() {
            let on_boundary = !m.p2_walls(a).is_empty();
            assert_eq!(d.dirichlet[a], on_boundary);
            assert_eq!(d.dirichlet[d.n_p2 + a], on_boundary);
        }
    }

    #[test]
    fn free_slip_constrains_normal_component_only() {
        let m = build_rect_mesh(1.0, 2.0, 4, 8).unwrap();
        let d = build_dofmap(&m, &VelocityBc::rising_bubble());
        for a in 0..m.n_p2() {
            let [x, y] = m.p2_coord(a);
            let side = (x == 0.0 || x == 1.0) && y > 0.0 && y < 2.0;
            if side {
                assert!(d.dirichlet[d.vel(0, a)]);
                assert!(!d.dirichlet[d.vel(1, a)]);
            }
        }
    }

    #[test]
    fn constrained_count_by_enumeration() {
        let (nx, ny) = (4, 8);
        let m = build_rect_mesh(1.0, 2.0, nx, ny).unwrap();
        let d = build_dofmap(&m, &VelocityBc::rising_bubble());
        // P2 nodes per horizontal wall: 2 nx + 1; strictly interior side nodes: 2 ny - 1
        let top_bottom = 2 * (2 * nx + 1);
        let sides = 2 * (2 * ny - 1);
        assert_eq!(d.n_constrained(), 2 * top_bottom + sides);
        assert_eq!(d.n_constrained(), 66);
    }

    #[test]
    fn no_interior_dof_is_masked() {
        let m = build_rect_mesh(1.0, 2.0, 5, 7).unwrap();
        let d = build_dofmap(&m, &VelocityBc::rising_bubble());
        for a in 0..m.n_p2() {
            if m.p2_walls(a).is_empty() {
                assert!(!d.dirichlet[a] && !d.dirichlet[d.n_p2 + a]);
            }
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let m = build_rect_mesh(1.0, 2.0, 3, 4).unwrap();
        let d = build_dofmap(&m, &VelocityBc::rising_bubble());
        let mut v: Vec<f64> = (0..d.n2).map(|i| (i as f64).sin()).collect();
        d.project(&mut v);
        let once = v.clone();
        d.project(&mut v);
        assert_eq!(once, v);
    }
}
