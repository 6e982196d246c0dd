//! Mixed finite-element discretization of the coupled Stokes and damage
//! system: P2 velocity, P0 pressure, P1 damage.

pub mod assembly;
pub mod dual;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod sampling;
pub mod solver;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
pub use mesh::{build_dome_mesh, BoundaryEdge, DamageTag, DomeMesh, GeometryConfig, Side, VelocityTag};
use quadrature::{gauss3, TriangleRule};

/// Physical and numerical constants of the coupled system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsConfig {
    pub rho: f64,
    /// Gravity vector.
    pub g: [f64; 2],
    /// Damage diffusion coefficient.
    pub xi: f64,
    /// Streamline-upwind constant `C` in `δ_h = C h / (2‖u‖ + ε)`.
    #[serde(default = "default_supg")]
    pub supg: f64,
    #[serde(default = "default_eps_vel")]
    pub eps_vel: f64,
    #[serde(default = "default_quadrature")]
    pub quadrature_degree: usize,
}

fn default_supg() -> f64 {
    1.0
}

fn default_eps_vel() -> f64 {
    1e-10
}

fn default_quadrature() -> usize {
    4
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        PhysicsConfig {
            rho: 1.0,
            g: [0.0, -6.0],
            xi: 0.05,
            supg: default_supg(),
            eps_vel: default_eps_vel(),
            quadrature_degree: default_quadrature(),
        }
    }
}

impl PhysicsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 0.0) || !(self.rho > 0.0) || !(self.supg >= 0.0) || !(self.eps_vel > 0.0) {
            return Err(contract(format!("invalid physics constants {self:?}")));
        }
        if self.quadrature_degree < 4 {
            return Err(contract("quadrature degree must be at least 4"));
        }
        Ok(())
    }
}

/// Global numbering: interleaved velocity components on P2 nodes, then one
/// pressure per cell, then damage on vertices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DofMap {
    pub n_p2: usize,
    pub n_cells: usize,
    pub n_vertices: usize,
}

impl DofMap {
    #[inline]
    pub fn u(&self, node: usize, comp: usize) -> usize {
        2 * node + comp
    }
    #[inline]
    pub fn p(&self, cell: usize) -> usize {
        2 * self.n_p2 + cell
    }
    #[inline]
    pub fn phi(&self, vertex: usize) -> usize {
        2 * self.n_p2 + self.n_cells + vertex
    }
    pub fn len(&self) -> usize {
        2 * self.n_p2 + self.n_cells + self.n_vertices
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn velocity_range(&self) -> std::ops::Range<usize> {
        0..2 * self.n_p2
    }
    pub fn pressure_range(&self) -> std::ops::Range<usize> {
        2 * self.n_p2..2 * self.n_p2 + self.n_cells
    }
    pub fn damage_range(&self) -> std::ops::Range<usize> {
        2 * self.n_p2 + self.n_cells..self.len()
    }
}

/// Reference values of the basis at one quadrature point.
#[derive(Clone, Debug)]
pub struct QpBasis {
    pub weight: f64,
    pub l: [f64; 3],
    pub n: [f64; 6],
    /// `∂Nₐ/∂L_k`.
    pub dn_dl: [[f64; 3]; 6],
}

impl QpBasis {
    pub fn at(l: [f64; 3], weight: f64) -> Self {
        let mut n = [0.0; 6];
        let mut dn = [[0.0; 3]; 6];
        for k in 0..3 {
            n[k] = l[k] * (2.0 * l[k] - 1.0);
            dn[k][k] = 4.0 * l[k] - 1.0;
        }
        for (m, (a, b)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
            n[3 + m] = 4.0 * l[a] * l[b];
            dn[3 + m][a] = 4.0 * l[b];
            dn[3 + m][b] = 4.0 * l[a];
        }
        QpBasis { weight, l, n, dn_dl: dn }
    }
}

#[derive(Clone, Debug)]
pub struct CellGeom {
    pub area: f64,
    /// Longest edge.
    pub h: f64,
    pub grad_l: [[f64; 3]; 2],
    pub dofs: [usize; 16],
    pub p2: [usize; 6],
}

impl CellGeom {
    /// Physical gradient of each quadratic shape function.
    pub fn grad_n(&self, b: &QpBasis) -> [[f64; 2]; 6] {
        let mut g = [[0.0; 2]; 6];
        for (a, ga) in g.iter_mut().enumerate() {
            for k in 0..3 {
                ga[0] += b.dn_dl[a][k] * self.grad_l[0][k];
                ga[1] += b.dn_dl[a][k] * self.grad_l[1][k];
            }
        }
        g
    }

    pub fn grad_lk(&self, k: usize) -> [f64; 2] {
        [self.grad_l[0][k], self.grad_l[1][k]]
    }
}

/// Everything the assembly needs that does not depend on the state.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub mesh: DomeMesh,
    pub physics: PhysicsConfig,
    pub dofs: DofMap,
    pub rule: TriangleRule,
    pub basis: Vec<QpBasis>,
    pub centroid: QpBasis,
    pub cells: Vec<CellGeom>,
    pub dirichlet: Vec<bool>,
    /// Body-force and traction load on the momentum rows.
    pub load: Vec<f64>,
    pub load_norm: f64,
}

impl Discretization {
    /// Gravity-driven dome with stress-free top and front.
    pub fn new(geometry: &GeometryConfig, physics: &PhysicsConfig) -> Result<Self> {
        let f = [physics.rho * physics.g[0], physics.rho * physics.g[1]];
        Self::with_forcing(geometry, physics, &|_| f, &|_, _, _| [0.0, 0.0])
    }

    /// Arbitrary body force `f(x)` and boundary traction `t(x, n, side)` on
    /// every edge that is not no-slip.
    pub fn with_forcing(
        geometry: &GeometryConfig,
        physics: &PhysicsConfig,
        body: &dyn Fn([f64; 2]) -> [f64; 2],
        traction: &dyn Fn([f64; 2], [f64; 2], Side) -> [f64; 2],
    ) -> Result<Self> {
        physics.validate()?;
        let mesh = build_dome_mesh(geometry)?;
        let rule = TriangleRule::new(physics.quadrature_degree)?;
        let basis: Vec<QpBasis> = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(l, w)| QpBasis::at(*l, *w))
            .collect();
        let dofs = DofMap {
            n_p2: mesh.n_p2(),
            n_cells: mesh.n_cells(),
            n_vertices: mesh.n_vertices(),
        };
        let cells: Vec<CellGeom> = (0..mesh.n_cells()).map(|c| cell_geom(&mesh, &dofs, c)).collect();

        let mut dirichlet = vec![false; dofs.len()];
        for be in &mesh.boundary {
            let nodes = mesh.edge_p2_nodes(be.edge);
            match be.velocity {
                VelocityTag::NoSlip => nodes.iter().for_each(|&n| {
                    dirichlet[dofs.u(n, 0)] = true;
                    dirichlet[dofs.u(n, 1)] = true;
                }),
                VelocityTag::Symmetry => nodes.iter().for_each(|&n| dirichlet[dofs.u(n, 0)] = true),
                VelocityTag::StressFree => {}
            }
            if be.damage == DamageTag::Dirichlet {
                nodes[..2].iter().for_each(|&v| dirichlet[dofs.phi(v)] = true);
            }
        }

        let mut load = vec![0.0; dofs.len()];
        for (c, g) in cells.iter().enumerate() {
            let [p0, p1, p2] = mesh.triangles[c].map(|v| mesh.vertices[v]);
            for b in &basis {
                let x = [
                    b.l[0] * p0[0] + b.l[1] * p1[0] + b.l[2] * p2[0],
                    b.l[0] * p0[1] + b.l[1] * p1[1] + b.l[2] * p2[1],
                ];
                let f = body(x);
                let wq = b.weight * g.area;
                for a in 0..6 {
                    load[g.dofs[2 * a]] += wq * b.n[a] * f[0];
                    load[g.dofs[2 * a + 1]] += wq * b.n[a] * f[1];
                }
            }
        }
        for be in &mesh.boundary {
            if be.velocity == VelocityTag::NoSlip {
                continue;
            }
            let n = mesh.outward_normal(be);
            let nodes = mesh.edge_p2_nodes(be.edge);
            let [pa, pb] = mesh.edges[be.edge].map(|v| mesh.vertices[v]);
            let len = mesh.edge_length(be.edge);
            for (t, w) in gauss3() {
                let x = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
                let tr = traction(x, n, be.side);
                let shape = edge_shape(t);
                for (node, s) in nodes.iter().zip(shape) {
                    load[dofs.u(*node, 0)] += w * len * s * tr[0];
                    load[dofs.u(*node, 1)] += w * len * s * tr[1];
                }
            }
        }
        for (l, d) in load.iter_mut().zip(&dirichlet) {
            if *d {
                *l = 0.0;
            }
        }
        let norm = load.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(Discretization {
            mesh,
            physics: physics.clone(),
            dofs,
            centroid: QpBasis::at([1.0 / 3.0; 3], 1.0),
            rule,
            basis,
            cells,
            dirichlet,
            load,
            load_norm: if norm > 0.0 { norm } else { 1.0 },
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs.len()
    }

    /// Physical position of quadrature point `q` in `cell`.
    pub fn qp_coords(&self, cell: usize, q: usize) -> [f64; 2] {
        let l = self.basis[q].l;
        let [p0, p1, p2] = self.mesh.triangles[cell].map(|v| self.mesh.vertices[v]);
        [
            l[0] * p0[0] + l[1] * p1[0] + l[2] * p2[0],
            l[0] * p0[1] + l[1] * p1[1] + l[2] * p2[1],
        ]
    }

    /// `‖u_h − u‖_{L²}` against a reference velocity, with a degree-5 rule.
    pub fn velocity_l2_error(&self, w: &[f64], exact: &dyn Fn([f64; 2]) -> [f64; 2]) -> f64 {
        let rule = TriangleRule::new(5).expect("degree 5 rule exists");
        let mut acc = 0.0;
        for (c, cell) in self.cells.iter().enumerate() {
            let [p0, p1, p2] = self.mesh.triangles[c].map(|v| self.mesh.vertices[v]);
            for (l, wt) in rule.points.iter().zip(&rule.weights) {
                let b = QpBasis::at(*l, *wt);
                let x = [
                    l[0] * p0[0] + l[1] * p1[0] + l[2] * p2[0],
                    l[0] * p0[1] + l[1] * p1[1] + l[2] * p2[1],
                ];
                let mut uh = [0.0; 2];
                for a in 0..6 {
                    uh[0] += b.n[a] * w[cell.dofs[2 * a]];
                    uh[1] += b.n[a] * w[cell.dofs[2 * a + 1]];
                }
                let ue = exact(x);
                acc += wt * cell.area * ((uh[0] - ue[0]).powi(2) + (uh[1] - ue[1]).powi(2));
            }
        }
        acc.sqrt()
    }

    /// Zero state with Dirichlet constraints satisfied.
    pub fn zero_state(&self) -> Vec<f64> {
        vec![0.0; self.n_dofs()]
    }

    pub fn state(&self, w: &[f64]) -> ExperimentState {
        let d = &self.dofs;
        ExperimentState {
            u: (0..d.n_p2).map(|n| [w[d.u(n, 0)], w[d.u(n, 1)]]).collect(),
            p: w[d.pressure_range()].to_vec(),
            phi: w[d.damage_range()].to_vec(),
        }
    }

    pub fn flatten_state(&self, s: &ExperimentState) -> Result<Vec<f64>> {
        let d = &self.dofs;
        if s.u.len() != d.n_p2 || s.p.len() != d.n_cells || s.phi.len() != d.n_vertices {
            return Err(contract("state does not match the mesh"));
        }
        let mut w = Vec::with_capacity(d.len());
        for u in &s.u {
            w.extend_from_slice(u);
        }
        w.extend_from_slice(&s.p);
        w.extend_from_slice(&s.phi);
        Ok(w)
    }
}

/// Quadratic shape functions on an edge from vertex `a` (`t = 0`) to `b`,
/// ordered `[a, b, midpoint]`.
pub fn edge_shape(t: f64) -> [f64; 3] {
    [(1.0 - t) * (1.0 - 2.0 * t), t * (2.0 * t - 1.0), 4.0 * t * (1.0 - t)]
}

fn cell_geom(mesh: &DomeMesh, dofs: &DofMap, c: usize) -> CellGeom {
    let t = mesh.triangles[c];
    let [p0, p1, p2] = t.map(|v| mesh.vertices[v]);
    let two_a = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    let grad_l = [
        [(p1[1] - p2[1]) / two_a, (p2[1] - p0[1]) / two_a, (p0[1] - p1[1]) / two_a],
        [(p2[0] - p1[0]) / two_a, (p0[0] - p2[0]) / two_a, (p1[0] - p0[0]) / two_a],
    ];
    let dist = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let h = dist(p0, p1).max(dist(p1, p2)).max(dist(p2, p0));
    let p2n = mesh.cell_p2_nodes(c);
    let mut ld = [0; 16];
    for a in 0..6 {
        ld[2 * a] = dofs.u(p2n[a], 0);
        ld[2 * a + 1] = dofs.u(p2n[a], 1);
    }
    ld[12] = dofs.p(c);
    for k in 0..3 {
        ld[13 + k] = dofs.phi(t[k]);
    }
    CellGeom {
        area: 0.5 * two_a,
        h,
        grad_l,
        dofs: ld,
        p2: p2n,
    }
}

/// Velocity per quadratic node, pressure per cell, damage per vertex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentState {
    pub u: Vec<[f64; 2]>,
    pub p: Vec<f64>,
    pub phi: Vec<f64>,
}
