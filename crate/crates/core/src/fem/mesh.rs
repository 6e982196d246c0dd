//! Structured triangulation of a half-dome cross-section.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape and resolution of the computational domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    /// Horizontal extent from the divide to the front.
    pub length: f64,
    /// Ice thickness at the divide.
    pub thickness: f64,
    /// Vialov margin position as a multiple of `length` (> 1 keeps a finite front).
    #[serde(default = "default_span")]
    pub span: f64,
    pub nx: usize,
    pub ny: usize,
    /// Rectangle `[0, length] × [0, thickness]` instead of the dome profile.
    #[serde(default)]
    pub flat: bool,
    /// Column index of the borehole cells; defaults to mid-span.
    #[serde(default)]
    pub borehole_column: Option<usize>,
}

fn default_span() -> f64 {
    1.1
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            length: 4.0,
            thickness: 1.0,
            span: default_span(),
            nx: 10,
            ny: 10,
            flat: false,
            borehole_column: None,
        }
    }
}

impl GeometryConfig {
    pub fn surface_height(&self, x: f64) -> f64 {
        if self.flat {
            return self.thickness;
        }
        let r = (x / (self.span * self.length)).clamp(0.0, 1.0);
        self.thickness * (1.0 - r.powf(4.0 / 3.0)).powf(3.0 / 8.0)
    }

    pub fn refined(&self, factor: usize) -> Self {
        GeometryConfig {
            nx: self.nx * factor,
            ny: self.ny * factor,
            borehole_column: self.borehole_column.map(|c| c * factor),
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Bottom,
    Top,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VelocityTag {
    /// `u·e₁ = 0`, free tangential traction.
    Symmetry,
    /// `u = 0`.
    NoSlip,
    StressFree,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DamageTag {
    Dirichlet,
    Neumann,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryEdge {
    pub edge: usize,
    pub cell: usize,
    pub side: Side,
    pub velocity: VelocityTag,
    pub damage: DamageTag,
    /// Part of the observed top surface.
    pub top_surface: bool,
}

#[derive(Clone, Debug)]
pub struct DomeMesh {
    pub geometry: GeometryConfig,
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// Vertex pairs of every edge.
    pub edges: Vec<[usize; 2]>,
    /// Global edge ids of local edges `(0,1)`, `(1,2)`, `(2,0)`.
    pub cell_edges: Vec<[usize; 3]>,
    pub boundary: Vec<BoundaryEdge>,
    pub borehole: Vec<bool>,
    /// Bottom-right corner cells left out of invariant sampling.
    pub excluded: Vec<bool>,
}

impl DomeMesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Quadratic nodes: vertices first, then edge midpoints.
    pub fn n_p2(&self) -> usize {
        self.n_vertices() + self.n_edges()
    }

    pub fn p2_coords(&self, node: usize) -> [f64; 2] {
        let nv = self.n_vertices();
        if node < nv {
            self.vertices[node]
        } else {
            let [a, b] = self.edges[node - nv];
            let (pa, pb) = (self.vertices[a], self.vertices[b]);
            [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]
        }
    }

    /// Six quadratic nodes of a cell: three vertices, then the midpoints of
    /// `(0,1)`, `(1,2)`, `(2,0)`.
    pub fn cell_p2_nodes(&self, cell: usize) -> [usize; 6] {
        let t = self.triangles[cell];
        let e = self.cell_edges[cell];
        let nv = self.n_vertices();
        [t[0], t[1], t[2], nv + e[0], nv + e[1], nv + e[2]]
    }

    pub fn cell_area(&self, cell: usize) -> f64 {
        let [a, b, c] = self.triangles[cell].map(|v| self.vertices[v]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.cell_area(c)).sum()
    }

    pub fn edge_length(&self, edge: usize) -> f64 {
        let [a, b] = self.edges[edge].map(|v| self.vertices[v]);
        ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
    }

    /// Outward unit normal of a boundary edge.
    pub fn outward_normal(&self, be: &BoundaryEdge) -> [f64; 2] {
        let [a, b] = self.edges[be.edge].map(|v| self.vertices[v]);
        let (tx, ty) = (b[0] - a[0], b[1] - a[1]);
        let len = (tx * tx + ty * ty).sqrt();
        let mut n = [ty / len, -tx / len];
        // Orient away from the opposite vertex of the owning cell.
        let t = self.triangles[be.cell];
        let opp = t
            .iter()
            .copied()
            .find(|v| !self.edges[be.edge].contains(v))
            .expect("triangle has a vertex off the edge");
        let o = self.vertices[opp];
        if (o[0] - a[0]) * n[0] + (o[1] - a[1]) * n[1] > 0.0 {
            n = [-n[0], -n[1]];
        }
        n
    }

    /// Quadratic nodes on a boundary edge: both ends and the midpoint.
    pub fn edge_p2_nodes(&self, edge: usize) -> [usize; 3] {
        let [a, b] = self.edges[edge];
        [a, b, self.n_vertices() + edge]
    }
}

pub fn build_dome_mesh(geometry: &GeometryConfig) -> Result<DomeMesh> {
    let g = geometry;
    if g.nx < 2 || g.ny < 2 {
        return Err(Error::DegenerateGeometry(format!(
            "resolution {}×{} is below 2 cells per direction",
            g.nx, g.ny
        )));
    }
    if !(g.length > 0.0) || !(g.thickness > 0.0) || !(g.span >= 1.0) {
        return Err(Error::DegenerateGeometry(format!(
            "length {}, thickness {}, span {} do not describe a dome",
            g.length, g.thickness, g.span
        )));
    }
    if !g.flat && g.span == 1.0 {
        return Err(Error::DegenerateGeometry("span 1 pinches the front to zero height".into()));
    }
    let (nx, ny) = (g.nx, g.ny);
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let x = g.length * i as f64 / nx as f64;
            let y = g.surface_height(x) * j as f64 / ny as f64;
            vertices.push([x, y]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            triangles.push([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)]);
            triangles.push([vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)]);
        }
    }

    let mut edge_ids: HashMap<(usize, usize), usize> = HashMap::new();
    let mut edges = Vec::new();
    let mut cell_edges = Vec::with_capacity(triangles.len());
    let mut edge_cells: Vec<Vec<usize>> = Vec::new();
    for (c, t) in triangles.iter().enumerate() {
        let mut ce = [0; 3];
        for (k, (a, b)) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])].into_iter().enumerate() {
            let key = (a.min(b), a.max(b));
            let id = *edge_ids.entry(key).or_insert_with(|| {
                edges.push([key.0, key.1]);
                edge_cells.push(Vec::new());
                edges.len() - 1
            });
            edge_cells[id].push(c);
            ce[k] = id;
        }
        cell_edges.push(ce);
    }

    let col_of = |v: usize| v % (nx + 1);
    let row_of = |v: usize| v / (nx + 1);
    let mut boundary = Vec::new();
    for (id, cells) in edge_cells.iter().enumerate() {
        if cells.len() != 1 {
            continue;
        }
        let [a, b] = edges[id];
        let side = if col_of(a) == 0 && col_of(b) == 0 {
            Side::Left
        } else if col_of(a) == nx && col_of(b) == nx {
            Side::Right
        } else if row_of(a) == 0 && row_of(b) == 0 {
            Side::Bottom
        } else if row_of(a) == ny && row_of(b) == ny {
            Side::Top
        } else {
            return Err(Error::DegenerateGeometry(format!("unclassified boundary edge {a}-{b}")));
        };
        let (velocity, damage) = match side {
            Side::Left => (VelocityTag::Symmetry, DamageTag::Neumann),
            Side::Bottom => (VelocityTag::NoSlip, DamageTag::Neumann),
            Side::Top => (VelocityTag::StressFree, DamageTag::Dirichlet),
            Side::Right => (VelocityTag::StressFree, DamageTag::Neumann),
        };
        boundary.push(BoundaryEdge {
            edge: id,
            cell: cells[0],
            side,
            velocity,
            damage,
            top_surface: side == Side::Top,
        });
    }

    let bh = g.borehole_column.unwrap_or(nx / 2);
    if bh >= nx {
        return Err(Error::DegenerateGeometry(format!("borehole column {bh} outside {nx} columns")));
    }
    let borehole = (0..triangles.len()).map(|c| (c / 2) % nx == bh).collect();
    let excluded = (0..triangles.len()).map(|c| c / 2 == nx - 1).collect();

    let mesh = DomeMesh {
        geometry: g.clone(),
        vertices,
        triangles,
        edges,
        cell_edges,
        boundary,
        borehole,
        excluded,
    };
    for c in 0..mesh.n_cells() {
        if !(mesh.cell_area(c) > 0.0) {
            return Err(Error::DegenerateGeometry(format!("cell {c} has non-positive area")));
        }
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(nx: usize, ny: usize) -> GeometryConfig {
        GeometryConfig { nx, ny, ..GeometryConfig::default() }
    }

    #[test]
    fn two_by_two_counts() {
        let m = build_dome_mesh(&small(2, 2)).unwrap();
        assert_eq!(m.n_cells(), 8);
        assert_eq!(m.n_vertices(), 9);
        // 12 axis-aligned edges plus 4 diagonals.
        assert_eq!(m.n_edges(), 16);
        assert_eq!(m.boundary.len(), 8);
    }

    #[test]
    fn refinement_quadruples_cells() {
        let a = build_dome_mesh(&small(3, 2)).unwrap();
        let b = build_dome_mesh(&small(3, 2).refined(2)).unwrap();
        assert_eq!(b.n_cells(), 4 * a.n_cells());
    }

    #[test]
    fn tags_and_orientation() {
        let m = build_dome_mesh(&small(5, 4)).unwrap();
        for be in &m.boundary {
            match be.side {
                Side::Top => {
                    assert!(be.top_surface);
                    assert_eq!(be.velocity, VelocityTag::StressFree);
                    assert_eq!(be.damage, DamageTag::Dirichlet);
                }
                _ => assert!(!be.top_surface),
            }
            let n = m.outward_normal(be);
            match be.side {
                Side::Left => assert!(n[0] < -0.99),
                Side::Bottom => assert!(n[1] < -0.99),
                Side::Right => assert!(n[0] > 0.99),
                Side::Top => assert!(n[1] > 0.0),
            }
        }
        let per_side = |s| m.boundary.iter().filter(|b| b.side == s).count();
        assert_eq!(per_side(Side::Left), 4);
        assert_eq!(per_side(Side::Right), 4);
        assert_eq!(per_side(Side::Bottom), 5);
        assert_eq!(per_side(Side::Top), 5);
        assert!((0..m.n_cells()).all(|c| m.cell_area(c) > 0.0));
        assert_eq!(m.borehole.iter().filter(|b| **b).count(), 2 * 4);
        assert_eq!(m.excluded.iter().filter(|b| **b).count(), 2);
        assert!(m.excluded[2 * 4]);
    }

    #[test]
    fn flat_area_and_dome_profile() {
        let g = GeometryConfig { flat: true, length: 2.0, thickness: 0.5, ..small(4, 3) };
        let m = build_dome_mesh(&g).unwrap();
        assert!((m.total_area() - 1.0).abs() < 1e-14);
        let d = GeometryConfig::default();
        assert_eq!(d.surface_height(0.0), d.thickness);
        assert!(d.surface_height(d.length) > 0.0);
        assert!(d.surface_height(1.0) > d.surface_height(2.0));
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(build_dome_mesh(&small(1, 4)).is_err());
        assert!(build_dome_mesh(&GeometryConfig { thickness: 0.0, ..small(3, 3) }).is_err());
        assert!(build_dome_mesh(&GeometryConfig { span: 1.0, ..small(3, 3) }).is_err());
    }
}
