//! Plain-text field dumps.
//!
//! Each field is a comma-separated table with one header line:
//!
//! * `mesh_vertices.csv`: `index,x,y`
//! * `mesh_triangles.csv`: `index,v0,v1,v2,borehole,excluded`
//! * `velocity.csv`: `node_x,node_y,u_x,u_y` on quadratic nodes (vertices, then edge midpoints)
//! * `pressure.csv`: `node_x,node_y,p` at cell centroids
//! * `damage.csv`: `node_x,node_y,phi` on vertices
//!
//! Numbers are printed in shortest round-trip form, so reading a dump back
//! reproduces the state bitwise.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Discretization, ExperimentState};
use crate::error::{Error, Result};

pub const VELOCITY_HEADER: &str = "node_x,node_y,u_x,u_y";
pub const PRESSURE_HEADER: &str = "node_x,node_y,p";
pub const DAMAGE_HEADER: &str = "node_x,node_y,phi";

pub fn write_text(path: &Path, body: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Comma-separated table with a header row.
pub fn csv_table(header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_csv(path: &Path, expected_header: &str) -> Result<Vec<Vec<f64>>> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header.trim() != expected_header {
        return Err(Error::Format {
            path: path.into(),
            message: format!("expected header `{expected_header}`, found `{header}`"),
        });
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Format {
                    path: path.into(),
                    message: format!("line {}: {e}", i + 2),
                })
        })
        .collect()
}

pub fn write_mesh(dir: &Path, d: &Discretization) -> Result<()> {
    let m = &d.mesh;
    let mut v = String::from("index,x,y\n");
    for (i, p) in m.vertices.iter().enumerate() {
        let _ = writeln!(v, "{i},{},{}", p[0], p[1]);
    }
    write_text(&dir.join("mesh_vertices.csv"), &v)?;
    let mut t = String::from("index,v0,v1,v2,borehole,excluded\n");
    for (i, tri) in m.triangles.iter().enumerate() {
        let _ = writeln!(
            t,
            "{i},{},{},{},{},{}",
            tri[0],
            tri[1],
            tri[2],
            u8::from(m.borehole[i]),
            u8::from(m.excluded[i])
        );
    }
    write_text(&dir.join("mesh_triangles.csv"), &t)
}

fn centroid(d: &Discretization, c: usize) -> [f64; 2] {
    let [a, b, e] = d.mesh.triangles[c].map(|v| d.mesh.vertices[v]);
    [(a[0] + b[0] + e[0]) / 3.0, (a[1] + b[1] + e[1]) / 3.0]
}

pub fn write_fields(dir: &Path, d: &Discretization, w: &[f64]) -> Result<()> {
    let s = d.state(w);
    write_state(dir, d, &s)
}

pub fn write_state(dir: &Path, d: &Discretization, s: &ExperimentState) -> Result<()> {
    write_mesh(dir, d)?;
    let vel = (0..d.dofs.n_p2).map(|n| {
        let x = d.mesh.p2_coords(n);
        vec![x[0], x[1], s.u[n][0], s.u[n][1]]
    });
    write_text(&dir.join("velocity.csv"), &csv_table(VELOCITY_HEADER, vel))?;
    let pres = (0..d.dofs.n_cells).map(|c| {
        let x = centroid(d, c);
        vec![x[0], x[1], s.p[c]]
    });
    write_text(&dir.join("pressure.csv"), &csv_table(PRESSURE_HEADER, pres))?;
    let dmg = (0..d.dofs.n_vertices).map(|v| {
        let x = d.mesh.vertices[v];
        vec![x[0], x[1], s.phi[v]]
    });
    write_text(&dir.join("damage.csv"), &csv_table(DAMAGE_HEADER, dmg))
}

fn column(rows: &[Vec<f64>], expected: usize, k: usize, path: &Path) -> Result<Vec<f64>> {
    if rows.len() != expected || rows.iter().any(|r| r.len() <= k) {
        return Err(Error::Format {
            path: path.into(),
            message: format!("expected {expected} rows with at least {} columns", k + 1),
        });
    }
    Ok(rows.iter().map(|r| r[k]).collect())
}

pub fn read_state(dir: &Path, d: &Discretization) -> Result<ExperimentState> {
    let vp = dir.join("velocity.csv");
    let rows = parse_csv(&vp, VELOCITY_HEADER)?;
    let ux = column(&rows, d.dofs.n_p2, 2, &vp)?;
    let uy = column(&rows, d.dofs.n_p2, 3, &vp)?;
    let pp = dir.join("pressure.csv");
    let p = column(&parse_csv(&pp, PRESSURE_HEADER)?, d.dofs.n_cells, 2, &pp)?;
    let dp = dir.join("damage.csv");
    let phi = column(&parse_csv(&dp, DAMAGE_HEADER)?, d.dofs.n_vertices, 2, &dp)?;
    Ok(ExperimentState {
        u: ux.into_iter().zip(uy).map(|(a, b)| [a, b]).collect(),
        p,
        phi,
    })
}
