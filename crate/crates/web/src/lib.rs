//! WebAssembly bindings for the static page in `www/`.
//!
//! Each export wraps a plain Rust function of the same purpose.

use icecr::fem::linalg::LuCache;
use icecr::fem::sampling::regime_top;
use icecr::fem::solver::{damage_free_solution, solve_forward, NewtonConfig};
use icecr::fem::{Discretization, GeometryConfig, PhysicsConfig};
use icecr::models::{albrecht_levermann_smoothed, DamageParams, GlenParams, GuardSmoothing};
use icecr::rate::{AlbrechtLevermannRate, DamagedGlen};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Damage rate on an `nj × nphi` grid over `J₂ ∈ [0, √450]`, `φ ∈ [0, 1)`,
/// row-major in `φ` (row 0 is `φ = 0`).
pub fn rate_grid(fracture: f64, healing: f64, nj: usize, nphi: usize) -> Result<Vec<f64>, String> {
    if nj < 2 || nphi < 2 || nj * nphi > 1 << 20 {
        return Err(format!("grid {nj}x{nphi} needs at least two points per side and at most 2^20 in total"));
    }
    if !(fracture >= 0.0 && healing >= 0.0) {
        return Err("smoothing widths must be non-negative".into());
    }
    let p = DamageParams::default();
    let sm = GuardSmoothing { fracture, healing };
    let top = regime_top();
    let mut out = Vec::with_capacity(nj * nphi);
    for i in 0..nphi {
        let phi = i as f64 / nphi as f64;
        for j in 0..nj {
            let j2 = top * j as f64 / (nj - 1) as f64;
            out.push(albrecht_levermann_smoothed(j2, phi, &p, &sm).0 .0);
        }
    }
    Ok(out)
}

/// `(J₂, τ)` pairs of the damaged Glen law at fixed damage, `τ = 2 η(J₂) J₂ (1 − (1 − ζ) φ)`.
pub fn flow_curve(n: f64, phi: f64, points: usize) -> Result<Vec<f64>, String> {
    let glen = GlenParams { n, ..GlenParams::default() };
    glen.validate().map_err(|e| e.to_string())?;
    if !(0.0..=1.0).contains(&phi) || points < 2 {
        return Err("damage must lie in [0, 1] and at least two points are needed".into());
    }
    let soft = DamageParams::default().softening(phi);
    let top = regime_top();
    Ok((0..points)
        .flat_map(|k| {
            let j2 = top * k as f64 / (points - 1) as f64;
            [j2, 2.0 * glen.viscosity(j2).0 * j2 * soft]
        })
        .collect())
}

#[derive(Debug, Serialize)]
pub struct DomeSolution {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// Damage per vertex.
    pub phi: Vec<f64>,
    /// Velocity per vertex.
    pub velocity: Vec<[f64; 2]>,
    pub newton_iterations: usize,
    pub relative_residual: f64,
}

/// Steady damaged dome on an `nx × ny` mesh under gravity `g`.
pub fn dome(nx: usize, ny: usize, g: f64) -> Result<DomeSolution, String> {
    if !(2..=16).contains(&nx) || !(2..=16).contains(&ny) {
        return Err("mesh sides must lie in 2..=16".into());
    }
    if !(g > 0.0 && g <= 12.0) {
        return Err("gravity must lie in (0, 12]".into());
    }
    let geometry = GeometryConfig { nx, ny, ..GeometryConfig::default() };
    let physics = PhysicsConfig { g: [0.0, -g], ..PhysicsConfig::default() };
    let disc = Discretization::new(&geometry, &physics).map_err(|e| e.to_string())?;
    let dp = DamageParams::default();
    let stress = DamagedGlen::new(GlenParams::default(), &dp);
    let rate = AlbrechtLevermannRate::smoothed(dp, GuardSmoothing { fracture: 0.2, healing: 0.02 });
    let newton = NewtonConfig::default();
    let base = damage_free_solution(&disc, &stress, &newton, &mut LuCache::new());
    let guess = base.state.filter(|_| base.converged).ok_or("damage-free flow did not converge")?;
    let out = solve_forward(&disc, &stress, &rate, Some(&guess), &newton);
    let w = match out.state {
        Some(w) if out.converged => w,
        _ => return Err(format!("solve failed: {:?}", out.failure_kind)),
    };
    let s = disc.state(&w);
    let nv = disc.dofs.n_vertices;
    Ok(DomeSolution {
        vertices: disc.mesh.vertices.clone(),
        triangles: disc.mesh.triangles.clone(),
        phi: s.phi,
        velocity: s.u[..nv].to_vec(),
        newton_iterations: out.newton_iterations,
        relative_residual: out.relative_residual,
    })
}

#[wasm_bindgen(js_name = rateGrid)]
pub fn rate_grid_js(fracture: f64, healing: f64, nj: usize, nphi: usize) -> Result<Vec<f64>, String> {
    rate_grid(fracture, healing, nj, nphi)
}

#[wasm_bindgen(js_name = flowCurve)]
pub fn flow_curve_js(n: f64, phi: f64, points: usize) -> Result<Vec<f64>, String> {
    flow_curve(n, phi, points)
}

/// JSON-encoded [`DomeSolution`].
#[wasm_bindgen(js_name = solveDome)]
pub fn dome_js(nx: usize, ny: usize, g: f64) -> Result<String, String> {
    let sol = dome(nx, ny, g)?;
    serde_json::to_string(&sol).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = rateTop)]
pub fn rate_top() -> f64 {
    regime_top()
}
