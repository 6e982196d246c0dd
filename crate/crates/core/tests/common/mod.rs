//! Oracles shared by the integration tests.
#![allow(dead_code)]

use icecr::fem::solver::{solve_forward, NewtonConfig};
use icecr::fem::{Discretization, GeometryConfig, PhysicsConfig, Side};
use icecr::models::GlenParams;
use icecr::rate::{ConstantRate, DamagedGlen};

/// Manufactured Stokes flow on the unit square with viscosity `MU`:
/// `u = (2y sin x, −y² cos x)`, `p = y cos x`, `τ = MU ε̇(u) − p I`.
pub mod mms {
    pub const MU: f64 = 1.0;

    pub fn velocity(x: [f64; 2]) -> [f64; 2] {
        let [x, y] = x;
        [2.0 * y * x.sin(), -y * y * x.cos()]
    }

    pub fn pressure(x: [f64; 2]) -> f64 {
        x[1] * x[0].cos()
    }

    /// `[τxx, τyy, τxy]`.
    pub fn stress(x: [f64; 2]) -> [f64; 3] {
        let [x0, y] = x;
        let exx = 2.0 * y * x0.cos();
        let exy = x0.sin() * (1.0 + 0.5 * y * y);
        let p = pressure(x);
        [MU * exx - p, -MU * exx - p, MU * exy]
    }

    /// Body force `−∇·τ`.
    pub fn body(x: [f64; 2]) -> [f64; 2] {
        let [x0, y] = x;
        let px = -y * x0.sin();
        let py = x0.cos();
        [MU * y * x0.sin() + px, -MU * x0.cos() * (0.5 * y * y - 1.0) + py]
    }

    pub fn traction(x: [f64; 2], n: [f64; 2]) -> [f64; 2] {
        let [txx, tyy, txy] = stress(x);
        [txx * n[0] + txy * n[1], txy * n[0] + tyy * n[1]]
    }
}

pub fn mms_geometry(n: usize) -> GeometryConfig {
    GeometryConfig { length: 1.0, thickness: 1.0, nx: n, ny: n, flat: true, ..GeometryConfig::default() }
}

/// Velocity L² error of the linear-viscosity solve with manufactured forcing.
pub fn mms_error(n: usize) -> f64 {
    let physics = PhysicsConfig::default();
    let d = Discretization::with_forcing(&mms_geometry(n), &physics, &mms::body, &|x, nrm, _: Side| {
        mms::traction(x, nrm)
    })
    .expect("valid discretization");
    let stress = DamagedGlen::undamaged(GlenParams { mu: mms::MU, n: 1.0, eps_reg: 0.0 });
    let out = solve_forward(&d, &stress, &ConstantRate(0.0), None, &NewtonConfig::default());
    assert!(out.converged, "manufactured solve failed: {out:?}");
    d.velocity_l2_error(out.state.as_ref().unwrap(), &mms::velocity)
}

/// Observed orders `log2(e_k / e_{k+1})` for halved mesh sizes.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// Piecewise damage rate written directly from its case definition.
pub fn rate_by_cases(j2: f64, phi: f64, gamma_f: f64, gamma_h: f64, eps_f: f64, eps_h: f64, n: f64) -> f64 {
    let fracture = if phi < 1.0 && j2 > eps_f / (1.0 - phi).powf(n) { gamma_f * j2 * (1.0 - phi) } else { 0.0 };
    let healing = if j2 <= eps_h && phi > 0.0 { gamma_h * (j2 - eps_h) } else { 0.0 };
    fracture + healing
}

/// Central-difference derivative.
pub fn central(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}
