//! Cell kernel for the coupled residual and its assembly. The same generic
//! kernel runs on `f64` for residuals and on `Dual` for exact Jacobians.

use super::dual::{Dual, Scalar, LOCAL_DOFS};
use super::{CellGeom, Discretization, QpBasis};
use crate::rate::{DamageRate, StressClosure};

/// Sparse matrix entries `(row, col, value)`; duplicates are summed.
pub type Triplets = Vec<(usize, usize, f64)>;

pub(crate) struct QpFields<S> {
    pub u: [S; 2],
    /// `gu[c][d] = ∂u_c/∂x_d`.
    pub gu: [[S; 2]; 2],
    pub phi: S,
    pub gphi: [S; 2],
}

pub(crate) fn qp_fields<S: Scalar>(cell: &CellGeom, b: &QpBasis, w: &[S; LOCAL_DOFS]) -> QpFields<S> {
    let gn = cell.grad_n(b);
    let zero = S::cst(0.0);
    let mut u = [zero; 2];
    let mut gu = [[zero; 2]; 2];
    for a in 0..6 {
        for c in 0..2 {
            let ua = w[2 * a + c];
            u[c] += ua.scale(b.n[a]);
            gu[c][0] += ua.scale(gn[a][0]);
            gu[c][1] += ua.scale(gn[a][1]);
        }
    }
    let mut phi = zero;
    let mut gphi = [zero; 2];
    for k in 0..3 {
        let pk = w[13 + k];
        phi += pk.scale(b.l[k]);
        gphi[0] += pk.scale(cell.grad_l[0][k]);
        gphi[1] += pk.scale(cell.grad_l[1][k]);
    }
    QpFields { u, gu, phi, gphi }
}

/// `(J₁, J₂, ε̇ₓₓ, ε̇ᵧᵧ, ε̇ₓᵧ)` from a velocity gradient.
pub(crate) fn strain_invariants<S: Scalar>(gu: &[[S; 2]; 2]) -> (S, S, [S; 3]) {
    let exx = gu[0][0];
    let eyy = gu[1][1];
    let exy = (gu[0][1] + gu[1][0]).scale(0.5);
    let j1 = exx + eyy;
    let j2 = (exx * exx + eyy * eyy + (exy * exy).scale(2.0)).sqrt();
    (j1, j2, [exx, eyy, exy])
}

/// Streamline-upwind weight from the centroid speed.
pub(crate) fn supg_delta<S: Scalar>(d: &Discretization, cell: &CellGeom, w: &[S; LOCAL_DOFS]) -> S {
    let b = &d.centroid;
    let zero = S::cst(0.0);
    let mut u = [zero; 2];
    for a in 0..6 {
        u[0] += w[2 * a].scale(b.n[a]);
        u[1] += w[2 * a + 1].scale(b.n[a]);
    }
    let speed = (u[0] * u[0] + u[1] * u[1]).sqrt();
    S::cst(d.physics.supg * cell.h) / (speed.scale(2.0) + S::cst(d.physics.eps_vel))
}

/// Local residual of one cell, without the external load.
pub(crate) fn cell_residual<S: Scalar>(
    d: &Discretization,
    c: usize,
    w: &[S; LOCAL_DOFS],
    stress: &dyn StressClosure,
    rate: &dyn DamageRate,
) -> [S; LOCAL_DOFS] {
    let cell = &d.cells[c];
    let xi = d.physics.xi;
    let mut r = [S::cst(0.0); LOCAL_DOFS];
    let p = w[12];
    let delta = supg_delta(d, cell, w);
    for b in &d.basis {
        let wq = b.weight * cell.area;
        let f = qp_fields(cell, b, w);
        let (j1, j2, [exx, eyy, exy]) = strain_invariants(&f.gu);
        let sc = stress.coefficients(j1.val(), j2.val(), f.phi.val());
        let coef = |k: usize| S::lift(sc.c[k], &[(sc.d_j1[k], j1), (sc.d_j2[k], j2), (sc.d_phi[k], f.phi)]);
        let (c1, c2) = (coef(0), coef(1));
        let txx = c1 + c2 * exx - p;
        let tyy = c1 + c2 * eyy - p;
        let txy = c2 * exy;
        let gn = cell.grad_n(b);
        for a in 0..6 {
            r[2 * a] += (txx.scale(gn[a][0]) + txy.scale(gn[a][1])).scale(wq);
            r[2 * a + 1] += (txy.scale(gn[a][0]) + tyy.scale(gn[a][1])).scale(wq);
        }
        r[12] += j1.scale(wq);

        let (sv, ds_dj2, ds_dphi) = rate.eval(j2.val(), f.phi.val());
        let s = S::lift(sv, &[(ds_dj2, j2), (ds_dphi, f.phi)]);
        let adv = f.u[0] * f.gphi[0] + f.u[1] * f.gphi[1];
        let strong = adv - s;
        for k in 0..3 {
            let gl = cell.grad_lk(k);
            let diff = (f.gphi[0].scale(gl[0]) + f.gphi[1].scale(gl[1])).scale(xi);
            let ul = f.u[0].scale(gl[0]) + f.u[1].scale(gl[1]);
            r[13 + k] += ((adv - s).scale(b.l[k]) + diff + delta * ul * strong).scale(wq);
        }
    }
    r
}

fn gather(d: &Discretization, c: usize, w: &[f64]) -> [f64; LOCAL_DOFS] {
    d.cells[c].dofs.map(|i| w[i])
}

/// Full residual `F(w)`; Dirichlet rows hold the constraint value `wᵢ`.
pub fn assemble_residual(d: &Discretization, w: &[f64], stress: &dyn StressClosure, rate: &dyn DamageRate) -> Vec<f64> {
    let mut r: Vec<f64> = d.load.iter().map(|v| -v).collect();
    for c in 0..d.cells.len() {
        let local = cell_residual(d, c, &gather(d, c, w), stress, rate);
        for (k, &i) in d.cells[c].dofs.iter().enumerate() {
            r[i] += local[k];
        }
    }
    for (i, fixed) in d.dirichlet.iter().enumerate() {
        if *fixed {
            r[i] = w[i];
        }
    }
    r
}

/// Residual and its exact Jacobian. The sparsity pattern depends only on the
/// mesh, so every call emits the same `(row, col)` sequence.
pub fn assemble_residual_and_jacobian(
    d: &Discretization,
    w: &[f64],
    stress: &dyn StressClosure,
    rate: &dyn DamageRate,
) -> (Vec<f64>, Triplets) {
    let mut r: Vec<f64> = d.load.iter().map(|v| -v).collect();
    let mut t = Triplets::with_capacity(d.cells.len() * LOCAL_DOFS * LOCAL_DOFS + d.n_dofs());
    for c in 0..d.cells.len() {
        let dofs = &d.cells[c].dofs;
        let local: [Dual; LOCAL_DOFS] = std::array::from_fn(|k| Dual::variable(w[dofs[k]], k));
        let res = cell_residual(d, c, &local, stress, rate);
        for (k, &i) in dofs.iter().enumerate() {
            r[i] += res[k].v;
            if d.dirichlet[i] {
                continue;
            }
            for (m, &j) in dofs.iter().enumerate() {
                t.push((i, j, res[k].d[m]));
            }
        }
    }
    for (i, fixed) in d.dirichlet.iter().enumerate() {
        if *fixed {
            r[i] = w[i];
            t.push((i, i, 1.0));
        }
    }
    (r, t)
}

pub fn assemble_jacobian(d: &Discretization, w: &[f64], stress: &dyn StressClosure, rate: &dyn DamageRate) -> Triplets {
    assemble_residual_and_jacobian(d, w, stress, rate).1
}

/// Fields at one quadrature point of a state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QpSample {
    pub cell: usize,
    pub x: [f64; 2],
    /// Quadrature weight times cell area.
    pub weight: f64,
    pub j1: f64,
    pub j2: f64,
    pub phi: f64,
    pub u: [f64; 2],
    pub p: f64,
}

pub fn quadrature_samples(d: &Discretization, w: &[f64]) -> Vec<QpSample> {
    let mut out = Vec::with_capacity(d.cells.len() * d.basis.len());
    for (c, cell) in d.cells.iter().enumerate() {
        let local = gather(d, c, w);
        for (q, b) in d.basis.iter().enumerate() {
            let f = qp_fields(cell, b, &local);
            let (j1, j2, _) = strain_invariants(&f.gu);
            out.push(QpSample {
                cell: c,
                x: d.qp_coords(c, q),
                weight: b.weight * cell.area,
                j1,
                j2,
                phi: f.phi,
                u: f.u,
                p: local[12],
            });
        }
    }
    out
}

/// Where the damage rate enters the residual: the invariant point it is
/// evaluated at and `∂F/∂s` for the three damage rows of the cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateSite {
    pub point: [f64; 2],
    pub rows: [usize; 3],
    pub coeff: [f64; 3],
}

pub fn rate_sites(d: &Discretization, w: &[f64]) -> Vec<RateSite> {
    let mut out = Vec::with_capacity(d.cells.len() * d.basis.len());
    for (c, cell) in d.cells.iter().enumerate() {
        let local = gather(d, c, w);
        let delta = supg_delta(d, cell, &local);
        for b in &d.basis {
            let wq = b.weight * cell.area;
            let f = qp_fields(cell, b, &local);
            let (_, j2, _) = strain_invariants(&f.gu);
            let rows = [cell.dofs[13], cell.dofs[14], cell.dofs[15]];
            let coeff = std::array::from_fn(|k| {
                if d.dirichlet[rows[k]] {
                    return 0.0;
                }
                let gl = cell.grad_lk(k);
                let ul = f.u[0] * gl[0] + f.u[1] * gl[1];
                -wq * (b.l[k] + delta * ul)
            });
            out.push(RateSite { point: [j2, f.phi], rows, coeff });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{GeometryConfig, PhysicsConfig};
    use crate::models::{DamageParams, GlenParams};
    use crate::neural::{mlp_init, Activation, InputScaler};
    use crate::rate::{ConstantRate, DamagedGlen, NetworkRate};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small() -> Discretization {
        Discretization::new(&GeometryConfig { nx: 4, ny: 2, ..Default::default() }, &PhysicsConfig::default()).unwrap()
    }

    fn random_state(d: &Discretization, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w: Vec<f64> = (0..d.n_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
        for i in d.dofs.damage_range() {
            w[i] = 0.5 * (w[i] + 1.0) * 0.8;
        }
        for (i, fixed) in d.dirichlet.iter().enumerate() {
            if *fixed {
                w[i] = 0.0;
            }
        }
        w
    }

    #[test]
    fn zero_state_residual_is_the_load() {
        let d = small();
        let r = assemble_residual(&d, &d.zero_state(), &DamagedGlen::undamaged(GlenParams::default()), &ConstantRate(0.0));
        for (i, v) in r.iter().enumerate() {
            assert!((v + d.load[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn jacobian_matches_residual_differences() {
        let d = small();
        let stress = DamagedGlen::new(GlenParams::default(), &DamageParams::default());
        let net = mlp_init(9, &[2, 2, 2, 1], Activation::Tanh).unwrap();
        let rate = NetworkRate::new(net, InputScaler { mean: vec![1.0, 0.3], std: vec![0.8, 0.2] }).unwrap();
        let w = random_state(&d, 1);
        let (r0, t) = assemble_residual_and_jacobian(&d, &w, &stress, &rate);
        for (a, b) in r0.iter().zip(assemble_residual(&d, &w, &stress, &rate)) {
            assert!((a - b).abs() <= 1e-14 * (1.0 + b.abs()));
        }
        let dir = random_state(&d, 2);
        let mut jv = vec![0.0; d.n_dofs()];
        for (i, j, v) in &t {
            jv[*i] += v * dir[*j];
        }
        let h = 1e-6;
        let plus: Vec<f64> = w.iter().zip(&dir).map(|(a, b)| a + h * b).collect();
        let minus: Vec<f64> = w.iter().zip(&dir).map(|(a, b)| a - h * b).collect();
        let rp = assemble_residual(&d, &plus, &stress, &rate);
        let rm = assemble_residual(&d, &minus, &stress, &rate);
        let fd: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        let err = fd.iter().zip(&jv).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = jv.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err / scale < 1e-6, "relative error {}", err / scale);
    }

    #[test]
    fn dirichlet_rows_are_identity() {
        let d = small();
        let w = random_state(&d, 3);
        let t = assemble_jacobian(&d, &w, &DamagedGlen::undamaged(GlenParams::default()), &ConstantRate(0.1));
        for (i, fixed) in d.dirichlet.iter().enumerate() {
            if *fixed {
                let row: Vec<_> = t.iter().filter(|e| e.0 == i).collect();
                assert_eq!(row.len(), 1);
                assert_eq!((row[0].1, row[0].2), (i, 1.0));
            }
        }
    }

    #[test]
    fn linear_stokes_block_is_symmetric() {
        let d = small();
        let lin = GlenParams { mu: 1.0, n: 1.0, eps_reg: 0.0 };
        let w = random_state(&d, 4);
        let t = assemble_jacobian(&d, &w, &DamagedGlen::undamaged(lin), &ConstantRate(0.0));
        let n = d.dofs.velocity_range().end;
        let mut dense = vec![0.0; n * n];
        for (i, j, v) in t {
            if i < n && j < n && !d.dirichlet[i] && !d.dirichlet[j] {
                dense[i * n + j] += v;
            }
        }
        for i in 0..n {
            for j in 0..i {
                assert!((dense[i * n + j] - dense[j * n + i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rate_sites_give_the_residual_sensitivity() {
        let d = small();
        let stress = DamagedGlen::undamaged(GlenParams::default());
        let w = random_state(&d, 5);
        let r0 = assemble_residual(&d, &w, &stress, &ConstantRate(0.0));
        let r1 = assemble_residual(&d, &w, &stress, &ConstantRate(1.0));
        let mut pred = vec![0.0; d.n_dofs()];
        for site in rate_sites(&d, &w) {
            for k in 0..3 {
                pred[site.rows[k]] += site.coeff[k];
            }
        }
        for i in 0..d.n_dofs() {
            assert!((r1[i] - r0[i] - pred[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn sample_count() {
        let d = small();
        let s = quadrature_samples(&d, &d.zero_state());
        assert_eq!(s.len(), d.cells.len() * d.basis.len());
        assert!(s.iter().all(|q| q.j2 == 0.0));
        let area: f64 = s.iter().map(|q| q.weight).sum();
        assert!((area - d.mesh.total_area()).abs() < 1e-12);
    }
}
