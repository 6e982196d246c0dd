//! Damped Newton iteration for the coupled system.

use serde::{Deserialize, Serialize};

use super::assembly::{assemble_residual, assemble_residual_and_jacobian};
use super::linalg::LuCache;
use super::Discretization;
use crate::models::GlenParams;
use crate::rate::{ConstantRate, DamageRate, DamagedGlen, StressClosure};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    None,
    Diverged,
    SingularJacobian,
    ResidualStall,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonConfig {
    /// Convergence when `‖F‖ / ‖load‖` drops to this value.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Residual growth over the initial residual that counts as divergence.
    pub divergence_factor: f64,
    /// Largest nodal damage accepted in a converged state.
    pub damage_cap: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            tol: 1e-10,
            max_iter: 60,
            max_halvings: 12,
            divergence_factor: 1e8,
            damage_cap: 1.0 + 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOutcome {
    pub state: Option<Vec<f64>>,
    pub converged: bool,
    pub relative_residual: f64,
    pub newton_iterations: usize,
    pub failure_kind: FailureKind,
}

impl SolveOutcome {
    fn failed(kind: FailureKind, rel: f64, iters: usize) -> Self {
        SolveOutcome {
            state: None,
            converged: false,
            relative_residual: rel,
            newton_iterations: iters,
            failure_kind: kind,
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Newton iteration from `w0` with residual-monotone backtracking.
pub fn newton(
    d: &Discretization,
    stress: &dyn StressClosure,
    rate: &dyn DamageRate,
    w0: Vec<f64>,
    cfg: &NewtonConfig,
    cache: &mut LuCache,
) -> SolveOutcome {
    let mut w = w0;
    for (i, fixed) in d.dirichlet.iter().enumerate() {
        if *fixed {
            w[i] = 0.0;
        }
    }
    let scale = d.load_norm;
    let mut r = assemble_residual(d, &w, stress, rate);
    let mut rn = norm(&r);
    if !rn.is_finite() {
        return SolveOutcome::failed(FailureKind::Diverged, f64::INFINITY, 0);
    }
    let r0 = rn.max(cfg.tol * scale);
    for it in 0..=cfg.max_iter {
        let rel = rn / scale;
        if rel <= cfg.tol {
            let dr = d.dofs.damage_range();
            if w[dr].iter().any(|p| *p > cfg.damage_cap) {
                return SolveOutcome::failed(FailureKind::Diverged, rel, it);
            }
            return SolveOutcome {
                state: Some(w),
                converged: true,
                relative_residual: rel,
                newton_iterations: it,
                failure_kind: FailureKind::None,
            };
        }
        if it == cfg.max_iter {
            return SolveOutcome::failed(FailureKind::ResidualStall, rel, it);
        }
        let (_, jac) = assemble_residual_and_jacobian(d, &w, stress, rate);
        let step = match cache.factor(d.n_dofs(), &jac).and_then(|lu| lu.solve(&r)) {
            Ok(s) => s,
            Err(_) => return SolveOutcome::failed(FailureKind::SingularJacobian, rel, it),
        };
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let trial: Vec<f64> = w.iter().zip(&step).map(|(a, s)| a - alpha * s).collect();
            let rt = assemble_residual(d, &trial, stress, rate);
            let tn = norm(&rt);
            if tn.is_finite() && tn <= (1.0 - 1e-4 * alpha) * rn {
                accepted = Some((trial, rt, tn));
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((nw, nr, nn)) => {
                w = nw;
                r = nr;
                rn = nn;
            }
            None => return SolveOutcome::failed(FailureKind::ResidualStall, rel, it + 1),
        }
        if rn > cfg.divergence_factor * r0 || w.iter().any(|v| !v.is_finite() || v.abs() > 1e12) {
            return SolveOutcome::failed(FailureKind::Diverged, rn / scale, it + 1);
        }
    }
    unreachable!("loop returns on the last iteration")
}

/// Solves the coupled system. Without a guess the iteration is continued
/// from linear Stokes through the damage-free flow law.
pub fn solve_forward(
    d: &Discretization,
    stress: &dyn StressClosure,
    rate: &dyn DamageRate,
    guess: Option<&[f64]>,
    cfg: &NewtonConfig,
) -> SolveOutcome {
    let mut cache = LuCache::new();
    let start = match guess {
        Some(g) if g.len() == d.n_dofs() => g.to_vec(),
        _ => {
            let base = damage_free_solution(d, stress, cfg, &mut cache);
            match base.state {
                Some(s) => s,
                None => return base,
            }
        }
    };
    newton(d, stress, rate, start, cfg, &mut cache)
}

/// Flow solution with zero damage source, reached from linear Stokes.
pub fn damage_free_solution(
    d: &Discretization,
    stress: &dyn StressClosure,
    cfg: &NewtonConfig,
    cache: &mut LuCache,
) -> SolveOutcome {
    let mu = stress.coefficients(0.0, 1.0, 0.0).c[1];
    let linear = DamagedGlen::undamaged(GlenParams { mu, n: 1.0, eps_reg: 0.0 });
    let zero = ConstantRate(0.0);
    let stokes = newton(d, &linear, &zero, d.zero_state(), cfg, cache);
    match stokes.state {
        Some(s) => newton(d, stress, &zero, s, cfg, cache),
        None => stokes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{GeometryConfig, PhysicsConfig};
    use crate::models::{DamageParams, GuardSmoothing};
    use crate::rate::AlbrechtLevermannRate;

    fn disc() -> Discretization {
        Discretization::new(&GeometryConfig { nx: 6, ny: 4, ..Default::default() }, &PhysicsConfig::default()).unwrap()
    }

    #[test]
    fn damage_free_flow_converges_with_zero_damage() {
        let d = disc();
        let stress = DamagedGlen::new(GlenParams::default(), &DamageParams::default());
        let out = solve_forward(&d, &stress, &ConstantRate(0.0), None, &NewtonConfig::default());
        assert!(out.converged, "{out:?}");
        let w = out.state.unwrap();
        assert!(w[d.dofs.damage_range()].iter().all(|p| p.abs() < 1e-12));
        assert!(w[d.dofs.velocity_range()].iter().any(|u| u.abs() > 1e-3));
    }

    #[test]
    fn albrecht_levermann_truth_converges() {
        let d = disc();
        let dp = DamageParams::default();
        let stress = DamagedGlen::new(GlenParams::default(), &dp);
        let out = solve_forward(&d, &stress, &AlbrechtLevermannRate::smoothed(dp, GuardSmoothing { fracture: 0.2, healing: 0.02 }), None, &NewtonConfig::default());
        assert!(out.converged, "{out:?}");
        assert!(out.relative_residual <= NewtonConfig::default().tol);
    }

    #[test]
    fn explosive_rate_fails() {
        let d = disc();
        let stress = DamagedGlen::new(GlenParams::default(), &DamageParams::default());
        let out = solve_forward(&d, &stress, &ConstantRate(1e6), None, &NewtonConfig::default());
        assert!(!out.converged);
        assert_ne!(out.failure_kind, FailureKind::None);
        assert!(out.state.is_none());
    }

    #[test]
    fn solves_are_deterministic() {
        let d = disc();
        let dp = DamageParams::default();
        let stress = DamagedGlen::new(GlenParams::default(), &dp);
        let a = solve_forward(&d, &stress, &AlbrechtLevermannRate::smoothed(dp, GuardSmoothing { fracture: 0.2, healing: 0.02 }), None, &NewtonConfig::default());
        let b = solve_forward(&d, &stress, &AlbrechtLevermannRate::smoothed(dp, GuardSmoothing { fracture: 0.2, healing: 0.02 }), None, &NewtonConfig::default());
        assert_eq!(a, b);
    }
}
