//! Discrete-adjoint gradients of an experimental loss with respect to the
//! damage-rate parameters.

use crate::error::{contract, Result};
use crate::fem::assembly::{assemble_residual, assemble_residual_and_jacobian, rate_sites, RateSite};
use crate::fem::linalg::{LuCache, SparseLu};
use crate::fem::solver::{solve_forward, NewtonConfig, SolveOutcome};
use crate::fem::Discretization;
use crate::observe::ExperimentalLoss;
use crate::rate::{DamageRate, StressClosure};

/// Forward problem shared by gradient and tangent evaluations.
pub struct Experiment<'a> {
    pub disc: &'a Discretization,
    pub stress: &'a dyn StressClosure,
    pub newton: &'a NewtonConfig,
    /// Starting point for every Newton solve.
    pub guess: Option<&'a [f64]>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LossGradient {
    Converged {
        loss: f64,
        gradient: Vec<f64>,
        state: Vec<f64>,
    },
    /// The forward solve failed; no gradient exists.
    Failed(SolveOutcome),
}

/// Converged state with the factorized Jacobian.
pub struct AdjointWorkspace {
    pub state: Vec<f64>,
    pub sites: Vec<RateSite>,
    lu: SparseLu,
}

impl AdjointWorkspace {
    pub fn new(ex: &Experiment<'_>, rate: &dyn DamageRate, state: Vec<f64>) -> Result<Self> {
        let (_, jac) = assemble_residual_and_jacobian(ex.disc, &state, ex.stress, rate);
        let lu = LuCache::new()
            .factor(ex.disc.n_dofs(), &jac)
            .map_err(|e| contract(format!("Jacobian at the converged state is singular: {e:?}")))?;
        let sites = rate_sites(ex.disc, &state);
        Ok(AdjointWorkspace { state, sites, lu })
    }

    /// One Newton correction with the stored factorization, kept when it
    /// lowers the residual. Brings a state accepted at the solver tolerance
    /// to round-off.
    pub fn polish(&mut self, ex: &Experiment<'_>, rate: &dyn DamageRate) -> Result<()> {
        let r = assemble_residual(ex.disc, &self.state, ex.stress, rate);
        let step = self.lu.solve(&r).map_err(|e| contract(format!("correction solve failed: {e:?}")))?;
        let trial: Vec<f64> = self.state.iter().zip(&step).map(|(w, d)| w - d).collect();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        if norm(&assemble_residual(ex.disc, &trial, ex.stress, rate)) < norm(&r) {
            self.sites = rate_sites(ex.disc, &trial);
            self.state = trial;
        }
        Ok(())
    }

    fn points(&self) -> Vec<[f64; 2]> {
        self.sites.iter().map(|s| s.point).collect()
    }

    /// `dL/dθ` for a loss with state gradient `dl_dw`.
    pub fn gradient(&self, rate: &dyn DamageRate, dl_dw: &[f64]) -> Result<Vec<f64>> {
        let lambda = self
            .lu
            .solve_transpose(dl_dw)
            .map_err(|e| contract(format!("adjoint solve failed: {e:?}")))?;
        let cot: Vec<f64> = self
            .sites
            .iter()
            .map(|s| -(0..3).map(|k| lambda[s.rows[k]] * s.coeff[k]).sum::<f64>())
            .collect();
        Ok(rate.param_vjp(&self.points(), &cot))
    }

    /// State sensitivity `dw/dθ · direction`.
    pub fn tangent(&self, rate: &dyn DamageRate, direction: &[f64]) -> Result<Vec<f64>> {
        let ds = rate.param_jvp(&self.points(), direction);
        let mut rhs = vec![0.0; self.state.len()];
        for (s, d) in self.sites.iter().zip(ds) {
            for k in 0..3 {
                rhs[s.rows[k]] -= s.coeff[k] * d;
            }
        }
        self.lu
            .solve(&rhs)
            .map_err(|e| contract(format!("tangent solve failed: {e:?}")))
    }
}

/// Loss and its gradient at the rate's current parameters.
pub fn loss_gradient(ex: &Experiment<'_>, rate: &dyn DamageRate, loss: &ExperimentalLoss) -> Result<LossGradient> {
    let out = solve_forward(ex.disc, ex.stress, rate, ex.guess, ex.newton);
    let state = match out.state {
        Some(s) if out.converged => s,
        _ => return Ok(LossGradient::Failed(out)),
    };
    let mut ws = AdjointWorkspace::new(ex, rate, state)?;
    ws.polish(ex, rate)?;
    let value = loss.value(&ws.state)?;
    let gradient = ws.gradient(rate, &loss.state_gradient(&ws.state)?)?;
    Ok(LossGradient::Converged {
        loss: value,
        gradient,
        state: ws.state,
    })
}

/// Directional derivative of the loss by forward (tangent) sensitivity;
/// `None` when the forward solve fails.
pub fn forward_sensitivity_probe(
    ex: &Experiment<'_>,
    rate: &dyn DamageRate,
    loss: &ExperimentalLoss,
    direction: &[f64],
) -> Result<Option<f64>> {
    if direction.len() != rate.param_count() {
        return Err(contract("direction length differs from the parameter count"));
    }
    let out = solve_forward(ex.disc, ex.stress, rate, ex.guess, ex.newton);
    let state = match out.state {
        Some(s) if out.converged => s,
        _ => return Ok(None),
    };
    let mut ws = AdjointWorkspace::new(ex, rate, state)?;
    ws.polish(ex, rate)?;
    let dw = ws.tangent(rate, direction)?;
    let g = loss.state_gradient(&ws.state)?;
    Ok(Some(g.iter().zip(&dw).map(|(a, b)| a * b).sum()))
}
