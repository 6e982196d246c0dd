//! Quasi-Newton minimizers that tolerate infeasible trial points.

pub mod bfgs;
pub mod line_search;
pub mod trust_region;

use serde::{Deserialize, Serialize};

pub use bfgs::bfgs_minimize;
pub use trust_region::trust_region_bfgs_minimize;

/// Differentiable objective. `None` marks an infeasible point (a failed
/// forward solve): it has no value and no gradient.
pub trait Objective {
    fn dim(&self) -> usize;
    fn evaluate(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)>;
}

impl<F> Objective for (usize, F)
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    fn dim(&self) -> usize {
        self.0
    }

    fn evaluate(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        (self.1)(x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Bfgs,
    TrustRegionBfgs,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Bfgs => "bfgs",
            OptimizerKind::TrustRegionBfgs => "tr-bfgs",
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "bfgs" => Ok(OptimizerKind::Bfgs),
            "tr-bfgs" | "trust-region-bfgs" | "trbfgs" => Ok(OptimizerKind::TrustRegionBfgs),
            other => Err(crate::Error::Config(format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTol,
    StepStall,
    MaxIter,
    LineSearchFailure,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::GradientTol => "gradient_tol",
            Termination::StepStall => "step_stall",
            Termination::MaxIter => "max_iter",
            Termination::LineSearchFailure => "line_search_failure",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSettings {
    /// Stop when `‖g‖ ≤ gtol (1 + |f|)`.
    pub gtol: f64,
    /// Stop when `‖Δx‖ ≤ step_tol (1 + ‖x‖)`.
    pub step_tol: f64,
    pub max_iter: usize,
    pub c1: f64,
    pub c2: f64,
    /// Loss substituted at infeasible points.
    pub failed_loss: f64,
    pub max_line_search: usize,
    pub initial_radius: f64,
    pub max_radius: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            gtol: 1e-8,
            step_tol: 1e-12,
            max_iter: 500,
            c1: 1e-4,
            c2: 0.9,
            failed_loss: crate::observe::FAILED_SOLVE_LOSS,
            max_line_search: 40,
            initial_radius: 1.0,
            max_radius: 1e3,
        }
    }
}

/// One accepted iterate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub step_norm: f64,
    /// Trust radius in force when the step was taken.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub loss: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub failed_evaluations: usize,
    pub termination: Termination,
    pub trace: Vec<TraceEntry>,
    /// Trial points rejected by the trust-region ratio test, with the radius
    /// before and after.
    #[serde(default)]
    pub rejections: Vec<(f64, f64)>,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Counts evaluations and feasibility failures around an objective.
pub(crate) struct Counted<'a> {
    pub inner: &'a mut dyn Objective,
    pub evaluations: usize,
    pub failures: usize,
}

impl Counted<'_> {
    pub fn eval(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        self.evaluations += 1;
        let r = self.inner.evaluate(x).filter(|(f, g)| f.is_finite() && g.iter().all(|v| v.is_finite()));
        if r.is_none() {
            self.failures += 1;
        }
        r
    }
}

#[cfg(test)]
pub(crate) mod test_problems {
    /// `(x − a)ᵀ H (x − a)` with a fixed SPD `H`.
    pub fn quadratic(dim: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let a: Vec<f64> = (0..dim).map(|i| (i as f64 * 0.9).sin() + 0.5).collect();
        let mut h = vec![vec![0.0; dim]; dim];
        for i in 0..dim {
            for j in 0..dim {
                let m: f64 = (0..dim).map(|k| ((i * 7 + k * 3) as f64).cos() * ((j * 7 + k * 3) as f64).cos()).sum();
                h[i][j] = 0.2 * m + if i == j { 1.0 + i as f64 } else { 0.0 };
            }
        }
        (a, h)
    }

    pub fn eval_quadratic(a: &[f64], h: &[Vec<f64>], x: &[f64]) -> (f64, Vec<f64>) {
        let d: Vec<f64> = x.iter().zip(a).map(|(p, q)| p - q).collect();
        let hd: Vec<f64> = h.iter().map(|r| r.iter().zip(&d).map(|(u, v)| u * v).sum()).collect();
        (d.iter().zip(&hd).map(|(u, v)| u * v).sum(), hd.iter().map(|v| 2.0 * v).collect())
    }

    pub fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        (f, g)
    }
}
