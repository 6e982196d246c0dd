//! Invariant samples at quadrature points of a converged state.

use serde::{Deserialize, Serialize};

use super::assembly::quadrature_samples;
use super::solver::SolveOutcome;
use super::Discretization;
use crate::error::{contract, Result};

/// Boundary between the small and large strain-rate regimes, `√20`.
pub fn regime_split() -> f64 {
    20f64.sqrt()
}

/// Upper end of the large regime, `√450`.
pub fn regime_top() -> f64 {
    450f64.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Small,
    Large,
}

impl Regime {
    pub fn of(j2: f64) -> Self {
        if j2 <= regime_split() {
            Regime::Small
        } else {
            Regime::Large
        }
    }

    pub fn bounds(self) -> (f64, f64) {
        match self {
            Regime::Small => (0.0, regime_split()),
            Regime::Large => (regime_split(), regime_top()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::Small => "small",
            Regime::Large => "large",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantSample {
    pub cell: usize,
    pub x: f64,
    pub y: f64,
    pub weight: f64,
    pub j1: f64,
    pub j2: f64,
    pub phi: f64,
    pub regime: Regime,
}

/// One row per quadrature point outside the excluded corner cells.
pub fn sample_invariants(d: &Discretization, outcome: &SolveOutcome) -> Result<Vec<InvariantSample>> {
    match (&outcome.state, outcome.converged) {
        (Some(w), true) => Ok(sample_state(d, w)),
        _ => Err(contract("invariants can only be sampled from a converged solve")),
    }
}

pub fn sample_state(d: &Discretization, w: &[f64]) -> Vec<InvariantSample> {
    quadrature_samples(d, w)
        .into_iter()
        .filter(|q| !d.mesh.excluded[q.cell])
        .map(|q| InvariantSample {
            cell: q.cell,
            x: q.x[0],
            y: q.x[1],
            weight: q.weight,
            j1: q.j1,
            j2: q.j2,
            phi: q.phi,
            regime: Regime::of(q.j2),
        })
        .collect()
}
