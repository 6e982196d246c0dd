//! Observation operators, noise synthesis, experimental losses and the
//! invariant-space loss.

use std::collections::BTreeMap;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::fem::quadrature::gauss3;
use crate::fem::sampling::{InvariantSample, Regime};
use crate::fem::{edge_shape, Discretization, ExperimentState};

/// Loss assigned to parameters whose forward solve fails.
pub const FAILED_SOLVE_LOSS: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Observer {
    Interior,
    Surface,
    SurfaceBorehole,
}

impl Observer {
    pub const ALL: [Observer; 3] = [Observer::Interior, Observer::Surface, Observer::SurfaceBorehole];

    pub fn name(self) -> &'static str {
        match self {
            Observer::Interior => "interior",
            Observer::Surface => "surface",
            Observer::SurfaceBorehole => "surface-borehole",
        }
    }
}

impl FromStr for Observer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interior" => Ok(Observer::Interior),
            "surface" => Ok(Observer::Surface),
            "surface-borehole" | "surface_plus_borehole" | "surface+borehole" => Ok(Observer::SurfaceBorehole),
            other => Err(Error::Config(format!("unknown observer `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub observer: Observer,
    pub gamma_u: f64,
    pub gamma_p: f64,
    pub failed_solve_loss: f64,
}

impl LossSpec {
    pub fn new(observer: Observer) -> Self {
        LossSpec {
            observer,
            gamma_u: 1.0,
            gamma_p: 1.0,
            failed_solve_loss: FAILED_SOLVE_LOSS,
        }
    }

    pub fn with_borehole_scalings(mut self, (gamma_u, gamma_p): (f64, f64)) -> Self {
        self.gamma_u = gamma_u;
        self.gamma_p = gamma_p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_u > 0.0) || !(self.gamma_p > 0.0) || !(self.failed_solve_loss > 0.0) {
            return Err(contract(format!("invalid loss specification {self:?}")));
        }
        Ok(())
    }
}

/// Noisy velocity and pressure observations with their provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub u: Vec<[f64; 2]>,
    pub p: Vec<f64>,
    pub delta: f64,
    pub seed: u64,
}

impl ObservationSet {
    /// Observation laid out like a state vector, damage entries zero.
    pub fn target(&self, d: &Discretization) -> Result<Vec<f64>> {
        if self.u.len() != d.dofs.n_p2 || self.p.len() != d.dofs.n_cells {
            return Err(contract("observations do not match the mesh"));
        }
        let mut w = vec![0.0; d.n_dofs()];
        for (n, u) in self.u.iter().enumerate() {
            w[d.dofs.u(n, 0)] = u[0];
            w[d.dofs.u(n, 1)] = u[1];
        }
        for (c, p) in self.p.iter().enumerate() {
            w[d.dofs.p(c)] = *p;
        }
        Ok(w)
    }
}

/// Multiplicative velocity noise (one factor per node) and additive pressure
/// noise scaled by the pressure range.
pub fn add_noise(truth: &ExperimentState, delta: f64, seed: u64) -> Result<ObservationSet> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(contract(format!("noise level {delta} must be finite and nonnegative")));
    }
    let mut u = truth.u.clone();
    let mut p = truth.p.clone();
    if delta > 0.0 {
        let normal = Normal::new(0.0, delta).map_err(|e| contract(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut u {
            let k: f64 = normal.sample(&mut rng);
            v[0] += k * v[0];
            v[1] += k * v[1];
        }
        let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
        let range = if p.is_empty() { 0.0 } else { hi - lo };
        for v in &mut p {
            let k: f64 = normal.sample(&mut rng);
            *v += k * range;
        }
    }
    Ok(ObservationSet { u, p, delta, seed })
}

/// Symmetric sparse matrix over state indices, rows sorted.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossMatrix {
    pub n: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl LossMatrix {
    fn from_entries(n: usize, entries: BTreeMap<(usize, usize), f64>) -> Self {
        let mut rows = vec![Vec::new(); n];
        for ((i, j), v) in entries {
            rows[i].push((j, v));
        }
        LossMatrix { n, rows }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|(j, m)| m * v[*j]).sum())
            .collect()
    }

    pub fn quadratic(&self, v: &[f64]) -> f64 {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| v[i] * r.iter().map(|(j, m)| m * v[*j]).sum::<f64>())
            .sum()
    }
}

fn add(e: &mut BTreeMap<(usize, usize), f64>, i: usize, j: usize, v: f64) {
    *e.entry((i, j)).or_insert(0.0) += v;
}

fn cell_mass(d: &Discretization, c: usize, scale_u: f64, scale_p: f64, e: &mut BTreeMap<(usize, usize), f64>) {
    let cell = &d.cells[c];
    for b in &d.basis {
        let wq = b.weight * cell.area * scale_u;
        for a in 0..6 {
            for m in 0..6 {
                let v = wq * b.n[a] * b.n[m];
                add(e, cell.dofs[2 * a], cell.dofs[2 * m], v);
                add(e, cell.dofs[2 * a + 1], cell.dofs[2 * m + 1], v);
            }
        }
    }
    add(e, cell.dofs[12], cell.dofs[12], scale_p * cell.area);
}

fn surface_mass(d: &Discretization, e: &mut BTreeMap<(usize, usize), f64>) {
    let m = &d.mesh;
    for be in m.boundary.iter().filter(|b| b.top_surface) {
        let nodes = m.edge_p2_nodes(be.edge);
        let len = m.edge_length(be.edge);
        for (t, w) in gauss3() {
            let s = edge_shape(t);
            for a in 0..3 {
                for b in 0..3 {
                    let v = w * len * s[a] * s[b];
                    add(e, d.dofs.u(nodes[a], 0), d.dofs.u(nodes[b], 0), v);
                    add(e, d.dofs.u(nodes[a], 1), d.dofs.u(nodes[b], 1), v);
                }
            }
        }
        let pc = d.dofs.p(be.cell);
        add(e, pc, pc, len);
    }
}

/// Matrix `M` with `L = (w − w̃)ᵀ M (w − w̃)` for the observer.
pub fn loss_matrix(d: &Discretization, spec: &LossSpec) -> Result<LossMatrix> {
    spec.validate()?;
    let mut e = BTreeMap::new();
    match spec.observer {
        Observer::Interior => (0..d.dofs.n_cells).for_each(|c| cell_mass(d, c, 1.0, 1.0, &mut e)),
        Observer::Surface => surface_mass(d, &mut e),
        Observer::SurfaceBorehole => {
            surface_mass(d, &mut e);
            for c in (0..d.dofs.n_cells).filter(|c| d.mesh.borehole[*c]) {
                cell_mass(d, c, spec.gamma_u, spec.gamma_p, &mut e);
            }
        }
    }
    Ok(LossMatrix::from_entries(d.n_dofs(), e))
}

/// Quadratic misfit `L(w) = (w − w̃)ᵀ M (w − w̃)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentalLoss {
    pub matrix: LossMatrix,
    pub target: Vec<f64>,
}

impl ExperimentalLoss {
    pub fn new(d: &Discretization, obs: &ObservationSet, spec: &LossSpec) -> Result<Self> {
        Ok(ExperimentalLoss {
            matrix: loss_matrix(d, spec)?,
            target: obs.target(d)?,
        })
    }

    fn residual(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.target.len() {
            return Err(contract("state does not match the observations"));
        }
        Ok(w.iter().zip(&self.target).map(|(a, b)| a - b).collect())
    }

    pub fn value(&self, w: &[f64]) -> Result<f64> {
        Ok(self.matrix.quadratic(&self.residual(w)?))
    }

    /// `∂L/∂w = 2 M (w − w̃)`.
    pub fn state_gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        Ok(self.matrix.apply(&self.residual(w)?).iter().map(|v| 2.0 * v).collect())
    }
}

pub fn experimental_loss(d: &Discretization, w: &[f64], obs: &ObservationSet, spec: &LossSpec) -> Result<f64> {
    ExperimentalLoss::new(d, obs, spec)?.value(w)
}

const SCALING_FLOOR: f64 = 1e-300;

/// `(γ_u, γ_p) = (1 / ∫_B ‖u₀‖², 1 / ∫_B p₀²)` over the borehole cells.
pub fn set_borehole_scalings(d: &Discretization, truth: &[f64]) -> (f64, f64) {
    let mut e = BTreeMap::new();
    for c in (0..d.dofs.n_cells).filter(|c| d.mesh.borehole[*c]) {
        cell_mass(d, c, 1.0, 0.0, &mut e);
    }
    let mu = LossMatrix::from_entries(d.n_dofs(), e);
    let mut e = BTreeMap::new();
    for c in (0..d.dofs.n_cells).filter(|c| d.mesh.borehole[*c]) {
        cell_mass(d, c, 0.0, 1.0, &mut e);
    }
    let mp = LossMatrix::from_entries(d.n_dofs(), e);
    (
        1.0 / mu.quadratic(truth).max(SCALING_FLOOR),
        1.0 / mp.quadratic(truth).max(SCALING_FLOOR),
    )
}

/// Rectangular node grid over `(J₂, φ)` for one strain-rate regime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantGrid {
    pub regime: Regime,
    pub j2: Vec<f64>,
    pub phi: Vec<f64>,
    /// Per node, `j2`-major.
    pub weights: Vec<f64>,
    /// Node lies inside the bounding box of the observed samples.
    pub in_distribution: Vec<bool>,
}

impl InvariantGrid {
    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.j2.iter().flat_map(move |j| self.phi.iter().map(move |p| (*j, *p)))
    }

    pub fn len(&self) -> usize {
        self.j2.len() * self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Root-mean-square of the per-node errors, optionally restricted to
    /// in-distribution nodes.
    pub fn rmse(&self, errors: &[f64], in_distribution_only: bool) -> f64 {
        let (sum, n) = errors
            .iter()
            .zip(&self.in_distribution)
            .filter(|(_, inside)| !in_distribution_only || **inside)
            .fold((0.0, 0usize), |(s, n), (e, _)| (s + e * e, n + 1));
        if n == 0 {
            0.0
        } else {
            (sum / n as f64).sqrt()
        }
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Grid covering the observed samples of a regime, padded by 10% and
/// clipped to the regime and to `φ ∈ [0, 1]`.
pub fn invariant_grid(samples: &[InvariantSample], regime: Regime, nj: usize, nphi: usize) -> Result<InvariantGrid> {
    if nj == 0 || nphi == 0 {
        return Err(contract("grid needs at least one node per direction"));
    }
    let (rlo, rhi) = regime.bounds();
    let inside: Vec<&InvariantSample> = samples.iter().filter(|s| s.regime == regime).collect();
    let (jbox, pbox) = if inside.is_empty() {
        ((rlo, rhi), (0.0, 1.0))
    } else {
        let fold = |f: fn(&InvariantSample) -> f64| {
            inside
                .iter()
                .map(|s| f(s))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
        };
        (fold(|s| s.j2), fold(|s| s.phi))
    };
    let pad = |(lo, hi): (f64, f64), fallback: f64| {
        let w = hi - lo;
        let p = if w > 0.0 { 0.1 * w } else { fallback };
        (lo - p, hi + p)
    };
    let (jlo, jhi) = pad(jbox, 0.05 * (rhi - rlo));
    let (plo, phi_hi) = pad(pbox, 0.05);
    let (jlo, jhi) = (jlo.max(rlo), jhi.min(rhi));
    let (plo, phi_hi) = (plo.max(0.0), phi_hi.min(1.0));
    let j2 = linspace(jlo, jhi, nj);
    let phi = linspace(plo, phi_hi, nphi);
    let mut in_distribution = Vec::with_capacity(nj * nphi);
    for j in &j2 {
        for p in &phi {
            in_distribution.push(
                !inside.is_empty() && *j >= jbox.0 && *j <= jbox.1 && *p >= pbox.0 && *p <= pbox.1,
            );
        }
    }
    Ok(InvariantGrid {
        regime,
        weights: vec![1.0; nj * nphi],
        j2,
        phi,
        in_distribution,
    })
}

/// Default grids: 64 × 32 nodes for each regime.
pub fn default_grids(samples: &[InvariantSample]) -> Result<Vec<InvariantGrid>> {
    [Regime::Small, Regime::Large]
        .into_iter()
        .map(|r| invariant_grid(samples, r, 64, 32))
        .collect()
}

/// `L_d = Σ wₖ (f(xₖ) − g(xₖ))²` and the per-node errors `f − g`.
pub fn invariant_loss(
    candidate: &dyn Fn(f64, f64) -> f64,
    truth: &dyn Fn(f64, f64) -> f64,
    grid: &InvariantGrid,
) -> (f64, Vec<f64>) {
    let errors: Vec<f64> = grid.nodes().map(|(j, p)| candidate(j, p) - truth(j, p)).collect();
    let loss = errors.iter().zip(&grid.weights).map(|(e, w)| w * e * e).sum();
    (loss, errors)
}
