//! End-to-end experiment steps: ground-truth generation, single training
//! runs, resumable sweeps and network evaluation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adjoint::{loss_gradient, Experiment, LossGradient};
use crate::config::{ExperimentConfig, RunSpec, NOISE_LEVELS};
use crate::error::{contract, Error, Result};
use crate::fem::io::{csv_table, read_state, read_text, write_fields, write_text};
use crate::fem::linalg::LuCache;
use crate::fem::sampling::{sample_state, InvariantSample, Regime};
use crate::fem::solver::{damage_free_solution, solve_forward, FailureKind, NewtonConfig};
use crate::fem::Discretization;
use crate::neural::{
    detect_constant_collapse, feasible_init, fit_scaler, mlp_init, rate_network_sizes, Activation, InputScaler,
    MlpParams,
};
use crate::observe::{
    add_noise, invariant_grid, invariant_loss, set_borehole_scalings, ExperimentalLoss, InvariantGrid, LossSpec,
    ObservationSet,
};
use crate::optim::{
    bfgs_minimize, trust_region_bfgs_minimize, Objective, OptimizerKind, Termination, TraceEntry,
};
use crate::rate::{damage_rate_cr, AlbrechtLevermannRate, DamageRate, DamagedGlen, NetworkRate};
use crate::tensor::{equivariance_defect2, rotation2, Sym2, Tensor};

/// Everything derived from the ground-truth solve.
pub struct Truth {
    pub config: ExperimentConfig,
    pub disc: Discretization,
    pub stress: DamagedGlen,
    pub rate: AlbrechtLevermannRate,
    pub state: Vec<f64>,
    /// Damage-free flow, the starting point of every training solve.
    pub glen_state: Vec<f64>,
    pub samples: Vec<InvariantSample>,
    pub scaler: InputScaler,
    pub grids: Vec<InvariantGrid>,
    pub borehole: (f64, f64),
    /// One set per entry of [`NOISE_LEVELS`].
    pub observations: Vec<ObservationSet>,
    pub newton_iterations: usize,
    pub relative_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    borehole_scalings: [f64; 2],
    newton_iterations: usize,
    relative_residual: f64,
    n_dofs: usize,
    n_cells: usize,
    n_samples: usize,
    noise_levels: Vec<f64>,
}

pub const INVARIANTS_HEADER: &str = "cell,x,y,weight,j1,j2,phi,regime";
pub const GRID_HEADER: &str = "regime,j2,phi,weight,in_distribution,truth_rate";

/// Mean and spread of `(J₂, φ)` over the samples. A column without spread
/// keeps unit scale.
pub fn truth_scaler(samples: &[InvariantSample]) -> Result<InputScaler> {
    let rows: Vec<Vec<f64>> = samples.iter().map(|s| vec![s.j2, s.phi]).collect();
    match fit_scaler(&rows) {
        Ok(s) => Ok(s),
        Err(Error::DegenerateData(_)) if !rows.is_empty() => {
            let n = rows.len() as f64;
            let mut mean = [0.0; 2];
            let mut std = [0.0; 2];
            for k in 0..2 {
                mean[k] = rows.iter().map(|r| r[k]).sum::<f64>() / n;
                let v = rows.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / n;
                std[k] = if v.sqrt() > 1e-12 * (1.0 + mean[k].abs()) { v.sqrt() } else { 1.0 };
            }
            Ok(InputScaler { mean: mean.to_vec(), std: std.to_vec() })
        }
        Err(e) => Err(e),
    }
}

pub fn generate_truth(cfg: &ExperimentConfig) -> Result<Truth> {
    cfg.validate()?;
    let disc = Discretization::new(&cfg.geometry, &cfg.physics)?;
    let stress = DamagedGlen::new(cfg.truth.glen, &cfg.truth.damage);
    let rate = AlbrechtLevermannRate::smoothed(cfg.truth.damage, cfg.truth.smoothing);
    let glen = damage_free_solution(&disc, &stress, &cfg.newton, &mut LuCache::new());
    let glen_state = match glen.state {
        Some(s) if glen.converged => s,
        _ => return Err(Error::Solve(format!("damage-free flow: {:?}", glen.failure_kind))),
    };
    let out = solve_forward(&disc, &stress, &rate, Some(&glen_state), &cfg.newton);
    let state = match out.state {
        Some(s) if out.converged => s,
        _ => {
            return Err(Error::Solve(format!(
                "ground truth: {:?} after {} Newton iterations (relative residual {:e})",
                out.failure_kind, out.newton_iterations, out.relative_residual
            )))
        }
    };
    Truth::assemble(cfg.clone(), disc, stress, rate, state, glen_state, out.newton_iterations, out.relative_residual)
}

impl Truth {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        config: ExperimentConfig,
        disc: Discretization,
        stress: DamagedGlen,
        rate: AlbrechtLevermannRate,
        state: Vec<f64>,
        glen_state: Vec<f64>,
        newton_iterations: usize,
        relative_residual: f64,
    ) -> Result<Truth> {
        let samples = sample_state(&disc, &state);
        let scaler = truth_scaler(&samples)?;
        let [nj, nphi] = config.truth.grid;
        let grids = [Regime::Small, Regime::Large]
            .into_iter()
            .map(|r| invariant_grid(&samples, r, nj, nphi))
            .collect::<Result<Vec<_>>>()?;
        let borehole = set_borehole_scalings(&disc, &state);
        let fields = disc.state(&state);
        let observations = NOISE_LEVELS
            .iter()
            .map(|&delta| add_noise(&fields, delta, config.truth.noise_seed))
            .collect::<Result<Vec<_>>>()?;
        Ok(Truth {
            config,
            disc,
            stress,
            rate,
            state,
            glen_state,
            samples,
            scaler,
            grids,
            borehole,
            observations,
            newton_iterations,
            relative_residual,
        })
    }

    pub fn observation(&self, noise: f64) -> Result<&ObservationSet> {
        self.observations
            .iter()
            .find(|o| o.delta == noise)
            .ok_or_else(|| Error::Config(format!("no observation set for noise {noise}")))
    }

    pub fn loss_spec(&self, observer: crate::observe::Observer, failed_loss: f64) -> LossSpec {
        let mut spec = LossSpec::new(observer).with_borehole_scalings(self.borehole);
        spec.failed_solve_loss = failed_loss;
        spec
    }

    /// Writes the truth directory. Every file is a pure function of the
    /// configuration.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_text(&dir.join("config.toml"), &self.config.to_toml())?;
        write_fields(&dir.join("truth"), &self.disc, &self.state)?;
        write_fields(&dir.join("glen"), &self.disc, &self.glen_state)?;
        let rows = self.samples.iter().map(|s| {
            vec![s.cell as f64, s.x, s.y, s.weight, s.j1, s.j2, s.phi, f64::from(u8::from(s.regime == Regime::Large))]
        });
        write_text(&dir.join("invariants.csv"), &csv_table(INVARIANTS_HEADER, rows))?;
        write_text(&dir.join("scaler.json"), &to_json(&self.scaler))?;
        let mut grid = String::from(GRID_HEADER);
        grid.push('\n');
        for g in &self.grids {
            for (k, (j, p)) in g.nodes().enumerate() {
                let _ = writeln!(
                    grid,
                    "{},{j},{p},{},{},{}",
                    g.regime.name(),
                    g.weights[k],
                    u8::from(g.in_distribution[k]),
                    self.rate.rate(j, p)
                );
            }
        }
        write_text(&dir.join("invariant_grid.csv"), &grid)?;
        for o in &self.observations {
            write_text(&dir.join(format!("observations/noise_{}.json", o.delta)), &to_json(o))?;
        }
        let manifest = Manifest {
            borehole_scalings: [self.borehole.0, self.borehole.1],
            newton_iterations: self.newton_iterations,
            relative_residual: self.relative_residual,
            n_dofs: self.disc.n_dofs(),
            n_cells: self.disc.dofs.n_cells,
            n_samples: self.samples.len(),
            noise_levels: NOISE_LEVELS.to_vec(),
        };
        write_text(&dir.join("manifest.json"), &to_json(&manifest))
    }

    /// Reads a truth directory written by [`Truth::write`].
    pub fn load(dir: &Path) -> Result<Truth> {
        let config = ExperimentConfig::load(&dir.join("config.toml"))?;
        let disc = Discretization::new(&config.geometry, &config.physics)?;
        let stress = DamagedGlen::new(config.truth.glen, &config.truth.damage);
        let rate = AlbrechtLevermannRate::smoothed(config.truth.damage, config.truth.smoothing);
        let state = disc.flatten_state(&read_state(&dir.join("truth"), &disc)?)?;
        let glen_state = disc.flatten_state(&read_state(&dir.join("glen"), &disc)?)?;
        let manifest: Manifest = from_json(&dir.join("manifest.json"))?;
        let mut truth = Truth::assemble(
            config,
            disc,
            stress,
            rate,
            state,
            glen_state,
            manifest.newton_iterations,
            manifest.relative_residual,
        )?;
        truth.scaler = from_json(&dir.join("scaler.json"))?;
        truth.borehole = (manifest.borehole_scalings[0], manifest.borehole_scalings[1]);
        for o in &mut truth.observations {
            *o = from_json(&dir.join(format!("observations/noise_{}.json", o.delta)))?;
        }
        Ok(truth)
    }

    /// Invariant loss, in-distribution RMSE and per-grid errors of a rate.
    pub fn invariant_errors(&self, rate: &dyn DamageRate) -> InvariantErrors {
        let truth = |j: f64, p: f64| self.rate.rate(j, p);
        let cand = |j: f64, p: f64| rate.rate(j, p);
        let mut loss = 0.0;
        let mut per_grid = Vec::new();
        let (mut sum, mut n) = (0.0, 0usize);
        for g in &self.grids {
            let (l, e) = invariant_loss(&cand, &truth, g);
            loss += l;
            for (err, inside) in e.iter().zip(&g.in_distribution) {
                if *inside {
                    sum += err * err;
                    n += 1;
                }
            }
            per_grid.push(e);
        }
        InvariantErrors { loss, rmse_in_distribution: if n == 0 { 0.0 } else { (sum / n as f64).sqrt() }, per_grid }
    }

    /// All grid nodes as network input rows.
    pub fn grid_rows(&self) -> Vec<Vec<f64>> {
        self.grids.iter().flat_map(|g| g.nodes().map(|(j, p)| vec![j, p])).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvariantErrors {
    pub loss: f64,
    pub rmse_in_distribution: f64,
    pub per_grid: Vec<Vec<f64>>,
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn from_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::Format { path: path.into(), message: e.to_string() })
}

/// Result of one objective evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct AdapterEval {
    pub loss: f64,
    /// Absent exactly when `failed`.
    pub gradient: Option<Vec<f64>>,
    pub failed: bool,
    pub failure_kind: FailureKind,
}

/// Experimental loss of a network rate as a function of its parameters.
///
/// Each solve starts from the most recent converged state and falls back to
/// the damage-free flow, so the iterates follow one solution branch.
pub struct ObjectiveAdapter<'a> {
    disc: &'a Discretization,
    stress: &'a DamagedGlen,
    newton: &'a NewtonConfig,
    guess: &'a [f64],
    warm: Option<Vec<f64>>,
    loss: &'a ExperimentalLoss,
    rate: NetworkRate,
    failed_loss: f64,
    pub evaluations: usize,
    pub failures: usize,
}

impl<'a> ObjectiveAdapter<'a> {
    pub fn new(truth: &'a Truth, newton: &'a NewtonConfig, loss: &'a ExperimentalLoss, rate: NetworkRate, failed_loss: f64) -> Self {
        ObjectiveAdapter {
            disc: &truth.disc,
            stress: &truth.stress,
            newton,
            guess: &truth.glen_state,
            warm: None,
            loss,
            rate,
            failed_loss,
            evaluations: 0,
            failures: 0,
        }
    }

    fn experiment<'b>(&'b self, guess: &'b [f64]) -> Experiment<'b> {
        Experiment { disc: self.disc, stress: self.stress, newton: self.newton, guess: Some(guess) }
    }

    /// Forget the last converged state.
    pub fn reset_warm_start(&mut self) {
        self.warm = None;
    }

    pub fn evaluate_flagged(&mut self, x: &[f64]) -> AdapterEval {
        self.evaluations += 1;
        let failed = |kind| AdapterEval { loss: self.failed_loss, gradient: None, failed: true, failure_kind: kind };
        if self.rate.set_params(x).is_err() {
            self.failures += 1;
            return failed(FailureKind::Diverged);
        }
        let mut result = None;
        if let Some(w) = &self.warm {
            let r = loss_gradient(&self.experiment(w), &self.rate, self.loss);
            if matches!(r, Ok(LossGradient::Converged { .. })) {
                result = Some(r);
            }
        }
        let result = result.unwrap_or_else(|| loss_gradient(&self.experiment(self.guess), &self.rate, self.loss));
        match result {
            Ok(LossGradient::Converged { loss, gradient, state }) => {
                self.warm = Some(state);
                AdapterEval { loss, gradient: Some(gradient), failed: false, failure_kind: FailureKind::None }
            }
            Ok(LossGradient::Failed(out)) => {
                self.failures += 1;
                failed(out.failure_kind)
            }
            Err(_) => {
                self.failures += 1;
                failed(FailureKind::SingularJacobian)
            }
        }
    }

    /// Whether the forward problem converges at `x`.
    pub fn solves(&mut self, x: &[f64]) -> bool {
        if self.rate.set_params(x).is_err() {
            return false;
        }
        solve_forward(self.disc, self.stress, &self.rate, Some(self.guess), self.newton).converged
    }

    /// Converged damage field at `x`, if any.
    pub fn damage(&mut self, x: &[f64]) -> Option<Vec<f64>> {
        self.rate.set_params(x).ok()?;
        let out = solve_forward(self.disc, self.stress, &self.rate, Some(self.guess), self.newton);
        let w = out.state.filter(|_| out.converged)?;
        Some(w[self.disc.dofs.damage_range()].to_vec())
    }
}

impl Objective for ObjectiveAdapter<'_> {
    fn dim(&self) -> usize {
        self.rate.param_count()
    }

    fn evaluate(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let e = self.evaluate_flagged(x);
        e.gradient.map(|g| (e.loss, g))
    }
}

/// Outcome of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub shape: Vec<usize>,
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub optimizer: OptimizerKind,
    pub observer: crate::observe::Observer,
    pub noise: f64,
    pub seed: u64,
    pub feasible_alpha: f64,
    pub init_exp_loss: f64,
    pub init_inv_loss: f64,
    pub init_rmse: f64,
    pub final_exp_loss: f64,
    pub final_inv_loss: f64,
    pub final_rmse: f64,
    pub final_grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub failed_evaluations: usize,
    /// `None` only when the run itself errored (see `error`).
    pub termination: Option<Termination>,
    pub collapse_flag: bool,
    pub trace: Vec<TraceEntry>,
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunRecord {
    fn errored(spec: &RunSpec, msg: String) -> Self {
        RunRecord {
            shape: spec.shape.clone(),
            layer_sizes: rate_network_sizes(&spec.shape),
            activation: spec.activation,
            optimizer: spec.optimizer,
            observer: spec.observer,
            noise: spec.noise,
            seed: spec.seed,
            feasible_alpha: f64::NAN,
            init_exp_loss: f64::NAN,
            init_inv_loss: f64::NAN,
            init_rmse: f64::NAN,
            final_exp_loss: f64::NAN,
            final_inv_loss: f64::NAN,
            final_rmse: f64::NAN,
            final_grad_norm: f64::NAN,
            iterations: 0,
            evaluations: 0,
            failed_evaluations: 0,
            termination: None,
            collapse_flag: false,
            trace: vec![],
            params: vec![],
            error: Some(msg),
        }
    }

    pub fn spec(&self) -> RunSpec {
        RunSpec {
            shape: self.shape.clone(),
            activation: self.activation,
            optimizer: self.optimizer,
            observer: self.observer,
            noise: self.noise,
            seed: self.seed,
        }
    }

    pub fn network(&self) -> Result<MlpParams> {
        MlpParams::zeros(&self.layer_sizes, self.activation)?.with_flat(&self.params)
    }
}

/// Random normal initialization, feasibility scaling, minimization.
pub fn train(truth: &Truth, cfg: &ExperimentConfig, spec: &RunSpec) -> RunRecord {
    match mlp_init(spec.seed, &rate_network_sizes(&spec.shape), spec.activation) {
        Ok(candidate) => train_from(truth, cfg, spec, &candidate),
        Err(e) => RunRecord::errored(spec, e.to_string()),
    }
}

/// As [`train`] from a given candidate initialization.
pub fn train_from(truth: &Truth, cfg: &ExperimentConfig, spec: &RunSpec, candidate: &MlpParams) -> RunRecord {
    train_inner(truth, cfg, spec, candidate).unwrap_or_else(|e| RunRecord::errored(spec, e.to_string()))
}

fn train_inner(truth: &Truth, cfg: &ExperimentConfig, spec: &RunSpec, candidate: &MlpParams) -> Result<RunRecord> {
    let settings = &cfg.optimizer;
    let obs = truth.observation(spec.noise)?;
    let loss_spec = truth.loss_spec(spec.observer, settings.failed_loss);
    let loss = ExperimentalLoss::new(&truth.disc, obs, &loss_spec)?;
    let template = NetworkRate::new(candidate.clone(), truth.scaler.clone())?;
    let mut adapter = ObjectiveAdapter::new(truth, &cfg.newton, &loss, template.clone(), settings.failed_loss);
    let (init, alpha) = feasible_init(candidate, |p| adapter.solves(&p.flatten()));
    let x0 = init.flatten();
    let init_rate = NetworkRate::new(init.clone(), truth.scaler.clone())?;
    let init_inv = truth.invariant_errors(&init_rate);
    let result = match spec.optimizer {
        OptimizerKind::Bfgs => bfgs_minimize(&mut adapter, &x0, settings),
        OptimizerKind::TrustRegionBfgs => trust_region_bfgs_minimize(&mut adapter, &x0, settings),
    };
    let final_net = init.with_flat(&result.x)?;
    let final_rate = NetworkRate::new(final_net.clone(), truth.scaler.clone())?;
    let final_inv = truth.invariant_errors(&final_rate);
    let collapse_flag = detect_constant_collapse(&final_net, &truth.scaler, &truth.grid_rows())?;
    Ok(RunRecord {
        shape: spec.shape.clone(),
        layer_sizes: final_net.layer_sizes.clone(),
        activation: spec.activation,
        optimizer: spec.optimizer,
        observer: spec.observer,
        noise: spec.noise,
        seed: spec.seed,
        feasible_alpha: alpha,
        init_exp_loss: result.trace.first().map_or(settings.failed_loss, |t| t.loss),
        init_inv_loss: init_inv.loss,
        init_rmse: init_inv.rmse_in_distribution,
        final_exp_loss: result.loss,
        final_inv_loss: final_inv.loss,
        final_rmse: final_inv.rmse_in_distribution,
        final_grad_norm: result.grad_norm,
        iterations: result.iterations,
        evaluations: result.evaluations,
        failed_evaluations: result.failed_evaluations,
        termination: Some(result.termination),
        collapse_flag,
        trace: result.trace,
        params: result.x,
        error: None,
    })
}

/// Stored network with everything needed to evaluate it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub params: Vec<f64>,
    pub scaler: InputScaler,
}

impl NetworkFile {
    pub fn rate(&self) -> Result<NetworkRate> {
        let net = MlpParams::zeros(&self.layer_sizes, self.activation)?.with_flat(&self.params)?;
        NetworkRate::new(net, self.scaler.clone())
    }

    pub fn load(path: &Path) -> Result<Self> {
        from_json(path)
    }
}

pub const RMSE_MAP_HEADER: &str = "regime,j2,phi,error,in_distribution";
pub const DELTA_PHI_HEADER: &str = "x,y,delta_phi";
pub const TRACE_HEADER: &str = "iter,loss,grad_norm,step_norm";

/// Record, network, invariant error map, damage difference and trace of a run.
pub fn write_run_outputs(dir: &Path, truth: &Truth, cfg: &ExperimentConfig, record: &RunRecord) -> Result<()> {
    write_text(&dir.join("record.json"), &to_json(record))?;
    if record.error.is_some() {
        return Ok(());
    }
    let file = NetworkFile {
        layer_sizes: record.layer_sizes.clone(),
        activation: record.activation,
        params: record.params.clone(),
        scaler: truth.scaler.clone(),
    };
    write_text(&dir.join("network.json"), &to_json(&file))?;
    let rate = file.rate()?;
    write_text(&dir.join("rmse_map.csv"), &rmse_map(truth, &rate))?;
    let trace = record.trace.iter().map(|t| vec![t.iter as f64, t.loss, t.grad_norm, t.step_norm]);
    write_text(&dir.join("trace.csv"), &csv_table(TRACE_HEADER, trace))?;
    if let Some(dphi) = delta_phi(truth, &cfg.newton, &rate) {
        let rows = dphi.iter().enumerate().map(|(v, d)| {
            let x = truth.disc.mesh.vertices[v];
            vec![x[0], x[1], *d]
        });
        write_text(&dir.join("delta_phi.csv"), &csv_table(DELTA_PHI_HEADER, rows))?;
    }
    Ok(())
}

fn rmse_map(truth: &Truth, rate: &dyn DamageRate) -> String {
    let errs = truth.invariant_errors(rate);
    let mut out = String::from(RMSE_MAP_HEADER);
    out.push('\n');
    for (g, e) in truth.grids.iter().zip(&errs.per_grid) {
        for (k, (j, p)) in g.nodes().enumerate() {
            let _ = writeln!(out, "{},{j},{p},{},{}", g.regime.name(), e[k], u8::from(g.in_distribution[k]));
        }
    }
    out
}

/// Predicted minus true damage per vertex; `None` if the solve fails.
pub fn delta_phi(truth: &Truth, newton: &NewtonConfig, rate: &dyn DamageRate) -> Option<Vec<f64>> {
    let out = solve_forward(&truth.disc, &truth.stress, rate, Some(&truth.glen_state), newton);
    let w = out.state.filter(|_| out.converged)?;
    let r = truth.disc.dofs.damage_range();
    Some(w[r.clone()].iter().zip(&truth.state[r]).map(|(a, b)| a - b).collect())
}

/// Worker count from `ICECR_THREADS`, else the available parallelism.
pub fn thread_count() -> usize {
    std::env::var("ICECR_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub const SWEEP_HEADER: &str =
    "shape,activation,optimizer,observer,noise,seed,final_exp_loss,final_inv_loss,termination,collapse_flag";
pub const CORRELATION_HEADER: &str = "observer,noise,final_exp_loss,final_inv_loss";

/// Runs every cell, reusing records already present under `out/runs`.
/// Records are written as they complete by a single writer.
pub fn run_sweep(truth: &Truth, cfg: &ExperimentConfig, runs: &[RunSpec], out: Option<&Path>, threads: usize) -> Result<Vec<RunRecord>> {
    let mut done: BTreeMap<usize, RunRecord> = BTreeMap::new();
    if let Some(dir) = out {
        for (i, spec) in runs.iter().enumerate() {
            let path = dir.join("runs").join(format!("{}.json", spec.key()));
            if path.exists() {
                if let Ok(r) = from_json::<RunRecord>(&path) {
                    if r.spec() == *spec {
                        done.insert(i, r);
                    }
                }
            }
        }
    }
    let todo: Vec<usize> = (0..runs.len()).filter(|i| !done.contains_key(i)).collect();
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, RunRecord)>();
    let mut write_error = None;
    std::thread::scope(|scope| {
        for _ in 0..threads.max(1).min(todo.len().max(1)) {
            let tx = tx.clone();
            let (next, todo) = (&next, &todo);
            scope.spawn(move || loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&i) = todo.get(k) else { break };
                let record = train(truth, cfg, &runs[i]);
                if tx.send((i, record)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, record) in rx {
            if let Some(dir) = out {
                let path = dir.join("runs").join(format!("{}.json", runs[i].key()));
                if let Err(e) = write_text(&path, &to_json(&record)) {
                    write_error.get_or_insert(e);
                }
            }
            done.insert(i, record);
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }
    let records: Vec<RunRecord> = done.into_values().collect();
    if let Some(dir) = out {
        write_text(&dir.join("sweep.csv"), &sweep_table(&records))?;
        write_text(&dir.join("correlation.csv"), &correlation_table(&records))?;
    }
    Ok(records)
}

pub fn sweep_table(records: &[RunRecord]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in records {
        let shape: Vec<String> = r.shape.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            shape.join("x"),
            r.activation.name(),
            r.optimizer.name(),
            r.observer.name(),
            r.noise,
            r.seed,
            r.final_exp_loss,
            r.final_inv_loss,
            r.termination.map_or("error", |t| t.name()),
            r.collapse_flag
        );
    }
    out
}

/// One point per completed run.
pub fn correlation_table(records: &[RunRecord]) -> String {
    let mut out = String::from(CORRELATION_HEADER);
    out.push('\n');
    for r in records.iter().filter(|r| r.error.is_none()) {
        let _ = writeln!(out, "{},{},{},{}", r.observer.name(), r.noise, r.final_exp_loss, r.final_inv_loss);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaPhiStats {
    pub max_abs: f64,
    pub rms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub invariant_loss: f64,
    pub rmse_small: f64,
    pub rmse_large: f64,
    pub rmse_in_distribution: f64,
    /// `None` when the forward solve with the rate fails.
    pub delta_phi: Option<DeltaPhiStats>,
    /// Largest relative equivariance defect over random rotations.
    pub frame_invariance_defect: f64,
}

/// Read-only evaluation of a rate against the truth.
pub fn evaluate_rate(truth: &Truth, newton: &NewtonConfig, rate: &dyn DamageRate) -> Result<EvalReport> {
    let errs = truth.invariant_errors(rate);
    let regime_rmse = |r: Regime| {
        truth
            .grids
            .iter()
            .zip(&errs.per_grid)
            .find(|(g, _)| g.regime == r)
            .map_or(0.0, |(g, e)| g.rmse(e, false))
    };
    let delta_phi = delta_phi(truth, newton, rate).map(|d| DeltaPhiStats {
        max_abs: d.iter().fold(0.0, |m, v| m.max(v.abs())),
        rms: (d.iter().map(|v| v * v).sum::<f64>() / d.len().max(1) as f64).sqrt(),
    });
    Ok(EvalReport {
        invariant_loss: errs.loss,
        rmse_small: regime_rmse(Regime::Small),
        rmse_large: regime_rmse(Regime::Large),
        rmse_in_distribution: errs.rmse_in_distribution,
        delta_phi,
        frame_invariance_defect: frame_invariance_defect(rate, 200, 0)?,
    })
}

/// Largest equivariance defect of `rate` viewed as a relation over
/// `(ε̇, φ)`, over random planar rotations and inputs.
pub fn frame_invariance_defect(rate: &dyn DamageRate, rotations: usize, seed: u64) -> Result<f64> {
    let cr = damage_rate_cr(rate.clone_box())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..rotations {
        let e = Sym2([rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]);
        let phi: f64 = rng.random_range(0.0..1.0);
        let q = rotation2(rng.random_range(0.0..std::f64::consts::TAU));
        let d = equivariance_defect2(&cr, &[Tensor::Sym2(e), Tensor::Scalar(phi)], q)?;
        if !d.is_finite() {
            return Err(contract("non-finite equivariance defect"));
        }
        worst = worst.max(d);
    }
    Ok(worst)
}
