//! Experiment configuration shared by every subcommand.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::solver::NewtonConfig;
use crate::fem::{GeometryConfig, PhysicsConfig};
use crate::models::{DamageParams, GlenParams, GuardSmoothing};
use crate::neural::Activation;
use crate::observe::Observer;
use crate::optim::{OptimizerKind, OptimizerSettings};

/// Hidden-layer shapes of the rate networks in the hyperparameter grid.
pub const PAPER_SHAPES: [&[usize]; 6] = [&[2], &[4], &[2, 2], &[4, 4], &[2, 2, 2], &[4, 4, 4]];

/// Noise levels with stored observation sets.
pub const NOISE_LEVELS: [f64; 3] = [0.0, 0.01, 0.05];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruthConfig {
    pub glen: GlenParams,
    pub damage: DamageParams,
    pub smoothing: GuardSmoothing,
    /// Seed of the noise realizations.
    pub noise_seed: u64,
    /// Invariant grid resolution per regime (J₂ nodes, φ nodes).
    pub grid: [usize; 2],
}

impl Default for TruthConfig {
    fn default() -> Self {
        TruthConfig {
            glen: GlenParams::default(),
            damage: DamageParams::default(),
            smoothing: GuardSmoothing { fracture: 0.2, healing: 0.02 },
            noise_seed: 20_240_917,
            grid: [64, 32],
        }
    }
}

/// One training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSpec {
    pub shape: Vec<usize>,
    pub activation: Activation,
    pub optimizer: OptimizerKind,
    pub observer: Observer,
    pub noise: f64,
    pub seed: u64,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            shape: vec![4, 4],
            activation: Activation::Tanh,
            optimizer: OptimizerKind::Bfgs,
            observer: Observer::Interior,
            noise: 0.0,
            seed: 0,
        }
    }
}

impl RunSpec {
    /// File-name-safe identifier.
    pub fn key(&self) -> String {
        let shape: Vec<String> = self.shape.iter().map(|s| s.to_string()).collect();
        format!(
            "{}_{}_{}_{}_{}_s{}",
            shape.join("x"),
            self.activation.name(),
            self.optimizer.name(),
            self.observer.name(),
            self.noise,
            self.seed
        )
    }

    pub fn shape_label(&self) -> String {
        let shape: Vec<String> = self.shape.iter().map(|s| s.to_string()).collect();
        format!("({})", shape.join(","))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub shapes: Vec<Vec<usize>>,
    pub activations: Vec<Activation>,
    pub optimizers: Vec<OptimizerKind>,
    pub observers: Vec<Observer>,
    pub noises: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            shapes: PAPER_SHAPES.iter().map(|s| s.to_vec()).collect(),
            activations: Activation::ALL.to_vec(),
            optimizers: vec![OptimizerKind::Bfgs, OptimizerKind::TrustRegionBfgs],
            observers: Observer::ALL.to_vec(),
            noises: NOISE_LEVELS.to_vec(),
            seeds: (0..5).collect(),
        }
    }
}

impl SweepConfig {
    /// Cells in row-major order over (shape, activation, optimizer, observer,
    /// noise, seed).
    pub fn runs(&self) -> Vec<RunSpec> {
        let mut out = Vec::new();
        for shape in &self.shapes {
            for &activation in &self.activations {
                for &optimizer in &self.optimizers {
                    for &observer in &self.observers {
                        for &noise in &self.noises {
                            for &seed in &self.seeds {
                                out.push(RunSpec { shape: shape.clone(), activation, optimizer, observer, noise, seed });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    pub physics: PhysicsConfig,
    pub newton: NewtonConfig,
    pub truth: TruthConfig,
    pub optimizer: OptimizerSettings,
    pub run: RunSpec,
    pub sweep: SweepConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.physics.validate()?;
        self.truth.glen.validate()?;
        self.truth.damage.validate()?;
        if self.geometry.nx == 0 || self.geometry.ny == 0 {
            return Err(Error::Config("mesh needs at least one cell per direction".into()));
        }
        if self.truth.grid.iter().any(|&n| n < 2) {
            return Err(Error::Config("invariant grid needs at least 2 nodes per axis".into()));
        }
        if !NOISE_LEVELS.contains(&self.run.noise) {
            return Err(Error::Config(format!("noise {} has no stored observation set", self.run.noise)));
        }
        if let Some(n) = self.sweep.noises.iter().find(|n| !NOISE_LEVELS.contains(n)) {
            return Err(Error::Config(format!("sweep noise {n} has no stored observation set")));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
