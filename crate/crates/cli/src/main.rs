//! `icecr`: ground truth, training, sweeps, evaluation and plots.

mod plots;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use icecr::config::{ExperimentConfig, RunSpec};
use icecr::neural::Activation;
use icecr::observe::Observer;
use icecr::optim::OptimizerKind;
use icecr::workflow::{
    evaluate_rate, generate_truth, run_sweep, thread_count, train, write_run_outputs, NetworkFile, Truth,
};
use log::info;

#[derive(Parser, Debug)]
#[command(name = "icecr", version, about = "Learn damage-rate closures of an ice dome from flow observations")]
struct Cli {
    /// Experiment configuration (TOML); defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Truth directory; defaults to `<out>/truth`.
    #[arg(long, global = true)]
    truth: Option<PathBuf>,
    #[command(flatten)]
    run: RunOverrides,
    /// Increase log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct RunOverrides {
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_observer)]
    observer: Option<Observer>,
    #[arg(long, global = true)]
    noise: Option<f64>,
    /// Hidden layer widths, e.g. `4,4`.
    #[arg(long, global = true, value_parser = parse_shape)]
    shape: Option<Shape>,
    #[arg(long, global = true, value_parser = parse_activation)]
    activation: Option<Activation>,
    #[arg(long, global = true, value_parser = parse_optimizer)]
    optimizer: Option<OptimizerKind>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the effective configuration as TOML.
    Config,
    /// Solve the dome with the reference closure and write truth artifacts.
    GenerateTruth,
    /// Train one network.
    Train,
    /// Train every cell of the configured grid (resumable).
    Sweep {
        /// Number of seeds per cell (seeds 0..N); `--seed` selects one.
        #[arg(long)]
        seeds: Option<u64>,
        /// Worker threads; defaults to `ICECR_THREADS` or all cores.
        #[arg(long, env = "ICECR_THREADS")]
        threads: Option<usize>,
    },
    /// Compare a stored network against the truth (read-only).
    Evaluate {
        /// `network.json` written by `train`.
        #[arg(long)]
        network: PathBuf,
    },
    /// Regenerate SVG plots from every known table under a directory.
    Plot {
        /// Directory to scan; defaults to `--out`.
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

fn parse_observer(s: &str) -> Result<Observer, String> {
    s.parse().map_err(|e: icecr::Error| e.to_string())
}

fn parse_activation(s: &str) -> Result<Activation, String> {
    s.parse().map_err(|e: icecr::Error| e.to_string())
}

fn parse_optimizer(s: &str) -> Result<OptimizerKind, String> {
    s.parse().map_err(|e: icecr::Error| e.to_string())
}

#[derive(Clone, Debug)]
struct Shape(Vec<usize>);

fn parse_shape(s: &str) -> Result<Shape, String> {
    let body = s.trim().trim_start_matches('(').trim_end_matches(')');
    let widths: Result<Vec<usize>, _> = body
        .split([',', 'x'])
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::parse::<usize>)
        .collect();
    match widths {
        Ok(w) if !w.is_empty() && w.iter().all(|v| *v > 0) => Ok(Shape(w)),
        _ => Err(format!("`{s}` is not a list of positive layer widths")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::new().parse_filters(level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

fn load_config(cli: &Cli) -> Result<ExperimentConfig, icecr::Error> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let o = &cli.run;
    let r = &mut cfg.run;
    if let Some(v) = o.seed {
        r.seed = v;
    }
    if let Some(v) = o.observer {
        r.observer = v;
    }
    if let Some(v) = o.noise {
        r.noise = v;
    }
    if let Some(v) = &o.shape {
        r.shape = v.0.clone();
    }
    if let Some(v) = o.activation {
        r.activation = v;
    }
    if let Some(v) = o.optimizer {
        r.optimizer = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn truth_dir(cli: &Cli) -> PathBuf {
    cli.truth.clone().unwrap_or_else(|| cli.out.join("truth"))
}

fn load_truth(dir: &Path) -> Result<Truth, Box<dyn std::error::Error>> {
    if !dir.join("manifest.json").exists() {
        return Err(format!("no truth artifacts in {} (run generate-truth first)", dir.display()).into());
    }
    Ok(Truth::load(dir)?)
}

fn run(cli: Cli) -> CliResult {
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Config => print!("{}", cfg.to_toml()),
        Command::GenerateTruth => {
            let dir = truth_dir(&cli);
            let truth = generate_truth(&cfg)?;
            truth.write(&dir)?;
            println!(
                "truth: {} dofs, {} Newton iterations, {} invariant samples -> {}",
                truth.disc.n_dofs(),
                truth.newton_iterations,
                truth.samples.len(),
                dir.display()
            );
        }
        Command::Train => {
            let truth = load_truth(&truth_dir(&cli))?;
            let spec = cfg.run.clone();
            info!("training {}", spec.key());
            let record = train(&truth, &cfg, &spec);
            let dir = cli.out.join("runs").join(spec.key());
            write_run_outputs(&dir, &truth, &cfg, &record)?;
            if let Some(e) = &record.error {
                return Err(format!("run failed: {e}").into());
            }
            println!(
                "{}: experimental loss {:e} -> {:e}, invariant loss {:e} -> {:e}, {} ({} iterations), collapse {} -> {}",
                spec.key(),
                record.init_exp_loss,
                record.final_exp_loss,
                record.init_inv_loss,
                record.final_inv_loss,
                record.termination.map_or("error", |t| t.name()),
                record.iterations,
                record.collapse_flag,
                dir.display()
            );
        }
        Command::Sweep { seeds, threads } => {
            let truth = load_truth(&truth_dir(&cli))?;
            let mut sweep = cfg.sweep.clone();
            let o = &cli.run;
            if let Some(n) = seeds {
                sweep.seeds = (0..*n).collect();
            }
            if let Some(s) = o.seed {
                sweep.seeds = vec![s];
            }
            if let Some(v) = &o.shape {
                sweep.shapes = vec![v.0.clone()];
            }
            if let Some(v) = o.activation {
                sweep.activations = vec![v];
            }
            if let Some(v) = o.optimizer {
                sweep.optimizers = vec![v];
            }
            if let Some(v) = o.observer {
                sweep.observers = vec![v];
            }
            if let Some(v) = o.noise {
                sweep.noises = vec![v];
            }
            let runs: Vec<RunSpec> = sweep.runs();
            let dir = cli.out.join("sweep");
            let threads = threads.unwrap_or_else(thread_count);
            info!("{} runs on {threads} threads", runs.len());
            let records = run_sweep(&truth, &cfg, &runs, Some(&dir), threads)?;
            plots::plot_dir(&dir)?;
            let failed = records.iter().filter(|r| r.error.is_some()).count();
            println!("sweep: {} records ({failed} errored) -> {}", records.len(), dir.join("sweep.csv").display());
        }
        Command::Evaluate { network } => {
            let truth = load_truth(&truth_dir(&cli))?;
            let file = NetworkFile::load(network)?;
            let report = evaluate_rate(&truth, &cfg.newton, &file.rate()?)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Plot { dir } => {
            let dir = dir.clone().unwrap_or_else(|| cli.out.clone());
            let n = plots::plot_dir(&dir)?;
            println!("{n} plots written under {}", dir.display());
        }
    }
    Ok(())
}
