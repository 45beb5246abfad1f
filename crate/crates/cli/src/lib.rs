//! `mscctl`: train, evaluate and verify score-climbing controllers.

pub mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use msc_control::msc::{evaluate_policy, CSV_HEADER, Trainer};
use msc_control::env::Environment;
use msc_control::policy::{read_policy, write_policy, TanhGaussianPolicy};
use msc_control::rng::{tags, RngStream};
use msc_control::ssm::ControlProblem;
use msc_control::verify;

pub use config::{ConfigError, RunConfig};

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_VERIFICATION: i32 = 3;

/// Final checkpoint name inside the output directory.
pub const POLICY_FILE: &str = "policy.ckpt";
pub const CURVE_FILE: &str = "curve.csv";
pub const EVAL_FILE: &str = "eval.json";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Run(#[from] msc_control::Error),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{failed} verification check(s) failed")]
    Verification { failed: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use msc_control::Error as E;
        match self {
            CliError::Config(_) | CliError::Io { .. } => EXIT_CONFIG,
            CliError::Run(E::Numerical(_) | E::DegenerateWeights { .. } | E::Domain(_)) => EXIT_NUMERICAL,
            CliError::Run(_) => EXIT_CONFIG,
            CliError::Verification { .. } => EXIT_VERIFICATION,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io {
        path: path.to_owned(),
        message: e.to_string(),
    }
}

#[derive(Debug, Parser)]
#[command(name = "mscctl", version, about = "Markovian score climbing for continuous control")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a policy; writes a learning curve and checkpoints.
    Train(Common),
    /// Evaluate a checkpoint; writes a JSON summary.
    Eval(EvalArgs),
    /// Run the linear-Gaussian verification suite.
    Verify(Common),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Config file.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Benchmark system; selects the preset.
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 uses all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override any key, as `section.key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Policy checkpoint to evaluate.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Number of evaluation rollouts.
    #[arg(long)]
    pub rollouts: Option<usize>,
}

impl Common {
    fn flag_entries(&self, extra: &[(&str, String)]) -> Result<Vec<config::Entry>, ConfigError> {
        let mut v = Vec::new();
        for s in &self.set {
            v.push(config::parse_assignment(s)?);
        }
        let named = [
            ("env.name", self.env.clone()),
            ("run.seed", self.seed.map(|s| s.to_string())),
            ("run.workers", self.workers.map(|w| w.to_string())),
            ("run.out", self.out.as_ref().map(|p| p.display().to_string())),
        ];
        for (key, value) in named.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))) {
            v.push(config::Entry {
                key: key.into(),
                value,
                line: None,
            });
        }
        for (key, value) in extra {
            v.push(config::Entry {
                key: (*key).into(),
                value: value.clone(),
                line: None,
            });
        }
        Ok(v)
    }

    /// Resolves the full configuration for this invocation.
    pub fn resolve(&self, extra: &[(&str, String)]) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(p) => config::parse_file(&fs::read_to_string(p).map_err(io_err(p))?)?,
            None => Vec::new(),
        };
        Ok(RunConfig::resolve(&file, &self.flag_entries(extra)?)?)
    }
}

/// Runs `f` on a pool with the configured number of workers.
fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ConfigError {
            key: Some("run.workers".into()),
            line: None,
            message: e.to_string(),
        })?;
    Ok(pool.install(f))
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Train(c) => {
            let cfg = c.resolve(&[])?;
            with_pool(cfg.workers, || train(&cfg))?
        }
        Command::Eval(e) => {
            let mut extra = Vec::new();
            if let Some(p) = &e.checkpoint {
                extra.push(("policy.checkpoint", p.display().to_string()));
            }
            if let Some(n) = e.rollouts {
                extra.push(("train.eval_rollouts", n.to_string()));
            }
            let cfg = e.common.resolve(&extra)?;
            with_pool(cfg.workers, || eval(&cfg))?
        }
        Command::Verify(c) => {
            let cfg = c.resolve(&[])?;
            with_pool(cfg.workers, || verify_suite(&cfg))?
        }
    }
}

/// Trains and streams the learning curve to `out/curve.csv`. Rows already
/// written stay on disk if a later iteration fails.
pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let seed = cfg.seed.ok_or_else(|| ConfigError {
        key: Some("run.seed".into()),
        line: None,
        message: "a seed is required for training (use --seed)".into(),
    })?;
    fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    let policy = TanhGaussianPolicy::init_seeded(
        cfg.env.state_dim(),
        &cfg.layers,
        cfg.env.action_box.clone(),
        seed,
    )?;
    let problem = ControlProblem::new(cfg.env.clone(), cfg.temperature, cfg.horizon)?;
    let mut trainer = Trainer::new(problem, policy, cfg.train_config(seed))?;

    let curve_path = cfg.out.join(CURVE_FILE);
    let mut curve = BufWriter::new(File::create(&curve_path).map_err(io_err(&curve_path))?);
    writeln!(curve, "{CSV_HEADER}").map_err(io_err(&curve_path))?;
    curve.flush().map_err(io_err(&curve_path))?;
    log::info!(
        "training {} for {} iterations, seed {seed}, N = {}, K = {}",
        cfg.env.kind,
        cfg.iterations,
        cfg.particles,
        cfg.backward_draws
    );

    while !trainer.is_finished() {
        let record = trainer.advance()?;
        if let Some(rec) = record {
            writeln!(curve, "{}", rec.csv_row()).map_err(io_err(&curve_path))?;
            curve.flush().map_err(io_err(&curve_path))?;
            log::info!(
                "iteration {}: mean cost {:.3} (std {:.3}), {} interactions",
                rec.iteration,
                rec.mean_cost,
                rec.std_cost,
                rec.interactions
            );
        }
        let k = trainer.iteration();
        if cfg.checkpoint_every > 0 && k % cfg.checkpoint_every == 0 && k < cfg.iterations {
            let path = cfg.out.join(format!("policy-{k:06}.ckpt"));
            write_policy(trainer.policy(), &path).map_err(io_err(&path))?;
        }
    }
    let path = cfg.out.join(POLICY_FILE);
    write_policy(trainer.policy(), &path).map_err(io_err(&path))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// Evaluates a checkpoint on a stream disjoint from every training evaluation.
pub fn eval(cfg: &RunConfig) -> Result<(), CliError> {
    let path = cfg.checkpoint.clone().ok_or_else(|| ConfigError {
        key: Some("policy.checkpoint".into()),
        line: None,
        message: "a checkpoint is required for eval (use --checkpoint)".into(),
    })?;
    let policy = read_policy(&path).map_err(|e| CliError::Io {
        path: path.clone(),
        message: e.to_string(),
    })?;
    let seed = cfg.seed.unwrap_or(0);
    let problem = ControlProblem::new(cfg.env.clone(), cfg.temperature, cfg.horizon)?;
    let stream = RngStream::new(seed).split2(tags::EVAL, u64::MAX);
    let ev = evaluate_policy(&problem, &policy, cfg.eval_rollouts, &stream)?;
    let summary = serde_json::json!({
        "mean_cost": ev.mean_cost,
        "std_cost": ev.std_cost,
        "n_rollouts": cfg.eval_rollouts,
        "seed": seed,
    });
    let text = serde_json::to_string_pretty(&summary).expect("plain JSON values");
    fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    let out = cfg.out.join(EVAL_FILE);
    fs::write(&out, format!("{text}\n")).map_err(io_err(&out))?;
    println!("{text}");
    Ok(())
}

pub fn verify_suite(cfg: &RunConfig) -> Result<(), CliError> {
    let results = verify::linear_gaussian_suite(cfg.seed.unwrap_or(0))?;
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(CliError::Verification { failed });
    }
    Ok(())
}
