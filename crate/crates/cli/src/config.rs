//! Run configuration.
//!
//! Files use a flat `key = value` grammar grouped under `[env]`, `[train]`,
//! `[policy]` and `[run]` headers. `#` starts a comment. Values are scalars
//! or comma-separated lists. Keys are addressed as `section.key`, which is
//! also the form accepted by `--set`.
//!
//! Precedence, lowest first: built-in defaults, the preset for the chosen
//! environment, the config file, command-line flags.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use msc_control::env::{AngleCost, EnvKind, EnvSpec};
use msc_control::msc::{Estimator, StepSchedule, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn new(key: Option<&str>, line: Option<usize>, message: impl Into<String>) -> Self {
        Self {
            key: key.map(str::to_owned),
            line,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, &self.key) {
            (Some(l), Some(k)) => write!(f, "line {l}: `{k}`: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            (None, Some(k)) => write!(f, "`{k}`: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

pub type ConfigResult<T> = std::result::Result<T, ConfigError>;

/// Every recognised key.
pub const KEYS: &[&str] = &[
    "env.name",
    "env.dt",
    "env.noise_std",
    "env.action_limit",
    "env.angle_cost",
    "env.state_weights",
    "env.action_weights",
    "env.x0",
    "env.x_goal",
    "env.gravity",
    "env.mass",
    "env.length",
    "env.cart_mass",
    "env.mass2",
    "env.length2",
    "env.damping",
    "train.iterations",
    "train.learning_rate",
    "train.schedule",
    "train.decay_exponent",
    "train.particles",
    "train.backward_draws",
    "train.estimator",
    "train.temperature",
    "train.horizon",
    "train.eval_every",
    "train.eval_rollouts",
    "train.max_retries",
    "train.record_wall_time",
    "train.checkpoint_every",
    "policy.layers",
    "policy.checkpoint",
    "run.seed",
    "run.workers",
    "run.out",
];

/// One `key = value` assignment and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    /// Line in the config file; `None` for flags.
    pub line: Option<usize>,
}

fn check_key(key: &str, line: Option<usize>) -> ConfigResult<()> {
    if KEYS.contains(&key) {
        Ok(())
    } else {
        Err(ConfigError::new(Some(key), line, "unknown key"))
    }
}

/// Parses config file text into entries.
pub fn parse_file(text: &str) -> ConfigResult<Vec<Entry>> {
    let mut section: Option<String> = None;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = Some(i + 1);
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::new(None, line, format!("malformed section header `{body}`")))?
                .trim();
            if !matches!(name, "env" | "train" | "policy" | "run") {
                return Err(ConfigError::new(None, line, format!("unknown section `[{name}]`")));
            }
            section = Some(name.to_owned());
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| ConfigError::new(None, line, format!("expected `key = value`, got `{body}`")))?;
        let (k, v) = (k.trim(), v.trim());
        let sec = section
            .as_deref()
            .ok_or_else(|| ConfigError::new(Some(k), line, "assignment before any section header"))?;
        let key = format!("{sec}.{k}");
        check_key(&key, line)?;
        if v.is_empty() {
            return Err(ConfigError::new(Some(&key), line, "empty value"));
        }
        out.push(Entry {
            key,
            value: v.to_owned(),
            line,
        });
    }
    Ok(out)
}

/// Parses a `section.key=value` flag.
pub fn parse_assignment(s: &str) -> ConfigResult<Entry> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| ConfigError::new(None, None, format!("expected `section.key=value`, got `{s}`")))?;
    let key = k.trim().to_owned();
    check_key(&key, None)?;
    Ok(Entry {
        key,
        value: v.trim().to_owned(),
        line: None,
    })
}

/// Hyperparameters shipped for each benchmark system.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub temperature: f64,
    pub learning_rate: f64,
    pub particles: usize,
    pub backward_draws: usize,
    pub layers: Vec<usize>,
}

pub fn preset(kind: EnvKind) -> Preset {
    let (temperature, learning_rate, particles) = match kind {
        EnvKind::Pendulum => (5e-2, 1e-2, 256),
        EnvKind::CartPole => (1e-1, 1e-3, 256),
        EnvKind::DoublePendulum => (5e-3, 5e-4, 512),
    };
    Preset {
        temperature,
        learning_rate,
        particles,
        backward_draws: 30,
        layers: vec![256, 256],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Constant,
    Decaying,
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: EnvSpec,
    pub temperature: f64,
    pub horizon: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub schedule: ScheduleKind,
    pub decay_exponent: f64,
    pub particles: usize,
    pub backward_draws: usize,
    pub estimator: Estimator,
    pub eval_every: usize,
    pub eval_rollouts: usize,
    pub max_retries: usize,
    pub record_wall_time: bool,
    /// Write an intermediate checkpoint every this many iterations; `0` disables.
    pub checkpoint_every: usize,
    pub layers: Vec<usize>,
    /// Policy to load for `eval`.
    pub checkpoint: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Worker threads; `0` lets rayon choose.
    pub workers: usize,
    pub out: PathBuf,
}

impl RunConfig {
    /// Defaults plus the preset for `kind`.
    pub fn for_env(kind: EnvKind) -> Self {
        let p = preset(kind);
        Self {
            env: EnvSpec::preset(kind),
            temperature: p.temperature,
            horizon: 100,
            iterations: 150,
            learning_rate: p.learning_rate,
            schedule: ScheduleKind::Constant,
            decay_exponent: 0.7,
            particles: p.particles,
            backward_draws: p.backward_draws,
            estimator: Estimator::RbCsmc,
            eval_every: 1,
            eval_rollouts: 30,
            max_retries: 3,
            record_wall_time: false,
            checkpoint_every: 0,
            layers: p.layers,
            checkpoint: None,
            seed: None,
            workers: 0,
            out: PathBuf::from("out"),
        }
    }

    /// Resolves file entries and flag entries on top of the preset.
    pub fn resolve(file: &[Entry], flags: &[Entry]) -> ConfigResult<Self> {
        let last = |v: &'_ [Entry]| v.iter().rev().find(|e| e.key == "env.name").cloned();
        let name = last(flags).or_else(|| last(file));
        let kind = match name {
            Some(e) => parse::<EnvKind>(&e)?,
            None => EnvKind::Pendulum,
        };
        let mut cfg = Self::for_env(kind);
        for e in file {
            cfg.apply(e)?;
        }
        for e in flags {
            if let Some(prev) = file.iter().rev().find(|f| f.key == e.key) {
                if prev.value != e.value {
                    log::info!(
                        "flag sets {} = {} (overrides `{}` from config line {})",
                        e.key,
                        e.value,
                        prev.value,
                        prev.line.unwrap_or(0)
                    );
                }
            }
            cfg.apply(e)?;
        }
        cfg.env
            .validate()
            .map_err(|err| ConfigError::new(Some("env"), None, err.to_string()))?;
        if !(cfg.temperature > 0.0 && cfg.temperature.is_finite()) {
            return Err(ConfigError::new(Some("train.temperature"), None, "must be positive"));
        }
        if cfg.horizon == 0 {
            return Err(ConfigError::new(Some("train.horizon"), None, "must be at least 1"));
        }
        cfg.train_config(0)
            .validate()
            .map_err(|err| ConfigError::new(Some("train"), None, err.to_string()))?;
        Ok(cfg)
    }

    fn apply(&mut self, e: &Entry) -> ConfigResult<()> {
        let env = &mut self.env;
        match e.key.as_str() {
            // Already consumed when choosing the preset.
            "env.name" => {}
            "env.dt" => env.dt = parse(e)?,
            "env.noise_std" => env
                .set_noise_std(parse(e)?)
                .map_err(|err| bad(e, err.to_string()))?,
            "env.action_limit" => env
                .set_action_limit(parse_list(e)?)
                .map_err(|err| bad(e, err.to_string()))?,
            "env.angle_cost" => env.angle_cost = parse::<AngleCost>(e)?,
            "env.state_weights" => env.weights.state = parse_list(e)?,
            "env.action_weights" => env.weights.action = parse_list(e)?,
            "env.x0" => env.x0 = parse_list(e)?,
            "env.x_goal" => env.x_goal = parse_list(e)?,
            "env.gravity" => env.physics.gravity = parse(e)?,
            "env.mass" => env.physics.mass = parse(e)?,
            "env.length" => env.physics.length = parse(e)?,
            "env.cart_mass" => env.physics.cart_mass = parse(e)?,
            "env.mass2" => env.physics.mass2 = parse(e)?,
            "env.length2" => env.physics.length2 = parse(e)?,
            "env.damping" => env.physics.damping = parse(e)?,
            "train.iterations" => self.iterations = parse(e)?,
            "train.learning_rate" => self.learning_rate = parse(e)?,
            "train.schedule" => {
                self.schedule = match e.value.as_str() {
                    "constant" => ScheduleKind::Constant,
                    "decaying" => ScheduleKind::Decaying,
                    _ => return Err(bad(e, "expected constant or decaying")),
                }
            }
            "train.decay_exponent" => self.decay_exponent = parse(e)?,
            "train.particles" => self.particles = parse(e)?,
            "train.backward_draws" => self.backward_draws = parse(e)?,
            "train.estimator" => {
                self.estimator = match e.value.as_str() {
                    "rb_csmc" => Estimator::RbCsmc,
                    "smc" => Estimator::Smc,
                    _ => return Err(bad(e, "expected rb_csmc or smc")),
                }
            }
            "train.temperature" => self.temperature = parse(e)?,
            "train.horizon" => self.horizon = parse(e)?,
            "train.eval_every" => self.eval_every = parse(e)?,
            "train.eval_rollouts" => self.eval_rollouts = parse(e)?,
            "train.max_retries" => self.max_retries = parse(e)?,
            "train.record_wall_time" => self.record_wall_time = parse(e)?,
            "train.checkpoint_every" => self.checkpoint_every = parse(e)?,
            "policy.layers" => self.layers = parse_list(e)?,
            "policy.checkpoint" => self.checkpoint = Some(PathBuf::from(&e.value)),
            "run.seed" => self.seed = Some(parse(e)?),
            "run.workers" => self.workers = parse(e)?,
            "run.out" => self.out = PathBuf::from(&e.value),
            other => return Err(ConfigError::new(Some(other), e.line, "unknown key")),
        }
        Ok(())
    }

    pub fn schedule(&self) -> StepSchedule {
        match self.schedule {
            ScheduleKind::Constant => StepSchedule::Constant(self.learning_rate),
            ScheduleKind::Decaying => StepSchedule::Decaying {
                initial: self.learning_rate,
                exponent: self.decay_exponent,
            },
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let mut c = TrainConfig::new(
            self.iterations,
            self.schedule(),
            self.particles,
            self.backward_draws,
            seed,
        );
        c.estimator = self.estimator;
        c.eval_every = self.eval_every;
        c.eval_rollouts = self.eval_rollouts;
        c.max_retries = self.max_retries;
        c.record_wall_time = self.record_wall_time;
        c
    }
}

fn bad(e: &Entry, msg: impl Into<String>) -> ConfigError {
    ConfigError::new(Some(&e.key), e.line, format!("invalid value `{}`: {}", e.value, msg.into()))
}

fn parse<T: FromStr>(e: &Entry) -> ConfigResult<T>
where
    T::Err: fmt::Display,
{
    e.value.parse::<T>().map_err(|err| bad(e, err.to_string()))
}

fn parse_list<T: FromStr>(e: &Entry) -> ConfigResult<Vec<T>>
where
    T::Err: fmt::Display,
{
    e.value
        .split(',')
        .map(|s| s.trim().parse::<T>().map_err(|err| bad(e, err.to_string())))
        .collect()
}
