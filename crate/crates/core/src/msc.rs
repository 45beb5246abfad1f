//! Markovian score climbing.
//!
//! Each iteration draws one score estimate from the CSMC chain at the current
//! parameters and takes a plain gradient-ascent step,
//! `theta_k = theta_{k-1} + gamma_k * score`. The reference trajectory is the
//! state of the chain and is carried from one iteration to the next.
//!
//! Interaction accounting (one interaction per transition sample):
//! the initial reference rollout costs `T`; each RB-CSMC iteration costs
//! `T (N - 1)` (the pinned reference is not re-simulated), each plain SMC
//! iteration `T N`; every evaluation adds `n_rollouts * T`. Retried
//! iterations count every attempt.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::rng::{tags, RngStream};
use crate::smc::{rb_csmc_score, smc_score, ScoreEstimate};
use crate::ssm::{ControlProblem, StateAction, Trajectory};

/// Step sizes `gamma_k`, `k >= 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// `gamma_k = initial * k^(-exponent)` with `exponent` in `(0.5, 1]`, which
    /// makes `sum gamma_k` diverge and `sum gamma_k^2` converge.
    Decaying { initial: f64, exponent: f64 },
}

impl StepSchedule {
    pub fn constant(rate: f64) -> Result<Self> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be >= 0, got {rate}")));
        }
        Ok(Self::Constant(rate))
    }

    pub fn decaying(initial: f64, exponent: f64) -> Result<Self> {
        if !(initial >= 0.0 && initial.is_finite()) {
            return Err(Error::Config(format!("initial step must be >= 0, got {initial}")));
        }
        if !(exponent > 0.5 && exponent <= 1.0) {
            return Err(Error::Config(format!(
                "decay exponent must lie in (0.5, 1], got {exponent}"
            )));
        }
        Ok(Self::Decaying { initial, exponent })
    }

    pub fn step_size(&self, k: usize) -> f64 {
        match *self {
            StepSchedule::Constant(g) => g,
            StepSchedule::Decaying { initial, exponent } => initial * (k.max(1) as f64).powf(-exponent),
        }
    }
}

/// Which score estimator drives the ascent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Estimator {
    /// Conditional SMC chain with Rao-Blackwellized backward draws.
    RbCsmc,
    /// Unconditional particle smoothing; no chain, biased for finite `N`.
    Smc,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub schedule: StepSchedule,
    pub particles: usize,
    pub backward_draws: usize,
    pub estimator: Estimator,
    pub eval_rollouts: usize,
    /// Evaluate every `eval_every` iterations (and always at the last one);
    /// `0` disables evaluation.
    pub eval_every: usize,
    pub seed: u64,
    /// Retries with fresh substreams after degenerate weights.
    pub max_retries: usize,
    /// When false the `wall_ms` column is written as `0`, which keeps curves
    /// byte-identical across runs.
    pub record_wall_time: bool,
}

impl TrainConfig {
    pub fn new(iterations: usize, schedule: StepSchedule, particles: usize, backward_draws: usize, seed: u64) -> Self {
        Self {
            iterations,
            schedule,
            particles,
            backward_draws,
            estimator: Estimator::RbCsmc,
            eval_rollouts: 30,
            eval_every: 1,
            seed,
            max_retries: 3,
            record_wall_time: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles < 2 {
            return Err(Error::Config(format!("need at least 2 particles, got {}", self.particles)));
        }
        if self.backward_draws < 1 {
            return Err(Error::Config("need at least 1 backward draw".into()));
        }
        if self.eval_every > 0 && self.eval_rollouts < 1 {
            return Err(Error::Config("evaluation needs at least 1 rollout".into()));
        }
        Ok(())
    }
}

/// Closed-loop simulation under the stochastic policy and dynamics.
/// Returns the trajectory and the number of transition samples drawn.
pub fn rollout<E: Environment, P: Policy>(
    problem: &ControlProblem<E>,
    policy: &P,
    stream: &RngStream,
) -> Result<(Trajectory, u64)> {
    problem.check_policy(policy)?;
    let mut rng = stream.rng();
    let mut x = problem.env.initial_state().to_vec();
    let mut steps = Vec::with_capacity(problem.horizon + 1);
    for t in 0..=problem.horizon {
        let u = policy.sample_action(&x, &mut rng)?.action;
        if t < problem.horizon {
            let next = problem.env.transition_sample(&x, &u, &mut rng)?;
            steps.push(StateAction::new(std::mem::replace(&mut x, next), u));
        } else {
            steps.push(StateAction::new(x.clone(), u));
        }
    }
    if steps.iter().any(|z| z.state.iter().chain(&z.action).any(|v| !v.is_finite())) {
        return Err(Error::Numerical("rollout produced non-finite values".into()));
    }
    Ok((Trajectory::new(steps), problem.horizon as u64))
}

/// A prior sample of `z_{0:T}`, used to start the chain.
pub fn init_reference<E: Environment, P: Policy>(
    problem: &ControlProblem<E>,
    policy: &P,
    stream: &RngStream,
) -> Result<Trajectory> {
    rollout(problem, policy, stream).map(|(t, _)| t)
}

/// Summary of closed-loop evaluation rollouts.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub mean_cost: f64,
    /// Population standard deviation of the total costs.
    pub std_cost: f64,
    pub costs: Vec<f64>,
    pub terminal_states: Vec<Vec<f64>>,
    pub interactions: u64,
}

/// Mean and standard deviation of `sum_{t=0}^{T} c(x_t, u_t)` over
/// `n_rollouts` independent closed-loop rollouts.
pub fn evaluate_policy<E: Environment, P: Policy>(
    problem: &ControlProblem<E>,
    policy: &P,
    n_rollouts: usize,
    stream: &RngStream,
) -> Result<Evaluation> {
    if n_rollouts == 0 {
        return Err(Error::Config("evaluation needs at least one rollout".into()));
    }
    let runs: Vec<(f64, Vec<f64>, u64)> = (0..n_rollouts)
        .into_par_iter()
        .map(|i| {
            let (traj, inter) = rollout(problem, policy, &stream.split(i as u64))?;
            let cost = traj.total_cost(&problem.env);
            if !cost.is_finite() {
                return Err(Error::Numerical(format!("rollout {i} has non-finite total cost")));
            }
            Ok((cost, traj.steps.last().unwrap().state.clone(), inter))
        })
        .collect::<Result<_>>()?;
    let costs: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let n = costs.len() as f64;
    let mean = costs.iter().sum::<f64>() / n;
    let var = costs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n;
    Ok(Evaluation {
        mean_cost: mean,
        std_cost: var.sqrt(),
        interactions: runs.iter().map(|r| r.2).sum(),
        terminal_states: runs.into_iter().map(|r| r.1).collect(),
        costs,
    })
}

/// One row of a learning curve.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveRecord {
    pub iteration: usize,
    pub interactions: u64,
    pub mean_cost: f64,
    pub std_cost: f64,
    pub wall_ms: u64,
}

pub const CSV_HEADER: &str = "iteration,interactions,mean_cost,std_cost,wall_ms";

impl CurveRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.iteration, self.interactions, self.mean_cost, self.std_cost, self.wall_ms
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LearningCurve {
    pub records: Vec<CurveRecord>,
}

impl LearningCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Result of a single ascent step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub step_size: f64,
    pub score: Vec<f64>,
    pub interactions: u64,
    pub retries: usize,
}

/// Mutable state of the score-climbing loop.
pub struct Trainer<E, P> {
    problem: ControlProblem<E>,
    policy: P,
    config: TrainConfig,
    reference: Trajectory,
    iteration: usize,
    interactions: u64,
    score_calls: u64,
    root: RngStream,
    started: Instant,
}

impl<E: Environment, P: Policy> Trainer<E, P> {
    pub fn new(problem: ControlProblem<E>, policy: P, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        problem.check_policy(&policy)?;
        let root = RngStream::new(config.seed);
        let (reference, inter) = rollout(&problem, &policy, &root.split(tags::INIT))?;
        Ok(Self {
            problem,
            policy,
            config,
            reference,
            iteration: 0,
            interactions: inter,
            score_calls: 0,
            root,
            started: Instant::now(),
        })
    }

    pub fn problem(&self) -> &ControlProblem<E> {
        &self.problem
    }

    pub fn policy(&self) -> &P {
        &self.policy
    }

    pub fn policy_mut(&mut self) -> &mut P {
        &mut self.policy
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn reference(&self) -> &Trajectory {
        &self.reference
    }

    /// Number of completed iterations `k`.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn interactions(&self) -> u64 {
        self.interactions
    }

    /// Number of successful score estimates so far.
    pub fn score_calls(&self) -> u64 {
        self.score_calls
    }

    pub fn into_policy(self) -> P {
        self.policy
    }

    fn estimate(&self, stream: &RngStream) -> Result<ScoreEstimate> {
        let c = &self.config;
        match c.estimator {
            Estimator::RbCsmc => rb_csmc_score(
                &self.problem,
                &self.policy,
                &self.reference,
                c.particles,
                c.backward_draws,
                stream,
            ),
            Estimator::Smc => smc_score(&self.problem, &self.policy, c.particles, c.backward_draws, stream),
        }
    }

    /// One iteration: estimate the score at `theta_{k-1}`, step, and move the
    /// reference to the chain's next state.
    pub fn msc_step(&mut self) -> Result<StepReport> {
        let k = self.iteration + 1;
        let base = self.root.split2(tags::STEP, k as u64);
        let mut retries = 0;
        let mut spent = 0;
        let estimate = loop {
            let attempt = self.estimate(&base.split(retries as u64));
            match attempt {
                Ok(est) => break est,
                Err(Error::DegenerateWeights { .. }) if retries < self.config.max_retries => {
                    spent += self.forward_cost();
                    retries += 1;
                }
                Err(e) => {
                    self.interactions += spent;
                    return Err(e);
                }
            }
        };
        self.score_calls += 1;
        let gamma = self.config.schedule.step_size(k);
        let previous = self.policy.params().to_vec();
        for (p, g) in self.policy.params_mut().iter_mut().zip(&estimate.score) {
            *p += gamma * g;
        }
        if self.policy.params().iter().any(|p| !p.is_finite()) {
            self.policy.params_mut().copy_from_slice(&previous);
            return Err(Error::Numerical(format!("non-finite parameters after iteration {k}")));
        }
        if self.config.estimator == Estimator::RbCsmc {
            self.reference = estimate.new_reference;
        }
        let inter = spent + estimate.interactions;
        self.interactions += inter;
        self.iteration = k;
        Ok(StepReport {
            step_size: gamma,
            score: estimate.score,
            interactions: inter,
            retries,
        })
    }

    fn forward_cost(&self) -> u64 {
        let t = self.problem.horizon as u64;
        let n = self.config.particles as u64;
        match self.config.estimator {
            Estimator::RbCsmc => t * (n - 1),
            Estimator::Smc => t * n,
        }
    }

    /// Evaluation of the current policy on the stream reserved for iteration `k`.
    pub fn evaluate(&self) -> Result<Evaluation> {
        evaluate_policy(
            &self.problem,
            &self.policy,
            self.config.eval_rollouts,
            &self.root.split2(tags::EVAL, self.iteration as u64),
        )
    }

    fn should_evaluate(&self) -> bool {
        let every = self.config.eval_every;
        every > 0 && (self.iteration % every == 0 || self.iteration == self.config.iterations)
    }

    /// Runs the remaining iterations, handing each curve record to `sink`
    /// as soon as it is produced.
    /// One ascent step, followed by an evaluation when one is due.
    pub fn advance(&mut self) -> Result<Option<CurveRecord>> {
        self.msc_step()?;
        if !self.should_evaluate() {
            return Ok(None);
        }
        let eval = self.evaluate()?;
        self.interactions += eval.interactions;
        Ok(Some(CurveRecord {
            iteration: self.iteration,
            interactions: self.interactions,
            mean_cost: eval.mean_cost,
            std_cost: eval.std_cost,
            wall_ms: if self.config.record_wall_time {
                self.started.elapsed().as_millis() as u64
            } else {
                0
            },
        }))
    }

    pub fn is_finished(&self) -> bool {
        self.iteration >= self.config.iterations
    }

    pub fn run<F>(&mut self, mut sink: F) -> Result<LearningCurve>
    where
        F: FnMut(&CurveRecord) -> Result<()>,
    {
        let mut curve = LearningCurve::default();
        while !self.is_finished() {
            if let Some(rec) = self.advance()? {
                sink(&rec)?;
                curve.records.push(rec);
            }
        }
        Ok(curve)
    }
}

/// Runs `config.iterations` score-climbing steps from `policy`.
pub fn train<E: Environment, P: Policy>(
    problem: ControlProblem<E>,
    policy: P,
    config: TrainConfig,
) -> Result<(P, LearningCurve)> {
    let mut trainer = Trainer::new(problem, policy, config)?;
    let curve = trainer.run(|_| Ok(()))?;
    Ok((trainer.into_policy(), curve))
}
