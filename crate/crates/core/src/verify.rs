//! Statistical and numerical self-checks against the exact oracles.
//!
//! Each check returns a [`CheckOutcome`]; sizes are parameters so the same
//! code serves a quick suite ([`linear_gaussian_suite`]) and full-size
//! acceptance runs.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;

use crate::env::{ActionBox, EnvKind, EnvSpec, Environment, LinearEnv};
use crate::error::Result;
use crate::msc::{init_reference, StepSchedule, TrainConfig, Trainer};
use crate::oracle::{
    analytic_score, finite_diff_grad, integrate, kalman_smoother, ml_gain, stats, DensePosterior,
    LinearGaussianProblem,
};
use crate::policy::{LinearGaussianPolicy, Policy, PolicyParams, TanhGaussianPolicy};
use crate::rng::RngStream;
use crate::smc::{csmc_forward, csmc_kernel, rao_blackwellized_score, rb_csmc_score};
use crate::ssm::{grad_log_joint, log_joint, ControlProblem, StateAction, Trajectory};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

/// Scalar system used by the chain checks: `x' = 0.9 x + 0.5 u + 0.3 w`,
/// policy `u = -0.4 x + exp(-0.5) e`, cost `x^2 + 0.5 u^2`, `eta = 0.6`.
pub fn scalar_fixture(horizon: usize) -> LinearGaussianProblem {
    LinearGaussianProblem::scalar(0.9, 0.5, 0.3, -0.4, -0.5, 1.0, 0.5, 0.6, horizon, 1.0)
}

/// Two-state, two-action system with learned log-std (six parameters).
pub fn vector_fixture(horizon: usize) -> LinearGaussianProblem {
    use nalgebra::{DMatrix, DVector};
    let mut p = scalar_fixture(horizon);
    p.a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, -0.2, 0.95]);
    p.b = DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.3, 0.0]);
    p.noise_std = vec![0.1, 0.2];
    p.gain = DMatrix::from_row_slice(2, 2, &[-0.5, -0.8, 0.1, 0.2]);
    p.policy_log_std = vec![-0.3, 0.2];
    p.q = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
    p.r = DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 0.1]);
    p.temperature = 0.5;
    p.x0 = DVector::from_vec(vec![1.0, -0.5]);
    p.learn_std = true;
    p
}

/// Scalar problem for score climbing: [`scalar_fixture`] with frozen
/// policy std, so the gain is the only parameter.
pub fn msc_fixture() -> LinearGaussianProblem {
    scalar_fixture(25)
}

/// `gamma_0` of the decaying schedule used with [`msc_fixture`].
pub const MSC_INITIAL_STEP: f64 = 0.05;

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(f64::MIN_POSITIVE)
}

fn random_tanh_policy<R: Rng>(env: &EnvSpec, rng: &mut R) -> Result<TanhGaussianPolicy> {
    let depth = rng.random_range(0..3);
    let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(2..7)).collect();
    let mut sizes = vec![env.state_dim()];
    sizes.extend(&hidden);
    sizes.push(env.action_dim());
    let mut params = PolicyParams::init(sizes, rng)?;
    let spread = Uniform::new(-0.5, 0.5).unwrap();
    for v in params.values_mut() {
        *v += spread.sample(rng);
    }
    for ls in params.log_std_mut() {
        *ls = rng.random_range(-1.0..0.5);
    }
    TanhGaussianPolicy::new(params, env.action_box.clone())
}

/// Gradients of the complete-data log density and of the policy log density
/// against central finite differences on random configurations.
///
/// Every configuration draws an environment, a small random tanh network and
/// a trajectory simulated under it. The error is `|g - fd| / |fd|` in the
/// Euclidean norm, and the worst value over all configurations must stay
/// below `tolerance`.
pub fn gradient_check(configs: usize, tolerance: f64, seed: u64) -> Result<CheckOutcome> {
    let root = RngStream::new(seed);
    let results: Vec<(f64, f64)> = (0..configs)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64)> {
            let mut rng = root.split(i as u64).rng();
            let kind = EnvKind::ALL[rng.random_range(0..3)];
            let env = EnvSpec::preset(kind);
            let horizon = rng.random_range(0..12);
            let eta = rng.random_range(0.01..1.0);
            let policy = random_tanh_policy(&env, &mut rng)?;
            let problem = ControlProblem::new(env, eta, horizon)?;
            let traj = init_reference(&problem, &policy, &root.split2(i as u64, 1))?;

            let g = grad_log_joint(&problem, &policy, &traj)?;
            let fd = finite_diff_grad(
                |th| {
                    let mut p = policy.clone();
                    p.params_mut().copy_from_slice(th);
                    log_joint(&problem, &p, &traj).unwrap_or(f64::NAN)
                },
                policy.params(),
                1e-6,
            )?;
            let joint = rel_err(&g, &fd);

            let z = &traj.steps[rng.random_range(0..traj.len())];
            let ga = policy.grad_action_logpdf(&z.state, &z.action)?;
            let fda = finite_diff_grad(
                |th| {
                    let mut p = policy.clone();
                    p.params_mut().copy_from_slice(th);
                    p.action_logpdf(&z.state, &z.action).unwrap_or(f64::NAN)
                },
                policy.params(),
                1e-6,
            )?;
            Ok((joint, rel_err(&ga, &fda)))
        })
        .collect::<Result<_>>()?;
    let worst_joint = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let worst_action = results.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(CheckOutcome::new(
        "gradient correctness",
        worst_joint <= tolerance && worst_action <= tolerance,
        format!(
            "{configs} configurations each; worst relative error log-joint {worst_joint:.2e}, action log-density {worst_action:.2e} (tolerance {tolerance:.0e})"
        ),
    ))
}

/// The one-dimensional tanh-flow density integrated over its support.
pub fn flow_normalization(draws: usize, tolerance: f64, seed: u64) -> Result<CheckOutcome> {
    let root = RngStream::new(seed);
    let mut worst = 0.0f64;
    for i in 0..draws {
        let mut rng = root.split(i as u64).rng();
        let scale = rng.random_range(0.5..4.0);
        let shift = rng.random_range(-2.0..2.0);
        let abox = ActionBox::new(vec![scale], vec![shift])?;
        let hidden = vec![rng.random_range(2..6)];
        let mut policy = TanhGaussianPolicy::init(2, &hidden, abox, &mut rng)?;
        policy.policy_params_mut().log_std_mut()[0] = rng.random_range(-1.5..0.3);
        let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let density = |u: f64| policy.action_logpdf(&x, &[u]).map(f64::exp).unwrap_or(0.0);
        // split the support so the adaptive rule resolves both tails
        let (lo, hi) = (shift - scale, shift + scale);
        let pieces = 16;
        let h = (hi - lo) / pieces as f64;
        let mut mass = 0.0;
        for k in 0..pieces {
            let a = lo + k as f64 * h;
            mass += integrate(density, a, a + h, 1e-10 / pieces as f64)?;
        }
        worst = worst.max((mass - 1.0).abs());
    }
    Ok(CheckOutcome::new(
        "flow normalization",
        worst <= tolerance,
        format!("{draws} parameter draws; worst |mass - 1| = {worst:.2e} (tolerance {tolerance:.0e})"),
    ))
}

/// How the chain in [`csmc_invariance`] is started.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChainStart {
    /// An exact draw from the smoothing distribution.
    Exact,
    /// All states and actions after `x_0` set to zero.
    Arbitrary,
}

fn lg_problem(p: &LinearGaussianProblem) -> Result<(ControlProblem<LinearEnv>, LinearGaussianPolicy)> {
    Ok((p.control_problem()?, p.policy()?))
}

fn zero_trajectory(p: &LinearGaussianProblem) -> Trajectory {
    let (d, m) = (p.state_dim(), p.action_dim());
    Trajectory::new(
        (0..=p.horizon)
            .map(|t| {
                let x = if t == 0 { p.x0.iter().copied().collect() } else { vec![0.0; d] };
                StateAction::new(x, vec![0.0; m])
            })
            .collect(),
    )
}

/// Per-step posterior means from repeated CSMC kernel applications against
/// the exact smoothing means.
///
/// A step passes when every coordinate of `z_t` is within 3 batch-means
/// standard errors of the smoother mean (the known `x_0` must match exactly).
pub fn csmc_invariance(
    problem: &LinearGaussianProblem,
    particles: usize,
    iterations: usize,
    burn_in: usize,
    start: ChainStart,
    min_fraction: f64,
    seed: u64,
) -> Result<CheckOutcome> {
    let exact = kalman_smoother(problem)?;
    let (cp, policy) = lg_problem(problem)?;
    let root = RngStream::new(seed);
    let mut reference = match start {
        ChainStart::Exact => DensePosterior::new(problem)?.sample(&mut root.split(0).rng()),
        ChainStart::Arbitrary => zero_trajectory(problem),
    };
    let n = problem.joint_dim();
    let d = problem.state_dim();
    let steps = problem.horizon + 1;
    let mut samples = vec![Vec::with_capacity(iterations); steps * n];
    let kernel_root = root.split(1);
    for it in 0..burn_in + iterations {
        reference = csmc_kernel(&cp, &policy, &reference, particles, &kernel_root.split(it as u64))?;
        if it >= burn_in {
            for (t, z) in reference.steps.iter().enumerate() {
                for (j, v) in z.state.iter().chain(&z.action).enumerate() {
                    samples[t * n + j].push(*v);
                }
            }
        }
    }
    let mut passing = 0;
    let mut worst_z = 0.0f64;
    for t in 0..steps {
        let mut ok = true;
        for j in 0..n {
            let xs = &samples[t * n + j];
            let target = exact.smoothed[t].mean[j];
            let mean = stats::mean(xs);
            if t == 0 && j < d {
                ok &= (mean - target).abs() < 1e-12;
                continue;
            }
            let se = stats::batch_means_se(xs, 50);
            let z = (mean - target).abs() / se;
            worst_z = worst_z.max(z);
            ok &= z <= 3.0;
        }
        passing += ok as usize;
    }
    let fraction = passing as f64 / steps as f64;
    Ok(CheckOutcome::new(
        "csmc invariance",
        fraction >= min_fraction,
        format!(
            "N={particles}, {iterations} kept iterations after {burn_in} burn-in; {passing}/{steps} steps within 3 SE (need {:.0}%), largest |z| = {worst_z:.2}",
            100.0 * min_fraction
        ),
    ))
}

/// Averages of the score along a chain run at fixed parameters.
/// Returns the per-iteration scores.
fn score_chain(
    problem: &LinearGaussianProblem,
    particles: usize,
    draws: usize,
    iterations: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let (cp, policy) = lg_problem(problem)?;
    let root = RngStream::new(seed);
    let mut reference = DensePosterior::new(problem)?.sample(&mut root.split(0).rng());
    let mut out = Vec::with_capacity(iterations);
    for it in 0..iterations {
        let est = rb_csmc_score(&cp, &policy, &reference, particles, draws, &root.split2(1, it as u64))?;
        reference = est.new_reference;
        out.push(est.score);
    }
    Ok(out)
}

fn column(scores: &[Vec<f64>], j: usize) -> Vec<f64> {
    scores.iter().map(|s| s[j]).collect()
}

/// Chain-averaged RB-CSMC score against the exact score.
pub fn score_unbiasedness(
    problem: &LinearGaussianProblem,
    particles: usize,
    draws: usize,
    iterations: usize,
    rel_tolerance: f64,
    seed: u64,
) -> Result<CheckOutcome> {
    let exact = analytic_score(problem)?;
    let scores = score_chain(problem, particles, draws, iterations, seed)?;
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (j, e) in exact.iter().enumerate() {
        let m = stats::mean(&column(&scores, j));
        let r = (m - e).abs() / e.abs();
        worst = worst.max(r);
        parts.push(format!("{m:.4} vs {e:.4}"));
    }
    Ok(CheckOutcome::new(
        "score unbiasedness",
        worst <= rel_tolerance,
        format!(
            "{iterations} iterations; {}; worst relative error {worst:.3} (tolerance {rel_tolerance})",
            parts.join(", ")
        ),
    ))
}

/// At the exact maximum-likelihood gain the chain-averaged score is zero
/// within `z_max` batch-means standard errors.
pub fn score_at_optimum(
    problem: &LinearGaussianProblem,
    particles: usize,
    draws: usize,
    iterations: usize,
    z_max: f64,
    seed: u64,
) -> Result<CheckOutcome> {
    let k = ml_gain(problem, -3.0, 3.0, 601)?;
    let at = problem.with_params(&[k]);
    let scores = score_chain(&at, particles, draws, iterations, seed)?;
    let xs = column(&scores, 0);
    let m = stats::mean(&xs);
    let se = stats::batch_means_se(&xs, 50);
    Ok(CheckOutcome::new(
        "score zero at optimum",
        m.abs() <= z_max * se,
        format!("gain {k:.6}: mean score {m:.4} with SE {se:.4} (|z| = {:.2}, limit {z_max})", (m / se).abs()),
    ))
}

/// Variance of the `K`-draw score against the single-draw score on the same
/// forward passes.
pub fn rao_blackwell_variance(
    problem: &LinearGaussianProblem,
    particles: usize,
    draws: usize,
    pairs: usize,
    min_strict_fraction: f64,
    seed: u64,
) -> Result<CheckOutcome> {
    let (cp, policy) = lg_problem(problem)?;
    let root = RngStream::new(seed);
    let mut reference = DensePosterior::new(problem)?.sample(&mut root.split(0).rng());
    let mut many = Vec::with_capacity(pairs);
    let mut one = Vec::with_capacity(pairs);
    for it in 0..pairs {
        let stream = root.split2(1, it as u64);
        let system = csmc_forward(&cp, &policy, &reference, particles, &stream)?;
        let (avg, mut list) = rao_blackwellized_score(&system, &cp, &policy, draws, &stream)?;
        let pick = stream.split(2).rng().random_range(0..list.len());
        one.push(list[0].1.clone());
        reference = list.swap_remove(pick).0;
        many.push(avg);
    }
    let dims = problem.num_params();
    let mut strict = 0;
    let mut never_larger = true;
    let mut ratios = Vec::new();
    for j in 0..dims {
        let v_many = stats::variance(&column(&many, j));
        let v_one = stats::variance(&column(&one, j));
        never_larger &= v_many <= v_one;
        strict += (v_many < v_one) as usize;
        ratios.push(format!("{:.3}", v_many / v_one));
    }
    let fraction = strict as f64 / dims as f64;
    Ok(CheckOutcome::new(
        "rao-blackwellization",
        never_larger && fraction >= min_strict_fraction,
        format!(
            "{pairs} paired passes, K={draws} vs K=1; variance ratios [{}]",
            ratios.join(", ")
        ),
    ))
}

/// Score climbing on a scalar problem with a single gain parameter, compared
/// with the exact maximum-likelihood gain.
pub fn msc_convergence(
    problem: &LinearGaussianProblem,
    initial_gain: f64,
    particles: usize,
    draws: usize,
    iterations: usize,
    schedule: StepSchedule,
    seeds: &[u64],
    rel_tolerance: f64,
) -> Result<CheckOutcome> {
    let target = ml_gain(problem, -3.0, 3.0, 601)?;
    let start = problem.with_params(&[initial_gain]);
    let finals: Vec<f64> = seeds
        .iter()
        .map(|&seed| -> Result<f64> {
            let mut config = TrainConfig::new(iterations, schedule, particles, draws, seed);
            config.eval_every = 0;
            let mut trainer = Trainer::new(start.control_problem()?, start.policy()?, config)?;
            trainer.run(|_| Ok(()))?;
            Ok(trainer.policy().params()[0])
        })
        .collect::<Result<_>>()?;
    let worst = finals.iter().map(|k| (k - target).abs() / target.abs()).fold(0.0, f64::max);
    let list: Vec<String> = finals.iter().map(|k| format!("{k:.4}")).collect();
    Ok(CheckOutcome::new(
        "msc convergence",
        worst <= rel_tolerance,
        format!(
            "optimum {target:.4}; final gains [{}] after {iterations} iterations; worst relative error {worst:.4} (tolerance {rel_tolerance})",
            list.join(", ")
        ),
    ))
}

/// Exact-oracle consistency: Kalman smoother against dense conditioning and
/// the analytic score against finite differences of the exact likelihood.
pub fn oracle_consistency() -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    let mut worst = 0.0f64;
    for p in [scalar_fixture(2), scalar_fixture(25), vector_fixture(10)] {
        let ks = kalman_smoother(&p)?;
        let dense = DensePosterior::new(&p)?;
        for t in 0..=p.horizon {
            let (m, c) = dense.marginal(t);
            worst = worst.max((&ks.smoothed[t].mean - m).amax());
            worst = worst.max((&ks.smoothed[t].cov - c).amax());
        }
        worst = worst.max((ks.log_likelihood - dense.log_likelihood).abs());
    }
    out.push(CheckOutcome::new(
        "smoother vs dense conditioning",
        worst < 1e-9,
        format!("largest discrepancy {worst:.2e}"),
    ));
    let mut worst = 0.0f64;
    for p in [scalar_fixture(25), vector_fixture(10)] {
        let g = analytic_score(&p)?;
        let fd = finite_diff_grad(
            |th| crate::oracle::log_marginal_likelihood(&p.with_params(th)).unwrap_or(f64::NAN),
            &p.params(),
            1e-6,
        )?;
        worst = worst.max(rel_err(&g, &fd));
    }
    out.push(CheckOutcome::new(
        "analytic score vs finite differences",
        worst < 1e-6,
        format!("worst relative error {worst:.2e}"),
    ));
    Ok(out)
}

/// Reduced-size versions of every check, a few seconds in total.
pub fn linear_gaussian_suite(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = oracle_consistency()?;
    out.push(gradient_check(20, 1e-5, seed)?);
    out.push(flow_normalization(5, 1e-6, seed)?);
    let chain = scalar_fixture(10);
    out.push(csmc_invariance(&chain, 8, 4000, 200, ChainStart::Exact, 0.9, seed)?);
    out.push(csmc_invariance(&chain, 2, 8000, 1000, ChainStart::Arbitrary, 0.9, seed)?);
    let mut moving = chain.clone();
    moving.learn_std = true;
    moving.gain[(0, 0)] = 0.3;
    out.push(score_unbiasedness(&moving, 16, 10, 3000, 0.1, seed)?);
    out.push(rao_blackwell_variance(&vector_fixture(10), 16, 30, 300, 0.9, seed)?);
    Ok(out)
}
