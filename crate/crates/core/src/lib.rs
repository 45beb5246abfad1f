//! Policy learning by Markovian score climbing on a control state-space model.
//!
//! A stochastic policy, the environment dynamics and a pseudo-likelihood
//! `exp(-eta * cost)` define a joint density over state-action trajectories.
//! The policy parameters are fitted by stochastic gradient ascent on the log
//! evidence, with gradients estimated by conditional SMC with backward
//! sampling ([`smc::rb_csmc_score`]) driven by [`msc::Trainer`].
//!
//! ```
//! use msc_control::env::{EnvKind, EnvSpec};
//! use msc_control::msc::{train, StepSchedule, TrainConfig};
//! use msc_control::policy::TanhGaussianPolicy;
//! use msc_control::rng::RngStream;
//! use msc_control::ssm::ControlProblem;
//!
//! let env = EnvSpec::preset(EnvKind::Pendulum);
//! let policy = TanhGaussianPolicy::init(2, &[8], env.action_box.clone(), &mut RngStream::new(1).rng()).unwrap();
//! let problem = ControlProblem::new(env, 0.05, 20).unwrap();
//! let config = TrainConfig::new(3, StepSchedule::constant(1e-2).unwrap(), 16, 4, 7);
//! let (_policy, curve) = train(problem, policy, config).unwrap();
//! assert_eq!(curve.records.len(), 3);
//! ```

pub mod env;
pub mod error;
pub mod msc;
pub mod numeric;
pub mod oracle;
pub mod policy;
pub mod rng;
pub mod smc;
pub mod ssm;
pub mod verify;

pub use error::{Error, Result};

/// Book chapters, compiled as doc-tests so the guide cannot drift.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/control-as-inference.md")]
    pub struct ControlAsInference;
    #[doc = include_str!("../../../book/src/particle-kernels.md")]
    pub struct ParticleKernels;
    #[doc = include_str!("../../../book/src/score-climbing.md")]
    pub struct ScoreClimbing;
    #[doc = include_str!("../../../book/src/environments.md")]
    pub struct Environments;
    #[doc = include_str!("../../../book/src/verification.md")]
    pub struct Verification;
    #[doc = include_str!("../../../book/src/random-streams.md")]
    pub struct RandomStreams;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
