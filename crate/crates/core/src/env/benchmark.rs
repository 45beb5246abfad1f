//! Pendulum, cart-pole and double pendulum.
//!
//! Angles are measured from the hanging-down configuration, so every system
//! starts at rest at the origin and the upright goal puts `pi` on the first
//! pole angle. Physical constants default to unit masses and lengths,
//! `g = 9.81`, no friction.
//!
//! Cost: `c(x, u) = sum_i Q_i e_i^2 + sum_j R_j u_j^2` where `e = x - x_goal`,
//! except that angular coordinates contribute `Q_i * 2 (1 - cos e_i)`, which is
//! `2pi`-periodic and agrees with `e_i^2` to second order.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use super::{check_state_action, ActionBox, Environment};
use crate::error::{check_dim, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnvKind {
    /// State `(angle, angular velocity)`, action torque.
    Pendulum,
    /// State `(cart position, pole angle, cart velocity, pole angular velocity)`, action force.
    CartPole,
    /// State `(shoulder angle, elbow angle, shoulder velocity, elbow velocity)`, two torques.
    DoublePendulum,
}

impl EnvKind {
    pub const ALL: [EnvKind; 3] = [EnvKind::Pendulum, EnvKind::CartPole, EnvKind::DoublePendulum];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Pendulum => "pendulum",
            EnvKind::CartPole => "cartpole",
            EnvKind::DoublePendulum => "double-pendulum",
        }
    }

    pub fn state_dim(self) -> usize {
        match self {
            EnvKind::Pendulum => 2,
            EnvKind::CartPole | EnvKind::DoublePendulum => 4,
        }
    }

    pub fn action_dim(self) -> usize {
        match self {
            EnvKind::Pendulum | EnvKind::CartPole => 1,
            EnvKind::DoublePendulum => 2,
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "pendulum" => Ok(EnvKind::Pendulum),
            "cartpole" | "cart-pole" => Ok(EnvKind::CartPole),
            "double-pendulum" | "doublependulum" => Ok(EnvKind::DoublePendulum),
            other => Err(Error::Config(format!("unknown environment `{other}`"))),
        }
    }
}

/// Physical constants. Not every field is used by every system.
#[derive(Clone, Debug, PartialEq)]
pub struct Physics {
    pub gravity: f64,
    /// Pendulum bob, cart-pole pole, or first double-pendulum link mass.
    pub mass: f64,
    /// Pendulum, cart-pole pole, or first link length.
    pub length: f64,
    pub cart_mass: f64,
    pub mass2: f64,
    pub length2: f64,
    /// Viscous joint damping (pendulum only).
    pub damping: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            mass: 1.0,
            length: 1.0,
            cart_mass: 1.0,
            mass2: 1.0,
            length2: 1.0,
            damping: 0.0,
        }
    }
}

/// Diagonal cost weights.
#[derive(Clone, Debug, PartialEq)]
pub struct CostWeights {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
}

/// Penalty applied to the goal error `e` of an angular coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AngleCost {
    /// `2 (1 - cos e)`, smooth and bounded, equal to `e^2` to second order.
    Cosine,
    /// `wrap(e)^2` with `wrap` onto `(-pi, pi]`.
    WrappedQuadratic,
}

impl AngleCost {
    pub fn name(self) -> &'static str {
        match self {
            AngleCost::Cosine => "cosine",
            AngleCost::WrappedQuadratic => "wrapped_quadratic",
        }
    }

    fn eval(self, e: f64) -> f64 {
        match self {
            AngleCost::Cosine => 2.0 * (1.0 - e.cos()),
            AngleCost::WrappedQuadratic => wrap_angle(e).powi(2),
        }
    }
}

impl FromStr for AngleCost {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(AngleCost::Cosine),
            "wrapped_quadratic" => Ok(AngleCost::WrappedQuadratic),
            other => Err(Error::Config(format!(
                "unknown angle cost `{other}` (expected cosine or wrapped_quadratic)"
            ))),
        }
    }
}

/// Fully specified benchmark system.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub physics: Physics,
    pub dt: f64,
    noise: Vec<f64>,
    pub x0: Vec<f64>,
    pub x_goal: Vec<f64>,
    pub action_box: ActionBox,
    /// Indices of angle-valued state coordinates.
    pub angular: Vec<usize>,
    pub weights: CostWeights,
    pub angle_cost: AngleCost,
}

impl EnvSpec {
    /// Default configuration: `dt = 0.05`, `sigma = 0.01`, start at rest
    /// hanging down, goal upright.
    pub fn preset(kind: EnvKind) -> Self {
        let d = kind.state_dim();
        let (x_goal, angular, state_w, limit) = match kind {
            EnvKind::Pendulum => (vec![PI, 0.0], vec![0], vec![1.0, 0.1], vec![2.5]),
            EnvKind::CartPole => (
                vec![0.0, PI, 0.0, 0.0],
                vec![1],
                vec![1.0, 1.0, 0.1, 0.1],
                vec![5.0],
            ),
            EnvKind::DoublePendulum => (
                vec![PI, 0.0, 0.0, 0.0],
                vec![0, 1],
                vec![1.0, 1.0, 0.1, 0.1],
                vec![5.0, 5.0],
            ),
        };
        let m = kind.action_dim();
        Self {
            kind,
            physics: Physics::default(),
            dt: 0.05,
            noise: vec![0.01; d],
            x0: vec![0.0; d],
            x_goal,
            action_box: ActionBox::symmetric(limit).expect("positive preset limits"),
            angular,
            weights: CostWeights {
                state: state_w,
                action: vec![1e-3; m],
            },
            angle_cost: AngleCost::Cosine,
        }
    }

    pub fn pendulum() -> Self {
        Self::preset(EnvKind::Pendulum)
    }

    pub fn cartpole() -> Self {
        Self::preset(EnvKind::CartPole)
    }

    pub fn double_pendulum() -> Self {
        Self::preset(EnvKind::DoublePendulum)
    }

    pub fn noise_level(&self) -> f64 {
        self.noise[0]
    }

    /// Same noise standard deviation on every state coordinate. Zero is
    /// accepted for deterministic test systems; the transition density is
    /// then degenerate.
    pub fn set_noise_std(&mut self, sigma: f64) -> Result<()> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("noise std must be >= 0, got {sigma}")));
        }
        self.noise = vec![sigma; self.kind.state_dim()];
        Ok(())
    }

    pub fn with_noise_std(mut self, sigma: f64) -> Result<Self> {
        self.set_noise_std(sigma)?;
        Ok(self)
    }

    /// Symmetric action limits.
    pub fn set_action_limit(&mut self, limit: Vec<f64>) -> Result<()> {
        check_dim("action limit", self.kind.action_dim(), limit.len())?;
        self.action_box = ActionBox::symmetric(limit)?;
        Ok(())
    }

    /// Checks invariants after fields were overridden.
    pub fn validate(&self) -> Result<()> {
        let d = self.kind.state_dim();
        let m = self.kind.action_dim();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        check_dim("x0", d, self.x0.len())?;
        check_dim("x_goal", d, self.x_goal.len())?;
        check_dim("state cost weights", d, self.weights.state.len())?;
        check_dim("action cost weights", m, self.weights.action.len())?;
        check_dim("action box", m, self.action_box.dim())?;
        if self
            .weights
            .state
            .iter()
            .chain(&self.weights.action)
            .any(|&w| !(w >= 0.0 && w.is_finite()))
        {
            return Err(Error::Config("cost weights must be nonnegative".into()));
        }
        if self.angular.iter().any(|&i| i >= d) {
            return Err(Error::Config("angular index out of range".into()));
        }
        let p = &self.physics;
        for (name, v) in [
            ("mass", p.mass),
            ("length", p.length),
            ("cart_mass", p.cart_mass),
            ("mass2", p.mass2),
            ("length2", p.length2),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !p.gravity.is_finite() || !(p.damping >= 0.0) {
            return Err(Error::Config("invalid gravity or damping".into()));
        }
        Ok(())
    }

    /// Continuous-time vector field `dx/dt`.
    pub fn drift(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let p = &self.physics;
        let g = p.gravity;
        match self.kind {
            EnvKind::Pendulum => {
                let inertia = p.mass * p.length * p.length;
                out[0] = x[1];
                out[1] = (u[0] - p.damping * x[1] - p.mass * g * p.length * x[0].sin()) / inertia;
            }
            EnvKind::CartPole => {
                let (mc, mp, l) = (p.cart_mass, p.mass, p.length);
                let (th, th_dot) = (x[1], x[3]);
                let (s, c) = th.sin_cos();
                let denom = mc + mp * s * s;
                out[0] = x[2];
                out[1] = th_dot;
                out[2] = (u[0] + mp * s * (l * th_dot * th_dot + g * c)) / denom;
                out[3] = (-u[0] * c - mp * l * th_dot * th_dot * c * s - (mc + mp) * g * s)
                    / (l * denom);
            }
            EnvKind::DoublePendulum => {
                let (m1, m2, l1, l2) = (p.mass, p.mass2, p.length, p.length2);
                let (q1, q2, w1, w2) = (x[0], x[1], x[2], x[3]);
                let (s2, c2) = q2.sin_cos();
                let s1 = q1.sin();
                let s12 = (q1 + q2).sin();
                // point masses at the link tips
                let m11 = (m1 + m2) * l1 * l1 + m2 * l2 * l2 + 2.0 * m2 * l1 * l2 * c2;
                let m12 = m2 * l2 * l2 + m2 * l1 * l2 * c2;
                let m22 = m2 * l2 * l2;
                let h = m2 * l1 * l2 * s2;
                let coriolis1 = -h * (2.0 * w1 * w2 + w2 * w2);
                let coriolis2 = h * w1 * w1;
                let grav1 = -(m1 + m2) * g * l1 * s1 - m2 * g * l2 * s12;
                let grav2 = -m2 * g * l2 * s12;
                let r1 = u[0] + grav1 - coriolis1;
                let r2 = u[1] + grav2 - coriolis2;
                let det = m11 * m22 - m12 * m12;
                out[0] = w1;
                out[1] = w2;
                out[2] = (m22 * r1 - m12 * r2) / det;
                out[3] = (m11 * r2 - m12 * r1) / det;
            }
        }
    }
}

impl Environment for EnvSpec {
    fn state_dim(&self) -> usize {
        self.kind.state_dim()
    }

    fn action_dim(&self) -> usize {
        self.kind.action_dim()
    }

    fn initial_state(&self) -> &[f64] {
        &self.x0
    }

    fn noise_std(&self) -> &[f64] {
        &self.noise
    }

    fn euler_mean_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
        check_state_action(self, x, u)?;
        check_dim("output state", self.state_dim(), out.len())?;
        self.drift(x, u, out);
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = xi + self.dt * *o;
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "{}: non-finite Euler step from state {x:?} with action {u:?}",
                self.kind
            )));
        }
        Ok(())
    }

    fn cost(&self, x: &[f64], u: &[f64]) -> f64 {
        let mut c = 0.0;
        for (i, ((&xi, &gi), &w)) in x.iter().zip(&self.x_goal).zip(&self.weights.state).enumerate() {
            let e = xi - gi;
            c += if self.angular.contains(&i) {
                w * self.angle_cost.eval(e)
            } else {
                w * e * e
            };
        }
        for (&uj, &w) in u.iter().zip(&self.weights.action) {
            c += w * uj * uj;
        }
        c
    }

    fn action_box(&self) -> Option<&ActionBox> {
        Some(&self.action_box)
    }
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn rk4(env: &EnvSpec, x: &[f64], u: &[f64], h: f64) -> Vec<f64> {
        let d = x.len();
        let f = |y: &[f64]| {
            let mut o = vec![0.0; d];
            env.drift(y, u, &mut o);
            o
        };
        let add = |y: &[f64], k: &[f64], s: f64| y.iter().zip(k).map(|(a, b)| a + s * b).collect::<Vec<_>>();
        let k1 = f(x);
        let k2 = f(&add(x, &k1, h / 2.0));
        let k3 = f(&add(x, &k2, h / 2.0));
        let k4 = f(&add(x, &k3, h));
        (0..d)
            .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect()
    }

    #[test]
    fn pendulum_hanging_equilibrium() {
        let env = EnvSpec::pendulum();
        assert_eq!(env.euler_mean(&[0.0, 0.0], &[0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn pendulum_kinematic_row() {
        let env = EnvSpec::pendulum();
        let x = [0.3, -1.7];
        let next = env.euler_mean(&x, &[0.4]).unwrap();
        assert_eq!(next[0], 0.3 + 0.05 * -1.7);
    }

    fn rk4_flow(env: &EnvSpec, x: &[f64], u: &[f64], time: f64) -> Vec<f64> {
        let steps = (time / 0.001).round() as usize;
        let mut y = x.to_vec();
        for _ in 0..steps {
            y = rk4(env, &y, u, time / steps as f64);
        }
        y
    }

    fn euler_flow(env: &EnvSpec, x: &[f64], u: &[f64], time: f64, dt: f64) -> Vec<f64> {
        let mut e = env.clone();
        e.dt = dt;
        let mut y = x.to_vec();
        for _ in 0..(time / dt).round() as usize {
            y = e.euler_mean(&y, u).unwrap();
        }
        y
    }

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn euler_step_error_is_the_truncation_term() {
        // one Euler step from the exact flow misses it by dt^2/2 * x'' + O(dt^3)
        for kind in EnvKind::ALL {
            let env = EnvSpec::preset(kind);
            let d = env.state_dim();
            let mut y: Vec<f64> = (0..d).map(|i| 0.2 + 0.1 * i as f64).collect();
            let u = vec![0.5; env.action_dim()];
            for step in 0..20 {
                let next = rk4_flow(&env, &y, &u, env.dt);
                let err = dist(&env.euler_mean(&y, &u).unwrap(), &next);
                let mut f0 = vec![0.0; d];
                env.drift(&y, &u, &mut f0);
                let h = 1e-6;
                let shifted: Vec<f64> = y.iter().zip(&f0).map(|(a, b)| a + h * b).collect();
                let mut f1 = vec![0.0; d];
                env.drift(&shifted, &u, &mut f1);
                let accel = dist(&f1, &f0) / h;
                let lead = 0.5 * env.dt * env.dt * accel;
                assert!((err - lead).abs() <= 0.25 * lead + 1e-9, "{kind} step {step}: {err} vs {lead}");
                y = next;
            }
        }
    }

    #[test]
    fn euler_converges_at_first_order() {
        for kind in EnvKind::ALL {
            let env = EnvSpec::preset(kind);
            let x: Vec<f64> = (0..env.state_dim()).map(|i| 0.2 + 0.1 * i as f64).collect();
            let u = vec![0.5; env.action_dim()];
            let exact = rk4_flow(&env, &x, &u, 1.0);
            let e1 = dist(&euler_flow(&env, &x, &u, 1.0, 0.0125), &exact);
            let e2 = dist(&euler_flow(&env, &x, &u, 1.0, 0.00625), &exact);
            let ratio = e1 / e2;
            assert!((1.7..2.3).contains(&ratio), "{kind}: {ratio}");
        }
    }

    #[test]
    fn transition_logpdf_mode_value() {
        let env = EnvSpec::pendulum();
        let x = [0.1, 0.2];
        let u = [0.3];
        let mean = env.euler_mean(&x, &u).unwrap();
        let lp = env.transition_logpdf(&mean, &x, &u).unwrap();
        let expected = -2.0 * (0.5 * (2.0 * PI).ln() + 0.01f64.ln());
        assert!((lp - expected).abs() < 1e-12);
        assert!((lp - 7.372_463_3).abs() < 1e-6);
        let mut shifted = mean.clone();
        shifted[1] += 0.01;
        let lp2 = env.transition_logpdf(&shifted, &x, &u).unwrap();
        assert!((lp - lp2 - 0.5).abs() < 1e-9);
    }

    #[test]
    fn transition_logpdf_matches_scalar_product() {
        use rand::Rng;
        let env = EnvSpec::cartpole();
        let mut rng = RngStream::new(5).rng();
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let u = [rng.random_range(-5.0..5.0)];
            let xn: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0) * 0.05).collect();
            let mean = env.euler_mean(&x, &u).unwrap();
            let oracle: f64 = (0..4)
                .map(|i| {
                    let s = 0.01;
                    let z = (xn[i] - mean[i]) / s;
                    ((-0.5 * z * z).exp() / (s * (2.0 * PI).sqrt())).ln()
                })
                .sum();
            let lp = env.transition_logpdf(&xn, &x, &u).unwrap();
            assert!((lp - oracle).abs() <= 1e-9 * oracle.abs().max(1.0));
        }
    }

    #[test]
    fn zero_noise_sample_is_mean() {
        let env = EnvSpec::pendulum().with_noise_std(0.0).unwrap();
        let mut rng = RngStream::new(1).rng();
        let x = [1.0, 0.5];
        assert_eq!(
            env.transition_sample(&x, &[1.0], &mut rng).unwrap(),
            env.euler_mean(&x, &[1.0]).unwrap()
        );
    }

    #[test]
    fn transition_sample_mean_and_reproducibility() {
        let env = EnvSpec::pendulum();
        let x = [0.4, -0.3];
        let u = [1.0];
        let mean = env.euler_mean(&x, &u).unwrap();
        let n = 100_000;
        let mut rng = RngStream::new(11).rng();
        let mut acc = [0.0; 2];
        for _ in 0..n {
            let s = env.transition_sample(&x, &u, &mut rng).unwrap();
            acc[0] += s[0];
            acc[1] += s[1];
        }
        for i in 0..2 {
            let err = (acc[i] / n as f64 - mean[i]).abs();
            assert!(err < 3.0 * 0.01 / (n as f64).sqrt(), "{i}: {err}");
        }
        let a = env.transition_sample(&x, &u, &mut RngStream::new(2).rng()).unwrap();
        let b = env.transition_sample(&x, &u, &mut RngStream::new(2).rng()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cost_goal_and_wrapping() {
        let env = EnvSpec::pendulum();
        assert_eq!(env.cost(&[PI, 0.0], &[0.0]), 0.0);
        assert!(env.cost(&[3.0 * PI, 0.0], &[0.0]).abs() < 1e-15);
        assert!(env.cost(&[0.0, 0.0], &[0.0]) > 3.9);
        let cp = EnvSpec::cartpole();
        assert_eq!(cp.cost(&[0.0, PI, 0.0, 0.0], &[0.0]), 0.0);
        let dp = EnvSpec::double_pendulum();
        assert!(dp.cost(&[PI - 2.0 * PI, 2.0 * PI, 0.0, 0.0], &[0.0, 0.0]).abs() < 1e-14);
    }

    #[test]
    fn cost_matches_documented_weights() {
        use rand::Rng;
        let env = EnvSpec::cartpole();
        let mut rng = RngStream::new(8).rng();
        for _ in 0..100 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-4.0..4.0)).collect();
            let u = [rng.random_range(-5.0..5.0)];
            let e_pos = x[0];
            let e_ang = x[1] - PI;
            let expected = 1.0 * e_pos * e_pos
                + 1.0 * 2.0 * (1.0 - e_ang.cos())
                + 0.1 * x[2] * x[2]
                + 0.1 * x[3] * x[3]
                + 1e-3 * u[0] * u[0];
            assert!((env.cost(&x, &u) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_drift_is_reported() {
        let env = EnvSpec::pendulum();
        let err = env.euler_mean(&[0.0, f64::INFINITY], &[0.0]).unwrap_err();
        assert!(matches!(err, Error::Numerical(ref msg) if msg.contains("pendulum")));
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-15);
        assert!((wrap_angle(2.0 * PI + 0.25) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn parse_kind() {
        assert_eq!("Cart-Pole".parse::<EnvKind>().unwrap(), EnvKind::CartPole);
        assert_eq!("double_pendulum".parse::<EnvKind>().unwrap(), EnvKind::DoublePendulum);
        assert!("acrobot".parse::<EnvKind>().is_err());
    }
}
