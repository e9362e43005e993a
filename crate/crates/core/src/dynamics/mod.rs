//! Ground-truth nonlinear environments behind one continuous-dynamics
//! interface, integrated with classical RK4 under a zero-order hold on the
//! control.

mod cartpole;
mod damping_pendulum;
mod double_pendulum;
mod mountain_car;
mod pendulum;

use serde::{Deserialize, Serialize};

pub use cartpole::CartPole;
pub use damping_pendulum::DampingPendulum;
pub use double_pendulum::DoublePendulum;
pub use mountain_car::MountainCar;
pub use pendulum::Pendulum;

use crate::error::{Error, Result};

/// Sampling period shared by every environment, in seconds.
pub const DEFAULT_DT: f64 = 0.02;

/// Names accepted by [`Environment::by_name`].
pub const ENV_NAMES: [&str; 5] = [
    "damping_pendulum",
    "pendulum",
    "mountaincar",
    "cartpole",
    "double_pendulum",
];

/// Static description of an environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub state_dim: usize,
    pub control_dim: usize,
    pub dt: f64,
    /// Per control dimension `[lo, hi]`.
    pub control_bounds: Vec<(f64, f64)>,
    /// Per state dimension `[lo, hi]` used to draw initial states.
    pub sample_region: Vec<(f64, f64)>,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.dt > 0.0
            && self.control_bounds.len() == self.control_dim
            && self.sample_region.len() == self.state_dim
            && self
                .control_bounds
                .iter()
                .chain(&self.sample_region)
                .all(|(lo, hi)| lo < hi);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid environment spec for {}", self.name)))
        }
    }

    /// Clamp a control vector into the bounds.
    pub fn clamp_control(&self, u: &mut [f64]) {
        for (ui, &(lo, hi)) in u.iter_mut().zip(&self.control_bounds) {
            *ui = ui.clamp(lo, hi);
        }
    }

    /// Width `hi - lo` of the sampling region per state dimension.
    pub fn state_range(&self) -> Vec<f64> {
        self.sample_region.iter().map(|(lo, hi)| hi - lo).collect()
    }
}

/// Continuous-time dynamics `ẋ = f(x, u)`.
pub trait Dynamics {
    fn spec(&self) -> &EnvSpec;

    fn derivative(&self, x: &[f64], u: &[f64]) -> Vec<f64>;

    /// Environment-specific state limits applied after every step.
    fn clamp_state(&self, _x: &mut [f64]) {}

    /// Named physical constants, for manifests.
    fn params(&self) -> Vec<(&'static str, f64)>;

    /// Override one named constant.
    fn set_param(&mut self, key: &str, value: f64) -> Result<()>;
}

/// Classical fourth-order Runge–Kutta step of `ẋ = f(x)`.
pub fn rk4(x: &[f64], dt: f64, f: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let axpy = |a: &[f64], k: &[f64], h: f64| -> Vec<f64> {
        a.iter().zip(k).map(|(ai, ki)| ai + h * ki).collect()
    };
    let k1 = f(x);
    let k2 = f(&axpy(x, &k1, 0.5 * dt));
    let k3 = f(&axpy(x, &k2, 0.5 * dt));
    let k4 = f(&axpy(x, &k3, dt));
    x.iter()
        .enumerate()
        .map(|(i, xi)| xi + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// One of the supported environments, selected by name.
#[derive(Clone, Debug, PartialEq)]
pub enum Environment {
    DampingPendulum(DampingPendulum),
    Pendulum(Pendulum),
    MountainCar(MountainCar),
    CartPole(CartPole),
    DoublePendulum(DoublePendulum),
}

impl Environment {
    pub fn by_name(name: &str) -> Result<Self> {
        Ok(match name {
            "damping_pendulum" => Self::DampingPendulum(DampingPendulum::default()),
            "pendulum" => Self::Pendulum(Pendulum::default()),
            "mountaincar" => Self::MountainCar(MountainCar::default()),
            "cartpole" => Self::CartPole(CartPole::default()),
            "double_pendulum" => Self::DoublePendulum(DoublePendulum::default()),
            other => return Err(Error::UnknownEnv(other.to_string())),
        })
    }

    fn inner(&self) -> &dyn Dynamics {
        match self {
            Self::DampingPendulum(e) => e,
            Self::Pendulum(e) => e,
            Self::MountainCar(e) => e,
            Self::CartPole(e) => e,
            Self::DoublePendulum(e) => e,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Dynamics {
        match self {
            Self::DampingPendulum(e) => e,
            Self::Pendulum(e) => e,
            Self::MountainCar(e) => e,
            Self::CartPole(e) => e,
            Self::DoublePendulum(e) => e,
        }
    }

    pub fn name(&self) -> &str {
        &self.spec().name
    }

    pub fn state_dim(&self) -> usize {
        self.spec().state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.spec().control_dim
    }

    pub fn dt(&self) -> f64 {
        self.spec().dt
    }

    pub fn spec_mut(&mut self) -> &mut EnvSpec {
        match self {
            Self::DampingPendulum(e) => &mut e.spec,
            Self::Pendulum(e) => &mut e.spec,
            Self::MountainCar(e) => &mut e.spec,
            Self::CartPole(e) => &mut e.spec,
            Self::DoublePendulum(e) => &mut e.spec,
        }
    }

    fn check_dims(&self, x: &[f64], u: &[f64]) -> Result<()> {
        let s = self.spec();
        if x.len() != s.state_dim || u.len() != s.control_dim {
            return Err(Error::dim(
                format!("{} dynamics", s.name),
                format!(
                    "state {} / control {}, expected {} / {}",
                    x.len(),
                    u.len(),
                    s.state_dim,
                    s.control_dim
                ),
            ));
        }
        Ok(())
    }

    /// Continuous-time derivative at `(x, u)`.
    pub fn derivative_checked(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(x, u)?;
        Ok(self.derivative(x, u))
    }

    /// RK4 over `dt` with `u` held constant, no clamping.
    pub fn rk4_step(&self, x: &[f64], u: &[f64], dt: f64) -> Result<Vec<f64>> {
        self.check_dims(x, u)?;
        let next = rk4(x, dt, |s| self.derivative(s, u));
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration {
                env: self.name().to_string(),
                detail: format!("non-finite state from {x:?} under {u:?}"),
            });
        }
        Ok(next)
    }

    /// One sampling period forward followed by state clamping.
    pub fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let mut next = self.rk4_step(x, u, self.dt())?;
        self.clamp_state(&mut next);
        Ok(next)
    }
}

impl Dynamics for Environment {
    fn spec(&self) -> &EnvSpec {
        self.inner().spec()
    }

    fn derivative(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        self.inner().derivative(x, u)
    }

    fn clamp_state(&self, x: &mut [f64]) {
        self.inner().clamp_state(x)
    }

    fn params(&self) -> Vec<(&'static str, f64)> {
        self.inner().params()
    }

    fn set_param(&mut self, key: &str, value: f64) -> Result<()> {
        self.inner_mut().set_param(key, value)
    }
}

pub(crate) fn unknown_param(env: &str, key: &str) -> Error {
    Error::Config(format!("environment {env} has no parameter `{key}`"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_names_resolve_with_valid_specs() {
        for name in ENV_NAMES {
            let env = Environment::by_name(name).unwrap();
            assert_eq!(env.name(), name);
            env.spec().validate().unwrap();
            assert_eq!(env.dt(), DEFAULT_DT);
        }
        assert!(matches!(Environment::by_name("acrobot"), Err(Error::UnknownEnv(_))));
    }

    #[test]
    fn rk4_matches_exponential_decay() {
        let x1 = rk4(&[1.0], 0.02, |x| vec![-x[0]]);
        assert!((x1[0] - (-0.02_f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn equilibria_are_fixed_points() {
        let cases: [(&str, Vec<f64>); 5] = [
            ("damping_pendulum", vec![0.0, 0.0]),
            ("pendulum", vec![0.0, 0.0]),
            ("mountaincar", vec![-std::f64::consts::PI / 6.0, 0.0]),
            ("cartpole", vec![0.0, 0.0, 0.0, 0.0]),
            ("double_pendulum", vec![0.0, 0.0, 0.0, 0.0]),
        ];
        for (name, x) in cases {
            let env = Environment::by_name(name).unwrap();
            let u = vec![0.0; env.control_dim()];
            let next = env.step(&x, &u).unwrap();
            for (a, b) in next.iter().zip(&x) {
                assert!((a - b).abs() < 1e-12, "{name}: {next:?}");
            }
        }
    }

    #[test]
    fn wrong_dims_rejected() {
        let env = Environment::by_name("cartpole").unwrap();
        assert!(env.step(&[0.0; 3], &[0.0]).is_err());
        assert!(env.step(&[0.0; 4], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn blow_up_is_an_integration_error() {
        let mut env = Environment::by_name("damping_pendulum").unwrap();
        env.set_param("b", 1e308).unwrap();
        let err = env.step(&[0.0, 1e10], &[0.0]).unwrap_err();
        assert!(matches!(err, Error::Integration { .. }));
    }

    #[test]
    fn stepping_is_deterministic() {
        for name in ENV_NAMES {
            let env = Environment::by_name(name).unwrap();
            let x: Vec<f64> = env.spec().sample_region.iter().map(|(lo, hi)| 0.3 * lo + 0.7 * hi).collect();
            let u: Vec<f64> = env.spec().control_bounds.iter().map(|(_, hi)| 0.5 * hi).collect();
            assert_eq!(env.step(&x, &u).unwrap(), env.step(&x, &u).unwrap());
        }
    }
}
