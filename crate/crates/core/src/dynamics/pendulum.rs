use std::f64::consts::PI;

use super::{unknown_param, Dynamics, EnvSpec, DEFAULT_DT};
use crate::error::Result;

/// Gym-style pendulum with θ = 0 upright and a torque input.
///
/// `θ̈ = 3g/(2l)·sin θ + 3/(m l²)·u`, angular speed clipped to `±max_speed`.
#[derive(Clone, Debug, PartialEq)]
pub struct Pendulum {
    pub spec: EnvSpec,
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    pub max_speed: f64,
}

impl Default for Pendulum {
    fn default() -> Self {
        Self {
            spec: EnvSpec {
                name: "pendulum".into(),
                state_dim: 2,
                control_dim: 1,
                dt: DEFAULT_DT,
                control_bounds: vec![(-2.0, 2.0)],
                sample_region: vec![(-PI, PI), (-4.0, 4.0)],
            },
            mass: 1.0,
            length: 1.0,
            gravity: 10.0,
            max_speed: 8.0,
        }
    }
}

impl Dynamics for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn derivative(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let (m, l, g) = (self.mass, self.length, self.gravity);
        let accel = 3.0 * g / (2.0 * l) * x[0].sin() + 3.0 / (m * l * l) * u[0];
        vec![x[1], accel]
    }

    fn clamp_state(&self, x: &mut [f64]) {
        x[1] = x[1].clamp(-self.max_speed, self.max_speed);
    }

    fn params(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("m", self.mass),
            ("l", self.length),
            ("g", self.gravity),
            ("max_speed", self.max_speed),
        ]
    }

    fn set_param(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "m" => self.mass = value,
            "l" => self.length = value,
            "g" => self.gravity = value,
            "max_speed" => self.max_speed = value,
            _ => return Err(unknown_param(&self.spec.name, key)),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Environment;

    #[test]
    fn speed_is_clipped() {
        let env = Environment::by_name("pendulum").unwrap();
        let x = env.step(&[0.0, 7.99], &[2.0]).unwrap();
        assert_eq!(x[1], 8.0);
    }

    #[test]
    fn upright_is_unstable() {
        let p = Pendulum::default();
        assert!(p.derivative(&[0.1, 0.0], &[0.0])[1] > 0.0);
    }
}
