use std::f64::consts::PI;

use super::{unknown_param, Dynamics, EnvSpec, DEFAULT_DT};
use crate::error::Result;

/// Pendulum with a horizontal external force and viscous damping.
///
/// State `[θ, θ̇]` with θ = 0 hanging down; control is the horizontal force.
///
/// `θ̈ = −(g/l)·sin θ + b·θ̇/(m·l) + cos θ·u/(m·l)`; `b < 0` dissipates.
#[derive(Clone, Debug, PartialEq)]
pub struct DampingPendulum {
    pub spec: EnvSpec,
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    pub damping: f64,
}

impl Default for DampingPendulum {
    fn default() -> Self {
        Self {
            spec: EnvSpec {
                name: "damping_pendulum".into(),
                state_dim: 2,
                control_dim: 1,
                dt: DEFAULT_DT,
                control_bounds: vec![(-8.0, 8.0)],
                sample_region: vec![(-PI, PI), (-4.0, 4.0)],
            },
            mass: 1.0,
            length: 1.0,
            gravity: 9.81,
            damping: -0.1,
        }
    }
}

impl DampingPendulum {
    /// `½ m l² θ̇² + m g l (1 − cos θ)`.
    pub fn energy(&self, x: &[f64]) -> f64 {
        let (m, l, g) = (self.mass, self.length, self.gravity);
        0.5 * m * l * l * x[1] * x[1] + m * g * l * (1.0 - x[0].cos())
    }
}

impl Dynamics for DampingPendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn derivative(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let (theta, omega) = (x[0], x[1]);
        let ml = self.mass * self.length;
        let accel = -(self.gravity / self.length) * theta.sin()
            + self.damping * omega / ml
            + theta.cos() * u[0] / ml;
        vec![omega, accel]
    }

    fn params(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("m", self.mass),
            ("l", self.length),
            ("g", self.gravity),
            ("b", self.damping),
        ]
    }

    fn set_param(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "m" => self.mass = value,
            "l" => self.length = value,
            "g" => self.gravity = value,
            "b" => self.damping = value,
            _ => return Err(unknown_param(&self.spec.name, key)),
        }
        Ok(())
    }
}
