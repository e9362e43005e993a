use super::{unknown_param, Dynamics, EnvSpec, DEFAULT_DT};
use crate::error::Result;

/// Classic cart-pole with a continuous horizontal force on the cart.
///
/// State `[x, ẋ, θ, θ̇]` with θ = 0 upright; `half_length` is the distance
/// from the pivot to the pole's centre of mass.
#[derive(Clone, Debug, PartialEq)]
pub struct CartPole {
    pub spec: EnvSpec,
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub half_length: f64,
}

impl Default for CartPole {
    fn default() -> Self {
        Self {
            spec: EnvSpec {
                name: "cartpole".into(),
                state_dim: 4,
                control_dim: 1,
                dt: DEFAULT_DT,
                control_bounds: vec![(-10.0, 10.0)],
                sample_region: vec![(-2.4, 2.4), (-2.0, 2.0), (-0.2095, 0.2095), (-2.0, 2.0)],
            },
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
        }
    }
}

impl Dynamics for CartPole {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn derivative(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let (theta, omega) = (x[2], x[3]);
        let total = self.cart_mass + self.pole_mass;
        let pml = self.pole_mass * self.half_length;
        let (s, c) = theta.sin_cos();
        let temp = (u[0] + pml * omega * omega * s) / total;
        let theta_acc = (self.gravity * s - c * temp)
            / (self.half_length * (4.0 / 3.0 - self.pole_mass * c * c / total));
        let x_acc = temp - pml * theta_acc * c / total;
        vec![x[1], x_acc, omega, theta_acc]
    }

    fn params(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("g", self.gravity),
            ("cart_mass", self.cart_mass),
            ("pole_mass", self.pole_mass),
            ("half_length", self.half_length),
        ]
    }

    fn set_param(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "g" => self.gravity = value,
            "cart_mass" => self.cart_mass = value,
            "pole_mass" => self.pole_mass = value,
            "half_length" => self.half_length = value,
            _ => return Err(unknown_param(&self.spec.name, key)),
        }
        Ok(())
    }
}
