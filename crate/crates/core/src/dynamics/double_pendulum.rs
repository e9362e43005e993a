use std::f64::consts::PI;

use super::{unknown_param, Dynamics, EnvSpec, DEFAULT_DT};
use crate::error::Result;

/// Planar two-link arm with point masses at the link tips and a torque on
/// each joint.
///
/// State `[θ₁, θ₂, θ̇₁, θ̇₂]`: θ₁ is measured from the downward vertical, θ₂
/// relative to the first link. The dynamics are
/// `M(θ)·θ̈ + c(θ, θ̇) + g(θ) = u`.
#[derive(Clone, Debug, PartialEq)]
pub struct DoublePendulum {
    pub spec: EnvSpec,
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub l2: f64,
    pub gravity: f64,
}

impl Default for DoublePendulum {
    fn default() -> Self {
        Self {
            spec: EnvSpec {
                name: "double_pendulum".into(),
                state_dim: 4,
                control_dim: 2,
                dt: DEFAULT_DT,
                control_bounds: vec![(-10.0, 10.0), (-10.0, 10.0)],
                sample_region: vec![(-PI, PI), (-PI, PI), (-4.0, 4.0), (-4.0, 4.0)],
            },
            m1: 1.0,
            m2: 1.0,
            l1: 1.0,
            l2: 1.0,
            gravity: 9.81,
        }
    }
}

impl DoublePendulum {
    /// Mass matrix `M(θ)` as `[[m11, m12], [m12, m22]]`.
    pub fn mass_matrix(&self, x: &[f64]) -> [[f64; 2]; 2] {
        let c2 = x[1].cos();
        let (m1, m2, l1, l2) = (self.m1, self.m2, self.l1, self.l2);
        let m11 = m1 * l1 * l1 + m2 * (l1 * l1 + 2.0 * l1 * l2 * c2 + l2 * l2);
        let m12 = m2 * (l1 * l2 * c2 + l2 * l2);
        let m22 = m2 * l2 * l2;
        [[m11, m12], [m12, m22]]
    }

    /// Velocity-product terms `c(θ, θ̇)`.
    pub fn coriolis(&self, x: &[f64]) -> [f64; 2] {
        let s2 = x[1].sin();
        let (w1, w2) = (x[2], x[3]);
        let h = self.m2 * self.l1 * self.l2 * s2;
        [-h * (2.0 * w1 * w2 + w2 * w2), h * w1 * w1]
    }

    /// Gravity terms `g(θ)`.
    pub fn gravity_terms(&self, x: &[f64]) -> [f64; 2] {
        let g = self.gravity;
        let s1 = x[0].sin();
        let s12 = (x[0] + x[1]).sin();
        [
            (self.m1 + self.m2) * g * self.l1 * s1 + self.m2 * g * self.l2 * s12,
            self.m2 * g * self.l2 * s12,
        ]
    }
}

impl Dynamics for DoublePendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn derivative(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let m = self.mass_matrix(x);
        let c = self.coriolis(x);
        let g = self.gravity_terms(x);
        let rhs = [u[0] - c[0] - g[0], u[1] - c[1] - g[1]];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        // det = m1·m2·l1²·l2² + m2²·l1²·l2²·sin²θ₂ > 0 for positive masses
        assert!(det > 0.0, "singular mass matrix: det = {det}");
        let a1 = (m[1][1] * rhs[0] - m[0][1] * rhs[1]) / det;
        let a2 = (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det;
        vec![x[2], x[3], a1, a2]
    }

    fn params(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("m1", self.m1),
            ("m2", self.m2),
            ("l1", self.l1),
            ("l2", self.l2),
            ("g", self.gravity),
        ]
    }

    fn set_param(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "m1" => self.m1 = value,
            "m2" => self.m2 = value,
            "l1" => self.l1 = value,
            "l2" => self.l2 = value,
            "g" => self.gravity = value,
            _ => return Err(unknown_param(&self.spec.name, key)),
        }
        Ok(())
    }
}
