use super::{unknown_param, Dynamics, EnvSpec, DEFAULT_DT};
use crate::error::Result;

/// Continuous mountain car in Gym units.
///
/// Gym's per-step update `v += 0.0015·u − 0.0025·cos(3p)`, `p += v` is
/// written as a continuous system with `time_scale` steps per second, so one
/// 0.02 s period reproduces one Gym step to first order.
#[derive(Clone, Debug, PartialEq)]
pub struct MountainCar {
    pub spec: EnvSpec,
    pub power: f64,
    pub slope_gravity: f64,
    pub time_scale: f64,
    pub min_position: f64,
    pub max_position: f64,
    pub max_speed: f64,
}

impl Default for MountainCar {
    fn default() -> Self {
        Self {
            spec: EnvSpec {
                name: "mountaincar".into(),
                state_dim: 2,
                control_dim: 1,
                dt: DEFAULT_DT,
                control_bounds: vec![(-1.0, 1.0)],
                sample_region: vec![(-1.2, 0.6), (-0.07, 0.07)],
            },
            power: 0.0015,
            slope_gravity: 0.0025,
            time_scale: 1.0 / DEFAULT_DT,
            min_position: -1.2,
            max_position: 0.6,
            max_speed: 0.07,
        }
    }
}

impl Dynamics for MountainCar {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn derivative(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let (p, v) = (x[0], x[1]);
        let s = self.time_scale;
        vec![
            s * v,
            s * (self.power * u[0] - self.slope_gravity * (3.0 * p).cos()),
        ]
    }

    fn clamp_state(&self, x: &mut [f64]) {
        x[1] = x[1].clamp(-self.max_speed, self.max_speed);
        x[0] = x[0].clamp(self.min_position, self.max_position);
        if x[0] <= self.min_position && x[1] < 0.0 {
            x[1] = 0.0;
        }
    }

    fn params(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("power", self.power),
            ("slope_gravity", self.slope_gravity),
            ("time_scale", self.time_scale),
            ("min_position", self.min_position),
            ("max_position", self.max_position),
            ("max_speed", self.max_speed),
        ]
    }

    fn set_param(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "power" => self.power = value,
            "slope_gravity" => self.slope_gravity = value,
            "time_scale" => self.time_scale = value,
            "min_position" => self.min_position = value,
            "max_position" => self.max_position = value,
            "max_speed" => self.max_speed = value,
            _ => return Err(unknown_param(&self.spec.name, key)),
        }
        Ok(())
    }
}
