//! Kinematics shared by every agent.
//!
//! All robots follow the constant-speed bicycle (unicycle) model
//! `ẋ = v cos θ, ẏ = v sin θ, θ̇ = u`, integrated with one explicit Euler step
//! per tick. Only the angular rate `u` is controllable; it is clamped to
//! `±u_max` before use so that any sampled control is feasible.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Point, Result};

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    /// Heading in `(-π, π]`.
    pub theta: f64,
}

impl RobotState {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    pub fn distance_to(&self, p: &Point) -> f64 {
        (self.x - p.x).hypot(self.y - p.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    /// Fixed linear speed, m/s.
    pub v: f64,
    /// Angular-rate bound, rad/s.
    pub u_max: f64,
    /// Integration step, s.
    pub dt: f64,
}

impl AgentParams {
    pub fn new(v: f64, u_max: f64, dt: f64) -> Result<Self> {
        let p = Self { v, u_max, dt };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("v", self.v), ("u_max", self.u_max), ("dt", self.dt)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and > 0, got {value}")));
            }
        }
        Ok(())
    }

    pub fn clamp(&self, u: f64) -> f64 {
        u.clamp(-self.u_max, self.u_max)
    }
}

/// Angular-rate plan over the horizon, one entry per tick.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ControlSequence(pub Vec<f64>);

impl ControlSequence {
    pub fn zeros(horizon: usize) -> Self {
        Self(vec![0.0; horizon])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ControlSequence {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// States `x_t, …, x_{t+T}`; always one longer than the control sequence.
pub type Trajectory = Vec<RobotState>;

/// One explicit-Euler step using the heading at the start of the step.
pub fn step(state: &RobotState, u: f64, params: &AgentParams) -> RobotState {
    let u = params.clamp(u);
    let (sin, cos) = state.theta.sin_cos();
    RobotState {
        x: state.x + params.v * cos * params.dt,
        y: state.y + params.v * sin * params.dt,
        theta: wrap_angle(state.theta + u * params.dt),
    }
}

pub fn rollout(state0: &RobotState, controls: &[f64], params: &AgentParams) -> Trajectory {
    let mut traj = Vec::with_capacity(controls.len() + 1);
    rollout_into(state0, controls, params, &mut traj);
    traj
}

/// Like [`rollout`] but reuses `out`'s allocation.
pub fn rollout_into(
    state0: &RobotState,
    controls: &[f64],
    params: &AgentParams,
    out: &mut Trajectory,
) {
    out.clear();
    out.push(*state0);
    let mut s = *state0;
    for &u in controls {
        s = step(&s, u, params);
        out.push(s);
    }
}
