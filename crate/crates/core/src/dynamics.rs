//! Differential-drive kinematics and the look-ahead output map.
//!
//! A robot's pose is `(x, y, theta)` and its inputs are the right and left
//! wheel angular velocities. The wheel matrix `G` maps wheel speeds to body
//! velocities `(v, omega)`; the look-ahead point `p = (x, y) + l_p (cos, sin)`
//! has velocity `p_dot = R(theta) L G u` with `L = diag(1, l_p)`, which is
//! invertible for `l_p > 0`.

use nalgebra::{Matrix2, Vector2, Vector3};
use std::f64::consts::PI;

use crate::error::{ensure_finite, ensure_positive};
use crate::Result;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t - 2.0 * PI
    } else {
        t
    }
}

/// Planar pose of one robot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl RobotState {
    /// Builds a pose, normalizing the heading.
    pub fn new(x: f64, y: f64, theta: f64) -> Result<Self> {
        ensure_finite(&[x, y, theta], "robot state")?;
        Ok(Self {
            x,
            y,
            theta: wrap_angle(theta),
        })
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.theta)
    }
}

/// Right/left wheel angular velocities in rad/s.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WheelCommand {
    pub right: f64,
    pub left: f64,
}

impl WheelCommand {
    pub const ZERO: Self = Self {
        right: 0.0,
        left: 0.0,
    };

    pub fn new(right: f64, left: f64) -> Self {
        Self { right, left }
    }

    pub fn as_vector(&self) -> Vector2<f64> {
        Vector2::new(self.right, self.left)
    }

    pub fn from_vector(v: &Vector2<f64>) -> Self {
        Self::new(v[0], v[1])
    }

    pub fn max_abs(&self) -> f64 {
        self.right.abs().max(self.left.abs())
    }
}

/// Physical constants shared by every robot in a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotGeometry {
    /// Wheel radius `r` (m).
    pub wheel_radius: f64,
    /// Distance between the wheels `l_b` (m).
    pub base_length: f64,
    /// Look-ahead distance `l_p` (m) from the axle center to the output point.
    pub look_ahead: f64,
    /// Robot footprint diameter `delta` (m).
    pub diameter: f64,
}

impl RobotGeometry {
    /// GRITSbot constants used by the Robotarium.
    pub const GRITSBOT: Self = Self {
        wheel_radius: 0.016,
        base_length: 0.105,
        look_ahead: 0.03,
        diameter: 0.12,
    };

    pub fn new(wheel_radius: f64, base_length: f64, look_ahead: f64, diameter: f64) -> Result<Self> {
        let geom = Self {
            wheel_radius,
            base_length,
            look_ahead,
            diameter,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive(self.wheel_radius, "wheel_radius")?;
        ensure_positive(self.base_length, "base_length")?;
        ensure_positive(self.look_ahead, "look_ahead")?;
        ensure_positive(self.diameter, "diameter")
    }

    /// `L = diag(1, l_p)`.
    pub fn look_ahead_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(1.0, 0.0, 0.0, self.look_ahead)
    }
}

impl Default for RobotGeometry {
    fn default() -> Self {
        Self::GRITSBOT
    }
}

/// Maps `(omega_r, omega_l)` to body velocities `(v, omega)`.
pub fn wheel_matrix(geom: &RobotGeometry) -> Matrix2<f64> {
    let r = geom.wheel_radius;
    let lb = geom.base_length;
    Matrix2::new(r / 2.0, r / 2.0, -r / lb, r / lb)
}

pub fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

pub fn output_point(state: &RobotState, geom: &RobotGeometry) -> Vector2<f64> {
    let (s, c) = state.theta.sin_cos();
    Vector2::new(state.x + geom.look_ahead * c, state.y + geom.look_ahead * s)
}

/// `g(theta) = R(theta) L G`, so that `p_dot = g u`.
pub fn output_jacobian(state: &RobotState, geom: &RobotGeometry) -> Matrix2<f64> {
    rotation(state.theta) * geom.look_ahead_matrix() * wheel_matrix(geom)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Integrator {
    #[default]
    Euler,
    Rk4,
}

fn vector_field(q: &Vector3<f64>, body: &Vector2<f64>) -> Vector3<f64> {
    let (s, c) = q[2].sin_cos();
    Vector3::new(c * body[0], s * body[0], body[1])
}

/// Advances one robot by `dt` under the disturbed wheel input `u + d`, with a
/// forward Euler step.
pub fn step_dynamics(
    state: &RobotState,
    u: &WheelCommand,
    d: &Vector2<f64>,
    dt: f64,
    geom: &RobotGeometry,
) -> Result<RobotState> {
    step_dynamics_with(Integrator::Euler, state, u, d, dt, geom)
}

/// Like [`step_dynamics`], with a selectable integrator. The wheel input is
/// held constant over the step.
pub fn step_dynamics_with(
    integrator: Integrator,
    state: &RobotState,
    u: &WheelCommand,
    d: &Vector2<f64>,
    dt: f64,
    geom: &RobotGeometry,
) -> Result<RobotState> {
    ensure_finite(&[state.x, state.y, state.theta], "robot state")?;
    ensure_finite(&[u.right, u.left], "wheel command")?;
    ensure_finite(d.as_slice(), "disturbance")?;
    ensure_positive(dt, "dt")?;

    let body = wheel_matrix(geom) * (u.as_vector() + d);
    let q = state.as_vector();
    let next = match integrator {
        Integrator::Euler => q + vector_field(&q, &body) * dt,
        Integrator::Rk4 => {
            let k1 = vector_field(&q, &body);
            let k2 = vector_field(&(q + k1 * (dt / 2.0)), &body);
            let k3 = vector_field(&(q + k2 * (dt / 2.0)), &body);
            let k4 = vector_field(&(q + k3 * dt), &body);
            q + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
        }
    };
    RobotState::new(next[0], next[1], next[2])
}
