//! Unicycle agent avoiding a moving obstacle.
//!
//! The agent `(x, y, v, theta)` is augmented with the obstacle position
//! `(x_d, y_d)`, whose velocity enters as the disturbance: the filter never
//! sees the obstacle's own dynamics, only its position and a speed bound.
//! The joint system is control-affine,
//!
//! ```text
//! f = (v cos(theta), v sin(theta), 0, 0, 0, 0)
//! g : u_v -> v',  u_theta -> theta'
//! p : d   -> (x_d', y_d')
//! ```
//!
//! and the distance barrier `h1 = (x - x_d)^2 + (y - y_d)^2 - r^2` has
//! relative degree two from the controls, so avoidance runs on a two-level
//! chain. [`h2_analytic`] and [`appendix_lie_h2`] are the hand-derived
//! closed forms for the second level and its Lie derivatives; they exist as
//! an independent oracle for the chain's automatic differentiation and must
//! not be routed through it.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::chain::ControlAffine;
use crate::numerics::{math, Matrix, Real, StateField, StateVector};

/// Agent plus obstacle-position state, in the fixed component order
/// `(x, y, v, theta, obstacle_x, obstacle_y)`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct AugmentedState {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub theta: f64,
    pub obstacle_x: f64,
    pub obstacle_y: f64,
}

impl AugmentedState {
    pub const DIM: usize = 6;

    pub fn to_vector(self) -> StateVector {
        StateVector::new(vec![
            self.x,
            self.y,
            self.v,
            self.theta,
            self.obstacle_x,
            self.obstacle_y,
        ])
    }

    pub fn from_slice(s: &[f64]) -> Result<Self, UnicycleError> {
        if s.len() != Self::DIM {
            return Err(UnicycleError::Dimension { got: s.len() });
        }
        Ok(AugmentedState {
            x: s[0],
            y: s[1],
            v: s[2],
            theta: s[3],
            obstacle_x: s[4],
            obstacle_y: s[5],
        })
    }

    /// Euclidean agent-obstacle separation.
    pub fn separation(&self) -> f64 {
        let dx = self.x - self.obstacle_x;
        let dy = self.y - self.obstacle_y;
        math::sqrt(dx * dx + dy * dy)
    }
}

/// Avoidance problem constants: clearance radius, obstacle speed bound, the
/// two chain gains, and the two smoothing constants.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct AvoidanceParams {
    pub safety_radius: f64,
    pub disturbance_bound: f64,
    pub c1: f64,
    pub c2: f64,
    pub eps1: f64,
    pub eps2: f64,
}

impl AvoidanceParams {
    pub fn validate(&self) -> Result<(), UnicycleError> {
        let checks = [
            ("safety_radius", self.safety_radius, self.safety_radius > 0.0),
            (
                "disturbance_bound",
                self.disturbance_bound,
                self.disturbance_bound >= 0.0,
            ),
            ("c1", self.c1, self.c1 > 0.0),
            ("c2", self.c2, self.c2 > 0.0),
            ("eps1", self.eps1, self.eps1 > 0.0),
            ("eps2", self.eps2, self.eps2 > 0.0),
        ];
        for (name, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(UnicycleError::BadParam { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum UnicycleError {
    Dimension { got: usize },
    BadParam { name: &'static str, value: f64 },
    EmptyProfile,
    UnsortedProfile { index: usize },
    NonFiniteProfile { index: usize },
}

impl fmt::Display for UnicycleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnicycleError::Dimension { got } => {
                write!(f, "augmented state needs {} entries, got {got}", AugmentedState::DIM)
            }
            UnicycleError::BadParam { name, value } => {
                write!(f, "parameter {name} out of range: {value}")
            }
            UnicycleError::EmptyProfile => write!(f, "tabulated profile needs at least one sample"),
            UnicycleError::UnsortedProfile { index } => {
                write!(f, "tabulated profile times must strictly increase (sample {index})")
            }
            UnicycleError::NonFiniteProfile { index } => {
                write!(f, "tabulated profile sample {index} is non-finite")
            }
        }
    }
}

impl core::error::Error for UnicycleError {}

/// The augmented unicycle-plus-obstacle control-affine system.
#[derive(Copy, Clone, Debug, Default)]
pub struct UnicycleObstacleSystem;

impl ControlAffine for UnicycleObstacleSystem {
    fn state_dim(&self) -> usize {
        6
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn disturbance_dim(&self) -> usize {
        2
    }

    fn drift<S: Real>(&self, x: &[S]) -> Vec<S> {
        let v = x[2];
        let theta = x[3];
        vec![
            v * theta.cos(),
            v * theta.sin(),
            S::zero(),
            S::zero(),
            S::zero(),
            S::zero(),
        ]
    }

    fn control_matrix<S: Real>(&self, _x: &[S]) -> Matrix<S> {
        let mut g = Matrix::zeros(6, 2);
        g.set(2, 0, S::one()); // u_v drives v'
        g.set(3, 1, S::one()); // u_theta drives theta'
        g
    }

    fn disturbance_matrix<S: Real>(&self, _x: &[S]) -> Matrix<S> {
        let mut p = Matrix::zeros(6, 2);
        p.set(4, 0, S::one()); // d_x drives obstacle_x'
        p.set(5, 1, S::one()); // d_y drives obstacle_y'
        p
    }
}

/// Distance barrier `h1 = (x - x_d)^2 + (y - y_d)^2 - r^2`.
#[derive(Copy, Clone, Debug)]
pub struct DistanceBarrier {
    pub safety_radius: f64,
}

impl StateField for DistanceBarrier {
    fn eval<S: Real>(&self, x: &[S]) -> S {
        let dx = x[0] - x[4];
        let dy = x[1] - x[5];
        dx * dx + dy * dy - S::constant(self.safety_radius * self.safety_radius)
    }
}

/// Smooth margin of the distance barrier:
/// `delta_1 = sqrt(eps1 + 4 dx^2 + 4 dy^2)`, since
/// `L_p h1 = (-2 dx, -2 dy)`.
fn delta_1(dx: f64, dy: f64, eps1: f64) -> f64 {
    math::sqrt(eps1 + 4.0 * (dx * dx + dy * dy))
}

/// Closed-form second chain level
/// `h2 = c1 h1 + L_f h1 - M delta_1`, with
/// `L_f h1 = 2 dx v cos(theta) + 2 dy v sin(theta)`.
pub fn h2_analytic(state: &AugmentedState, params: &AvoidanceParams) -> f64 {
    let dx = state.x - state.obstacle_x;
    let dy = state.y - state.obstacle_y;
    let r = params.safety_radius;
    let h1 = dx * dx + dy * dy - r * r;
    let lf_h1 = 2.0 * dx * state.v * math::cos(state.theta)
        + 2.0 * dy * state.v * math::sin(state.theta);
    let mut h2 = params.c1 * h1 + lf_h1;
    if params.disturbance_bound > 0.0 {
        h2 -= params.disturbance_bound * delta_1(dx, dy, params.eps1);
    }
    h2
}

/// Hand-derived Lie derivatives of `h2` along the augmented system.
#[derive(Clone, Debug, PartialEq)]
pub struct AppendixLie {
    pub lf: f64,
    pub lg: [f64; 2],
    pub lp: [f64; 2],
}

/// The closed-form expressions for `L_f h2`, `L_g h2`, `L_p h2`. Pure
/// trigonometric/algebraic forms, independent of the AD chain; used as the
/// oracle it is cross-checked against.
pub fn appendix_lie_h2(state: &AugmentedState, params: &AvoidanceParams) -> AppendixLie {
    let dx = state.x - state.obstacle_x;
    let dy = state.y - state.obstacle_y;
    let v = state.v;
    let (sin_t, cos_t) = (math::sin(state.theta), math::cos(state.theta));
    let c1 = params.c1;
    let m = params.disturbance_bound;
    let d1 = delta_1(dx, dy, params.eps1);

    // Radial closing rate: dx v cos + dy v sin (half of L_f h1).
    let a = dx * v * cos_t + dy * v * sin_t;

    let lf = 2.0 * c1 * a + 2.0 * v * v - (4.0 * m / d1) * a;
    let lg = [
        2.0 * dx * cos_t + 2.0 * dy * sin_t,
        2.0 * v * (dy * cos_t - dx * sin_t),
    ];
    let lp_factor = 4.0 * m / d1 - 2.0 * c1;
    let lp = [
        lp_factor * dx - 2.0 * v * cos_t,
        lp_factor * dy - 2.0 * v * sin_t,
    ];
    AppendixLie { lf, lg, lp }
}

/// Obstacle pose for the truth model (heading included; the filter only
/// ever sees the position).
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ObstaclePose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

/// Obstacle speed/steering program. Headings are integrated in closed form,
/// so the induced disturbance `d(t) = v(t) (cos, sin)(theta(t))` is exact.
#[derive(Clone, Debug, PartialEq)]
pub enum ObstacleProfile {
    /// Obstacle never moves.
    Static,
    /// Constant speed and turn rate.
    Constant { speed: f64, turn_rate: f64 },
    /// Constant speed with oscillating steering
    /// `omega(t) = amplitude * cos(frequency * t)`.
    SteeringWave {
        speed: f64,
        amplitude: f64,
        frequency: f64,
    },
    /// Piecewise-linear `(t, speed, turn_rate)` samples; clamped outside
    /// the table.
    Tabulated(TabulatedProfile),
}

impl ObstacleProfile {
    pub fn speed_at(&self, t: f64) -> f64 {
        match self {
            ObstacleProfile::Static => 0.0,
            ObstacleProfile::Constant { speed, .. } => *speed,
            ObstacleProfile::SteeringWave { speed, .. } => *speed,
            ObstacleProfile::Tabulated(tab) => tab.interp(t).0,
        }
    }

    pub fn turn_rate_at(&self, t: f64) -> f64 {
        match self {
            ObstacleProfile::Static => 0.0,
            ObstacleProfile::Constant { turn_rate, .. } => *turn_rate,
            ObstacleProfile::SteeringWave {
                amplitude,
                frequency,
                ..
            } => amplitude * math::cos(frequency * t),
            ObstacleProfile::Tabulated(tab) => tab.interp(t).1,
        }
    }

    /// Heading at time `t` starting from `theta0` at `t = 0`: the exact
    /// integral of the turn rate, no numerical drift.
    pub fn heading_at(&self, theta0: f64, t: f64) -> f64 {
        match self {
            ObstacleProfile::Static => theta0,
            ObstacleProfile::Constant { turn_rate, .. } => theta0 + turn_rate * t,
            ObstacleProfile::SteeringWave {
                amplitude,
                frequency,
                ..
            } => {
                if *frequency == 0.0 {
                    theta0 + amplitude * t
                } else {
                    theta0 + (amplitude / frequency) * math::sin(frequency * t)
                }
            }
            ObstacleProfile::Tabulated(tab) => theta0 + tab.turn_integral(t),
        }
    }

    /// Obstacle velocity (the disturbance the truth model injects).
    pub fn velocity_at(&self, theta0: f64, t: f64) -> [f64; 2] {
        let speed = self.speed_at(t);
        let heading = self.heading_at(theta0, t);
        [speed * math::cos(heading), speed * math::sin(heading)]
    }

    /// Largest speed the profile ever commands (its disturbance bound).
    pub fn max_speed(&self) -> f64 {
        match self {
            ObstacleProfile::Static => 0.0,
            ObstacleProfile::Constant { speed, .. } => speed.abs(),
            ObstacleProfile::SteeringWave { speed, .. } => speed.abs(),
            ObstacleProfile::Tabulated(tab) => tab
                .points
                .iter()
                .map(|p| p[1].abs())
                .fold(0.0, f64::max),
        }
    }
}

/// Strictly time-sorted `(t, speed, turn_rate)` table with linear
/// interpolation and exact (piecewise-quadratic) turn-rate integrals.
#[derive(Clone, Debug, PartialEq)]
pub struct TabulatedProfile {
    points: Vec<[f64; 3]>,
    /// Cumulative integral of the turn rate at each node, zero at the first.
    turn_cumulative: Vec<f64>,
}

impl TabulatedProfile {
    pub fn new(points: Vec<[f64; 3]>) -> Result<Self, UnicycleError> {
        if points.is_empty() {
            return Err(UnicycleError::EmptyProfile);
        }
        for (i, p) in points.iter().enumerate() {
            if !p.iter().all(|v| v.is_finite()) {
                return Err(UnicycleError::NonFiniteProfile { index: i });
            }
            if i > 0 && p[0] <= points[i - 1][0] {
                return Err(UnicycleError::UnsortedProfile { index: i });
            }
        }
        let mut turn_cumulative = Vec::with_capacity(points.len());
        turn_cumulative.push(0.0);
        for w in points.windows(2) {
            let dt = w[1][0] - w[0][0];
            let prev = *turn_cumulative.last().unwrap();
            turn_cumulative.push(prev + 0.5 * (w[0][2] + w[1][2]) * dt);
        }
        Ok(TabulatedProfile {
            points,
            turn_cumulative,
        })
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    /// `(speed, turn_rate)` at `t`, clamped outside the table.
    fn interp(&self, t: f64) -> (f64, f64) {
        let pts = &self.points;
        if t <= pts[0][0] {
            return (pts[0][1], pts[0][2]);
        }
        if t >= pts[pts.len() - 1][0] {
            let last = &pts[pts.len() - 1];
            return (last[1], last[2]);
        }
        let i = self.segment(t);
        let (a, b) = (&pts[i], &pts[i + 1]);
        let w = (t - a[0]) / (b[0] - a[0]);
        (a[1] + w * (b[1] - a[1]), a[2] + w * (b[2] - a[2]))
    }

    /// Index of the segment containing `t` (interior only).
    fn segment(&self, t: f64) -> usize {
        let pts = &self.points;
        match pts.binary_search_by(|p| p[0].partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(pts.len() - 2),
            Err(i) => i - 1,
        }
    }

    /// Exact `int_0^t turn_rate(s) ds` under the clamped piecewise-linear
    /// model.
    fn turn_integral(&self, t: f64) -> f64 {
        self.antiderivative(t) - self.antiderivative(0.0)
    }

    /// Antiderivative with value 0 at the first node.
    fn antiderivative(&self, t: f64) -> f64 {
        let pts = &self.points;
        let first = &pts[0];
        if t <= first[0] {
            return (t - first[0]) * first[2];
        }
        let last = &pts[pts.len() - 1];
        if t >= last[0] {
            return self.turn_cumulative[pts.len() - 1] + (t - last[0]) * last[2];
        }
        let i = self.segment(t);
        let (a, b) = (&pts[i], &pts[i + 1]);
        let dt = t - a[0];
        let slope = (b[2] - a[2]) / (b[0] - a[0]);
        self.turn_cumulative[i] + a[2] * dt + 0.5 * slope * dt * dt
    }
}

/// True obstacle dynamics `(x_d', y_d', theta_d') = (v cos, v sin, omega)`,
/// integrated by the simulator but hidden from the agent.
pub fn obstacle_dynamics(t: f64, pose: &ObstaclePose, profile: &ObstacleProfile) -> [f64; 3] {
    let v = profile.speed_at(t);
    [
        v * math::cos(pose.theta),
        v * math::sin(pose.theta),
        profile.turn_rate_at(t),
    ]
}
