//! Deterministic closed-loop simulator for the unicycle avoidance problem.
//!
//! The truth model integrates the six-dimensional augmented state with RK4:
//! the agent under the filtered control (held constant across the stages of
//! each step, as a zero-order hold) and the obstacle under its actual
//! velocity, which enters the plant as the disturbance and is re-evaluated
//! at every stage. The filter itself never sees the obstacle's program,
//! only its position and the configured speed bound.
//!
//! Runs are bitwise reproducible: fixed step, timestamps computed as
//! `k * dt`, no hidden randomness. [`TrajectoryLog::scenario_hash`] tags a
//! log with a canonical hash of the scenario that produced it.

use alloc::vec::Vec;
use core::fmt;

use crate::chain::{BarrierChain, ChainError, ControlAffine, DisturbanceBound, GainPolicy};
use crate::filter::{self, FilterError, FilterParams};
use crate::numerics::{self, IntegrateError, NumericsError, StateVector};
use crate::unicycle::{
    AugmentedState, AvoidanceParams, DistanceBarrier, ObstaclePose, ObstacleProfile,
    UnicycleError, UnicycleObstacleSystem,
};

/// Quiet period required after the last override before it counts as a
/// resume, in seconds.
pub const RESUME_GAP: f64 = 0.5;

/// Slack applied to the exponential-floor check in [`metrics`], absorbing
/// integration error in the reported violation counts.
pub const FLOOR_TOLERANCE: f64 = 1e-6;

/// Which constraint the filter enforces.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum FilterMode {
    /// Margin-free chain: the filter pretends the obstacle holds still.
    Standard,
    /// Chain with the smooth robustness margin at every level.
    Robust,
}

/// Proportional cruise law `u = (-k1 (v - v_ref), -k2 (theta - theta_ref))`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct NominalParams {
    pub k1: f64,
    pub k2: f64,
    pub v_ref: f64,
    pub theta_ref: f64,
}

impl Default for NominalParams {
    fn default() -> Self {
        NominalParams {
            k1: 1.0,
            k2: 1.0,
            v_ref: 1.0,
            theta_ref: 0.0,
        }
    }
}

impl NominalParams {
    pub fn control(&self, state: &AugmentedState) -> [f64; 2] {
        [
            -self.k1 * (state.v - self.v_ref),
            -self.k2 * (state.theta - self.theta_ref),
        ]
    }

    pub fn validate(&self) -> Result<(), UnicycleError> {
        let checks = [
            ("k1", self.k1, self.k1 >= 0.0),
            ("k2", self.k2, self.k2 >= 0.0),
            ("v_ref", self.v_ref, true),
            ("theta_ref", self.theta_ref, true),
        ];
        for (name, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(UnicycleError::BadParam { name, value });
            }
        }
        Ok(())
    }
}

/// Complete description of one simulation run.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    /// Agent start `(x, y, v, theta)`.
    pub agent: [f64; 4],
    /// Obstacle start pose (heading seeds the profile's integrated heading).
    pub obstacle: ObstaclePose,
    pub profile: ObstacleProfile,
    pub avoidance: AvoidanceParams,
    pub nominal: NominalParams,
    /// Run duration in seconds, starting at `t = 0`.
    pub horizon: f64,
    pub dt: f64,
    pub mode: FilterMode,
}

impl Scenario {
    /// Joint initial state `(x, y, v, theta, obstacle_x, obstacle_y)`.
    pub fn initial_state(&self) -> StateVector {
        AugmentedState {
            x: self.agent[0],
            y: self.agent[1],
            v: self.agent[2],
            theta: self.agent[3],
            obstacle_x: self.obstacle.x,
            obstacle_y: self.obstacle.y,
        }
        .to_vector()
    }

    pub fn validate(&self) -> Result<(), UnicycleError> {
        self.avoidance.validate()?;
        self.nominal.validate()?;
        for (i, v) in self.agent.iter().enumerate() {
            if !v.is_finite() {
                let name = ["x", "y", "v", "theta"][i];
                return Err(UnicycleError::BadParam { name, value: *v });
            }
        }
        let grid = [
            ("horizon", self.horizon, self.horizon > 0.0),
            ("dt", self.dt, self.dt > 0.0 && self.dt <= self.horizon),
        ];
        for (name, value, ok) in grid {
            if !ok || !value.is_finite() {
                return Err(UnicycleError::BadParam { name, value });
            }
        }
        Ok(())
    }

    /// FNV-1a hash of a canonical field-order encoding. Identical scenarios
    /// hash identically across runs and platforms; any field change moves
    /// the hash.
    pub fn canonical_hash(&self) -> u64 {
        let mut h = Fnv::new();
        for v in self.agent {
            h.write_f64(v);
        }
        h.write_f64(self.obstacle.x);
        h.write_f64(self.obstacle.y);
        h.write_f64(self.obstacle.theta);
        match &self.profile {
            ObstacleProfile::Static => h.write_u8(0),
            ObstacleProfile::Constant { speed, turn_rate } => {
                h.write_u8(1);
                h.write_f64(*speed);
                h.write_f64(*turn_rate);
            }
            ObstacleProfile::SteeringWave {
                speed,
                amplitude,
                frequency,
            } => {
                h.write_u8(2);
                h.write_f64(*speed);
                h.write_f64(*amplitude);
                h.write_f64(*frequency);
            }
            ObstacleProfile::Tabulated(tab) => {
                h.write_u8(3);
                h.write_u64(tab.points().len() as u64);
                for p in tab.points() {
                    for v in p {
                        h.write_f64(*v);
                    }
                }
            }
        }
        let a = &self.avoidance;
        for v in [a.safety_radius, a.disturbance_bound, a.c1, a.c2, a.eps1, a.eps2] {
            h.write_f64(v);
        }
        let n = &self.nominal;
        for v in [n.k1, n.k2, n.v_ref, n.theta_ref] {
            h.write_f64(v);
        }
        h.write_f64(self.horizon);
        h.write_f64(self.dt);
        h.write_u8(match self.mode {
            FilterMode::Standard => 0,
            FilterMode::Robust => 1,
        });
        h.finish()
    }
}

/// FNV-1a, 64-bit.
struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
    fn write_u8(&mut self, b: u8) {
        self.0 = (self.0 ^ b as u64).wrapping_mul(0x100_0000_01b3);
    }
    fn write_u64(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.write_u8(b);
        }
    }
    fn write_f64(&mut self, v: f64) {
        self.write_u64(v.to_bits());
    }
    fn finish(&self) -> u64 {
        self.0
    }
}

/// One controller step of the run, recorded at the step's start time.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub state: AugmentedState,
    pub u_nom: [f64; 2],
    pub u: [f64; 2],
    pub h1: f64,
    pub h2: f64,
    /// Constraint value at the nominal control.
    pub eta: f64,
    pub overridden: bool,
    /// The constraint was violated but uncontrollable at this state; the
    /// nominal control was applied unfiltered.
    pub singular: bool,
}

/// Full run log: one record per RK4 step plus the final state.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryLog {
    pub steps: Vec<StepRecord>,
    pub dt: f64,
    pub scenario_hash: u64,
}

/// Times of interest extracted from a log.
#[derive(Clone, Debug, PartialEq)]
pub struct EventReport {
    /// First step at which the filter changed the control.
    pub first_override_time: Option<f64>,
    /// First step with `h1 < 0` (clearance violated).
    pub collision_time: Option<f64>,
    /// Step after the last override, provided at least [`RESUME_GAP`]
    /// override-free seconds follow it.
    pub resume_time: Option<f64>,
    pub min_h1: f64,
    pub min_h2: f64,
    pub min_distance: f64,
}

/// Aggregate run statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub min_distance: f64,
    pub mean_distance: f64,
    pub min_h1: f64,
    pub min_h2: f64,
    /// Total time spent overriding (step count times `dt`).
    pub override_duration: f64,
    /// Largest `|u - u_nom|` over the run.
    pub max_correction: f64,
    /// Steps on which `h1` resp. `h2` fell below its exponential floor by
    /// more than [`FLOOR_TOLERANCE`].
    pub floor_violations: [usize; 2],
}

/// Obstacle velocity injected into the truth model. Implemented by any
/// `Fn(t, state) -> [dx, dy]`; the state is the full six-dimensional
/// augmented state, so models may react to the agent.
pub trait DisturbanceModel {
    fn eval(&self, t: f64, state: &[f64]) -> [f64; 2];
}

impl<F> DisturbanceModel for F
where
    F: Fn(f64, &[f64]) -> [f64; 2],
{
    fn eval(&self, t: f64, state: &[f64]) -> [f64; 2] {
        self(t, state)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SimError {
    /// Scenario fields out of range.
    Params(UnicycleError),
    /// Chain construction failed (bad gains, unsafe start).
    Setup(ChainError),
    /// Chain evaluation failed mid-run.
    Chain { t: f64, source: ChainError },
    /// Filter failed mid-run (singular states are handled, not errors).
    Filter { t: f64, source: FilterError },
    Numerics(NumericsError),
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::Params(e) => write!(f, "invalid scenario: {e}"),
            SimError::Setup(e) => write!(f, "chain setup failed: {e}"),
            SimError::Chain { t, source } => write!(f, "chain evaluation failed at t = {t}: {source}"),
            SimError::Filter { t, source } => write!(f, "filter failed at t = {t}: {source}"),
            SimError::Numerics(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for SimError {}

impl From<UnicycleError> for SimError {
    fn from(e: UnicycleError) -> Self {
        SimError::Params(e)
    }
}

impl From<NumericsError> for SimError {
    fn from(e: NumericsError) -> Self {
        SimError::Numerics(e)
    }
}

/// Per-step controller diagnostics carried through the integrator.
struct StepDiag {
    u_nom: [f64; 2],
    h1: f64,
    h2: f64,
    eta: f64,
    overridden: bool,
    singular: bool,
}

/// Run a scenario with the obstacle following its profile exactly.
pub fn run(scenario: &Scenario) -> Result<TrajectoryLog, SimError> {
    let profile = scenario.profile.clone();
    let theta0 = scenario.obstacle.theta;
    let model = move |t: f64, _state: &[f64]| profile.velocity_at(theta0, t);
    run_with_disturbance(scenario, &model)
}

/// Run a scenario with a custom obstacle-velocity model in place of the
/// profile (the profile still participates in the scenario hash). The model
/// is the truth; the filter still only assumes the configured bound.
pub fn run_with_disturbance<M>(scenario: &Scenario, model: &M) -> Result<TrajectoryLog, SimError>
where
    M: DisturbanceModel,
{
    scenario.validate()?;
    let a = &scenario.avoidance;
    let bound = match scenario.mode {
        FilterMode::Standard => DisturbanceBound::ZERO,
        FilterMode::Robust => DisturbanceBound::new(a.disturbance_bound).map_err(SimError::Setup)?,
    };
    let chain = BarrierChain::new(
        UnicycleObstacleSystem,
        DistanceBarrier {
            safety_radius: a.safety_radius,
        },
        scenario.initial_state(),
        bound,
        a.eps1,
    )
    .map_err(SimError::Setup)?
    .extend(GainPolicy::Fixed(a.c1), a.eps2)
    .map_err(SimError::Setup)?;

    let params = FilterParams {
        final_gain: a.c2,
        singular_tolerance: FilterParams::DEFAULT_SINGULAR_TOLERANCE,
    };

    let sys = UnicycleObstacleSystem;
    let dynamics = |_t: f64, x: &StateVector, u: &[f64], d: &[f64]| {
        let xs = x.as_slice();
        let mut dx = sys.drift::<f64>(xs);
        let gu = sys.control_matrix::<f64>(xs).mul_vec(u);
        let pd = sys.disturbance_matrix::<f64>(xs).mul_vec(d);
        for i in 0..dx.len() {
            dx[i] = dx[i] + gu[i] + pd[i];
        }
        StateVector::new(dx)
    };

    let controller = |t: f64, x: &StateVector| -> Result<(Vec<f64>, StepDiag), SimError> {
        let state = AugmentedState::from_slice(x.as_slice()).map_err(SimError::Params)?;
        let u_nom = scenario.nominal.control(&state);
        let h1 = chain.value(0, x).map_err(|source| SimError::Chain { t, source })?;
        let h2 = chain.value(1, x).map_err(|source| SimError::Chain { t, source })?;
        match filter::filter(x, &u_nom, &chain, &params) {
            Ok(d) => {
                let diag = StepDiag {
                    u_nom,
                    h1,
                    h2,
                    eta: d.eta,
                    overridden: d.overridden,
                    singular: false,
                };
                Ok((d.control, diag))
            }
            Err(FilterError::Singular { .. }) => {
                // Nothing the controls can do about the constraint here;
                // hold the nominal and record the condition.
                let eta = filter::eta(x, &u_nom, &chain, &params)
                    .map_err(|source| SimError::Filter { t, source })?;
                let diag = StepDiag {
                    u_nom,
                    h1,
                    h2,
                    eta,
                    overridden: false,
                    singular: true,
                };
                Ok((u_nom.to_vec(), diag))
            }
            Err(source) => Err(SimError::Filter { t, source }),
        }
    };

    let disturbance = |t: f64, x: &StateVector| model.eval(t, x.as_slice()).to_vec();

    let traj = numerics::integrate(
        dynamics,
        controller,
        disturbance,
        scenario.initial_state(),
        0.0,
        scenario.horizon,
        scenario.dt,
    )
    .map_err(|e| match e {
        IntegrateError::Controller { source, .. } => source,
        IntegrateError::Numerics(n) => SimError::Numerics(n),
    })?;

    let steps = traj
        .samples
        .into_iter()
        .map(|s| StepRecord {
            t: s.t,
            state: AugmentedState::from_slice(s.state.as_slice())
                .expect("integrator preserves the state dimension"),
            u_nom: s.diag.u_nom,
            u: [s.control[0], s.control[1]],
            h1: s.diag.h1,
            h2: s.diag.h2,
            eta: s.diag.eta,
            overridden: s.diag.overridden,
            singular: s.diag.singular,
        })
        .collect();

    Ok(TrajectoryLog {
        steps,
        dt: scenario.dt,
        scenario_hash: scenario.canonical_hash(),
    })
}

/// Scan a log for override, collision, and resume events.
pub fn detect_events(log: &TrajectoryLog) -> EventReport {
    let steps = &log.steps;
    let first_override_time = steps.iter().find(|r| r.overridden).map(|r| r.t);
    let collision_time = steps.iter().find(|r| r.h1 < 0.0).map(|r| r.t);

    let resume_time = match steps.iter().rposition(|r| r.overridden) {
        None => None,
        Some(i) if i + 1 >= steps.len() => None,
        Some(i) => {
            let candidate = steps[i + 1].t;
            let tail = steps[steps.len() - 1].t - candidate;
            // Count the trailing quiet stretch; 1e-9 absorbs timestamp
            // rounding at the grid edge.
            if tail + 1e-9 >= RESUME_GAP {
                Some(candidate)
            } else {
                None
            }
        }
    };

    let mut min_h1 = f64::INFINITY;
    let mut min_h2 = f64::INFINITY;
    let mut min_distance = f64::INFINITY;
    for r in steps {
        min_h1 = min_h1.min(r.h1);
        min_h2 = min_h2.min(r.h2);
        min_distance = min_distance.min(r.state.separation());
    }

    EventReport {
        first_override_time,
        collision_time,
        resume_time,
        min_h1,
        min_h2,
        min_distance,
    }
}

/// Aggregate statistics of a log, including exponential-floor violation
/// counts checked against the scenario's gains.
pub fn metrics(log: &TrajectoryLog, scenario: &Scenario) -> Metrics {
    let steps = &log.steps;
    let mut min_distance = f64::INFINITY;
    let mut sum_distance = 0.0;
    let mut min_h1 = f64::INFINITY;
    let mut min_h2 = f64::INFINITY;
    let mut override_steps = 0usize;
    let mut max_correction = 0.0f64;
    let mut floor_violations = [0usize; 2];

    let (t0, h1_0, h2_0) = match steps.first() {
        Some(r) => (r.t, r.h1, r.h2),
        None => (0.0, 0.0, 0.0),
    };

    for r in steps {
        let d = r.state.separation();
        min_distance = min_distance.min(d);
        sum_distance += d;
        min_h1 = min_h1.min(r.h1);
        min_h2 = min_h2.min(r.h2);
        if r.overridden {
            override_steps += 1;
        }
        let du = [r.u[0] - r.u_nom[0], r.u[1] - r.u_nom[1]];
        max_correction = max_correction.max(numerics::math::sqrt(du[0] * du[0] + du[1] * du[1]));

        let floors = [
            crate::chain::exponential_floor(h1_0, scenario.avoidance.c1, r.t, t0),
            crate::chain::exponential_floor(h2_0, scenario.avoidance.c2, r.t, t0),
        ];
        if r.h1 < floors[0] - FLOOR_TOLERANCE {
            floor_violations[0] += 1;
        }
        if r.h2 < floors[1] - FLOOR_TOLERANCE {
            floor_violations[1] += 1;
        }
    }

    let mean_distance = if steps.is_empty() {
        0.0
    } else {
        sum_distance / steps.len() as f64
    };

    Metrics {
        min_distance,
        mean_distance,
        min_h1,
        min_h2,
        override_duration: override_steps as f64 * log.dt,
        max_correction,
        floor_violations,
    }
}
