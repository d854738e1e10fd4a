//! Deterministic numerics: nested forward-mode AD, gradients of state
//! fields, a fixed-step classical Runge-Kutta integrator, and a closed-loop
//! driver that holds each control over its step (zero-order hold) while the
//! disturbance acts continuously.

mod scalar;

pub use scalar::{Dual, Real, D1, D2, D3, D4, D5, D6, D7, D8, MAX_NESTING_DEPTH};

pub(crate) use scalar::math;

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Column state vector. Dimension is fixed by the system using it; consumers
/// check dimensions at their boundaries.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(entries: Vec<f64>) -> Self {
        StateVector(entries)
    }

    pub fn zeros(dim: usize) -> Self {
        StateVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Entry-wise `self + scale * other`. Panics on dimension mismatch;
    /// integrator-internal use only keeps dimensions equal by construction.
    pub fn add_scaled(&self, scale: f64, other: &StateVector) -> StateVector {
        debug_assert_eq!(self.dim(), other.dim());
        StateVector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + scale * b)
                .collect(),
        )
    }
}

impl core::ops::Index<usize> for StateVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<Vec<f64>> for StateVector {
    fn from(entries: Vec<f64>) -> Self {
        StateVector(entries)
    }
}

/// Row covector of partial derivatives (or any linear functional's
/// coefficients, e.g. a Lie derivative with respect to each control).
#[derive(Clone, Debug, PartialEq)]
pub struct Covector(Vec<f64>);

impl Covector {
    pub fn new(entries: Vec<f64>) -> Self {
        Covector(entries)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.norm_sq())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Natural pairing with a vector of matching dimension.
    pub fn pair(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(self.dim(), v.len());
        self.0.iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

impl core::ops::Index<usize> for Covector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<Vec<f64>> for Covector {
    fn from(entries: Vec<f64>) -> Self {
        Covector(entries)
    }
}

/// Dense row-major matrix over any scalar rung. Only what the control-affine
/// plumbing needs: left multiplication by a row and right by a column.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Real> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: S) {
        self.data[r * self.cols + c] = value;
    }

    /// `row * M`: returns a row of length `cols`.
    pub fn left_mul(&self, row: &[S]) -> Vec<S> {
        debug_assert_eq!(row.len(), self.rows);
        (0..self.cols)
            .map(|c| {
                let mut acc = S::zero();
                for (r, x) in row.iter().enumerate() {
                    acc = acc + *x * self.get(r, c);
                }
                acc
            })
            .collect()
    }

    /// `M * col`: returns a column of length `rows`.
    pub fn mul_vec(&self, col: &[S]) -> Vec<S> {
        debug_assert_eq!(col.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                let mut acc = S::zero();
                for (c, x) in col.iter().enumerate() {
                    acc = acc + self.get(r, c) * *x;
                }
                acc
            })
            .collect()
    }
}

/// A scalar function of the state, evaluable at any dual nesting depth so it
/// can be differentiated (and re-differentiated) by forward passes.
///
/// Implementations must be pure: same input, same output, no interior state.
pub trait StateField {
    fn eval<S: Real>(&self, x: &[S]) -> S;
}

impl<T: StateField + ?Sized> StateField for &T {
    fn eval<S: Real>(&self, x: &[S]) -> S {
        (**self).eval(x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NumericsError {
    /// A forward pass produced a non-finite derivative while seeding the
    /// given state entry (e.g. sqrt of a negative intermediate).
    NonFiniteGradient { entry: usize },
    /// The state derivative turned non-finite at time `t`.
    NonFiniteDerivative { t: f64 },
    /// The integrated state turned non-finite at time `t`.
    NonFiniteState { t: f64 },
    /// Bad time grid: requires `dt > 0` and `tf >= t0`.
    BadTimeGrid { t0: f64, tf: f64, dt: f64 },
}

impl fmt::Display for NumericsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NumericsError::NonFiniteGradient { entry } => {
                write!(f, "non-finite partial derivative for state entry {entry}")
            }
            NumericsError::NonFiniteDerivative { t } => {
                write!(f, "non-finite state derivative at t = {t}")
            }
            NumericsError::NonFiniteState { t } => {
                write!(f, "non-finite state at t = {t}")
            }
            NumericsError::BadTimeGrid { t0, tf, dt } => {
                write!(f, "bad time grid: t0 = {t0}, tf = {tf}, dt = {dt}")
            }
        }
    }
}

impl core::error::Error for NumericsError {}

/// Gradient helper usable at any rung: partials of `field` at `x`, computed
/// with one lifted forward pass per entry. No finiteness check; hot paths
/// (chain evaluation) call this and boundaries validate results.
pub(crate) fn gradient_passes<S: Real, F: StateField>(field: &F, x: &[S]) -> Vec<S> {
    let mut lifted: Vec<S::Lifted> = x.iter().map(Real::lift).collect();
    (0..x.len())
        .map(|j| {
            lifted[j] = x[j].lift_seeded();
            let out = S::deriv_part(field.eval(&lifted));
            lifted[j] = x[j].lift();
            out
        })
        .collect()
}

/// Gradient of a scalar field at a plain state, one forward pass per entry.
///
/// Fails with the offending entry index if any pass produces a non-finite
/// partial (the detection point for domain violations such as sqrt of a
/// negative intermediate).
pub fn gradient<F: StateField>(field: &F, x: &StateVector) -> Result<Covector, NumericsError> {
    let parts = gradient_passes::<f64, F>(field, x.as_slice());
    for (entry, p) in parts.iter().enumerate() {
        if !p.is_finite() {
            return Err(NumericsError::NonFiniteGradient { entry });
        }
    }
    Ok(Covector(parts))
}

/// One classical fourth-order Runge-Kutta step from `t` over `dt`.
///
/// `dynamics(t, x)` is the full state derivative; it is evaluated at the
/// usual four stages, so time-varying terms are sampled mid-step as well.
pub fn rk4_step<F>(dynamics: F, t: f64, x: &StateVector, dt: f64) -> Result<StateVector, NumericsError>
where
    F: Fn(f64, &StateVector) -> StateVector,
{
    if !(dt > 0.0) {
        return Err(NumericsError::BadTimeGrid { t0: t, tf: t, dt });
    }
    let half = 0.5 * dt;

    let k1 = dynamics(t, x);
    let k2 = dynamics(t + half, &x.add_scaled(half, &k1));
    let k3 = dynamics(t + half, &x.add_scaled(half, &k2));
    let k4 = dynamics(t + dt, &x.add_scaled(dt, &k3));

    for k in [&k1, &k2, &k3, &k4] {
        if !k.is_finite() {
            return Err(NumericsError::NonFiniteDerivative { t });
        }
    }

    let sixth = dt / 6.0;
    let mut next = x.add_scaled(sixth, &k1);
    next = next.add_scaled(2.0 * sixth, &k2);
    next = next.add_scaled(2.0 * sixth, &k3);
    next = next.add_scaled(sixth, &k4);

    if !next.is_finite() {
        return Err(NumericsError::NonFiniteState { t });
    }
    Ok(next)
}

/// One logged sample of a closed-loop run. `control` is the input held over
/// `[t, t + dt)`; the final sample's control is computed but never applied.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample<D> {
    pub t: f64,
    pub state: StateVector,
    pub control: Vec<f64>,
    pub diag: D,
}

/// Uniformly sampled closed-loop trajectory with controller diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<D> {
    pub samples: Vec<Sample<D>>,
    pub dt: f64,
}

/// Integration failure, wrapping controller errors of type `E`.
#[derive(Clone, Debug, PartialEq)]
pub enum IntegrateError<E> {
    Controller { t: f64, source: E },
    Numerics(NumericsError),
}

impl<E: fmt::Display> fmt::Display for IntegrateError<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntegrateError::Controller { t, source } => {
                write!(f, "controller failed at t = {t}: {source}")
            }
            IntegrateError::Numerics(e) => write!(f, "{e}"),
        }
    }
}

impl<E: fmt::Display + fmt::Debug> core::error::Error for IntegrateError<E> {}

/// Number of RK4 steps covering `[t0, tf]` with spacing `dt`: the sample
/// count is this plus one. Robust to `tf - t0` being a near-exact multiple
/// of `dt` in floating point.
pub fn step_count(t0: f64, tf: f64, dt: f64) -> usize {
    let raw = (tf - t0) / dt;
    let steps = math::ceil(raw - 1e-9);
    if steps < 1.0 {
        1
    } else {
        steps as usize
    }
}

/// Drive a disturbed control-affine closed loop from `t0` to `tf` with a
/// fixed step `dt`.
///
/// Per step: the controller picks `(u, diagnostics)` from `(t_k, x_k)` and
/// `u` is held constant across the RK4 stages, while `disturbance(t, x)` is
/// re-evaluated at every stage. Timestamps are `t0 + k * dt` (never
/// accumulated), so runs are bitwise reproducible. The log holds
/// `step_count + 1` samples; the final time lands within `dt` of `tf`.
pub fn integrate<D, E, Dy, C, W>(
    dynamics: Dy,
    mut controller: C,
    disturbance: W,
    x0: StateVector,
    t0: f64,
    tf: f64,
    dt: f64,
) -> Result<Trajectory<D>, IntegrateError<E>>
where
    Dy: Fn(f64, &StateVector, &[f64], &[f64]) -> StateVector,
    C: FnMut(f64, &StateVector) -> Result<(Vec<f64>, D), E>,
    W: Fn(f64, &StateVector) -> Vec<f64>,
{
    if !(dt > 0.0) || !(tf >= t0) || !t0.is_finite() || !tf.is_finite() {
        return Err(IntegrateError::Numerics(NumericsError::BadTimeGrid { t0, tf, dt }));
    }

    let steps = step_count(t0, tf, dt);
    let mut samples = Vec::with_capacity(steps + 1);
    let mut state = x0;

    for k in 0..=steps {
        let t = t0 + (k as f64) * dt;
        let (u, diag) =
            controller(t, &state).map_err(|source| IntegrateError::Controller { t, source })?;

        samples.push(Sample {
            t,
            state: state.clone(),
            control: u.clone(),
            diag,
        });

        if k == steps {
            break;
        }

        let closed_loop =
            |tau: f64, x: &StateVector| dynamics(tau, x, &u, &disturbance(tau, x));
        state = rk4_step(closed_loop, t, &state, dt).map_err(IntegrateError::Numerics)?;
    }

    Ok(Trajectory { samples, dt })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic;
    impl StateField for Quadratic {
        fn eval<S: Real>(&self, x: &[S]) -> S {
            // x0^2 + 3 x0 x1
            x[0] * x[0] + S::constant(3.0) * x[0] * x[1]
        }
    }

    struct BadRoot;
    impl StateField for BadRoot {
        fn eval<S: Real>(&self, x: &[S]) -> S {
            x[0].sqrt()
        }
    }

    struct ConstantField;
    impl StateField for ConstantField {
        fn eval<S: Real>(&self, _x: &[S]) -> S {
            S::constant(7.0)
        }
    }

    #[test]
    fn gradient_of_quadratic() {
        let g = gradient(&Quadratic, &StateVector::new(vec![2.0, 5.0])).unwrap();
        assert_eq!(g.as_slice(), &[19.0, 6.0]);
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = gradient(&ConstantField, &StateVector::new(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(g.as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn gradient_domain_error_names_entry() {
        let err = gradient(&BadRoot, &StateVector::new(vec![-1.0])).unwrap_err();
        assert_eq!(err, NumericsError::NonFiniteGradient { entry: 0 });
    }

    #[test]
    fn rk4_zero_dynamics_is_identity() {
        let x = StateVector::new(vec![1.0, -2.0]);
        let next = rk4_step(|_, s| StateVector::zeros(s.dim()), 0.0, &x, 0.1).unwrap();
        assert_eq!(next, x);
    }

    #[test]
    fn rk4_exponential_one_step() {
        // x' = x from 1.0 over dt = 0.1: matches e^0.1 to the RK4 local
        // truncation order, i.e. within ~1e-7.
        let x = StateVector::new(vec![1.0]);
        let next = rk4_step(|_, s| s.clone(), 0.0, &x, 0.1).unwrap();
        let exact = (0.1f64).exp();
        assert!((next[0] - exact).abs() < 2e-7, "{} vs {exact}", next[0]);
        assert!((next[0] - 1.1051708333333332).abs() < 1e-12);
    }

    #[test]
    fn rk4_rejects_nonpositive_dt() {
        let x = StateVector::new(vec![1.0]);
        assert!(rk4_step(|_, s| s.clone(), 0.0, &x, 0.0).is_err());
    }

    #[test]
    fn rk4_flags_nonfinite_derivative_with_time() {
        let x = StateVector::new(vec![1.0]);
        let err = rk4_step(|_, _| StateVector::new(vec![f64::NAN]), 3.25, &x, 0.01).unwrap_err();
        assert_eq!(err, NumericsError::NonFiniteDerivative { t: 3.25 });
    }

    #[test]
    fn integrate_sample_count_and_timestamps() {
        let traj = integrate(
            |_, _, _, _| StateVector::zeros(1),
            |_, _| Ok::<_, NumericsError>((vec![], ())),
            |_, _| vec![],
            StateVector::zeros(1),
            0.0,
            10.0,
            1e-3,
        )
        .unwrap();
        assert_eq!(traj.samples.len(), 10_001);
        assert_eq!(traj.samples[0].t, 0.0);
        assert_eq!(traj.samples[10_000].t, 10.0);
        // Uniform spacing, computed from the index rather than accumulated.
        assert_eq!(traj.samples[5_000].t, 5.0);
    }

    #[test]
    fn integrate_awkward_grid_still_covers_tf() {
        let traj = integrate(
            |_, _, _, _| StateVector::zeros(1),
            |_, _| Ok::<_, NumericsError>((vec![], ())),
            |_, _| vec![],
            StateVector::zeros(1),
            0.0,
            1.0,
            0.1,
        )
        .unwrap();
        // 1.0 / 0.1 is not exact in binary; the count must still be 11.
        assert_eq!(traj.samples.len(), 11);
        let last = traj.samples.last().unwrap().t;
        assert!(last >= 1.0 - 0.1 && last < 1.0 + 0.1, "last t = {last}");
    }

    #[test]
    fn integrate_convergence_order_on_exponential() {
        // Global RK4 order on x' = x over [0, 1]: halving dt divides the
        // error by ~16, so log2(ratio) sits in [3.5, 4.5].
        let run = |dt: f64| {
            integrate(
                |_, x: &StateVector, _: &[f64], _: &[f64]| x.clone(),
                |_, _| Ok::<_, NumericsError>((vec![], ())),
                |_, _| vec![],
                StateVector::new(vec![1.0]),
                0.0,
                1.0,
                dt,
            )
            .unwrap()
            .samples
            .last()
            .unwrap()
            .state[0]
        };
        let exact = 1.0f64.exp();
        let e1 = (run(0.01) - exact).abs();
        let e2 = (run(0.005) - exact).abs();
        let order = (e1 / e2).log2();
        assert!((3.5..=4.5).contains(&order), "observed order {order}");
    }

    #[test]
    fn integrate_is_deterministic() {
        let run = || {
            integrate(
                |t: f64, x: &StateVector, u: &[f64], d: &[f64]| {
                    StateVector::new(vec![x[0].sin() * t.cos() + u[0] + d[0]])
                },
                |_, x: &StateVector| Ok::<_, NumericsError>((vec![-0.3 * x[0]], ())),
                |t, _| vec![0.1 * (2.0 * t).cos()],
                StateVector::new(vec![0.7]),
                0.0,
                2.0,
                1e-3,
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        for (sa, sb) in a.samples.iter().zip(&b.samples) {
            assert_eq!(sa.state[0].to_bits(), sb.state[0].to_bits());
        }
    }

    #[test]
    fn integrate_controller_error_carries_time() {
        let err = integrate(
            |_, _, _: &[f64], _: &[f64]| StateVector::zeros(1),
            |t, _| {
                if t >= 0.5 {
                    Err("boom")
                } else {
                    Ok((vec![], ()))
                }
            },
            |_, _| vec![],
            StateVector::zeros(1),
            0.0,
            1.0,
            0.25,
        )
        .unwrap_err();
        match err {
            IntegrateError::Controller { t, source } => {
                assert_eq!(t, 0.5);
                assert_eq!(source, "boom");
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn step_count_handles_inexact_division() {
        assert_eq!(step_count(0.0, 10.0, 1e-3), 10_000);
        assert_eq!(step_count(0.0, 1.0, 0.1), 10);
        assert_eq!(step_count(0.0, 0.05, 0.1), 1);
        assert_eq!(step_count(0.0, 1.05, 0.1), 11);
    }
}
