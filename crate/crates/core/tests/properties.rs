//! Property tests for the chain and filter invariants.

use proptest::prelude::*;

use srcbf_core::chain::{
    delta, exponential_floor, min_gain, BarrierChain, ControlAffine, DisturbanceBound, GainPolicy,
};
use srcbf_core::filter::{self, FilterParams};
use srcbf_core::numerics::{Covector, Matrix, Real, StateField, StateVector};
use srcbf_core::unicycle::{DistanceBarrier, UnicycleObstacleSystem};

/// Minimal relative-degree-two system: position/velocity with force input
/// and a matched disturbance.
#[derive(Clone, Copy, Debug)]
struct DoubleIntegrator;

impl ControlAffine for DoubleIntegrator {
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn disturbance_dim(&self) -> usize {
        1
    }
    fn drift<S: Real>(&self, x: &[S]) -> Vec<S> {
        vec![x[1], S::zero()]
    }
    fn control_matrix<S: Real>(&self, _x: &[S]) -> Matrix<S> {
        let mut g = Matrix::zeros(2, 1);
        g.set(1, 0, S::one());
        g
    }
    fn disturbance_matrix<S: Real>(&self, _x: &[S]) -> Matrix<S> {
        let mut p = Matrix::zeros(2, 1);
        p.set(1, 0, S::one());
        p
    }
}

/// Stay inside the unit interval: h = 1 - q^2.
#[derive(Clone, Copy, Debug)]
struct PositionBarrier;

impl StateField for PositionBarrier {
    fn eval<S: Real>(&self, x: &[S]) -> S {
        S::one() - x[0] * x[0]
    }
}

fn integrator_chain(bound: f64) -> BarrierChain<PositionBarrier, DoubleIntegrator> {
    BarrierChain::new(
        DoubleIntegrator,
        PositionBarrier,
        StateVector::new(vec![0.0, 0.0]),
        DisturbanceBound::new(bound).unwrap(),
        0.01,
    )
    .unwrap()
    .extend(GainPolicy::Fixed(5.0), 0.01)
    .unwrap()
}

proptest! {
    /// delta is exactly sqrt(eps + |lp|^2): it dominates both the smoothing
    /// floor and the gradient norm it replaces.
    #[test]
    fn delta_dominates_norm_and_floor(
        entries in prop::collection::vec(-100.0f64..100.0, 1..6),
        eps in 1e-9f64..10.0,
    ) {
        let lp = Covector::new(entries);
        let d = delta(&lp, eps).unwrap();
        prop_assert!(d >= eps.sqrt());
        prop_assert!(d >= lp.norm());
        let recon = eps + lp.norm_sq();
        prop_assert!((d * d - recon).abs() <= 1e-12 * recon.max(1.0));
    }

    /// Any gain strictly above the bound makes the next level positive at
    /// the anchor state; the bound itself is the exact break-even point.
    #[test]
    fn gains_above_bound_give_positive_next_level(
        h_prev in 1e-3f64..1e3,
        lf_prev in -100.0f64..100.0,
        delta_prev in 0.0f64..100.0,
        bound_m in 0.0f64..5.0,
        slack in 1e-9f64..10.0,
    ) {
        let required = min_gain(
            h_prev,
            lf_prev,
            delta_prev,
            DisturbanceBound::new(bound_m).unwrap(),
        )
        .unwrap();
        let gain = required + slack;
        let next = gain * h_prev + lf_prev - bound_m * delta_prev;
        prop_assert!(next > 0.0, "next level {next} with gain {gain}, bound {required}");
        // At most the break-even value when at or below the bound.
        if required > 0.0 {
            let at_bound = required * h_prev + lf_prev - bound_m * delta_prev;
            prop_assert!(at_bound.abs() <= 1e-9 * (bound_m * delta_prev).max(1.0));
        }
    }

    /// The default automatic gain policy always produces a chain whose new
    /// top level is positive at the initial state.
    #[test]
    fn auto_policy_keeps_levels_positive(
        q in -0.99f64..0.99,
        qd in -5.0f64..5.0,
        bound_m in 0.0f64..3.0,
        eps in 1e-4f64..0.5,
    ) {
        let chain = BarrierChain::new(
            DoubleIntegrator,
            PositionBarrier,
            StateVector::new(vec![q, qd]),
            DisturbanceBound::new(bound_m).unwrap(),
            eps,
        )
        .unwrap()
        .extend(GainPolicy::default(), eps)
        .unwrap();
        let top = chain.value(1, chain.initial_state()).unwrap();
        prop_assert!(top > 0.0, "top level {top} at ({q}, {qd})");
    }

    /// A larger disturbance bound never makes the filter less conservative:
    /// eta is non-increasing in M at matched (state, control) pairs. For
    /// this system the dependence is affine, so the ordering is strict.
    #[test]
    fn eta_non_increasing_in_bound(
        m1 in 0.0f64..2.0,
        gap in 0.01f64..2.0,
        q in -3.0f64..3.0,
        qd in -3.0f64..3.0,
        u in -5.0f64..5.0,
    ) {
        let m2 = m1 + gap;
        let params = FilterParams {
            final_gain: 1.0,
            singular_tolerance: FilterParams::DEFAULT_SINGULAR_TOLERANCE,
        };
        let x = StateVector::new(vec![q, qd]);
        let lo = filter::eta(&x, &[u], &integrator_chain(m1), &params).unwrap();
        let hi = filter::eta(&x, &[u], &integrator_chain(m2), &params).unwrap();
        prop_assert!(
            hi <= lo + 1e-12 * lo.abs().max(1.0),
            "eta grew with the bound: {lo} -> {hi}"
        );
    }

    /// The closed-form override is the projection onto the feasible
    /// half-space: no feasible control is closer to the nominal.
    #[test]
    fn override_is_minimal_among_feasible_controls(
        x in -6.0f64..6.0,
        y in -6.0f64..6.0,
        v in -3.0f64..3.0,
        theta in -3.0f64..3.0,
        u0v in -3.0f64..3.0,
        u0t in -3.0f64..3.0,
        candidates in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 20),
    ) {
        // Keep the state well-posed: obstacle fixed at the origin, agent
        // kept off it.
        prop_assume!(x * x + y * y > 0.25);
        let chain = BarrierChain::new(
            UnicycleObstacleSystem,
            DistanceBarrier { safety_radius: 2.0 },
            StateVector::new(vec![0.0, 0.0, 0.0, 0.0, 2.0, -3.0]),
            DisturbanceBound::new(1.0).unwrap(),
            0.01,
        )
        .unwrap()
        .extend(GainPolicy::Fixed(3.0), 0.01)
        .unwrap();
        let params = FilterParams {
            final_gain: 1.0,
            singular_tolerance: FilterParams::DEFAULT_SINGULAR_TOLERANCE,
        };

        let state = StateVector::new(vec![x, y, v, theta, 0.0, 0.0]);
        let u0 = [u0v, u0t];
        let decision = match filter::filter(&state, &u0, &chain, &params) {
            Ok(d) => d,
            // Singular states carry no minimality claim.
            Err(_) => return Ok(()),
        };
        if !decision.overridden {
            return Ok(());
        }
        let dist = |u: &[f64]| {
            (u[0] - u0[0]).powi(2) + (u[1] - u0[1]).powi(2)
        };
        let best = dist(&decision.control);
        for (a, b) in candidates {
            let candidate = [a, b];
            let margin = filter::constraint_margin(&state, &candidate, &chain, &params).unwrap();
            if margin >= 0.0 {
                prop_assert!(
                    dist(&candidate) + 1e-9 >= best,
                    "feasible {candidate:?} beats the projection"
                );
            }
        }
    }

    /// Exponential floor: anchored at h0, nonnegative, monotone
    /// non-increasing in elapsed time. Strict positivity and strict
    /// decrease are only guaranteed while the exponent keeps the value
    /// out of the subnormal range; past that the floor underflows to
    /// zero, which is still a valid (conservative) lower bound.
    #[test]
    fn floor_behaves(
        h0 in 1e-6f64..1e6,
        gain in 1e-3f64..10.0,
        t1 in 0.0f64..100.0,
        dt_gap in 1e-6f64..100.0,
    ) {
        let t0 = 2.0;
        prop_assert_eq!(exponential_floor(h0, gain, t0, t0), h0);
        let a = exponential_floor(h0, gain, t0 + t1, t0);
        let b = exponential_floor(h0, gain, t0 + t1 + dt_gap, t0);
        prop_assert!(a >= 0.0);
        prop_assert!(b <= a);
        if gain * (t1 + dt_gap) < 600.0 {
            prop_assert!(a > 0.0);
            prop_assert!(b < a);
        }
    }
}
