//! Minimally invasive safety filter.
//!
//! The filter solves, in closed form, the pointwise program
//!
//! ```text
//! minimize   ||u - u0||^2
//! subject to L_f h_n + L_g h_n u - M * delta_n + c_n * h_n >= 0
//! ```
//!
//! over the chain's top level `h_n`. With `eta(x, u0)` the constraint value
//! at the nominal control, the unique optimum is `u0` itself when
//! `eta >= 0`, and otherwise the one-constraint projection
//! `u0 - lg^T * eta / ||lg||^2`. The constraint turns uncontrollable when
//! `||L_g h_n||` vanishes; below `singular_tolerance` (on the squared norm)
//! the filter reports that instead of dividing by it.
//!
//! [`qp_oracle`] minimizes the same objective by brute-force grid search and
//! exists to cross-check the closed form; keep both routes intact.

use alloc::vec::Vec;
use core::fmt;

use crate::chain::{delta, lie_derivatives, BarrierChain, ChainError, ControlAffine};
use crate::numerics::{StateField, StateVector};

/// Final-level gain and singularity guard for the filter.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct FilterParams {
    /// Decay gain `c_n > 0` on the top barrier level.
    pub final_gain: f64,
    /// Threshold on `||L_g h_n||^2` below which an active constraint is
    /// reported as singular rather than solved.
    pub singular_tolerance: f64,
}

impl FilterParams {
    pub const DEFAULT_SINGULAR_TOLERANCE: f64 = 1e-9;

    pub fn new(final_gain: f64) -> Result<Self, FilterError> {
        if !(final_gain > 0.0) || !final_gain.is_finite() {
            return Err(FilterError::BadGain { gain: final_gain });
        }
        Ok(FilterParams {
            final_gain,
            singular_tolerance: Self::DEFAULT_SINGULAR_TOLERANCE,
        })
    }
}

/// Filter output: the safe control plus the diagnostics callers log.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterDecision {
    pub control: Vec<f64>,
    /// Constraint value at the nominal control.
    pub eta: f64,
    /// True exactly when `eta < 0` (the nominal control was unsafe).
    pub overridden: bool,
    /// Constraint value at the returned control: `eta` on passthrough,
    /// zero (to rounding) after an override.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FilterError {
    /// Active constraint with `||L_g h_n||^2` below tolerance: no control
    /// authority over the barrier at this state.
    Singular { lg_norm_sq: f64 },
    /// `final_gain` must be positive and finite.
    BadGain { gain: f64 },
    /// Control vector length does not match the system.
    ControlDimension { expected: usize, got: usize },
    /// Oracle grid must have at least 100 points per axis and a positive
    /// radius.
    BadOracleGrid { search_radius: f64, grid_steps: usize },
    /// No feasible point on the oracle grid. `analytic_feasible`
    /// distinguishes grid coarseness (the closed-form solution exists and
    /// satisfies the constraint) from genuine infeasibility (singular
    /// constraint direction).
    Infeasible { analytic_feasible: bool },
    Chain(ChainError),
}

impl fmt::Display for FilterError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterError::Singular { lg_norm_sq } => {
                write!(f, "singular constraint: ||L_g h||^2 = {lg_norm_sq} below tolerance")
            }
            FilterError::BadGain { gain } => {
                write!(f, "filter gain must be positive and finite, got {gain}")
            }
            FilterError::ControlDimension { expected, got } => {
                write!(f, "control dimension mismatch: expected {expected}, got {got}")
            }
            FilterError::BadOracleGrid {
                search_radius,
                grid_steps,
            } => {
                write!(
                    f,
                    "oracle grid needs radius > 0 and >= 100 steps per axis, got {search_radius} and {grid_steps}"
                )
            }
            FilterError::Infeasible { analytic_feasible } => {
                if *analytic_feasible {
                    write!(f, "no feasible grid point (grid too coarse or radius too small; the analytic solution is feasible)")
                } else {
                    write!(f, "no feasible grid point and the constraint is singular")
                }
            }
            FilterError::Chain(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for FilterError {}

impl From<ChainError> for FilterError {
    fn from(e: ChainError) -> Self {
        FilterError::Chain(e)
    }
}

/// Top-level quantities the constraint is affine in: value, Lie derivatives,
/// and the robust margin.
struct TopTerms {
    h: f64,
    lf: f64,
    lg: Vec<f64>,
    /// `M * delta_n`, zero when the chain's bound is zero.
    robust_margin: f64,
}

fn top_terms<H, Sys>(
    chain: &BarrierChain<H, Sys>,
    x: &StateVector,
) -> Result<TopTerms, FilterError>
where
    H: StateField,
    Sys: ControlAffine,
{
    let top = chain.level_count() - 1;
    let h = chain.value(top, x)?;
    let lie = lie_derivatives(&chain.top_field(), x, chain.system())?;
    let m = chain.bound().value();
    let robust_margin = if m > 0.0 {
        m * delta(&lie.lp, chain.eps(top))?
    } else {
        0.0
    };
    Ok(TopTerms {
        h,
        lf: lie.lf,
        lg: lie.lg.as_slice().to_vec(),
        robust_margin,
    })
}

fn check_control_dim<Sys: ControlAffine>(system: &Sys, u: &[f64]) -> Result<(), FilterError> {
    if u.len() != system.control_dim() {
        return Err(FilterError::ControlDimension {
            expected: system.control_dim(),
            got: u.len(),
        });
    }
    Ok(())
}

/// Constraint value at an arbitrary control:
/// `L_f h_n + L_g h_n u - M delta_n + c_n h_n`.
pub fn constraint_margin<H, Sys>(
    x: &StateVector,
    u: &[f64],
    chain: &BarrierChain<H, Sys>,
    params: &FilterParams,
) -> Result<f64, FilterError>
where
    H: StateField,
    Sys: ControlAffine,
{
    check_control_dim(chain.system(), u)?;
    let t = top_terms(chain, x)?;
    let lg_u: f64 = t.lg.iter().zip(u).map(|(a, b)| a * b).sum();
    Ok(t.lf + lg_u - t.robust_margin + params.final_gain * t.h)
}

/// Constraint value at the nominal control; the filter passes `u0` through
/// exactly when this is nonnegative.
pub fn eta<H, Sys>(
    x: &StateVector,
    u0: &[f64],
    chain: &BarrierChain<H, Sys>,
    params: &FilterParams,
) -> Result<f64, FilterError>
where
    H: StateField,
    Sys: ControlAffine,
{
    constraint_margin(x, u0, chain, params)
}

/// Filter the nominal control through the safety constraint (closed-form
/// QP solution).
pub fn filter<H, Sys>(
    x: &StateVector,
    u0: &[f64],
    chain: &BarrierChain<H, Sys>,
    params: &FilterParams,
) -> Result<FilterDecision, FilterError>
where
    H: StateField,
    Sys: ControlAffine,
{
    check_control_dim(chain.system(), u0)?;
    let t = top_terms(chain, x)?;
    let lg_u0: f64 = t.lg.iter().zip(u0).map(|(a, b)| a * b).sum();
    let eta = t.lf + lg_u0 - t.robust_margin + params.final_gain * t.h;

    if eta >= 0.0 {
        return Ok(FilterDecision {
            control: u0.to_vec(),
            eta,
            overridden: false,
            margin: eta,
        });
    }

    let lg_norm_sq: f64 = t.lg.iter().map(|v| v * v).sum();
    if lg_norm_sq < params.singular_tolerance {
        return Err(FilterError::Singular { lg_norm_sq });
    }

    let scale = eta / lg_norm_sq;
    let control: Vec<f64> = u0
        .iter()
        .zip(&t.lg)
        .map(|(u, lg)| u - lg * scale)
        .collect();
    let lg_u: f64 = t.lg.iter().zip(&control).map(|(a, b)| a * b).sum();
    let margin = t.lf + lg_u - t.robust_margin + params.final_gain * t.h;

    Ok(FilterDecision {
        control,
        eta,
        overridden: true,
        margin,
    })
}

/// Brute-force reference for [`filter`]: search the axis-aligned box
/// `u0 +/- search_radius` on a uniform grid (`grid_steps` points per axis,
/// at least 100) for the feasible point closest to `u0`.
///
/// Exploits that the constraint is affine in `u`, so one evaluation of the
/// top-level terms serves the whole grid. Returns the passthrough `u0`
/// immediately when it is already feasible.
pub fn qp_oracle<H, Sys>(
    x: &StateVector,
    u0: &[f64],
    chain: &BarrierChain<H, Sys>,
    params: &FilterParams,
    search_radius: f64,
    grid_steps: usize,
) -> Result<Vec<f64>, FilterError>
where
    H: StateField,
    Sys: ControlAffine,
{
    if !(search_radius > 0.0) || grid_steps < 100 {
        return Err(FilterError::BadOracleGrid {
            search_radius,
            grid_steps,
        });
    }
    check_control_dim(chain.system(), u0)?;

    let t = top_terms(chain, x)?;
    let lg_u0: f64 = t.lg.iter().zip(u0).map(|(a, b)| a * b).sum();
    let eta0 = t.lf + lg_u0 - t.robust_margin + params.final_gain * t.h;
    if eta0 >= 0.0 {
        return Ok(u0.to_vec());
    }

    let dims = u0.len();
    let spacing = 2.0 * search_radius / (grid_steps - 1) as f64;
    let mut indices = alloc::vec![0usize; dims];
    let mut offset = alloc::vec![0.0f64; dims];
    let mut best: Option<(f64, Vec<f64>)> = None;

    loop {
        for (o, &i) in offset.iter_mut().zip(indices.iter()) {
            *o = -search_radius + spacing * i as f64;
        }
        // margin(u0 + v) = eta0 + lg . v  (affine constraint)
        let lg_v: f64 = t.lg.iter().zip(&offset).map(|(a, b)| a * b).sum();
        if eta0 + lg_v >= 0.0 {
            let dist_sq: f64 = offset.iter().map(|v| v * v).sum();
            if best.as_ref().is_none_or(|(d, _)| dist_sq < *d) {
                let candidate = u0.iter().zip(&offset).map(|(u, v)| u + v).collect();
                best = Some((dist_sq, candidate));
            }
        }

        // Odometer increment over the grid.
        let mut axis = 0;
        loop {
            if axis == dims {
                match best {
                    Some((_, u)) => return Ok(u),
                    None => {
                        let lg_norm_sq: f64 = t.lg.iter().map(|v| v * v).sum();
                        return Err(FilterError::Infeasible {
                            analytic_feasible: lg_norm_sq >= params.singular_tolerance,
                        });
                    }
                }
            }
            indices[axis] += 1;
            if indices[axis] < grid_steps {
                break;
            }
            indices[axis] = 0;
            axis += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::DisturbanceBound;
    use crate::numerics::{Matrix, Real};
    use alloc::vec;

    /// One state, two controls: x' = g u with g = (1, 0). The barrier
    /// x + 5 then has L_g h = (1, 0), reproducing textbook filter geometry.
    struct Channel {
        g: [f64; 2],
    }

    impl ControlAffine for Channel {
        fn state_dim(&self) -> usize {
            1
        }
        fn control_dim(&self) -> usize {
            2
        }
        fn disturbance_dim(&self) -> usize {
            1
        }
        fn drift<S: Real>(&self, _x: &[S]) -> Vec<S> {
            vec![S::zero()]
        }
        fn control_matrix<S: Real>(&self, _x: &[S]) -> Matrix<S> {
            let mut g = Matrix::zeros(1, 2);
            g.set(0, 0, S::constant(self.g[0]));
            g.set(0, 1, S::constant(self.g[1]));
            g
        }
        fn disturbance_matrix<S: Real>(&self, _x: &[S]) -> Matrix<S> {
            Matrix::zeros(1, 1)
        }
    }

    struct Shifted;
    impl StateField for Shifted {
        fn eval<S: Real>(&self, x: &[S]) -> S {
            x[0] + S::constant(5.0)
        }
    }

    fn channel_chain(g: [f64; 2]) -> BarrierChain<Shifted, Channel> {
        BarrierChain::new(
            Channel { g },
            Shifted,
            StateVector::new(vec![0.0]),
            DisturbanceBound::ZERO,
            0.01,
        )
        .unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn passthrough_when_constraint_holds() {
        let chain = channel_chain([1.0, 0.0]);
        let params = FilterParams::new(1.0).unwrap();
        let x = StateVector::new(vec![0.0]); // h = 5, eta = 5 + lg.u0
        let d = filter(&x, &[0.3, -0.7], &chain, &params).unwrap();
        assert!(!d.overridden);
        assert_eq!(d.control, vec![0.3, -0.7]);
        close(d.eta, 5.3, 1e-12);
        assert_eq!(d.margin, d.eta);
    }

    #[test]
    fn override_projects_along_lg() {
        // h = -2 at x = -7: eta(u0 = 0) = -2, lg = (1, 0):
        // u = u0 - lg * eta / ||lg||^2 = u0 + (2, 0).
        let chain = channel_chain([1.0, 0.0]);
        let params = FilterParams::new(1.0).unwrap();
        let x = StateVector::new(vec![-7.0]);
        let d = filter(&x, &[0.0, 0.0], &chain, &params).unwrap();
        assert!(d.overridden);
        close(d.eta, -2.0, 1e-12);
        close(d.control[0], 2.0, 1e-12);
        close(d.control[1], 0.0, 1e-12);
        close(d.margin, 0.0, 1e-9);
    }

    #[test]
    fn eta_equals_margin_at_nominal() {
        let chain = channel_chain([0.5, -2.0]);
        let params = FilterParams::new(3.0).unwrap();
        for (x0, u0) in [(-20.0, [1.0, 2.0]), (4.0, [-1.0, 0.5]), (-5.01, [0.0, 0.0])] {
            let x = StateVector::new(vec![x0]);
            let e = eta(&x, &u0, &chain, &params).unwrap();
            let m = constraint_margin(&x, &u0, &chain, &params).unwrap();
            assert_eq!(e, m);
        }
    }

    #[test]
    fn correction_is_minimal_and_parallel() {
        let chain = channel_chain([0.8, -0.6]);
        let params = FilterParams::new(1.0).unwrap();
        let x = StateVector::new(vec![-9.0]); // h = -4 < 0 forces override
        let u0 = [0.2, 0.1];
        let d = filter(&x, &u0, &chain, &params).unwrap();
        assert!(d.overridden);
        let dv = [d.control[0] - u0[0], d.control[1] - u0[1]];
        let norm = (dv[0] * dv[0] + dv[1] * dv[1]).sqrt();
        close(norm, d.eta.abs() / 1.0, 1e-12); // ||lg|| = 1 here
        // Parallel to lg: cross product vanishes.
        close(dv[0] * (-0.6) - dv[1] * 0.8, 0.0, 1e-12);
    }

    #[test]
    fn singular_constraint_is_reported() {
        let chain = channel_chain([0.0, 0.0]);
        let params = FilterParams::new(1.0).unwrap();
        let x = StateVector::new(vec![-9.0]);
        let err = filter(&x, &[0.0, 0.0], &chain, &params).unwrap_err();
        assert_eq!(err, FilterError::Singular { lg_norm_sq: 0.0 });
    }

    #[test]
    fn rejects_bad_gain_and_dimensions() {
        assert!(matches!(
            FilterParams::new(0.0),
            Err(FilterError::BadGain { .. })
        ));
        let chain = channel_chain([1.0, 0.0]);
        let params = FilterParams::new(1.0).unwrap();
        let x = StateVector::new(vec![0.0]);
        assert!(matches!(
            filter(&x, &[1.0], &chain, &params),
            Err(FilterError::ControlDimension { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn oracle_passthrough_far_from_boundary() {
        let chain = channel_chain([1.0, 0.0]);
        let params = FilterParams::new(1.0).unwrap();
        let x = StateVector::new(vec![10.0]);
        let u = qp_oracle(&x, &[0.4, 0.2], &chain, &params, 1.0, 101).unwrap();
        assert_eq!(u, vec![0.4, 0.2]);
    }

    #[test]
    fn oracle_agrees_with_closed_form() {
        let chain = channel_chain([0.8, -0.6]);
        let params = FilterParams::new(1.0).unwrap();
        let x = StateVector::new(vec![-9.0]);
        let u0 = [0.2, 0.1];
        let d = filter(&x, &u0, &chain, &params).unwrap();
        let radius = 2.0 * d.eta.abs() + 1.0;
        let steps = 201;
        let u = qp_oracle(&x, &u0, &chain, &params, radius, steps).unwrap();
        let spacing = 2.0 * radius / (steps - 1) as f64;
        for i in 0..2 {
            assert!(
                (u[i] - d.control[i]).abs() <= 2.0 * spacing,
                "axis {i}: {} vs {}",
                u[i],
                d.control[i]
            );
        }
        // Oracle distance matches |eta| / ||lg|| within grid resolution.
        let dist = ((u[0] - u0[0]).powi(2) + (u[1] - u0[1]).powi(2)).sqrt();
        assert!((dist - d.eta.abs()).abs() <= 2.0 * spacing);
        assert!(constraint_margin(&x, &u, &chain, &params).unwrap() >= 0.0);
    }

    #[test]
    fn oracle_distinguishes_coarse_grid_from_singularity() {
        // Controllable but the radius is too small to reach feasibility.
        let chain = channel_chain([1.0, 0.0]);
        let params = FilterParams::new(1.0).unwrap();
        let x = StateVector::new(vec![-50.0]); // eta(0) = -45
        let err = qp_oracle(&x, &[0.0, 0.0], &chain, &params, 1.0, 101).unwrap_err();
        assert_eq!(err, FilterError::Infeasible { analytic_feasible: true });

        // Genuinely infeasible: no control authority at all.
        let chain = channel_chain([0.0, 0.0]);
        let err = qp_oracle(&x, &[0.0, 0.0], &chain, &params, 1.0, 101).unwrap_err();
        assert_eq!(err, FilterError::Infeasible { analytic_feasible: false });
    }

    #[test]
    fn oracle_rejects_bad_grid() {
        let chain = channel_chain([1.0, 0.0]);
        let params = FilterParams::new(1.0).unwrap();
        let x = StateVector::new(vec![0.0]);
        assert!(matches!(
            qp_oracle(&x, &[0.0, 0.0], &chain, &params, 1.0, 99),
            Err(FilterError::BadOracleGrid { .. })
        ));
        assert!(matches!(
            qp_oracle(&x, &[0.0, 0.0], &chain, &params, 0.0, 101),
            Err(FilterError::BadOracleGrid { .. })
        ));
    }
}
