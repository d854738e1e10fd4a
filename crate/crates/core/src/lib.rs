/*!
Safety-critical control via robust control barrier function (RCBF) backstepping.

This crate builds barrier chains for high-relative-degree constraints under
bounded disturbances, filters nominal controls through a closed-form
quadratic-program safety filter, and simulates the closed loop
deterministically. The smooth robustification replaces the nonsmooth
disturbance margin `M * ||L_p h||` with `M * sqrt(eps + ||L_p h||^2)`, which
keeps every chain level differentiable and lets the whole construction run on
forward-mode automatic differentiation instead of hand derivations.

Modules:

- [`numerics`]: dual-number forward AD (nested to arbitrary fixed depth),
  gradients, a fixed-step RK4 integrator, and a closed-loop driver.
- [`chain`]: the barrier chain itself: Lie derivatives, the smooth
  disturbance margin, minimum-gain bounds, and chain extension.
- [`filter`]: the minimally invasive safety filter (closed-form QP solution)
  plus a brute-force grid oracle used for cross-checks.
- [`unicycle`]: a unicycle agent avoiding a moving obstacle, with the
  hand-derived Lie derivative expressions kept as an independent oracle.
- [`sim`]: scenario description, deterministic closed-loop runs, event
  detection, and trajectory metrics.

The crate is `no_std`-compatible (with `alloc`); disable default features and
enable `libm` for transcendental math on bare-metal targets.
*/
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("srcbf-core needs either the `std` or the `libm` feature");

pub mod chain;
pub mod filter;
pub mod numerics;
pub mod sim;
pub mod unicycle;

pub use chain::{BarrierChain, ControlAffine, DisturbanceBound, GainPolicy};
pub use filter::{FilterDecision, FilterParams};
pub use numerics::{Covector, StateField, StateVector};
pub use sim::{EventReport, Scenario, TrajectoryLog};
