//! Barrier chains for high-relative-degree constraints under bounded
//! disturbances.
//!
//! Starting from a base barrier `h1` whose zero-superlevel set is the safe
//! set, each extension appends
//!
//! ```text
//! h_{i+1}(x) = c_i * h_i(x) + L_f h_i(x) - M * delta_i(x)
//! delta_i(x) = sqrt(eps_i + ||L_p h_i(x)||^2)
//! ```
//!
//! with `||d(t)|| <= M` the disturbance bound. The smooth margin `delta`
//! strictly dominates the worst-case disturbance rate `||L_p h_i||`, and its
//! smoothness (for `eps_i > 0`) is what lets the next level be differentiated
//! again; levels are evaluated by nested forward-mode AD, so no hand
//! derivation is required at any relative degree. With `M = 0` the margin
//! term vanishes and the construction reduces exactly to the undisturbed
//! backstepping chain.
//!
//! Each extension's gain must clear a state-dependent bound at the initial
//! state (see [`min_gain`]); this keeps every level positive at `x0`, which
//! the chain validates at construction.

use alloc::vec::Vec;
use core::fmt;

use crate::numerics::{
    gradient, gradient_passes, math, Covector, Matrix, NumericsError, Real, StateField,
    StateVector, MAX_NESTING_DEPTH,
};

/// Control-affine dynamics `x' = f(x) + g(x) u + p(x) d` with `||d|| <= M`.
///
/// The fields must be evaluable at any dual rung because chain levels embed
/// `f` and `p` inside expressions that get differentiated repeatedly.
/// Implementations must be pure.
pub trait ControlAffine {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn disturbance_dim(&self) -> usize;

    /// Drift `f(x)`, length `state_dim`.
    fn drift<S: Real>(&self, x: &[S]) -> Vec<S>;
    /// Control matrix `g(x)`, `state_dim x control_dim`.
    fn control_matrix<S: Real>(&self, x: &[S]) -> Matrix<S>;
    /// Disturbance matrix `p(x)`, `state_dim x disturbance_dim`.
    fn disturbance_matrix<S: Real>(&self, x: &[S]) -> Matrix<S>;
}

impl<T: ControlAffine + ?Sized> ControlAffine for &T {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn control_dim(&self) -> usize {
        (**self).control_dim()
    }
    fn disturbance_dim(&self) -> usize {
        (**self).disturbance_dim()
    }
    fn drift<S: Real>(&self, x: &[S]) -> Vec<S> {
        (**self).drift(x)
    }
    fn control_matrix<S: Real>(&self, x: &[S]) -> Matrix<S> {
        (**self).control_matrix(x)
    }
    fn disturbance_matrix<S: Real>(&self, x: &[S]) -> Matrix<S> {
        (**self).disturbance_matrix(x)
    }
}

/// Worst-case disturbance magnitude `M >= 0`. Zero selects the undisturbed
/// chain (no margin terms anywhere).
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct DisturbanceBound(f64);

impl DisturbanceBound {
    pub const ZERO: DisturbanceBound = DisturbanceBound(0.0);

    pub fn new(bound: f64) -> Result<Self, ChainError> {
        if bound.is_finite() && bound >= 0.0 {
            Ok(DisturbanceBound(bound))
        } else {
            Err(ChainError::BadBound { bound })
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Lie derivatives of a scalar field along a control-affine system's
/// drift, control, and disturbance directions.
#[derive(Clone, Debug, PartialEq)]
pub struct LieDerivatives {
    pub lf: f64,
    pub lg: Covector,
    pub lp: Covector,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ChainError {
    /// `eps <= 0` would collapse the smooth margin to the nonsmooth one.
    NonPositiveEps { eps: f64 },
    /// The previous level is not positive where a gain bound is needed.
    NonPositiveBarrier { value: f64 },
    /// A fixed gain fails the initial-state bound (must be strictly above).
    GainTooSmall { gain: f64, required: f64 },
    /// Auto-gain policy parameters out of range (`margin > 1`, `floor > 0`).
    BadPolicy { margin: f64, floor: f64 },
    /// The base barrier is not positive at the initial state.
    UnsafeInitialState { value: f64 },
    /// A newly built level is not positive at the initial state.
    UnsafeLevel { level: usize, value: f64 },
    /// Relative degree beyond the supported dual nesting depth.
    DepthExceeded { max: usize },
    /// State dimension does not match the system.
    DimensionMismatch { expected: usize, got: usize },
    /// Invalid disturbance bound (negative or non-finite).
    BadBound { bound: f64 },
    /// A barrier value or Lie derivative came out non-finite.
    NonFiniteValue,
    /// A value or derivative came out non-finite.
    Numerics(NumericsError),
}

impl fmt::Display for ChainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainError::NonPositiveEps { eps } => {
                write!(f, "smoothing constant must be positive, got {eps}")
            }
            ChainError::NonPositiveBarrier { value } => {
                write!(f, "barrier value must be positive, got {value}")
            }
            ChainError::GainTooSmall { gain, required } => {
                write!(f, "gain {gain} must exceed the initial-state bound {required}")
            }
            ChainError::BadPolicy { margin, floor } => {
                write!(f, "auto-gain policy needs margin > 1 and floor > 0, got margin {margin}, floor {floor}")
            }
            ChainError::UnsafeInitialState { value } => {
                write!(f, "base barrier is {value} at the initial state; must start safe")
            }
            ChainError::UnsafeLevel { level, value } => {
                write!(f, "chain level {level} evaluates to {value} at the initial state")
            }
            ChainError::DepthExceeded { max } => {
                write!(f, "chain depth limited to {max} levels")
            }
            ChainError::DimensionMismatch { expected, got } => {
                write!(f, "state dimension mismatch: expected {expected}, got {got}")
            }
            ChainError::BadBound { bound } => {
                write!(f, "disturbance bound must be finite and nonnegative, got {bound}")
            }
            ChainError::NonFiniteValue => {
                write!(f, "barrier value or Lie derivative is non-finite")
            }
            ChainError::Numerics(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for ChainError {}

impl From<NumericsError> for ChainError {
    fn from(e: NumericsError) -> Self {
        ChainError::Numerics(e)
    }
}

/// Smooth disturbance margin `sqrt(eps + ||lp||^2)`.
///
/// Strictly dominates `||lp||` for every `eps > 0` and is differentiable
/// even where `lp` vanishes, which the nonsmooth margin `||lp||` is not.
pub fn delta(lp: &Covector, eps: f64) -> Result<f64, ChainError> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(ChainError::NonPositiveEps { eps });
    }
    Ok(math::sqrt(eps + lp.norm_sq()))
}

/// Lower bound the extension gain must strictly exceed so the next level
/// starts positive: `max(0, (-lf + M * delta) / h)` evaluated at the
/// initial state. Fails if `h_prev <= 0`.
pub fn min_gain(
    h_prev: f64,
    lf_prev: f64,
    delta_prev: f64,
    bound: DisturbanceBound,
) -> Result<f64, ChainError> {
    if !(h_prev > 0.0) {
        return Err(ChainError::NonPositiveBarrier { value: h_prev });
    }
    let raw = (-lf_prev + bound.value() * delta_prev) / h_prev;
    Ok(if raw > 0.0 { raw } else { 0.0 })
}

/// The comparison-principle floor `h0 * exp(-c * (t - t0))`: along any
/// closed loop satisfying the filtered constraint, a level that starts at
/// `h0` can never fall below this curve.
pub fn exponential_floor(h0: f64, gain: f64, t: f64, t0: f64) -> f64 {
    h0 * math::exp(-gain * (t - t0))
}

/// Lie derivatives of `field` at `x`: one gradient (forward AD), then
/// pairings with `f`, `g`, and `p`.
pub fn lie_derivatives<F: StateField, Sys: ControlAffine>(
    field: &F,
    x: &StateVector,
    system: &Sys,
) -> Result<LieDerivatives, ChainError> {
    let n = system.state_dim();
    if x.dim() != n {
        return Err(ChainError::DimensionMismatch {
            expected: n,
            got: x.dim(),
        });
    }
    let grad = gradient(field, x)?;
    let xs = x.as_slice();
    let f = system.drift(xs);
    let lf = grad.pair(&f);
    let lg = Covector::new(system.control_matrix(xs).left_mul(grad.as_slice()));
    let lp = Covector::new(system.disturbance_matrix(xs).left_mul(grad.as_slice()));
    if !lf.is_finite() || !lg.is_finite() || !lp.is_finite() {
        return Err(ChainError::NonFiniteValue);
    }
    Ok(LieDerivatives { lf, lg, lp })
}

/// How an extension picks its gain relative to the initial-state bound.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum GainPolicy {
    /// Use exactly this gain; rejected unless strictly above the bound.
    Fixed(f64),
    /// `max(bound * margin, floor)`: scales with the bound, never below
    /// the floor. Requires `margin > 1` and `floor > 0`.
    Auto { margin: f64, floor: f64 },
}

impl Default for GainPolicy {
    fn default() -> Self {
        GainPolicy::Auto {
            margin: 1.5,
            floor: 1.0,
        }
    }
}

impl GainPolicy {
    fn resolve(self, required: f64) -> Result<f64, ChainError> {
        match self {
            GainPolicy::Fixed(gain) => {
                if gain.is_finite() && gain > required && gain > 0.0 {
                    Ok(gain)
                } else {
                    Err(ChainError::GainTooSmall { gain, required })
                }
            }
            GainPolicy::Auto { margin, floor } => {
                if !(margin > 1.0) || !(floor > 0.0) || !margin.is_finite() || !floor.is_finite() {
                    return Err(ChainError::BadPolicy { margin, floor });
                }
                let gain = (required * margin).max(floor);
                debug_assert!(gain > required);
                Ok(gain)
            }
        }
    }
}

/// Gain and smoothing constant consumed when a level was extended.
#[derive(Copy, Clone, Debug, PartialEq)]
struct Extension {
    gain: f64,
    eps: f64,
}

/// A backstepping barrier chain over a control-affine system.
///
/// Immutable once built; evaluation takes `&self` and the whole structure is
/// `Send + Sync` when its system and base field are, so chains can be shared
/// across threads freely.
#[derive(Clone, Debug)]
pub struct BarrierChain<H, Sys> {
    system: Sys,
    base: H,
    bound: DisturbanceBound,
    x0: StateVector,
    extensions: Vec<Extension>,
    /// Smoothing constant of the current top level (used by the filter's
    /// margin, or consumed by the next extension).
    top_eps: f64,
    /// Level values at `x0`, all validated positive.
    x0_values: Vec<f64>,
}

impl<H: StateField, Sys: ControlAffine> BarrierChain<H, Sys> {
    /// Start a chain at its base barrier. Requires `base(x0) > 0`: the
    /// construction anchors every gain bound at the initial state.
    pub fn new(
        system: Sys,
        base: H,
        x0: StateVector,
        bound: DisturbanceBound,
        eps: f64,
    ) -> Result<Self, ChainError> {
        if x0.dim() != system.state_dim() {
            return Err(ChainError::DimensionMismatch {
                expected: system.state_dim(),
                got: x0.dim(),
            });
        }
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(ChainError::NonPositiveEps { eps });
        }
        let value = base.eval::<f64>(x0.as_slice());
        if !value.is_finite() {
            return Err(ChainError::NonFiniteValue);
        }
        if !(value > 0.0) {
            return Err(ChainError::UnsafeInitialState { value });
        }
        Ok(BarrierChain {
            system,
            base,
            bound,
            x0,
            extensions: Vec::new(),
            top_eps: eps,
            x0_values: alloc::vec![value],
        })
    }

    /// Append one level. The current top's gain is fixed here (it is what
    /// the recursion consumes), validated against [`min_gain`] at `x0`;
    /// `next_eps` becomes the new top's smoothing constant.
    pub fn extend(mut self, policy: GainPolicy, next_eps: f64) -> Result<Self, ChainError> {
        if self.level_count() >= MAX_NESTING_DEPTH {
            return Err(ChainError::DepthExceeded {
                max: MAX_NESTING_DEPTH,
            });
        }
        if !(next_eps > 0.0) || !next_eps.is_finite() {
            return Err(ChainError::NonPositiveEps { eps: next_eps });
        }

        let top = self.level_count() - 1;
        let lie = lie_derivatives(&self.level_field(top), &self.x0, &self.system)?;
        let h0 = self.x0_values[top];
        let d0 = if self.bound.value() > 0.0 {
            delta(&lie.lp, self.top_eps)?
        } else {
            0.0
        };
        let required = min_gain(h0, lie.lf, d0, self.bound)?;
        let gain = policy.resolve(required)?;

        self.extensions.push(Extension {
            gain,
            eps: self.top_eps,
        });
        self.top_eps = next_eps;

        let new_top = self.level_count() - 1;
        let value = self.eval_level(new_top, self.x0.as_slice());
        if !value.is_finite() {
            return Err(ChainError::NonFiniteValue);
        }
        if !(value > 0.0) {
            return Err(ChainError::UnsafeLevel {
                level: new_top + 1,
                value,
            });
        }
        self.x0_values.push(value);
        Ok(self)
    }

    /// Number of levels (the constraint's relative degree once fully built).
    pub fn level_count(&self) -> usize {
        self.extensions.len() + 1
    }

    pub fn system(&self) -> &Sys {
        &self.system
    }

    pub fn bound(&self) -> DisturbanceBound {
        self.bound
    }

    pub fn initial_state(&self) -> &StateVector {
        &self.x0
    }

    /// Level values at the initial state (all positive by construction).
    pub fn initial_values(&self) -> &[f64] {
        &self.x0_values
    }

    /// Smoothing constant of level `level` (0-based).
    pub fn eps(&self, level: usize) -> f64 {
        if level + 1 == self.level_count() {
            self.top_eps
        } else {
            self.extensions[level].eps
        }
    }

    /// Gain consumed when level `level` was extended; the top level's gain
    /// belongs to the safety filter instead.
    pub fn gain(&self, level: usize) -> Option<f64> {
        self.extensions.get(level).map(|e| e.gain)
    }

    /// Level `level` as a standalone differentiable field.
    pub fn level_field(&self, level: usize) -> LevelField<'_, H, Sys> {
        assert!(level < self.level_count(), "level {level} out of range");
        LevelField { chain: self, level }
    }

    /// Top level as a field (the one the safety filter constrains).
    pub fn top_field(&self) -> LevelField<'_, H, Sys> {
        self.level_field(self.level_count() - 1)
    }

    /// Evaluate level `level` at a plain state, with dimension and
    /// finiteness checks.
    pub fn value(&self, level: usize, x: &StateVector) -> Result<f64, ChainError> {
        if x.dim() != self.system.state_dim() {
            return Err(ChainError::DimensionMismatch {
                expected: self.system.state_dim(),
                got: x.dim(),
            });
        }
        assert!(level < self.level_count(), "level {level} out of range");
        let v = self.eval_level(level, x.as_slice());
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ChainError::NonFiniteValue)
        }
    }

    /// Recursive level evaluation at any dual rung. Level 0 is the base
    /// barrier; level i embeds the gradient of level i-1, which lifts the
    /// scalar one rung. The depth cap in `extend` keeps the lift within the
    /// supported ladder.
    fn eval_level<S: Real>(&self, level: usize, x: &[S]) -> S {
        if level == 0 {
            return self.base.eval(x);
        }
        let prev = level - 1;
        let ext = self.extensions[prev];

        let h_prev = self.eval_level(prev, x);
        let grad = gradient_passes(&self.level_field(prev), x);
        let f = self.system.drift(x);
        let mut lf = S::zero();
        for (gi, fi) in grad.iter().zip(&f) {
            lf = lf + *gi * *fi;
        }

        let mut value = S::constant(ext.gain) * h_prev + lf;
        let m = self.bound.value();
        if m > 0.0 {
            let lp = self.system.disturbance_matrix(x).left_mul(&grad);
            let mut norm_sq = S::zero();
            for c in lp {
                norm_sq = norm_sq + c * c;
            }
            let margin = (S::constant(ext.eps) + norm_sq).sqrt();
            value = value - S::constant(m) * margin;
        }
        value
    }
}

/// Borrowed view of one chain level as a [`StateField`].
pub struct LevelField<'c, H, Sys> {
    chain: &'c BarrierChain<H, Sys>,
    level: usize,
}

impl<H: StateField, Sys: ControlAffine> StateField for LevelField<'_, H, Sys> {
    fn eval<S: Real>(&self, x: &[S]) -> S {
        self.chain.eval_level(self.level, x)
    }
}
