//! Forward-mode dual numbers, nestable to a fixed maximum depth.
//!
//! A [`Dual<S>`] carries a value and one directional derivative, both of the
//! underlying scalar type `S`. Nesting (`Dual<Dual<f64>>`, ...) yields exact
//! higher-order mixed partials: an outer gradient pass differentiates code
//! that itself runs inner gradient passes. Barrier chains of relative degree
//! `n` evaluate their deepest level at nesting depth `n`, so the ladder below
//! is capped at [`MAX_NESTING_DEPTH`]; chain construction enforces the cap,
//! which keeps monomorphization finite.

use core::fmt;
use core::ops::{Add, Div, Mul, Neg, Sub};

/// Deepest supported dual nesting, i.e. the highest relative degree a
/// barrier chain may have. The top rung lifts to itself and must never be
/// lifted at runtime; [`crate::chain::BarrierChain::extend`] enforces this.
pub const MAX_NESTING_DEPTH: usize = 8;

/// Scalar arithmetic shared by `f64` and nested duals.
///
/// `Lifted` adds one derivative direction. Seeding an entry
/// (`lift_seeded`) marks it as the variable of differentiation for the new
/// direction; `lift` embeds a constant. `deriv_part` projects the new
/// direction back out after an evaluation.
pub trait Real:
    Copy
    + fmt::Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    type Lifted: Real;

    fn constant(value: f64) -> Self;
    /// The underlying `f64` value with every derivative slot stripped.
    fn primal(&self) -> f64;
    fn lift(&self) -> Self::Lifted;
    fn lift_seeded(&self) -> Self::Lifted;
    fn deriv_part(lifted: Self::Lifted) -> Self;
    fn is_finite(&self) -> bool;

    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;

    fn zero() -> Self {
        Self::constant(0.0)
    }
    fn one() -> Self {
        Self::constant(1.0)
    }
}

/// `f64` transcendentals, routed through libm on no_std builds.
pub(crate) mod math {
    #[cfg(feature = "std")]
    #[inline(always)]
    pub fn sqrt(x: f64) -> f64 {
        x.sqrt()
    }
    #[cfg(feature = "std")]
    #[inline(always)]
    pub fn sin(x: f64) -> f64 {
        x.sin()
    }
    #[cfg(feature = "std")]
    #[inline(always)]
    pub fn cos(x: f64) -> f64 {
        x.cos()
    }
    #[cfg(feature = "std")]
    #[inline(always)]
    pub fn exp(x: f64) -> f64 {
        x.exp()
    }
    #[cfg(feature = "std")]
    #[inline(always)]
    pub fn ceil(x: f64) -> f64 {
        x.ceil()
    }

    #[cfg(all(not(feature = "std"), feature = "libm"))]
    #[inline(always)]
    pub fn sqrt(x: f64) -> f64 {
        libm::sqrt(x)
    }
    #[cfg(all(not(feature = "std"), feature = "libm"))]
    #[inline(always)]
    pub fn sin(x: f64) -> f64 {
        libm::sin(x)
    }
    #[cfg(all(not(feature = "std"), feature = "libm"))]
    #[inline(always)]
    pub fn cos(x: f64) -> f64 {
        libm::cos(x)
    }
    #[cfg(all(not(feature = "std"), feature = "libm"))]
    #[inline(always)]
    pub fn exp(x: f64) -> f64 {
        libm::exp(x)
    }
    #[cfg(all(not(feature = "std"), feature = "libm"))]
    #[inline(always)]
    pub fn ceil(x: f64) -> f64 {
        libm::ceil(x)
    }
}

impl Real for f64 {
    type Lifted = D1;

    #[inline(always)]
    fn constant(value: f64) -> Self {
        value
    }
    #[inline(always)]
    fn primal(&self) -> f64 {
        *self
    }
    #[inline(always)]
    fn lift(&self) -> D1 {
        Dual { v: *self, d: 0.0 }
    }
    #[inline(always)]
    fn lift_seeded(&self) -> D1 {
        Dual { v: *self, d: 1.0 }
    }
    #[inline(always)]
    fn deriv_part(lifted: D1) -> Self {
        lifted.d
    }
    #[inline(always)]
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }

    #[inline(always)]
    fn sqrt(self) -> Self {
        math::sqrt(self)
    }
    #[inline(always)]
    fn sin(self) -> Self {
        math::sin(self)
    }
    #[inline(always)]
    fn cos(self) -> Self {
        math::cos(self)
    }
    #[inline(always)]
    fn exp(self) -> Self {
        math::exp(self)
    }
}

/// Value plus one directional derivative over scalar `S`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Dual<S> {
    pub v: S,
    pub d: S,
}

impl<S: Real> Dual<S> {
    #[inline(always)]
    pub fn constant(value: f64) -> Self {
        Dual {
            v: S::constant(value),
            d: S::zero(),
        }
    }

    /// A variable seeded with derivative one.
    #[inline(always)]
    pub fn variable(value: f64) -> Self {
        Dual {
            v: S::constant(value),
            d: S::one(),
        }
    }
}

impl<S: Real> Add for Dual<S> {
    type Output = Self;
    #[inline(always)]
    fn add(self, rhs: Self) -> Self {
        Dual {
            v: self.v + rhs.v,
            d: self.d + rhs.d,
        }
    }
}

impl<S: Real> Sub for Dual<S> {
    type Output = Self;
    #[inline(always)]
    fn sub(self, rhs: Self) -> Self {
        Dual {
            v: self.v - rhs.v,
            d: self.d - rhs.d,
        }
    }
}

impl<S: Real> Mul for Dual<S> {
    type Output = Self;
    #[inline(always)]
    fn mul(self, rhs: Self) -> Self {
        Dual {
            v: self.v * rhs.v,
            d: self.d * rhs.v + self.v * rhs.d,
        }
    }
}

impl<S: Real> Div for Dual<S> {
    type Output = Self;
    #[inline(always)]
    fn div(self, rhs: Self) -> Self {
        Dual {
            v: self.v / rhs.v,
            d: (self.d * rhs.v - self.v * rhs.d) / (rhs.v * rhs.v),
        }
    }
}

impl<S: Real> Neg for Dual<S> {
    type Output = Self;
    #[inline(always)]
    fn neg(self) -> Self {
        Dual {
            v: -self.v,
            d: -self.d,
        }
    }
}

impl<S: Real> Dual<S> {
    // Shared elementary functions; the per-rung `Real` impls delegate here.
    // sqrt of a non-positive value yields NaN and propagates, matching f64;
    // callers detect non-finite results at API boundaries.
    #[inline(always)]
    fn sqrt_impl(self) -> Self {
        let r = self.v.sqrt();
        Dual {
            v: r,
            d: self.d / (r + r),
        }
    }
    #[inline(always)]
    fn sin_impl(self) -> Self {
        Dual {
            v: self.v.sin(),
            d: self.d * self.v.cos(),
        }
    }
    #[inline(always)]
    fn cos_impl(self) -> Self {
        Dual {
            v: self.v.cos(),
            d: -(self.d * self.v.sin()),
        }
    }
    #[inline(always)]
    fn exp_impl(self) -> Self {
        let e = self.v.exp();
        Dual {
            v: e,
            d: self.d * e,
        }
    }
}

pub type D1 = Dual<f64>;
pub type D2 = Dual<D1>;
pub type D3 = Dual<D2>;
pub type D4 = Dual<D3>;
pub type D5 = Dual<D4>;
pub type D6 = Dual<D5>;
pub type D7 = Dual<D6>;
pub type D8 = Dual<D7>;

macro_rules! real_rung {
    ($ty:ty => $lifted:ty) => {
        impl Real for $ty {
            type Lifted = $lifted;

            #[inline(always)]
            fn constant(value: f64) -> Self {
                Dual::constant(value)
            }
            #[inline(always)]
            fn primal(&self) -> f64 {
                self.v.primal()
            }
            #[inline(always)]
            fn lift(&self) -> Self::Lifted {
                Dual {
                    v: *self,
                    d: <$ty as Real>::zero(),
                }
            }
            #[inline(always)]
            fn lift_seeded(&self) -> Self::Lifted {
                Dual {
                    v: *self,
                    d: <$ty as Real>::one(),
                }
            }
            #[inline(always)]
            fn deriv_part(lifted: Self::Lifted) -> Self {
                lifted.d
            }
            #[inline(always)]
            fn is_finite(&self) -> bool {
                self.v.is_finite() && self.d.is_finite()
            }

            #[inline(always)]
            fn sqrt(self) -> Self {
                self.sqrt_impl()
            }
            #[inline(always)]
            fn sin(self) -> Self {
                self.sin_impl()
            }
            #[inline(always)]
            fn cos(self) -> Self {
                self.cos_impl()
            }
            #[inline(always)]
            fn exp(self) -> Self {
                self.exp_impl()
            }
        }
    };
}

real_rung!(D1 => D2);
real_rung!(D2 => D3);
real_rung!(D3 => D4);
real_rung!(D4 => D5);
real_rung!(D5 => D6);
real_rung!(D6 => D7);
real_rung!(D7 => D8);

// Top rung: lifting past MAX_NESTING_DEPTH is a construction-time error in
// the chain module, so these panics are unreachable through the public API.
impl Real for D8 {
    type Lifted = D8;

    #[inline(always)]
    fn constant(value: f64) -> Self {
        Dual::constant(value)
    }
    #[inline(always)]
    fn primal(&self) -> f64 {
        self.v.primal()
    }
    fn lift(&self) -> Self::Lifted {
        panic!("dual nesting depth {MAX_NESTING_DEPTH} exceeded");
    }
    fn lift_seeded(&self) -> Self::Lifted {
        panic!("dual nesting depth {MAX_NESTING_DEPTH} exceeded");
    }
    fn deriv_part(_: Self::Lifted) -> Self {
        panic!("dual nesting depth {MAX_NESTING_DEPTH} exceeded");
    }
    #[inline(always)]
    fn is_finite(&self) -> bool {
        self.v.is_finite() && self.d.is_finite()
    }

    #[inline(always)]
    fn sqrt(self) -> Self {
        self.sqrt_impl()
    }
    #[inline(always)]
    fn sin(self) -> Self {
        self.sin_impl()
    }
    #[inline(always)]
    fn cos(self) -> Self {
        self.cos_impl()
    }
    #[inline(always)]
    fn exp(self) -> Self {
        self.exp_impl()
    }
}
