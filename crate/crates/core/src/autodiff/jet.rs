//! Truncated Taylor jets carrying exactly the derivatives the KdV residual
//! needs: first order in `t` and up to third order in `x`.
//!
//! A jet is generic over its slot type so the same algebra runs on plain
//! `f64` (input derivatives only) and on tape variables (input derivatives
//! that are themselves differentiable with respect to network parameters).

use std::ops::{Add, Mul, Neg, Sub};

/// Scalar types a [`Jet`] can be built from.
pub trait JetScalar:
    Clone + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    /// A constant of the same kind as `self` (same tape, for graph scalars).
    fn constant_like(&self, value: f64) -> Self;
    fn scale(&self, k: f64) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn tanh(&self) -> Self;
    fn value(&self) -> f64;
}

impl JetScalar for f64 {
    fn constant_like(&self, value: f64) -> Self {
        value
    }
    fn scale(&self, k: f64) -> Self {
        self * k
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn tanh(&self) -> Self {
        f64::tanh(*self)
    }
    fn value(&self) -> f64 {
        *self
    }
}

/// Value and derivatives `(u, u_t, u_x, u_xx, u_xxx)` of a scalar field at
/// one point. Mixed `t`/`x` derivatives are not carried.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet<T = f64> {
    pub v: T,
    pub vt: T,
    pub vx: T,
    pub vxx: T,
    pub vxxx: T,
}

impl Jet<f64> {
    pub const ZERO: Jet<f64> = Jet {
        v: 0.0,
        vt: 0.0,
        vx: 0.0,
        vxx: 0.0,
        vxxx: 0.0,
    };

    pub fn new(v: f64, vt: f64, vx: f64, vxx: f64, vxxx: f64) -> Self {
        Jet {
            v,
            vt,
            vx,
            vxx,
            vxxx,
        }
    }

    /// The coordinate function `x`.
    pub fn seed_x(x: f64) -> Self {
        Jet::new(x, 0.0, 1.0, 0.0, 0.0)
    }

    /// The coordinate function `t`.
    pub fn seed_t(t: f64) -> Self {
        Jet::new(t, 1.0, 0.0, 0.0, 0.0)
    }

    pub fn constant(c: f64) -> Self {
        Jet::new(c, 0.0, 0.0, 0.0, 0.0)
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.v, self.vt, self.vx, self.vxx, self.vxxx]
    }
}

impl<T: JetScalar> Jet<T> {
    /// Jet of a constant, living on the same tape as `like`.
    pub fn constant_like(like: &T, c: f64) -> Self {
        let zero = like.constant_like(0.0);
        Jet {
            v: like.constant_like(c),
            vt: zero.clone(),
            vx: zero.clone(),
            vxx: zero.clone(),
            vxxx: zero,
        }
    }

    pub fn map<U>(self, mut f: impl FnMut(T) -> U) -> Jet<U> {
        Jet {
            v: f(self.v),
            vt: f(self.vt),
            vx: f(self.vx),
            vxx: f(self.vxx),
            vxxx: f(self.vxxx),
        }
    }

    pub fn values(&self) -> Jet<f64> {
        Jet {
            v: self.v.value(),
            vt: self.vt.value(),
            vx: self.vx.value(),
            vxx: self.vxx.value(),
            vxxx: self.vxxx.value(),
        }
    }

    pub fn add(&self, other: &Jet<T>) -> Jet<T> {
        Jet {
            v: self.v.clone() + other.v.clone(),
            vt: self.vt.clone() + other.vt.clone(),
            vx: self.vx.clone() + other.vx.clone(),
            vxx: self.vxx.clone() + other.vxx.clone(),
            vxxx: self.vxxx.clone() + other.vxxx.clone(),
        }
    }

    pub fn scale(&self, k: f64) -> Jet<T> {
        Jet {
            v: self.v.scale(k),
            vt: self.vt.scale(k),
            vx: self.vx.scale(k),
            vxx: self.vxx.scale(k),
            vxxx: self.vxxx.scale(k),
        }
    }

    /// Multiplies every slot by the same (possibly graph-valued) scalar,
    /// i.e. the product with a constant function.
    pub fn scale_by(&self, k: &T) -> Jet<T> {
        self.clone().map(|s| s * k.clone())
    }

    /// Adds a constant function (only the value slot moves).
    pub fn shift(&self, c: &T) -> Jet<T> {
        let mut out = self.clone();
        out.v = out.v + c.clone();
        out
    }

    /// Leibniz rule, slot by slot.
    pub fn mul(&self, b: &Jet<T>) -> Jet<T> {
        let a = self;
        let v = a.v.clone() * b.v.clone();
        let vt = a.vt.clone() * b.v.clone() + a.v.clone() * b.vt.clone();
        let vx = a.vx.clone() * b.v.clone() + a.v.clone() * b.vx.clone();
        let vxx = a.vxx.clone() * b.v.clone()
            + (a.vx.clone() * b.vx.clone()).scale(2.0)
            + a.v.clone() * b.vxx.clone();
        let vxxx = a.vxxx.clone() * b.v.clone()
            + (a.vxx.clone() * b.vx.clone()).scale(3.0)
            + (a.vx.clone() * b.vxx.clone()).scale(3.0)
            + a.v.clone() * b.vxxx.clone();
        Jet {
            v,
            vt,
            vx,
            vxx,
            vxxx,
        }
    }

    /// Faà di Bruno through third order for `sin`.
    pub fn sin(&self) -> Jet<T> {
        let s = self.v.sin();
        let c = self.v.cos();
        let ax = self.vx.clone();
        let axx = self.vxx.clone();
        let ax2 = ax.clone() * ax.clone();
        Jet {
            vt: c.clone() * self.vt.clone(),
            vx: c.clone() * ax.clone(),
            vxx: -(s.clone() * ax2.clone()) + c.clone() * axx.clone(),
            vxxx: -(c.clone() * ax2 * ax.clone())
                - (s.clone() * ax * axx).scale(3.0)
                + c * self.vxxx.clone(),
            v: s,
        }
    }

    /// Chain rule through third order for a scalar function whose first
    /// three derivatives at `self.v` are `d1`, `d2`, `d3` and value `f0`.
    pub fn compose(&self, f0: T, d1: T, d2: T, d3: T) -> Jet<T> {
        let ax = self.vx.clone();
        let axx = self.vxx.clone();
        let ax2 = ax.clone() * ax.clone();
        Jet {
            v: f0,
            vt: d1.clone() * self.vt.clone(),
            vx: d1.clone() * ax.clone(),
            vxx: d2.clone() * ax2.clone() + d1.clone() * axx.clone(),
            vxxx: d3 * ax2 * ax.clone() + (d2 * ax * axx).scale(3.0) + d1 * self.vxxx.clone(),
        }
    }

    pub fn tanh(&self) -> Jet<T> {
        let t = self.v.tanh();
        let one = t.constant_like(1.0);
        let d1 = one - t.clone() * t.clone();
        let d2 = (t.clone() * d1.clone()).scale(-2.0);
        let d3 = (d1.clone() * d1.clone()).scale(-2.0) + (t.clone() * t.clone() * d1.clone()).scale(4.0);
        self.compose(t, d1, d2, d3)
    }
}

impl<T: JetScalar> Add for Jet<T> {
    type Output = Jet<T>;
    fn add(self, rhs: Jet<T>) -> Jet<T> {
        Jet::add(&self, &rhs)
    }
}

impl<T: JetScalar> Sub for Jet<T> {
    type Output = Jet<T>;
    fn sub(self, rhs: Jet<T>) -> Jet<T> {
        Jet::add(&self, &rhs.scale(-1.0))
    }
}

impl<T: JetScalar> Mul for Jet<T> {
    type Output = Jet<T>;
    fn mul(self, rhs: Jet<T>) -> Jet<T> {
        Jet::mul(&self, &rhs)
    }
}
