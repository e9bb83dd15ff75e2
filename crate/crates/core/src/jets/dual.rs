//! Multilinear jets: truncated Taylor numbers in up to four nilpotent
//! parameters `ε_0..ε_3` with `ε_i² = 0`.
//!
//! A jet stores one coefficient per subset of the active parameters, indexed
//! by bitmask. The coefficient at mask `S` is the mixed partial derivative
//! `∂^{|S|} / ∏_{i∈S} ∂ε_i` at zero, which is exactly what nested directional
//! derivatives along a chain of vector fields need: each field contributes
//! one parameter, and each parameter is differentiated once.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Maximum number of independent jet parameters (total derivative order).
pub const MAX_VARS: usize = 4;
const WIDTH: usize = 1 << MAX_VARS;

/// Scalar arithmetic shared by plain `f64` evaluation and jet evaluation.
pub trait Real:
    Copy
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn cst(v: f64) -> Self;
    /// Value part (order-zero coefficient).
    fn value(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn recip(self) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }

    fn one() -> Self {
        Self::cst(1.0)
    }

    fn powi(self, k: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..k {
            acc *= self;
        }
        acc
    }
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn recip(self) -> Self {
        f64::recip(self)
    }
}

#[derive(Clone, Copy, PartialEq)]
pub struct Jet {
    c: [f64; WIDTH],
    nv: u8,
}

impl Debug for Jet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Jet")
            .field("nv", &self.nv)
            .field("c", &&self.c[..1 << self.nv])
            .finish()
    }
}

impl Default for Jet {
    fn default() -> Self {
        Jet::constant(0.0)
    }
}

impl Jet {
    pub fn constant(v: f64) -> Jet {
        let mut c = [0.0; WIDTH];
        c[0] = v;
        Jet { c, nv: 0 }
    }

    /// `value + ε_var`.
    pub fn variable(value: f64, var: usize) -> Jet {
        assert!(var < MAX_VARS, "jet parameter {var} out of range");
        let mut c = [0.0; WIDTH];
        c[0] = value;
        c[1 << var] = 1.0;
        Jet {
            c,
            nv: var as u8 + 1,
        }
    }

    /// Number of parameter slots in scope (coefficients beyond `2^nvars` are zero).
    pub fn nvars(&self) -> usize {
        self.nv as usize
    }

    pub fn coeff(&self, mask: usize) -> f64 {
        self.c[mask]
    }

    /// Multiply by `ε_var`, which must not already occur in `self`.
    pub fn times_var(&self, var: usize) -> Jet {
        debug_assert!(var < MAX_VARS);
        let bit = 1 << var;
        let nv = self.nv.max(var as u8 + 1);
        let mut c = [0.0; WIDTH];
        for s in 0..(1usize << self.nv) {
            if s & bit == 0 {
                c[s | bit] = self.c[s];
            }
        }
        Jet { c, nv }
    }

    /// Partial derivative in `ε_var`, evaluated at `ε_var = 0`.
    ///
    /// The result no longer depends on `ε_var`; when `var` was the highest
    /// slot in scope the scope shrinks so the slot can be reused.
    pub fn partial(&self, var: usize) -> Jet {
        let bit = 1 << var;
        let mut c = [0.0; WIDTH];
        for s in 0..(1usize << self.nv) {
            if s & bit == 0 {
                c[s] = self.c[s | bit];
            }
        }
        let nv = if var + 1 == self.nv as usize {
            self.nv - 1
        } else {
            self.nv
        };
        Jet { c, nv }
    }

    /// Evaluate a smooth function given its value and first four derivatives
    /// at the value part.
    fn compose(self, d: [f64; 5]) -> Jet {
        if self.nv == 0 {
            return Jet::constant(d[0]);
        }
        let mut n = self;
        n.c[0] = 0.0;
        const FACT: [f64; 5] = [1.0, 1.0, 2.0, 6.0, 24.0];
        let order = self.nv as usize;
        let mut acc = Jet::constant(d[order] / FACT[order]);
        for k in (0..order).rev() {
            acc = acc * n;
            acc.c[0] += d[k] / FACT[k];
        }
        acc
    }

    fn size(&self) -> usize {
        1 << self.nv
    }
}

impl Real for Jet {
    #[inline]
    fn cst(v: f64) -> Self {
        Jet::constant(v)
    }

    #[inline]
    fn value(&self) -> f64 {
        self.c[0]
    }

    fn sin(self) -> Self {
        let (s, c) = self.c[0].sin_cos();
        self.compose([s, c, -s, -c, s])
    }

    fn cos(self) -> Self {
        let (s, c) = self.c[0].sin_cos();
        self.compose([c, -s, -c, s, c])
    }

    fn exp(self) -> Self {
        let e = self.c[0].exp();
        self.compose([e; 5])
    }

    fn ln(self) -> Self {
        let a = self.c[0];
        let r = 1.0 / a;
        self.compose([a.ln(), r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r])
    }

    fn sqrt(self) -> Self {
        let s = self.c[0].sqrt();
        let r = 1.0 / self.c[0];
        self.compose([
            s,
            0.5 * s * r,
            -0.25 * s * r * r,
            0.375 * s * r * r * r,
            -0.9375 * s * r * r * r * r,
        ])
    }

    fn recip(self) -> Self {
        let r = 1.0 / self.c[0];
        let r2 = r * r;
        self.compose([r, -r2, 2.0 * r2 * r, -6.0 * r2 * r2, 24.0 * r2 * r2 * r])
    }
}

impl Add for Jet {
    type Output = Jet;
    #[inline]
    fn add(mut self, o: Jet) -> Jet {
        self += o;
        self
    }
}

impl AddAssign for Jet {
    #[inline]
    fn add_assign(&mut self, o: Jet) {
        self.nv = self.nv.max(o.nv);
        for s in 0..self.size() {
            self.c[s] += o.c[s];
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    #[inline]
    fn sub(mut self, o: Jet) -> Jet {
        self -= o;
        self
    }
}

impl SubAssign for Jet {
    #[inline]
    fn sub_assign(&mut self, o: Jet) {
        self.nv = self.nv.max(o.nv);
        for s in 0..self.size() {
            self.c[s] -= o.c[s];
        }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let nv = self.nv.max(o.nv);
        if nv == 0 {
            return Jet::constant(self.c[0] * o.c[0]);
        }
        let mut c = [0.0; WIDTH];
        for s in 0..(1usize << nv) {
            let mut acc = 0.0;
            let mut t = s;
            loop {
                acc += self.c[t] * o.c[s ^ t];
                if t == 0 {
                    break;
                }
                t = (t - 1) & s;
            }
            c[s] = acc;
        }
        Jet { c, nv }
    }
}

impl MulAssign for Jet {
    #[inline]
    fn mul_assign(&mut self, o: Jet) {
        *self = *self * o;
    }
}

impl Div for Jet {
    type Output = Jet;
    #[inline]
    fn div(self, o: Jet) -> Jet {
        if o.nv == 0 {
            return self / o.c[0];
        }
        self * o.recip()
    }
}

impl Neg for Jet {
    type Output = Jet;
    #[inline]
    fn neg(mut self) -> Jet {
        for s in 0..self.size() {
            self.c[s] = -self.c[s];
        }
        self
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn add(mut self, o: f64) -> Jet {
        self.c[0] += o;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn sub(mut self, o: f64) -> Jet {
        self.c[0] -= o;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn mul(mut self, o: f64) -> Jet {
        for s in 0..self.size() {
            self.c[s] *= o;
        }
        self
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn div(self, o: f64) -> Jet {
        self * (1.0 / o)
    }
}
