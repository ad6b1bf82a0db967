//! Forward-mode jets in four variables and a two-level perturbation number.
//!
//! `Jet1` carries a value and its gradient, `Jet2` adds the packed Hessian,
//! and `Dual` splits a number into a base part and a first-order
//! perturbation, dropping products of two perturbations. All three nest over
//! any [`Scalar`], e.g. `Jet2<Dual<f64>>`.

use crate::scalar::{shift, Scalar};
use num_traits::{Float, FloatConst, FromPrimitive, Num, NumCast, One, ToPrimitive, Zero};
use std::cmp::Ordering;
use std::iter::Sum;
use std::num::FpCategory;
use std::ops::{
    Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, RemAssign, Sub, SubAssign,
};

/// Index of the (i, j) entry of a packed symmetric 4x4 Hessian.
#[inline]
pub const fn hidx(i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    // rows: (0,0..3)=0..3, (1,1..3)=4..6, (2,2..3)=7..8, (3,3)=9
    match a {
        0 => b,
        1 => 3 + b,
        2 => 5 + b,
        _ => 9,
    }
}

/// Value plus gradient with respect to four seeded variables.
#[derive(Clone, Copy, Debug)]
pub struct Jet1<S> {
    pub v: S,
    pub d: [S; 4],
}

/// Value, gradient and symmetric Hessian with respect to four variables.
#[derive(Clone, Copy, Debug)]
pub struct Jet2<S> {
    pub v: S,
    pub d: [S; 4],
    pub h: [S; 10],
}

/// Base value plus first-order perturbation.
#[derive(Clone, Copy, Debug)]
pub struct Dual<S> {
    pub hi: S,
    pub lo: S,
}

impl<S: Scalar> Jet1<S> {
    pub fn constant(v: S) -> Self {
        Jet1 { v, d: [S::zero(); 4] }
    }
    /// The `k`-th coordinate variable with value `v`.
    pub fn var(v: S, k: usize) -> Self {
        let mut d = [S::zero(); 4];
        d[k] = S::one();
        Jet1 { v, d }
    }
    /// Seed a point so that derivatives are taken with respect to it.
    pub fn seed(x: &[S; 4]) -> [Self; 4] {
        std::array::from_fn(|k| Self::var(x[k], k))
    }
}

impl<S: Scalar> Jet2<S> {
    pub fn constant(v: S) -> Self {
        Jet2 { v, d: [S::zero(); 4], h: [S::zero(); 10] }
    }
    pub fn var(v: S, k: usize) -> Self {
        let mut d = [S::zero(); 4];
        d[k] = S::one();
        Jet2 { v, d, h: [S::zero(); 10] }
    }
    pub fn seed(x: &[S; 4]) -> [Self; 4] {
        std::array::from_fn(|k| Self::var(x[k], k))
    }
    #[inline]
    pub fn hess(&self, i: usize, j: usize) -> S {
        self.h[hidx(i, j)]
    }
}

impl<S: Scalar> Dual<S> {
    pub fn new(hi: S, lo: S) -> Self {
        Dual { hi, lo }
    }
}

// ---------------------------------------------------------------- arithmetic

impl<S: Scalar> Add for Jet1<S> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Jet1 { v: self.v + o.v, d: std::array::from_fn(|i| self.d[i] + o.d[i]) }
    }
}
impl<S: Scalar> Sub for Jet1<S> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Jet1 { v: self.v - o.v, d: std::array::from_fn(|i| self.d[i] - o.d[i]) }
    }
}
impl<S: Scalar> Neg for Jet1<S> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Jet1 { v: -self.v, d: self.d.map(|x| -x) }
    }
}
impl<S: Scalar> Mul for Jet1<S> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Jet1 { v: self.v * o.v, d: std::array::from_fn(|i| self.v * o.d[i] + o.v * self.d[i]) }
    }
}
impl<S: Scalar> Div for Jet1<S> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let v = self.v / o.v;
        Jet1 { v, d: std::array::from_fn(|i| (self.d[i] - v * o.d[i]) / o.v) }
    }
}

impl<S: Scalar> Add for Jet2<S> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Jet2 {
            v: self.v + o.v,
            d: std::array::from_fn(|i| self.d[i] + o.d[i]),
            h: std::array::from_fn(|i| self.h[i] + o.h[i]),
        }
    }
}
impl<S: Scalar> Sub for Jet2<S> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Jet2 {
            v: self.v - o.v,
            d: std::array::from_fn(|i| self.d[i] - o.d[i]),
            h: std::array::from_fn(|i| self.h[i] - o.h[i]),
        }
    }
}
impl<S: Scalar> Neg for Jet2<S> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Jet2 { v: -self.v, d: self.d.map(|x| -x), h: self.h.map(|x| -x) }
    }
}
impl<S: Scalar> Mul for Jet2<S> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut h = [S::zero(); 10];
        for i in 0..4 {
            for j in i..4 {
                let k = hidx(i, j);
                h[k] = self.v * o.h[k]
                    + o.v * self.h[k]
                    + self.d[i] * o.d[j]
                    + self.d[j] * o.d[i];
            }
        }
        Jet2 {
            v: self.v * o.v,
            d: std::array::from_fn(|i| self.v * o.d[i] + o.v * self.d[i]),
            h,
        }
    }
}
impl<S: Scalar> Div for Jet2<S> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl<S: Scalar> Add for Dual<S> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Dual { hi: self.hi + o.hi, lo: self.lo + o.lo }
    }
}
impl<S: Scalar> Sub for Dual<S> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Dual { hi: self.hi - o.hi, lo: self.lo - o.lo }
    }
}
impl<S: Scalar> Neg for Dual<S> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual { hi: -self.hi, lo: -self.lo }
    }
}
impl<S: Scalar> Mul for Dual<S> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Dual { hi: self.hi * o.hi, lo: self.hi * o.lo + self.lo * o.hi }
    }
}
impl<S: Scalar> Div for Dual<S> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let hi = self.hi / o.hi;
        Dual { hi, lo: (self.lo - hi * o.lo) / o.hi }
    }
}

// ------------------------------------------------------------- Scalar impls

impl<S: Scalar> Scalar for Jet1<S> {
    fn lift(self, f: &dyn Fn(f64) -> [f64; 4]) -> Self {
        let f0 = self.v.lift(f);
        let f1 = self.v.lift(&|x| shift(f(x), 1));
        Jet1 { v: f0, d: self.d.map(|g| f1 * g) }
    }
    #[inline]
    fn primal(self) -> f64 {
        self.v.primal()
    }
    #[inline]
    fn cst(v: f64) -> Self {
        Jet1::constant(S::cst(v))
    }
    fn mark_small(self) -> Self {
        Jet1 { v: self.v.mark_small(), d: self.d.map(|x| x.mark_small()) }
    }
}

impl<S: Scalar> Scalar for Jet2<S> {
    fn lift(self, f: &dyn Fn(f64) -> [f64; 4]) -> Self {
        let f0 = self.v.lift(f);
        let f1 = self.v.lift(&|x| shift(f(x), 1));
        let f2 = self.v.lift(&|x| shift(f(x), 2));
        let mut h = [S::zero(); 10];
        for i in 0..4 {
            for j in i..4 {
                let k = hidx(i, j);
                h[k] = f1 * self.h[k] + f2 * self.d[i] * self.d[j];
            }
        }
        Jet2 { v: f0, d: self.d.map(|g| f1 * g), h }
    }
    #[inline]
    fn primal(self) -> f64 {
        self.v.primal()
    }
    #[inline]
    fn cst(v: f64) -> Self {
        Jet2::constant(S::cst(v))
    }
    fn mark_small(self) -> Self {
        Jet2 {
            v: self.v.mark_small(),
            d: self.d.map(|x| x.mark_small()),
            h: self.h.map(|x| x.mark_small()),
        }
    }
}

impl<S: Scalar> Scalar for Dual<S> {
    fn lift(self, f: &dyn Fn(f64) -> [f64; 4]) -> Self {
        let f0 = self.hi.lift(f);
        // an absent perturbation stays absent, even where f' is infinite
        if self.lo.primal() == 0.0 {
            return Dual { hi: f0, lo: S::zero() };
        }
        let f1 = self.hi.lift(&|x| shift(f(x), 1));
        Dual { hi: f0, lo: f1 * self.lo }
    }
    #[inline]
    fn primal(self) -> f64 {
        (self.hi + self.lo).primal()
    }
    #[inline]
    fn cst(v: f64) -> Self {
        Dual { hi: S::cst(v), lo: S::zero() }
    }
    fn mark_small(self) -> Self {
        Dual { hi: S::zero(), lo: self.hi + self.lo }
    }
}

// -------------------------------------------------- derivative stacks for lift

fn d_recip(x: f64) -> [f64; 4] {
    let r = 1.0 / x;
    [r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r]
}
fn d_exp(x: f64) -> [f64; 4] {
    let e = x.exp();
    [e; 4]
}
fn d_ln(x: f64) -> [f64; 4] {
    let r = 1.0 / x;
    [x.ln(), r, -r * r, 2.0 * r * r * r]
}
fn d_sqrt(x: f64) -> [f64; 4] {
    let s = x.sqrt();
    [s, 0.5 / s, -0.25 / (s * x), 0.375 / (s * x * x)]
}
fn d_cbrt(x: f64) -> [f64; 4] {
    let c = x.cbrt();
    [c, c / (3.0 * x), -2.0 * c / (9.0 * x * x), 10.0 * c / (27.0 * x * x * x)]
}
fn d_sin(x: f64) -> [f64; 4] {
    let (s, c) = x.sin_cos();
    [s, c, -s, -c]
}
fn d_cos(x: f64) -> [f64; 4] {
    let (s, c) = x.sin_cos();
    [c, -s, -c, s]
}
fn d_tan(x: f64) -> [f64; 4] {
    let t = x.tan();
    let u = 1.0 + t * t;
    [t, u, 2.0 * t * u, 2.0 * u * (1.0 + 3.0 * t * t)]
}
fn d_asin(x: f64) -> [f64; 4] {
    let w = 1.0 - x * x;
    let s = w.sqrt();
    [x.asin(), 1.0 / s, x / (w * s), (1.0 + 2.0 * x * x) / (w * w * s)]
}
fn d_acos(x: f64) -> [f64; 4] {
    let a = d_asin(x);
    [x.acos(), -a[1], -a[2], -a[3]]
}
fn d_atan(x: f64) -> [f64; 4] {
    let w = 1.0 + x * x;
    [x.atan(), 1.0 / w, -2.0 * x / (w * w), (6.0 * x * x - 2.0) / (w * w * w)]
}
fn d_sinh(x: f64) -> [f64; 4] {
    let (s, c) = (x.sinh(), x.cosh());
    [s, c, s, c]
}
fn d_cosh(x: f64) -> [f64; 4] {
    let (s, c) = (x.sinh(), x.cosh());
    [c, s, c, s]
}
fn d_tanh(x: f64) -> [f64; 4] {
    let t = x.tanh();
    let u = 1.0 - t * t;
    [t, u, -2.0 * t * u, -2.0 * u * (1.0 - 3.0 * t * t)]
}
fn d_asinh(x: f64) -> [f64; 4] {
    let w = 1.0 + x * x;
    let s = w.sqrt();
    [x.asinh(), 1.0 / s, -x / (w * s), (2.0 * x * x - 1.0) / (w * w * s)]
}
fn d_acosh(x: f64) -> [f64; 4] {
    let w = x * x - 1.0;
    let s = w.sqrt();
    [x.acosh(), 1.0 / s, -x / (w * s), (2.0 * x * x + 1.0) / (w * w * s)]
}
fn d_atanh(x: f64) -> [f64; 4] {
    let w = 1.0 - x * x;
    [x.atanh(), 1.0 / w, 2.0 * x / (w * w), (2.0 + 6.0 * x * x) / (w * w * w)]
}
fn d_exp_m1(x: f64) -> [f64; 4] {
    let e = x.exp();
    [x.exp_m1(), e, e, e]
}
fn d_ln_1p(x: f64) -> [f64; 4] {
    let r = 1.0 / (1.0 + x);
    [x.ln_1p(), r, -r * r, 2.0 * r * r * r]
}
fn d_exp2(x: f64) -> [f64; 4] {
    let e = x.exp2();
    let l = std::f64::consts::LN_2;
    [e, l * e, l * l * e, l * l * l * e]
}
fn d_log2(x: f64) -> [f64; 4] {
    let r = 1.0 / (x * std::f64::consts::LN_2);
    [x.log2(), r, -r / x, 2.0 * r / (x * x)]
}
fn d_log10(x: f64) -> [f64; 4] {
    let r = 1.0 / (x * std::f64::consts::LN_10);
    [x.log10(), r, -r / x, 2.0 * r / (x * x)]
}

// ------------------------------------------------- shared trait boilerplate

macro_rules! jet_common {
    ($name:ident) => {
        impl<S: Scalar> PartialEq for $name<S> {
            fn eq(&self, o: &Self) -> bool {
                self.primal() == o.primal()
            }
        }
        impl<S: Scalar> PartialOrd for $name<S> {
            fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
                self.primal().partial_cmp(&o.primal())
            }
        }
        impl<S: Scalar> Rem for $name<S> {
            type Output = Self;
            fn rem(self, o: Self) -> Self {
                self - (self / o).trunc() * o
            }
        }
        impl<S: Scalar> AddAssign for $name<S> {
            fn add_assign(&mut self, o: Self) {
                *self = *self + o;
            }
        }
        impl<S: Scalar> SubAssign for $name<S> {
            fn sub_assign(&mut self, o: Self) {
                *self = *self - o;
            }
        }
        impl<S: Scalar> MulAssign for $name<S> {
            fn mul_assign(&mut self, o: Self) {
                *self = *self * o;
            }
        }
        impl<S: Scalar> DivAssign for $name<S> {
            fn div_assign(&mut self, o: Self) {
                *self = *self / o;
            }
        }
        impl<S: Scalar> RemAssign for $name<S> {
            fn rem_assign(&mut self, o: Self) {
                *self = *self % o;
            }
        }
        impl<S: Scalar> Sum for $name<S> {
            fn sum<I: Iterator<Item = Self>>(it: I) -> Self {
                it.fold(Self::zero(), |a, b| a + b)
            }
        }
        impl<S: Scalar> Zero for $name<S> {
            fn zero() -> Self {
                Self::cst(0.0)
            }
            fn is_zero(&self) -> bool {
                self.primal() == 0.0
            }
        }
        impl<S: Scalar> One for $name<S> {
            fn one() -> Self {
                Self::cst(1.0)
            }
        }
        impl<S: Scalar> Num for $name<S> {
            type FromStrRadixErr = <f64 as Num>::FromStrRadixErr;
            fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
                f64::from_str_radix(s, radix).map(Self::cst)
            }
        }
        impl<S: Scalar> ToPrimitive for $name<S> {
            fn to_i64(&self) -> Option<i64> {
                self.primal().to_i64()
            }
            fn to_u64(&self) -> Option<u64> {
                self.primal().to_u64()
            }
            fn to_f64(&self) -> Option<f64> {
                Some(self.primal())
            }
        }
        impl<S: Scalar> NumCast for $name<S> {
            fn from<N: ToPrimitive>(n: N) -> Option<Self> {
                n.to_f64().map(Self::cst)
            }
        }
        impl<S: Scalar> FromPrimitive for $name<S> {
            fn from_i64(n: i64) -> Option<Self> {
                Some(Self::cst(n as f64))
            }
            fn from_u64(n: u64) -> Option<Self> {
                Some(Self::cst(n as f64))
            }
            fn from_f64(n: f64) -> Option<Self> {
                Some(Self::cst(n))
            }
        }
        impl<S: Scalar> FloatConst for $name<S> {
            fn E() -> Self { Self::cst(std::f64::consts::E) }
            fn FRAC_1_PI() -> Self { Self::cst(std::f64::consts::FRAC_1_PI) }
            fn FRAC_1_SQRT_2() -> Self { Self::cst(std::f64::consts::FRAC_1_SQRT_2) }
            fn FRAC_2_PI() -> Self { Self::cst(std::f64::consts::FRAC_2_PI) }
            fn FRAC_2_SQRT_PI() -> Self { Self::cst(std::f64::consts::FRAC_2_SQRT_PI) }
            fn FRAC_PI_2() -> Self { Self::cst(std::f64::consts::FRAC_PI_2) }
            fn FRAC_PI_3() -> Self { Self::cst(std::f64::consts::FRAC_PI_3) }
            fn FRAC_PI_4() -> Self { Self::cst(std::f64::consts::FRAC_PI_4) }
            fn FRAC_PI_6() -> Self { Self::cst(std::f64::consts::FRAC_PI_6) }
            fn FRAC_PI_8() -> Self { Self::cst(std::f64::consts::FRAC_PI_8) }
            fn LN_10() -> Self { Self::cst(std::f64::consts::LN_10) }
            fn LN_2() -> Self { Self::cst(std::f64::consts::LN_2) }
            fn LOG10_E() -> Self { Self::cst(std::f64::consts::LOG10_E) }
            fn LOG2_E() -> Self { Self::cst(std::f64::consts::LOG2_E) }
            fn PI() -> Self { Self::cst(std::f64::consts::PI) }
            fn SQRT_2() -> Self { Self::cst(std::f64::consts::SQRT_2) }
        }
        impl<S: Scalar> Float for $name<S> {
            fn nan() -> Self { Self::cst(f64::NAN) }
            fn infinity() -> Self { Self::cst(f64::INFINITY) }
            fn neg_infinity() -> Self { Self::cst(f64::NEG_INFINITY) }
            fn neg_zero() -> Self { Self::cst(-0.0) }
            fn min_value() -> Self { Self::cst(f64::MIN) }
            fn min_positive_value() -> Self { Self::cst(f64::MIN_POSITIVE) }
            fn max_value() -> Self { Self::cst(f64::MAX) }
            fn epsilon() -> Self { Self::cst(f64::EPSILON) }
            fn is_nan(self) -> bool { self.primal().is_nan() }
            fn is_infinite(self) -> bool { self.primal().is_infinite() }
            fn is_finite(self) -> bool { self.primal().is_finite() }
            fn is_normal(self) -> bool { self.primal().is_normal() }
            fn classify(self) -> FpCategory { self.primal().classify() }
            fn floor(self) -> Self { Self::cst(self.primal().floor()) }
            fn ceil(self) -> Self { Self::cst(self.primal().ceil()) }
            fn round(self) -> Self { Self::cst(self.primal().round()) }
            fn trunc(self) -> Self { Self::cst(self.primal().trunc()) }
            fn fract(self) -> Self { self - self.trunc() }
            fn abs(self) -> Self { if self.primal() < 0.0 { -self } else { self } }
            fn signum(self) -> Self { Self::cst(self.primal().signum()) }
            fn is_sign_positive(self) -> bool { self.primal().is_sign_positive() }
            fn is_sign_negative(self) -> bool { self.primal().is_sign_negative() }
            fn mul_add(self, a: Self, b: Self) -> Self { self * a + b }
            fn recip(self) -> Self { self.lift(&d_recip) }
            fn powi(self, n: i32) -> Self {
                if n < 0 {
                    return self.powi(-n).recip();
                }
                let mut base = self;
                let mut acc = Self::one();
                let mut k = n as u32;
                while k > 0 {
                    if k & 1 == 1 {
                        acc = acc * base;
                    }
                    base = base * base;
                    k >>= 1;
                }
                acc
            }
            fn powf(self, n: Self) -> Self { (self.ln() * n).exp() }
            fn sqrt(self) -> Self { self.lift(&d_sqrt) }
            fn exp(self) -> Self { self.lift(&d_exp) }
            fn exp2(self) -> Self { self.lift(&d_exp2) }
            fn ln(self) -> Self { self.lift(&d_ln) }
            fn log(self, base: Self) -> Self { self.ln() / base.ln() }
            fn log2(self) -> Self { self.lift(&d_log2) }
            fn log10(self) -> Self { self.lift(&d_log10) }
            fn max(self, o: Self) -> Self { if self.primal() >= o.primal() { self } else { o } }
            fn min(self, o: Self) -> Self { if self.primal() <= o.primal() { self } else { o } }
            fn abs_sub(self, o: Self) -> Self {
                if self.primal() > o.primal() { self - o } else { Self::zero() }
            }
            fn cbrt(self) -> Self { self.lift(&d_cbrt) }
            fn hypot(self, o: Self) -> Self { (self * self + o * o).sqrt() }
            fn sin(self) -> Self { self.lift(&d_sin) }
            fn cos(self) -> Self { self.lift(&d_cos) }
            fn tan(self) -> Self { self.lift(&d_tan) }
            fn asin(self) -> Self { self.lift(&d_asin) }
            fn acos(self) -> Self { self.lift(&d_acos) }
            fn atan(self) -> Self { self.lift(&d_atan) }
            fn atan2(self, x: Self) -> Self {
                // angle of (x, self) measured from its primal direction
                let (y0, x0) = (self.primal(), x.primal());
                let theta0 = y0.atan2(x0);
                let cross = x * Self::cst(y0) * Self::cst(-1.0) + self * Self::cst(x0);
                let dot = x * Self::cst(x0) + self * Self::cst(y0);
                Self::cst(theta0) + (cross / dot).atan()
            }
            fn sin_cos(self) -> (Self, Self) { (self.sin(), self.cos()) }
            fn exp_m1(self) -> Self { self.lift(&d_exp_m1) }
            fn ln_1p(self) -> Self { self.lift(&d_ln_1p) }
            fn sinh(self) -> Self { self.lift(&d_sinh) }
            fn cosh(self) -> Self { self.lift(&d_cosh) }
            fn tanh(self) -> Self { self.lift(&d_tanh) }
            fn asinh(self) -> Self { self.lift(&d_asinh) }
            fn acosh(self) -> Self { self.lift(&d_acosh) }
            fn atanh(self) -> Self { self.lift(&d_atanh) }
            fn integer_decode(self) -> (u64, i16, i8) { self.primal().integer_decode() }
        }
    };
}

jet_common!(Jet1);
jet_common!(Jet2);
jet_common!(Dual);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::c;
    use proptest::prelude::*;

    fn f<T: Scalar>(x: &[T; 4]) -> T {
        let r2 = x[0] * x[0] + x[1] * x[1] + c::<T>(0.3) * x[2] * x[3] * x[3];
        (r2.sqrt() + x[3].sin()).exp() / (c::<T>(2.0) + x[1].cos()) + x[2].atan2(x[0]).powi(3)
    }

    fn fd_grad(x: [f64; 4], i: usize) -> f64 {
        let h = 1e-6;
        let mut a = x;
        let mut b = x;
        a[i] += h;
        b[i] -= h;
        (f(&a) - f(&b)) / (2.0 * h)
    }

    #[test]
    fn hessian_packing_is_a_bijection() {
        let mut seen = [false; 10];
        for i in 0..4 {
            for j in i..4 {
                assert!(!seen[hidx(i, j)]);
                seen[hidx(i, j)] = true;
                assert_eq!(hidx(i, j), hidx(j, i));
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    proptest! {
        #[test]
        fn jet_gradients_match_differences(a in 0.2f64..1.0, b in 0.2f64..1.0, cc in 0.2f64..1.0, d in -1.0f64..1.0) {
            let x = [a, b, cc, d];
            let j1 = f(&Jet1::seed(&x));
            let j2 = f(&Jet2::seed(&x));
            prop_assert!((j1.v - f(&x)).abs() < 1e-13 * (1.0 + f(&x).abs()), "{} {}", j1.v, f(&x));
            for i in 0..4 {
                let g = fd_grad(x, i);
                prop_assert!((j1.d[i] - g).abs() < 1e-6 * (1.0 + g.abs()));
                prop_assert!((j2.d[i] - j1.d[i]).abs() < 1e-12 * (1.0 + g.abs()));
            }
            // Hessian column i from differences of the exact gradient
            let h = 1e-5;
            for i in 0..4 {
                let mut p = x; p[i] += h;
                let mut m = x; m[i] -= h;
                let gp = f(&Jet1::seed(&p));
                let gm = f(&Jet1::seed(&m));
                for j in 0..4 {
                    let fd = (gp.d[j] - gm.d[j]) / (2.0 * h);
                    prop_assert!((j2.hess(i, j) - fd).abs() < 1e-5 * (1.0 + fd.abs()));
                }
            }
        }

        #[test]
        fn nested_jet_over_dual_keeps_first_order(hi in 0.5f64..2.0, lo in -1e-3f64..1e-3) {
            let x = Dual::new(hi, lo);
            let y = (x * x).exp().ln() / x;
            // y = x exactly, so the split must be preserved
            prop_assert!((y.hi - hi).abs() < 1e-14 * hi);
            prop_assert!((y.lo - lo).abs() < 1e-12);
        }
    }

    #[test]
    fn mark_small_moves_everything_into_perturbation() {
        let x = Dual::new(3.0, 0.5).mark_small();
        assert_eq!(x.hi, 0.0);
        assert_eq!(x.lo, 3.5);
        // products of two perturbations vanish
        let y = x * x;
        assert_eq!(y.hi, 0.0);
        assert_eq!(y.lo, 0.0);
    }

    #[test]
    fn second_derivative_through_jet_of_dual() {
        // d²/dx² exp(x) at x = 0.4 with a tagged perturbation riding along
        let x = [Dual::new(0.4, 1e-200), Dual::cst(0.0), Dual::cst(0.0), Dual::cst(0.0)];
        let j = Jet2::seed(&x);
        let e = j[0].exp();
        assert!((e.hess(0, 0).hi - 0.4f64.exp()).abs() < 1e-15);
        assert!((e.hess(0, 0).lo - 0.4f64.exp() * 1e-200).abs() < 1e-214);
    }

    #[test]
    fn unperturbed_singular_lift_stays_finite() {
        let z = Dual::cst(0.0f64).sqrt();
        assert_eq!((z.hi, z.lo), (0.0, 0.0));
        let p = Dual::new(0.0f64, 1e-3).sqrt();
        assert!(p.lo.is_nan() || p.lo.is_infinite());
    }

    #[test]
    fn atan2_branches() {
        for &(y, x) in &[(1.0, -1.0), (-1.0, -1.0), (0.5, 2.0), (-2.0, 0.1)] {
            let j = Jet1::var(y, 0).atan2(Jet1::var(x, 1));
            let r2 = x * x + y * y;
            assert!((j.v - f64::atan2(y, x)).abs() < 1e-15);
            assert!((j.d[0] - x / r2).abs() < 1e-14);
            assert!((j.d[1] + y / r2).abs() < 1e-14);
        }
    }
}
