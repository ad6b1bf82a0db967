//! Scalar curvature of the diffused metric in terms of connection
//! coefficients, the coefficient relations under the deformation and the
//! curvature components of the deformed coframe.
//!
//! Index conventions: `a[i][j][k] = a_{ijk}` and `da[l][i][j][k] = a_{ijk,l}`,
//! zero-based in code. The closures `A(i, j, k)` and `D(i, j, k, l)` below
//! take one-based indices so the formulas read like their printed form.

use rand::Rng;
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub type Coef<T> = [[[T; 4]; 4]; 4];
pub type DCoef<T> = [Coef<T>; 4];

/// Minimal field interface so the identities can be checked both in
/// floating point and in exact rational arithmetic.
pub trait Field:
    Copy + PartialEq + Debug + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn int(n: i64) -> Self {
        let mut acc = Self::zero();
        for _ in 0..n.unsigned_abs() {
            acc = acc + Self::one();
        }
        if n < 0 {
            -acc
        } else {
            acc
        }
    }
}

impl Field for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn int(n: i64) -> Self {
        n as f64
    }
}

/// Forward-mode dual number over a [`Field`], for directional derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fwd<T> {
    pub v: T,
    pub d: T,
}

impl<T: Field> Add for Fwd<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Fwd { v: self.v + o.v, d: self.d + o.d }
    }
}
impl<T: Field> Sub for Fwd<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Fwd { v: self.v - o.v, d: self.d - o.d }
    }
}
impl<T: Field> Mul for Fwd<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Fwd { v: self.v * o.v, d: self.d * o.v + self.v * o.d }
    }
}
impl<T: Field> Div for Fwd<T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        Fwd { v: self.v / o.v, d: (self.d * o.v - self.v * o.d) / (o.v * o.v) }
    }
}
impl<T: Field> Neg for Fwd<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Fwd { v: -self.v, d: -self.d }
    }
}
impl<T: Field> Field for Fwd<T> {
    fn zero() -> Self {
        Fwd { v: T::zero(), d: T::zero() }
    }
    fn one() -> Self {
        Fwd { v: T::one(), d: T::zero() }
    }
    fn int(n: i64) -> Self {
        Fwd { v: T::int(n), d: T::zero() }
    }
}

fn half<T: Field>() -> T {
    T::one() / T::int(2)
}

fn quarter<T: Field>() -> T {
    T::one() / T::int(4)
}

fn sq<T: Field>(x: T) -> T {
    x * x
}

/// `3a_{122} + 2a_{133} + 2a_{144}`, the coefficient of `Y'`.
pub fn y1_factor<T: Field>(a: &Coef<T>) -> T {
    T::int(3) * a[0][1][1] + T::int(2) * a[0][2][2] + T::int(2) * a[0][3][3]
}

/// The `Y`-independent block `I₀`.
pub fn i0<T: Field>(a: &Coef<T>, da: &DCoef<T>) -> T {
    let aa = |i: usize, j: usize, k: usize| a[i - 1][j - 1][k - 1];
    let dd = |i: usize, j: usize, k: usize, l: usize| da[l - 1][i - 1][j - 1][k - 1];
    let h = dd(2, 3, 2, 3) + dd(2, 4, 2, 4) + dd(3, 4, 3, 4) + dd(4, 3, 4, 3)
        - sq(aa(2, 3, 2))
        - sq(aa(2, 4, 2))
        - sq(aa(3, 4, 3))
        - sq(aa(4, 3, 4))
        + aa(2, 4, 2) * aa(4, 3, 3)
        + aa(2, 3, 2) * aa(3, 4, 4)
        + aa(3, 4, 2) * aa(2, 3, 4)
        - aa(3, 4, 2) * aa(2, 4, 3)
        + half::<T>() * sq(aa(2, 3, 4))
        + half::<T>() * sq(aa(2, 4, 3))
        - aa(2, 4, 3) * aa(2, 3, 4);
    T::int(2) * h
}

/// The two brace blocks multiplying `−2(Y+1)` and `−2/(Y+1)`.
fn blocks<T: Field>(a: &Coef<T>, da: &DCoef<T>) -> (T, T) {
    let aa = |i: usize, j: usize, k: usize| a[i - 1][j - 1][k - 1];
    let dd = |i: usize, j: usize, k: usize, l: usize| da[l - 1][i - 1][j - 1][k - 1];
    let mut x1 = T::zero();
    for i in 2..=4 {
        x1 = x1 + dd(1, i, i, 1) + sq(aa(1, i, i));
    }
    x1 = x1
        + sq(aa(1, 3, 4))
        + aa(1, 2, 2) * aa(1, 3, 3)
        + aa(1, 2, 2) * aa(1, 4, 4)
        + aa(1, 3, 3) * aa(1, 4, 4)
        + quarter::<T>() * sq(aa(2, 4, 3) - aa(2, 3, 4));
    let x2 = dd(2, 3, 3, 2)
        + dd(2, 4, 4, 2)
        + sq(aa(2, 3, 3))
        + sq(aa(2, 4, 4))
        + aa(2, 3, 3) * aa(2, 4, 4)
        + quarter::<T>() * sq(aa(2, 4, 3) + aa(2, 3, 4));
    (x1, x2)
}

/// Scalar curvature of the diffused metric from the coefficients of the
/// undeformed coframe and `Y`, `Y'`, `Y''` (derivatives in `r_g`).
/// `Y = Y' = Y'' = 0` gives the scalar curvature of the base metric.
pub fn scalar_formula<T: Field>(a: &Coef<T>, da: &DCoef<T>, y: T, yp: T, ypp: T) -> T {
    let (x1, x2) = blocks(a, da);
    let two = T::int(2);
    let one = T::one();
    let mut s = -ypp - yp * y1_factor(a) - two * (y + one) * x1 - two / (y + one) * x2;
    for i in 2..4 {
        let t = y * a[1][i][0] - (y + two) * a[1][0][i];
        s = s - half::<T>() * t * t;
    }
    s + i0(a, da)
}

/// `I₁`, the coefficient of `−Y` in the scalar-curvature difference.
pub fn i1<T: Field>(a: &Coef<T>, da: &DCoef<T>, y: T) -> T {
    let aa = |i: usize, j: usize, k: usize| a[i - 1][j - 1][k - 1];
    let (x1, x2) = blocks(a, da);
    let two = T::int(2);
    let mixed = y * (sq(aa(2, 3, 1)) + sq(aa(2, 4, 1)))
        - two * (y + two) * (aa(2, 1, 3) * aa(2, 3, 1) + aa(2, 1, 4) * aa(2, 4, 1))
        + (y + T::int(4)) * (sq(aa(2, 1, 3)) + sq(aa(2, 1, 4)));
    two * (x1 + quarter::<T>() * mixed - x2 / (y + T::one()))
}

/// `s(g_Y) − s(g) = −Y'' − Y'(3a_{122} + 2a_{133} + 2a_{144}) − Y·I₁`.
pub fn scalar_diff<T: Field>(a: &Coef<T>, da: &DCoef<T>, y: T, yp: T, ypp: T) -> T {
    -ypp - yp * y1_factor(a) - y * i1(a, da, y)
}

/// Coefficients of the deformed coframe `(αω₁, ω₂/α, ω₃, ω₄)` from those of
/// the original coframe, `α = (1+Y)^{-1/2}` and `α' = dα/dr_g`.
pub fn tilde_coeffs<T: Field>(a: &Coef<T>, al: T, alp: T) -> Coef<T> {
    let aa = |i: usize, j: usize, k: usize| a[i - 1][j - 1][k - 1];
    let one = T::one();
    let inv2 = one / (al * al);
    let mut t: [[[Option<T>; 4]; 4]; 4] = [[[None; 4]; 4]; 4];
    let mut set = |i: usize, j: usize, k: usize, v: T| t[i - 1][j - 1][k - 1] = Some(v);
    set(2, 1, 2, alp / (al * al) + aa(2, 1, 2) / al);
    for j in 3..=4 {
        set(2, j, 2, aa(2, j, 2));
        set(j, 1, j, aa(j, 1, j) / al);
        set(j, 2, j, al * aa(j, 2, j));
        set(2, j, 1, half::<T>() * (one - inv2) * aa(2, 1, j) + half::<T>() * (one + inv2) * aa(2, j, 1));
        set(2, 1, j, half::<T>() * (one + inv2) * aa(2, 1, j) + half::<T>() * (one - inv2) * aa(2, j, 1));
    }
    set(3, 4, 3, aa(3, 4, 3));
    set(4, 3, 4, aa(4, 3, 4));
    set(1, 4, 3, aa(1, 4, 3) / al);
    set(3, 4, 1, aa(3, 4, 1) / al);
    let h2 = half::<T>();
    set(
        3,
        4,
        2,
        (aa(2, 4, 3) - aa(2, 3, 4)) / (T::int(2) * al) + al * h2 * (T::int(2) * aa(3, 4, 2) + aa(2, 3, 4) - aa(2, 4, 3)),
    );
    set(2, 3, 4, (aa(2, 3, 4) - aa(2, 4, 3)) / (T::int(2) * al) + al * h2 * (aa(2, 4, 3) + aa(2, 3, 4)));
    set(2, 4, 3, (aa(2, 4, 3) - aa(2, 3, 4)) / (T::int(2) * al) + al * h2 * (aa(2, 4, 3) + aa(2, 3, 4)));
    // closure under antisymmetry in (i, j) and the symmetry of a_{1jk}
    loop {
        let mut changed = false;
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    if let Some(v) = t[i][j][k] {
                        if t[j][i][k].is_none() {
                            t[j][i][k] = Some(-v);
                            changed = true;
                        }
                        if i == 0 && t[0][k][j].is_none() {
                            t[0][k][j] = Some(v);
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    for i in 0..4 {
        for k in 0..4 {
            t[i][i][k].get_or_insert(T::zero());
        }
    }
    for i in 1..4 {
        t[0][i][0].get_or_insert(T::zero());
        t[i][0][0].get_or_insert(T::zero());
    }
    std::array::from_fn(|i| {
        std::array::from_fn(|j| std::array::from_fn(|k| t[i][j][k].expect("relation table covers every entry")))
    })
}

/// Deformed coefficients and their derivatives along the deformed coframe.
/// `α` depends on `r_g` only, so it varies along `ω₁` alone.
pub fn tilde_with_derivs<T: Field>(a: &Coef<T>, da: &DCoef<T>, al: T, alp: T, alpp: T) -> (Coef<T>, DCoef<T>) {
    let t = tilde_coeffs(a, al, alp);
    // coframe rescaling: f_{;1} = f_{,1}/α, f_{;2} = α f_{,2}
    let scale = [T::one() / al, al, T::one(), T::one()];
    let dt = std::array::from_fn(|l| {
        let af: Coef<Fwd<T>> =
            std::array::from_fn(|i| std::array::from_fn(|j| std::array::from_fn(|k| Fwd { v: a[i][j][k], d: da[l][i][j][k] })));
        let (dal, dalp) = if l == 0 { (alp, alpp) } else { (T::zero(), T::zero()) };
        let tf = tilde_coeffs(&af, Fwd { v: al, d: dal }, Fwd { v: alp, d: dalp });
        std::array::from_fn(|i| std::array::from_fn(|j| std::array::from_fn(|k| scale[l] * tf[i][j][k].d)))
    });
    (t, dt)
}

/// Curvature components `R̃_{ijij}` of the deformed coframe and the
/// assembled `s/2 = −ΣR̃_{ijij}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TildeCurvature<T> {
    pub r1212: T,
    pub r1313: T,
    pub r1414: T,
    pub r2323: T,
    pub r2424: T,
    pub r3434: T,
    pub half_scalar: T,
}

pub fn tilde_curvature<T: Field>(t: &Coef<T>, dt: &DCoef<T>) -> TildeCurvature<T> {
    let aa = |i: usize, j: usize, k: usize| t[i - 1][j - 1][k - 1];
    let dd = |i: usize, j: usize, k: usize, l: usize| dt[l - 1][i - 1][j - 1][k - 1];
    let two = T::int(2);
    let r1212 = dd(1, 2, 2, 1)
        + sq(aa(1, 2, 2))
        + sq(aa(1, 2, 3))
        + sq(aa(1, 2, 4))
        + two * (aa(1, 2, 3) * aa(3, 2, 1) + aa(1, 2, 4) * aa(4, 2, 1));
    let r1313 = dd(1, 3, 3, 1)
        + sq(aa(1, 3, 2))
        + sq(aa(1, 3, 3))
        + sq(aa(1, 3, 4))
        + two * (aa(1, 3, 2) * aa(2, 3, 1) + aa(1, 3, 4) * aa(4, 3, 1));
    let r1414 = dd(1, 4, 4, 1)
        + sq(aa(1, 4, 2))
        + sq(aa(1, 4, 3))
        + sq(aa(1, 4, 4))
        + two * (aa(1, 4, 2) * aa(2, 4, 1) + aa(1, 4, 3) * aa(3, 4, 1));
    let r2323 = dd(2, 3, 3, 2) - dd(2, 3, 2, 3) + aa(2, 3, 4) * (aa(4, 3, 2) - aa(4, 2, 3))
        + sq(aa(2, 3, 2))
        + sq(aa(2, 3, 3))
        + aa(1, 2, 2) * aa(1, 3, 3)
        + aa(4, 2, 2) * aa(4, 3, 3)
        - sq(aa(1, 2, 3))
        + aa(2, 4, 3) * aa(4, 3, 2);
    let r2424 = dd(2, 4, 4, 2) - dd(2, 4, 2, 4) + aa(2, 4, 3) * (aa(3, 4, 2) - aa(3, 2, 4))
        + sq(aa(2, 4, 2))
        + sq(aa(2, 4, 4))
        + aa(1, 2, 2) * aa(1, 4, 4)
        + aa(3, 2, 2) * aa(3, 4, 4)
        - sq(aa(1, 2, 4))
        + aa(2, 3, 4) * aa(3, 4, 2);
    let r3434 = dd(3, 4, 4, 3) - dd(3, 4, 3, 4) + aa(3, 4, 2) * (aa(2, 4, 3) - aa(2, 3, 4))
        + sq(aa(3, 4, 3))
        + sq(aa(3, 4, 4))
        + aa(1, 3, 3) * aa(1, 4, 4)
        + aa(2, 3, 3) * aa(2, 4, 4)
        - sq(aa(1, 3, 4))
        + aa(3, 2, 4) * aa(2, 4, 3);
    TildeCurvature {
        r1212,
        r1313,
        r1414,
        r2323,
        r2424,
        r3434,
        half_scalar: -(r1212 + r1313 + r1414 + r2323 + r2424 + r3434),
    }
}

/// Random coefficient array with entries in `[−bound, bound]` that is
/// antisymmetric in `(i, j)` and symmetric in `(j, k)` when `i = 1`, as the
/// coefficients of a coframe with closed first form are.
pub fn random_structured<R: Rng>(rng: &mut R, bound: f64) -> Coef<f64> {
    let raw: Coef<f64> =
        std::array::from_fn(|_| std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-bound..bound))));
    let mut a: Coef<f64> =
        std::array::from_fn(|i| std::array::from_fn(|j| std::array::from_fn(|k| 0.5 * (raw[i][j][k] - raw[j][i][k]))));
    let s: [[f64; 4]; 4] = std::array::from_fn(|j| std::array::from_fn(|k| 0.5 * (a[0][j][k] + a[0][k][j])));
    a[0] = s;
    for i in 0..4 {
        a[i][0] = s[i].map(|v| -v);
    }
    a[0][0] = [0.0; 4];
    a
}

/// Residuals of the two long identities over random coefficient arrays.
#[derive(Clone, Debug, serde::Serialize)]
pub struct IdentityReport {
    pub trials: usize,
    pub bound: f64,
    /// `max |(formula(Y) − formula(0)) − difference(Y)|`.
    pub max_difference_residual: f64,
    /// `max |2·(−ΣR̃) − formula(Y)|` with `1/α² = 1 + Y`.
    pub max_assembly_residual: f64,
    pub tol: f64,
}

impl IdentityReport {
    pub fn passed(&self) -> bool {
        self.max_difference_residual < self.tol && self.max_assembly_residual < self.tol
    }
}

pub fn identity_trials<R: Rng>(rng: &mut R, trials: usize, bound: f64, tol: f64) -> IdentityReport {
    let mut rep =
        IdentityReport { trials, bound, max_difference_residual: 0.0, max_assembly_residual: 0.0, tol };
    for _ in 0..trials {
        let a = random_structured(rng, bound);
        let da: DCoef<f64> = std::array::from_fn(|_| random_structured(rng, bound));
        let (y, yp, ypp) = (rng.random_range(0.0..bound), rng.random_range(-bound..bound), rng.random_range(-bound..bound));
        let lhs = scalar_formula(&a, &da, y, yp, ypp) - scalar_formula(&a, &da, 0.0, 0.0, 0.0);
        let d = (lhs - scalar_diff(&a, &da, y, yp, ypp)).abs();
        rep.max_difference_residual = rep.max_difference_residual.max(d);

        let al = rng.random_range(0.75..1.5f64);
        let (alp, alpp) = (rng.random_range(-1.0..1.0f64), rng.random_range(-1.0..1.0f64));
        let (t, dt) = tilde_with_derivs(&a, &da, al, alp, alpp);
        let cur = tilde_curvature(&t, &dt);
        let y = 1.0 / (al * al) - 1.0;
        let yp = -2.0 * alp / al.powi(3);
        let ypp = -2.0 * (alpp / al.powi(3) - 3.0 * alp * alp / al.powi(4));
        let s = scalar_formula(&a, &da, y, yp, ypp);
        rep.max_assembly_residual = rep.max_assembly_residual.max((2.0 * cur.half_scalar - s).abs());
    }
    rep
}

/// The coefficient table of the Euclidean radial coframe at distance `r`.
pub fn euclidean_table(r: f64) -> Coef<f64> {
    let mut a = [[[0.0; 4]; 4]; 4];
    let inv = 1.0 / r;
    let mut put = |i: usize, j: usize, k: usize, v: f64| {
        a[i - 1][j - 1][k - 1] = v;
        a[j - 1][i - 1][k - 1] = -v;
    };
    put(1, 2, 2, inv);
    put(1, 3, 3, inv);
    put(1, 4, 4, inv);
    put(2, 3, 4, -inv);
    put(3, 4, 2, -inv);
    put(4, 2, 3, -inv);
    a
}

/// Frame derivatives of [`euclidean_table`]: `d(1/r) = −ω₁/r²`.
pub fn euclidean_table_derivs(r: f64) -> DCoef<f64> {
    let mut da = [[[[0.0; 4]; 4]; 4]; 4];
    let a = euclidean_table(r);
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                da[0][i][j][k] = -a[i][j][k] / r;
            }
        }
    }
    da
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type Q = Ratio<i128>;

    impl Field for Q {
        fn zero() -> Self {
            Ratio::from_integer(0)
        }
        fn one() -> Self {
            Ratio::from_integer(1)
        }
        fn int(n: i64) -> Self {
            Ratio::from_integer(n as i128)
        }
    }

    fn structured_q(rng: &mut ChaCha8Rng) -> Coef<Q> {
        let a = random_structured(rng, 2.0);
        a.map(|m| m.map(|r| r.map(|v| Ratio::new((v * 8.0).round() as i128, 8))))
    }

    fn structured_q_exact(rng: &mut ChaCha8Rng) -> Coef<Q> {
        // rounding can break the symmetry of a_{1jk}; rebuild it exactly
        let mut a = structured_q(rng);
        for j in 0..4 {
            for k in 0..4 {
                a[0][k][j] = a[0][j][k];
                a[j][0][k] = -a[0][j][k];
            }
        }
        for k in 0..4 {
            a[0][0][k] = Q::zero();
        }
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    if i > j {
                        a[i][j][k] = -a[j][i][k];
                    }
                }
            }
        }
        a
    }

    #[test]
    fn flat_table_has_zero_scalar_and_the_flat_diffusion_law() {
        let r = 0.7;
        let (a, da) = (euclidean_table(r), euclidean_table_derivs(r));
        assert!(scalar_formula(&a, &da, 0.0, 0.0, 0.0).abs() < 1e-13);
        let (y, yp, ypp) = (0.3, -0.2, 0.5);
        let expect = -ypp - 7.0 * yp / r - 8.0 * y / (r * r);
        assert!((scalar_formula(&a, &da, y, yp, ypp) - expect).abs() < 1e-12);
        assert!((scalar_diff(&a, &da, y, yp, ypp) - expect).abs() < 1e-12);
    }

    #[test]
    fn difference_identity_is_exact_in_rationals() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let a = structured_q(&mut rng);
            let da: DCoef<Q> = std::array::from_fn(|_| structured_q(&mut rng));
            let y = Ratio::new(rng.random_range(0..=8), 8);
            let yp = Ratio::new(rng.random_range(-8..=8), 8);
            let ypp = Ratio::new(rng.random_range(-8..=8), 8);
            let lhs = scalar_formula(&a, &da, y, yp, ypp) - scalar_formula(&a, &da, Q::zero(), Q::zero(), Q::zero());
            assert_eq!(lhs, scalar_diff(&a, &da, y, yp, ypp));
        }
    }

    #[test]
    fn appendix_assembly_is_exact_in_rationals() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let a = structured_q_exact(&mut rng);
            let da: DCoef<Q> = std::array::from_fn(|_| structured_q_exact(&mut rng));
            // α = p/q with 1/α² = 1 + Y
            let al = Ratio::new(rng.random_range(3..=6), 4);
            let alp = Ratio::new(rng.random_range(-4..=4), 4);
            let alpp = Ratio::new(rng.random_range(-4..=4), 4);
            let (t, dt) = tilde_with_derivs(&a, &da, al, alp, alpp);
            let cur = tilde_curvature(&t, &dt);
            let one = Q::one();
            let two = Q::int(2);
            let y = one / (al * al) - one;
            let yp = -two * alp / (al * al * al);
            let ypp = -two * (alpp / (al * al * al) - Q::int(3) * alp * alp / (al * al * al * al));
            let s = scalar_formula(&a, &da, y, yp, ypp);
            assert_eq!(cur.half_scalar * two, s);
        }
    }

    #[test]
    fn identities_hold_in_floating_point() {
        let rep = identity_trials(&mut ChaCha8Rng::seed_from_u64(5), 100, 2.0, 1e-9);
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn tilde_table_is_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_structured(&mut rng, 2.0);
        let t = tilde_coeffs(&a, 1.3, 0.2);
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    assert_eq!(t[i][j][k], -t[j][i][k]);
                    assert_eq!(t[0][j][k], t[0][k][j]);
                }
            }
        }
        // identity at α = 1, α' = 0 on structured arrays with a_{1j1} = 0
        let mut b = a;
        for j in 0..4 {
            b[0][j][0] = 0.0;
            b[j][0][0] = 0.0;
        }
        let u = tilde_coeffs(&b, 1.0, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    assert!((u[i][j][k] - b[i][j][k]).abs() < 1e-15, "{i}{j}{k}");
                }
            }
        }
        let e = euclidean_table(0.9);
        let te = tilde_coeffs(&e, 0.8, 0.1);
        for j in 2..4 {
            assert_eq!(te[1][j][1], e[1][j][1]);
        }
    }

    #[test]
    fn zero_coefficients_have_zero_curvature() {
        let z = [[[0.0; 4]; 4]; 4];
        let c = tilde_curvature(&z, &[z; 4]);
        assert_eq!(c.half_scalar, 0.0);
        let e = euclidean_table(1.7);
        let (t, dt) = tilde_with_derivs(&e, &euclidean_table_derivs(1.7), 1.0, 0.0, 0.0);
        assert!(tilde_curvature(&t, &dt).half_scalar.abs() < 1e-14);
    }
}
