//! Small fixed-size linear algebra on 4x4 matrices of any [`Scalar`].
//!
//! Generic routines avoid pivoting so that jets stay smooth; every caller
//! works with positive-definite or near-identity matrices. The `f64`
//! eigen-based logarithm delegates to nalgebra.

use crate::scalar::{c, Scalar};
use nalgebra::{Matrix4, SymmetricEigen};

pub type V4<T> = [T; 4];
pub type M4<T> = [[T; 4]; 4];

#[inline]
pub fn zeros<T: Scalar>() -> M4<T> {
    [[T::zero(); 4]; 4]
}

#[inline]
pub fn eye<T: Scalar>() -> M4<T> {
    let mut m = zeros();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = T::one();
    }
    m
}

pub fn diag<T: Scalar>(d: [f64; 4]) -> M4<T> {
    let mut m = zeros();
    for i in 0..4 {
        m[i][i] = c(d[i]);
    }
    m
}

/// Embed an `f64` matrix.
pub fn lift_m<T: Scalar>(a: &M4<f64>) -> M4<T> {
    a.map(|r| r.map(c))
}

pub fn primal_m<T: Scalar>(a: &M4<T>) -> M4<f64> {
    a.map(|r| r.map(|x| x.primal()))
}

pub fn primal_v<T: Scalar>(a: &V4<T>) -> V4<f64> {
    a.map(|x| x.primal())
}

pub fn lift_v<T: Scalar>(a: &V4<f64>) -> V4<T> {
    a.map(c)
}

#[inline]
pub fn add<T: Scalar>(a: &M4<T>, b: &M4<T>) -> M4<T> {
    std::array::from_fn(|i| std::array::from_fn(|j| a[i][j] + b[i][j]))
}

#[inline]
pub fn sub<T: Scalar>(a: &M4<T>, b: &M4<T>) -> M4<T> {
    std::array::from_fn(|i| std::array::from_fn(|j| a[i][j] - b[i][j]))
}

#[inline]
pub fn scale<T: Scalar>(a: &M4<T>, s: T) -> M4<T> {
    a.map(|r| r.map(|x| x * s))
}

#[inline]
pub fn transpose<T: Scalar>(a: &M4<T>) -> M4<T> {
    std::array::from_fn(|i| std::array::from_fn(|j| a[j][i]))
}

#[inline]
pub fn mul<T: Scalar>(a: &M4<T>, b: &M4<T>) -> M4<T> {
    std::array::from_fn(|i| {
        std::array::from_fn(|j| a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j] + a[i][3] * b[3][j])
    })
}

#[inline]
pub fn mat_vec<T: Scalar>(a: &M4<T>, v: &V4<T>) -> V4<T> {
    std::array::from_fn(|i| a[i][0] * v[0] + a[i][1] * v[1] + a[i][2] * v[2] + a[i][3] * v[3])
}

#[inline]
pub fn dot<T: Scalar>(a: &V4<T>, b: &V4<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

/// Bilinear form `uᵀ A v`.
#[inline]
pub fn form<T: Scalar>(a: &M4<T>, u: &V4<T>, v: &V4<T>) -> T {
    dot(u, &mat_vec(a, v))
}

#[inline]
pub fn outer<T: Scalar>(u: &V4<T>, v: &V4<T>) -> M4<T> {
    std::array::from_fn(|i| std::array::from_fn(|j| u[i] * v[j]))
}

/// Symmetric product `(u⊗v + v⊗u)/2`.
pub fn sym_outer<T: Scalar>(u: &V4<T>, v: &V4<T>) -> M4<T> {
    let h = c::<T>(0.5);
    std::array::from_fn(|i| std::array::from_fn(|j| h * (u[i] * v[j] + v[i] * u[j])))
}

pub fn symmetrize<T: Scalar>(a: &M4<T>) -> M4<T> {
    let h = c::<T>(0.5);
    std::array::from_fn(|i| std::array::from_fn(|j| h * (a[i][j] + a[j][i])))
}

/// Max-abs entry of an `f64` matrix.
pub fn max_abs(a: &M4<f64>) -> f64 {
    a.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
}

/// Max-abs entrywise difference.
pub fn max_abs_diff(a: &M4<f64>, b: &M4<f64>) -> f64 {
    max_abs(&sub(a, b))
}

/// Infinity (max row sum) norm.
pub fn norm_inf(a: &M4<f64>) -> f64 {
    a.iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

#[inline]
const fn others(k: usize) -> [usize; 3] {
    match k {
        0 => [1, 2, 3],
        1 => [0, 2, 3],
        2 => [0, 1, 3],
        _ => [0, 1, 2],
    }
}

#[inline]
fn minor3<T: Scalar>(a: &M4<T>, r: usize, col: usize) -> T {
    let rows = others(r);
    let cols = others(col);
    let m = |i: usize, j: usize| a[rows[i]][cols[j]];
    m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
        + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0))
}

pub fn det<T: Scalar>(a: &M4<T>) -> T {
    let mut d = T::zero();
    for j in 0..4 {
        let term = a[0][j] * minor3(a, 0, j);
        d = if j % 2 == 0 { d + term } else { d - term };
    }
    d
}

/// Inverse through the adjugate. Returns `None` when the determinant's
/// primal is zero or not finite.
pub fn inv<T: Scalar>(a: &M4<T>) -> Option<M4<T>> {
    let mut cof = zeros::<T>();
    for i in 0..4 {
        for j in 0..4 {
            let m = minor3(a, i, j);
            cof[i][j] = if (i + j) % 2 == 0 { m } else { -m };
        }
    }
    let d = a[0][0] * cof[0][0] + a[0][1] * cof[0][1] + a[0][2] * cof[0][2] + a[0][3] * cof[0][3];
    let dp = d.primal();
    if dp == 0.0 || !dp.is_finite() {
        return None;
    }
    let r = d.recip();
    Some(std::array::from_fn(|i| std::array::from_fn(|j| cof[j][i] * r)))
}

/// Inverse of a symmetric matrix, exactly symmetrized.
pub fn inv_sym<T: Scalar>(a: &M4<T>) -> Option<M4<T>> {
    inv(a).map(|m| symmetrize(&m))
}

/// Matrix exponential by scaling and squaring with a Taylor core.
pub fn expm<T: Scalar>(a: &M4<T>) -> M4<T> {
    let n = norm_inf(&primal_m(a));
    let mut k = 0;
    let mut s = 1.0;
    while n / s > 0.25 {
        s *= 2.0;
        k += 1;
    }
    let b = scale(a, c(1.0 / s));
    let mut term = eye::<T>();
    let mut acc = eye::<T>();
    for i in 1..=18 {
        term = scale(&mul(&term, &b), c(1.0 / i as f64));
        acc = add(&acc, &term);
    }
    for _ in 0..k {
        acc = mul(&acc, &acc);
    }
    acc
}

/// Principal square root via the Denman–Beavers iteration (for matrices
/// with positive spectrum). Iteration count is fixed so jets stay smooth.
pub fn sqrtm<T: Scalar>(a: &M4<T>) -> Option<M4<T>> {
    let mut y = *a;
    let mut z = eye::<T>();
    let h = c::<T>(0.5);
    for _ in 0..60 {
        let yi = inv(&y)?;
        let zi = inv(&z)?;
        let yn = scale(&add(&y, &zi), h);
        let zn = scale(&add(&z, &yi), h);
        let delta = max_abs_diff(&primal_m(&yn), &primal_m(&y));
        y = yn;
        z = zn;
        if delta < 1e-16 * (1.0 + max_abs(&primal_m(&y))) {
            // one more sweep to settle the derivative parts
            y = scale(&add(&y, &inv(&z)?), h);
            break;
        }
    }
    Some(y)
}

/// Principal logarithm of a matrix with positive spectrum: inverse scaling
/// and squaring down to near the identity, then a Gregory series.
pub fn logm<T: Scalar>(a: &M4<T>) -> Option<M4<T>> {
    let mut x = *a;
    let mut k = 0;
    while max_abs_diff(&primal_m(&x), &eye()) > 0.05 {
        x = sqrtm(&x)?;
        k += 1;
        if k > 60 {
            return None;
        }
    }
    // log X = 2 atanh((X - I)(X + I)^{-1})
    let i = eye::<T>();
    let z = mul(&sub(&x, &i), &inv(&add(&x, &i))?);
    let z2 = mul(&z, &z);
    let mut term = z;
    let mut acc = z;
    for n in 1..=20 {
        term = mul(&term, &z2);
        acc = add(&acc, &scale(&term, c(1.0 / (2 * n + 1) as f64)));
    }
    Some(scale(&acc, c(2.0 * (1u64 << k) as f64)))
}

fn to_na(a: &M4<f64>) -> Matrix4<f64> {
    Matrix4::from_fn(|i, j| a[i][j])
}

fn from_na(m: &Matrix4<f64>) -> M4<f64> {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a symmetric matrix.
pub fn sym_eigen(a: &M4<f64>) -> ([f64; 4], M4<f64>) {
    let e = SymmetricEigen::new(to_na(&symmetrize(a)));
    let mut idx = [0usize, 1, 2, 3];
    idx.sort_by(|&i, &j| e.eigenvalues[i].total_cmp(&e.eigenvalues[j]));
    let vals = idx.map(|i| e.eigenvalues[i]);
    let vecs = std::array::from_fn(|r| std::array::from_fn(|cc| e.eigenvectors[(r, idx[cc])]));
    (vals, vecs)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eig(a: &M4<f64>) -> f64 {
    sym_eigen(a).0[0]
}

/// `V diag(f(λ)) Vᵀ` for a symmetric matrix.
pub fn sym_apply(a: &M4<f64>, f: impl Fn(f64) -> f64) -> M4<f64> {
    let (vals, v) = sym_eigen(a);
    let mut d = Matrix4::<f64>::zeros();
    for i in 0..4 {
        d[(i, i)] = f(vals[i]);
    }
    let vn = to_na(&v);
    from_na(&(vn * d * vn.transpose()))
}

/// Solve `A x = b` for an `f64` 4x4 system with partial pivoting.
pub fn solve(a: &M4<f64>, b: &V4<f64>) -> Option<V4<f64>> {
    to_na(a).lu().solve(&nalgebra::Vector4::from_column_slice(b)).map(|v| [v[0], v[1], v[2], v[3]])
}
