//! Charts, metric fields, symplectic compatibility, the J-(anti-)invariant
//! splitting, metric exponential and logarithm, and two independent
//! scalar-curvature oracles (finite differences and exact jets).

use crate::error::{Error, Result};
use crate::jet::{Jet1, Jet2};
use crate::linalg::{self, M4, V4};
use crate::scalar::{c, Scalar};

pub type Point = [f64; 4];
/// Christoffel symbols indexed `[k][i][j]` for Γ^k_{ij}.
pub type Gamma<T> = [[[T; 4]; 4]; 4];

// ------------------------------------------------------------------ charts

/// Where a metric is defined.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ChartDomain {
    Ball { center: Point, radius: f64 },
    Torus { period: [f64; 4] },
}

impl ChartDomain {
    pub fn ball(center: Point, radius: f64) -> Self {
        assert!(radius > 0.0, "ball radius must be positive");
        ChartDomain::Ball { center, radius }
    }

    pub fn torus(period: f64) -> Self {
        assert!(period > 0.0, "torus period must be positive");
        ChartDomain::Torus { period: [period; 4] }
    }

    pub fn contains(&self, x: &Point) -> bool {
        match self {
            ChartDomain::Ball { center, radius } => {
                let d2: f64 = (0..4).map(|i| (x[i] - center[i]).powi(2)).sum();
                d2 < radius * radius
            }
            ChartDomain::Torus { .. } => x.iter().all(|v| v.is_finite()),
        }
    }

    /// Map into the fundamental domain; identity for balls. Idempotent.
    pub fn canonicalize(&self, x: &Point) -> Point {
        match self {
            ChartDomain::Ball { .. } => *x,
            ChartDomain::Torus { period } => std::array::from_fn(|i| {
                let r = x[i].rem_euclid(period[i]);
                if r >= period[i] {
                    0.0
                } else {
                    r
                }
            }),
        }
    }

    /// Typical length of the chart, used to scale difference steps.
    pub fn scale(&self) -> f64 {
        match self {
            ChartDomain::Ball { radius, .. } => *radius,
            ChartDomain::Torus { period } => period.iter().cloned().fold(f64::INFINITY, f64::min),
        }
    }
}

// ----------------------------------------------------------------- metrics

/// A metric given by a formula that can be evaluated on any scalar type,
/// so derivatives come from jets.
pub trait SmoothMetric: Send + Sync {
    fn at<T: Scalar>(&self, x: &[T; 4]) -> M4<T>;
    fn chart(&self) -> ChartDomain;
}

impl<M: SmoothMetric> SmoothMetric for &M {
    fn at<T: Scalar>(&self, x: &[T; 4]) -> M4<T> {
        (**self).at(x)
    }
    fn chart(&self) -> ChartDomain {
        (**self).chart()
    }
}

/// A symmetric two-tensor field given by a formula.
pub trait TensorField: Send + Sync {
    fn at<T: Scalar>(&self, x: &[T; 4]) -> M4<T>;
}

/// Object-safe metric field: values plus first coordinate partials.
pub trait MetricField: Send + Sync {
    fn eval(&self, x: &Point) -> M4<f64>;
    /// `deriv(x)[l] = ∂_l g(x)`.
    fn deriv(&self, x: &Point) -> [M4<f64>; 4];
    fn domain(&self) -> ChartDomain;
    fn eval_with_deriv(&self, x: &Point) -> (M4<f64>, [M4<f64>; 4]) {
        (self.eval(x), self.deriv(x))
    }
}

impl<M: SmoothMetric> MetricField for M {
    fn eval(&self, x: &Point) -> M4<f64> {
        self.at(x)
    }
    fn deriv(&self, x: &Point) -> [M4<f64>; 4] {
        self.eval_with_deriv(x).1
    }
    fn domain(&self) -> ChartDomain {
        self.chart()
    }
    fn eval_with_deriv(&self, x: &Point) -> (M4<f64>, [M4<f64>; 4]) {
        let j = self.at(&Jet1::seed(x));
        let g = j.map(|r| r.map(|e| e.v));
        let d = std::array::from_fn(|l| j.map(|r| r.map(|e| e.d[l])));
        (g, d)
    }
}

/// Constant-coefficient metric.
#[derive(Clone, Copy, Debug)]
pub struct ConstMetric {
    pub g: M4<f64>,
    pub chart: ChartDomain,
}

impl ConstMetric {
    pub fn euclidean() -> Self {
        ConstMetric { g: linalg::eye(), chart: ChartDomain::ball([0.0; 4], 1e4) }
    }
    pub fn new(g: M4<f64>) -> Self {
        ConstMetric { g, chart: ChartDomain::ball([0.0; 4], 1e4) }
    }
}

impl SmoothMetric for ConstMetric {
    fn at<T: Scalar>(&self, _x: &[T; 4]) -> M4<T> {
        linalg::lift_m(&self.g)
    }
    fn chart(&self) -> ChartDomain {
        self.chart
    }
}

/// Metric known only through values; partials by central differences.
pub struct SampledMetric<F> {
    pub f: F,
    pub h: f64,
    pub chart: ChartDomain,
}

impl<F: Fn(&Point) -> M4<f64> + Send + Sync> SampledMetric<F> {
    pub fn new(f: F, h: f64, chart: ChartDomain) -> Self {
        SampledMetric { f, h, chart }
    }

    fn deriv_h(&self, x: &Point, h: f64) -> [M4<f64>; 4] {
        std::array::from_fn(|l| {
            let mut a = *x;
            let mut b = *x;
            a[l] += h;
            b[l] -= h;
            linalg::scale(&linalg::sub(&(self.f)(&a), &(self.f)(&b)), 0.5 / h)
        })
    }

    /// Ratio by which halving the step shrinks the derivative increment.
    /// Close to 4 for a smooth field; the field is consistent when ≥ 3.
    pub fn richardson_ratio(&self, x: &Point) -> f64 {
        let d1 = self.deriv_h(x, self.h);
        let d2 = self.deriv_h(x, self.h / 2.0);
        let d3 = self.deriv_h(x, self.h / 4.0);
        let mut r1: f64 = 0.0;
        let mut r2: f64 = 0.0;
        for l in 0..4 {
            r1 = r1.max(linalg::max_abs_diff(&d1[l], &d2[l]));
            r2 = r2.max(linalg::max_abs_diff(&d2[l], &d3[l]));
        }
        if r2 == 0.0 {
            f64::INFINITY
        } else {
            r1 / r2
        }
    }
}

impl<F: Fn(&Point) -> M4<f64> + Send + Sync> MetricField for SampledMetric<F> {
    fn eval(&self, x: &Point) -> M4<f64> {
        (self.f)(x)
    }
    fn deriv(&self, x: &Point) -> [M4<f64>; 4] {
        self.deriv_h(x, self.h)
    }
    fn domain(&self) -> ChartDomain {
        self.chart
    }
}

/// Symmetry residual and smallest eigenvalue of a metric value.
pub fn spd_check(g: &M4<f64>) -> (f64, f64) {
    let sym = linalg::max_abs_diff(g, &linalg::transpose(g));
    (sym, linalg::min_eig(g))
}

// --------------------------------------------------------------- symplectic

/// The constant symplectic form ω = dx₁∧dx₂ + dx₃∧dx₄, as `ω[i][j] = ω(eᵢ, eⱼ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymplecticForm {
    pub m: M4<f64>,
}

impl SymplecticForm {
    pub fn standard() -> Self {
        let mut m = [[0.0; 4]; 4];
        m[0][1] = 1.0;
        m[1][0] = -1.0;
        m[2][3] = 1.0;
        m[3][2] = -1.0;
        SymplecticForm { m }
    }

    /// Evaluate on two vectors.
    pub fn apply<T: Scalar>(&self, u: &V4<T>, v: &V4<T>) -> T {
        linalg::form(&linalg::lift_m(&self.m), u, v)
    }
}

impl Default for SymplecticForm {
    fn default() -> Self {
        Self::standard()
    }
}

/// The J with ω(x, y) = g(Jx, y), i.e. `J = g⁻¹ωᵀ`.
pub fn canonical_j<T: Scalar>(g: &M4<T>, w: &SymplecticForm) -> Result<M4<T>> {
    let gi = linalg::inv(g).ok_or(Error::DegenerateMetric([f64::NAN; 4]))?;
    Ok(linalg::mul(&gi, &linalg::transpose(&linalg::lift_m(&w.m))))
}

/// Pointwise field version of [`canonical_j`].
pub fn canonical_j_at(g: &dyn MetricField, w: &SymplecticForm, x: &Point) -> Result<M4<f64>> {
    canonical_j(&g.eval(x), w).map_err(|_| Error::DegenerateMetric(*x))
}

/// `max(‖J²+I‖, max|g(Jeᵤ, Jeᵥ) − g(eᵤ, eᵥ)|)` for the canonical J.
pub fn compat_residual_value(g: &M4<f64>, w: &SymplecticForm) -> f64 {
    match canonical_j(g, w) {
        Err(_) => f64::INFINITY,
        Ok(j) => {
            let j2 = linalg::add(&linalg::mul(&j, &j), &linalg::eye());
            let gj = linalg::mul(&linalg::mul(&linalg::transpose(&j), g), &j);
            linalg::max_abs(&j2).max(linalg::max_abs_diff(&gj, g))
        }
    }
}

pub fn compat_residual(g: &dyn MetricField, w: &SymplecticForm, x: &Point) -> f64 {
    compat_residual_value(&g.eval(x), w)
}

/// Split `h = h⁺ + h⁻` with `h⁺ = (h + h(J·, J·))/2`.
pub fn split_invariant(h: &M4<f64>, j: &M4<f64>) -> Result<(M4<f64>, M4<f64>)> {
    let j2 = linalg::add(&linalg::mul(j, j), &linalg::eye());
    let res = linalg::max_abs(&j2);
    if res > 1e-8 {
        return Err(Error::InvalidStructure(res));
    }
    let hjj = linalg::mul(&linalg::mul(&linalg::transpose(j), h), j);
    let plus = linalg::scale(&linalg::add(h, &hjj), 0.5);
    let minus = linalg::sub(h, &plus);
    Ok((plus, minus))
}

/// Residuals `|h⁺(J·,J·) − h⁺|` and `|h⁻(J·,J·) + h⁻|`.
pub fn invariance_residuals(plus: &M4<f64>, minus: &M4<f64>, j: &M4<f64>) -> (f64, f64) {
    let jt = linalg::transpose(j);
    let p = linalg::mul(&linalg::mul(&jt, plus), j);
    let m = linalg::mul(&linalg::mul(&jt, minus), j);
    (linalg::max_abs_diff(&p, plus), linalg::max_abs(&linalg::add(&m, minus)))
}

// ------------------------------------------------------- exponential / log

/// `g·exp(g⁻¹h)`, symmetrized.
pub fn exp_metric<T: Scalar>(g: &M4<T>, h: &M4<T>) -> M4<T> {
    let gi = linalg::inv(g).expect("metric must be invertible");
    linalg::symmetrize(&linalg::mul(g, &linalg::expm(&linalg::mul(&gi, h))))
}

/// The unique symmetric h with `g·exp(g⁻¹h) = g̃`, via the eigensystem of
/// `g^{-1/2} g̃ g^{-1/2}`.
pub fn log_metric(g: &M4<f64>, gt: &M4<f64>) -> Result<M4<f64>> {
    let s = linalg::sym_apply(g, f64::sqrt);
    let si = linalg::sym_apply(g, |v| 1.0 / v.sqrt());
    let m = linalg::mul(&linalg::mul(&si, gt), &si);
    let (vals, _) = linalg::sym_eigen(&m);
    if vals[0] <= 0.0 {
        return Err(Error::NotComparable(vals[0]));
    }
    let l = linalg::sym_apply(&m, f64::ln);
    Ok(linalg::symmetrize(&linalg::mul(&linalg::mul(&s, &l), &s)))
}

/// Generic-scalar version of [`log_metric`] (matrix square roots and a
/// series), used where derivatives must flow through the logarithm.
pub fn log_metric_generic<T: Scalar>(g: &M4<T>, gt: &M4<T>) -> Result<M4<T>> {
    let gi = linalg::inv(g).ok_or(Error::DegenerateMetric([f64::NAN; 4]))?;
    let a = linalg::mul(&gi, gt);
    let l = linalg::logm(&a).ok_or(Error::NotComparable(f64::NAN))?;
    Ok(linalg::symmetrize(&linalg::mul(g, &l)))
}

/// The field `x ↦ g(x)·exp(g(x)⁻¹h(x))`.
pub struct MetricExp<G, H> {
    pub g: G,
    pub h: H,
}

pub fn metric_exp<G: SmoothMetric, H: TensorField>(g: G, h: H) -> MetricExp<G, H> {
    MetricExp { g, h }
}

impl<G: SmoothMetric, H: TensorField> SmoothMetric for MetricExp<G, H> {
    fn at<T: Scalar>(&self, x: &[T; 4]) -> M4<T> {
        exp_metric(&self.g.at(x), &self.h.at(x))
    }
    fn chart(&self) -> ChartDomain {
        self.g.chart()
    }
}

/// Pointwise logarithm of two metric fields.
pub fn metric_log(g: &dyn MetricField, gt: &dyn MetricField, x: &Point) -> Result<M4<f64>> {
    log_metric(&g.eval(x), &gt.eval(x))
}

// ------------------------------------------------------------- curvature

/// Γ^k_{ij} = ½ g^{km}(∂ᵢg_{jm} + ∂ⱼg_{im} − ∂ₘg_{ij}).
pub fn christoffel_from<T: Scalar>(gi: &M4<T>, dg: &[M4<T>; 4]) -> Gamma<T> {
    let half = c::<T>(0.5);
    // lowered symbols Γ_{m,ij}
    let low: [[[T; 4]; 4]; 4] = std::array::from_fn(|m| {
        std::array::from_fn(|i| std::array::from_fn(|j| half * (dg[i][j][m] + dg[j][i][m] - dg[m][i][j])))
    });
    std::array::from_fn(|k| {
        std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                gi[k][0] * low[0][i][j] + gi[k][1] * low[1][i][j] + gi[k][2] * low[2][i][j] + gi[k][3] * low[3][i][j]
            })
        })
    })
}

pub fn christoffel(g: &dyn MetricField, x: &Point) -> Result<Gamma<f64>> {
    let (gv, dg) = g.eval_with_deriv(x);
    let gi = linalg::inv(&gv).ok_or(Error::DegenerateMetric(*x))?;
    Ok(christoffel_from(&gi, &dg))
}

/// Christoffel symbols of a formula metric through one jet evaluation.
pub fn christoffel_smooth<M: SmoothMetric + ?Sized>(g: &M, x: &Point) -> Result<Gamma<f64>> {
    let j = g.at(&Jet1::seed(x));
    let gv = j.map(|r| r.map(|e| e.v));
    let dg = std::array::from_fn(|l| j.map(|r| r.map(|e| e.d[l])));
    let gi = linalg::inv(&gv).ok_or(Error::DegenerateMetric(*x))?;
    Ok(christoffel_from(&gi, &dg))
}

/// Scalar curvature from the metric and its first and second partials,
/// `s = g^{ij}(∂ₖΓ^k_{ij} − ∂ⱼΓ^k_{ik} + Γ^k_{kl}Γ^l_{ij} − Γ^k_{jl}Γ^l_{ik})`.
pub fn scalar_from_derivs<T: Scalar>(g: &M4<T>, dg: &[M4<T>; 4], ddg: &[[M4<T>; 4]; 4]) -> Option<T> {
    let gi = linalg::inv_sym(g)?;
    let gam = christoffel_from(&gi, dg);
    let half = c::<T>(0.5);
    // ∂ₗ g^{km} = −g^{ka} ∂ₗg_{ab} g^{bm}
    let dgi: [M4<T>; 4] = std::array::from_fn(|l| linalg::scale(&linalg::mul(&linalg::mul(&gi, &dg[l]), &gi), -T::one()));
    // ∂ₗΓ^k_{ij}
    let dgam = |l: usize, k: usize, i: usize, j: usize| -> T {
        let mut acc = T::zero();
        for m in 0..4 {
            let low = half * (dg[i][j][m] + dg[j][i][m] - dg[m][i][j]);
            let dlow = half * (ddg[l][i][j][m] + ddg[l][j][i][m] - ddg[l][m][i][j]);
            acc += dgi[l][k][m] * low + gi[k][m] * dlow;
        }
        acc
    };
    let mut s = T::zero();
    for i in 0..4 {
        for j in 0..4 {
            let mut ric = T::zero();
            for k in 0..4 {
                ric += dgam(k, k, i, j) - dgam(j, k, i, k);
                for l in 0..4 {
                    ric += gam[k][k][l] * gam[l][i][j] - gam[k][j][l] * gam[l][i][k];
                }
            }
            s += gi[i][j] * ric;
        }
    }
    Some(s)
}

/// Exact scalar curvature of a formula metric through second-order jets.
/// Works over any base scalar, e.g. perturbation numbers.
pub fn scalar_jet<M: SmoothMetric + ?Sized, S: Scalar>(g: &M, x: &[S; 4]) -> Option<S> {
    let j: M4<Jet2<S>> = g.at(&Jet2::seed(x));
    let gv = j.map(|r| r.map(|e| e.v));
    let dg = std::array::from_fn(|l| j.map(|r| r.map(|e| e.d[l])));
    let ddg = std::array::from_fn(|l| std::array::from_fn(|m| j.map(|r| r.map(|e| e.hess(l, m)))));
    scalar_from_derivs(&gv, &dg, &ddg)
}

/// How second partials are obtained by the difference oracle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StencilMode {
    /// Central differences of the field's first partials.
    Derivs,
    /// Classic value stencils for first and second partials.
    Values,
}

#[derive(Clone, Copy, Debug)]
pub struct OracleOptions {
    /// Base step for second-order differences.
    pub h: f64,
    pub mode: StencilMode,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { h: 1e-3, mode: StencilMode::Derivs }
    }
}

/// Result of the difference oracle with its Richardson check.
#[derive(Clone, Copy, Debug)]
pub struct OracleValue {
    /// Richardson-extrapolated value.
    pub s: f64,
    pub s_h: f64,
    pub s_half: f64,
    /// |extrapolated − finer| as an error estimate.
    pub err: f64,
    pub converged: bool,
}

fn fd_second(g: &dyn MetricField, x: &Point, h: f64, mode: StencilMode) -> Result<f64> {
    let dom = g.domain();
    for l in 0..4 {
        for sgn in [-2.0, 2.0] {
            let mut y = *x;
            y[l] += sgn * h;
            if !dom.contains(&y) {
                return Err(Error::OutOfDomain { exit_time: 0.0, point: y });
            }
        }
    }
    let shifted = |l: usize, s: f64| {
        let mut y = *x;
        y[l] += s;
        y
    };
    let (g0, dg, ddg) = match mode {
        StencilMode::Derivs => {
            let (g0, dg) = g.eval_with_deriv(x);
            let mut ddg = [[[[0.0; 4]; 4]; 4]; 4];
            let dp: [[M4<f64>; 4]; 4] = std::array::from_fn(|l| g.deriv(&shifted(l, h)));
            let dm: [[M4<f64>; 4]; 4] = std::array::from_fn(|l| g.deriv(&shifted(l, -h)));
            for l in 0..4 {
                for m in 0..4 {
                    for a in 0..4 {
                        for b in 0..4 {
                            let v1 = (dp[l][m][a][b] - dm[l][m][a][b]) / (2.0 * h);
                            let v2 = (dp[m][l][a][b] - dm[m][l][a][b]) / (2.0 * h);
                            ddg[l][m][a][b] = 0.5 * (v1 + v2);
                        }
                    }
                }
            }
            (g0, dg, ddg)
        }
        StencilMode::Values => {
            let g0 = g.eval(x);
            let mut dg = [[[0.0; 4]; 4]; 4];
            let mut ddg = [[[[0.0; 4]; 4]; 4]; 4];
            for l in 0..4 {
                let gp = g.eval(&shifted(l, h));
                let gm = g.eval(&shifted(l, -h));
                dg[l] = linalg::scale(&linalg::sub(&gp, &gm), 0.5 / h);
                ddg[l][l] = linalg::scale(&linalg::add(&linalg::sub(&gp, &linalg::scale(&g0, 2.0)), &gm), 1.0 / (h * h));
                for m in (l + 1)..4 {
                    let at = |sl: f64, sm: f64| {
                        let mut y = *x;
                        y[l] += sl * h;
                        y[m] += sm * h;
                        g.eval(&y)
                    };
                    let v = linalg::sub(&linalg::add(&at(1.0, 1.0), &at(-1.0, -1.0)), &linalg::add(&at(1.0, -1.0), &at(-1.0, 1.0)));
                    ddg[l][m] = linalg::scale(&v, 0.25 / (h * h));
                    ddg[m][l] = ddg[l][m];
                }
            }
            (g0, dg, ddg)
        }
    };
    scalar_from_derivs(&g0, &dg, &ddg).ok_or(Error::DegenerateMetric(*x))
}

/// Independent scalar-curvature oracle from coordinate stencils, with a
/// two-step Richardson check.
pub fn scalar_numeric(g: &dyn MetricField, x: &Point, opts: &OracleOptions) -> Result<OracleValue> {
    let s_h = fd_second(g, x, opts.h, opts.mode)?;
    let s_half = fd_second(g, x, opts.h / 2.0, opts.mode)?;
    let s = (4.0 * s_half - s_h) / 3.0;
    let err = (s - s_half).abs();
    let converged = (s_h - s_half).abs() <= 0.1 * s.abs().max(1e-8);
    Ok(OracleValue { s, s_h, s_half, err, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// e^{2φ}·Id with φ a quadratic polynomial.
    struct Conformal {
        a: [f64; 4],
        q: [f64; 4],
    }
    impl Conformal {
        fn phi<T: Scalar>(&self, x: &[T; 4]) -> T {
            (0..4).map(|i| c::<T>(self.a[i]) * x[i] + c::<T>(self.q[i]) * x[i] * x[i]).sum()
        }
    }
    impl SmoothMetric for Conformal {
        fn at<T: Scalar>(&self, x: &[T; 4]) -> M4<T> {
            linalg::scale(&linalg::eye(), (c::<T>(2.0) * self.phi(x)).exp())
        }
        fn chart(&self) -> ChartDomain {
            ChartDomain::ball([0.0; 4], 10.0)
        }
    }
    impl Conformal {
        fn grad(&self, x: &Point) -> [f64; 4] {
            std::array::from_fn(|i| self.a[i] + 2.0 * self.q[i] * x[i])
        }
        /// s = −6 e^{−2φ}(Δφ + |∇φ|²) in four dimensions.
        fn scalar(&self, x: &Point) -> f64 {
            let lap: f64 = self.q.iter().map(|q| 2.0 * q).sum();
            let g2: f64 = self.grad(x).iter().map(|v| v * v).sum();
            -6.0 * (-2.0 * self.phi(x)).exp() * (lap + g2)
        }
    }

    #[test]
    fn euclidean_j_rotates_first_plane() {
        let j = canonical_j(&linalg::eye::<f64>(), &SymplecticForm::standard()).unwrap();
        // J e₁ = e₂ and J e₃ = e₄ (columns)
        assert_eq!([j[0][0], j[1][0], j[2][0], j[3][0]], [0.0, 1.0, 0.0, 0.0]);
        assert_eq!([j[0][2], j[1][2], j[2][2], j[3][2]], [0.0, 0.0, 0.0, 1.0]);
        assert!(compat_residual_value(&linalg::eye(), &SymplecticForm::standard()) <= 1e-14);
        assert!(linalg::det(&SymplecticForm::standard().m) == 1.0);
    }

    #[test]
    fn uniform_scaling_breaks_compatibility() {
        let w = SymplecticForm::standard();
        let g = linalg::scale(&linalg::eye::<f64>(), 2.0);
        let j = canonical_j(&g, &w).unwrap();
        // J² = −I/4
        assert!((linalg::mul(&j, &j)[0][0] + 0.25).abs() < 1e-15);
        assert!(compat_residual_value(&g, &w) > 0.5);
        // block scaling with reciprocal factors on a symplectic pair keeps it
        assert!(compat_residual_value(&linalg::diag([2.0, 0.5, 1.0, 1.0]), &w) < 1e-15);
        assert!(compat_residual_value(&linalg::diag([2.0, 2.0, 1.0, 1.0]), &w) > 0.7);
    }

    #[test]
    fn split_of_special_tensors() {
        let w = SymplecticForm::standard();
        let j = canonical_j(&linalg::eye::<f64>(), &w).unwrap();
        let (p, m) = split_invariant(&linalg::eye(), &j).unwrap();
        assert!(linalg::max_abs_diff(&p, &linalg::eye()) == 0.0 && linalg::max_abs(&m) == 0.0);
        let h = linalg::diag([1.0, -1.0, 0.0, 0.0]);
        let (p, m) = split_invariant(&h, &j).unwrap();
        assert!(linalg::max_abs(&p) == 0.0 && linalg::max_abs_diff(&m, &h) == 0.0);
        assert!(matches!(split_invariant(&h, &linalg::eye()), Err(Error::InvalidStructure(_))));
    }

    fn sym_from(s: &[f64; 10]) -> M4<f64> {
        let mut h = [[0.0; 4]; 4];
        let mut k = 0;
        for i in 0..4 {
            for j in i..4 {
                h[i][j] = s[k];
                h[j][i] = s[k];
                k += 1;
            }
        }
        h
    }

    proptest! {
        #[test]
        fn split_recomposes(s in proptest::array::uniform10(-1.0f64..1.0)) {
            let w = SymplecticForm::standard();
            let g = exp_metric(&linalg::eye(), &linalg::scale(&sym_from(&s), 0.3));
            let j = canonical_j(&g, &w).unwrap();
            let h = sym_from(&s);
            // J of a non-compatible metric may fail the structure test
            if let Ok((p, m)) = split_invariant(&h, &j) {
                prop_assert!(linalg::max_abs_diff(&linalg::add(&p, &m), &h) < 1e-14);
                let (rp, rm) = invariance_residuals(&p, &m, &j);
                prop_assert!(rp < 1e-12 && rm < 1e-12);
            }
            let j0 = canonical_j(&linalg::eye::<f64>(), &w).unwrap();
            let (p, m) = split_invariant(&h, &j0).unwrap();
            prop_assert!(linalg::max_abs_diff(&linalg::add(&p, &m), &h) < 1e-14);
            let (rp, rm) = invariance_residuals(&p, &m, &j0);
            prop_assert!(rp < 1e-13 && rm < 1e-13);
        }

        #[test]
        fn exp_log_roundtrip(s in proptest::array::uniform10(-0.5f64..0.5), t in proptest::array::uniform10(-0.3f64..0.3)) {
            let g = exp_metric(&linalg::eye(), &sym_from(&t));
            let h = sym_from(&s);
            let gt = exp_metric(&g, &h);
            let back = log_metric(&g, &gt).unwrap();
            prop_assert!(linalg::max_abs_diff(&back, &h) < 1e-10);
            let back2 = log_metric_generic(&g, &gt).unwrap();
            prop_assert!(linalg::max_abs_diff(&back2, &h) < 1e-10);
            prop_assert!(linalg::max_abs_diff(&exp_metric(&g, &back), &gt) < 1e-10);
        }

        #[test]
        fn anti_invariant_exponential_stays_compatible(s in proptest::array::uniform10(-1.0f64..1.0)) {
            let w = SymplecticForm::standard();
            let j0 = canonical_j(&linalg::eye::<f64>(), &w).unwrap();
            let (_, m) = split_invariant(&sym_from(&s), &j0).unwrap();
            let g = exp_metric(&linalg::eye(), &m);
            prop_assert!(compat_residual_value(&g, &w) < 1e-10);
            let (sym, lmin) = spd_check(&g);
            prop_assert!(sym < 1e-12 && lmin > 0.0);
        }
    }

    #[test]
    fn log_of_scalar_multiple() {
        let h = log_metric(&linalg::eye(), &linalg::scale(&linalg::eye(), 4.0)).unwrap();
        assert!(linalg::max_abs_diff(&h, &linalg::scale(&linalg::eye(), 4f64.ln())) < 1e-14);
        assert!(linalg::max_abs(&log_metric(&linalg::diag([2.0, 3.0, 1.0, 1.0]), &linalg::diag([2.0, 3.0, 1.0, 1.0])).unwrap()) < 1e-15);
        assert!(matches!(log_metric(&linalg::eye(), &linalg::diag([1.0, -1.0, 1.0, 1.0])), Err(Error::NotComparable(_))));
    }

    #[test]
    fn metric_exp_of_zero_is_identity() {
        struct Zero;
        impl TensorField for Zero {
            fn at<T: Scalar>(&self, _x: &[T; 4]) -> M4<T> {
                linalg::zeros()
            }
        }
        let g = Conformal { a: [0.2, 0.0, -0.1, 0.0], q: [0.0; 4] };
        let e = metric_exp(Conformal { a: g.a, q: g.q }, Zero);
        let x = [0.3, 0.1, -0.2, 0.4];
        assert!(linalg::max_abs_diff(&e.eval(&x), &g.eval(&x)) < 1e-15);
    }

    #[test]
    fn conformal_christoffel_matches_formula() {
        let g = Conformal { a: [0.3, -0.2, 0.1, 0.05], q: [0.1, 0.0, -0.05, 0.02] };
        let x = [0.2, -0.4, 0.7, 0.1];
        let gam = christoffel(&g, &x).unwrap();
        let p = g.grad(&x);
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        for k in 0..4 {
            for i in 0..4 {
                for j in 0..4 {
                    let expect = d(k, i) * p[j] + d(k, j) * p[i] - d(i, j) * p[k];
                    assert!((gam[k][i][j] - expect).abs() < 1e-13);
                    assert_eq!(gam[k][i][j], gam[k][j][i]);
                }
            }
        }
        let flat = christoffel(&ConstMetric::new(linalg::diag([2.0, 0.5, 3.0, 1.0])), &x).unwrap();
        assert!(flat.iter().flatten().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn oracles_agree_on_conformal_metrics() {
        let g = Conformal { a: [0.3, -0.2, 0.1, 0.05], q: [0.1, 0.0, -0.05, 0.02] };
        for x in [[0.2, -0.4, 0.7, 0.1], [0.0, 0.0, 0.0, 0.0], [-1.0, 0.5, 0.3, 0.9]] {
            let exact = g.scalar(&x);
            let jet: f64 = scalar_jet(&g, &x).unwrap();
            assert!((jet - exact).abs() < 1e-12 * exact.abs().max(1.0));
            for mode in [StencilMode::Derivs, StencilMode::Values] {
                let o = scalar_numeric(&g, &x, &OracleOptions { h: 1e-3, mode }).unwrap();
                assert!((o.s - exact).abs() < 1e-5, "{mode:?} {} vs {exact}", o.s);
                assert!(o.converged);
            }
        }
    }

    #[test]
    fn constant_metrics_are_flat() {
        let g = ConstMetric::new(linalg::diag([2.0, 0.5, 3.0, 1.0]));
        let x = [0.1, 0.2, 0.3, 0.4];
        let o = scalar_numeric(&g, &x, &OracleOptions::default()).unwrap();
        assert!(o.s.abs() < 1e-9);
        let o = scalar_numeric(&g, &x, &OracleOptions { h: 1e-3, mode: StencilMode::Values }).unwrap();
        assert!(o.s.abs() < 1e-9);
        assert_eq!(scalar_jet(&g, &x).unwrap(), 0.0);
    }

    #[test]
    fn sampled_metric_is_consistent() {
        let g = Conformal { a: [0.3, -0.2, 0.1, 0.05], q: [0.1, 0.0, -0.05, 0.02] };
        let s = SampledMetric::new(|x: &Point| g.eval(x), 1e-2, ChartDomain::ball([0.0; 4], 10.0));
        let x = [0.2, -0.4, 0.7, 0.1];
        assert!(s.richardson_ratio(&x) >= 3.0);
        let d = s.deriv(&x);
        let e = g.deriv(&x);
        for l in 0..4 {
            assert!(linalg::max_abs_diff(&d[l], &e[l]) < 1e-3);
        }
    }

    #[test]
    fn torus_canonicalization_is_idempotent() {
        let t = ChartDomain::torus(2.5);
        for x in [[-1e-17, 2.5, 7.3, -3.1], [0.0, 1.0, 2.49, -2.5]] {
            let y = t.canonicalize(&x);
            assert!(y.iter().all(|&v| (0.0..2.5).contains(&v)));
            assert_eq!(t.canonicalize(&y), y);
        }
    }

    #[test]
    fn stencil_leaving_domain_is_reported() {
        let g = ConstMetric { g: linalg::eye(), chart: ChartDomain::ball([0.0; 4], 1.0) };
        let r = scalar_numeric(&g, &[0.9995, 0.0, 0.0, 0.0], &OracleOptions::default());
        assert!(matches!(r, Err(Error::OutOfDomain { .. })));
    }
}
