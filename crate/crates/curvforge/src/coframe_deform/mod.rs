//! The adapted orthonormal coframe around a base point, its connection
//! coefficients, and the almost Kähler deformation
//! `ω₁⊗ω₁/(1+Y) + (1+Y)ω₂⊗ω₂ + ω₃⊗ω₃ + ω₄⊗ω₄` that diffuses scalar
//! curvature.

pub mod formulas;

pub use formulas::{
    euclidean_table, euclidean_table_derivs, i0, i1, identity_trials, IdentityReport, random_structured, scalar_diff, scalar_formula, tilde_coeffs,
    tilde_curvature, tilde_with_derivs, y1_factor, Coef, DCoef, Field, TildeCurvature,
};

use crate::error::{Error, Result};
use crate::geodesy::{radial_data_steps, steps_for, GeodesyOptions, RadialData, WarmStart};
use crate::jet::{Jet1, Jet2};
use crate::linalg::{self, M4, V4};
use crate::scalar::Scalar;
use crate::tensor_core::{canonical_j, ChartDomain, MetricField, Point, SmoothMetric, SymplecticForm};
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------- cutoffs

/// `f_{d,s}(t) = s·e^{−d/t}` for `t > 0`, zero otherwise; value and first
/// three derivatives.
pub fn f_cut(d: f64, s: f64, t: f64) -> [f64; 4] {
    f_cut_shifted(d, s, t, 0.0)
}

/// `e^{λ}·f_{d,s}` and its derivatives, for magnitudes below the `f64` range.
pub fn f_cut_shifted(d: f64, s: f64, t: f64, lambda: f64) -> [f64; 4] {
    if t <= 0.0 {
        return [0.0; 4];
    }
    let e = s * (lambda - d / t).exp();
    if e == 0.0 {
        return [0.0; 4];
    }
    let r = f_cut_scaled(d, t);
    r.map(|v| v * e)
}

/// Derivatives of `f_{d,s}` divided by `s·e^{−d/t}`.
pub fn f_cut_scaled(d: f64, t: f64) -> [f64; 4] {
    let u = d / (t * t);
    [
        1.0,
        u,
        u * u - 2.0 * d / (t * t * t),
        u * u * u - 6.0 * d * d / t.powi(5) + 6.0 * d / t.powi(4),
    ]
}

/// Smooth step `h(u)`: 1 for `u ≤ 0`, 0 for `u ≥ 1`, with three derivatives.
pub fn step(u: f64) -> [f64; 4] {
    if u <= 0.0 {
        return [1.0, 0.0, 0.0, 0.0];
    }
    if u >= 1.0 {
        return [0.0; 4];
    }
    // h = 1/(1 + e^q), q = 1/(1−u) − 1/u
    let v = 1.0 - u;
    let q = 1.0 / v - 1.0 / u;
    let eq = q.exp();
    if eq == 0.0 {
        return [1.0, 0.0, 0.0, 0.0];
    }
    if !eq.is_finite() {
        return [0.0; 4];
    }
    let p0 = 1.0 / (1.0 + eq);
    let p1 = -p0 * (1.0 - p0);
    let p2 = -p1 * (1.0 - 2.0 * p0);
    let p3 = -p2 * (1.0 - 2.0 * p0) + 2.0 * p1 * p1;
    let q1 = 1.0 / (v * v) + 1.0 / (u * u);
    let q2 = 2.0 / (v * v * v) - 2.0 / (u * u * u);
    let q3 = 6.0 / v.powi(4) + 6.0 / u.powi(4);
    [p0, p1 * q1, p2 * q1 * q1 + p1 * q2, p3 * q1 * q1 * q1 + 3.0 * p2 * q1 * q2 + p1 * q3]
}

/// `h_ε^b(t) = h((t − b)/ε)` with three derivatives in `t`.
pub fn h_cut(eps: f64, b: f64, t: f64) -> [f64; 4] {
    let s = step((t - b) / eps);
    [s[0], s[1] / eps, s[2] / (eps * eps), s[3] / (eps * eps * eps)]
}

// ------------------------------------------------------------- parameters

/// Radii `0 < a < b < b+ε < c`, decay `d` and amplitude `s` of the
/// deformation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeformParams {
    pub a: f64,
    pub b: f64,
    pub eps: f64,
    pub c: f64,
    pub d: f64,
    pub s: f64,
}

impl DeformParams {
    pub fn validate(&self) -> Result<()> {
        let DeformParams { a, b, eps, c, d, s } = *self;
        if !(0.0 < a && a < b && eps > 0.0 && b + eps < c && c <= 9.0) {
            return Err(Error::InvalidParams(format!("need 9 ≥ c > b+ε > b > a > 0, got {self:?}")));
        }
        if !(d > 0.0 && (0.0..=1.0).contains(&s)) {
            return Err(Error::InvalidParams(format!("need d > 0 and s ∈ [0,1], got {self:?}")));
        }
        Ok(())
    }

    pub fn with_d(self, d: f64) -> Self {
        DeformParams { d, ..self }
    }

    /// Radius inside which the deformation vanishes identically.
    pub fn inner_radius(&self) -> f64 {
        self.c - self.b - self.eps
    }

    /// Puncture radius compatible with the inner radius.
    pub fn r_min(&self) -> f64 {
        1e-3f64.min(0.25 * self.inner_radius())
    }

    /// `Y(r), Y'(r), Y''(r), Y'''(r)` with `Y(r) = h_ε^b(c−r)·f_{d,s}(c−r)`.
    pub fn y_profile(&self, r: f64) -> [f64; 4] {
        let t = self.c - r;
        let f = f_cut(self.d, self.s, t);
        let h = h_cut(self.eps, self.b, t);
        let y = [
            h[0] * f[0],
            h[1] * f[0] + h[0] * f[1],
            h[2] * f[0] + 2.0 * h[1] * f[1] + h[0] * f[2],
            h[3] * f[0] + 3.0 * h[2] * f[1] + 3.0 * h[1] * f[2] + h[0] * f[3],
        ];
        // d/dr = −d/dt
        [y[0], -y[1], y[2], -y[3]]
    }

    /// `Y, Y', Y''` divided by `s·e^{−d/(c−r)}`; `None` where `Y ≡ 0` near `r`.
    pub fn y_scaled(&self, r: f64) -> Option<[f64; 3]> {
        let t = self.c - r;
        if t <= 0.0 || t >= self.b + self.eps {
            return None;
        }
        let f = f_cut_scaled(self.d, t);
        let h = h_cut(self.eps, self.b, t);
        Some([h[0], -(h[1] + h[0] * f[1]), h[2] + 2.0 * h[1] * f[1] + h[0] * f[2]])
    }

    /// Generic `Y(r)`.
    pub fn y_of<T: Scalar>(&self, r: T) -> T {
        self.y_of_shifted(r, 0.0)
    }

    /// Generic `e^{λ}·Y(r)`.
    pub fn y_of_shifted<T: Scalar>(&self, r: T, lambda: f64) -> T {
        let t = T::cst(self.c) - r;
        let f = t.lift(&|t| f_cut_shifted(self.d, self.s, t, lambda));
        let h = t.lift(&|t| h_cut(self.eps, self.b, t));
        h * f
    }

    /// `Y` rounds to zero at every radius: `f` is increasing and `h ≤ 1`, so
    /// its largest value is below `s·e^{−d/(b+ε)}`.
    pub fn vanishes_in_f64(&self) -> bool {
        f_cut(self.d, self.s, self.b + self.eps)[0] == 0.0
    }

    /// Smallest `d` with `f, f', f'', f''' > 0` on `(0, b]`.
    pub fn f_positivity_threshold(&self) -> f64 {
        (3.0 + 3f64.sqrt()) * self.b
    }
}

// ---------------------------------------------------------------- coframe

/// Covector action of `J`: `(Jα) = −Jᵀα`, which makes
/// `ω₁∧ω₂ + ω₃∧ω₄ = ω` for adapted coframes.
pub fn j_covector<T: Scalar>(j: &M4<T>, alpha: &V4<T>) -> V4<T> {
    std::array::from_fn(|b| -(0..4).map(|a| j[a][b] * alpha[a]).fold(T::zero(), |s, v| s + v))
}

/// Euclidean reference third covector `r·σ₂` at offset `z = x − p`, unit.
pub fn reference_third<T: Scalar>(z: &V4<T>) -> V4<T> {
    let r = linalg::dot(z, z).sqrt();
    [-z[2] / r, z[3] / r, z[0] / r, -z[1] / r]
}

/// Adapted coframe (rows `ω₁..ω₄`): `ω₁ = dr/|dr|_g`, `ω₂ = Jω₁`,
/// `ω₃` the Gram–Schmidt projection of the reference covector, `ω₄ = Jω₃`.
pub fn build_coframe<T: Scalar>(g: &M4<T>, w: &SymplecticForm, dr: &V4<T>, z: &V4<T>) -> Result<M4<T>> {
    build_coframe_with_reference(g, w, dr, &reference_third(z))
}

/// [`build_coframe`] with an explicit reference covector for `ω₃`.
pub fn build_coframe_with_reference<T: Scalar>(g: &M4<T>, w: &SymplecticForm, dr: &V4<T>, r3: &V4<T>) -> Result<M4<T>> {
    let gi = linalg::inv_sym(g).ok_or(Error::DegenerateMetric([f64::NAN; 4]))?;
    let j = canonical_j(g, w)?;
    let ip = |u: &V4<T>, v: &V4<T>| linalg::form(&gi, u, v);
    let n1 = ip(dr, dr).sqrt();
    let w1 = dr.map(|v| v / n1);
    let w2 = j_covector(&j, &w1);
    let (c1, c2) = (ip(&r3, &w1), ip(&r3, &w2));
    let u3: V4<T> = std::array::from_fn(|i| r3[i] - c1 * w1[i] - c2 * w2[i]);
    let n3 = ip(&u3, &u3).sqrt();
    if !(n3.primal() > 1e-6) {
        return Err(Error::FrameDegeneracy(n3.primal()));
    }
    let w3 = u3.map(|v| v / n3);
    let w4 = j_covector(&j, &w3);
    Ok([w1, w2, w3, w4])
}

/// Residuals of the coframe invariants: Gram matrix against the identity,
/// `ω₂ = Jω₁`, `ω₄ = Jω₃`, and `ω₁∧ω₂ + ω₃∧ω₄ − ω`.
pub fn coframe_residuals(cf: &M4<f64>, g: &M4<f64>, w: &SymplecticForm) -> (f64, f64, f64) {
    let gi = linalg::inv_sym(g).unwrap_or([[f64::NAN; 4]; 4]);
    let gram: M4<f64> = std::array::from_fn(|i| std::array::from_fn(|j| linalg::form(&gi, &cf[i], &cf[j])));
    let gram_res = linalg::max_abs_diff(&gram, &linalg::eye());
    let pair_res = match canonical_j(g, w) {
        Ok(j) => {
            let (a, b) = (j_covector(&j, &cf[0]), j_covector(&j, &cf[2]));
            (0..4).map(|i| (a[i] - cf[1][i]).abs().max((b[i] - cf[3][i]).abs())).fold(0.0, f64::max)
        }
        Err(_) => f64::INFINITY,
    };
    let wedge = |u: &V4<f64>, v: &V4<f64>| linalg::sub(&linalg::outer(u, v), &linalg::outer(v, u));
    let om = linalg::add(&wedge(&cf[0], &cf[1]), &wedge(&cf[2], &cf[3]));
    (gram_res, pair_res, linalg::max_abs_diff(&om, &w.m))
}

// ------------------------------------------------------- connection coefficients

/// Connection coefficients `a_{ijk}` (`ω_{ij} = Σ a_{ijk} ω_k`) and their
/// frame derivatives `da[l][i][j][k] = a_{ijk,l}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConnectionCoeffs {
    pub a: Coef<f64>,
    pub da: DCoef<f64>,
}

impl ConnectionCoeffs {
    /// `max |a_{1jk} − a_{1kj}|`.
    pub fn first_symmetry_residual(&self) -> f64 {
        let mut m: f64 = 0.0;
        for j in 0..4 {
            for k in 0..4 {
                m = m.max((self.a[0][j][k] - self.a[0][k][j]).abs());
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.a.iter().flatten().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_deriv(&self) -> f64 {
        self.da.iter().flatten().flatten().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scalar(&self) -> f64 {
        scalar_formula(&self.a, &self.da, 0.0, 0.0, 0.0)
    }
}

/// Coefficients from a second-order model of the coframe at a point:
/// `w0 = W`, `w1[m] = ∂_m W`, `w2[m][n] = ∂_m∂_n W` (rows are covectors).
pub fn coeffs_from_model(w0: &M4<f64>, w1: &[M4<f64>; 4], w2: &[[M4<f64>; 4]; 4]) -> Result<ConnectionCoeffs> {
    let wj: M4<Jet1<f64>> = std::array::from_fn(|k| {
        std::array::from_fn(|b| Jet1 { v: w0[k][b], d: std::array::from_fn(|m| w1[m][k][b]) })
    });
    let dwj: [M4<Jet1<f64>>; 4] = std::array::from_fn(|m| {
        std::array::from_fn(|k| std::array::from_fn(|b| Jet1 { v: w1[m][k][b], d: std::array::from_fn(|n| w2[m][n][k][b]) }))
    });
    let e = linalg::inv(&wj).ok_or(Error::FrameDegeneracy(0.0))?;
    // q[k][i][j] = dω_k(e_i, e_j)
    let mut q = [[[Jet1::<f64>::constant(0.0); 4]; 4]; 4];
    for k in 0..4 {
        let ak: M4<Jet1<f64>> = std::array::from_fn(|a| std::array::from_fn(|b| dwj[a][k][b] - dwj[b][k][a]));
        let m = linalg::mul(&linalg::mul(&linalg::transpose(&e), &ak), &e);
        q[k] = m;
    }
    let mut aj = [[[Jet1::<f64>::constant(0.0); 4]; 4]; 4];
    let half = Jet1::constant(0.5);
    for i in 0..4 {
        for j in (i + 1)..4 {
            for k in 0..4 {
                let v = half * (q[k][i][j] - q[i][j][k] - q[j][k][i]);
                aj[i][j][k] = v;
                aj[j][i][k] = -v;
            }
        }
    }
    let a = aj.map(|m| m.map(|r| r.map(|x| x.v)));
    let da = std::array::from_fn(|l| {
        aj.map(|m| m.map(|r| r.map(|x| (0..4).map(|mm| x.d[mm] * e[mm][l].v).sum::<f64>())))
    });
    Ok(ConnectionCoeffs { a, da })
}

/// Exact coefficients of a coframe given as a second-order jet in position.
pub fn coeffs_from_jet(w: &M4<Jet2<f64>>) -> Result<ConnectionCoeffs> {
    let w0 = w.map(|r| r.map(|e| e.v));
    let w1 = std::array::from_fn(|m| w.map(|r| r.map(|e| e.d[m])));
    let w2 = std::array::from_fn(|m| std::array::from_fn(|n| w.map(|r| r.map(|e| e.hess(m, n)))));
    coeffs_from_model(&w0, &w1, &w2)
}

/// Coefficients from a 33-point central-difference stencil of step `h`.
pub fn coeffs_stencil(frame: &mut dyn FnMut(&Point) -> Result<M4<f64>>, x: &Point, h: f64) -> Result<ConnectionCoeffs> {
    let at = |frame: &mut dyn FnMut(&Point) -> Result<M4<f64>>, o: &[(usize, f64)]| {
        let mut y = *x;
        for &(m, s) in o {
            y[m] += s * h;
        }
        frame(&y)
    };
    let w0 = at(frame, &[])?;
    let mut plus = [[[0.0; 4]; 4]; 4];
    let mut minus = [[[0.0; 4]; 4]; 4];
    for m in 0..4 {
        plus[m] = at(frame, &[(m, 1.0)])?;
        minus[m] = at(frame, &[(m, -1.0)])?;
    }
    let comb = |a: &M4<f64>, b: &M4<f64>, c: &M4<f64>, ca: f64, cb: f64, cc: f64| -> M4<f64> {
        std::array::from_fn(|i| std::array::from_fn(|j| ca * a[i][j] + cb * b[i][j] + cc * c[i][j]))
    };
    let w1: [M4<f64>; 4] = std::array::from_fn(|m| comb(&plus[m], &minus[m], &w0, 0.5 / h, -0.5 / h, 0.0));
    let mut w2 = [[[[0.0; 4]; 4]; 4]; 4];
    for m in 0..4 {
        w2[m][m] = comb(&plus[m], &minus[m], &w0, 1.0 / (h * h), 1.0 / (h * h), -2.0 / (h * h));
        for n in (m + 1)..4 {
            let pp = at(frame, &[(m, 1.0), (n, 1.0)])?;
            let pm = at(frame, &[(m, 1.0), (n, -1.0)])?;
            let mp = at(frame, &[(m, -1.0), (n, 1.0)])?;
            let mm = at(frame, &[(m, -1.0), (n, -1.0)])?;
            let v: M4<f64> =
                std::array::from_fn(|i| std::array::from_fn(|j| (pp[i][j] - pm[i][j] - mp[i][j] + mm[i][j]) / (4.0 * h * h)));
            w2[m][n] = v;
            w2[n][m] = v;
        }
    }
    coeffs_from_model(&w0, &w1, &w2)
}

/// The adapted coframe built from geodesic distance to `p` in a metric.
pub struct GeodesicCoframe<'a> {
    pub g: &'a dyn MetricField,
    pub w: SymplecticForm,
    pub p: Point,
    pub opts: GeodesyOptions,
    /// RK4 steps shared by every shot, so the coframe is smooth in position.
    pub steps: usize,
}

/// Coefficients at one point together with its distance data.
#[derive(Clone, Copy, Debug)]
pub struct CoefSample {
    pub x: Point,
    /// Distance to the base point.
    pub dist: f64,
    pub coeffs: ConnectionCoeffs,
}

impl<'a> GeodesicCoframe<'a> {
    /// Shots long enough for every point within `reach` of `p`.
    pub fn new(g: &'a dyn MetricField, p: Point, reach: f64, opts: GeodesyOptions) -> Self {
        let steps = steps_for(1.1 * reach, opts.max_step);
        GeodesicCoframe { g, w: SymplecticForm::standard(), p, opts, steps }
    }

    pub fn at(&self, x: &Point, warm: Option<WarmStart>) -> Result<(M4<f64>, RadialData)> {
        let rd = radial_data_steps(self.g, &self.p, x, warm, &self.opts, self.steps)?;
        let z: V4<f64> = std::array::from_fn(|i| x[i] - self.p[i]);
        let cf = build_coframe(&self.g.eval(x), &self.w, &rd.dr, &z)?;
        Ok((cf, rd))
    }

    /// Connection coefficients by the stencil, every shot warm-started from
    /// the centre solution. The step shrinks with the distance to `p`.
    pub fn coeffs(&self, x: &Point, warm: Option<WarmStart>) -> Result<CoefSample> {
        let (_, center) = self.at(x, warm)?;
        let h = (0.05 * center.dist).min(1e-4);
        // roundoff in the endpoint grows with both the distance and the
        // step count (itself proportional to the distance)
        let tight = GeodesyOptions { tol: 1e-13 * center.dist.max(1.0).powi(2), ..self.opts };
        let mut frame = |y: &Point| -> Result<M4<f64>> {
            let rd = radial_data_steps(self.g, &self.p, y, Some(center.warm), &tight, self.steps)?;
            let z: V4<f64> = std::array::from_fn(|i| y[i] - self.p[i]);
            build_coframe(&self.g.eval(y), &self.w, &rd.dr, &z)
        };
        let coeffs = coeffs_stencil(&mut frame, x, h)?;
        Ok(CoefSample { x: *x, dist: center.dist, coeffs })
    }
}

// ------------------------------------------------------------ deformation

/// `g + (1/(1+Y) − 1)ω₁⊗ω₁ + Y ω₂⊗ω₂`, which equals the deformation of
/// `g = Σ ωᵢ⊗ωᵢ`. `Y` is treated as a small perturbation.
pub fn apply_deformation<T: Scalar>(g: &M4<T>, cf: &M4<T>, y: T) -> M4<T> {
    let y = y.mark_small();
    let c1 = -y / (T::one() + y);
    let mut out = *g;
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] += c1 * cf[0][i] * cf[0][j] + y * cf[1][i] * cf[1][j];
        }
    }
    out
}

/// Deformation driven by geodesic distance from `p` (evaluated pointwise
/// in `f64`, derivatives by differences).
#[derive(Clone, Debug)]
pub struct GeodesicDeformed<G> {
    pub base: G,
    pub w: SymplecticForm,
    pub p: Point,
    pub params: DeformParams,
    pub opts: GeodesyOptions,
    pub steps: usize,
    /// `ε₀` with `(1−ε₀)|v|² ≤ g(v,v)` near `p`, so `|x−p|√(1−ε₀) ≥ c`
    /// implies `r_g ≥ c`.
    pub c0: f64,
}

/// The diffused metric `g_{d,s}^{b,ε,c}` around `p`.
pub fn deform<G: MetricField>(g: G, w: SymplecticForm, p: Point, params: DeformParams, c0: f64) -> Result<GeodesicDeformed<G>> {
    params.validate()?;
    if !(0.0..1.0).contains(&c0) {
        return Err(Error::InvalidParams(format!("near-Euclidean bound {c0} outside [0,1)")));
    }
    // tight shots keep the field smooth enough for difference stencils
    let opts = GeodesyOptions { r_min: params.r_min(), tol: 1e-13, ..GeodesyOptions::default() };
    let reach = params.c / (1.0 - c0).sqrt();
    let steps = steps_for(1.1 * reach, opts.max_step);
    Ok(GeodesicDeformed { base: g, w, p, params, opts, steps, c0 })
}

impl<G: MetricField> GeodesicDeformed<G> {
    /// Deformation value `Y` and the metric at `x`.
    pub fn try_eval(&self, x: &Point) -> Result<(f64, M4<f64>)> {
        let g = self.base.eval(x);
        let z: V4<f64> = std::array::from_fn(|i| x[i] - self.p[i]);
        let ez = linalg::dot(&z, &z).sqrt();
        if self.params.vanishes_in_f64() || ez * (1.0 - self.c0).sqrt() >= self.params.c || ez < self.opts.r_min {
            return Ok((0.0, g));
        }
        let rd = radial_data_steps(&self.base, &self.p, x, None, &self.opts, self.steps)?;
        let y = self.params.y_profile(rd.dist)[0];
        if y == 0.0 {
            return Ok((0.0, g));
        }
        let cf = build_coframe(&g, &self.w, &rd.dr, &z)?;
        Ok((y, apply_deformation(&g, &cf, y)))
    }
}

impl<G: MetricField> MetricField for GeodesicDeformed<G> {
    fn eval(&self, x: &Point) -> M4<f64> {
        match self.try_eval(x) {
            Ok((_, g)) => g,
            Err(e) => panic!("deformed metric undefined at {x:?}: {e}"),
        }
    }
    /// Fourth-order central differences.
    fn deriv(&self, x: &Point) -> [M4<f64>; 4] {
        let h = 1e-4;
        std::array::from_fn(|l| {
            let at = |s: f64| {
                let mut y = *x;
                y[l] += s * h;
                self.eval(&y)
            };
            let (p1, m1, p2, m2) = (at(1.0), at(-1.0), at(2.0), at(-2.0));
            std::array::from_fn(|i| {
                std::array::from_fn(|j| (8.0 * (p1[i][j] - m1[i][j]) - (p2[i][j] - m2[i][j])) / (12.0 * h))
            })
        })
    }
    fn domain(&self) -> ChartDomain {
        self.base.domain()
    }
}

/// Deformation driven by a frozen distance `|A(x − p)|` (minimal image on
/// a torus), with `A` mapping offsets to orthonormal frame coordinates of a
/// constant metric. It is a formula metric with exact jets.
#[derive(Clone, Debug)]
pub struct FrozenDeformed<G> {
    pub base: G,
    pub w: SymplecticForm,
    pub p: Point,
    pub params: DeformParams,
    pub period: Option<f64>,
    /// Offset-to-frame map `A`; the frozen metric is `AᵀA`.
    pub frame: M4<f64>,
    /// `Y` is multiplied by `e^{λ}`; with `λ ≠ 0` only first-order
    /// perturbation channels are meaningful.
    pub log_shift: f64,
}

impl<G: SmoothMetric> FrozenDeformed<G> {
    pub fn new(base: G, p: Point, params: DeformParams, period: Option<f64>) -> Result<Self> {
        params.validate()?;
        Ok(FrozenDeformed { base, w: SymplecticForm::standard(), p, params, period, frame: linalg::eye(), log_shift: 0.0 })
    }

    pub fn with_frame(self, frame: M4<f64>) -> Self {
        FrozenDeformed { frame, ..self }
    }

    pub fn with_log_shift(self, log_shift: f64) -> Self {
        FrozenDeformed { log_shift, ..self }
    }

    /// Offset `x − p`, reduced to the minimal image on a torus.
    pub fn offset<T: Scalar>(&self, x: &[T; 4]) -> V4<T> {
        std::array::from_fn(|i| {
            let z = x[i] - T::cst(self.p[i]);
            match self.period {
                Some(l) => z - T::cst(l * (z.primal() / l).round()),
                None => z,
            }
        })
    }

    /// Frozen distance at `x`.
    pub fn frozen_dist(&self, x: &Point) -> f64 {
        let u = linalg::mat_vec(&self.frame, &self.offset(x));
        linalg::dot(&u, &u).sqrt()
    }
}

/// Applies a frozen-distance deformation to the metric value `g` at
/// frame offset `u = A z`.
pub fn frozen_deform<T: Scalar>(
    g: M4<T>,
    u: &V4<T>,
    frame: &M4<f64>,
    params: &DeformParams,
    w: &SymplecticForm,
    log_shift: f64,
) -> M4<T> {
    let r = linalg::dot(u, u).sqrt();
    let t = params.c - r.primal();
    if t <= 0.0 || t >= params.b + params.eps || r.primal() < params.r_min() {
        return g;
    }
    let y = params.y_of_shifted(r, log_shift);
    if y.primal() == 0.0 {
        return g;
    }
    let at = linalg::transpose(&linalg::lift_m::<T>(frame));
    let dr = linalg::mat_vec(&at, u);
    let r3 = linalg::mat_vec(&at, &reference_third(u));
    match build_coframe_with_reference(&g, w, &dr, &r3) {
        Ok(cf) => apply_deformation(&g, &cf, y),
        Err(e) => panic!("frozen coframe undefined at frame offset {:?}: {e}", linalg::primal_v(u)),
    }
}

impl<G: SmoothMetric> SmoothMetric for FrozenDeformed<G> {
    fn at<T: Scalar>(&self, x: &[T; 4]) -> M4<T> {
        let g = self.base.at(x);
        let u = linalg::mat_vec(&linalg::lift_m(&self.frame), &self.offset(x));
        frozen_deform(g, &u, &self.frame, &self.params, &self.w, self.log_shift)
    }
    fn chart(&self) -> ChartDomain {
        self.base.chart()
    }
}

// ------------------------------------------------------------ diffusion check

/// `(s(g_def) − s(g)) / (s·e^{−d/t})` at distance `r` with coefficients `a`,
/// `t = c − r`; `None` where the difference vanishes identically.
pub fn scaled_difference(params: &DeformParams, r: f64, co: &ConnectionCoeffs) -> Option<f64> {
    let [y0, y1, y2] = params.y_scaled(r)?;
    let y = params.y_profile(r)[0];
    Some(-y2 - y1 * y1_factor(&co.a) - y0 * i1(&co.a, &co.da, y))
}

/// Worst case of one clause.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ClauseReport {
    pub checked: usize,
    /// Worst value of the clause's margin (nonnegative means satisfied).
    pub margin: f64,
    pub worst_point: Option<Point>,
    pub worst_r: f64,
    pub passed: bool,
}

impl ClauseReport {
    fn new() -> Self {
        ClauseReport { margin: f64::INFINITY, passed: true, ..Default::default() }
    }
    fn record(&mut self, margin: f64, x: &Point, r: f64) {
        self.checked += 1;
        if margin < self.margin || margin.is_nan() {
            self.margin = margin;
            self.worst_point = Some(*x);
            self.worst_r = r;
        }
        if !(margin >= 0.0) {
            self.passed = false;
        }
    }
}

/// Log-scaled check of the two inequality clauses at a fixed `d`.
///
/// Clause (ii), `s(g_def) − s(g) ≤ 0` for `r_g ≥ c − b`, is checked as the
/// sign of the scaled difference (margin `−Ŝ`). Clause (iii),
/// `s(g_def) − s(g) ≤ −s·e^{−d/a}` for `c − b ≤ r_g ≤ c − a`, is checked as
/// `ln(−Ŝ) − d/t + d/a ≥ 0` (the margin), which stays meaningful where
/// both sides underflow.
#[derive(Clone, Debug, Serialize)]
pub struct DiffusionReport {
    pub d: f64,
    pub clause_ii: ClauseReport,
    pub clause_iii: ClauseReport,
    /// Largest scaled difference in the transition shell `c−b−ε < r_g < c−b`.
    pub transition_max_scaled: f64,
    pub f_positive: bool,
}

impl DiffusionReport {
    pub fn passed(&self) -> bool {
        self.clause_ii.passed && self.clause_iii.passed
    }
}

pub fn diffusion_check(params: &DeformParams, samples: &[CoefSample]) -> DiffusionReport {
    let mut ii = ClauseReport::new();
    let mut iii = ClauseReport::new();
    let mut trans = f64::NEG_INFINITY;
    let (a, b, c, d) = (params.a, params.b, params.c, params.d);
    for smp in samples {
        let r = smp.dist;
        let t = c - r;
        let Some(sh) = scaled_difference(params, r, &smp.coeffs) else {
            if r >= c - b {
                ii.record(0.0, &smp.x, r);
            }
            continue;
        };
        if r >= c - b {
            ii.record(-sh, &smp.x, r);
            if t >= a {
                let m = if sh < 0.0 { (-sh).ln() - d / t + d / a } else { f64::NEG_INFINITY };
                iii.record(m, &smp.x, r);
            }
        } else {
            trans = trans.max(sh);
        }
    }
    let f_positive = (1..=1000).all(|k| {
        let t = b * k as f64 / 1000.0;
        f_cut_scaled(d, t).iter().all(|&v| v > 0.0)
    });
    DiffusionReport { d, clause_ii: ii, clause_iii: iii, transition_max_scaled: trans, f_positive }
}

/// Smallest `d = 2^k`, `k ∈ k_range`, for which both clauses hold on the
/// samples, with the report at that `d`.
pub fn calibrate(
    params: &DeformParams,
    samples: &[CoefSample],
    k_range: std::ops::RangeInclusive<i32>,
) -> Result<(f64, DiffusionReport)> {
    let mut last = None;
    for k in k_range {
        let p = params.with_d(2f64.powi(k));
        let rep = diffusion_check(&p, samples);
        if rep.passed() && rep.f_positive {
            return Ok((p.d, rep));
        }
        last = Some(rep);
    }
    let why = match last {
        Some(r) if !r.clause_ii.passed => format!("clause (ii) fails, margin {:e} at r_g = {}", r.clause_ii.margin, r.clause_ii.worst_r),
        Some(r) if !r.clause_iii.passed => {
            format!("clause (iii) fails, log margin {:e} at r_g = {}", r.clause_iii.margin, r.clause_iii.worst_r)
        }
        Some(_) => "cutoff derivatives not positive".into(),
        None => "empty scan range".into(),
    };
    Err(Error::ParametersNotFound(why))
}

/// `max |a_{ijk}|·r_g / 2` and `max |a_{ijk,l}|·r_g² / 2` (both must be < 1).
pub fn coefficient_bound_ratios(smp: &CoefSample) -> (f64, f64) {
    let r = smp.dist;
    (smp.coeffs.max_abs() * r / 2.0, smp.coeffs.max_abs_deriv() * r * r / 2.0)
}

/// Coefficients of the flat metric's radial coframe, computed numerically,
/// against the closed table.
#[derive(Clone, Debug, Serialize)]
pub struct TableReport {
    pub samples: usize,
    pub max_err: f64,
    pub tol: f64,
}

impl TableReport {
    pub fn passed(&self) -> bool {
        self.samples > 0 && self.max_err < self.tol
    }
}

pub fn euclidean_table_check(p: &Point, pts: &[Point], tol: f64) -> Result<TableReport> {
    use rayon::prelude::*;
    let g = crate::tensor_core::ConstMetric::euclidean();
    let reach = pts.iter().map(|x| linalg::dot(&sub(x, p), &sub(x, p)).sqrt()).fold(0.0, f64::max);
    let cfr = GeodesicCoframe::new(&g, *p, reach, GeodesyOptions::default());
    let errs = pts
        .par_iter()
        .map(|x| {
            let smp = cfr.coeffs(x, None)?;
            let t = euclidean_table(smp.dist);
            let mut e: f64 = 0.0;
            for i in 0..4 {
                for j in 0..4 {
                    for k in 0..4 {
                        e = e.max((smp.coeffs.a[i][j][k] - t[i][j][k]).abs());
                    }
                }
            }
            Ok(e)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(TableReport { samples: pts.len(), max_err: errs.into_iter().fold(0.0, f64::max), tol })
}

/// `max |a_{ijk}|·r_g/2` and `max |a_{ijk,l}|·r_g²/2` over samples; the
/// first must stay below 1.
#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub samples: usize,
    pub max_ratio: f64,
    pub max_deriv_ratio: f64,
    pub worst_point: Option<Point>,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.samples > 0 && self.max_ratio < 1.0
    }
}

pub fn coefficient_bounds(g: &dyn MetricField, p: &Point, pts: &[Point]) -> Result<BoundReport> {
    use rayon::prelude::*;
    // step counts sized per point: one count for radii spanning 1e-2..1e2
    // would drown the short shots in roundoff
    let ratios = pts
        .par_iter()
        .map(|x| {
            let reach = linalg::dot(&sub(x, p), &sub(x, p)).sqrt().max(1.0);
            let cfr = GeodesicCoframe::new(g, *p, reach, GeodesyOptions::default());
            cfr.coeffs(x, None).map(|s| coefficient_bound_ratios(&s))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rep = BoundReport { samples: pts.len(), max_ratio: 0.0, max_deriv_ratio: 0.0, worst_point: None };
    for (x, (a, b)) in pts.iter().zip(ratios) {
        if a > rep.max_ratio {
            rep.max_ratio = a;
            rep.worst_point = Some(*x);
        }
        rep.max_deriv_ratio = rep.max_deriv_ratio.max(b);
    }
    Ok(rep)
}

fn sub(x: &Point, p: &Point) -> V4<f64> {
    std::array::from_fn(|i| x[i] - p[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::island::profile::ProfileParams;
    use crate::island::{default_biaxial, island_metric, BiaxialProfile, IslandMetric};
    use crate::tensor_core::{compat_residual_value, scalar_jet, ConstMetric};

    #[test]
    fn cutoff_values() {
        assert!((f_cut(1.0, 1.0, 1.0)[0] - 0.36787944117144233).abs() < 1e-15);
        assert_eq!(f_cut(2.0, 0.5, -3.0), [0.0; 4]);
        assert_eq!(f_cut(2.0, 0.5, 0.0), [0.0; 4]);
        assert_eq!(h_cut(0.1, 0.5, -0.5)[0], 1.0);
        assert_eq!(h_cut(0.1, 0.5, 0.7)[0], 0.0);
        let mut prev = 1.0;
        for k in 0..=1000 {
            let v = h_cut(0.1, 0.5, 0.5 + 0.1 * k as f64 / 1000.0)[0];
            assert!(v <= prev && (0.0..=1.0).contains(&v));
            prev = v;
        }
        // derivative stacks against differences
        for &t in &[0.3, 0.9, 2.0] {
            let (a, b) = (f_cut(1.5, 0.7, t + 1e-6), f_cut(1.5, 0.7, t - 1e-6));
            let c = f_cut(1.5, 0.7, t);
            for k in 0..3 {
                assert!(((a[k] - b[k]) / 2e-6 - c[k + 1]).abs() < 1e-6 * c[k + 1].abs().max(1.0));
            }
        }
        for &u in &[0.1, 0.37, 0.5, 0.8, 0.95] {
            let (a, b, c) = (step(u + 1e-6), step(u - 1e-6), step(u));
            for k in 0..3 {
                assert!(((a[k] - b[k]) / 2e-6 - c[k + 1]).abs() < 1e-5 * c[k + 1].abs().max(1.0), "u={u} k={k}");
            }
        }
    }

    #[test]
    fn y_profile_matches_generic_jet() {
        let p = DeformParams { a: 0.2, b: 0.6, eps: 0.1, c: 1.0, d: 0.5, s: 0.8 };
        for &r in &[0.35, 0.5, 0.8] {
            let y = p.y_profile(r);
            let j = p.y_of(Jet2::var(r, 0));
            assert!((j.v - y[0]).abs() < 1e-15);
            assert!((j.d[0] - y[1]).abs() < 1e-13);
            assert!((j.hess(0, 0) - y[2]).abs() < 1e-12);
            let sc = p.y_scaled(r).unwrap();
            let e = p.s * (-p.d / (p.c - r)).exp();
            for k in 0..3 {
                assert!((sc[k] * e - y[k]).abs() < 1e-13 * y[k].abs().max(1.0));
            }
        }
    }

    #[test]
    fn euclidean_coframe_and_table() {
        let g = ConstMetric::euclidean();
        let p = [0.1, -0.2, 0.3, 0.0];
        let cfr = GeodesicCoframe::new(&g, p, 5.0, GeodesyOptions::default());
        let w = SymplecticForm::standard();
        for x in [[1.0, 0.5, -0.3, 0.7], [-0.6, 1.4, 0.9, -1.1]] {
            let (cf, rd) = cfr.at(&x, None).unwrap();
            let (g1, g2, g3) = coframe_residuals(&cf, &linalg::eye(), &w);
            assert!(g1 < 1e-12 && g2 < 1e-12 && g3 < 1e-12, "{g1} {g2} {g3}");
            let smp = cfr.coeffs(&x, None).unwrap();
            let t = euclidean_table(rd.dist);
            let td = euclidean_table_derivs(rd.dist);
            for i in 0..4 {
                for j in 0..4 {
                    for k in 0..4 {
                        assert!((smp.coeffs.a[i][j][k] - t[i][j][k]).abs() < 1e-6, "a{i}{j}{k}");
                        for l in 0..4 {
                            assert!((smp.coeffs.da[l][i][j][k] - td[l][i][j][k]).abs() < 1e-4);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn jet_and_stencil_coefficients_agree_on_island() {
        // frozen-distance coframe of the island: exact jets vs the stencil
        let m = island_metric(default_biaxial().unwrap());
        let w = SymplecticForm::standard();
        let p = [0.05, 0.0, 0.1, 0.0];
        let frame = |x: &[Jet2<f64>; 4]| {
            let z: V4<Jet2<f64>> = std::array::from_fn(|i| x[i] - Jet2::constant(p[i]));
            build_coframe(&m.at(x), &w, &z, &z).unwrap()
        };
        let x = IslandMetric::point(0.45, 0.3, 0.5, -0.8);
        let exact = coeffs_from_jet(&frame(&Jet2::seed(&x))).unwrap();
        let mut f64frame = |y: &Point| -> Result<M4<f64>> {
            let z: V4<f64> = std::array::from_fn(|i| y[i] - p[i]);
            build_coframe(&m.eval(y), &w, &z, &z)
        };
        let fd = coeffs_stencil(&mut f64frame, &x, 1e-4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    assert!((exact.a[i][j][k] - fd.a[i][j][k]).abs() < 1e-7);
                    for l in 0..4 {
                        assert!((exact.da[l][i][j][k] - fd.da[l][i][j][k]).abs() < 1e-4);
                    }
                }
            }
        }
    }

    #[test]
    fn geodesic_coframe_reproduces_island_scalar() {
        // with Y ≡ 0 the formula is the scalar curvature of the base
        // amplified profile so the curvature is O(0.1)
        let pp = ProfileParams { amplitude: 20.0, ..Default::default() };
        let m = island_metric(BiaxialProfile::from_params(pp, pp).unwrap());
        let p = [0.02, 0.0, 0.03, 0.0];
        let cfr = GeodesicCoframe::new(&m, p, 2.0, GeodesyOptions::default());
        for x in [IslandMetric::point(0.45, 0.4, 0.45, 1.0), IslandMetric::point(0.5, -0.7, 0.45, 2.0)] {
            let smp = cfr.coeffs(&x, None).unwrap();
            assert!(smp.coeffs.first_symmetry_residual() < 1e-6);
            let s = m.closed_scalar_at(&x);
            let sf = smp.coeffs.scalar();
            assert!(s < -0.1 && (sf - s).abs() < 1e-3 * s.abs(), "{sf} vs {s}");
        }
    }

    #[test]
    fn frozen_deformation_scalar_matches_formula() {
        // on a flat base the frozen coframe is the geodesic one
        let g = ConstMetric::euclidean();
        let params = DeformParams { a: 0.1, b: 0.6, eps: 0.2, c: 1.0, d: 0.3, s: 1.0 };
        let fd = FrozenDeformed::new(g, [0.0; 4], params, None).unwrap();
        for &r in &[0.3, 0.55, 0.75] {
            let x = [r * 0.5, r * 0.5, r * 0.5, -r * 0.5];
            let s = scalar_jet(&fd, &x).unwrap();
            let y = params.y_profile(r);
            let expect = -y[2] - 7.0 * y[1] / r - 8.0 * y[0] / (r * r);
            assert!((s - expect).abs() < 1e-9 * expect.abs().max(1.0), "{s} vs {expect}");
            assert!(compat_residual_value(&fd.eval(&x), &SymplecticForm::standard()) < 1e-12);
        }
        assert_eq!(fd.eval(&[0.05, 0.0, 0.0, 0.0]), linalg::eye::<f64>());
        assert_eq!(fd.eval(&[1.5, 0.0, 0.0, 0.0]), linalg::eye::<f64>());
    }

    #[test]
    fn geodesic_deformation_is_support_exact_and_compatible() {
        let g = island_metric(default_biaxial().unwrap());
        let params = DeformParams { a: 0.1, b: 0.5, eps: 0.2, c: 1.0, d: 0.5, s: 1.0 };
        let def = deform(g.clone(), SymplecticForm::standard(), [0.0; 4], params, 0.5).unwrap();
        let w = SymplecticForm::standard();
        for x in [[0.1, 0.05, 0.0, 0.1], [0.5, 0.2, -0.1, 0.3], [0.7, 0.0, 0.3, 0.1], [1.5, 0.0, 0.0, 0.0]] {
            let (y, gd) = def.try_eval(&x).unwrap();
            if y == 0.0 {
                assert_eq!(gd, g.eval(&x));
            } else {
                assert!(compat_residual_value(&gd, &w) < 1e-12);
            }
        }
        assert_eq!(def.try_eval(&[0.1, 0.05, 0.0, 0.1]).unwrap().1, g.eval(&[0.1, 0.05, 0.0, 0.1]));
        let zero = deform(g.clone(), w, [0.0; 4], DeformParams { s: 0.0, ..params }, 2e-3).unwrap();
        let x = [0.5, 0.2, -0.1, 0.3];
        assert_eq!(zero.eval(&x), g.eval(&x));
    }

    #[test]
    fn invalid_parameters() {
        let ok = DeformParams { a: 0.1, b: 0.5, eps: 0.2, c: 1.0, d: 0.5, s: 1.0 };
        assert!(ok.validate().is_ok());
        assert!(DeformParams { c: 0.6, ..ok }.validate().is_err());
        assert!(DeformParams { c: 10.0, ..ok }.validate().is_err());
        assert!(DeformParams { s: 1.5, ..ok }.validate().is_err());
    }

    #[test]
    fn coefficient_bounds_hold_near_and_far() {
        let bp = default_biaxial().unwrap();
        let (p, _) = crate::island::gminus::section_parameters(&bp);
        let g = island_metric(bp);
        let pts: Vec<Point> = [0.01, 0.05, 0.3, 0.9, 1.6, 7.0, 40.0, 100.0]
            .iter()
            .enumerate()
            .map(|(k, &r)| {
                let th = 0.7 * k as f64 + 0.2;
                [p[0] + r * th.cos() * 0.6, p[1] + r * th.sin() * 0.6, p[2] + r * 0.8 * (1.3 * th).cos(), p[3] + r * 0.8 * (1.3 * th).sin()]
            })
            .collect();
        let rep = coefficient_bounds(&g, &p, &pts).unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert!(rep.max_ratio > 0.4, "the flat value 1/r is half the bound: {rep:?}");
    }
}
