//! The biaxial island metric
//! `f²dr² + (r²/f²)dθ² + h²dρ² + (ρ²/h²)dσ²`, `f = F^{-1/2}`, `h = H^{-1/2}`,
//! on R⁴ = R² × R², its closed-form curvature and the sign pattern of its
//! scalar curvature.

pub mod gminus;
pub mod profile;

pub use profile::{Profile, ProfileParams, ProfileReport};

use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::linalg::{self, M4};
use crate::scalar::Scalar;
use crate::tensor_core::{scalar_numeric, ChartDomain, OracleOptions, SmoothMetric};
use num_traits::Float;
use serde::Serialize;

/// The pair of radial functions `F = β(ρ)P(r) + 1`, `H = 1 − α(r)Q(ρ)`,
/// where α, P come from the first profile and β, Q from the second.
#[derive(Clone, Debug)]
pub struct BiaxialProfile {
    pub p: Profile,
    pub k: Profile,
}

/// Rows of the per-factor closed forms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvComponents {
    pub r1212: f64,
    pub r1313: f64,
    pub r1414: f64,
    pub r2424: f64,
    pub r3434: f64,
    pub r2323: f64,
}

impl CurvComponents {
    pub fn sum(&self) -> f64 {
        self.r1212 + self.r1313 + self.r1414 + self.r2424 + self.r3434 + self.r2323
    }
}

impl BiaxialProfile {
    /// Both factors from the same profile.
    pub fn symmetric(p: Profile) -> Self {
        BiaxialProfile { k: p.clone(), p }
    }

    pub fn from_params(pp: ProfileParams, kp: ProfileParams) -> Result<Self> {
        let p = Profile::new(pp)?;
        let k = if kp == pp { p.clone() } else { Profile::new(kp)? };
        for (name, prof) in [("p", &p), ("k", &k)] {
            let rep = prof.verify();
            if !(rep.positive_ok && rep.below_one_ok) {
                return Err(Error::Profile(format!("profile {name} violates {:?}", rep.failures())));
            }
        }
        Ok(BiaxialProfile { p, k })
    }

    /// Outer radius of the region where the metric can differ from flat.
    pub fn support(&self) -> (f64, f64) {
        (self.p.support(), self.k.support())
    }

    /// Radius below which `F = H = 1` to working precision.
    pub fn flat_radius(&self) -> (f64, f64) {
        (self.p.params.w1 * self.p.support() / 800.0, self.k.params.w1 * self.k.support() / 800.0)
    }

    /// `(F, H)` at radii `(r, ρ)` over any scalar type.
    pub fn fh<T: Scalar>(&self, r: T, rho: T) -> (T, T) {
        let alpha = r.lift(&|y| self.p.alpha(y));
        let pp = r.lift(&|y| self.p.big_p_stack(y));
        let beta = rho.lift(&|y| self.k.alpha(y));
        let qq = rho.lift(&|y| self.k.big_p_stack(y));
        (beta * pp + T::one(), T::one() - alpha * qq)
    }

    fn is_flat(&self, r: f64, rho: f64) -> bool {
        let (lr, lk) = self.support();
        let (fr, fk) = self.flat_radius();
        r < fr || rho < fk || r >= lr || rho >= lk
    }

    /// `F_rr + 3F_r/r + H_ρρ + 3H_ρ/ρ`, from exact partials.
    pub fn pde_residual(&self, r: f64, rho: f64) -> f64 {
        let (f, h) = self.fh(Jet2::var(r, 0), Jet2::var(rho, 1));
        f.hess(0, 0) + 3.0 * f.d[0] / r + h.hess(1, 1) + 3.0 * h.d[1] / rho
    }

    /// Closed-form scalar curvature
    /// `s = −(H/2F²)β'(ρ)²P(r)² − (F/2H²)α'(r)²Q(ρ)²`.
    pub fn closed_scalar(&self, r: f64, rho: f64) -> f64 {
        if r <= 0.0 || rho <= 0.0 {
            return 0.0;
        }
        let (f, h) = self.fh(r, rho);
        let dbeta = self.k.alpha(rho)[1];
        let dalpha = self.p.alpha(r)[1];
        let (pr, qr) = (self.p.big_p(r), self.k.big_p(rho));
        -(h / (2.0 * f * f)) * dbeta * dbeta * pr * pr - (f / (2.0 * h * h)) * dalpha * dalpha * qr * qr
    }

    /// `ln(−s)` of the closed form; `−∞` where `s = 0` exactly and
    /// finite wherever `s < 0`, including where `s` underflows.
    pub fn ln_neg_closed_scalar(&self, r: f64, rho: f64) -> f64 {
        if r <= 0.0 || rho <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let (f, h) = self.fh(r, rho);
        let t1 = (h / (2.0 * f * f)).ln() + 2.0 * self.k.ln_abs_dalpha(rho) + 2.0 * self.p.ln_big_p(r);
        let t2 = (f / (2.0 * h * h)).ln() + 2.0 * self.p.ln_abs_dalpha(r) + 2.0 * self.k.ln_big_p(rho);
        log_add_exp(t1, t2)
    }

    /// The six curvature components in the orthonormal polar frame
    /// `(dr, dθ, dρ, dσ)` ordering 1..4, with `R_{ijij}` the negative of
    /// the sectional curvature of the (i, j) plane.
    pub fn closed_curv_components(&self, r: f64, rho: f64) -> Result<CurvComponents> {
        if r <= 0.0 || rho <= 0.0 {
            return Err(Error::Axis { r, rho });
        }
        let (ff, hh) = self.fh(Jet2::var(r, 0), Jet2::var(rho, 1));
        let f = ff.sqrt().recip();
        let h = hh.sqrt().recip();
        let (fv, fr, frr, fp, fpp) = (f.v, f.d[0], f.hess(0, 0), f.d[1], f.hess(1, 1));
        let (hv, hr, hrr, hp, hpp) = (h.v, h.d[0], h.hess(0, 0), h.d[1], h.hess(1, 1));
        let (f2, f3, f4) = (fv * fv, fv * fv * fv, fv.powi(4));
        let (h2, h3, h4) = (hv * hv, hv * hv * hv, hv.powi(4));
        Ok(CurvComponents {
            r1212: -3.0 * fr / (r * f3) + 3.0 * fr * fr / f4 - frr / f3 - fp * fp / (f2 * h2),
            r1313: fpp / (fv * h2) - fp * hp / (fv * h3) + hrr / (f2 * hv) - fr * hr / (f3 * hv),
            r1414: -hrr / (hv * f2) + (hr * fr * hv + 2.0 * fv * hr * hr) / (f3 * h2) + fp / (rho * fv * h2)
                - fp * hp / (fv * h3),
            r2424: -hr / (r * f2 * hv) + hr * fr / (f3 * hv) - fp / (rho * fv * h2) + fp * hp / (fv * h3),
            r3434: -3.0 * hp / (rho * h3) - hpp / h3 + 3.0 * hp * hp / h4 - hr * hr / (f2 * h2),
            r2323: -fpp / (fv * h2) + fp * (2.0 * fp * hv + fv * hp) / (f2 * h3) + hr / (r * f2 * hv)
                - fr * hr / (f3 * hv),
        })
    }

    /// Check the three clauses of the sign pattern on an `n × n` grid over
    /// `[0, 1.2 L]²` plus the nine critical lattice points.
    pub fn sign_pattern_check(&self, n: usize) -> SignPatternReport {
        let (lr, lk) = self.support();
        let band = 1e-3;
        let mut rep = SignPatternReport { max_negative: f64::NEG_INFINITY, ..Default::default() };
        let near = |v: f64, targets: &[f64]| targets.iter().any(|t| (v - t).abs() < band);
        for i in 0..n {
            let r = 1.2 * lr * i as f64 / (n - 1) as f64;
            for j in 0..n {
                let rho = 1.2 * lk * j as f64 / (n - 1) as f64;
                let s = self.closed_scalar(r, rho);
                if r == 0.0 || rho == 0.0 || r >= lr || rho >= lk {
                    rep.zero_checked += 1;
                    rep.max_abs_on_zero_locus = rep.max_abs_on_zero_locus.max(s.abs());
                    if s.abs() >= 1e-10 {
                        rep.violations.push(SignViolation { r, rho, s, clause: "zero locus" });
                    }
                    continue;
                }
                let near_lattice = near(r, &self.p.crit) && near(rho, &self.k.crit);
                if near(r, &[0.0, lr]) || near(rho, &[0.0, lk]) || near_lattice {
                    rep.excluded += 1;
                    continue;
                }
                rep.negative_checked += 1;
                if s < 0.0 {
                    rep.max_negative = rep.max_negative.max(s);
                    if s >= -1e-14 {
                        rep.above_neg_1e14 += 1;
                    }
                } else if s == 0.0 && self.ln_neg_closed_scalar(r, rho).is_finite() {
                    rep.log_certified += 1;
                    rep.above_neg_1e14 += 1;
                } else {
                    rep.violations.push(SignViolation { r, rho, s, clause: "negativity" });
                }
            }
        }
        for &ri in &self.p.crit {
            for &rj in &self.k.crit {
                let s = self.closed_scalar(ri, rj);
                rep.lattice_max_abs = rep.lattice_max_abs.max(s.abs());
                if s.abs() >= 1e-10 {
                    rep.violations.push(SignViolation { r: ri, rho: rj, s, clause: "critical lattice" });
                }
            }
        }
        rep
    }

    /// Positivity of `F`, `H` and the PDE residual on an `n × n` interior grid.
    pub fn fh_report(&self, n: usize) -> FhReport {
        let (lr, lk) = self.support();
        let mut rep = FhReport { min_f: f64::INFINITY, min_h: f64::INFINITY, max_pde_residual: 0.0 };
        for i in 0..n {
            let r = lr * (i as f64 + 0.5) / n as f64;
            for j in 0..n {
                let rho = lk * (j as f64 + 0.5) / n as f64;
                let (f, h) = self.fh(r, rho);
                rep.min_f = rep.min_f.min(f);
                rep.min_h = rep.min_h.min(h);
                rep.max_pde_residual = rep.max_pde_residual.max(self.pde_residual(r, rho).abs());
            }
        }
        rep
    }
}

/// One grid point of the comparison between the closed scalar curvature
/// and the difference oracle.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct OracleRow {
    pub r: f64,
    pub rho: f64,
    pub closed: f64,
    pub numeric: f64,
    pub abs_err: f64,
    /// `max(rel·|closed|, abs)`: relative away from zeros, absolute near them.
    pub tol: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleAgreement {
    pub n: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub failures: usize,
    #[serde(skip)]
    pub rows: Vec<OracleRow>,
}

impl OracleAgreement {
    pub fn passed(&self) -> bool {
        self.failures == 0 && !self.rows.is_empty()
    }
}

impl BiaxialProfile {
    /// Closed scalar curvature against [`scalar_numeric`] on an `n × n`
    /// interior `(r, ρ)` grid, with varying angles.
    pub fn oracle_agreement(&self, n: usize, opts: &OracleOptions, rel: f64, abs: f64) -> Result<OracleAgreement> {
        use rayon::prelude::*;
        let m = IslandMetric { bp: self.clone() };
        let (lr, lk) = self.support();
        let rows = (0..n * n)
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k / n, k % n);
                let (r, rho) = (lr * (i as f64 + 0.5) / n as f64, lk * (j as f64 + 0.5) / n as f64);
                let x = IslandMetric::point(r, 0.3 + 0.7 * i as f64, rho, 1.1 - 0.9 * j as f64);
                let numeric = scalar_numeric(&m, &x, opts)?.s;
                let closed = self.closed_scalar(r, rho);
                Ok(OracleRow { r, rho, closed, numeric, abs_err: (numeric - closed).abs(), tol: (rel * closed.abs()).max(abs) })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut rep = OracleAgreement { n, max_rel_err: 0.0, max_abs_err: 0.0, failures: 0, rows: Vec::new() };
        for row in &rows {
            rep.max_abs_err = rep.max_abs_err.max(row.abs_err);
            if row.closed.abs() * rel > abs {
                rep.max_rel_err = rep.max_rel_err.max(row.abs_err / row.closed.abs());
            }
            rep.failures += (row.abs_err > row.tol) as usize;
        }
        rep.rows = rows;
        Ok(rep)
    }
}

/// `ln(eᵃ + eᵇ)` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[derive(Clone, Debug, Serialize)]
pub struct SignViolation {
    pub r: f64,
    pub rho: f64,
    pub s: f64,
    pub clause: &'static str,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SignPatternReport {
    pub zero_checked: usize,
    pub negative_checked: usize,
    pub excluded: usize,
    /// Points where `s` underflows to 0 but `ln(−s)` is finite.
    pub log_certified: usize,
    /// Negative points not below `−1e-14` (near the flat ends).
    pub above_neg_1e14: usize,
    pub max_abs_on_zero_locus: f64,
    pub lattice_max_abs: f64,
    /// Largest (closest to zero) negative value seen.
    pub max_negative: f64,
    pub violations: Vec<SignViolation>,
}

impl SignPatternReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FhReport {
    pub min_f: f64,
    pub min_h: f64,
    pub max_pde_residual: f64,
}

/// The island metric in Cartesian coordinates of R⁴.
#[derive(Clone, Debug)]
pub struct IslandMetric {
    pub bp: BiaxialProfile,
}

pub fn island_metric(bp: BiaxialProfile) -> IslandMetric {
    IslandMetric { bp }
}

impl SmoothMetric for IslandMetric {
    fn at<T: Scalar>(&self, x: &[T; 4]) -> M4<T> {
        let r2 = x[0] * x[0] + x[1] * x[1];
        let q2 = x[2] * x[2] + x[3] * x[3];
        let (r, rho) = (r2.sqrt(), q2.sqrt());
        if self.bp.is_flat(r.primal(), rho.primal()) {
            return linalg::eye();
        }
        let (f, h) = self.bp.fh(r, rho);
        // each factor: F·I + (1/F − F) u uᵀ with u the unit radial vector
        let a = (f.recip() - f) / r2;
        let b = (h.recip() - h) / q2;
        let mut g = linalg::zeros::<T>();
        g[0][0] = f + a * x[0] * x[0];
        g[1][1] = f + a * x[1] * x[1];
        g[0][1] = a * x[0] * x[1];
        g[1][0] = g[0][1];
        g[2][2] = h + b * x[2] * x[2];
        g[3][3] = h + b * x[3] * x[3];
        g[2][3] = b * x[2] * x[3];
        g[3][2] = g[2][3];
        g
    }

    fn chart(&self) -> ChartDomain {
        ChartDomain::ball([0.0; 4], 1e4)
    }
}

impl IslandMetric {
    /// Point with polar radii `(r, ρ)` and angles `(θ, σ)`.
    pub fn point(r: f64, theta: f64, rho: f64, sigma: f64) -> [f64; 4] {
        [r * theta.cos(), r * theta.sin(), rho * sigma.cos(), rho * sigma.sin()]
    }

    pub fn closed_scalar_at(&self, x: &[f64; 4]) -> f64 {
        self.bp.closed_scalar(x[0].hypot(x[1]), x[2].hypot(x[3]))
    }
}

/// Default island data.
pub fn default_biaxial() -> Result<BiaxialProfile> {
    BiaxialProfile::from_params(ProfileParams::default(), ProfileParams::default())
}
