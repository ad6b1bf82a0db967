//! The modified island `g⁻`: the island metric diffused around a point
//! near the origin so that its scalar curvature becomes negative on the
//! whole ball, while it stays Euclidean far out.

use super::{BiaxialProfile, IslandMetric};
use crate::coframe_deform::{
    calibrate, deform, scaled_difference, CoefSample, DeformParams, DiffusionReport, GeodesicCoframe,
    GeodesicDeformed,
};
use crate::error::{Error, Result};
use crate::geodesy::radial_data_steps;
use crate::jet::Jet2;
use crate::linalg::{self, M4};
use crate::tensor_core::{compat_residual_value, scalar_jet, MetricField, Point, SmoothMetric, SymplecticForm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Sample counts and scan ranges for building and checking `g⁻`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GminusConfig {
    /// Samples with Euclidean distance to `p` uniform in `[c−b, c−a]`.
    pub annulus_samples: usize,
    /// Samples in the outer band `[c−a, c]`.
    pub outer_samples: usize,
    /// Samples in `B_{r₁/150}(p)`, where the deformation must not spoil
    /// negativity.
    pub core_samples: usize,
    /// Samples in the inner ball where `g⁻` must equal the island exactly.
    pub inner_samples: usize,
    /// Per-axis resolution of the negativity grid on `{|x| < 0.9}`.
    pub grid_n: usize,
    /// Samples with `1.5 < |x| < 3` for the far-field equality check.
    pub far_samples: usize,
    pub k_min: i32,
    pub k_max: i32,
    pub seed: u64,
    /// Near-Euclidean constant of the island on the working ball.
    pub c0: f64,
}

impl Default for GminusConfig {
    fn default() -> Self {
        GminusConfig {
            annulus_samples: 10_000,
            outer_samples: 500,
            core_samples: 200,
            inner_samples: 200,
            grid_n: 20,
            far_samples: 10_000,
            k_min: 0,
            k_max: 16,
            seed: 7,
            c0: 1e-3,
        }
    }
}

/// Base point and deformation radii: `r(p) = ρ(p) = r₁/50`, `c = 1`,
/// `a = 0.01`, `b = 1 − r₁/200`, `ε = r₁/600`; `d` is a placeholder.
pub fn section_parameters(bp: &BiaxialProfile) -> (Point, DeformParams) {
    let r1 = bp.p.crit[0];
    let p = [r1 / 50.0, 0.0, r1 / 50.0, 0.0];
    (p, DeformParams { a: 0.01, b: 1.0 - r1 / 200.0, eps: r1 / 600.0, c: 1.0, d: 1.0, s: 1.0 })
}

/// Uniform direction on S³.
fn direction(rng: &mut ChaCha8Rng) -> [f64; 4] {
    loop {
        let v: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = linalg::dot(&v, &v).sqrt();
        if n > 0.05 && n <= 1.0 {
            return v.map(|t| t / n);
        }
    }
}

/// Points at Euclidean distance uniform in `[lo, hi]` from `p`.
pub fn shell_points(p: &Point, lo: f64, hi: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    (0..n)
        .map(|_| {
            let u = direction(rng);
            let r = rng.random_range(lo..=hi);
            std::array::from_fn(|i| p[i] + r * u[i])
        })
        .collect()
}

/// Negativity of `s(g⁻) = s(g̃) + (s(g⁻) − s(g̃))` on `B_{r₁/150}(p)`,
/// compared in logarithms: `margin = ln(−s(g̃)) − ln(s·e^{−d/t}·Ŝ)` where
/// the difference is positive, `+∞` where it is not.
#[derive(Clone, Debug, Serialize)]
pub struct CoreReport {
    pub checked: usize,
    pub min_log_margin: f64,
    pub worst_point: Option<Point>,
    /// Samples where `s(g̃)` itself is not certified negative.
    pub base_not_negative: usize,
    pub passed: bool,
}

fn core_check(bp: &BiaxialProfile, params: &DeformParams, samples: &[CoefSample]) -> CoreReport {
    let mut rep = CoreReport { checked: 0, min_log_margin: f64::INFINITY, worst_point: None, base_not_negative: 0, passed: true };
    for smp in samples {
        rep.checked += 1;
        let x = smp.x;
        let ln_neg_base = bp.ln_neg_closed_scalar(x[0].hypot(x[1]), x[2].hypot(x[3]));
        if !ln_neg_base.is_finite() {
            rep.base_not_negative += 1;
            rep.passed = false;
        }
        let margin = match scaled_difference(params, smp.dist, &smp.coeffs) {
            Some(sh) if sh > 0.0 => ln_neg_base - (params.s.ln() - params.d / (params.c - smp.dist) + sh.ln()),
            _ => f64::INFINITY,
        };
        if margin < rep.min_log_margin {
            rep.min_log_margin = margin;
            rep.worst_point = Some(x);
        }
        if !(margin > 0.0) {
            rep.passed = false;
        }
    }
    rep
}

/// The modified island and the evidence it was calibrated on.
pub struct Gminus {
    pub metric: GeodesicDeformed<IslandMetric>,
    pub base: IslandMetric,
    pub p: Point,
    pub params: DeformParams,
    pub diffusion: DiffusionReport,
    pub core: CoreReport,
    /// Distances of the annulus samples, for reporting.
    pub sample_dists: Vec<f64>,
    pub inner: InnerReport,
}

/// Clause (i): bit-equality with the island inside `B_{c−b−ε}(p)`.
#[derive(Clone, Debug, Serialize)]
pub struct InnerReport {
    pub checked: usize,
    pub max_abs_diff: f64,
    pub bit_equal: bool,
}

fn coefficient_samples(cfr: &GeodesicCoframe<'_>, pts: &[Point]) -> Result<Vec<CoefSample>> {
    pts.par_iter().map(|x| cfr.coeffs(x, None)).collect()
}

/// Builds `g⁻` from the island `bp`: calibrates `d = 2^k` on coefficient
/// samples, then halves `s` from 1 until the core negativity holds.
pub fn build_gminus(bp: &BiaxialProfile, cfg: &GminusConfig) -> Result<Gminus> {
    build_gminus_with(bp, cfg, None)
}

/// As [`build_gminus`], with the amplitude pinned to `fixed_s` instead of
/// searched; the core check still has to pass.
pub fn build_gminus_with(bp: &BiaxialProfile, cfg: &GminusConfig, fixed_s: Option<f64>) -> Result<Gminus> {
    let base = IslandMetric { bp: bp.clone() };
    let (p, params) = section_parameters(bp);
    let w = SymplecticForm::standard();
    let proto = deform(base.clone(), w, p, params, cfg.c0)?;
    let cfr = GeodesicCoframe { g: &base, w, p, opts: proto.opts, steps: proto.steps };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (a, b, c) = (params.a, params.b, params.c);
    let mut pts = shell_points(&p, c - b, c - a, cfg.annulus_samples, &mut rng);
    pts.extend(shell_points(&p, c - a, c * 0.999, cfg.outer_samples, &mut rng));
    let samples = coefficient_samples(&cfr, &pts)?;
    let (d, diffusion) = calibrate(&params, &samples, cfg.k_min..=cfg.k_max)?;

    let r1 = bp.p.crit[0];
    let core_pts = shell_points(&p, 1.2 * params.r_min(), r1 / 150.0, cfg.core_samples, &mut rng);
    let core_samples = coefficient_samples(&cfr, &core_pts)?;
    let mut s = fixed_s.unwrap_or(1.0);
    let mut core = core_check(bp, &DeformParams { d, s, ..params }, &core_samples);
    for _ in 0..60 {
        if core.passed || fixed_s.is_some() {
            break;
        }
        s *= 0.5;
        core = core_check(bp, &DeformParams { d, s, ..params }, &core_samples);
    }
    if !core.passed {
        return Err(Error::ParametersNotFound(format!(
            "negativity on B_(r1/150)(p) fails, log margin {:e}",
            core.min_log_margin
        )));
    }
    let params = DeformParams { d, s, ..params };
    let metric = deform(base.clone(), w, p, params, cfg.c0)?;

    // clause (i): exact equality on the inner ball
    let inner_pts = shell_points(&p, 1.2 * params.r_min(), 0.999 * params.inner_radius(), cfg.inner_samples, &mut rng);
    let mut inner = InnerReport { checked: 0, max_abs_diff: 0.0, bit_equal: true };
    for x in &inner_pts {
        let rd = radial_data_steps(&base, &p, x, None, &metric.opts, metric.steps)?;
        if rd.dist >= params.inner_radius() {
            continue;
        }
        let (g0, g1) = (base.eval(x), metric.try_eval(x)?.1);
        inner.checked += 1;
        inner.max_abs_diff = inner.max_abs_diff.max(linalg::max_abs_diff(&g0, &g1));
        inner.bit_equal &= g0 == g1;
    }
    let sample_dists = samples.iter().map(|s| s.dist).collect();
    Ok(Gminus { metric, base, p, params, diffusion, core, sample_dists, inner })
}

/// Finite-order sizes `sup|g − δ|`, `sup|∂g|`, `sup|∂²g|` over a sample.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct FiniteOrderNorms {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

/// Absolute resolution of the jet oracle for `s`: below it the sign of a
/// working-precision value carries no information.
pub const JET_RESOLUTION: f64 = 1e-14;

/// Checks of `g⁻` on samples.
///
/// A grid point is certified negative either directly (jet oracle below
/// `−JET_RESOLUTION`) or, where `|s|` is under the oracle's resolution, by
/// the closed form in logarithms (`ln(−s)` finite) provided the jet value
/// agrees with the closed value to within the resolution.
/// Where `g⁻` differs from the island in `f64`, the exact difference
/// formula over the radial coframe coefficients decides.
#[derive(Clone, Debug, Serialize)]
pub struct GminusReport {
    /// Grid points in `{|x| < 0.9}`.
    pub grid_checked: usize,
    /// Grid points where `g⁻` rounds to the island, so its jets are exact.
    pub grid_exact: usize,
    pub jet_certified: usize,
    pub log_certified: usize,
    /// Points where `g⁻ ≠ g̃` in `f64`, certified by the difference formula.
    pub formula_certified: usize,
    pub failures: usize,
    pub worst_point: Option<Point>,
    pub max_jet_scalar: f64,
    /// `max |s_jet − s_closed|` over the grid.
    pub max_jet_closed_diff: f64,
    pub grid_negative: bool,
    pub far_checked: usize,
    pub far_bit_equal: bool,
    pub max_compat_residual: f64,
    pub norms: FiniteOrderNorms,
}

impl GminusReport {
    pub fn passed(&self) -> bool {
        self.grid_negative && self.far_bit_equal && self.max_compat_residual < 1e-9
    }
}

/// Grid of `n⁴` points in `{|x| < radius}`: `|x|` and the angle between
/// the two planes on offset grids, the two plane angles on full circles.
pub fn ball_grid(n: usize, radius: f64) -> Vec<Point> {
    let off = |k: usize| (k as f64 + 0.25) / n as f64;
    let tau = std::f64::consts::TAU;
    let mut out = Vec::with_capacity(n.pow(4));
    for i in 0..n {
        let big_r = radius * off(i);
        for j in 0..n {
            let phi = std::f64::consts::FRAC_PI_2 * off(j);
            for k in 0..n {
                for l in 0..n {
                    out.push(IslandMetric::point(big_r * phi.cos(), tau * off(k), big_r * phi.sin(), tau * off(l)));
                }
            }
        }
    }
    out
}

enum Verdict {
    Jet,
    Log,
    Formula,
    Fail,
}

struct GridValue {
    verdict: Verdict,
    s_jet: f64,
    diff: f64,
    compat: f64,
    exact: bool,
    norms: FiniteOrderNorms,
}

fn grid_value(g: &Gminus, x: &Point) -> Result<GridValue> {
    let (y, gm) = g.metric.try_eval(x)?;
    let compat = compat_residual_value(&gm, &g.metric.w);
    if y != 0.0 {
        // no exact jets of g⁻ here: s(g⁻) = s(g̃) + s·e^{−d/t}·Ŝ, with Ŝ from
        // the coefficients of the radial coframe and s(g̃) in logarithms
        let m = &g.metric;
        let cfr = GeodesicCoframe { g: &g.base, w: m.w, p: m.p, opts: m.opts, steps: m.steps };
        let smp = cfr.coeffs(x, None)?;
        let (r, rho) = (x[0].hypot(x[1]), x[2].hypot(x[3]));
        let ln_neg_base = g.base.bp.ln_neg_closed_scalar(r, rho);
        let pr = &g.params;
        let ok = ln_neg_base.is_finite()
            && match scaled_difference(pr, smp.dist, &smp.coeffs) {
                Some(sh) if sh > 0.0 => ln_neg_base > pr.s.ln() - pr.d / (pr.c - smp.dist) + sh.ln(),
                _ => true,
            };
        let verdict = if ok { Verdict::Formula } else { Verdict::Fail };
        return Ok(GridValue { verdict, s_jet: f64::NAN, diff: 0.0, compat, exact: false, norms: Default::default() });
    }
    let s_jet = scalar_jet(&g.base, x).ok_or(Error::DegenerateMetric(*x))?;
    let (r, rho) = (x[0].hypot(x[1]), x[2].hypot(x[3]));
    let s_closed = g.base.bp.closed_scalar(r, rho);
    let diff = (s_jet - s_closed).abs();
    let verdict = if s_jet < -JET_RESOLUTION {
        Verdict::Jet
    } else if diff <= JET_RESOLUTION && g.base.bp.ln_neg_closed_scalar(r, rho).is_finite() {
        Verdict::Log
    } else {
        Verdict::Fail
    };
    let j: M4<Jet2<f64>> = g.base.at(&Jet2::seed(x));
    let mut n = FiniteOrderNorms::default();
    for (a, row) in j.iter().enumerate() {
        for (b, e) in row.iter().enumerate() {
            n.c0 = n.c0.max((e.v - if a == b { 1.0 } else { 0.0 }).abs());
            n.c1 = e.d.iter().fold(n.c1, |m, v| m.max(v.abs()));
            for p in 0..4 {
                for q in 0..4 {
                    n.c2 = n.c2.max(e.hess(p, q).abs());
                }
            }
        }
    }
    Ok(GridValue { verdict, s_jet, diff, compat, exact: true, norms: n })
}

/// Negativity on the ball grid, far-field equality with `δ`, and
/// compatibility at every sample.
pub fn verify_gminus(g: &Gminus, cfg: &GminusConfig) -> Result<GminusReport> {
    let grid = ball_grid(cfg.grid_n, 0.9);
    let values: Vec<GridValue> = grid.par_iter().map(|x| grid_value(g, x)).collect::<Result<_>>()?;
    let mut rep = GminusReport {
        grid_checked: grid.len(),
        grid_exact: 0,
        jet_certified: 0,
        log_certified: 0,
        formula_certified: 0,
        failures: 0,
        worst_point: None,
        max_jet_scalar: f64::NEG_INFINITY,
        max_jet_closed_diff: 0.0,
        grid_negative: true,
        far_checked: 0,
        far_bit_equal: true,
        max_compat_residual: 0.0,
        norms: FiniteOrderNorms::default(),
    };
    for (x, v) in grid.iter().zip(&values) {
        rep.max_compat_residual = rep.max_compat_residual.max(v.compat);
        rep.grid_exact += v.exact as usize;
        match v.verdict {
            Verdict::Jet => rep.jet_certified += 1,
            Verdict::Log => rep.log_certified += 1,
            Verdict::Formula => rep.formula_certified += 1,
            Verdict::Fail => {
                rep.failures += 1;
                rep.worst_point.get_or_insert(*x);
            }
        }
        rep.max_jet_scalar = rep.max_jet_scalar.max(v.s_jet);
        rep.max_jet_closed_diff = rep.max_jet_closed_diff.max(v.diff);
        rep.norms.c0 = rep.norms.c0.max(v.norms.c0);
        rep.norms.c1 = rep.norms.c1.max(v.norms.c1);
        rep.norms.c2 = rep.norms.c2.max(v.norms.c2);
    }
    rep.grid_negative = rep.failures == 0;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let eye: M4<f64> = linalg::eye();
    for x in shell_points(&[0.0; 4], 1.5 + 1e-9, 3.0, cfg.far_samples, &mut rng) {
        let gm = g.metric.try_eval(&x)?.1;
        rep.far_checked += 1;
        rep.far_bit_equal &= gm == eye;
        rep.max_compat_residual = rep.max_compat_residual.max(compat_residual_value(&gm, &g.metric.w));
    }
    Ok(rep)
}
