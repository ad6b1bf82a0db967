//! Sign of `s(g(κ))` on a grid, below the range of `f64`.
//!
//! Every deformation is far below working precision (`Y ~ e^{−d/t}` with
//! `d` in the thousands), so `g(κ)` rounds to `g_A`. Its scalar curvature is
//! assembled as a sum of terms `m·e^{−λ}`:
//!
//! - the base `s(g_A)`, by the jet oracle or, where that is below its
//!   resolution inside an island, by the closed island formula in logs;
//! - the first-order change from the island deformation `g̃ → g⁻`, from the
//!   geodesic-frame coefficients of `g̃` and the closed difference formula;
//! - the first-order change from each frozen-distance layer, by the jet
//!   oracle over `Dual` numbers with `Y` rescaled by `e^{λ}`, `λ = d/(c−r)`.
//!
//! Products of two deformations are of order `e^{−λ₁−λ₂}`, negligible
//! against either term, so the layers add independently.

use super::{Layer, Layered, Patchwork, PipelineConfig, GLUE_INNER};
use crate::coframe_deform::{
    build_coframe, calibrate, coeffs_from_jet, scaled_difference, CoefSample, DeformParams, DiffusionReport,
    FrozenDeformed, GeodesicCoframe,
};
use crate::error::{Error, Result};
use crate::extended::{Ext, ExpSum, SumResult};
use crate::island::gminus::{shell_points, Gminus, JET_RESOLUTION};
use crate::jet::{Dual, Jet2};
use crate::linalg::{self, V4};
use crate::tensor_core::{
    compat_residual_value, scalar_jet, scalar_numeric, OracleOptions, Point, SmoothMetric, SymplecticForm,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Smallest admissible `|Σ|/Σ|terms|` for a sign to count.
pub const MIN_CANCELLATION: f64 = 1e-6;

/// How the base curvature at a point was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    /// Jet value beyond its resolution.
    Jet,
    /// Closed island formula in logarithms.
    Log,
    /// Exactly flat.
    Flat,
    /// Neither route applies.
    Unresolved,
}

impl Route {
    pub fn as_str(&self) -> &'static str {
        match self {
            Route::Jet => "jet",
            Route::Log => "log",
            Route::Flat => "flat",
            Route::Unresolved => "unresolved",
        }
    }
}

/// Terms that do not depend on the iteration's `d`.
#[derive(Clone, Debug)]
pub struct FixedTerms {
    pub y: Point,
    pub s_ga: f64,
    pub route: Route,
    pub terms: Vec<(f64, f64)>,
    /// The island-deformation coefficients could not be computed.
    pub island_failed: bool,
}

/// Per-layer bookkeeping of the strict clause on `[c−b, c−a]`.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct StepTally {
    pub strict_checked: usize,
    /// `min (ln|δs| − (ln s − d/a))`, nonnegative when the clause holds.
    pub strict_margin: f64,
    pub outer_checked: usize,
    pub outer_ok: bool,
}

impl StepTally {
    fn new() -> Self {
        StepTally { strict_margin: f64::INFINITY, outer_ok: true, ..Default::default() }
    }
    fn merge(&mut self, o: &StepTally) {
        self.strict_checked += o.strict_checked;
        self.strict_margin = self.strict_margin.min(o.strict_margin);
        self.outer_checked += o.outer_checked;
        self.outer_ok &= o.outer_ok;
    }
    pub fn passed(&self) -> bool {
        self.strict_margin >= 0.0 && self.outer_ok
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PointVerdict {
    pub y: Point,
    pub s_ga: f64,
    pub route: Route,
    pub total: SumResult,
    pub layers: usize,
    pub resolved: bool,
    pub passed: bool,
    /// Coordinate-stencil value of `s(g(κ))` in `f64`, on a subsample.
    pub s_stencil: Option<f64>,
}

pub struct VerdictContext<'a> {
    pub patchwork: &'a Patchwork,
    pub layers: &'a [Layer],
    pub gminus: &'a Gminus,
    pub params: DeformParams,
    coframe: GeodesicCoframe<'a>,
}

impl<'a> VerdictContext<'a> {
    pub fn new(patchwork: &'a Patchwork, layers: &'a [Layer], gminus: &'a Gminus, params: DeformParams) -> Self {
        let m = &gminus.metric;
        let coframe =
            GeodesicCoframe { g: &gminus.base, w: SymplecticForm::standard(), p: gminus.p, opts: m.opts, steps: m.steps };
        VerdictContext { patchwork, layers, gminus, params, coframe }
    }

    pub fn with_params(&self, params: DeformParams) -> Self {
        VerdictContext::new(self.patchwork, self.layers, self.gminus, params)
    }

    /// Base curvature and island-deformation terms at `y`.
    pub fn fixed_terms(&self, y: &Point) -> FixedTerms {
        let pw = self.patchwork;
        let s_ga = scalar_jet::<_, f64>(pw, y).unwrap_or(f64::NAN);
        let island = pw.locate(y).filter(|(_, u)| linalg::dot(u, u).sqrt() < GLUE_INNER).map(|(_, u)| u);
        let mut terms = Vec::new();
        let route = if s_ga < -JET_RESOLUTION {
            terms.push((s_ga, 0.0));
            Route::Jet
        } else if let Some(u) = island {
            let bp = &pw.island.bp;
            let (r, rho) = (u[0].hypot(u[1]), u[2].hypot(u[3]));
            let closed = bp.closed_scalar(r, rho);
            let ln = bp.ln_neg_closed_scalar(r, rho);
            if (s_ga - closed).abs() <= JET_RESOLUTION && ln.is_finite() {
                terms.push((-1.0, -ln));
                Route::Log
            } else if s_ga == 0.0 && closed == 0.0 {
                Route::Flat
            } else if s_ga > JET_RESOLUTION {
                terms.push((s_ga, 0.0));
                Route::Jet
            } else {
                Route::Unresolved
            }
        } else if s_ga == 0.0 {
            Route::Flat
        } else if s_ga > JET_RESOLUTION {
            terms.push((s_ga, 0.0));
            Route::Jet
        } else {
            Route::Unresolved
        };
        let mut island_failed = false;
        if let Some(u) = island {
            match self.island_term(&u) {
                Ok(Some(t)) => terms.push(t),
                Ok(None) => {}
                Err(_) => island_failed = true,
            }
        }
        FixedTerms { y: *y, s_ga, route, terms, island_failed }
    }

    /// First-order change `s(g⁻) − s(g̃)` at island coordinates `u`.
    fn island_term(&self, u: &V4<f64>) -> Result<Option<(f64, f64)>> {
        let p5 = self.gminus.params;
        let z: V4<f64> = std::array::from_fn(|i| u[i] - self.gminus.p[i]);
        // the island is within a fraction of a percent of Euclidean
        let e = linalg::dot(&z, &z).sqrt();
        if e >= 1.05 * p5.c || e <= 0.9 * p5.inner_radius() {
            return Ok(None);
        }
        let smp = self.coframe.coeffs(u, None)?;
        Ok(scaled_difference(&p5, smp.dist, &smp.coeffs).map(|sh| (p5.s * sh, p5.d / (p5.c - smp.dist))))
    }

    /// First-order changes from every layer containing `y`.
    pub fn layer_terms(&self, y: &Point, out: &mut Vec<(f64, f64)>) -> StepTally {
        let pw = self.patchwork;
        let pr = self.params;
        let mut tally = StepTally::new();
        let floor = pr.s.ln() - pr.d / pr.a;
        let x: [Dual<f64>; 4] = y.map(|v| Dual::new(v, 0.0));
        for l in self.layers {
            let u = linalg::mat_vec(&l.frame, &pw.torus.offset(y, &l.center));
            let r = linalg::dot(&u, &u).sqrt();
            let t = pr.c - r;
            if t <= 0.0 || t >= pr.b + pr.eps || r < pr.r_min() {
                continue;
            }
            let lambda = pr.d / t;
            let fd = FrozenDeformed::new(pw, l.center, pr, Some(pw.torus.scale()))
                .expect("validated parameters")
                .with_frame(l.frame)
                .with_log_shift(lambda);
            let lo = scalar_jet(&fd, &x).map_or(f64::NAN, |s| s.lo);
            out.push((lo, lambda));
            if r >= pr.c - pr.b && t >= pr.a {
                tally.strict_checked += 1;
                let m = if lo < 0.0 { (-lo).ln() - lambda - floor } else { f64::NEG_INFINITY };
                tally.strict_margin = tally.strict_margin.min(m);
            } else if t < pr.a {
                tally.outer_checked += 1;
                tally.outer_ok &= lo <= 0.0;
            }
        }
        tally
    }

    /// Full verdict at a point with precomputed fixed terms.
    pub fn point(&self, fixed: &FixedTerms) -> (PointVerdict, StepTally) {
        let mut terms = fixed.terms.clone();
        let tally = self.layer_terms(&fixed.y, &mut terms);
        let mut sum = ExpSum::new();
        let mut finite = true;
        for &(m, l) in &terms {
            finite &= m.is_finite() && l.is_finite();
            sum.push(m, l);
        }
        let total = sum.total();
        let resolved = finite && fixed.route != Route::Unresolved && !fixed.island_failed;
        let passed = resolved && total.value.sign < 0 && total.cancellation > MIN_CANCELLATION;
        let layers = terms.len() - fixed.terms.len();
        (PointVerdict { y: fixed.y, s_ga: fixed.s_ga, route: fixed.route, total, layers, resolved, passed, s_stencil: None }, tally)
    }
}

/// Verdict over the grid.
#[derive(Clone, Debug, Serialize)]
pub struct FinalVerdict {
    pub checked: usize,
    pub passed: usize,
    pub unresolved: usize,
    pub routes: [usize; 4],
    /// Largest sampled `s(g(κ))`.
    pub max_s: Ext,
    pub max_s_point: Option<Point>,
    /// `log10 c₁` with `s(g(κ)) ≤ −c₁` on the sample; `None` if not negative.
    pub c1_log10: Option<f64>,
    pub min_cancellation: f64,
    pub steps: StepTally,
    /// ω-compatibility of `g(κ)/m²` in the unscaled coordinates.
    pub max_compat_residual: f64,
    /// Stencil-oracle sweep of the stored `f64` field `g(κ)`: it sees only
    /// `g_A`, since every layer is below working precision.
    pub stencil_checked: usize,
    pub stencil_max: f64,
    pub stencil_min: f64,
    #[serde(skip)]
    pub rows: Vec<PointVerdict>,
}

impl FinalVerdict {
    pub fn all_negative(&self) -> bool {
        self.checked > 0 && self.passed == self.checked
    }
}

/// Grid points `S·(k + offset)/n`.
pub fn verify_points(scale: f64, n: usize, offset: f64) -> Vec<Point> {
    (0..n.pow(4))
        .map(|i| std::array::from_fn(|a| scale * (((i / n.pow(a as u32)) % n) as f64 + offset) / n as f64))
        .collect()
}

pub fn final_verdict(ctx: &VerdictContext<'_>, cfg: &PipelineConfig) -> FinalVerdict {
    let pts = verify_points(ctx.patchwork.torus.scale(), cfg.verify_grid, cfg.grid_offset);
    let w = SymplecticForm::standard();
    let gk = Layered { base: ctx.patchwork, layers: ctx.layers, params: ctx.params, upto: ctx.layers.len() };
    let stride = cfg.stencil_stride.max(1);
    let results: Vec<(PointVerdict, StepTally, f64)> = pts
        .par_iter()
        .enumerate()
        .map(|(i, y)| {
            let (mut v, t) = ctx.point(&ctx.fixed_terms(y));
            let g = gk.at(y);
            if i % stride == 0 {
                v.s_stencil = scalar_numeric(&gk, y, &OracleOptions::default()).ok().map(|o| o.s);
            }
            // g(κ)/m² in x = y/m has the components of g(κ) in y, and ω the
            // standard components in both
            (v, t, compat_residual_value(&g, &w))
        })
        .collect();
    let mut steps = StepTally::new();
    let mut max_s = Ext { sign: -1, ln_abs: f64::INFINITY };
    let mut max_pt = None;
    let (mut passed, mut unresolved, mut compat, mut canc) = (0, 0, 0.0f64, f64::INFINITY);
    let mut routes = [0usize; 4];
    for (v, t, c) in &results {
        steps.merge(t);
        compat = compat.max(*c);
        canc = canc.min(v.total.cancellation);
        passed += v.passed as usize;
        unresolved += !v.resolved as usize;
        routes[v.route as usize] += 1;
        if max_pt.is_none() || v.total.value.cmp_value(&max_s) == std::cmp::Ordering::Greater {
            max_s = v.total.value;
            max_pt = Some(v.y);
        }
    }
    let rows: Vec<PointVerdict> = results.into_iter().map(|r| r.0).collect();
    let st: Vec<f64> = rows.iter().filter_map(|r| r.s_stencil).collect();
    let c1_log10 = (max_s.sign < 0 && passed == rows.len()).then(|| max_s.log10_abs());
    FinalVerdict {
        checked: rows.len(),
        passed,
        unresolved,
        routes,
        max_s,
        max_s_point: max_pt,
        c1_log10,
        min_cancellation: canc,
        steps,
        max_compat_residual: compat,
        stencil_checked: st.len(),
        stencil_max: st.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        stencil_min: st.iter().copied().fold(f64::INFINITY, f64::min),
        rows,
    }
}

/// Coefficients of the flat metric in the coframe of `dist(·, 0)`.
pub fn euclidean_sample(z: &Point) -> Result<CoefSample> {
    use num_traits::Float;
    let x = Jet2::seed(z);
    let r = linalg::dot(&x, &x).sqrt();
    let dr: V4<Jet2<f64>> = x.map(|v| v / r);
    let cf = build_coframe(&linalg::eye(), &SymplecticForm::standard(), &dr, &x)?;
    Ok(CoefSample { x: *z, dist: r.v, coeffs: coeffs_from_jet(&cf)? })
}

/// Calibration outcome of the iteration's `d`.
#[derive(Clone, Debug, Serialize)]
pub struct IterationCalibration {
    /// Smallest `d` for which the two clauses hold on the flat law.
    pub flat_d: f64,
    pub flat_report: DiffusionReport,
    /// `d` after the transition shells are also negative.
    pub d: f64,
    pub shell_samples: usize,
    /// Worst shell total at the chosen `d`.
    pub shell_worst: Ext,
}

/// Island-frame offsets in the transition shell: near-axis structured
/// points and random ones.
fn transition_offsets(pr: &DeformParams, n: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let (lo, hi) = (pr.inner_radius(), pr.c - pr.b);
    let mid = 0.5 * (lo + hi);
    let mut v = Vec::new();
    for &small in &[1e-3, 1e-2, 0.05, 0.15, 0.3] {
        let big = (mid * mid - small * small).sqrt();
        for (th, sg) in [(0.3, 1.1), (2.0, -0.7)] {
            v.push([small * f64::cos(th), small * f64::sin(th), big * f64::cos(sg), big * f64::sin(sg)]);
            v.push([big * f64::cos(sg), big * f64::sin(sg), small * f64::cos(th), small * f64::sin(th)]);
        }
    }
    v.extend(shell_points(&[0.0; 4], lo * 1.0001, hi * 0.9999, n, rng));
    v
}

/// Calibrates `d = 2^k` of the iteration: first the two clauses on the
/// flat coefficient law, then raising `k` until the transition shells
/// around a centre are negative.
pub fn calibrate_iteration(ctx: &VerdictContext<'_>, cfg: &PipelineConfig) -> Result<IterationCalibration> {
    let pr = cfg.deform;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let flat_pts = shell_points(&[0.0; 4], pr.inner_radius() * 1.0001, pr.c * 0.9999, cfg.radial_samples, &mut rng);
    let flat = flat_pts.iter().map(euclidean_sample).collect::<Result<Vec<_>>>()?;
    let (flat_d, flat_report) = calibrate(&pr, &flat, cfg.k_min..=cfg.k_max)?;

    let pw = ctx.patchwork;
    let (c0, f0) = (pw.centers[0], pw.frames[0].frame);
    let s = pw.torus.scale();
    let offs = transition_offsets(&pr, cfg.shell_samples, &mut rng);
    let fixed: Vec<FixedTerms> = offs
        .par_iter()
        .map(|u| {
            let z = linalg::mat_vec(&f0, u);
            let y: Point = std::array::from_fn(|i| (c0[i] + z[i]).rem_euclid(s));
            ctx.fixed_terms(&y)
        })
        .collect();
    let k0 = flat_d.log2().round() as i32;
    let mut worst = Ext::ZERO;
    for k in k0..=cfg.k_max {
        let trial = ctx.with_params(pr.with_d(2f64.powi(k)));
        let res: Vec<PointVerdict> = fixed.par_iter().map(|f| trial.point(f).0).collect();
        worst = res.iter().map(|v| v.total.value).fold(Ext { sign: -1, ln_abs: f64::INFINITY }, Ext::max);
        if res.iter().all(|v| v.passed) {
            return Ok(IterationCalibration {
                flat_d,
                flat_report,
                d: trial.params.d,
                shell_samples: fixed.len(),
                shell_worst: worst,
            });
        }
    }
    Err(Error::ParametersNotFound(format!(
        "transition shells stay non-negative up to d = 2^{}, worst total {:?}",
        cfg.k_max, worst
    )))
}
