//! The closed-manifold pipeline on a flat (or mildly perturbed) 4-torus:
//! covering net and colouring, frozen comparison metrics, island surgery,
//! the iterated diffusion deformations and the final negativity verdict.
//!
//! Everything is expressed in rescaled coordinates `y = m·x`, in which the
//! rescaled metric `m²g` has period `S = m·L` and unit-size islands.

pub mod net;
pub mod verdict;

pub use net::{build_net, verify_net, CoveringNet, NetConfig, NetReport};
pub use verdict::{FinalVerdict, IterationCalibration, PointVerdict, Route, VerdictContext};

use crate::coframe_deform::{frozen_deform, step, DeformParams};
use crate::error::{Error, Result};
use crate::island::gminus::{build_gminus, Gminus, GminusConfig};
use crate::island::{default_biaxial, IslandMetric};
use crate::linalg::{self, M4, V4};
use crate::scalar::Scalar;
use crate::tensor_core::{
    canonical_j, compat_residual_value, exp_metric, log_metric_generic, ChartDomain, Point, SmoothMetric,
    SymplecticForm,
};
use serde::{Deserialize, Serialize};

// ------------------------------------------------------------------ torus

/// `m²g` on the torus `R⁴/(S·Z)⁴`, `S = m·L`, with `g = exp(h₀)` for a
/// fixed periodic `J`-anti-invariant `h₀` of the given amplitude.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TorusManifold {
    /// Period `L` of the unscaled torus.
    pub period: f64,
    /// Scale `m`.
    pub m: f64,
    /// Amplitude of `h₀`; zero gives the flat torus.
    pub amplitude: f64,
}

/// `(n, phase, basis index)` of each mode of `h₀`.
const MODES: [([f64; 4], f64, usize); 3] =
    [([1.0, 0.0, 0.0, 0.0], 0.0, 0), ([0.0, 1.0, 1.0, 0.0], 0.3, 1), ([1.0, 0.0, 0.0, 1.0], 1.1, 2)];

/// Symmetric matrices anticommuting with the standard `J`.
pub fn anti_invariant_basis() -> [M4<f64>; 3] {
    let j = canonical_j::<f64>(&linalg::eye(), &SymplecticForm::standard()).expect("standard structure");
    let proj = |b: M4<f64>| {
        let c = linalg::mul(&linalg::mul(&linalg::transpose(&j), &b), &j);
        std::array::from_fn(|i| std::array::from_fn(|k| 0.5 * (b[i][k] - c[i][k])))
    };
    let mut b0 = [[0.0; 4]; 4];
    b0[0][0] = 1.0;
    let mut b1 = [[0.0; 4]; 4];
    b1[0][2] = 1.0;
    b1[2][0] = 1.0;
    let mut b2 = [[0.0; 4]; 4];
    b2[1][3] = 1.0;
    b2[3][1] = 1.0;
    b2[2][2] = 1.0;
    [proj(b0), proj(b1), proj(b2)]
}

impl TorusManifold {
    pub fn flat(period: f64, m: f64) -> Self {
        TorusManifold { period, m, amplitude: 0.0 }
    }

    /// Period `S = m·L` in rescaled coordinates.
    pub fn scale(&self) -> f64 {
        self.m * self.period
    }

    pub fn is_flat(&self) -> bool {
        self.amplitude == 0.0
    }

    /// `h₀` at rescaled position `y`.
    pub fn h0<T: Scalar>(&self, y: &[T; 4]) -> M4<T> {
        let basis = anti_invariant_basis();
        let mut h = linalg::zeros::<T>();
        let k = std::f64::consts::TAU / self.scale();
        for (n, phase, b) in MODES {
            let mut arg = T::cst(phase);
            for i in 0..4 {
                arg += T::cst(k * n[i]) * y[i];
            }
            let c = T::cst(self.amplitude) * arg.cos();
            for i in 0..4 {
                for l in 0..4 {
                    h[i][l] += c * T::cst(basis[b][i][l]);
                }
            }
        }
        h
    }

    /// Minimal-image offset `y − a`.
    pub fn offset<T: Scalar>(&self, y: &[T; 4], a: &Point) -> V4<T> {
        let s = self.scale();
        std::array::from_fn(|i| {
            let z = y[i] - T::cst(a[i]);
            z - T::cst(s * (z.primal() / s).round())
        })
    }

    /// `sup |eig(m²g) − 1|` over an `n⁴` grid, the near-Euclidean constant.
    pub fn euclidean_gap(&self, n: usize) -> f64 {
        if self.is_flat() {
            return 0.0;
        }
        let s = self.scale();
        let mut gap: f64 = 0.0;
        for idx in 0..n.pow(4) {
            let y: Point = std::array::from_fn(|i| s * ((idx / n.pow(i as u32)) % n) as f64 / n as f64);
            let (vals, _) = linalg::sym_eigen(&self.at(&y));
            gap = vals.iter().fold(gap, |g, v| g.max((v - 1.0).abs()));
        }
        gap
    }
}

impl SmoothMetric for TorusManifold {
    fn at<T: Scalar>(&self, y: &[T; 4]) -> M4<T> {
        if self.is_flat() {
            return linalg::eye();
        }
        exp_metric(&linalg::eye(), &self.h0(y))
    }
    fn chart(&self) -> ChartDomain {
        ChartDomain::torus(self.scale())
    }
}

// ----------------------------------------------------------------- freeze

/// The constant-coefficient extension of `m²g` at `p`, and an adapted
/// orthonormal frame `e₁, e₂ = Je₁, e₃, e₄ = Je₃` of it.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FreezeMetric {
    pub p: Point,
    pub g_p: M4<f64>,
    /// Columns `e₁..e₄`.
    pub frame: M4<f64>,
    /// `frame⁻¹`: offsets to frame coordinates; `g_p = AᵀA`.
    pub inverse: M4<f64>,
}

pub fn freeze_metric(torus: &TorusManifold, p: &Point) -> Result<FreezeMetric> {
    let g_p = torus.at(p);
    let j = canonical_j(&g_p, &SymplecticForm::standard())?;
    let ip = |u: &V4<f64>, v: &V4<f64>| linalg::form(&g_p, u, v);
    let unit = |u: V4<f64>| {
        let n = ip(&u, &u).sqrt();
        u.map(|t| t / n)
    };
    let e1 = unit([1.0, 0.0, 0.0, 0.0]);
    let e2 = linalg::mat_vec(&j, &e1);
    let r3 = [0.0, 0.0, 1.0, 0.0];
    let (c1, c2) = (ip(&r3, &e1), ip(&r3, &e2));
    let e3 = unit(std::array::from_fn(|i| r3[i] - c1 * e1[i] - c2 * e2[i]));
    let e4 = linalg::mat_vec(&j, &e3);
    let frame: M4<f64> = std::array::from_fn(|i| [e1[i], e2[i], e3[i], e4[i]]);
    let inverse = linalg::inv(&frame).ok_or(Error::DegenerateMetric(*p))?;
    Ok(FreezeMetric { p: *p, g_p, frame, inverse })
}

impl SmoothMetric for FreezeMetric {
    fn at<T: Scalar>(&self, _y: &[T; 4]) -> M4<T> {
        linalg::lift_m(&self.g_p)
    }
    fn chart(&self) -> ChartDomain {
        ChartDomain::ball(self.p, 1e6)
    }
}

/// `sup` over samples of `|m²g − m²g_p|` and its first two derivatives.
pub fn freeze_gap(torus: &TorusManifold, fz: &FreezeMetric, pts: &[Point]) -> [f64; 3] {
    use crate::jet::Jet2;
    let mut out = [0.0f64; 3];
    for y in pts {
        let j: M4<Jet2<f64>> = torus.at(&Jet2::seed(y));
        for a in 0..4 {
            for b in 0..4 {
                let e = j[a][b];
                out[0] = out[0].max((e.v - fz.g_p[a][b]).abs());
                out[1] = e.d.iter().fold(out[1], |m, v| m.max(v.abs()));
                out[2] = e.h.iter().fold(out[2], |m, v| m.max(v.abs()));
            }
        }
    }
    out
}

// ---------------------------------------------------------------- surgery

/// Radii of the surgery: exact island copy inside `glue_inner`, blend to
/// `m²g` between `glue_inner` and `glue_outer`, `m²g` beyond `support`.
pub const ISLAND_EXACT: f64 = 1.5;
pub const GLUE_INNER: f64 = 1.7;
pub const GLUE_OUTER: f64 = 1.8;
pub const ISLAND_SUPPORT: f64 = 2.0;

/// `g_A`: copies of the island metric at the net centres, glued into `m²g`
/// by `(φ*g⁻)·exp(η h)` with `h = log(φ*g⁻, m²g)`.
///
/// The copies use the island `g̃` itself: at the calibrated parameters the
/// deformation to `g⁻` rounds to zero in `f64`, and its curvature effect is
/// accounted for separately by the verdict.
#[derive(Clone, Debug)]
pub struct Patchwork {
    pub torus: TorusManifold,
    pub centers: Vec<Point>,
    pub frames: Vec<FreezeMetric>,
    pub island: IslandMetric,
}

/// Blend `η`: 0 below `GLUE_INNER`, 1 above `GLUE_OUTER`.
fn eta(r: f64) -> [f64; 4] {
    let s = step((r - GLUE_INNER) / (GLUE_OUTER - GLUE_INNER));
    let k = 1.0 / (GLUE_OUTER - GLUE_INNER);
    [1.0 - s[0], -s[1] * k, -s[2] * k * k, -s[3] * k * k * k]
}

impl Patchwork {
    /// Centre whose support ball contains `y`, with the frame offset.
    pub fn locate(&self, y: &Point) -> Option<(usize, V4<f64>)> {
        self.centers.iter().enumerate().find_map(|(i, a)| {
            let u = linalg::mat_vec(&self.frames[i].inverse, &self.torus.offset(y, a));
            (linalg::dot(&u, &u) < ISLAND_SUPPORT * ISLAND_SUPPORT).then_some((i, u))
        })
    }

    /// Frame offset of `y` from centre `i`.
    pub fn frame_offset<T: Scalar>(&self, i: usize, y: &[T; 4]) -> V4<T> {
        linalg::mat_vec(&linalg::lift_m(&self.frames[i].inverse), &self.torus.offset(y, &self.centers[i]))
    }

    /// `J`-anti-invariance residual of the gluing logarithm at `y`.
    pub fn glue_anti_invariance(&self, y: &Point) -> Option<f64> {
        let (i, _) = self.locate(y)?;
        let gp = self.frames[i].g_p;
        let h = crate::tensor_core::log_metric(&gp, &self.torus.at(y)).ok()?;
        let j = canonical_j(&gp, &SymplecticForm::standard()).ok()?;
        // h(J·, J·) = −h
        let hj = linalg::mul(&linalg::mul(&linalg::transpose(&j), &h), &j);
        Some(linalg::max_abs(&linalg::add(&hj, &h)))
    }
}

impl SmoothMetric for Patchwork {
    fn at<T: Scalar>(&self, y: &[T; 4]) -> M4<T> {
        let Some((i, up)) = self.locate(&linalg::primal_v(y)) else {
            return self.torus.at(y);
        };
        let r = linalg::dot(&up, &up).sqrt();
        let u = self.frame_offset(i, y);
        let a = linalg::lift_m::<T>(&self.frames[i].inverse);
        let island = if r < ISLAND_EXACT { self.island.at(&u) } else { linalg::eye() };
        let pulled = linalg::mul(&linalg::mul(&linalg::transpose(&a), &island), &a);
        if r <= GLUE_INNER || self.torus.is_flat() {
            return pulled;
        }
        let rr = linalg::dot(&u, &u).sqrt();
        let e = rr.lift(&eta);
        let h = log_metric_generic(&pulled, &self.torus.at(y)).expect("metrics comparable near the glue");
        exp_metric(&pulled, &h.map(|row| row.map(|v| v * e)))
    }
    fn chart(&self) -> ChartDomain {
        self.torus.chart()
    }
}

// -------------------------------------------------------------- iteration

/// One diffusion deformation of the iteration, applied at a net centre.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Layer {
    pub center: Point,
    /// Frame map of the frozen metric at the centre.
    pub frame: M4<f64>,
    pub color: usize,
}

/// `g(i)`: the first `upto` layers applied in colour order on top of `g_A`.
#[derive(Clone, Debug)]
pub struct Layered<'a> {
    pub base: &'a Patchwork,
    pub layers: &'a [Layer],
    pub params: DeformParams,
    pub upto: usize,
}

impl Layered<'_> {
    pub fn apply<T: Scalar>(&self, mut g: M4<T>, y: &[T; 4], range: std::ops::Range<usize>) -> M4<T> {
        let w = SymplecticForm::standard();
        for l in &self.layers[range] {
            let u = linalg::mat_vec(&linalg::lift_m(&l.frame), &self.base.torus.offset(y, &l.center));
            g = frozen_deform(g, &u, &l.frame, &self.params, &w, 0.0);
        }
        g
    }
}

impl SmoothMetric for Layered<'_> {
    fn at<T: Scalar>(&self, y: &[T; 4]) -> M4<T> {
        self.apply(self.base.at(y), y, 0..self.upto)
    }
    fn chart(&self) -> ChartDomain {
        self.base.chart()
    }
}

/// Layers ordered by colour class.
pub fn layers_from_net(net: &CoveringNet, frames: &[FreezeMetric]) -> Vec<Layer> {
    let mut idx: Vec<usize> = (0..net.centers.len()).collect();
    idx.sort_by_key(|&i| (net.colors[i], i));
    idx.into_iter().map(|i| Layer { center: net.centers[i], frame: frames[i].inverse, color: net.colors[i] }).collect()
}

// ----------------------------------------------------------------- config

/// The iteration's deformation radii.
pub fn iteration_params() -> DeformParams {
    DeformParams { a: 1.0, b: 8.5, eps: 0.1, c: 9.0, d: 1.0, s: 1.0 }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub torus: TorusManifold,
    pub net: NetConfig,
    pub deform: DeformParams,
    /// Scan range for `d = 2^k` of the iteration.
    pub k_min: i32,
    pub k_max: i32,
    /// Radial samples for the flat-law clause calibration.
    pub radial_samples: usize,
    /// Samples in the transition shell around one centre.
    pub shell_samples: usize,
    /// Per-axis resolution of the verdict grid and its offset in cells.
    pub verify_grid: usize,
    pub grid_offset: f64,
    /// Every this many grid points also get the stencil oracle.
    pub stencil_stride: usize,
    /// Random samples per colour class for the support-exactness check.
    pub step_samples: usize,
    /// Random samples for the checks of `g_A`.
    pub surgery_samples: usize,
    /// Largest admissible near-Euclidean constant of `m²g`.
    pub gate_eps: f64,
    pub seed: u64,
    pub gminus: GminusConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            torus: TorusManifold::flat(1.0, 20.0),
            net: NetConfig::default(),
            deform: iteration_params(),
            k_min: 4,
            k_max: 20,
            radial_samples: 2000,
            shell_samples: 64,
            verify_grid: 20,
            grid_offset: 0.25,
            stencil_stride: 16,
            step_samples: 64,
            surgery_samples: 10000,
            gate_eps: 0.05,
            seed: 11,
            gminus: GminusConfig { annulus_samples: 2000, outer_samples: 200, grid_n: 0, far_samples: 0, ..Default::default() },
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.deform.validate()?;
        let t = &self.torus;
        if !(t.period > 0.0 && t.m > 0.0 && t.amplitude.is_finite()) {
            return Err(Error::InvalidParams(format!("bad torus {t:?}")));
        }
        if self.verify_grid == 0 || self.net.cover_grid == 0 || self.k_min > self.k_max {
            return Err(Error::InvalidParams("empty grid or scan range".into()));
        }
        Ok(())
    }
}

// -------------------------------------------------------------- the stages

/// Support exactness, compatibility and norm bookkeeping of one colour
/// class of layers.
#[derive(Clone, Debug, Serialize)]
pub struct StepReport {
    pub color: usize,
    pub centers: usize,
    /// Smallest distance between two centres of the class (inf if one).
    pub min_center_distance: f64,
    /// The class's `c`-balls are pairwise disjoint.
    pub disjoint: bool,
    pub outside_checked: usize,
    pub outside_bit_equal: bool,
    pub inside_checked: usize,
    pub max_compat_residual: f64,
    /// `max |g(i) − g(i−1)|` over the inside samples, as stored in `f64`.
    pub max_change: f64,
}

/// Checks of `g_A` on random samples.
#[derive(Clone, Debug, Serialize)]
pub struct SurgeryReport {
    pub samples: usize,
    pub max_compat_residual: f64,
    pub min_eigenvalue: f64,
    /// Samples inside some 1.7-ball, where `g_A` must be the island copy.
    pub island_checked: usize,
    pub island_bit_equal: bool,
    /// Samples outside every 2-ball, where `g_A` must be `m²g`.
    pub outside_checked: usize,
    pub outside_bit_equal: bool,
    /// `max |h(J·,J·) + h|` of the gluing logarithm.
    pub max_glue_anti_invariance: f64,
}

impl SurgeryReport {
    pub fn passed(&self) -> bool {
        self.max_compat_residual < 1e-9 && self.min_eigenvalue > 0.0 && self.island_bit_equal && self.outside_bit_equal
    }
}

/// Everything the pipeline computed up to the stage it stopped at.
pub struct PipelineRun {
    pub config: PipelineConfig,
    pub gate_eps: f64,
    pub net: CoveringNet,
    pub net_report: NetReport,
    pub gminus: Option<Gminus>,
    pub patchwork: Option<Patchwork>,
    pub surgery: Option<SurgeryReport>,
    pub layers: Vec<Layer>,
    pub params: DeformParams,
    pub calibration: Option<IterationCalibration>,
    pub steps: Vec<StepReport>,
    pub verdict: Option<FinalVerdict>,
    pub stage_reached: Stage,
}

impl PipelineRun {
    /// Every check of the stages that ran passed.
    pub fn passed(&self) -> bool {
        self.net_report.passed()
            && self.surgery.as_ref().is_none_or(|s| s.passed())
            && self.steps.iter().all(|s| s.disjoint && s.outside_bit_equal && s.max_compat_residual < 1e-9)
            && self.verdict.as_ref().is_none_or(|v| v.all_negative() && v.steps.passed())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Net,
    Surgery,
    Iterate,
    Verdict,
}

impl std::str::FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "net" => Ok(Stage::Net),
            "surgery" => Ok(Stage::Surgery),
            "iterate" => Ok(Stage::Iterate),
            "verdict" => Ok(Stage::Verdict),
            _ => Err(Error::InvalidParams(format!("unknown stage {s}"))),
        }
    }
}

/// Gates on the scale: the torus must hold the same-colour balls of radius
/// `c + 1`, and `m²g` must be near-Euclidean.
pub fn check_gates(cfg: &PipelineConfig, eps0: f64) -> Result<()> {
    let s = cfg.torus.scale();
    if s < 2.0 * (cfg.deform.c + 1.0) {
        return Err(Error::Gate(format!(
            "separation gate: period m·L = {s} cannot hold balls of radius {}",
            cfg.deform.c + 1.0
        )));
    }
    if eps0 > cfg.gate_eps {
        return Err(Error::Gate(format!("near-euclidean gate: constant {eps0:e} exceeds {:e}", cfg.gate_eps)));
    }
    Ok(())
}

/// Island copies at every centre after checking that `g⁻` rounds to `g̃`.
pub fn embed_islands(torus: &TorusManifold, net: &CoveringNet, gminus: &Gminus) -> Result<Patchwork> {
    if !gminus.params.vanishes_in_f64() {
        return Err(Error::Surgery {
            center: gminus.p,
            reason: "island deformation is representable; exact island copies need g⁻ as a formula metric".into(),
        });
    }
    let frames = net.centers.iter().map(|a| freeze_metric(torus, a)).collect::<Result<Vec<_>>>()?;
    for (a, f) in net.centers.iter().zip(&frames) {
        if crate::tensor_core::log_metric(&f.g_p, &torus.at(a)).is_err() {
            return Err(Error::Surgery { center: *a, reason: "metrics not comparable".into() });
        }
    }
    Ok(Patchwork { torus: *torus, centers: net.centers.clone(), frames, island: gminus.base.clone() })
}

fn random_points(s: f64, n: usize, seed: u64) -> Vec<Point> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| std::array::from_fn(|_| rng.random_range(0.0..s))).collect()
}

pub fn check_surgery(pw: &Patchwork, samples: usize, seed: u64) -> SurgeryReport {
    let w = SymplecticForm::standard();
    let mut rep = SurgeryReport {
        samples,
        max_compat_residual: 0.0,
        min_eigenvalue: f64::INFINITY,
        island_checked: 0,
        island_bit_equal: true,
        outside_checked: 0,
        outside_bit_equal: true,
        max_glue_anti_invariance: 0.0,
    };
    for y in random_points(pw.torus.scale(), samples, seed) {
        let g = pw.at(&y);
        rep.max_compat_residual = rep.max_compat_residual.max(compat_residual_value(&g, &w));
        rep.min_eigenvalue = rep.min_eigenvalue.min(linalg::min_eig(&g));
        match pw.locate(&y) {
            Some((i, u)) => {
                if linalg::dot(&u, &u).sqrt() < GLUE_INNER {
                    let a = pw.frames[i].inverse;
                    let copy = linalg::mul(&linalg::mul(&linalg::transpose(&a), &pw.island.at(&u)), &a);
                    rep.island_checked += 1;
                    rep.island_bit_equal &= copy == g;
                }
                if let Some(v) = pw.glue_anti_invariance(&y) {
                    rep.max_glue_anti_invariance = rep.max_glue_anti_invariance.max(v);
                }
            }
            None => {
                rep.outside_checked += 1;
                rep.outside_bit_equal &= g == pw.torus.at(&y);
            }
        }
    }
    rep
}

/// Per colour class: disjointness of the supports, exact equality off
/// them, compatibility on them.
fn check_steps(pw: &Patchwork, layers: &[Layer], params: &DeformParams, samples: usize, seed: u64) -> Vec<StepReport> {
    let s = pw.torus.scale();
    let w = SymplecticForm::standard();
    let pts = random_points(s, samples, seed);
    let mut out = Vec::new();
    let mut start = 0;
    while start < layers.len() {
        let color = layers[start].color;
        let end = start + layers[start..].iter().take_while(|l| l.color == color).count();
        let class = &layers[start..end];
        let mut min_d = f64::INFINITY;
        for (i, a) in class.iter().enumerate() {
            for b in &class[..i] {
                min_d = min_d.min(net::torus_distance(&a.center, &b.center, s));
            }
        }
        let before = Layered { base: pw, layers, params: *params, upto: start };
        let after = Layered { upto: end, ..before.clone() };
        let mut rep = StepReport {
            color,
            centers: class.len(),
            min_center_distance: min_d,
            disjoint: min_d > 2.0 * params.c,
            outside_checked: 0,
            outside_bit_equal: true,
            inside_checked: 0,
            max_compat_residual: 0.0,
            max_change: 0.0,
        };
        // half the samples near the class's centres, half anywhere
        let near = class.iter().enumerate().map(|(k, l)| {
            let q = pts[k % pts.len().max(1)];
            std::array::from_fn(|i| (l.center[i] + (q[i] / s - 0.5) * 2.0 * params.c).rem_euclid(s))
        });
        for y in pts.iter().copied().chain(near) {
            let inside = class.iter().any(|l| {
                let u = linalg::mat_vec(&l.frame, &pw.torus.offset(&y, &l.center));
                linalg::dot(&u, &u).sqrt() < params.c
            });
            let (g0, g1) = (before.at(&y), after.at(&y));
            if inside {
                rep.inside_checked += 1;
                rep.max_change = rep.max_change.max(linalg::max_abs_diff(&g0, &g1));
                rep.max_compat_residual = rep.max_compat_residual.max(compat_residual_value(&g1, &w));
            } else {
                rep.outside_checked += 1;
                rep.outside_bit_equal &= g0 == g1;
            }
        }
        out.push(rep);
        start = end;
    }
    out
}

/// Runs the pipeline up to `stop`.
pub fn run_pipeline(cfg: &PipelineConfig, stop: Stage) -> Result<PipelineRun> {
    cfg.validate()?;
    let gate_eps = cfg.torus.euclidean_gap(8);
    check_gates(cfg, gate_eps)?;
    let net = build_net(&cfg.torus, &cfg.net, gate_eps)?;
    let net_report = verify_net(&net, &cfg.torus, &cfg.net, gate_eps);
    let mut run = PipelineRun {
        config: cfg.clone(),
        gate_eps,
        net,
        net_report,
        gminus: None,
        patchwork: None,
        surgery: None,
        layers: Vec::new(),
        params: cfg.deform,
        calibration: None,
        steps: Vec::new(),
        verdict: None,
        stage_reached: Stage::Net,
    };
    if stop == Stage::Net || !run.net_report.passed() {
        return Ok(run);
    }
    let gminus = build_gminus(&default_biaxial()?, &cfg.gminus)?;
    let patchwork = embed_islands(&cfg.torus, &run.net, &gminus)?;
    run.surgery = Some(check_surgery(&patchwork, cfg.surgery_samples, cfg.seed));
    run.layers = layers_from_net(&run.net, &patchwork.frames);
    run.stage_reached = Stage::Surgery;
    if stop == Stage::Surgery {
        run.gminus = Some(gminus);
        run.patchwork = Some(patchwork);
        return Ok(run);
    }
    let ctx = VerdictContext::new(&patchwork, &run.layers, &gminus, cfg.deform);
    let cal = verdict::calibrate_iteration(&ctx, cfg)?;
    let params = cfg.deform.with_d(cal.d);
    run.steps = check_steps(&patchwork, &run.layers, &params, cfg.step_samples, cfg.seed);
    run.stage_reached = Stage::Iterate;
    if stop != Stage::Iterate {
        let ctx = ctx.with_params(params);
        run.verdict = Some(verdict::final_verdict(&ctx, cfg));
        run.stage_reached = Stage::Verdict;
    }
    run.calibration = Some(cal);
    run.params = params;
    run.gminus = Some(gminus);
    run.patchwork = Some(patchwork);
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_core::compat_residual_value;

    #[test]
    fn torus_metric_is_compatible_and_periodic() {
        let t = TorusManifold { period: 1.0, m: 10.0, amplitude: 0.02 };
        let w = SymplecticForm::standard();
        for y in [[0.3, 1.7, 4.2, 9.9], [5.0, 5.0, 0.1, 2.0]] {
            let g = t.at(&y);
            assert!(compat_residual_value(&g, &w) < 1e-12);
            let y2 = [y[0] + 10.0, y[1], y[2] - 10.0, y[3]];
            assert!(linalg::max_abs_diff(&g, &t.at(&y2)) < 1e-13);
        }
        for b in anti_invariant_basis() {
            let j = canonical_j::<f64>(&linalg::eye(), &w).unwrap();
            let c = linalg::mul(&linalg::mul(&linalg::transpose(&j), &b), &j);
            assert!(linalg::max_abs(&linalg::add(&c, &b)) < 1e-15 && linalg::max_abs(&b) > 0.1);
        }
        assert!(t.euclidean_gap(4) < 0.1);
    }

    #[test]
    fn frozen_frames_are_adapted() {
        let t = TorusManifold { period: 1.0, m: 10.0, amplitude: 0.05 };
        let f = freeze_metric(&t, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let g = linalg::mul(&linalg::transpose(&f.inverse), &f.inverse);
        assert!(linalg::max_abs_diff(&g, &f.g_p) < 1e-14);
        // frame coordinates are Darboux: Fᵀ ω F = ω
        let w = SymplecticForm::standard();
        let pulled = linalg::mul(&linalg::mul(&linalg::transpose(&f.frame), &w.m), &f.frame);
        assert!(linalg::max_abs_diff(&pulled, &w.m) < 1e-14);
        let flat = freeze_metric(&TorusManifold::flat(1.0, 10.0), &[1.0; 4]).unwrap();
        assert_eq!(flat.inverse, linalg::eye::<f64>());
    }

    #[test]
    fn freezing_improves_with_scale() {
        let mut gaps = Vec::new();
        for m in [10.0, 20.0, 40.0] {
            let t = TorusManifold { period: 1.0, m, amplitude: 0.05 };
            let p = [0.3 * m, 0.1 * m, 0.7 * m, 0.2 * m];
            let fz = freeze_metric(&t, &p).unwrap();
            let pts: Vec<Point> = (0..200)
                .map(|k| {
                    let v = [(k as f64 * 0.37).sin(), (k as f64 * 0.91).cos(), (k as f64 * 1.3).sin(), (k as f64 * 0.11).cos()];
                    std::array::from_fn(|i| p[i] + 5.0 * v[i])
                })
                .collect();
            gaps.push(freeze_gap(&t, &fz, &pts));
        }
        for o in 0..3 {
            assert!(gaps[1][o] < gaps[0][o] && gaps[2][o] < gaps[1][o], "{gaps:?}");
        }
    }
}
