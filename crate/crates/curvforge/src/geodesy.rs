//! Geodesic flow, exponential map, shooting logarithm, distance from a base
//! point and its gradient.

use crate::error::{Error, Result};
use crate::linalg::{self, M4, V4};
use crate::scalar::Scalar;
use crate::tensor_core::{christoffel, ChartDomain, MetricField, Point, SmoothMetric};

/// Phase-space state: position and velocity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeodesicState {
    pub x: Point,
    pub y: V4<f64>,
}

/// Outcome of shooting for `exp_p(v) = x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShootingResult {
    pub v: V4<f64>,
    /// Number of flows evaluated against the target, the initial guess included.
    pub iterations: usize,
    /// Euclidean position error of `exp_p(v)`.
    pub residual: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct GeodesyOptions {
    /// Largest RK4 step in Euclidean length.
    pub max_step: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Puncture radius around the base point.
    pub r_min: f64,
}

impl Default for GeodesyOptions {
    fn default() -> Self {
        GeodesyOptions { max_step: 0.02, tol: 1e-10, max_iter: 50, r_min: 1e-3 }
    }
}

fn norm(v: &V4<f64>) -> f64 {
    linalg::dot(v, v).sqrt()
}

fn axpy(x: &V4<f64>, a: f64, y: &V4<f64>) -> V4<f64> {
    std::array::from_fn(|i| x[i] + a * y[i])
}

fn accel(g: &dyn MetricField, x: &Point, y: &V4<f64>) -> Result<V4<f64>> {
    let gam = christoffel(g, x)?;
    Ok(std::array::from_fn(|k| {
        let mut a = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                a -= gam[k][i][j] * y[i] * y[j];
            }
        }
        a
    }))
}

/// RK4 integration of `ẋ = y`, `ẏ^k = −Γ^k_{ij} y^i y^j` for time `t` in
/// `steps` equal steps.
pub fn geodesic_flow(g: &dyn MetricField, p: &Point, v: &V4<f64>, t: f64, steps: usize) -> Result<GeodesicState> {
    let dom = g.domain();
    let steps = steps.max(1);
    let h = t / steps as f64;
    let (mut x, mut y) = (*p, *v);
    for n in 0..steps {
        let k1x = y;
        let k1y = accel(g, &x, &y)?;
        let x2 = axpy(&x, 0.5 * h, &k1x);
        let y2 = axpy(&y, 0.5 * h, &k1y);
        let k2y = accel(g, &x2, &y2)?;
        let x3 = axpy(&x, 0.5 * h, &y2);
        let y3 = axpy(&y, 0.5 * h, &k2y);
        let k3y = accel(g, &x3, &y3)?;
        let x4 = axpy(&x, h, &y3);
        let y4 = axpy(&y, h, &k3y);
        let k4y = accel(g, &x4, &y4)?;
        x = std::array::from_fn(|i| x[i] + h / 6.0 * (k1x[i] + 2.0 * y2[i] + 2.0 * y3[i] + y4[i]));
        y = std::array::from_fn(|i| y[i] + h / 6.0 * (k1y[i] + 2.0 * k2y[i] + 2.0 * k3y[i] + k4y[i]));
        if !dom.contains(&x) {
            return Err(Error::OutOfDomain { exit_time: h * (n + 1) as f64, point: x });
        }
    }
    Ok(GeodesicState { x, y })
}

/// Step count keeping each step at most `max_step` long for a velocity of
/// Euclidean length `len` over unit time.
pub fn steps_for(len: f64, max_step: f64) -> usize {
    ((len / max_step).ceil() as usize).max(1)
}

pub fn exp_map(g: &dyn MetricField, p: &Point, v: &V4<f64>) -> Result<Point> {
    exp_map_with(g, p, v, &GeodesyOptions::default())
}

pub fn exp_map_with(g: &dyn MetricField, p: &Point, v: &V4<f64>, opts: &GeodesyOptions) -> Result<Point> {
    Ok(geodesic_flow(g, p, v, 1.0, steps_for(norm(v), opts.max_step))?.x)
}

/// Shooting state reusable across nearby targets.
#[derive(Clone, Copy, Debug)]
pub struct WarmStart {
    pub v: V4<f64>,
    /// Chord Jacobian of `v ↦ exp_p(v)` near `v`.
    pub jac: Option<M4<f64>>,
    /// Target the state was solved for.
    pub target: Point,
}

/// A converged shot: solution, reusable state and the arrival state.
#[derive(Clone, Copy, Debug)]
pub struct Shot {
    pub result: ShootingResult,
    pub warm: WarmStart,
    pub end: GeodesicState,
}

/// Default step count for shooting from `p` to `x`.
pub fn shooting_steps(p: &Point, x: &Point, opts: &GeodesyOptions) -> usize {
    let chord: V4<f64> = std::array::from_fn(|i| x[i] - p[i]);
    steps_for(1.1 * norm(&chord), opts.max_step)
}

pub fn log_map(g: &dyn MetricField, p: &Point, x: &Point) -> Result<ShootingResult> {
    log_map_with(g, p, x, None, &GeodesyOptions::default()).map(|(r, _)| r)
}

/// Newton shooting on `v ↦ exp_p(v) − x`, started from `warm` or `x − p`.
/// Returns the solution and state for warm-starting the next solve.
pub fn log_map_with(
    g: &dyn MetricField,
    p: &Point,
    x: &Point,
    warm: Option<WarmStart>,
    opts: &GeodesyOptions,
) -> Result<(ShootingResult, WarmStart)> {
    let shot = shoot(g, p, x, warm, opts, shooting_steps(p, x, opts))?;
    Ok((shot.result, shot.warm))
}

/// Shooting with a fixed RK4 step count, so the discrete map being inverted
/// is smooth in `v` and in the target. A warm start with a Jacobian is
/// advanced to the new target by one linear predictor step.
pub fn shoot(
    g: &dyn MetricField,
    p: &Point,
    x: &Point,
    warm: Option<WarmStart>,
    opts: &GeodesyOptions,
    steps: usize,
) -> Result<Shot> {
    let chord: V4<f64> = std::array::from_fn(|i| x[i] - p[i]);
    let mut jac = warm.and_then(|w| w.jac);
    let mut v = match warm {
        None => chord,
        Some(w) => {
            let dx: V4<f64> = std::array::from_fn(|i| x[i] - w.target[i]);
            match w.jac.and_then(|j| linalg::solve(&j, &dx)) {
                Some(dv) => axpy(&w.v, 1.0, &dv),
                None => w.v,
            }
        }
    };
    let flow = |v: &V4<f64>| geodesic_flow(g, p, v, 1.0, steps);
    let mut end = flow(&v)?;
    let mut e: V4<f64> = std::array::from_fn(|i| end.x[i] - x[i]);
    let mut res = norm(&e);
    let mut iterations = 1;
    let mut fresh = false;
    while res > opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::ShootingFailure { iterations, residual: res });
        }
        let j = match jac {
            Some(j) => j,
            None => {
                fresh = true;
                let hj = 1e-7 * norm(&v).max(1.0);
                let mut j = [[0.0; 4]; 4];
                for c in 0..4 {
                    let mut vp = v;
                    vp[c] += hj;
                    let ep = flow(&vp)?.x;
                    for r in 0..4 {
                        j[r][c] = (ep[r] - end.x[r]) / hj;
                    }
                }
                jac = Some(j);
                j
            }
        };
        let neg_e = e.map(|t| -t);
        let dv = linalg::solve(&j, &neg_e).ok_or(Error::ShootingFailure { iterations, residual: res })?;
        let mut lam = 1.0;
        let mut accepted = None;
        while lam > 1e-3 {
            let vn = axpy(&v, lam, &dv);
            let en = flow(&vn)?;
            iterations += 1;
            let errn: V4<f64> = std::array::from_fn(|i| en.x[i] - x[i]);
            let rn = norm(&errn);
            if rn < res {
                accepted = Some((vn, en, errn, rn));
                break;
            }
            lam *= 0.5;
        }
        match accepted {
            Some((vn, en, errn, rn)) => {
                // refresh the chord Jacobian when convergence stalls
                if rn > 0.25 * res {
                    jac = None;
                }
                v = vn;
                end = en;
                e = errn;
                res = rn;
                fresh = false;
            }
            None if !fresh => jac = None,
            None => return Err(Error::ShootingFailure { iterations, residual: res }),
        }
    }
    Ok(Shot {
        result: ShootingResult { v, iterations, residual: res },
        warm: WarmStart { v, jac, target: *x },
        end,
    })
}

/// `r_g(x) = |exp_p⁻¹(x)|_{g(p)}`.
pub fn dist(g: &dyn MetricField, p: &Point, x: &Point) -> Result<f64> {
    if p == x {
        return Ok(0.0);
    }
    let s = log_map(g, p, x)?;
    Ok(linalg::form(&g.eval(p), &s.v, &s.v).sqrt())
}

/// Distance, arrival data and shooting state at one point.
#[derive(Clone, Copy, Debug)]
pub struct RadialData {
    pub dist: f64,
    /// `dr_g(x)`: the g-unit covector dual to the arrival direction.
    pub dr: V4<f64>,
    /// Unit arrival velocity `γ'(1)/|γ'(1)|`.
    pub arrival: V4<f64>,
    pub warm: WarmStart,
}

pub fn radial_data(
    g: &dyn MetricField,
    p: &Point,
    x: &Point,
    warm: Option<WarmStart>,
    opts: &GeodesyOptions,
) -> Result<RadialData> {
    radial_data_steps(g, p, x, warm, opts, shooting_steps(p, x, opts))
}

pub fn radial_data_steps(
    g: &dyn MetricField,
    p: &Point,
    x: &Point,
    warm: Option<WarmStart>,
    opts: &GeodesyOptions,
    steps: usize,
) -> Result<RadialData> {
    let chord: V4<f64> = std::array::from_fn(|i| x[i] - p[i]);
    if norm(&chord) < opts.r_min {
        return Err(Error::SingularPoint(opts.r_min));
    }
    let shot = shoot(g, p, x, warm, opts, steps)?;
    let gx = g.eval(x);
    let y = shot.end.y;
    let speed = linalg::form(&gx, &y, &y).sqrt();
    let arrival = y.map(|t| t / speed);
    let dr = linalg::mat_vec(&gx, &arrival);
    let dist = linalg::form(&g.eval(p), &shot.result.v, &shot.result.v).sqrt();
    Ok(RadialData { dist, dr, arrival, warm: shot.warm })
}

pub fn dist_gradient(g: &dyn MetricField, p: &Point, x: &Point) -> Result<V4<f64>> {
    Ok(radial_data(g, p, x, None, &GeodesyOptions::default())?.dr)
}

/// Two-sided comparison of `d_g` with Euclidean distance on random pairs,
/// for a metric with `‖g − δ‖_{C⁰} ≤ ε` on the sampled ball.
#[derive(Clone, Debug, serde::Serialize)]
pub struct DistanceBoundReport {
    pub eps: f64,
    /// `sup |eig(g) − 1|` measured at the pair endpoints.
    pub measured_c0: f64,
    pub pairs: usize,
    /// `min (d_g/d₀ − √(1−ε))` and `min (√(1+ε) − d_g/d₀)`.
    pub lower_margin: f64,
    pub upper_margin: f64,
    pub passed: bool,
}

pub fn distance_bounds(g: &dyn MetricField, eps: f64, pairs: usize, radius: f64, seed: u64) -> Result<DistanceBoundReport> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let pick = |rng: &mut rand_chacha::ChaCha8Rng| -> Point {
        loop {
            let x: Point = std::array::from_fn(|_| rng.random_range(-radius..radius));
            if norm(&x) < radius {
                return x;
            }
        }
    };
    let (lo, hi) = ((1.0 - eps).sqrt(), (1.0 + eps).sqrt());
    let mut rep =
        DistanceBoundReport { eps, measured_c0: 0.0, pairs, lower_margin: f64::INFINITY, upper_margin: f64::INFINITY, passed: true };
    for _ in 0..pairs {
        let (p, q) = (pick(&mut rng), pick(&mut rng));
        for x in [&p, &q] {
            let (vals, _) = linalg::sym_eigen(&g.eval(x));
            rep.measured_c0 = vals.iter().fold(rep.measured_c0, |m, v| m.max((v - 1.0).abs()));
        }
        let d0 = norm(&std::array::from_fn(|i| q[i] - p[i]));
        let ratio = dist(g, &p, &q)? / d0;
        rep.lower_margin = rep.lower_margin.min(ratio - lo);
        rep.upper_margin = rep.upper_margin.min(hi - ratio);
    }
    rep.passed = rep.lower_margin >= 0.0 && rep.upper_margin >= 0.0 && rep.measured_c0 <= eps;
    Ok(rep)
}

/// `sup |exp_p(v) − (p + v)|` over random `p` and `|v| ≤ 1` for each `λ`,
/// with the log-log slopes between consecutive `λ`.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ExpScalingReport {
    pub lambdas: Vec<f64>,
    pub sup_dev: Vec<f64>,
    pub slopes: Vec<f64>,
    pub passed: bool,
}

pub fn exp_deviation_scaling(
    metric: impl Fn(f64) -> Box<dyn MetricField>,
    lambdas: &[f64],
    samples: usize,
    seed: u64,
) -> Result<ExpScalingReport> {
    use rand::{Rng, SeedableRng};
    let mut sup_dev = Vec::new();
    for &lam in lambdas {
        let g = metric(lam);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut sup: f64 = 0.0;
        for _ in 0..samples {
            let p: Point = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let mut v: V4<f64> = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let n = norm(&v);
            if n > 1.0 {
                v = v.map(|t| t / n);
            }
            let x = exp_map(&*g, &p, &v)?;
            sup = sup.max(norm(&std::array::from_fn(|i| x[i] - p[i] - v[i])));
        }
        sup_dev.push(sup);
    }
    let slopes: Vec<f64> = (1..lambdas.len())
        .map(|k| (sup_dev[k - 1] / sup_dev[k]).ln() / (lambdas[k - 1] / lambdas[k]).ln())
        .collect();
    let passed = slopes.iter().all(|s| (s - 1.0).abs() < 0.1);
    Ok(ExpScalingReport { lambdas: lambdas.to_vec(), sup_dev, slopes, passed })
}

/// Smooth near-Euclidean test metric `δ + λ S(x)` with `|S| ≤ 1` in
/// operator norm and bounded first and second derivatives.
#[derive(Clone, Copy, Debug)]
pub struct WavyMetric {
    pub lambda: f64,
    pub radius: f64,
}

impl WavyMetric {
    pub fn new(lambda: f64) -> Self {
        WavyMetric { lambda, radius: 50.0 }
    }

    fn wave(i: usize, j: usize, l: usize) -> (f64, f64) {
        let (i, j) = (i.min(j) as f64, i.max(j) as f64);
        let k = 0.9 * (1.3 * (i + 1.0) * (l as f64 + 1.0) + 0.7 * j).cos();
        (k, 0.5 + i + 2.0 * j)
    }
}

impl SmoothMetric for WavyMetric {
    fn at<T: Scalar>(&self, x: &[T; 4]) -> M4<T> {
        let mut g = linalg::eye::<T>();
        for i in 0..4 {
            for j in i..4 {
                let mut arg = T::cst(Self::wave(i, j, 0).1);
                for (l, xl) in x.iter().enumerate() {
                    arg += T::cst(Self::wave(i, j, l).0 * 0.5) * *xl;
                }
                let s = T::cst(0.25 * self.lambda) * arg.sin();
                g[i][j] += s;
                if i != j {
                    g[j][i] += s;
                }
            }
        }
        g
    }
    fn chart(&self) -> ChartDomain {
        ChartDomain::ball([0.0; 4], self.radius)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::island::{default_biaxial, island_metric, IslandMetric};
    use crate::tensor_core::ConstMetric;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_v(rng: &mut ChaCha8Rng, r: f64) -> V4<f64> {
        std::array::from_fn(|_| rng.random_range(-r..r))
    }

    #[test]
    fn distance_bounds_hold_on_wavy_metrics() {
        for eps in [1e-2, 1e-3] {
            let rep = distance_bounds(&WavyMetric::new(eps), eps, 40, 2.0, 3).unwrap();
            assert!(rep.passed, "{rep:?}");
        }
    }

    #[test]
    fn exp_deviation_is_linear_in_lambda() {
        let rep = exp_deviation_scaling(|l| Box::new(WavyMetric::new(l)), &[1e-2, 1e-3, 1e-4], 20, 5).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn flat_flow_is_straight() {
        let g = ConstMetric::euclidean();
        let (p, v) = ([0.3, -1.0, 2.0, 0.5], [1.0, 2.0, -0.5, 0.25]);
        let s = geodesic_flow(&g, &p, &v, 1.0, 100).unwrap();
        for i in 0..4 {
            assert!((s.x[i] - p[i] - v[i]).abs() < 1e-13);
            assert_eq!(s.y[i], v[i]);
        }
        let r = log_map(&g, &p, &[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(r.iterations, 1);
        assert!((dist(&g, &p, &[0.3, -1.0, 2.0, 1.5]).unwrap() - 1.0).abs() < 1e-13);
        assert_eq!(dist(&g, &p, &p).unwrap(), 0.0);
        let dr = dist_gradient(&g, &[0.0; 4], &[3.0, 0.0, 4.0, 0.0]).unwrap();
        assert!((dr[0] - 0.6).abs() < 1e-13 && (dr[2] - 0.8).abs() < 1e-13);
    }

    #[test]
    fn domain_exit_is_reported() {
        let g = WavyMetric { lambda: 0.01, radius: 1.0 };
        match geodesic_flow(&g, &[0.0; 4], &[2.0, 0.0, 0.0, 0.0], 1.0, 100) {
            Err(Error::OutOfDomain { exit_time, .. }) => assert!(exit_time > 0.45 && exit_time < 0.55),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn island_flow_conserves_speed_and_converges() {
        let m = island_metric(default_biaxial().unwrap());
        let p = IslandMetric::point(0.3, 0.2, 0.4, 1.0);
        let v = [0.3, -0.2, 0.25, 0.1];
        let a = geodesic_flow(&m, &p, &v, 1.0, 100).unwrap();
        let b = geodesic_flow(&m, &p, &v, 1.0, 200).unwrap();
        let e0 = linalg::form(&m.eval(&p), &v, &v);
        let e1 = linalg::form(&m.eval(&a.x), &a.y, &a.y);
        assert!((e1 - e0).abs() < 1e-9);
        let diff = (0..4).map(|i| (a.x[i] - b.x[i]).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-10, "{diff}");
        assert_eq!(exp_map(&m, &p, &[0.0; 4]).unwrap(), p);
    }

    #[test]
    fn round_trip_and_symmetry() {
        let g = WavyMetric::new(1e-2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..30 {
            let p = rand_v(&mut rng, 1.0);
            let mut v = rand_v(&mut rng, 5.0);
            let n = norm(&v);
            if n > 5.0 {
                v = v.map(|t| t * 5.0 / n);
            }
            let x = exp_map(&g, &p, &v).unwrap();
            let s = log_map(&g, &p, &x).unwrap();
            let err = (0..4).map(|i| (s.v[i] - v[i]).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9, "{err}");
            let (d1, d2) = (dist(&g, &p, &x).unwrap(), dist(&g, &x, &p).unwrap());
            assert!((d1 - d2).abs() < 1e-8, "{d1} {d2}");
        }
    }

    #[test]
    fn gradient_is_unit_and_matches_differences() {
        let g = WavyMetric::new(1e-2);
        let p = [0.1, 0.2, -0.3, 0.0];
        let x = [1.0, -0.5, 0.4, 0.8];
        let rd = radial_data(&g, &p, &x, None, &GeodesyOptions::default()).unwrap();
        let gi = linalg::inv(&g.eval(&x)).unwrap();
        assert!((linalg::form(&gi, &rd.dr, &rd.dr) - 1.0).abs() < 1e-9);
        let h = 1e-4;
        for l in 0..4 {
            let (mut xp, mut xm) = (x, x);
            xp[l] += h;
            xm[l] -= h;
            let fd = (dist(&g, &p, &xp).unwrap() - dist(&g, &p, &xm).unwrap()) / (2.0 * h);
            assert!((fd - rd.dr[l]).abs() < 1e-6, "{l}: {fd} vs {}", rd.dr[l]);
        }
        assert!(matches!(
            radial_data(&g, &p, &p, None, &GeodesyOptions::default()),
            Err(Error::SingularPoint(_))
        ));
    }
}
