//! Compactly supported profiles `p(y) = y⁴ b(y)` built from two standard
//! bumps, and the derived functions `α = p'/y³` and `P(r) = ∫₀^r p/y³`.

use crate::error::{Error, Result};
use crate::quadrature::{brent, gauss_legendre, integrate};
use serde::{Deserialize, Serialize};

/// Parameters of the two-bump family
/// `b(y) = A·B(y/(w₁L)) − C·B((y − y₀L)/((1 − y₀)L))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileParams {
    pub amplitude: f64,
    pub w1: f64,
    pub y0: f64,
    /// Upper end of the support.
    pub support: f64,
    /// Added to the solved amplitude C; nonzero values deliberately break
    /// the zero-mean property.
    #[serde(default)]
    pub c_offset: f64,
}

impl Default for ProfileParams {
    fn default() -> Self {
        ProfileParams { amplitude: 1.0, w1: 0.7, y0: 0.25, support: 1.0, c_offset: 0.0 }
    }
}

/// Derivatives 0..=4 of the standard bump `B(t) = exp(−1/(t(1−t)))`.
pub fn bump_derivs(t: f64) -> [f64; 5] {
    if t <= 0.0 || t >= 1.0 {
        return [0.0; 5];
    }
    let u = t * (1.0 - t);
    let b = (-1.0 / u).exp();
    if b == 0.0 {
        return [0.0; 5];
    }
    let [g1, g2, g3, g4] = log_bump_derivs(t);
    [
        b,
        g1 * b,
        (g2 + g1 * g1) * b,
        (g3 + 3.0 * g1 * g2 + g1 * g1 * g1) * b,
        (g4 + 4.0 * g1 * g3 + 3.0 * g2 * g2 + 6.0 * g1 * g1 * g2 + g1 * g1 * g1 * g1) * b,
    ]
}

/// Derivatives 1..=4 of `ln B(t) = −1/(t(1−t))` on (0, 1).
pub fn log_bump_derivs(t: f64) -> [f64; 4] {
    let u = t * (1.0 - t);
    let up = 1.0 - 2.0 * t;
    let (u2, u3) = (u * u, u * u * u);
    let u4 = u2 * u2;
    let u5 = u4 * u;
    [
        up / u2,
        -2.0 / u2 - 2.0 * up * up / u3,
        12.0 * up / u3 + 6.0 * up * up * up / u4,
        -24.0 / u3 - 72.0 * up * up / u4 - 24.0 * up.powi(4) / u5,
    ]
}

/// Number of Gauss points per table interval.
const GL_POINTS: usize = 10;

/// Uniform piece of the value table of `P`.
#[derive(Clone, Debug)]
struct Segment {
    lo: f64,
    h: f64,
    /// (P, P', P'') at the nodes.
    nodes: Vec<[f64; 3]>,
}

impl Segment {
    fn eval(&self, r: f64) -> f64 {
        let n = self.nodes.len() - 1;
        let k = (((r - self.lo) / self.h).floor().max(0.0) as usize).min(n - 1);
        let s = (r - self.lo) / self.h - k as f64;
        let [p0, d0, e0] = self.nodes[k];
        let [p1, d1, e1] = self.nodes[k + 1];
        let h = self.h;
        // quintic Hermite basis on [0, 1]
        let s2 = s * s;
        let s3 = s2 * s;
        let s4 = s3 * s;
        let s5 = s4 * s;
        let h00 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5;
        let h01 = 10.0 * s3 - 15.0 * s4 + 6.0 * s5;
        let h10 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
        let h11 = -4.0 * s3 + 7.0 * s4 - 3.0 * s5;
        let h20 = 0.5 * (s2 - 3.0 * s3 + 3.0 * s4 - s5);
        let h21 = 0.5 * (s3 - 2.0 * s4 + s5);
        p0 * h00 + p1 * h01 + h * (d0 * h10 + d1 * h11) + h * h * (e0 * h20 + e1 * h21)
    }
}

/// A validated profile with its tabulated integral.
#[derive(Clone, Debug)]
pub struct Profile {
    pub params: ProfileParams,
    /// Solved (plus offset) second amplitude.
    pub c: f64,
    segments: Vec<Segment>,
    /// Critical points of α (ascending).
    pub crit: Vec<f64>,
}

impl Profile {
    /// Build the profile, solving C for the zero-mean property.
    pub fn new(params: ProfileParams) -> Result<Self> {
        let ProfileParams { amplitude, w1, y0, support, c_offset } = params;
        if !(amplitude > 0.0 && support > 0.0 && w1 > 0.0 && w1 <= 1.0 && (0.0..1.0).contains(&y0)) {
            return Err(Error::Profile(format!("parameters out of range: {params:?}")));
        }
        if y0 >= w1 {
            return Err(Error::Profile("the two bumps must overlap (y0 < w1)".into()));
        }
        let mut prof = Profile { params, c: 0.0, segments: Vec::new(), crit: Vec::new() };
        let l = support;
        let mean = |cc: f64| {
            let mut p = prof.clone();
            p.c = cc;
            let f = move |y: f64| y * p.b(y)[0];
            integrate(&f, 0.0, y0 * l, 1e-16).0
                + integrate(&f, y0 * l, w1 * l, 1e-16).0
                + integrate(&f, w1 * l, l, 1e-16).0
        };
        let c_star = brent(&mean, 0.0, 100.0 * amplitude, 1e-15)
            .ok_or_else(|| Error::Profile("no amplitude satisfies the zero-mean condition".into()))?;
        prof.c = c_star + c_offset;
        prof.build_table();
        prof.crit = prof.find_critical_points();
        Ok(prof)
    }

    pub fn support(&self) -> f64 {
        self.params.support
    }

    /// `b` and its first four derivatives.
    pub fn b(&self, y: f64) -> [f64; 5] {
        let ProfileParams { amplitude, w1, y0, support: l, .. } = self.params;
        let s1 = w1 * l;
        let s2 = (1.0 - y0) * l;
        let b1 = bump_derivs(y / s1);
        let b2 = bump_derivs((y - y0 * l) / s2);
        let mut out = [0.0; 5];
        let (mut f1, mut f2) = (1.0, 1.0);
        for k in 0..5 {
            out[k] = amplitude * b1[k] / f1 - self.c * b2[k] / f2;
            f1 *= s1;
            f2 *= s2;
        }
        out
    }

    /// `p(y) = y⁴ b(y)`.
    pub fn p(&self, y: f64) -> f64 {
        y.powi(4) * self.b(y)[0]
    }

    /// `p'(y)`.
    pub fn dp(&self, y: f64) -> f64 {
        let b = self.b(y);
        4.0 * y.powi(3) * b[0] + y.powi(4) * b[1]
    }

    /// `α = p'/y³` and its first three derivatives.
    pub fn alpha(&self, y: f64) -> [f64; 4] {
        let b = self.b(y);
        [4.0 * b[0] + y * b[1], 5.0 * b[1] + y * b[2], 6.0 * b[2] + y * b[3], 7.0 * b[3] + y * b[4]]
    }

    /// `P' = y b`, `P'' = b + y b'`, `P''' = 2b' + y b''`.
    pub fn p_derivs(&self, y: f64) -> [f64; 3] {
        let b = self.b(y);
        [y * b[0], b[0] + y * b[1], 2.0 * b[1] + y * b[2]]
    }

    fn build_table(&mut self) {
        let l = self.params.support;
        let (gx, gw) = gauss_legendre(GL_POINTS);
        // fine tables near both ends of the support, a coarser one between
        let cuts = [(0.0, 0.06 * l, 4096), (0.06 * l, 0.94 * l, 2048), (0.94 * l, l, 4096)];
        let mut nodes: Vec<f64> = Vec::new();
        let mut seg_start = Vec::new();
        for &(lo, hi, n) in &cuts {
            seg_start.push(nodes.len());
            let h = (hi - lo) / n as f64;
            for k in 0..n {
                nodes.push(lo + k as f64 * h);
            }
        }
        nodes.push(l);
        let f = |y: f64| y * self.b(y)[0];
        let piece: Vec<f64> = nodes
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                let (m, hh) = (0.5 * (a + b), 0.5 * (b - a));
                gx.iter().zip(&gw).map(|(x, wt)| wt * f(m + hh * x)).sum::<f64>() * hh
            })
            .collect();
        let n = nodes.len();
        let mut vals = vec![0.0; n];
        // left cumulative sums on the lower half, right sums on the upper half
        let mid = nodes.partition_point(|&y| y <= 0.5 * l);
        for k in 1..mid {
            vals[k] = vals[k - 1] + piece[k - 1];
        }
        vals[n - 1] = 0.0;
        for k in (mid..n - 1).rev() {
            vals[k] = vals[k + 1] - piece[k];
        }
        let mut segments = Vec::new();
        for (s, &(lo, hi, cnt)) in cuts.iter().enumerate() {
            let start = seg_start[s];
            let h = (hi - lo) / cnt as f64;
            let pts = (0..=cnt)
                .map(|k| {
                    let y = nodes[start + k];
                    let d = self.p_derivs(y);
                    [vals[start + k], d[0], d[1]]
                })
                .collect();
            segments.push(Segment { lo, h, nodes: pts });
        }
        self.segments = segments;
    }

    /// `P(r) = ∫₀^r p(y)/y³ dy`, zero outside the open support.
    pub fn big_p(&self, r: f64) -> f64 {
        let l = self.params.support;
        if r <= 0.0 || r >= l {
            return 0.0;
        }
        let seg = if r < self.segments[1].lo {
            &self.segments[0]
        } else if r < self.segments[2].lo {
            &self.segments[1]
        } else {
            &self.segments[2]
        };
        seg.eval(r)
    }

    /// Value and first three derivatives of `P` (table value, exact derivatives).
    pub fn big_p_stack(&self, r: f64) -> [f64; 4] {
        let d = self.p_derivs(r);
        [self.big_p(r), d[0], d[1], d[2]]
    }

    /// `P(r)` by direct adaptive quadrature (the table's independent oracle).
    pub fn big_p_direct(&self, r: f64) -> f64 {
        let l = self.params.support;
        if r <= 0.0 || r >= l {
            return 0.0;
        }
        let f = |y: f64| y * self.b(y)[0];
        if r <= 0.5 * l {
            integrate(&f, 0.0, r, 1e-18).0
        } else {
            -integrate(&f, r, l, 1e-18).0
        }
    }

    /// `ln P(r)`, accurate even where `P` underflows. `−∞` when `P(r) = 0`
    /// and NaN if `P(r) < 0`.
    pub fn ln_big_p(&self, r: f64) -> f64 {
        let ProfileParams { amplitude, w1, y0, support: l, .. } = self.params;
        if r <= 0.0 || r >= l {
            return f64::NEG_INFINITY;
        }
        let s1 = w1 * l;
        let s2 = (1.0 - y0) * l;
        if r < (0.15 * l).min(y0 * l) {
            // only the first bump is active: P = A ∫₀^r y B(y/s1) dy
            let phi = |y: f64| y.ln() - 1.0 / ((y / s1) * (1.0 - y / s1));
            let pr = phi(r);
            let slope = 1.0 / r + log_bump_derivs(r / s1)[0] / s1;
            let f = |y: f64| if y <= 0.0 { 0.0 } else { (phi(y) - pr).exp() };
            let (v, _) = integrate(&f, 0.0, r, 1e-15 / slope);
            return amplitude.ln() + pr + v.ln();
        }
        if r > (0.85 * l).max(w1 * l) && self.c > 0.0 {
            // only the second bump: P = C ∫_r^L y B((y − y0 L)/s2) dy
            let t = |y: f64| (y - y0 * l) / s2;
            let psi = |y: f64| y.ln() - 1.0 / (t(y) * (1.0 - t(y)));
            let pr = psi(r);
            let slope = (1.0 / r + log_bump_derivs(t(r))[0] / s2).abs();
            let f = |y: f64| if y >= l { 0.0 } else { (psi(y) - pr).exp() };
            let (v, _) = integrate(&f, r, l, 1e-15 / slope);
            return self.c.ln() + pr + v.ln();
        }
        self.big_p(r).ln()
    }

    /// `ln|α'(y)|`, accurate where α' underflows near the ends.
    pub fn ln_abs_dalpha(&self, y: f64) -> f64 {
        let ProfileParams { amplitude, w1, y0, support: l, .. } = self.params;
        if y <= 0.0 || y >= l {
            return f64::NEG_INFINITY;
        }
        let s1 = w1 * l;
        let s2 = (1.0 - y0) * l;
        let one_bump = |amp: f64, t: f64, s: f64| {
            // α' = 5b' + y b'' with b = amp·B(t), written relative to B(t)
            let [g1, g2, ..] = log_bump_derivs(t);
            let rel = 5.0 * g1 / s + y * (g2 + g1 * g1) / (s * s);
            amp.abs().ln() - 1.0 / (t * (1.0 - t)) + rel.abs().ln()
        };
        if y < (0.15 * l).min(y0 * l) {
            return one_bump(amplitude, y / s1, s1);
        }
        if y > (0.85 * l).max(w1 * l) {
            return one_bump(self.c, (y - y0 * l) / s2, s2);
        }
        self.alpha(y)[1].abs().ln()
    }

    fn find_critical_points(&self) -> Vec<f64> {
        let l = self.params.support;
        let n = 20000;
        let da = |y: f64| self.alpha(y)[1];
        let mut out = Vec::new();
        let mut prev: Option<(f64, f64)> = None;
        for k in 1..n {
            let y = l * k as f64 / n as f64;
            let v = da(y);
            if v == 0.0 {
                continue;
            }
            if let Some((py, pv)) = prev {
                if pv.signum() != v.signum() {
                    if let Some(root) = brent(&da, py, y, 1e-15) {
                        out.push(root);
                    }
                }
            }
            prev = Some((y, v));
        }
        out
    }

    /// Check properties a)–d), the α bound and the critical-point count.
    pub fn verify(&self) -> ProfileReport {
        let l = self.params.support;
        let ys: Vec<f64> = [-0.5, -1e-9, 0.0, l, l + 1e-9, 1.5 * l].to_vec();
        let support_ok = ys.iter().all(|&y| self.b(y).iter().all(|&v| v == 0.0))
            && self.alpha(l + 0.01).iter().all(|&v| v == 0.0);
        let zero_mean = self.big_p_direct(0.5 * l) + {
            let f = |y: f64| y * self.b(y)[0];
            integrate(&f, 0.5 * l, l, 1e-18).0
        };
        let mut min_ln_p = f64::INFINITY;
        let mut max_p: f64 = 0.0;
        let mut positive = true;
        let mut below_one = true;
        let n = (l / 1e-3).round() as usize;
        for k in 1..n {
            let r = l * k as f64 / n as f64;
            let lp = self.ln_big_p(r);
            if !(lp.is_finite()) {
                positive = false;
            }
            min_ln_p = min_ln_p.min(lp);
            let pv = self.big_p(r);
            max_p = max_p.max(pv);
            if pv >= 1.0 {
                below_one = false;
            }
        }
        let max_alpha = (1..20000)
            .map(|k| self.alpha(l * k as f64 / 20000.0)[0].abs())
            .fold(0.0, f64::max);
        ProfileReport {
            support_ok,
            zero_mean,
            zero_mean_ok: zero_mean.abs() < 1e-10,
            positive_ok: positive,
            below_one_ok: below_one,
            min_ln_p,
            max_p,
            max_alpha,
            alpha_bound_ok: max_alpha <= 0.2,
            critical_points: self.crit.clone(),
            three_critical_ok: self.crit.len() == 3,
        }
    }
}

/// Outcome of [`Profile::verify`].
#[derive(Clone, Debug, Serialize)]
pub struct ProfileReport {
    pub support_ok: bool,
    pub zero_mean: f64,
    pub zero_mean_ok: bool,
    pub positive_ok: bool,
    pub below_one_ok: bool,
    pub min_ln_p: f64,
    pub max_p: f64,
    pub max_alpha: f64,
    pub alpha_bound_ok: bool,
    pub critical_points: Vec<f64>,
    pub three_critical_ok: bool,
}

impl ProfileReport {
    pub fn all_ok(&self) -> bool {
        self.support_ok
            && self.zero_mean_ok
            && self.positive_ok
            && self.below_one_ok
            && self.alpha_bound_ok
            && self.three_critical_ok
    }

    /// Names of the failed properties.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if !self.support_ok {
            v.push("a) support");
        }
        if !self.alpha_bound_ok {
            v.push("b) alpha bound");
        }
        if !self.zero_mean_ok {
            v.push("c) zero mean");
        }
        if !(self.positive_ok && self.below_one_ok) {
            v.push("d) partial integral in (0,1)");
        }
        if !self.three_critical_ok {
            v.push("three critical points");
        }
        v
    }
}
