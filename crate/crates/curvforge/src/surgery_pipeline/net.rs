//! Separated covering net of the rescaled torus and its colouring.

use super::TorusManifold;
use crate::error::{Error, Result};
use crate::tensor_core::Point;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    /// Per-axis resolution of the candidate and covering-check grid.
    pub cover_grid: usize,
    /// Separation and covering radius, in `m²g` distance.
    pub radius: f64,
    /// Same-colour centres must be farther apart than this.
    pub color_distance: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { cover_grid: 50, radius: 5.0, color_distance: 20.0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CoveringNet {
    pub centers: Vec<Point>,
    pub colors: Vec<usize>,
    /// Number of colour classes.
    pub kappa: usize,
    /// Euclidean radius used for greedy selection, `radius/√(1−ε₀)`.
    pub euclid_radius: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct NetReport {
    pub centers: usize,
    pub kappa: usize,
    pub min_separation: f64,
    pub separation_ok: bool,
    /// Largest distance from a check-grid point to the nearest centre.
    pub covering_radius_grid: f64,
    /// Half the diagonal of a grid cell.
    pub grid_slack: f64,
    pub covering_ok: bool,
    pub min_same_color_distance: f64,
    pub coloring_ok: bool,
}

impl NetReport {
    pub fn passed(&self) -> bool {
        self.separation_ok && self.covering_ok && self.coloring_ok
    }

    pub fn failure_summary(&self) -> String {
        let mut v = Vec::new();
        if !self.separation_ok {
            v.push(format!("separation {}", self.min_separation));
        }
        if !self.covering_ok {
            v.push(format!("covering radius {}", self.covering_radius_grid));
        }
        if !self.coloring_ok {
            v.push(format!("same-colour distance {}", self.min_same_color_distance));
        }
        v.join(", ")
    }
}

/// Minimal-image Euclidean distance on the cube torus of side `s`.
pub fn torus_distance(a: &Point, b: &Point, s: f64) -> f64 {
    (0..4)
        .map(|i| {
            let d = (a[i] - b[i]).rem_euclid(s);
            let d = d.min(s - d);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn grid_point(idx: usize, n: usize, s: f64) -> Point {
    std::array::from_fn(|i| s * ((idx / n.pow(i as u32)) % n) as f64 / n as f64)
}

/// Farthest-point selection on the grid, then greedy colouring.
///
/// Metric distances of `m²g` are within a factor `√(1±ε₀)` of Euclidean
/// ones, so working with the inflated Euclidean radius keeps the metric
/// separation and covering claims.
pub fn build_net(torus: &TorusManifold, cfg: &NetConfig, eps0: f64) -> Result<CoveringNet> {
    if !(0.0..1.0).contains(&eps0) {
        return Err(Error::Gate(format!("near-Euclidean constant {eps0} out of range")));
    }
    let (n, s) = (cfg.cover_grid, torus.scale());
    let rad = cfg.radius / (1.0 - eps0).sqrt();
    let total = n.pow(4);
    // squared per-axis distance by index difference; centres are grid points
    let sq: Vec<f64> = (0..n)
        .map(|k| {
            let d = s * k.min(n - k) as f64 / n as f64;
            d * d
        })
        .collect();
    let digits = |i: usize| -> [usize; 4] { std::array::from_fn(|a| (i / n.pow(a as u32)) % n) };
    let mut dist = vec![f64::INFINITY; total];
    let mut centers: Vec<Point> = Vec::new();
    let mut next = 0usize;
    loop {
        centers.push(grid_point(next, n, s));
        let c = digits(next);
        let (mut far, mut far_i) = (0.0, 0usize);
        let mut i = 0;
        for a3 in 0..n {
            let e3 = sq[(a3 + n - c[3]) % n];
            for a2 in 0..n {
                let e2 = e3 + sq[(a2 + n - c[2]) % n];
                for a1 in 0..n {
                    let e1 = e2 + sq[(a1 + n - c[1]) % n];
                    for a0 in 0..n {
                        let e = (e1 + sq[(a0 + n - c[0]) % n]).sqrt();
                        let d = &mut dist[i];
                        if e < *d {
                            *d = e;
                        }
                        if *d > far {
                            far = *d;
                            far_i = i;
                        }
                        i += 1;
                    }
                }
            }
        }
        if far <= rad {
            break;
        }
        next = far_i;
    }
    let conflict = cfg.color_distance / (1.0 - eps0).sqrt();
    let mut colors: Vec<usize> = Vec::with_capacity(centers.len());
    for (i, c) in centers.iter().enumerate() {
        let used: Vec<usize> =
            (0..i).filter(|&j| torus_distance(c, &centers[j], s) <= conflict).map(|j| colors[j]).collect();
        colors.push((0..).find(|k| !used.contains(k)).unwrap());
    }
    let kappa = colors.iter().max().map_or(0, |m| m + 1);
    Ok(CoveringNet { centers, colors, kappa, euclid_radius: rad })
}

/// Independent re-check of separation, covering and colouring.
pub fn verify_net(net: &CoveringNet, torus: &TorusManifold, cfg: &NetConfig, eps0: f64) -> NetReport {
    let s = torus.scale();
    let shrink = (1.0 - eps0).sqrt();
    let mut min_sep = f64::INFINITY;
    let mut min_same = f64::INFINITY;
    for i in 0..net.centers.len() {
        for j in 0..i {
            let d = torus_distance(&net.centers[i], &net.centers[j], s) * shrink;
            min_sep = min_sep.min(d);
            if net.colors[i] == net.colors[j] {
                min_same = min_same.min(d);
            }
        }
    }
    let n = cfg.cover_grid;
    // running max of the nearest-centre distance; a point with any centre
    // within the current max cannot raise it
    let mut cover = 0.0f64;
    for i in 0..n.pow(4) {
        let y = grid_point(i, n, s);
        let mut near = f64::INFINITY;
        for c in &net.centers {
            near = near.min(torus_distance(&y, c, s));
            if near <= cover {
                break;
            }
        }
        cover = cover.max(near);
    }
    let cover = cover * (1.0 + eps0).sqrt();
    let grid_slack = s / n as f64;
    NetReport {
        centers: net.centers.len(),
        kappa: net.kappa,
        min_separation: min_sep,
        separation_ok: min_sep > cfg.radius,
        covering_radius_grid: cover,
        grid_slack,
        covering_ok: cover <= cfg.radius * ((1.0 + eps0) / (1.0 - eps0)).sqrt(),
        min_same_color_distance: min_same,
        coloring_ok: min_same > cfg.color_distance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_image_distance() {
        let s = 10.0;
        assert_eq!(torus_distance(&[0.5, 0.0, 0.0, 0.0], &[9.5, 0.0, 0.0, 0.0], s), 1.0);
        assert_eq!(torus_distance(&[5.0; 4], &[0.0; 4], s), 10.0);
    }

    #[test]
    fn small_torus_net_is_valid() {
        let t = TorusManifold::flat(1.0, 12.0);
        let cfg = NetConfig { cover_grid: 12, radius: 5.0, color_distance: 8.0 };
        let net = build_net(&t, &cfg, 0.0).unwrap();
        let rep = verify_net(&net, &t, &cfg, 0.0);
        assert!(rep.passed(), "{rep:?}");
        assert!(net.kappa >= 2 && net.kappa <= net.centers.len());
    }
}
