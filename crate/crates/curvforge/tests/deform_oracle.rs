//! The curvature formula on numerically computed coefficients against the
//! coordinate-stencil oracle applied to the deformed metric itself.

use curvforge::coframe_deform::{deform, scalar_formula, DeformParams, GeodesicCoframe};
use curvforge::geodesy::GeodesyOptions;
use curvforge::island::profile::ProfileParams;
use curvforge::island::{island_metric, BiaxialProfile, IslandMetric};
use curvforge::tensor_core::{scalar_numeric, OracleOptions, StencilMode, SymplecticForm};

#[test]
fn deformed_island_scalar_matches_oracle() {
    let pp = ProfileParams { amplitude: 20.0, ..Default::default() };
    let m = island_metric(BiaxialProfile::from_params(pp, pp).unwrap());
    let p = [0.02, 0.0, 0.03, 0.0];
    let params = DeformParams { a: 0.1, b: 0.5, eps: 0.2, c: 1.0, d: 1.0, s: 1.0 };
    let def = deform(m.clone(), SymplecticForm::standard(), p, params, 0.2).unwrap();
    let cfr = GeodesicCoframe { g: &m, w: def.w, p, opts: def.opts, steps: def.steps };
    let oracle = OracleOptions { h: 2e-3, mode: StencilMode::Values };
    for x in [
        IslandMetric::point(0.45, 0.4, 0.45, 1.0),
        IslandMetric::point(0.5, -0.7, 0.45, 2.0),
        IslandMetric::point(0.2, 0.1, 0.6, -1.0),
        IslandMetric::point(0.3, 2.0, 0.2, 0.5),
    ] {
        let smp = cfr.coeffs(&x, None).unwrap();
        let y = params.y_profile(smp.dist);
        let sf = scalar_formula(&smp.coeffs.a, &smp.coeffs.da, y[0], y[1], y[2]);
        let num = scalar_numeric(&def, &x, &oracle).unwrap();
        assert!((sf - num.s).abs() < 1e-3 * sf.abs().max(0.1), "at {x:?}: formula {sf} vs oracle {}", num.s);
    }
}
