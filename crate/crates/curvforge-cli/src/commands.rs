//! The subcommands. Each returns its manifest and output files in memory;
//! writing them is left to the caller.

use crate::config::RunConfig;
use crate::manifest::{to_value, RunManifest};
use crate::plot::{self, num, Artifact};
use curvforge::coframe_deform::{coefficient_bounds, euclidean_table_check, identity_trials};
use curvforge::island::gminus::{build_gminus_with, section_parameters, shell_points, verify_gminus};
use curvforge::island::{island_metric, BiaxialProfile, IslandMetric, Profile};
use curvforge::surgery_pipeline::{run_pipeline, PipelineRun, Stage};
use curvforge::tensor_core::{scalar_jet, scalar_numeric, OracleOptions};
use curvforge::{Error, Real};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

/// Process exit status; the numeric codes are a stable contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Config,
    Gate,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::Config => 2,
            Status::Gate => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    IslandVerify,
    DeformVerify,
    PipelineRun,
    NetBuild,
    OracleCompare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::IslandVerify => "island-verify",
            Command::DeformVerify => "deform-verify",
            Command::PipelineRun => "pipeline-run",
            Command::NetBuild => "net-build",
            Command::OracleCompare => "oracle-compare",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Options {
    pub grid: Option<usize>,
    pub stage: Stage,
    pub identities: bool,
}

impl Default for Options {
    fn default() -> Self {
        Options { grid: None, stage: Stage::Verdict, identities: false }
    }
}

pub struct Outcome {
    pub status: Status,
    pub manifest: RunManifest,
    /// Data files, not including the manifest.
    pub artifacts: Vec<Artifact>,
}

impl Outcome {
    fn finish(mut manifest: RunManifest, artifacts: Vec<Artifact>, gate: bool) -> Self {
        let status = if gate {
            Status::Gate
        } else if manifest.error.is_none() && manifest.all_passed() && !manifest.checks.is_empty() {
            Status::Pass
        } else {
            Status::Fail
        };
        manifest.exit_code = status.code();
        Outcome { status, manifest, artifacts }
    }

    /// Every file of the run, manifest first.
    pub fn files(&self) -> Vec<Artifact> {
        let mut v = vec![Artifact { name: "manifest.json".into(), bytes: self.manifest.to_json().into_bytes() }];
        v.extend(self.artifacts.iter().cloned());
        v
    }
}

/// Applies `--grid` to the resolution the command is driven by.
pub fn apply_grid(cmd: Command, cfg: &mut RunConfig, n: usize) {
    match cmd {
        Command::IslandVerify => {
            cfg.island.oracle_grid = n;
            cfg.island.pde_grid = n;
            cfg.island.sign_grid = n;
        }
        Command::DeformVerify => cfg.deform.gminus.grid_n = n,
        Command::PipelineRun => cfg.pipeline.verify_grid = n,
        Command::NetBuild => cfg.pipeline.net.cover_grid = n,
        Command::OracleCompare => cfg.oracle.points = n,
    }
}

pub fn run(cmd: Command, cfg: &RunConfig, opts: &Options) -> Outcome {
    let mut cfg = cfg.clone();
    if let Some(n) = opts.grid {
        apply_grid(cmd, &mut cfg, n);
    }
    match cmd {
        Command::IslandVerify => island_verify(&cfg),
        Command::DeformVerify => deform_verify(&cfg, opts.identities),
        Command::PipelineRun => pipeline(&cfg, Command::PipelineRun, opts.stage),
        Command::NetBuild => pipeline(&cfg, Command::NetBuild, Stage::Net),
        Command::OracleCompare => oracle_compare(&cfg),
    }
}

fn manifest_for(cmd: Command, cfg: &RunConfig) -> RunManifest {
    RunManifest::new(cmd.name(), to_value(cfg))
}

// ---------------------------------------------------------------- island

pub fn island_verify(cfg: &RunConfig) -> Outcome {
    let ic = &cfg.island;
    let mut m = manifest_for(Command::IslandVerify, cfg);
    let mut built = Vec::new();
    for (name, pp) in [("p", ic.p), ("k", ic.k)] {
        match Profile::new(pp) {
            Ok(prof) => {
                let rep = prof.verify();
                m.check(&format!("profile_{name}"), rep.all_ok(), &json!({ "failures": rep.failures(), "report": rep }));
                if rep.all_ok() {
                    built.push(prof);
                }
            }
            Err(e) => m.check(&format!("profile_{name}"), false, &json!({ "failures": ["construction"], "error": e.to_string() })),
        }
    }
    if built.len() < 2 {
        m.error = Some(format!("profile invariants violated: {}", m.failed_checks().join(", ")));
        return Outcome::finish(m, Vec::new(), false);
    }
    let k = built.pop().unwrap();
    let p = built.pop().unwrap();
    let bp = BiaxialProfile { p, k };
    m.constant("r_crit", &bp.p.crit);
    m.constant("rho_crit", &bp.k.crit);
    m.constant("second_amplitude", &[bp.p.c, bp.k.c]);
    m.constant("flat_radius", &bp.flat_radius());

    let sign = bp.sign_pattern_check(ic.sign_grid);
    let mut sw = to_value(&sign);
    if let Some(v) = sw.get_mut("violations").and_then(|v| v.as_array_mut()) {
        v.truncate(10);
    }
    m.check("sign_pattern", sign.passed(), &json!({ "grid": ic.sign_grid, "violation_count": sign.violations.len(), "report": sw }));

    let fh = bp.fh_report(ic.pde_grid);
    m.check("pde_residual", fh.max_pde_residual < ic.pde_tol, &json!({ "grid": ic.pde_grid, "tol": ic.pde_tol, "report": fh }));
    m.check("fh_positive", fh.min_f > 0.0 && fh.min_h > 0.0, &fh);

    let opts = OracleOptions { h: ic.oracle_h, ..Default::default() };
    let mut arts = Vec::new();
    match bp.oracle_agreement(ic.oracle_grid, &opts, ic.oracle_rel, ic.oracle_abs) {
        Ok(o) => {
            m.check("oracle_agreement", o.passed(), &json!({ "rel": ic.oracle_rel, "abs": ic.oracle_abs, "report": o }));
            arts.push(plot::csv_artifact(
                "island_oracle.csv",
                &["r", "rho", "closed", "numeric", "abs_err", "tol"],
                o.rows.iter().map(|r| vec![num(r.r), num(r.rho), num(r.closed), num(r.numeric), num(r.abs_err), num(r.tol)]),
            ));
        }
        Err(e) => m.check("oracle_agreement", false, &json!({ "error": e.to_string() })),
    }

    let (lr, lk) = bp.support();
    let n = ic.curve_samples.max(2);
    arts.push(plot::curve("alpha.csv", (0..n).map(|i| 1.1 * lr * i as f64 / (n - 1) as f64), |y| bp.p.alpha(y)[0]));
    arts.push(plot::slice("scalar_slice.csv", ic.sign_grid, (0.0, 1.2 * lr), (0.0, 1.2 * lk), |r, rho| bp.closed_scalar(r, rho)));
    arts.push(plot::gnuplot_script(
        "island.gp",
        &[("alpha.csv", "alpha")],
        &[("scalar_slice.csv", "scalar curvature over (r, rho)")],
    ));
    Outcome::finish(m, arts, false)
}

// ---------------------------------------------------------------- deform

/// Euclidean base point of the coefficient-table check.
pub const TABLE_BASE: [Real; 4] = [0.1, -0.2, 0.3, 0.0];

pub fn deform_verify(cfg: &RunConfig, identities_only: bool) -> Outcome {
    let dc = &cfg.deform;
    let mut m = manifest_for(Command::DeformVerify, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let id = identity_trials(&mut rng, dc.identity_trials, dc.identity_bound, dc.identity_tol);
    m.check("identities", id.passed(), &id);
    if identities_only {
        return Outcome::finish(m, Vec::new(), false);
    }

    let pts = shell_points(&TABLE_BASE, 0.2, 2.0, dc.table_samples, &mut rng);
    match euclidean_table_check(&TABLE_BASE, &pts, dc.table_tol) {
        Ok(t) => m.check("euclidean_table", t.passed(), &t),
        Err(e) => m.check("euclidean_table", false, &json!({ "error": e.to_string() })),
    }

    let bp = match BiaxialProfile::from_params(cfg.island.p, cfg.island.k) {
        Ok(bp) => bp,
        Err(e) => {
            m.error = Some(e.to_string());
            return Outcome::finish(m, Vec::new(), false);
        }
    };
    let (p5, sec) = section_parameters(&bp);
    m.constant("r_crit", &bp.p.crit);
    m.constant("base_point", &p5);

    // radii log-uniform in [1e-2, R]: the bound is scale-sensitive near p
    let (lo, hi) = (1e-2f64.ln(), dc.bound_radius.ln());
    let bpts: Vec<_> = (0..dc.bound_samples)
        .map(|_| {
            let r = rng.random_range(lo..hi).exp();
            shell_points(&p5, r, r, 1, &mut rng)[0]
        })
        .collect();
    match coefficient_bounds(&island_metric(bp.clone()), &p5, &bpts) {
        Ok(b) => m.check("coefficient_bounds", b.passed(), &json!({ "radius": dc.bound_radius, "report": b })),
        Err(e) => m.check("coefficient_bounds", false, &json!({ "error": e.to_string() })),
    }

    let g = match build_gminus_with(&bp, &dc.gminus, dc.s) {
        Ok(g) => g,
        Err(e) => {
            m.constant("section_params", &sec);
            m.check("calibration", false, &json!({ "error": e.to_string() }));
            m.error = Some(e.to_string());
            return Outcome::finish(m, Vec::new(), false);
        }
    };
    m.check("calibration", true, &json!({ "d0": g.params.d, "s0": g.params.s }));
    m.constant("d0", &g.params.d);
    m.constant("s0", &g.params.s);
    m.constant("section_params", &g.params);
    let slack = dc.clause_slack;
    m.check("clause_i", g.inner.bit_equal && g.inner.checked > 0, &g.inner);
    let d = &g.diffusion;
    m.check("clause_ii", d.clause_ii.margin >= -slack, &json!({ "slack": slack, "report": d.clause_ii }));
    m.check("clause_iii", d.clause_iii.margin >= -slack, &json!({ "slack": slack, "report": d.clause_iii }));
    m.check("core_negativity", g.core.passed, &g.core);
    m.report("diffusion", d);
    match verify_gminus(&g, &dc.gminus) {
        Ok(r) => {
            m.check("gminus_negative", r.grid_negative, &json!({ "grid_n": dc.gminus.grid_n, "report": r }));
            m.check("gminus_far_equal", r.far_bit_equal && r.far_checked > 0, &json!({ "checked": r.far_checked }));
            m.check("gminus_compat", r.max_compat_residual < dc.compat_tol, &json!({ "max": r.max_compat_residual, "tol": dc.compat_tol }));
            if dc.s == Some(0.0) {
                let exact = r.grid_exact == r.grid_checked && g.inner.max_abs_diff == 0.0;
                m.check("zero_amplitude_exact", exact, &json!({ "grid_exact": r.grid_exact, "grid_checked": r.grid_checked }));
            }
        }
        Err(e) => m.check("gminus_negative", false, &json!({ "error": e.to_string() })),
    }
    Outcome::finish(m, Vec::new(), false)
}

// -------------------------------------------------------------- pipeline

fn pipeline(cfg: &RunConfig, cmd: Command, stage: Stage) -> Outcome {
    let mut m = manifest_for(cmd, cfg);
    m.constant("stage_requested", &stage);
    match run_pipeline(&cfg.pipeline, stage) {
        Ok(run) => {
            let arts = pipeline_record(&mut m, &run);
            Outcome::finish(m, arts, false)
        }
        Err(Error::Gate(msg)) => {
            m.check("gate", false, &msg);
            m.error = Some(format!("gate failed: {msg}"));
            Outcome::finish(m, Vec::new(), true)
        }
        Err(e) => {
            m.error = Some(e.to_string());
            Outcome::finish(m, Vec::new(), false)
        }
    }
}

fn pipeline_record(m: &mut RunManifest, run: &PipelineRun) -> Vec<Artifact> {
    let nr = &run.net_report;
    m.constant("stage_reached", &run.stage_reached);
    m.constant("gate_eps", &run.gate_eps);
    m.constant("centers", &run.net.centers.len());
    m.constant("kappa", &run.net.kappa);
    m.report("net", nr);
    m.check("net_separation", nr.separation_ok, &json!({ "min_separation": nr.min_separation, "radius": run.config.net.radius }));
    m.check(
        "net_covering",
        nr.covering_ok,
        &json!({ "covering_radius_grid": nr.covering_radius_grid, "grid_slack": nr.grid_slack }),
    );
    m.check("net_coloring", nr.coloring_ok, &json!({ "min_same_color_distance": nr.min_same_color_distance, "kappa": nr.kappa }));
    let mut arts = vec![plot::csv_artifact(
        "net_centers.csv",
        &["index", "color", "y1", "y2", "y3", "y4"],
        run.net.centers.iter().zip(&run.net.colors).enumerate().map(|(i, (c, k))| {
            let mut r = vec![i.to_string(), k.to_string()];
            r.extend(c.iter().map(|&v| num(v)));
            r
        }),
    )];
    if run.stage_reached < Stage::Surgery {
        return arts;
    }
    if let Some(g) = &run.gminus {
        m.constant("gminus_d", &g.params.d);
        m.constant("gminus_s", &g.params.s);
    }
    if let Some(s) = &run.surgery {
        m.check("surgery", s.passed(), s);
    }
    if run.stage_reached < Stage::Iterate {
        return arts;
    }
    m.constant("iteration_params", &run.params);
    if let Some(c) = &run.calibration {
        m.constant("flat_d", &c.flat_d);
        m.report("calibration", c);
    }
    let steps_ok = run.steps.iter().all(|s| s.disjoint && s.outside_bit_equal && s.max_compat_residual < 1e-9);
    m.check("steps", steps_ok && !run.steps.is_empty(), &run.steps);
    let Some(v) = &run.verdict else {
        return arts;
    };
    m.constant("c1_log10", &v.c1_log10);
    m.constant("max_s", &v.max_s);
    m.check(
        "verdict_negative",
        v.all_negative(),
        &json!({ "checked": v.checked, "passed": v.passed, "unresolved": v.unresolved, "max_s": v.max_s,
                 "max_s_point": v.max_s_point, "min_cancellation": v.min_cancellation }),
    );
    m.check("verdict_steps", v.steps.passed(), &v.steps);
    m.check("verdict_compat", v.max_compat_residual < 1e-9, &json!({ "max": v.max_compat_residual }));
    m.report("verdict", v);
    arts.push(plot::csv_artifact(
        "verdict.csv",
        &["y1", "y2", "y3", "y4", "s_ga", "route", "sign", "log10_abs_s", "cancellation", "s_stencil"],
        v.rows.iter().map(|r| {
            let mut row: Vec<String> = r.y.iter().map(|&c| num(c)).collect();
            row.push(num(r.s_ga));
            row.push(r.route.as_str().into());
            row.push(r.total.value.sign.to_string());
            row.push(num(r.total.value.log10_abs()));
            row.push(num(r.total.cancellation));
            row.push(r.s_stencil.map(num).unwrap_or_default());
            row
        }),
    ));
    // the (y1, y2) plane through the first grid value of y3, y4
    if let Some(first) = v.rows.first() {
        let (y3, y4) = (first.y[2], first.y[3]);
        arts.push(plot::csv_artifact(
            "verdict_slice.csv",
            &["x", "y", "value"],
            v.rows
                .iter()
                .filter(|r| r.y[2] == y3 && r.y[3] == y4)
                .map(|r| vec![num(r.y[0]), num(r.y[1]), num(r.total.value.log10_abs())]),
        ));
        arts.push(plot::gnuplot_script("pipeline.gp", &[], &[("verdict_slice.csv", "log10 |s(g(kappa))|")]));
    }
    arts
}

// ---------------------------------------------------------------- oracle

pub fn oracle_compare(cfg: &RunConfig) -> Outcome {
    let oc = &cfg.oracle;
    let mut m = manifest_for(Command::OracleCompare, cfg);
    let bp = match BiaxialProfile::from_params(cfg.island.p, cfg.island.k) {
        Ok(bp) => bp,
        Err(e) => {
            m.error = Some(e.to_string());
            return Outcome::finish(m, Vec::new(), false);
        }
    };
    let (lr, lk) = bp.support();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pts: Vec<[f64; 4]> = (0..oc.points)
        .map(|_| {
            let (r, rho) = (lr * rng.random_range(0.02..0.98), lk * rng.random_range(0.02..0.98));
            let (th, sg) = (rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.0..std::f64::consts::TAU));
            IslandMetric::point(r, th, rho, sg)
        })
        .collect();
    let g = island_metric(bp.clone());
    let opts = OracleOptions { h: oc.h, ..Default::default() };
    let rows: Vec<[f64; 5]> = pts
        .par_iter()
        .map(|x| {
            let (r, rho) = (x[0].hypot(x[1]), x[2].hypot(x[3]));
            let jet = scalar_jet(&g, x).unwrap_or(f64::NAN);
            let st = scalar_numeric(&g, x, &opts).map(|o| o.s).unwrap_or(f64::NAN);
            [r, rho, bp.closed_scalar(r, rho), jet, st]
        })
        .collect();
    let (mut jet_err, mut st_err) = (0.0f64, 0.0f64);
    let (mut jet_ok, mut st_ok) = (true, true);
    for [_, _, c, j, s] in &rows {
        let tol = (oc.rel_tol * c.abs()).max(oc.abs_tol);
        jet_err = jet_err.max((j - c).abs());
        st_err = st_err.max((s - c).abs());
        jet_ok &= (j - c).abs() <= tol;
        st_ok &= (s - c).abs() <= tol;
    }
    m.check("jet_vs_closed", jet_ok && !rows.is_empty(), &json!({ "max_abs_err": jet_err }));
    m.check("stencil_vs_closed", st_ok && !rows.is_empty(), &json!({ "max_abs_err": st_err, "h": oc.h }));
    let art = plot::csv_artifact(
        "oracle_compare.csv",
        &["r", "rho", "closed", "jet", "stencil"],
        rows.iter().map(|r| r.iter().map(|&v| num(v)).collect()),
    );
    Outcome::finish(m, vec![art], false)
}
