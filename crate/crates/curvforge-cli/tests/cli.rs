//! Exit codes, manifests and output files of the `curvforge` binary.

use curvforge_cli::{RunConfig, RunManifest};
use std::path::{Path, PathBuf};
use std::process::Output;

const REDUCED: &str = include_str!("reduced.toml");

struct Run {
    out: Output,
    dir: PathBuf,
}

impl Run {
    fn code(&self) -> i32 {
        self.out.status.code().expect("exit code")
    }
    fn stdout(&self) -> String {
        String::from_utf8_lossy(&self.out.stdout).into_owned()
    }
    fn manifest(&self) -> RunManifest {
        RunManifest::from_json(&std::fs::read_to_string(self.dir.join("manifest.json")).unwrap()).unwrap()
    }
}

fn write_config(tmp: &Path, name: &str, extra: &str) -> PathBuf {
    let p = tmp.join(name);
    std::fs::write(&p, format!("{REDUCED}\n{extra}")).unwrap();
    p
}

fn curvforge(tmp: &Path, tag: &str, args: &[&str], config: Option<&Path>) -> Run {
    let dir = tmp.join(tag);
    let mut cmd = std::process::Command::new(env!("CARGO_BIN_EXE_curvforge"));
    cmd.args(args).arg("--out").arg(&dir);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    Run { out: cmd.output().expect("binary runs"), dir }
}

#[test]
fn island_verify_passes_and_writes_headed_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "");
    let r = curvforge(tmp.path(), "o", &["island-verify"], Some(&cfg));
    assert_eq!(r.code(), 0, "{}", r.stdout());
    let m = r.manifest();
    assert_eq!(m.command, "island-verify");
    assert_eq!(m.exit_code, 0);
    assert!(m.checks.contains_key("sign_pattern") && m.all_passed());
    let alpha = std::fs::read_to_string(r.dir.join("alpha.csv")).unwrap();
    assert!(alpha.starts_with("x,value\n"));
    let slice = std::fs::read_to_string(r.dir.join("scalar_slice.csv")).unwrap();
    assert!(slice.starts_with("x,y,value\n") && !slice.contains('\r'));
    assert!(r.dir.join("island.gp").exists());
}

#[test]
fn nonzero_mean_profile_fails_and_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "[island.p]\nc_offset = 0.1\n");
    let r = curvforge(tmp.path(), "o", &["island-verify"], Some(&cfg));
    assert_eq!(r.code(), 1);
    let m = r.manifest();
    assert_eq!(m.failed_checks(), vec!["profile_p"]);
    assert!(m.error.unwrap().contains("profile_p"));
}

#[test]
fn config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown = write_config(tmp.path(), "u.toml", "[island.p]\nwobble = 1\n");
    let order = write_config(tmp.path(), "o.toml", "[pipeline.deform]\nb = 9.5\n");
    std::fs::write(tmp.path().join("bad.toml"), "[island\n").unwrap();
    for c in [unknown, order, tmp.path().join("bad.toml"), tmp.path().join("missing.toml")] {
        let r = curvforge(tmp.path(), "o", &["island-verify"], Some(&c));
        assert_eq!(r.code(), 2, "{}", c.display());
    }
    let r = curvforge(tmp.path(), "o", &["net-build", "--grid", "0"], None);
    assert_eq!(r.code(), 2);
}

#[test]
fn small_period_trips_the_separation_gate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "[pipeline.torus]\nm = 10.0\n");
    let r = curvforge(tmp.path(), "o", &["pipeline-run"], Some(&cfg));
    assert_eq!(r.code(), 3);
    let m = r.manifest();
    assert!(m.error.unwrap().contains("separation gate"));
    assert!(!m.checks["gate"].passed);
}

#[test]
fn net_stage_stops_after_the_net() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "");
    let r = curvforge(tmp.path(), "o", &["pipeline-run", "--stage", "net"], Some(&cfg));
    assert_eq!(r.code(), 0, "{}", r.stdout());
    let m = r.manifest();
    assert_eq!(m.constants["stage_reached"], "net");
    assert!(m.checks.contains_key("net_separation"));
    assert!(!m.checks.contains_key("verdict_negative"));
    let centres = std::fs::read_to_string(r.dir.join("net_centers.csv")).unwrap();
    assert!(centres.lines().count() > 1);
}

#[test]
fn identities_only_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "");
    let r = curvforge(tmp.path(), "o", &["deform-verify", "--identities"], Some(&cfg));
    assert_eq!(r.code(), 0, "{}", r.stdout());
    let names: Vec<_> = r.manifest().checks.into_keys().collect();
    assert_eq!(names, vec!["identities"]);
}

#[test]
fn zero_amplitude_reproduces_the_island() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, REDUCED.replace("[deform]\n", "[deform]\ns = 0.0\n")).unwrap();
    let r = curvforge(tmp.path(), "o", &["deform-verify"], Some(&cfg));
    assert_eq!(r.code(), 0, "{}", r.stdout());
    assert!(r.manifest().checks["zero_amplitude_exact"].passed);
}

#[test]
fn echoed_config_reproduces_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "");
    let first = curvforge(tmp.path(), "a", &["oracle-compare", "--seed", "5"], Some(&cfg));
    assert_eq!(first.code(), 0, "{}", first.stdout());
    let echoed: RunConfig = serde_json::from_value(first.manifest().config).unwrap();
    let again = tmp.path().join("echo.toml");
    std::fs::write(&again, toml::to_string(&echoed).unwrap()).unwrap();
    let second = curvforge(tmp.path(), "b", &["oracle-compare"], Some(&again));
    assert_eq!(second.code(), 0);
    for f in ["manifest.json", "oracle_compare.csv"] {
        assert_eq!(std::fs::read(first.dir.join(f)).unwrap(), std::fs::read(second.dir.join(f)).unwrap(), "{f}");
    }
}
