//! Run configuration: the bundled defaults merged with an optional user
//! file, then command-line overrides.

use curvforge::island::gminus::GminusConfig;
use curvforge::island::ProfileParams;
use curvforge::surgery_pipeline::PipelineConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const DEFAULTS: &str = include_str!("../defaults.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IslandSection {
    pub oracle_grid: usize,
    pub oracle_rel: f64,
    pub oracle_abs: f64,
    pub oracle_h: f64,
    pub sign_grid: usize,
    pub pde_grid: usize,
    pub pde_tol: f64,
    /// Points of the exported α curve.
    pub curve_samples: usize,
    pub p: ProfileParams,
    pub k: ProfileParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeformSection {
    pub identity_trials: usize,
    pub identity_bound: f64,
    pub identity_tol: f64,
    pub table_samples: usize,
    pub table_tol: f64,
    pub bound_samples: usize,
    pub bound_radius: f64,
    pub clause_slack: f64,
    pub compat_tol: f64,
    /// Fixed amplitude `s` instead of the calibrated one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    pub gminus: GminusConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub points: usize,
    pub h: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub island: IslandSection,
    pub deform: DeformSection,
    pub pipeline: PipelineConfig,
    pub oracle: OracleSection,
}

impl PartialEq for RunConfig {
    fn eq(&self, o: &Self) -> bool {
        // the pipeline block has no PartialEq; compare its serialised form
        self.seed == o.seed
            && self.island == o.island
            && self.deform == o.deform
            && self.oracle == o.oracle
            && serde_json::to_value(&self.pipeline).ok() == serde_json::to_value(&o.pipeline).ok()
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Command-line overrides.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
}

impl RunConfig {
    /// Defaults merged with the TOML text `user`.
    pub fn from_toml(user: Option<&str>) -> Result<Self, ConfigError> {
        let table: toml::Table = toml::from_str(DEFAULTS).map_err(|e| ConfigError(format!("bundled defaults: {e}")))?;
        let mut v = toml::Value::Table(table);
        if let Some(u) = user {
            let o: toml::Table = toml::from_str(u).map_err(|e| ConfigError(format!("config: {e}")))?;
            merge(&mut v, toml::Value::Table(o));
        }
        let cfg: RunConfig = v.try_into().map_err(|e| ConfigError(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => Some(std::fs::read_to_string(p).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?),
            None => None,
        };
        Self::from_toml(text.as_deref())
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
            self.deform.gminus.seed = s;
            self.pipeline.seed = s;
            self.pipeline.gminus.seed = s;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let tols = [
            ("island.oracle_rel", self.island.oracle_rel),
            ("island.oracle_abs", self.island.oracle_abs),
            ("island.oracle_h", self.island.oracle_h),
            ("island.pde_tol", self.island.pde_tol),
            ("deform.identity_bound", self.deform.identity_bound),
            ("deform.identity_tol", self.deform.identity_tol),
            ("deform.table_tol", self.deform.table_tol),
            ("deform.bound_radius", self.deform.bound_radius),
            ("deform.clause_slack", self.deform.clause_slack),
            ("deform.compat_tol", self.deform.compat_tol),
            ("deform.gminus.c0", self.deform.gminus.c0),
            ("pipeline.gate_eps", self.pipeline.gate_eps),
            ("oracle.h", self.oracle.h),
            ("oracle.rel_tol", self.oracle.rel_tol),
            ("oracle.abs_tol", self.oracle.abs_tol),
        ];
        for (name, v) in tols {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(s) = self.deform.s {
            if !(0.0..=1.0).contains(&s) {
                return Err(ConfigError(format!("deform.s must lie in [0, 1], got {s}")));
            }
        }
        self.pipeline.validate().map_err(|e| ConfigError(format!("pipeline: {e}")))?;
        Ok(())
    }
}
