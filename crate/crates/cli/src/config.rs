use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use screwbif::branch::{BranchConfig, TOL_OUTER};
use screwbif::lie::{IntegratorConfig, C_CFL, DEFECT_MAX};
use screwbif::linear::Rotation;
use screwbif::reduction::{PhiConfig, TOL_INNER};

/// Every knob of a run. Read from a flat TOML file, then overridden from the
/// command line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub k: usize,
    pub radius: f64,
    pub n: usize,
    pub lambda_max: f64,
    pub n_points: usize,
    /// Amplitude evolved by `evolve`.
    pub lambda: f64,
    pub rotation: Rotation,
    pub t_end: f64,
    /// Time step; the CFL bound `c_cfl (L/N)²` when absent.
    pub dt: Option<f64>,
    pub output_interval: f64,
    pub c_cfl: f64,
    pub tol_inner: f64,
    pub tol_outer: f64,
    pub max_outer: usize,
    pub fd_step: f64,
    pub defect_max: f64,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let branch = BranchConfig::default();
        Self {
            k: 2,
            radius: 1.0,
            n: branch.n,
            lambda_max: 0.05,
            n_points: 6,
            lambda: 0.02,
            rotation: Rotation::Positive,
            t_end: 10.0,
            dt: None,
            output_interval: 0.5,
            c_cfl: C_CFL,
            tol_inner: TOL_INNER,
            tol_outer: TOL_OUTER,
            max_outer: branch.max_outer,
            fd_step: branch.fd_step,
            defect_max: DEFECT_MAX,
            output_dir: PathBuf::from("screwbif-out"),
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Layers `file` (if any), then `key=value` overrides, then `flags`.
    pub fn load(file: Option<&Path>, overrides: &[String], flags: Table) -> anyhow::Result<Self> {
        let mut table = match file {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("cannot read config file {}", path.display()))?;
                text.parse::<Table>()
                    .with_context(|| format!("malformed config file {}", path.display()))?
            }
            None => Table::new(),
        };
        for item in overrides {
            let Some((key, raw)) = item.split_once('=') else {
                bail!("override `{item}` is not of the form key=value");
            };
            table.insert(key.trim().to_string(), parse_value(raw.trim()));
        }
        table.extend(flags);
        let cfg: RunConfig = Value::Table(table).try_into().context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.k < 2 {
            bail!("k must be at least 2, got {}", self.k);
        }
        if self.n < 8 || self.n % 2 == 1 {
            bail!("n must be even and at least 8, got {}", self.n);
        }
        if self.n_points < 4 {
            bail!("n_points must be at least 4, got {}", self.n_points);
        }
        let positive = [
            ("radius", self.radius),
            ("t_end", self.t_end),
            ("output_interval", self.output_interval),
            ("c_cfl", self.c_cfl),
            ("tol_inner", self.tol_inner),
            ("tol_outer", self.tol_outer),
            ("fd_step", self.fd_step),
            ("defect_max", self.defect_max),
            ("dt", self.dt.unwrap_or(1.0)),
        ];
        for (name, x) in positive {
            if !(x.is_finite() && x > 0.0) {
                bail!("{name} must be positive and finite, got {x}");
            }
        }
        if !self.lambda.is_finite() || !self.lambda_max.is_finite() {
            bail!("amplitudes must be finite");
        }
        if self.max_outer == 0 {
            bail!("max_outer must be positive");
        }
        Ok(())
    }

    pub fn branch(&self) -> BranchConfig {
        BranchConfig {
            n: self.n,
            tol_outer: self.tol_outer,
            max_outer: self.max_outer,
            fd_step: self.fd_step,
            phi: PhiConfig {
                tol: self.tol_inner,
                polish: true,
                ..PhiConfig::default()
            },
            rotation: self.rotation,
        }
    }

    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig {
            c_cfl: self.c_cfl,
            defect_max: self.defect_max,
            output_interval: Some(self.output_interval),
            ..IntegratorConfig::default()
        }
    }

    /// `key = value` lines in key order, for CSV headers.
    pub fn provenance(&self, command: &str) -> Vec<String> {
        let mut lines = vec![
            format!("screwbif {}", env!("CARGO_PKG_VERSION")),
            format!("command = {command}"),
        ];
        if let serde_json::Value::Object(map) = self.as_json() {
            lines.extend(map.iter().map(|(k, v)| format!("{k} = {v}")));
        }
        lines
    }

    pub fn as_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config is plain data")
    }
}

/// Interprets an override as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}
