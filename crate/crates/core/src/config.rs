//! Run configuration: a single JSON document (or CLI flags merged into it)
//! fully determines a run. All user-facing coordinate data (initial states,
//! grids, extra points) is given in the model's display order; runners
//! translate to the internal chart.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::hamilton_jacobi::GridAxis;

fn default_dt() -> f64 {
    1e-3
}

fn default_steps() -> usize {
    1000
}

/// One grid axis, "lo:hi:count" on the command line.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl AxisSpec {
    pub fn to_axis(&self) -> GridAxis {
        GridAxis::new(self.lo, self.hi, self.count)
    }
}

impl FromStr for AxisSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!(
                "grid axis {s:?} is not of the form lo:hi:count"
            )));
        }
        let lo: f64 = parts[0]
            .parse()
            .map_err(|_| Error::Config(format!("bad grid bound {:?}", parts[0])))?;
        let hi: f64 = parts[1]
            .parse()
            .map_err(|_| Error::Config(format!("bad grid bound {:?}", parts[1])))?;
        let count: usize = parts[2]
            .parse()
            .map_err(|_| Error::Config(format!("bad grid count {:?}", parts[2])))?;
        Ok(AxisSpec { lo, hi, count })
    }
}

/// Parses a comma-separated axis list, "lo:hi:count,lo:hi:count,...".
pub fn parse_grid_spec(s: &str) -> Result<Vec<AxisSpec>> {
    s.split(',').map(AxisSpec::from_str).collect()
}

/// Initial state: configuration plus exactly one momentum source.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    /// Configuration in display order.
    pub q: Vec<f64>,
    /// Momenta in display order.
    #[serde(default)]
    pub p: Option<Vec<f64>>,
    /// Velocities in display order (transported through the mass matrix).
    #[serde(default)]
    pub v: Option<Vec<f64>>,
    /// Name of a candidate whose value at q supplies the momenta.
    #[serde(default)]
    pub candidate: Option<String>,
}

impl InitialSpec {
    pub fn validate(&self) -> Result<()> {
        let sources =
            self.p.is_some() as u8 + self.v.is_some() as u8 + self.candidate.is_some() as u8;
        if sources != 1 {
            return Err(Error::Config(
                "initial state needs exactly one of p, v, or candidate".into(),
            ));
        }
        if self.q.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("initial q must be finite".into()));
        }
        for vec in [&self.p, &self.v].into_iter().flatten() {
            if vec.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config("initial momenta must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Everything that determines a run. Identical configs produce byte-identical
/// outputs.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: String,
    /// Parameter overrides; unknown names are rejected at model build time.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Candidate to verify (or to read initial momenta from).
    #[serde(default)]
    pub candidate: Option<String>,
    #[serde(default)]
    pub initial: Option<InitialSpec>,
    /// Verification grid in display order; model default when absent.
    #[serde(default)]
    pub grid: Option<Vec<AxisSpec>>,
    /// Extra verification points in display order.
    #[serde(default)]
    pub extra_grid_points: Vec<Vec<f64>>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    /// Correct momenta back onto the constraints after every step.
    #[serde(default)]
    pub project: bool,
    /// Drop analytic derivative callbacks and difference everything.
    #[serde(default)]
    pub finite_differences_only: bool,
}

impl RunConfig {
    pub fn new(model: impl Into<String>) -> Self {
        RunConfig {
            model: model.into(),
            params: BTreeMap::new(),
            dt: default_dt(),
            steps: default_steps(),
            candidate: None,
            initial: None,
            grid: None,
            extra_grid_points: Vec::new(),
            tolerance: None,
            project: false,
            finite_differences_only: false,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("cannot parse {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.is_empty() {
            return Err(Error::Config("model name is empty".into()));
        }
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(Error::Config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if let Some(tol) = self.tolerance {
            if !tol.is_finite() || tol <= 0.0 {
                return Err(Error::Config(format!(
                    "tolerance must be positive, got {tol}"
                )));
            }
        }
        if let Some(init) = &self.initial {
            init.validate()?;
        }
        for p in &self.extra_grid_points {
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config("extra grid points must be finite".into()));
            }
        }
        Ok(())
    }
}
