//! Scenarios: grid, flux parameters, data and the ε schedule, plus the TOML
//! configuration format that describes them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::flux::FluxParams;
use crate::grid::{ScalarField, SpaceTimeGrid, SpatialGrid};

/// Closed-form or tabulated datum on the space-time grid.
#[derive(Debug, Clone, PartialEq)]
pub enum Datum {
    Expr(Expr),
    Table(ScalarField),
}

impl Datum {
    pub fn expr(src: &str) -> Result<Self> {
        Ok(Self::Expr(Expr::parse(src)?))
    }

    pub fn zero() -> Self {
        Self::Expr(Expr::parse("0").expect("literal"))
    }

    pub fn field(&self, grid: &SpaceTimeGrid) -> Result<ScalarField> {
        match self {
            Self::Expr(e) => ScalarField::from_fn(grid.clone(), |x, t| e.eval(x, t)),
            Self::Table(f) => {
                if f.grid() != grid {
                    return Err(Error::Config("tabulated datum lives on a different grid".into()));
                }
                Ok(f.clone())
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Expr(e) => e.source().to_string(),
            Self::Table(_) => "<table>".into(),
        }
    }
}

/// Inner nonlinear solve settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonConfig {
    /// Absolute tolerance on `τ·‖r‖_∞`, in units of `u`.
    pub abs_tol: f64,
    /// Relative tolerance, scaled by `1 + ‖u‖_∞`.
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Armijo sufficient-decrease parameter.
    pub armijo: f64,
    /// Step shrink factor on rejection.
    pub backtrack: f64,
    /// Rejected trial steps before switching to lagged-coefficient iterations.
    pub rejections_before_fallback: usize,
    pub picard_fallback: bool,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-11,
            rel_tol: 1e-12,
            max_iter: 60,
            armijo: 1e-4,
            backtrack: 0.5,
            rejections_before_fallback: 5,
            picard_fallback: true,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::Config("newton tolerances must be > 0".into()));
        }
        if self.max_iter < 1 {
            return Err(Error::Config("newton.max_iter must be >= 1".into()));
        }
        if !(self.armijo > 0.0 && self.armijo < 0.5) {
            return Err(Error::Config("newton.armijo must lie in (0, 1/2)".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Config("newton.backtrack must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub grid: SpaceTimeGrid,
    /// `epsilon` here is ignored by the drivers; the schedule governs it.
    pub params: FluxParams,
    pub f: Datum,
    pub g: Datum,
    pub epsilon_schedule: Vec<f64>,
    pub newton: NewtonConfig,
    /// Mollify `f` with radius ε before each solve.
    pub mollify: bool,
    pub metadata: BTreeMap<String, String>,
}

pub fn validate_schedule(schedule: &[f64]) -> Result<()> {
    if schedule.is_empty() {
        return Err(Error::Config("epsilon_schedule is empty".into()));
    }
    for &e in schedule {
        if !(e > 0.0 && e <= 1.0) {
            return Err(Error::Config(format!("schedule entry {e} outside (0, 1]")));
        }
    }
    for w in schedule.windows(2) {
        if w[1] >= w[0] {
            return Err(Error::Config(format!(
                "epsilon_schedule must be strictly decreasing, found {} then {}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

impl Scenario {
    pub fn new(grid: SpaceTimeGrid, params: FluxParams, f: Datum, g: Datum, schedule: Vec<f64>) -> Result<Self> {
        let s = Self {
            grid,
            params,
            f,
            g,
            epsilon_schedule: schedule,
            newton: NewtonConfig::default(),
            mollify: true,
            metadata: BTreeMap::new(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate().map_err(|e| Error::Config(e.to_string()))?;
        validate_schedule(&self.epsilon_schedule)?;
        self.newton.validate()
    }

    pub fn smallest_epsilon(&self) -> f64 {
        *self.epsilon_schedule.last().expect("validated non-empty")
    }
}

// ---- configuration file ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    #[serde(default = "two")]
    pub dim: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Cells along axis 0; other axes follow from the domain aspect ratio.
    pub cells: usize,
    pub steps: usize,
    #[serde(default)]
    pub t0: f64,
    pub t_end: f64,
    pub budget: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CylinderConfig {
    pub x0: Vec<f64>,
    pub t0: f64,
    /// Outer radius `R₀`.
    pub r0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatesConfig {
    pub cylinder: CylinderConfig,
    #[serde(default = "five")]
    pub family: usize,
    pub theta: Option<Vec<f64>>,
}

fn five() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalConfig {
    pub k: f64,
    pub mu: f64,
    pub m: f64,
    #[serde(rename = "G")]
    pub g: f64,
    #[serde(rename = "P0")]
    pub p0: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub boundary_pressure: String,
    pub initial_pressure: Option<String>,
    #[serde(default)]
    pub normalize: bool,
}

/// The parsed configuration file, echoed verbatim into run manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub name: Option<String>,
    pub domain: DomainConfig,
    pub grid: GridConfig,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default)]
    pub nu: f64,
    pub epsilon_schedule: Vec<f64>,
    #[serde(default = "zero_expr")]
    pub f: String,
    pub f_file: Option<PathBuf>,
    #[serde(default = "zero_expr")]
    pub g: String,
    pub g_file: Option<PathBuf>,
    #[serde(default = "yes")]
    pub mollify: bool,
    pub seed: Option<u64>,
    #[serde(default)]
    pub newton: NewtonConfig,
    pub estimates: Option<EstimatesConfig>,
    pub filtration: Option<PhysicalConfig>,
}

fn default_p() -> f64 {
    2.0
}

fn zero_expr() -> String {
    "0".into()
}

fn yes() -> bool {
    true
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn grid(&self) -> Result<SpaceTimeGrid> {
        let d = &self.domain;
        if d.lower.len() != d.dim || d.upper.len() != d.dim {
            return Err(Error::Config("domain.lower/upper must have dim entries".into()));
        }
        let len0 = d.upper[0] - d.lower[0];
        if !(len0 > 0.0) || self.grid.cells < 2 {
            return Err(Error::Config("domain axis 0 is empty or has < 2 cells".into()));
        }
        let h = len0 / self.grid.cells as f64;
        let mut cells = Vec::with_capacity(d.dim);
        for s in 0..d.dim {
            let ratio = (d.upper[s] - d.lower[s]) / h;
            let c = ratio.round();
            if !(c >= 2.0) || (ratio - c).abs() > 1e-9 * c {
                return Err(Error::Config(format!(
                    "axis {s} length is not a whole number of cells of size {h}"
                )));
            }
            cells.push(c as usize);
        }
        let space = SpatialGrid::new(cells, h, d.lower.clone()).map_err(cfg)?;
        let span = self.grid.t_end - self.grid.t0;
        if !(span > 0.0) || self.grid.steps == 0 {
            return Err(Error::Config("grid.t_end must exceed t0 with steps >= 1".into()));
        }
        let tau = span / self.grid.steps as f64;
        let budget = self.grid.budget.unwrap_or(crate::grid::DEFAULT_BUDGET);
        SpaceTimeGrid::with_budget(space, tau, self.grid.t0, self.grid.steps, budget).map_err(cfg)
    }

    /// Builds the scenario; relative data-file paths resolve against `base`.
    pub fn scenario(&self, base: &Path) -> Result<Scenario> {
        let grid = self.grid()?;
        let params = FluxParams::new(self.p, self.nu, 0.0).map_err(cfg)?;
        let f = datum(&self.f, self.f_file.as_deref(), base, &grid)?;
        let g = datum(&self.g, self.g_file.as_deref(), base, &grid)?;
        let mut metadata = BTreeMap::new();
        if let Some(name) = &self.name {
            metadata.insert("name".into(), name.clone());
        }
        let s = Scenario {
            grid,
            params,
            f,
            g,
            epsilon_schedule: self.epsilon_schedule.clone(),
            newton: self.newton,
            mollify: self.mollify,
            metadata,
        };
        s.validate()?;
        Ok(s)
    }
}

fn cfg(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

fn datum(src: &str, file: Option<&Path>, base: &Path, grid: &SpaceTimeGrid) -> Result<Datum> {
    match file {
        Some(path) => {
            let path = if path.is_absolute() { path.to_path_buf() } else { base.join(path) };
            let field = crate::io::load_binary(&path).map_err(cfg)?;
            if field.grid() != grid {
                return Err(Error::Config(format!(
                    "{} was dumped on a different grid",
                    path.display()
                )));
            }
            Ok(Datum::Table(field))
        }
        None => Datum::expr(src).map_err(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
name = "affine"
p = 3.0
nu = 0.5
epsilon_schedule = [1e-2, 1e-4]
f = "0"
g = "2 * x1"

[domain]
lower = [0.0, 0.0]
upper = [1.0, 0.5]

[grid]
cells = 16
steps = 10
t_end = 0.1

[newton]
abs_tol = 1e-10
"#;

    #[test]
    fn parses_sample() {
        let c = Config::from_toml(SAMPLE).unwrap();
        let s = c.scenario(Path::new(".")).unwrap();
        assert_eq!(s.grid.space().cells(), &[16, 8]);
        assert!((s.grid.tau() - 0.01).abs() < 1e-15);
        assert_eq!(s.params.p, 3.0);
        assert_eq!(s.newton.abs_tol, 1e-10);
        assert_eq!(s.newton.max_iter, NewtonConfig::default().max_iter);
        assert_eq!(s.g.describe(), "2 * x1");
        // the echo parses back to the same configuration
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_increasing_schedule() {
        let text = SAMPLE.replace("[1e-2, 1e-4]", "[1e-4, 1e-2]");
        let c = Config::from_toml(&text).unwrap();
        let err = c.scenario(Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("strictly decreasing"));
        assert!(validate_schedule(&[0.5, 0.5]).is_err());
        assert!(validate_schedule(&[1.5]).is_err());
        assert!(validate_schedule(&[]).is_err());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(Config::from_toml(&format!("{SAMPLE}\nbogus = 1\n")).is_err());
        let c = Config::from_toml(&SAMPLE.replace("p = 3.0", "p = 1.5")).unwrap();
        assert!(matches!(c.scenario(Path::new(".")), Err(Error::Config(_))));
        let c = Config::from_toml(&SAMPLE.replace("\"2 * x1\"", "\"2 * \"")).unwrap();
        assert!(matches!(c.scenario(Path::new(".")), Err(Error::Config(_))));
        let c = Config::from_toml(&SAMPLE.replace("upper = [1.0, 0.5]", "upper = [1.0, 0.51]")).unwrap();
        assert!(c.scenario(Path::new(".")).is_err());
    }
}
