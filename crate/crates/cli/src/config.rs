//! Run configuration: `[system]`, `[initial]`, `[solver]` and `[output]`.

use std::path::{Path, PathBuf};

use crossdiff_core::grid::{FieldState, Grid, GridError, Space};
use crossdiff_core::model::{build_system_spec, ModelError, RawSystem, SystemSpec};
use crossdiff_core::solver::{Mode, SolverConfig, SolverError};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use thiserror::Error;

use crate::expr::{self, Expr};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Syntax(String),
    #[error("{path}: {message}")]
    Field { path: String, message: String },
}

impl ConfigError {
    fn field(path: impl Into<String>, message: impl ToString) -> Self {
        ConfigError::Field {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Binary,
    Both,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub format: OutputFormat,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialSection {
    u: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSection {
    d: usize,
    #[serde(default)]
    domain_length: Option<f64>,
    #[serde(default)]
    k: Option<Vec<f64>>,
    #[serde(default)]
    a: Option<Vec<f64>>,
    #[serde(default, rename = "B")]
    b: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct Config {
    pub source: PathBuf,
    pub spec: SystemSpec,
    pub initial: Vec<String>,
    exprs: Vec<Expr>,
    pub grid_points: usize,
    pub mode: Mode,
    pub solver: SolverConfig,
    pub output: OutputSection,
}

pub const DEFAULT_GRID_POINTS: usize = 256;

fn section<T: DeserializeOwned>(value: toml::Value, name: &str) -> Result<T, ConfigError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." { name.to_string() } else { format!("{name}.{inner}") };
        ConfigError::field(path, e.into_inner())
    })
}

fn model_error_path(e: &ModelError) -> String {
    match e {
        ModelError::NonPositiveCoefficient { field, index, .. } => format!("system.{field}[{index}]"),
        ModelError::NonSymmetric { .. } | ModelError::NotPositiveSemidefinite { .. } | ModelError::ZeroRank => {
            "system.B".into()
        }
        ModelError::BadDimension(m) if m.contains("domain length") => "system.domain_length".into(),
        ModelError::BadDimension(m) if m.contains("dimension") => "system.d".into(),
        _ => "system".into(),
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, source: &Path) -> Result<Self, ConfigError> {
        let mut root: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        for key in root.keys() {
            if !matches!(key.as_str(), "system" | "initial" | "solver" | "output") {
                return Err(ConfigError::field(key.clone(), "unknown section"));
            }
        }
        let system = root
            .remove("system")
            .ok_or_else(|| ConfigError::field("system", "missing section"))?;
        let sys: SystemSection = section(system, "system")?;
        let raw = RawSystem {
            d: sys.d,
            domain_length: sys.domain_length,
            k: sys.k,
            a: sys.a,
            b: sys.b,
        };
        let spec = build_system_spec(&raw).map_err(|e| ConfigError::field(model_error_path(&e), &e))?;

        let initial = root
            .remove("initial")
            .ok_or_else(|| ConfigError::field("initial", "missing section"))?;
        let initial: InitialSection = section(initial, "initial")?;
        if initial.u.len() != spec.n {
            return Err(ConfigError::field(
                "initial.u",
                format!("expected {} expressions, found {}", spec.n, initial.u.len()),
            ));
        }
        let mut exprs = Vec::with_capacity(spec.n);
        for (i, s) in initial.u.iter().enumerate() {
            let e = expr::parse(s).map_err(|e| ConfigError::field(format!("initial.u[{i}]"), e))?;
            if spec.d == 1 && e.uses_y() {
                return Err(ConfigError::field(format!("initial.u[{i}]"), "y is not a coordinate when d = 1"));
            }
            exprs.push(e);
        }

        let mut solver_table = match root.remove("solver") {
            Some(toml::Value::Table(t)) => t,
            Some(_) => return Err(ConfigError::field("solver", "expected a table")),
            None => toml::Table::new(),
        };
        let grid_points = match solver_table.remove("grid_points") {
            Some(v) => section::<usize>(v, "solver.grid_points")?,
            None => DEFAULT_GRID_POINTS,
        };
        let mode = match solver_table.remove("mode") {
            Some(v) => section::<Mode>(v, "solver.mode")?,
            None => Mode::default(),
        };
        let solver: SolverConfig = section(toml::Value::Table(solver_table), "solver")?;
        solver
            .validate()
            .map_err(|e| ConfigError::field("solver", e))?;
        Grid::new(spec.d, grid_points, spec.domain_length)
            .map_err(|e| ConfigError::field("solver.grid_points", e))?;

        let output = match root.remove("output") {
            Some(v) => section(v, "output")?,
            None => OutputSection::default(),
        };

        Ok(Self {
            source: source.to_path_buf(),
            spec,
            initial: initial.u,
            exprs,
            grid_points,
            mode,
            solver,
            output,
        })
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.spec.d, self.grid_points, self.spec.domain_length).expect("grid validated at load")
    }

    /// Samples the initial densities on `grid`; any non-positive value is
    /// reported as positivity lost at `t = 0`.
    pub fn initial_field(&self, grid: Grid) -> Result<FieldState, SolverError> {
        let comps: Vec<Vec<f64>> = self
            .exprs
            .iter()
            .map(|e| grid.sample(|x| e.eval(x[0], x.get(1).copied().unwrap_or(0.0))))
            .collect();
        FieldState::new(grid, comps, Space::U, 0.0).map_err(|e| match e {
            GridError::NotPositive { comp, point, value } => SolverError::PositivityLost {
                time: 0.0,
                comp,
                point,
                value,
            },
            other => SolverError::Grid(other),
        })
    }

    /// Report directory: `--out`, then `[output] dir`, then `<config stem>_report`.
    pub fn out_dir(&self, cli: Option<&Path>) -> PathBuf {
        if let Some(p) = cli {
            return p.to_path_buf();
        }
        if let Some(p) = &self.output.dir {
            return p.clone();
        }
        let stem = self.source.file_stem().and_then(|s| s.to_str()).unwrap_or("crossdiff");
        PathBuf::from(format!("{stem}_report"))
    }
}
