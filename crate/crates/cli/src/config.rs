use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use wavecert::certificates::{DecisionVars, ProblemParams};
use wavecert::pde::{Grid, Mode, Nonlinearity, WaveField, DEFAULT_POINTS_1D, DEFAULT_POINTS_2D};
use wavecert::search::{GridSpec, SearchConfig};

/// One JSON document per run. Sections not needed by the subcommand may be omitted.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub mode: Option<String>,
    #[serde(default)]
    pub problem: Option<ProblemSpec>,
    #[serde(default)]
    pub problems: Option<Vec<ProblemSpec>>,
    #[serde(default)]
    pub search: Option<SearchSpec>,
    #[serde(default)]
    pub sim: Option<SimSpec>,
    #[serde(default)]
    pub vars: Option<DecisionVars>,
    /// Recorded for reproducibility; no subcommand draws random numbers.
    #[serde(default)]
    #[allow(dead_code)]
    pub seed: Option<u64>,
}

/// Problem parameters; `delta` may be omitted to search over the δ grid.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub n: usize,
    pub k: f64,
    pub g1: f64,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub t_star: Option<f64>,
    #[serde(default)]
    pub t_total: Option<f64>,
    #[serde(default)]
    pub d: Option<f64>,
}

impl ProblemSpec {
    /// Parameters with δ set; a missing δ becomes a placeholder that the
    /// δ-grid search overwrites.
    pub fn params(&self) -> ProblemParams {
        ProblemParams {
            n: self.n,
            k: self.k,
            g1: self.g1,
            delta: self.delta.unwrap_or(1e-4),
            t_star: self.t_star,
            t_total: self.t_total,
            d: self.d,
        }
    }

    pub fn params_with_delta(&self) -> Result<ProblemParams> {
        if self.delta.is_none() {
            bail!("problem.delta is required for this subcommand");
        }
        Ok(self.params())
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpec {
    pub chi_grid: Option<GridSpec>,
    pub lambda_bisection_tol: Option<f64>,
    pub tstar_tol: Option<f64>,
    pub delta_grid: Option<GridSpec>,
    pub refinement_rounds: Option<usize>,
    pub margin: Option<f64>,
    pub tstar_max: Option<f64>,
}

impl SearchSpec {
    /// An explicit `delta_grid` wins; otherwise a problem that states its
    /// own δ is searched at that δ only.
    pub fn resolve(&self, problem: &ProblemSpec) -> SearchConfig {
        let mut c = SearchConfig::default();
        if let Some(v) = self.chi_grid {
            c.chi_grid = v;
        }
        if let Some(v) = self.lambda_bisection_tol {
            c.lambda_bisection_tol = v;
        }
        if let Some(v) = self.tstar_tol {
            c.tstar_tol = v;
        }
        if let Some(v) = self.refinement_rounds {
            c.refinement_rounds = v;
        }
        if let Some(v) = self.margin {
            c.margin = v;
        }
        if let Some(v) = self.tstar_max {
            c.tstar_max = v;
        }
        c.delta_grid = match (self.delta_grid, problem.delta) {
            (Some(g), _) => Some(g),
            (None, Some(_)) => None,
            (None, None) => c.delta_grid,
        };
        c
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default)]
    pub points: Option<usize>,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub nonlinearity: NonlinearitySpec,
    #[serde(default)]
    pub initial: Option<InitialSpec>,
    /// χ used for the `V` column of trajectory output.
    #[serde(default)]
    pub chi: Option<f64>,
    #[serde(default)]
    pub threshold: Option<f64>,
    /// Optional path for a snapshot CSV of the final field.
    #[serde(default)]
    pub snapshot: Option<PathBuf>,
}

fn one() -> usize {
    1
}

impl SimSpec {
    pub fn points(&self) -> usize {
        self.points
            .unwrap_or(if self.dim == 2 { DEFAULT_POINTS_2D } else { DEFAULT_POINTS_1D })
    }

    pub fn grid(&self, horizon: f64, mode: Mode) -> Result<Grid> {
        Ok(match self.dt {
            Some(dt) => Grid::new(self.dim, self.points(), dt, mode)?,
            None => Grid::for_horizon(self.dim, self.points(), horizon, mode)?,
        })
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NonlinearitySpec {
    #[default]
    Zero,
    /// `f = g·z`.
    Linear { g: f64 },
    /// `f = c·z²` with slope bound `2|c|d` on `|z| ≤ d`.
    Quadratic {
        c: f64,
        #[serde(default = "unit")]
        d: f64,
    },
}

fn unit() -> f64 {
    1.0
}

impl NonlinearitySpec {
    pub fn build(&self) -> Nonlinearity {
        match *self {
            NonlinearitySpec::Zero => Nonlinearity::zero(),
            NonlinearitySpec::Linear { g } => Nonlinearity::linear(g),
            NonlinearitySpec::Quadratic { c, d } => Nonlinearity::quadratic(c, d),
        }
    }
}

/// Initial data. In 2-D the 1-D profile `p` gives `p(x₁)·p(x₂)`.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialSpec {
    Preset { name: String },
    /// Monomial coefficients `c₀ + c₁x + …`.
    Polynomial { z0: Vec<f64>, z1: Vec<f64> },
    /// Coefficients of `sin((j − ½)πx)`, `j = 1, 2, …`.
    FourierSine { z0: Vec<f64>, z1: Vec<f64> },
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * x + a)
}

fn sine_sum(c: &[f64], x: f64) -> f64 {
    c.iter()
        .enumerate()
        .map(|(j, a)| a * ((j as f64 + 0.5) * std::f64::consts::PI * x).sin())
        .sum()
}

pub const PRESET_AMPLITUDE: f64 = 0.2733;

impl InitialSpec {
    fn profiles(&self) -> Result<(Box<dyn Fn(f64) -> f64>, Box<dyn Fn(f64) -> f64>)> {
        Ok(match self {
            InitialSpec::Preset { name } => match name.as_str() {
                "paper-example2" => {
                    let p = |x: f64| PRESET_AMPLITUDE * x * (1.0 - x / 2.0);
                    (Box::new(p), Box::new(p))
                }
                other => bail!("unknown initial-condition preset {other:?} (known: \"paper-example2\")"),
            },
            InitialSpec::Polynomial { z0, z1 } => {
                let (a, b) = (z0.clone(), z1.clone());
                (Box::new(move |x| poly(&a, x)), Box::new(move |x| poly(&b, x)))
            }
            InitialSpec::FourierSine { z0, z1 } => {
                let (a, b) = (z0.clone(), z1.clone());
                (Box::new(move |x| sine_sum(&a, x)), Box::new(move |x| sine_sum(&b, x)))
            }
        })
    }

    pub fn field(&self, grid: &Grid) -> Result<WaveField> {
        let (p0, p1) = self.profiles()?;
        let field = WaveField::from_fn(
            grid,
            |x| x.iter().map(|&xi| p0(xi)).product(),
            |x| x.iter().map(|&xi| p1(xi)).product(),
        )?;
        Ok(field)
    }
}

pub fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    parse(&text).map_err(|e| anyhow::anyhow!("{}:{}", path.display(), e))
}

/// Parses a config; errors carry `line:column:` anchors.
pub fn parse(text: &str) -> std::result::Result<RunConfig, String> {
    serde_json::from_str(text).map_err(|e| {
        let msg = e.to_string();
        let msg = match msg.rfind(" at line ") {
            Some(i) => msg[..i].to_string(),
            None => msg,
        };
        format!("{}:{}: {}", e.line(), e.column(), msg)
    })
}

impl RunConfig {
    pub fn check_mode(&self, subcommand: &str) -> Result<()> {
        match &self.mode {
            Some(m) if m != subcommand => bail!("config mode {m:?} does not match subcommand {subcommand:?}"),
            _ => Ok(()),
        }
    }

    pub fn problem(&self) -> Result<&ProblemSpec> {
        self.problem.as_ref().context("config needs a \"problem\" section")
    }

    pub fn sim(&self) -> Result<&SimSpec> {
        self.sim.as_ref().context("config needs a \"sim\" section")
    }

    pub fn search_for(&self, problem: &ProblemSpec) -> SearchConfig {
        self.search.unwrap_or_default().resolve(problem)
    }
}
